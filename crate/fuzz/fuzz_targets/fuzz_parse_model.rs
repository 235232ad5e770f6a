#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        // Must never panic; errors are fine. A successful parse must
        // pretty-print to something that parses back.
        if let Ok(model) = graphmc::modelang::parse_model(text) {
            let printed = model.to_string();
            graphmc::modelang::parse_model(&printed)
                .expect("pretty-printed model must re-parse");
        }
    }
});
