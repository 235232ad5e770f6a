#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = graphmc::io::parse_trace_binary(data) {
        let headers = table.headers.as_ref().expect("binary traces carry headers");
        assert_eq!(headers.len(), table.ncols);
        for row in &table.rows {
            assert_eq!(row.len(), table.ncols);
        }
    }
});
