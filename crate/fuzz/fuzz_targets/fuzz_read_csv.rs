#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(table) = graphmc::io::parse_csv(text) {
            // every row must match the declared width
            for row in &table.rows {
                assert_eq!(row.len(), table.ncols);
            }
        }
    }
});
