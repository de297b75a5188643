#![no_main]

use libfuzzer_sys::fuzz_target;
use minergraph::ingest;

fuzz_target!(|data: &[u8]| {
    if let Ok(parsed) = ingest::parse_blocks(data) {
        let records = parsed.value.records();
        assert!(records.windows(2).all(|w| w[0].block_number < w[1].block_number));
    }
});
