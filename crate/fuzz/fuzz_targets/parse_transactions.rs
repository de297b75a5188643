#![no_main]

use libfuzzer_sys::fuzz_target;
use minergraph::ingest;

fuzz_target!(|data: &[u8]| {
    // The streaming reader and the collecting wrapper must agree.
    let collected = ingest::parse_transactions(data);
    if let Ok(reader) = ingest::TxReader::new(data) {
        let streamed: Result<Vec<_>, _> = reader.collect();
        assert_eq!(streamed.is_ok(), collected.is_ok());
    }
});
