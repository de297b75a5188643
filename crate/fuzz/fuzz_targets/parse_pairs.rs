#![no_main]

use libfuzzer_sys::fuzz_target;
use minergraph::export;

fuzz_target!(|data: &[u8]| {
    let _ = export::parse_pairs(data);
});
