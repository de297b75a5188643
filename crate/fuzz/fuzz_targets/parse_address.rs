#![no_main]

use libfuzzer_sys::fuzz_target;
use minergraph::Address;

fuzz_target!(|data: &[u8]| {
    if let Ok(a) = Address::parse_bytes(data) {
        assert_eq!(Address::parse(&a.to_string()).unwrap(), a);
    }
});
