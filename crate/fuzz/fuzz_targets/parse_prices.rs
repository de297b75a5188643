#![no_main]

use libfuzzer_sys::fuzz_target;
use minergraph::ingest;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = ingest::parse_prices(data) {
        assert!(table.points().iter().all(|p| p.usd_per_eth.is_finite() && p.usd_per_eth > 0.0));
    }
});
