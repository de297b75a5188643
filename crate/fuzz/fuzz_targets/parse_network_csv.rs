#![no_main]

use libfuzzer_sys::fuzz_target;
use minergraph::export;

// Input is nodes.csv, a NUL byte, then edges.csv.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let (nodes, edges) = (&data[..split], data.get(split + 1..).unwrap_or(&[]));
    if let Ok((net, stats)) = export::parse_network_csv(nodes, edges) {
        assert_eq!(net.node_count(), stats.entries().len());
    }
});
