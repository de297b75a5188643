//! Reconstructs the network of on-chain transfers between block miners and
//! measures its concentration, component structure and controllability.
//!
//! The pipeline runs bottom-up:
//!
//! * [`ingest`] parses block, transaction and price CSVs and keeps only the
//!   transfers between two miners, priced in USD.
//! * [`netbuild`] cuts the chain into cumulative slices and aggregates each
//!   slice into a [`MinerNetwork`].
//! * [`concentration`], [`topology`] and [`control`] compute the metrics.
//! * [`pipeline`] ties them together and writes the report files.
//! * [`synth`] generates seeded chains with known ground truth for testing.

pub mod address;
pub mod concentration;
pub mod control;
pub mod export;
pub mod ingest;
pub mod netbuild;
pub mod pipeline;
pub mod seeds;
pub mod sum;
pub mod synth;
pub mod topology;

pub use address::Address;
pub use netbuild::{MinerNetwork, MinerStats, SliceIndex};
pub use pipeline::{AnalysisConfig, Report, SliceSelection};
