//! Seed splitting.
//!
//! Every random choice in the crate derives from one root seed. The root
//! seeds a ChaCha8 generator and each consumer reads its own ChaCha stream:
//!
//! | consumer                      | stream id            |
//! |-------------------------------|----------------------|
//! | synthetic chain generator     | `1`                  |
//! | dominating-set restart `r`    | `(2 << 32) \| r`     |
//! | threshold-set restart `r`     | `(3 << 32) \| r`     |
//!
//! Streams never overlap, so adding restarts does not perturb earlier ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Synth,
    Domination(u64),
    Threshold(u64),
}

impl Stream {
    pub fn id(self) -> u64 {
        match self {
            Stream::Synth => 1,
            Stream::Domination(r) => (2 << 32) | (r & 0xffff_ffff),
            Stream::Threshold(r) => (3 << 32) | (r & 0xffff_ffff),
        }
    }
}

pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
