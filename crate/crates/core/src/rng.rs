//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator
//! (`rand_chacha::ChaCha8Rng`) created by `seed_from_u64(seed)` and then moved
//! to a fixed stream with `set_stream(stream)`. Normal deviates use
//! `rand_distr::StandardNormal`. Streams are assigned per purpose so that, for
//! example, changing the minibatch sampler never perturbs the projection
//! matrix or network initialisation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub mod streams {
    /// Random-projection streams are `PROJECTION_BASE + method id`.
    pub const PROJECTION_BASE: u64 = 0x100;
    pub const AUDIT_PAIRS: u64 = 0x200;
    pub const POINT_CLOUD: u64 = 0x201;
    pub const BENCH_INPUT: u64 = 0x202;
    pub const NETWORK_INIT: u64 = 0x300;
    pub const FC_SWITCH_INIT: u64 = 0x301;
    pub const ACTIONS: u64 = 0x302;
    pub const REPLAY: u64 = 0x303;
    pub const EVALUATION: u64 = 0x304;
}

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
