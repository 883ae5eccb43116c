//! Seed derivation.
//!
//! A single master seed expands into independent ChaCha8 streams. The stream
//! id is `(component << 32) | index`, where `component` is one of the
//! constants below and `index` distinguishes trials, levels or workers. The
//! generator for a stream is `ChaCha8Rng::seed_from_u64(master)` with
//! `set_stream(id)`, so every stream is a pure function of `(master, id)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type OramRng = ChaCha8Rng;

pub const STREAM_ORAM: u64 = 1;
pub const STREAM_SUPERMARKET: u64 = 2;
pub const STREAM_MARKOV: u64 = 3;
pub const STREAM_WORKLOAD: u64 = 4;
pub const STREAM_COUPLING: u64 = 5;

pub fn stream(master: u64, component: u64, index: u64) -> OramRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((component << 32) | (index & 0xffff_ffff));
    rng
}

/// Derives a child master seed, used when a sub-run takes a plain `u64` seed.
pub fn child_seed(master: u64, component: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream(master, component, index).next_u64()
}
