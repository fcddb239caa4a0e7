//! Seeding conventions.
//!
//! Every stochastic routine takes an explicit `u64` seed and derives a
//! ChaCha12 generator from it. Independent sub-generators come from the
//! stream mechanism, so batches can be sampled in parallel without
//! coordination and results never depend on scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Master generator for a seed.
pub fn master(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Independent sub-generator `stream` of a seed.
pub fn substream(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut r = ChaCha12Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Map a (possibly negative) lattice site to a distinct stream index.
pub fn site_stream(site: i64) -> u64 {
    // Zig-zag encoding keeps distinct sites on distinct streams.
    ((site << 1) ^ (site >> 63)) as u64
}

/// Well-mixed per-item seed for batch work (splitmix64 step).
pub fn batch_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
