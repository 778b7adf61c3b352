//! Seed-keyed random streams.
//!
//! Every replication owns one stream derived from `(base_seed, point, replication)`,
//! so results never depend on how replications are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator consumed by the engine and the path samplers.
pub type RandomStream = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sweep-point index.
pub fn point_seed(base_seed: u64, point: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(point.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Independent stream for replication `rep` of sweep point `point`.
pub fn stream(base_seed: u64, point: u64, rep: u64) -> RandomStream {
    let mut rng = ChaCha8Rng::seed_from_u64(point_seed(base_seed, point));
    rng.set_stream(rep);
    rng
}

/// Stream for replication `rep` of a single (non-swept) experiment.
pub fn replication_stream(base_seed: u64, rep: u64) -> RandomStream {
    stream(base_seed, 0, rep)
}
