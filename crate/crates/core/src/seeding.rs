//! Seed derivation for reproducible Monte Carlo runs.
//!
//! A run's seed is `splitmix64(master ^ splitmix64(run))`. Each sensor in a
//! run draws from its own ChaCha stream (`stream = sensor index`), so draws
//! never depend on how many runs exist or which worker executes them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SensorRng = ChaCha8Rng;

/// The SplitMix64 finaliser.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn run_seed(master: u64, run: u64) -> u64 {
    splitmix64(master ^ splitmix64(run))
}

pub fn sensor_rng(run_seed: u64, sensor: usize) -> SensorRng {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(sensor as u64);
    rng
}

pub fn sensor_rngs(run_seed: u64, n: usize) -> Vec<SensorRng> {
    (0..n).map(|i| sensor_rng(run_seed, i)).collect()
}
