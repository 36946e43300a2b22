//! Shared setup for the sampler benchmarks: a synthetic dataset and an
//! initialized sampler state at the benchmark scale.

use adass_core::chain::init_state;
use adass_core::prior::ModelConfig;
use adass_core::sampler::FactorState;
use adass_core::synth::{gen_uniform_band, sample_data};
use adass_core::RngHandle;
use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha;

/// Benchmark scale: n = 100 observations, p = 1000 variables, q = 10
/// factor columns.
pub const BENCH_N: usize = 100;
pub const BENCH_P: usize = 1000;
pub const BENCH_Q: usize = 10;

/// Builds (data, config, initialized state, rng) at the benchmark scale.
pub fn bench_setup(seed: u64) -> (Array2<f64>, ModelConfig, FactorState, ChaCha8Rng) {
    let mut rng = RngHandle::new(seed, 0).rng();
    let truth = gen_uniform_band(BENCH_P, 50, 5, &mut rng).expect("valid dimensions");
    let data = sample_data(&truth, BENCH_N, &mut rng).expect("valid dimensions");
    let (mut cfg, _) = ModelConfig::with_defaults(BENCH_N, BENCH_P).expect("valid dimensions");
    cfg.q = BENCH_Q;
    let mut init_rng = RngHandle::new(seed, 1).rng();
    let state = init_state(data.view(), &cfg, &mut init_rng).expect("initialization succeeds");
    let chain_rng = RngHandle::new(seed, 2).rng();
    (data, cfg, state, chain_rng)
}
