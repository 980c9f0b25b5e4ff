//! Shared fixtures for the criterion benchmarks.

use lsm_core::{Matrix, ReservoirConfig};

/// Benchmark-default reservoir resized to `n_neurons` with fan-in `fan_in`.
pub fn sized_config(n_neurons: usize, fan_in: usize, seed: u64) -> ReservoirConfig {
    ReservoirConfig {
        n_neurons,
        fan_in,
        synaptic_scale: 0.6 / (fan_in as f64).sqrt(),
        ..ReservoirConfig::benchmark_default(seed)
    }
}

/// Deterministic pseudo-random matrix with entries in `[0, 1)`.
pub fn noise(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut s = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    let data = (0..rows * cols)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sizes agree")
}
