#![allow(dead_code)]

use lsm_core::{generate_reservoir, Matrix, NeuronParams, Reservoir, ReservoirConfig, ReservoirState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random reservoir config of `n` neurons, drawn from `seed`.
pub fn random_config(n: usize, seed: u64) -> ReservoirConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(1..=4);
    ReservoirConfig {
        n_neurons: n,
        n_inputs: m,
        n_outputs: rng.random_range(1..=3),
        fan_in: rng.random_range(1..n),
        input_fan_in: rng.random_range(0..=m),
        inhibitory_fraction: rng.random_range(0.0..=0.5),
        synaptic_scale: rng.random_range(0.05..1.5),
        input_scale: rng.random_range(0.1..2.0),
        neuron: NeuronParams {
            threshold: rng.random_range(0.5..2.0),
            leak: rng.random_range(0.05..=1.0),
            refractory_steps: rng.random_range(0..3),
        },
        seed,
    }
}

/// Random (reservoir, state, input) triple with a state that satisfies the
/// post-step invariants.
pub fn random_triple(n: usize, seed: u64) -> (Reservoir, ReservoirState, Vec<f64>) {
    let config = random_config(n, seed);
    let res = generate_reservoir(&config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let theta = config.neuron.threshold;
    let mut state = res.zero_state();
    for i in 0..n {
        state.spikes[i] = rng.random_bool(0.3);
        state.potentials[i] = if state.spikes[i] { 0.0 } else { rng.random_range(-theta..theta) };
        state.refractory[i] = if state.spikes[i] { config.neuron.refractory_steps } else { 0 };
    }
    let x = (0..config.n_inputs).map(|_| rng.random_range(-2.0..2.0)).collect();
    (res, state, x)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect())
        .unwrap()
}
