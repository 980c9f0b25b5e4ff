//! Reservoir generation and spiking dynamics.
//!
//! Neurons are discrete-time leaky integrate-and-fire units with reset to
//! zero. Updates are synchronous: spikes emitted at step `t` drive the
//! network at step `t + 1`. Recurrent weights are a binary mask plus a
//! per-neuron sign, so the recurrent drive of a neuron is an integer count
//! of spiking excitatory minus spiking inhibitory presynaptic neurons,
//! scaled once by the synaptic gain.

use std::cell::Cell;

use rand::distr::{Distribution, Uniform};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LsmError, Result};
use crate::matrix::Matrix;
use crate::readout::{record_features, FeatureMode, StateTrace};
use crate::sparse::{SparseBinaryMatrix, SparseRealMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronParams {
    /// Firing threshold; a neuron spikes when its candidate potential is `>= threshold`.
    pub threshold: f64,
    /// Per-step retention of the membrane potential, in `(0, 1]`.
    pub leak: f64,
    /// Steps a neuron stays silent (and clamped at zero) after a spike.
    #[serde(default)]
    pub refractory_steps: u32,
}

impl NeuronParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(LsmError::config("neuron.threshold", "must be finite and > 0"));
        }
        if !(self.leak > 0.0 && self.leak <= 1.0) {
            return Err(LsmError::config("neuron.leak", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

impl Default for NeuronParams {
    fn default() -> Self {
        NeuronParams {
            threshold: 1.0,
            leak: 0.9,
            refractory_steps: 0,
        }
    }
}

/// Every fixed parameter needed to generate a reservoir.
///
/// Field order here is the serialized key order in config and model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirConfig {
    pub n_neurons: usize,
    pub n_inputs: usize,
    pub n_outputs: usize,
    /// Recurrent in-degree of every neuron.
    pub fan_in: usize,
    /// Input in-degree of every neuron.
    pub input_fan_in: usize,
    pub inhibitory_fraction: f64,
    /// Potential increment contributed by one presynaptic spike.
    pub synaptic_scale: f64,
    /// Input weights are drawn uniformly from `[-input_scale, input_scale]`.
    pub input_scale: f64,
    pub neuron: NeuronParams,
    pub seed: u64,
}

impl ReservoirConfig {
    /// Benchmark operating point for single-input, single-output temporal
    /// tasks: N = 200, K = 10, 20% inhibitory, g = 1/√K, g_in = 2, θ = 1,
    /// α = 0.2. Pair with [`crate::tasks::ReadoutSettings::default`].
    pub fn benchmark_default(seed: u64) -> Self {
        ReservoirConfig {
            n_neurons: 200,
            n_inputs: 1,
            n_outputs: 1,
            fan_in: 10,
            input_fan_in: 1,
            inhibitory_fraction: 0.2,
            synaptic_scale: 1.0 / (10f64).sqrt(),
            input_scale: 2.0,
            neuron: NeuronParams {
                threshold: 1.0,
                leak: 0.2,
                refractory_steps: 0,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_neurons == 0 {
            return Err(LsmError::config("n_neurons", "must be > 0"));
        }
        if self.n_neurons > u32::MAX as usize {
            return Err(LsmError::config("n_neurons", "exceeds the 32-bit index range"));
        }
        if self.n_inputs == 0 {
            return Err(LsmError::config("n_inputs", "must be > 0"));
        }
        if self.n_inputs > u32::MAX as usize {
            return Err(LsmError::config("n_inputs", "exceeds the 32-bit index range"));
        }
        if self.n_outputs == 0 {
            return Err(LsmError::config("n_outputs", "must be > 0"));
        }
        if self.fan_in == 0 || self.fan_in >= self.n_neurons {
            return Err(LsmError::config(
                "fan_in",
                format!(
                    "must satisfy 0 < fan_in < n_neurons ({} given, n_neurons = {})",
                    self.fan_in, self.n_neurons
                ),
            ));
        }
        if self.input_fan_in > self.n_inputs {
            return Err(LsmError::config(
                "input_fan_in",
                format!(
                    "must not exceed n_inputs ({} given, n_inputs = {})",
                    self.input_fan_in, self.n_inputs
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.inhibitory_fraction) {
            return Err(LsmError::config("inhibitory_fraction", "must lie in [0, 1]"));
        }
        if !(self.synaptic_scale.is_finite() && self.synaptic_scale > 0.0) {
            return Err(LsmError::config("synaptic_scale", "must be finite and > 0"));
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return Err(LsmError::config("input_scale", "must be finite and > 0"));
        }
        self.neuron.validate()
    }

    pub fn n_inhibitory(&self) -> usize {
        (self.inhibitory_fraction * self.n_neurons as f64).round() as usize
    }
}

/// A generated, immutable reservoir.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    config: ReservoirConfig,
    w_rec: SparseBinaryMatrix,
    w_in: SparseRealMatrix,
    sign: Vec<i8>,
}

/// Generates the reservoir described by `config`.
///
/// Random draws come from a ChaCha8 stream seeded with `config.seed`, in
/// this order: inhibitory neuron selection, then for each neuron its
/// recurrent sources, then for each neuron its input sources followed by
/// their weights.
pub fn generate_reservoir(config: &ReservoirConfig) -> Result<Reservoir> {
    config.validate()?;
    let n = config.n_neurons;
    let m = config.n_inputs;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut sign = vec![1i8; n];
    for i in index::sample(&mut rng, n, config.n_inhibitory()) {
        sign[i] = -1;
    }

    let k = config.fan_in;
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(n * k);
    row_offsets.push(0);
    for i in 0..n {
        // Sample from the n - 1 other neurons, then skip over i.
        let mut row: Vec<u32> = index::sample(&mut rng, n - 1, k)
            .into_iter()
            .map(|j| if j >= i { j + 1 } else { j } as u32)
            .collect();
        row.sort_unstable();
        col_indices.extend_from_slice(&row);
        row_offsets.push(col_indices.len());
    }
    let w_rec = SparseBinaryMatrix::new(n, n, row_offsets, col_indices)?;

    let k_in = config.input_fan_in;
    let weight = Uniform::new_inclusive(-config.input_scale, config.input_scale)
        .map_err(|e| LsmError::config("input_scale", e.to_string()))?;
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(n * k_in);
    let mut values = Vec::with_capacity(n * k_in);
    row_offsets.push(0);
    for _ in 0..n {
        let mut row: Vec<u32> = index::sample(&mut rng, m, k_in)
            .into_iter()
            .map(|j| j as u32)
            .collect();
        row.sort_unstable();
        for _ in &row {
            let w = loop {
                let w = weight.sample(&mut rng);
                if w != 0.0 {
                    break w;
                }
            };
            values.push(w);
        }
        col_indices.extend_from_slice(&row);
        row_offsets.push(col_indices.len());
    }
    let w_in = SparseRealMatrix::new(n, m, row_offsets, col_indices, values)?;

    Ok(Reservoir {
        config: config.clone(),
        w_rec,
        w_in,
        sign,
    })
}

impl Reservoir {
    /// Assembles a reservoir from stored parts, checking every structural
    /// invariant. Used when loading models.
    pub fn from_parts(
        config: ReservoirConfig,
        w_rec: SparseBinaryMatrix,
        w_in: SparseRealMatrix,
        sign: Vec<i8>,
    ) -> Result<Self> {
        config.validate()?;
        let n = config.n_neurons;
        let dim = |what: String| Err(LsmError::Dimension(what));
        if w_rec.n_rows() != n || w_rec.n_cols() != n {
            return dim(format!(
                "w_rec is {}x{}, expected {n}x{n}",
                w_rec.n_rows(),
                w_rec.n_cols()
            ));
        }
        if w_in.n_rows() != n || w_in.n_cols() != config.n_inputs {
            return dim(format!(
                "w_in is {}x{}, expected {n}x{}",
                w_in.n_rows(),
                w_in.n_cols(),
                config.n_inputs
            ));
        }
        for i in 0..n {
            let row = w_rec.row(i);
            if row.len() != config.fan_in {
                return dim(format!("w_rec row {i} has {} entries", row.len()));
            }
            if row.contains(&(i as u32)) {
                return dim(format!("w_rec row {i} has a self-connection"));
            }
            if w_in.row(i).0.len() != config.input_fan_in {
                return dim(format!("w_in row {i} has {} entries", w_in.row(i).0.len()));
            }
        }
        if sign.len() != n || sign.iter().any(|&s| s != 1 && s != -1) {
            return dim("sign must hold n_neurons entries of +1 or -1".into());
        }
        let inhibitory = sign.iter().filter(|&&s| s < 0).count();
        if inhibitory != config.n_inhibitory() {
            return dim(format!(
                "{inhibitory} inhibitory neurons, expected {}",
                config.n_inhibitory()
            ));
        }
        Ok(Reservoir {
            config,
            w_rec,
            w_in,
            sign,
        })
    }

    pub fn config(&self) -> &ReservoirConfig {
        &self.config
    }

    pub fn n_neurons(&self) -> usize {
        self.config.n_neurons
    }

    pub fn n_inputs(&self) -> usize {
        self.config.n_inputs
    }

    pub fn recurrent(&self) -> &SparseBinaryMatrix {
        &self.w_rec
    }

    pub fn input(&self) -> &SparseRealMatrix {
        &self.w_in
    }

    pub fn sign(&self) -> &[i8] {
        &self.sign
    }

    pub fn zero_state(&self) -> ReservoirState {
        ReservoirState::zeros(self.n_neurons())
    }

    /// Advances `state` by one step in place. On error `state` is unchanged.
    pub fn step(&self, state: &mut ReservoirState, x: &[f64]) -> Result<()> {
        self.check_step_shapes(state, x)?;
        let n = self.n_neurons();

        // Signed spike vector: +1 / -1 for spiking excitatory / inhibitory
        // neurons, 0 otherwise. Selected, never multiplied.
        let signed: Vec<i32> = state
            .spikes
            .iter()
            .zip(&self.sign)
            .map(|(&s, &sg)| if s { sg as i32 } else { 0 })
            .collect();
        let mut counts = vec![0i32; n];
        self.w_rec.gather_sum(&signed, &mut counts);

        let g = self.config.synaptic_scale;
        let drive: Vec<f64> = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| g * c as f64 + self.w_in.row_dot(i, x))
            .collect();
        if drive.iter().any(|d| !d.is_finite()) {
            return Err(LsmError::NonFinite("neuron drive"));
        }

        apply_drive(&self.config.neuron, state, &drive);
        STEPS.with(|c| c.set(c.get() + 1));
        Ok(())
    }

    fn check_step_shapes(&self, state: &ReservoirState, x: &[f64]) -> Result<()> {
        if x.len() != self.n_inputs() {
            return Err(LsmError::shape(
                "reservoir input",
                format!("{} inputs", self.n_inputs()),
                format!("{} inputs", x.len()),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LsmError::NonFinite("reservoir input"));
        }
        state.check_len(self.n_neurons())
    }
}

/// Mutable per-session neuron state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirState {
    pub potentials: Vec<f64>,
    pub spikes: Vec<bool>,
    pub refractory: Vec<u32>,
    pub step_index: u64,
}

impl ReservoirState {
    pub fn zeros(n: usize) -> Self {
        ReservoirState {
            potentials: vec![0.0; n],
            spikes: vec![false; n],
            refractory: vec![0; n],
            step_index: 0,
        }
    }

    pub fn n_neurons(&self) -> usize {
        self.potentials.len()
    }

    pub fn spike_count(&self) -> usize {
        self.spikes.iter().filter(|&&s| s).count()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        let lens = [self.potentials.len(), self.spikes.len(), self.refractory.len()];
        if lens.iter().any(|&l| l != n) {
            return Err(LsmError::shape(
                "reservoir state",
                format!("{n} neurons"),
                format!("{lens:?} (potentials, spikes, refractory)"),
            ));
        }
        Ok(())
    }
}

/// Result of a single neuron update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronUpdate {
    pub potential: f64,
    pub spike: bool,
    pub refractory: u32,
}

pub fn neuron_update(
    params: &NeuronParams,
    potential: f64,
    drive: f64,
    refractory: u32,
) -> Result<NeuronUpdate> {
    if !drive.is_finite() {
        return Err(LsmError::NonFinite("neuron drive"));
    }
    Ok(update_unchecked(params, potential, drive, refractory))
}

#[inline]
fn update_unchecked(params: &NeuronParams, v: f64, drive: f64, refractory: u32) -> NeuronUpdate {
    if refractory > 0 {
        return NeuronUpdate {
            potential: 0.0,
            spike: false,
            refractory: refractory - 1,
        };
    }
    let candidate = params.leak * v + drive;
    if candidate >= params.threshold {
        NeuronUpdate {
            potential: 0.0,
            spike: true,
            refractory: params.refractory_steps,
        }
    } else {
        NeuronUpdate {
            potential: candidate,
            spike: false,
            refractory: 0,
        }
    }
}

fn apply_drive(params: &NeuronParams, state: &mut ReservoirState, drive: &[f64]) {
    for (i, &d) in drive.iter().enumerate() {
        let u = update_unchecked(params, state.potentials[i], d, state.refractory[i]);
        state.potentials[i] = u.potential;
        state.spikes[i] = u.spike;
        state.refractory[i] = u.refractory;
    }
    state.step_index += 1;
}

/// One synchronous reservoir step, returning the successor state.
pub fn reservoir_step(res: &Reservoir, state: &ReservoirState, x: &[f64]) -> Result<ReservoirState> {
    let mut next = state.clone();
    res.step(&mut next, x)?;
    Ok(next)
}

/// Runs every row of `xs` through the reservoir, recording one feature row
/// per step. `state` and `trace_state` are advanced in place, so chained
/// calls over consecutive chunks equal one call over their concatenation.
pub fn run_sequence(
    res: &Reservoir,
    state: &mut ReservoirState,
    trace_state: &mut [f64],
    xs: &Matrix,
    mode: &FeatureMode,
) -> Result<StateTrace> {
    if xs.rows() == 0 {
        return Err(LsmError::Empty("input sequence has no steps"));
    }
    if xs.cols() != res.n_inputs() {
        return Err(LsmError::shape(
            "input sequence",
            format!("{} columns", res.n_inputs()),
            format!("{} columns", xs.cols()),
        ));
    }
    if trace_state.len() != res.n_neurons() {
        return Err(LsmError::shape(
            "spike trace state",
            res.n_neurons(),
            trace_state.len(),
        ));
    }
    let mut rows = Matrix::zeros(0, mode.width(res.n_neurons()));
    let mut row = Vec::new();
    for x in xs.iter_rows() {
        res.step(state, x)?;
        record_features(state, trace_state, mode, &mut row);
        rows.push_row(&row)?;
    }
    Ok(StateTrace::new(rows))
}

thread_local! {
    static STEPS: Cell<u64> = const { Cell::new(0) };
}

/// Number of sparse reservoir steps executed on the calling thread since it
/// started. Lets callers verify that a code path performs no inference.
pub fn steps_executed() -> u64 {
    STEPS.with(Cell::get)
}

/// Dense expansion of a reservoir using explicit floating-point
/// multiply-accumulate. Serves as the reference the sparse kernel is checked
/// against, and as the baseline in throughput comparisons.
#[derive(Debug, Clone)]
pub struct DenseReservoir {
    n: usize,
    m: usize,
    w_rec: Vec<f64>,
    w_in: Vec<f64>,
    sign: Vec<f64>,
    synaptic_scale: f64,
    neuron: NeuronParams,
}

impl DenseReservoir {
    pub fn new(res: &Reservoir) -> Self {
        DenseReservoir {
            n: res.n_neurons(),
            m: res.n_inputs(),
            w_rec: res.w_rec.to_dense(),
            w_in: res.w_in.to_dense(),
            sign: res.sign.iter().map(|&s| s as f64).collect(),
            synaptic_scale: res.config.synaptic_scale,
            neuron: res.config.neuron,
        }
    }

    /// Row-major `n x n` recurrent weights (0/1).
    pub fn recurrent(&self) -> &[f64] {
        &self.w_rec
    }

    pub fn step(&self, state: &mut ReservoirState, x: &[f64]) -> Result<()> {
        if x.len() != self.m {
            return Err(LsmError::shape("reservoir input", self.m, x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LsmError::NonFinite("reservoir input"));
        }
        state.check_len(self.n)?;
        let presyn: Vec<f64> = state
            .spikes
            .iter()
            .zip(&self.sign)
            .map(|(&s, &sg)| sg * if s { 1.0 } else { 0.0 })
            .collect();
        let mut drive = vec![0.0; self.n];
        for (i, d) in drive.iter_mut().enumerate() {
            let w = &self.w_rec[i * self.n..(i + 1) * self.n];
            let mut rec = 0.0;
            for (wij, pj) in w.iter().zip(&presyn) {
                rec += wij * pj;
            }
            let w = &self.w_in[i * self.m..(i + 1) * self.m];
            let mut inp = 0.0;
            for (wij, xj) in w.iter().zip(x) {
                inp += wij * xj;
            }
            *d = self.synaptic_scale * rec + inp;
        }
        if drive.iter().any(|d| !d.is_finite()) {
            return Err(LsmError::NonFinite("neuron drive"));
        }
        apply_drive(&self.neuron, state, &drive);
        Ok(())
    }
}

/// Dense-oracle counterpart of [`reservoir_step`].
pub fn dense_reference_step(
    res: &Reservoir,
    state: &ReservoirState,
    x: &[f64],
) -> Result<ReservoirState> {
    let mut next = state.clone();
    DenseReservoir::new(res).step(&mut next, x)?;
    Ok(next)
}
