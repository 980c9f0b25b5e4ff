//! Synthetic temporal tasks, metrics and benchmark drivers.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{generate_reservoir, run_sequence, DenseReservoir, ReservoirConfig};
use crate::error::{LsmError, Result};
use crate::matrix::Matrix;
use crate::pipeline::{train, TrainOptions};
use crate::readout::{fit_readout, predict, retrain_from_cache, FeatureKind, FeatureMode, ReadoutModel, StateCache};

/// Delay-recall task: `xs[t]` i.i.d. uniform on `[0, 1)`, `ys[t] = xs[t - d]`
/// (zero for `t < d`).
pub fn gen_delay_task(steps: usize, delay: usize, seed: u64) -> Result<(Matrix, Matrix)> {
    if delay >= steps {
        return Err(LsmError::config(
            "delay",
            format!("must be smaller than the sequence length ({delay} >= {steps})"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..steps).map(|_| rng.random::<f64>()).collect();
    let ys = shifted(&xs, delay);
    Ok((Matrix::from_vec(steps, 1, xs)?, Matrix::from_vec(steps, 1, ys)?))
}

fn shifted(xs: &[f64], delay: usize) -> Vec<f64> {
    (0..xs.len())
        .map(|t| if t >= delay { xs[t - delay] } else { 0.0 })
        .collect()
}

/// Mean squared error over all entries divided by the pooled (population)
/// variance of `target`.
pub fn nmse(pred: &Matrix, target: &Matrix) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(LsmError::shape(
            "nmse",
            format!("{:?}", target.shape()),
            format!("{:?}", pred.shape()),
        ));
    }
    if target.is_empty() {
        return Err(LsmError::Empty("nmse of an empty matrix"));
    }
    let n = target.as_slice().len() as f64;
    let mean = target.as_slice().iter().sum::<f64>() / n;
    let var = target.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(LsmError::DegenerateVariance);
    }
    let mse = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n;
    Ok(mse / var)
}

/// Readout settings shared by the benchmark drivers. The default records
/// both membrane potentials and spike traces (β = 0.5) with λ = 1e-4.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutSettings {
    pub lambda: f64,
    pub feature_mode: FeatureMode,
}

impl Default for ReadoutSettings {
    fn default() -> Self {
        ReadoutSettings {
            lambda: 1e-4,
            feature_mode: FeatureMode {
                kind: FeatureKind::Both,
                trace_decay: 0.5,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayScore {
    pub delay: usize,
    /// `1 - nmse` on held-out steps, clamped to `[0, 1]`.
    pub score: f64,
    pub readout: ReadoutModel,
}

/// Recall quality for every delay `0..=d_max` from a single reservoir run.
///
/// One input sequence of `steps` values is driven through the reservoir
/// once. Rows before `d_max` are dropped so every delay sees the same
/// rows; the next 80% are used for fitting and the rest for scoring. The
/// delay-0 readout is fit directly and every other delay is a retrain of
/// the same cached features against shifted targets.
pub fn memory_capacity_profile(
    config: &ReservoirConfig,
    d_max: usize,
    steps: usize,
    seed: u64,
    settings: &ReadoutSettings,
) -> Result<Vec<DelayScore>> {
    if 2 * d_max >= steps {
        return Err(LsmError::config(
            "d_max",
            format!("must be below half the sequence length ({d_max} with {steps} steps)"),
        ));
    }
    if config.n_inputs != 1 {
        return Err(LsmError::config("n_inputs", "delay tasks drive a single input"));
    }
    let reservoir = generate_reservoir(config)?;
    let (xs, _) = gen_delay_task(steps, 0, seed)?;
    let mut state = reservoir.zero_state();
    let mut trace_state = vec![0.0; reservoir.n_neurons()];
    let trace = run_sequence(&reservoir, &mut state, &mut trace_state, &xs, &settings.feature_mode)?;
    let features = trace.features();

    let split = d_max + (steps - d_max) * 4 / 5;
    let fit_rows = features.slice_rows(d_max, split);
    let test_rows = features.slice_rows(split, steps);
    let x = xs.as_slice();
    let targets = |delay: usize, lo: usize, hi: usize| {
        Matrix::from_vec(hi - lo, 1, (lo..hi).map(|t| x[t - delay]).collect())
    };

    let cache = StateCache::new(
        fit_rows.clone(),
        targets(0, d_max, split)?,
        vec![0, split - d_max],
        settings.feature_mode,
    )?;
    let mut out = Vec::with_capacity(d_max + 1);
    for delay in 0..=d_max {
        let readout = if delay == 0 {
            fit_readout(&fit_rows, cache.targets(), Some(settings.lambda), settings.feature_mode)?
        } else {
            retrain_from_cache(&cache, &targets(delay, d_max, split)?, Some(settings.lambda))?
        };
        let pred = predict(&readout, &test_rows)?;
        let score = (1.0 - nmse(&pred, &targets(delay, split, steps)?)?).clamp(0.0, 1.0);
        out.push(DelayScore {
            delay,
            score,
            readout,
        });
    }
    Ok(out)
}

/// Delay-recall benchmark parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayTask {
    pub delay: usize,
    pub train_steps: usize,
    pub test_steps: usize,
    pub readout: ReadoutSettings,
}

impl Default for DelayTask {
    fn default() -> Self {
        DelayTask {
            delay: 3,
            train_steps: 2000,
            test_steps: 500,
            readout: ReadoutSettings::default(),
        }
    }
}

impl DelayTask {
    /// Training and test data for a reservoir seed. Data seeds are derived
    /// from the reservoir seed so one number fixes the whole run.
    pub fn data(&self, seed: u64) -> Result<((Matrix, Matrix), (Matrix, Matrix))> {
        let train = gen_delay_task(self.train_steps, self.delay, seed ^ 0x5eed_0000_0000_0001)?;
        let test = gen_delay_task(self.test_steps, self.delay, seed ^ 0x5eed_0000_0000_0002)?;
        Ok((train, test))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub seed: u64,
    pub delay: usize,
    /// Reservoir readout error on the test sequence.
    pub nmse: f64,
    /// Error of a memoryless ridge fit on the current input only.
    pub baseline_nmse: f64,
    pub steps_per_second: f64,
    pub spikes_per_step: f64,
}

impl BenchReport {
    pub const CSV_HEADER: &'static str = "seed,delay,nmse,baseline_nmse,steps_per_second,spikes_per_step";

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        writeln!(s, "seed={}", self.seed).unwrap();
        writeln!(s, "delay={}", self.delay).unwrap();
        writeln!(s, "nmse={}", self.nmse).unwrap();
        writeln!(s, "baseline_nmse={}", self.baseline_nmse).unwrap();
        writeln!(s, "steps_per_second={}", self.steps_per_second).unwrap();
        write!(s, "spikes_per_step={}", self.spikes_per_step).unwrap();
        s
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.seed,
            self.delay,
            self.nmse,
            self.baseline_nmse,
            self.steps_per_second,
            self.spikes_per_step
        )
    }
}

/// Trains on the delay task and reports test error, baseline error,
/// inference throughput and spiking activity. Everything except the
/// throughput is deterministic in `config.seed`.
pub fn run_benchmark(config: &ReservoirConfig, task: &DelayTask) -> Result<BenchReport> {
    if config.n_inputs != 1 || config.n_outputs != 1 {
        return Err(LsmError::config("n_inputs", "delay tasks use one input and one output"));
    }
    let ((xs_train, ys_train), (xs_test, ys_test)) = task.data(config.seed)?;
    let options = TrainOptions {
        lambda: Some(task.readout.lambda),
        feature_mode: task.readout.feature_mode,
        ..TrainOptions::default()
    };
    let model = train(config, &[(xs_train.clone(), ys_train.clone())], &options)?;
    let readout = model.readout().ok_or(LsmError::Untrained)?;

    let reservoir = model.reservoir();
    let mut state = reservoir.zero_state();
    let mut trace_state = vec![0.0; reservoir.n_neurons()];
    let mut spikes = 0usize;
    let mut rows = Matrix::zeros(0, readout.n_features());
    let started = Instant::now();
    for t in 0..xs_test.rows() {
        let step = xs_test.slice_rows(t, t + 1);
        let trace = run_sequence(reservoir, &mut state, &mut trace_state, &step, readout.feature_mode())?;
        spikes += state.spike_count();
        rows.append(trace.features())?;
    }
    let elapsed = started.elapsed().as_secs_f64();
    let nmse_lsm = nmse(&predict(readout, &rows)?, &ys_test)?;

    let baseline = fit_readout(&xs_train, &ys_train, Some(task.readout.lambda), task.readout.feature_mode)?;
    let baseline_nmse = nmse(&predict(&baseline, &xs_test)?, &ys_test)?;

    Ok(BenchReport {
        seed: config.seed,
        delay: task.delay,
        nmse: nmse_lsm,
        baseline_nmse,
        steps_per_second: xs_test.rows() as f64 / elapsed.max(f64::MIN_POSITIVE),
        spikes_per_step: spikes as f64 / xs_test.rows() as f64,
    })
}

/// Spiking activity of a reservoir driven by `xs` from rest.
pub fn spikes_per_step(config: &ReservoirConfig, xs: &Matrix) -> Result<f64> {
    let reservoir = generate_reservoir(config)?;
    let mut state = reservoir.zero_state();
    let mut total = 0usize;
    for x in xs.iter_rows() {
        reservoir.step(&mut state, x)?;
        total += state.spike_count();
    }
    Ok(total as f64 / xs.rows().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputReport {
    pub steps: usize,
    pub sparse_steps_per_second: f64,
    pub dense_steps_per_second: f64,
}

impl ThroughputReport {
    pub fn speedup(&self) -> f64 {
        self.sparse_steps_per_second / self.dense_steps_per_second
    }
}

/// Times the sparse index-gather step against the dense multiply-accumulate
/// reference on the same reservoir and input stream. Both paths must agree
/// on the final state; a mismatch is reported as an error.
pub fn compare_throughput(config: &ReservoirConfig, steps: usize) -> Result<ThroughputReport> {
    let reservoir = generate_reservoir(config)?;
    let dense = DenseReservoir::new(&reservoir);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7b0d_u64);
    let m = reservoir.n_inputs();
    let xs: Vec<f64> = (0..steps * m).map(|_| rng.random::<f64>()).collect();

    let mut sparse_state = reservoir.zero_state();
    let started = Instant::now();
    for x in xs.chunks(m) {
        reservoir.step(&mut sparse_state, x)?;
    }
    let sparse_time = started.elapsed().as_secs_f64();

    let mut dense_state = reservoir.zero_state();
    let started = Instant::now();
    for x in xs.chunks(m) {
        dense.step(&mut dense_state, x)?;
    }
    let dense_time = started.elapsed().as_secs_f64();

    if sparse_state.spikes != dense_state.spikes {
        return Err(LsmError::Dimension("sparse and dense kernels diverged".into()));
    }
    Ok(ThroughputReport {
        steps,
        sparse_steps_per_second: steps as f64 / sparse_time.max(f64::MIN_POSITIVE),
        dense_steps_per_second: steps as f64 / dense_time.max(f64::MIN_POSITIVE),
    })
}
