//! Model lifecycle: training, batch prediction, streaming sessions and
//! retraining from cached states.

use crate::dynamics::{generate_reservoir, run_sequence, Reservoir, ReservoirConfig, ReservoirState};
use crate::error::{LsmError, Result};
use crate::matrix::Matrix;
use crate::readout::{
    fit_readout, predict, record_features, retrain_from_cache, FeatureMode, ReadoutModel,
    StateCache,
};

/// A reservoir with its (optional) trained readout and state cache.
#[derive(Debug, Clone, PartialEq)]
pub struct LsmModel {
    reservoir: Reservoir,
    readout: Option<ReadoutModel>,
    cache: Option<StateCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    /// Ridge strength; `None` picks the scale-aware default.
    pub lambda: Option<f64>,
    pub feature_mode: FeatureMode,
    /// Retain features and targets for [`LsmModel::retrain`].
    pub keep_cache: bool,
    /// Leading feature rows dropped from each sequence before fitting.
    pub washout: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            lambda: None,
            feature_mode: FeatureMode::default(),
            keep_cache: false,
            washout: 0,
        }
    }
}

/// Runs each input sequence from a fresh zero state and stacks the
/// recorded features, dropping `washout` leading rows per sequence.
/// Returns the features and the per-sequence row boundaries.
pub fn record_sequences(
    reservoir: &Reservoir,
    inputs: &[&Matrix],
    mode: &FeatureMode,
    washout: usize,
) -> Result<(Matrix, Vec<usize>)> {
    let n = reservoir.n_neurons();
    let mut features = Matrix::zeros(0, mode.width(n));
    let mut boundaries = vec![0];
    for xs in inputs {
        if xs.rows() <= washout {
            return Err(LsmError::shape(
                "training sequence",
                format!("more than {washout} steps (washout)"),
                format!("{} steps", xs.rows()),
            ));
        }
        let mut state = reservoir.zero_state();
        let mut trace_state = vec![0.0; n];
        let trace = run_sequence(reservoir, &mut state, &mut trace_state, xs, mode)?;
        let f = trace.into_features();
        features.append(&f.slice_rows(washout, f.rows()))?;
        boundaries.push(features.rows());
    }
    Ok((features, boundaries))
}

/// Generates the reservoir for `config` and trains a readout on
/// `(inputs, targets)` sequence pairs.
pub fn train(
    config: &ReservoirConfig,
    sequences: &[(Matrix, Matrix)],
    options: &TrainOptions,
) -> Result<LsmModel> {
    let reservoir = generate_reservoir(config)?;
    LsmModel::untrained(reservoir).train(sequences, options)
}

impl LsmModel {
    pub fn untrained(reservoir: Reservoir) -> Self {
        LsmModel {
            reservoir,
            readout: None,
            cache: None,
        }
    }

    /// Assembles a model from parts, checking that they agree in shape.
    pub fn from_parts(
        reservoir: Reservoir,
        readout: Option<ReadoutModel>,
        cache: Option<StateCache>,
    ) -> Result<Self> {
        let n = reservoir.n_neurons();
        let p = reservoir.config().n_outputs;
        if let Some(r) = &readout {
            let f = r.feature_mode().width(n);
            if r.n_features() != f || r.n_outputs() != p {
                return Err(LsmError::Dimension(format!(
                    "readout is {}x{}, expected {}x{p}",
                    r.n_features() + 1,
                    r.n_outputs(),
                    f + 1
                )));
            }
        }
        if let Some(c) = &cache {
            let f = c.feature_mode().width(n);
            if c.features().cols() != f || c.targets().cols() != p {
                return Err(LsmError::Dimension(format!(
                    "cache has {} feature and {} target columns, expected {f} and {p}",
                    c.features().cols(),
                    c.targets().cols()
                )));
            }
        }
        Ok(LsmModel {
            reservoir,
            readout,
            cache,
        })
    }

    pub fn reservoir(&self) -> &Reservoir {
        &self.reservoir
    }

    pub fn readout(&self) -> Option<&ReadoutModel> {
        self.readout.as_ref()
    }

    pub fn cache(&self) -> Option<&StateCache> {
        self.cache.as_ref()
    }

    pub fn is_trained(&self) -> bool {
        self.readout.is_some()
    }

    pub fn n_inputs(&self) -> usize {
        self.reservoir.n_inputs()
    }

    pub fn n_outputs(&self) -> usize {
        self.reservoir.config().n_outputs
    }

    fn trained_readout(&self) -> Result<&ReadoutModel> {
        self.readout.as_ref().ok_or(LsmError::Untrained)
    }

    /// Fits a fresh readout on this model's reservoir, replacing any
    /// existing readout and cache.
    pub fn train(self, sequences: &[(Matrix, Matrix)], options: &TrainOptions) -> Result<Self> {
        if sequences.is_empty() {
            return Err(LsmError::Empty("no training sequences"));
        }
        options.feature_mode.validate()?;
        let m = self.n_inputs();
        let p = self.n_outputs();
        for (i, (xs, ys)) in sequences.iter().enumerate() {
            if xs.cols() != m {
                return Err(LsmError::shape("training inputs", format!("{m} columns"), format!("{} columns in sequence {i}", xs.cols())));
            }
            if ys.cols() != p {
                return Err(LsmError::shape("training targets", format!("{p} columns"), format!("{} columns in sequence {i}", ys.cols())));
            }
            if xs.rows() != ys.rows() {
                return Err(LsmError::shape("training targets", format!("{} rows", xs.rows()), format!("{} rows in sequence {i}", ys.rows())));
            }
        }

        let inputs: Vec<&Matrix> = sequences.iter().map(|(xs, _)| xs).collect();
        let (features, boundaries) =
            record_sequences(&self.reservoir, &inputs, &options.feature_mode, options.washout)?;
        let mut targets = Matrix::zeros(0, p);
        for (_, ys) in sequences {
            targets.append(&ys.slice_rows(options.washout, ys.rows()))?;
        }

        let readout = fit_readout(&features, &targets, options.lambda, options.feature_mode)?;
        let cache = if options.keep_cache {
            Some(StateCache::new(features, targets, boundaries, options.feature_mode)?)
        } else {
            None
        };
        Ok(LsmModel {
            reservoir: self.reservoir,
            readout: Some(readout),
            cache,
        })
    }

    /// Refits the readout against `new_targets` (aligned with the cached
    /// feature rows) without running the reservoir. `lambda = None` reuses
    /// the current readout's regularization.
    pub fn retrain(&self, new_targets: &Matrix, lambda: Option<f64>) -> Result<LsmModel> {
        let cache = self.cache.as_ref().ok_or(LsmError::MissingCache)?;
        let lambda = lambda.or(self.readout.as_ref().map(ReadoutModel::lambda));
        let readout = retrain_from_cache(cache, new_targets, lambda)?;
        let cache = StateCache::new(
            cache.features().clone(),
            new_targets.clone(),
            cache.boundaries().to_vec(),
            *cache.feature_mode(),
        )?;
        Ok(LsmModel {
            reservoir: self.reservoir.clone(),
            readout: Some(readout),
            cache: Some(cache),
        })
    }

    /// Drops the state cache.
    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }

    /// Runs `xs` from a fresh zero state and applies the readout.
    pub fn predict_sequence(&self, xs: &Matrix) -> Result<Matrix> {
        let readout = self.trained_readout()?;
        let mut state = self.reservoir.zero_state();
        let mut trace_state = vec![0.0; self.reservoir.n_neurons()];
        let trace = run_sequence(
            &self.reservoir,
            &mut state,
            &mut trace_state,
            xs,
            readout.feature_mode(),
        )?;
        predict(readout, trace.features())
    }

    pub fn open_session(&self) -> Result<StreamSession<'_>> {
        let readout = self.trained_readout()?;
        Ok(StreamSession {
            model: self,
            readout,
            state: self.reservoir.zero_state(),
            trace_state: vec![0.0; self.reservoir.n_neurons()],
            row: Vec::new(),
        })
    }
}

pub fn predict_sequence(model: &LsmModel, xs: &Matrix) -> Result<Matrix> {
    model.predict_sequence(xs)
}

/// Step-at-a-time inference over a shared model. Each session owns its
/// neuron state; any number of sessions may run over one model.
#[derive(Debug, Clone)]
pub struct StreamSession<'a> {
    model: &'a LsmModel,
    readout: &'a ReadoutModel,
    state: ReservoirState,
    trace_state: Vec<f64>,
    row: Vec<f64>,
}

impl StreamSession<'_> {
    /// Advances one step on input `x` and returns the readout output.
    pub fn step(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        self.model.reservoir.step(&mut self.state, x)?;
        record_features(
            &self.state,
            &mut self.trace_state,
            self.readout.feature_mode(),
            &mut self.row,
        );
        let mut out = vec![0.0; self.readout.n_outputs()];
        self.readout.predict_row(&self.row, &mut out);
        Ok(out)
    }

    pub fn reset(&mut self) {
        self.state = self.model.reservoir.zero_state();
        self.trace_state.fill(0.0);
    }

    pub fn state(&self) -> &ReservoirState {
        &self.state
    }

    pub fn step_index(&self) -> u64 {
        self.state.step_index
    }
}
