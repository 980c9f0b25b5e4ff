//! Feature recording and the linear readout.
//!
//! The readout is ridge regression on recorded reservoir features with a
//! constant bias column appended. The regularizer applies uniformly to every
//! weight, bias included.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dynamics::ReservoirState;
use crate::error::{LsmError, Result};
use crate::linalg::spd_solve;
use crate::matrix::Matrix;

/// Which neuron quantity is recorded as a feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Post-step membrane potentials.
    Membrane,
    /// Exponentially filtered spike trains.
    SpikeTrace,
    /// Membrane potentials followed by spike traces.
    Both,
}

impl std::str::FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "membrane" => Ok(FeatureKind::Membrane),
            "spike_trace" => Ok(FeatureKind::SpikeTrace),
            "both" => Ok(FeatureKind::Both),
            other => Err(format!(
                "unknown feature mode {other:?} (expected membrane, spike_trace or both)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureMode {
    pub kind: FeatureKind,
    /// Per-step decay of the spike trace, in `(0, 1)`.
    pub trace_decay: f64,
}

impl Default for FeatureMode {
    fn default() -> Self {
        FeatureMode {
            kind: FeatureKind::SpikeTrace,
            trace_decay: 0.9,
        }
    }
}

impl FeatureMode {
    pub fn new(kind: FeatureKind, trace_decay: f64) -> Result<Self> {
        let mode = FeatureMode { kind, trace_decay };
        mode.validate()?;
        Ok(mode)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.trace_decay > 0.0 && self.trace_decay < 1.0) {
            return Err(LsmError::config("feature_mode.trace_decay", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Feature row width for a reservoir of `n_neurons`.
    pub fn width(&self, n_neurons: usize) -> usize {
        match self.kind {
            FeatureKind::Membrane | FeatureKind::SpikeTrace => n_neurons,
            FeatureKind::Both => 2 * n_neurons,
        }
    }
}

/// Recorded features, one row per executed step.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrace {
    rows: Matrix,
}

impl StateTrace {
    pub fn new(rows: Matrix) -> Self {
        StateTrace { rows }
    }

    pub fn steps(&self) -> usize {
        self.rows.rows()
    }

    pub fn width(&self) -> usize {
        self.rows.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.rows
    }

    pub fn into_features(self) -> Matrix {
        self.rows
    }
}

/// Pure form of [`record_features`]: returns the feature row and the
/// advanced spike-trace state.
pub fn extract_features(
    state: &ReservoirState,
    trace_state: &[f64],
    mode: &FeatureMode,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if trace_state.len() != state.n_neurons() {
        return Err(LsmError::shape("spike trace state", state.n_neurons(), trace_state.len()));
    }
    if trace_state.iter().any(|v| !v.is_finite()) {
        return Err(LsmError::NonFinite("spike trace state"));
    }
    let mut trace = trace_state.to_vec();
    let mut row = Vec::new();
    record_features(state, &mut trace, mode, &mut row);
    Ok((row, trace))
}

/// Advances the spike traces (`trace <- decay * trace + spike`) and writes
/// the feature row for `state` into `row`.
pub fn record_features(
    state: &ReservoirState,
    trace_state: &mut [f64],
    mode: &FeatureMode,
    row: &mut Vec<f64>,
) {
    let beta = mode.trace_decay;
    for (tr, &s) in trace_state.iter_mut().zip(&state.spikes) {
        *tr = beta * *tr + if s { 1.0 } else { 0.0 };
    }
    row.clear();
    match mode.kind {
        FeatureKind::Membrane => row.extend_from_slice(&state.potentials),
        FeatureKind::SpikeTrace => row.extend_from_slice(trace_state),
        FeatureKind::Both => {
            row.extend_from_slice(&state.potentials);
            row.extend_from_slice(trace_state);
        }
    }
}

/// Trained linear readout. `w_out` is `(F + 1) x P`; its last row holds the
/// bias weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutModel {
    w_out: Matrix,
    lambda: f64,
    feature_mode: FeatureMode,
}

impl ReadoutModel {
    pub fn from_parts(w_out: Matrix, lambda: f64, feature_mode: FeatureMode) -> Result<Self> {
        if w_out.rows() < 2 || w_out.cols() == 0 {
            return Err(LsmError::Dimension(format!(
                "w_out is {}x{}, needs at least one feature row plus the bias row",
                w_out.rows(),
                w_out.cols()
            )));
        }
        if !w_out.all_finite() {
            return Err(LsmError::NonFinite("readout weights"));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(LsmError::config("lambda", "must be finite and >= 0"));
        }
        feature_mode.validate()?;
        Ok(ReadoutModel {
            w_out,
            lambda,
            feature_mode,
        })
    }

    pub fn weights(&self) -> &Matrix {
        &self.w_out
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn feature_mode(&self) -> &FeatureMode {
        &self.feature_mode
    }

    /// Feature width F.
    pub fn n_features(&self) -> usize {
        self.w_out.rows() - 1
    }

    pub fn n_outputs(&self) -> usize {
        self.w_out.cols()
    }

    pub fn bias(&self) -> &[f64] {
        self.w_out.row(self.n_features())
    }

    /// `out = [features | 1] · w_out`. Shared by batch and streaming
    /// prediction so both produce identical bits.
    pub fn predict_row(&self, features: &[f64], out: &mut [f64]) {
        debug_assert_eq!(features.len(), self.n_features());
        out.fill(0.0);
        for (f, &s) in features.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.w_out.row(f)) {
                *o += s * w;
            }
        }
        for (o, &b) in out.iter_mut().zip(self.bias()) {
            *o += b;
        }
    }
}

/// Scale-aware default regularization: `1e-6 · trace(S̃ᵀS̃) / (F + 1)`.
pub fn default_lambda(features: &Matrix) -> f64 {
    let sum_sq: f64 = features.as_slice().iter().map(|v| v * v).sum();
    // The bias column contributes one per row.
    let trace = sum_sq + features.rows() as f64;
    1e-6 * trace / (features.cols() + 1) as f64
}

fn check_fit_inputs(design: &Matrix, targets: &Matrix, lambda: f64) -> Result<()> {
    if design.rows() == 0 {
        return Err(LsmError::Empty("no feature rows to fit"));
    }
    if design.rows() != targets.rows() {
        return Err(LsmError::shape(
            "readout fit",
            format!("{} target rows", design.rows()),
            format!("{} target rows", targets.rows()),
        ));
    }
    if targets.cols() == 0 {
        return Err(LsmError::Empty("targets have no columns"));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(LsmError::config("lambda", "must be finite and >= 0"));
    }
    if !design.all_finite() {
        return Err(LsmError::NonFinite("features"));
    }
    if !targets.all_finite() {
        return Err(LsmError::NonFinite("targets"));
    }
    Ok(())
}

/// `xᵀx`, accumulated row by row.
pub fn gram(x: &Matrix) -> Matrix {
    let n = x.cols();
    let mut g = Matrix::zeros(n, n);
    for xr in x.iter_rows() {
        for (i, &a) in xr.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (gij, &b) in g.row_mut(i)[..=i].iter_mut().zip(xr) {
                *gij += a * b;
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            g[(j, i)] = g[(i, j)];
        }
    }
    g
}

/// `xᵀy`.
pub fn cross(x: &Matrix, y: &Matrix) -> Matrix {
    let mut c = Matrix::zeros(x.cols(), y.cols());
    for (xr, yr) in x.iter_rows().zip(y.iter_rows()) {
        for (i, &a) in xr.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (r, &t) in c.row_mut(i).iter_mut().zip(yr) {
                *r += a * t;
            }
        }
    }
    c
}

/// Left and right-hand sides of the ridge normal equations:
/// `(xᵀx + λI, xᵀy)`.
pub fn normal_equations(x: &Matrix, y: &Matrix, lambda: f64) -> (Matrix, Matrix) {
    (regularized(&gram(x), lambda), cross(x, y))
}

fn regularized(gram: &Matrix, lambda: f64) -> Matrix {
    let mut a = gram.clone();
    for i in 0..a.rows() {
        a[(i, i)] += lambda;
    }
    a
}

/// Ridge regression without an intercept: solves `(xᵀx + λI) w = xᵀy`.
pub fn solve_ridge(x: &Matrix, y: &Matrix, lambda: f64) -> Result<Matrix> {
    check_fit_inputs(x, y, lambda)?;
    solve_with_gram(&gram(x), x, y, lambda)
}

fn solve_with_gram(gram: &Matrix, x: &Matrix, y: &Matrix, lambda: f64) -> Result<Matrix> {
    spd_solve(&regularized(gram, lambda), &cross(x, y))
}

/// `[S | 1]`.
pub fn with_bias(features: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(features.rows(), features.cols() + 1);
    for r in 0..features.rows() {
        let dst = out.row_mut(r);
        dst[..features.cols()].copy_from_slice(features.row(r));
        dst[features.cols()] = 1.0;
    }
    out
}

/// Fits the readout on features `s` (T x F) and targets `y` (T x P).
/// `lambda = None` selects [`default_lambda`].
pub fn fit_readout(
    s: &Matrix,
    y: &Matrix,
    lambda: Option<f64>,
    feature_mode: FeatureMode,
) -> Result<ReadoutModel> {
    let lambda = lambda.unwrap_or_else(|| default_lambda(s));
    check_fit_inputs(s, y, lambda)?;
    let design = with_bias(s);
    let w_out = solve_with_gram(&gram(&design), &design, y, lambda)?;
    ReadoutModel::from_parts(w_out, lambda, feature_mode)
}

/// Applies the readout to every row of `s`.
pub fn predict(model: &ReadoutModel, s: &Matrix) -> Result<Matrix> {
    if s.cols() != model.n_features() {
        return Err(LsmError::shape(
            "readout input",
            format!("{} features", model.n_features()),
            format!("{} features", s.cols()),
        ));
    }
    let mut out = Matrix::zeros(s.rows(), model.n_outputs());
    for r in 0..s.rows() {
        model.predict_row(s.row(r), out.row_mut(r));
    }
    Ok(out)
}

/// Recorded features and targets retained after training so the readout can
/// be refit against new targets without running the reservoir again.
///
/// The Gram matrix of the biased features is computed on first retrain and
/// kept, so later retrains only pay for the right-hand side and the solve.
#[derive(Debug, Clone)]
pub struct StateCache {
    features: Matrix,
    targets: Matrix,
    /// Sequence start offsets followed by the total row count.
    boundaries: Vec<usize>,
    feature_mode: FeatureMode,
    design: OnceLock<(Matrix, Matrix)>,
}

impl PartialEq for StateCache {
    fn eq(&self, other: &Self) -> bool {
        self.features == other.features
            && self.targets == other.targets
            && self.boundaries == other.boundaries
            && self.feature_mode == other.feature_mode
    }
}

impl StateCache {
    pub fn new(
        features: Matrix,
        targets: Matrix,
        boundaries: Vec<usize>,
        feature_mode: FeatureMode,
    ) -> Result<Self> {
        if features.rows() != targets.rows() {
            return Err(LsmError::Dimension(format!(
                "cache has {} feature rows but {} target rows",
                features.rows(),
                targets.rows()
            )));
        }
        let partitions = boundaries.len() >= 2
            && boundaries[0] == 0
            && boundaries[boundaries.len() - 1] == features.rows()
            && boundaries.windows(2).all(|w| w[0] < w[1]);
        if !partitions {
            return Err(LsmError::Dimension(format!(
                "sequence boundaries {boundaries:?} do not partition {} rows",
                features.rows()
            )));
        }
        Ok(StateCache {
            features,
            targets,
            boundaries,
            feature_mode,
            design: OnceLock::new(),
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn targets(&self) -> &Matrix {
        &self.targets
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn feature_mode(&self) -> &FeatureMode {
        &self.feature_mode
    }

    pub fn n_sequences(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// `([S | 1], [S | 1]ᵀ[S | 1])`, computed once.
    fn design(&self) -> &(Matrix, Matrix) {
        self.design.get_or_init(|| {
            let design = with_bias(&self.features);
            let g = gram(&design);
            (design, g)
        })
    }

    /// Row range of sequence `i`.
    pub fn sequence(&self, i: usize) -> std::ops::Range<usize> {
        self.boundaries[i]..self.boundaries[i + 1]
    }
}

/// Refits the readout on cached features against `new_targets`. Takes no
/// reservoir, so no inference can happen here.
pub fn retrain_from_cache(
    cache: &StateCache,
    new_targets: &Matrix,
    lambda: Option<f64>,
) -> Result<ReadoutModel> {
    if new_targets.rows() != cache.features.rows() {
        return Err(LsmError::shape(
            "retrain targets",
            format!("{} rows", cache.features.rows()),
            format!("{} rows", new_targets.rows()),
        ));
    }
    // Same arithmetic as `fit_readout` on the cached features, with the Gram
    // matrix reused across calls.
    let lambda = lambda.unwrap_or_else(|| default_lambda(&cache.features));
    check_fit_inputs(&cache.features, new_targets, lambda)?;
    let (design, g) = cache.design();
    let w_out = solve_with_gram(g, design, new_targets, lambda)?;
    ReadoutModel::from_parts(w_out, lambda, cache.feature_mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_with_spikes(spikes: &[bool]) -> ReservoirState {
        let mut s = ReservoirState::zeros(spikes.len());
        s.spikes = spikes.to_vec();
        s
    }

    #[test]
    fn silent_neurons_give_zero_trace() {
        let mode = FeatureMode::default();
        let s = ReservoirState::zeros(4);
        let (row, tr) = extract_features(&s, &[0.0; 4], &mode).unwrap();
        assert_eq!(row, vec![0.0; 4]);
        assert_eq!(tr, vec![0.0; 4]);
    }

    #[test]
    fn trace_accumulates_with_decay() {
        let mode = FeatureMode::new(FeatureKind::SpikeTrace, 0.5).unwrap();
        let s = state_with_spikes(&[true]);
        let (r1, tr) = extract_features(&s, &[0.0], &mode).unwrap();
        let (r2, _) = extract_features(&s, &tr, &mode).unwrap();
        assert_eq!(r1, vec![1.0]);
        assert_eq!(r2, vec![1.5]);
    }

    #[test]
    fn both_mode_concatenates() {
        let mode = FeatureMode::new(FeatureKind::Both, 0.9).unwrap();
        let mut s = state_with_spikes(&[true, false, false]);
        s.potentials = vec![0.0, 0.25, 0.5];
        let (row, _) = extract_features(&s, &[0.0; 3], &mode).unwrap();
        assert_eq!(row, vec![0.0, 0.25, 0.5, 1.0, 0.0, 0.0]);
        assert_eq!(mode.width(3), 6);
    }

    #[test]
    fn trace_converges_to_geometric_limit() {
        for beta in [0.5, 0.9, 0.99] {
            let mode = FeatureMode::new(FeatureKind::SpikeTrace, beta).unwrap();
            let s = state_with_spikes(&[true]);
            let steps = ((1e-6 * (1.0 - beta)).ln() / beta.ln()).ceil() as usize;
            let mut tr = vec![0.0];
            for _ in 0..steps {
                tr = extract_features(&s, &tr, &mode).unwrap().1;
            }
            assert!((tr[0] - 1.0 / (1.0 - beta)).abs() <= 1e-6, "beta {beta}");
        }
    }

    #[test]
    fn trace_decay_bounds() {
        assert!(FeatureMode::new(FeatureKind::SpikeTrace, 1.0).is_err());
        assert!(FeatureMode::new(FeatureKind::SpikeTrace, 0.0).is_err());
    }

    #[test]
    fn zero_targets_give_zero_weights() {
        let s = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]]).unwrap();
        let y = Matrix::zeros(3, 2);
        let m = fit_readout(&s, &y, Some(1.0), FeatureMode::default()).unwrap();
        assert!(m.weights().as_slice().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn diagonal_ridge_without_bias() {
        let s = Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap();
        let y = Matrix::from_rows(&[[1.0], [4.0]]).unwrap();
        let w = solve_ridge(&s, &y, 1.0).unwrap();
        assert!((w[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((w[(1, 0)] - 1.6).abs() < 1e-14);
    }

    #[test]
    fn predict_single_row() {
        let w = Matrix::from_rows(&[[1.0], [1.0], [3.0]]).unwrap();
        let m = ReadoutModel::from_parts(w, 0.0, FeatureMode::default()).unwrap();
        let out = predict(&m, &Matrix::from_rows(&[[1.0, 2.0]]).unwrap()).unwrap();
        assert_eq!(out.as_slice(), &[6.0]);
        assert!(predict(&m, &Matrix::from_rows(&[[1.0]]).unwrap()).is_err());
    }

    #[test]
    fn rank_deficient_without_lambda() {
        // Two identical columns.
        let s = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap();
        let y = Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let err = fit_readout(&s, &y, Some(0.0), FeatureMode::default()).unwrap_err();
        assert!(matches!(err, LsmError::RankDeficient { .. }));
        assert!(err.to_string().contains("lambda > 0"));
        assert!(fit_readout(&s, &y, Some(1e-3), FeatureMode::default()).is_ok());
    }

    #[test]
    fn fit_shape_and_lambda_errors() {
        let s = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let y = Matrix::from_rows(&[[1.0]]).unwrap();
        assert!(matches!(
            fit_readout(&s, &y, Some(1.0), FeatureMode::default()),
            Err(LsmError::Shape { .. })
        ));
        let y = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        assert!(fit_readout(&s, &y, Some(-1.0), FeatureMode::default()).is_err());
    }

    #[test]
    fn default_lambda_scale() {
        let s = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        // trace = 1 + 4 + 1 + 2 (bias) = 8, F + 1 = 3
        assert!((default_lambda(&s) - 1e-6 * 8.0 / 3.0).abs() < 1e-20);
        let y = Matrix::from_rows(&[[1.0], [0.0]]).unwrap();
        let m = fit_readout(&s, &y, None, FeatureMode::default()).unwrap();
        assert_eq!(m.lambda(), default_lambda(&s));
    }

    #[test]
    fn retrain_matches_fit_and_scales_linearly() {
        let s = Matrix::from_rows(&[[1.0, 0.2], [0.3, 1.0], [0.5, 0.5], [0.1, 0.9]]).unwrap();
        let y = Matrix::from_rows(&[[1.0], [2.0], [0.0], [1.0]]).unwrap();
        let mode = FeatureMode::default();
        let cache = StateCache::new(s.clone(), y.clone(), vec![0, 2, 4], mode).unwrap();
        let fit = fit_readout(&s, &y, Some(0.1), mode).unwrap();
        assert_eq!(retrain_from_cache(&cache, &y, Some(0.1)).unwrap(), fit);
        let doubled = retrain_from_cache(&cache, &y.scale(2.0), Some(0.1)).unwrap();
        // Scaling by two is exact in binary floating point.
        assert_eq!(doubled.weights(), &fit.weights().scale(2.0));
        assert!(retrain_from_cache(&cache, &Matrix::zeros(3, 1), Some(0.1)).is_err());
    }

    #[test]
    fn cache_boundaries_must_partition() {
        let s = Matrix::zeros(4, 1);
        let mode = FeatureMode::default();
        assert!(StateCache::new(s.clone(), s.clone(), vec![0, 4], mode).is_ok());
        assert!(StateCache::new(s.clone(), s.clone(), vec![0, 2, 2, 4], mode).is_err());
        assert!(StateCache::new(s.clone(), s.clone(), vec![0, 3], mode).is_err());
        assert!(StateCache::new(s.clone(), Matrix::zeros(3, 1), vec![0, 4], mode).is_err());
    }
}
