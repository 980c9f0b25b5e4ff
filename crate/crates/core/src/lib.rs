//! Liquid state machine engine.
//!
//! A fixed, randomly generated sparse spiking reservoir is driven one step
//! at a time; a linear ridge-regression readout is trained on the recorded
//! neuron states. Recorded states can be cached so the readout is retrained
//! against new targets without running the reservoir again.

pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod matrix;
pub mod persistence;
pub mod pipeline;
pub mod readout;
pub mod sparse;
pub mod tasks;

pub use dynamics::{
    dense_reference_step, generate_reservoir, neuron_update, reservoir_step, run_sequence,
    steps_executed, DenseReservoir, NeuronParams, NeuronUpdate, Reservoir, ReservoirConfig,
    ReservoirState,
};
pub use error::{LsmError, Result};
pub use matrix::Matrix;
pub use pipeline::{predict_sequence, train, LsmModel, StreamSession, TrainOptions};
pub use readout::{
    extract_features, fit_readout, predict, retrain_from_cache, FeatureKind, FeatureMode,
    ReadoutModel, StateCache, StateTrace,
};
pub use sparse::{SparseBinaryMatrix, SparseRealMatrix};
