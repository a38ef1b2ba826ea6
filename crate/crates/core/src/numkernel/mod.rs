//! Numeric kernels: peephole LSTM step, dense layer and parameter updates.
//!
//! Everything runs in `f64`. Functions are pure over explicit state.

mod dense;
mod lstm;
mod optim;

pub use dense::{dense_backward_into, dense_forward, dense_forward_batch, DenseParams};
pub use lstm::{
    lstm_step, lstm_step_backward, lstm_step_backward_into, lstm_step_batch, BatchState,
    LayerState, LstmLayerParams, StepCache, StepGrads,
};
pub use optim::{optimizer_step, OptimizerState, UpdateRule};
