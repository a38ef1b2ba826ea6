//! End-to-end nonparametric probabilistic forecasting with iterative
//! missing-data imputation.
//!
//! A residual stack of peephole LSTM layers maps a lag window and a nominal
//! proportion α to the α-quantile of the next value. During training, missing
//! observations are replaced by the model's own median forecast and the
//! pinball loss is taken only over observed targets, with gradients flowing
//! through the imputation chain.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod model;
pub mod numkernel;
pub mod pipeline;
pub mod train;

pub use error::{Error, Result};
