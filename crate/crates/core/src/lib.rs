//! Predicting the weight trajectory of a pouring cup from its rotation angle
//! and container/material features with stacked LSTM/GRU networks written
//! from scratch, and scoring the predictions with DTW and FastDTW.
//!
//! Module map:
//! - [`data`]: sequence schema, force helpers, normalization, padding, splits, dataset files
//! - [`synth`]: synthetic pouring demonstrations
//! - [`nn`]: recurrent cells, stacked network, BPTT, finite-difference oracle, checkpoints
//! - [`optim`]: masked MSE and Adam
//! - [`train`]: training loop, prediction, loss-curve export
//! - [`dtw`]: exact DTW, FastDTW, test-set scoring
//! - [`cli`]: the `pourseq` command line

pub mod activation;
pub mod cli;
pub mod data;
pub mod dtw;
pub mod error;
pub mod linalg;
pub mod nn;
pub mod optim;
pub mod par;
pub mod synth;
pub mod train;

pub use activation::Activation;
pub use error::{Error, Result};
pub use par::Exec;
