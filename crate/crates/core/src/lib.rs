//! A deterministic laboratory for the identity-mapping task.
//!
//! Networks (fully connected and convolutional) are trained on one — or a
//! few — examples to reproduce their input, then measured against two
//! reference behaviors: the identity function and the constant function
//! that returns the training example. Closed-form predictors for the
//! one-layer cases make the measurements checkable against theory.

pub mod error;
pub mod patches;
pub mod tensor;

pub mod nn;
pub mod optim;

pub mod constructions;
pub mod oracles;

pub mod analysis;
pub mod data;

pub mod config;
pub mod runner;

pub use error::{Error, Result};
pub use tensor::Tensor;
