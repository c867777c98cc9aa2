//! Adam-family optimizer kernels and the experiments that verify their
//! update-magnitude and variance properties at desk scale.
//!
//! The design space is a 2x2 grid: momentum is applied either before or
//! after normalization, and the normalizer is either the raw second moment
//! or the centered variance. The four corners are Adam, AdaBelief, LaProp,
//! and MVN-Grad. [`optim`] holds the shared step kernel, [`oracles`] the
//! synthetic gradient models, [`experiments`] the verification drivers, and
//! [`mlp`] a small from-scratch MLP harness for non-synthetic checks.

pub mod error;
pub mod experiments;
pub mod mlp;
pub mod optim;
pub mod oracles;
pub mod rng;

pub use error::{Error, Result};
pub use optim::{
    DecayMode, HyperParams, Normalizer, OptimizerKind, OptimizerState, StepOutput, UpdateOrder,
};
pub use rng::Rng;
