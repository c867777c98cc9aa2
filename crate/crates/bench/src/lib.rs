//! Shared fixtures for the criterion benchmarks: deterministic gradients,
//! a warm optimizer state, and a small classification batch.

use mvngrad_core::mlp::{make_blobs, MlpModel};
use mvngrad_core::optim::OptimizerState;
use mvngrad_core::{DecayMode, HyperParams, Rng};

/// Hyperparameters used by every benchmark arm.
pub fn bench_hp(beta2: f64) -> HyperParams {
    HyperParams::new(1e-3, 0.9, beta2, 1e-8, 0.0, 0.0, DecayMode::None)
        .expect("valid hyperparameters")
}

/// A deterministic gradient vector, a zero parameter vector, and a warm
/// state whose normalizer starts at 1.
pub fn step_fixture(dim: usize) -> (OptimizerState, Vec<f64>, Vec<f64>) {
    let mut rng = Rng::new(1, 0);
    let grad = (0..dim).map(|_| rng.standard_normal()).collect();
    let state = OptimizerState::new(dim, 1.0).expect("valid state");
    (state, vec![0.0; dim], grad)
}

/// A trained-size MLP and one 16-sample batch from the synthetic blobs.
pub fn mlp_fixture() -> (MlpModel, Vec<f64>, Vec<usize>) {
    let dataset = make_blobs(256, 20, 4, 6.0, &mut Rng::new(7, 0)).expect("blobs");
    let model = MlpModel::new(20, 64, 64, 4, &mut Rng::new(7, 1)).expect("model");
    let batch: Vec<usize> = (0..16).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    dataset.gather(&batch, &mut xs, &mut ys);
    (model, xs, ys)
}
