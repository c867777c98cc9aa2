//! Synthetic gradient models used by the verification experiments.
//!
//! Three oracles cover the three experiments: a deterministic single-spike
//! stream, a symmetric-noise model around a fixed mean, and a high
//! signal-to-noise quadratic whose noise is pointwise dominated by the true
//! gradient.

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Deterministic gradient stream with one large initial spike.
///
/// The gradient is `magnitude * baseline` at `t = 0` and `baseline` for
/// every later step up to the horizon. `d_bar` is the warm start for the
/// normalizer accumulator of runs driven by this model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeModel {
    /// Spike multiplier `M >= 1`.
    pub magnitude: f64,
    /// Post-spike gradient value `u != 0`.
    pub baseline: f64,
    /// Normalizer warm start `d_bar > 0`.
    pub d_bar: f64,
    /// Last valid step index `T >= 1`.
    pub horizon: usize,
}

impl SpikeModel {
    /// Validates the model constants.
    pub fn new(magnitude: f64, baseline: f64, d_bar: f64, horizon: usize) -> Result<Self> {
        if !magnitude.is_finite() || magnitude < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "spike magnitude must be finite and >= 1, got {magnitude}"
            )));
        }
        if !baseline.is_finite() || baseline == 0.0 {
            return Err(Error::InvalidConfig(format!(
                "spike baseline must be finite and nonzero, got {baseline}"
            )));
        }
        if !d_bar.is_finite() || d_bar <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "d_bar must be finite and > 0, got {d_bar}"
            )));
        }
        if horizon < 1 {
            return Err(Error::InvalidConfig(
                "spike horizon must be at least 1".into(),
            ));
        }
        Ok(Self {
            magnitude,
            baseline,
            d_bar,
            horizon,
        })
    }
}

/// Gradient at step `t` of the spike stream; `t` must not exceed the horizon.
pub fn spike_gradient(model: &SpikeModel, t: usize) -> Result<f64> {
    if t > model.horizon {
        return Err(Error::InvalidConfig(format!(
            "spike step {t} is beyond horizon {}",
            model.horizon
        )));
    }
    Ok(if t == 0 {
        model.magnitude * model.baseline
    } else {
        model.baseline
    })
}

/// Noise law for [`SymmetricNoiseModel`]; all three are symmetric about 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetricLaw {
    /// `scale * N(0, 1)`.
    Gaussian,
    /// Uniform on `[-scale, scale]`.
    Uniform,
    /// `scale` with a fair random sign (two-point law).
    Rademacher,
}

impl std::fmt::Display for SymmetricLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SymmetricLaw::Gaussian => "gaussian",
            SymmetricLaw::Uniform => "uniform",
            SymmetricLaw::Rademacher => "rademacher",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for SymmetricLaw {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(SymmetricLaw::Gaussian),
            "uniform" => Ok(SymmetricLaw::Uniform),
            "rademacher" => Ok(SymmetricLaw::Rademacher),
            other => Err(format!("unknown symmetric noise law `{other}`")),
        }
    }
}

/// Gradient model `g = mu + zeta` with `zeta` symmetric about zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricNoiseModel {
    /// Per-coordinate mean.
    pub mu: Vec<f64>,
    /// Shared noise law.
    pub law: SymmetricLaw,
    /// Per-coordinate noise scale, `>= 0`.
    pub scale: Vec<f64>,
}

impl SymmetricNoiseModel {
    /// Validates shapes and ranges.
    pub fn new(mu: Vec<f64>, law: SymmetricLaw, scale: Vec<f64>) -> Result<Self> {
        if mu.len() != scale.len() {
            return Err(Error::DimensionMismatch {
                context: "symmetric noise model",
                expected: mu.len(),
                got: scale.len(),
            });
        }
        if mu.is_empty() {
            return Err(Error::InvalidConfig(
                "symmetric noise model must have dimension >= 1".into(),
            ));
        }
        if mu.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("symmetric noise mu"));
        }
        if scale.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidConfig(
                "symmetric noise scale must be finite and >= 0".into(),
            ));
        }
        Ok(Self { mu, law, scale })
    }

    /// One-dimensional convenience constructor.
    pub fn scalar(mu: f64, law: SymmetricLaw, scale: f64) -> Result<Self> {
        Self::new(vec![mu], law, vec![scale])
    }

    /// Dimension of the model.
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// One gradient draw `mu + zeta` from the model.
pub fn sample_symmetric(model: &SymmetricNoiseModel, rng: &mut Rng) -> Vec<f64> {
    model
        .mu
        .iter()
        .zip(&model.scale)
        .map(|(&mu, &scale)| {
            let zeta = match model.law {
                SymmetricLaw::Gaussian => scale * rng.standard_normal(),
                SymmetricLaw::Uniform => rng.uniform_in(-scale, scale),
                SymmetricLaw::Rademacher => scale * rng.rademacher(),
            };
            mu + zeta
        })
        .collect()
}

/// Noise law for [`HighSnrOracle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HighSnrLaw {
    /// Gaussian with std `min(sigma, delta * |grad| / 3)`, redrawn until it
    /// lands inside `[-delta * |grad|, delta * |grad|]`. Rejection is
    /// symmetric, so the truncated draw stays mean-zero.
    TruncatedGaussian,
    /// Uniform on `[-b, b]` with `b = min(delta * |grad|, sqrt(3) * sigma)`,
    /// keeping the second moment at or below `sigma^2`.
    ScaledUniform,
    /// Exact gradients.
    Zero,
}

impl std::fmt::Display for HighSnrLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            HighSnrLaw::TruncatedGaussian => "truncated-gaussian",
            HighSnrLaw::ScaledUniform => "scaled-uniform",
            HighSnrLaw::Zero => "zero",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for HighSnrLaw {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "truncated-gaussian" => Ok(HighSnrLaw::TruncatedGaussian),
            "scaled-uniform" => Ok(HighSnrLaw::ScaledUniform),
            "zero" => Ok(HighSnrLaw::Zero),
            other => Err(format!("unknown high-snr noise law `{other}`")),
        }
    }
}

/// Stochastic first-order oracle for `F(x) = (curvature / 2) * |x|^2` whose
/// noise never flips a gradient sign: every draw satisfies
/// `|noise_i| <= delta * |grad_i|` with `delta < 1`, and the per-coordinate
/// second moment stays at or below `sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighSnrOracle {
    /// Quadratic curvature `L > 0`.
    pub curvature: f64,
    /// Relative noise cap, `0 <= delta < 1`.
    pub delta: f64,
    /// Second-moment cap; any positive value or infinity.
    pub sigma: f64,
    /// Noise law.
    pub law: HighSnrLaw,
}

impl HighSnrOracle {
    /// Validates the oracle constants.
    pub fn new(curvature: f64, delta: f64, sigma: f64, law: HighSnrLaw) -> Result<Self> {
        if !curvature.is_finite() || curvature <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "curvature must be finite and > 0, got {curvature}"
            )));
        }
        if !delta.is_finite() || !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidConfig(format!(
                "delta must lie in [0, 1), got {delta}"
            )));
        }
        if sigma.is_nan() || sigma < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "sigma must be >= 0, got {sigma}"
            )));
        }
        Ok(Self {
            curvature,
            delta,
            sigma,
            law,
        })
    }

    /// Objective value `(curvature / 2) * |x|^2`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * self.curvature * x.iter().map(|v| v * v).sum::<f64>()
    }

    /// Exact gradient `curvature * x`.
    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| self.curvature * v).collect()
    }
}

/// One noisy gradient draw from the oracle at `x`.
pub fn sample_high_snr(oracle: &HighSnrOracle, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("high-snr sample point"));
    }
    Ok(x.iter()
        .map(|&xi| {
            let grad = oracle.curvature * xi;
            let cap = oracle.delta * grad.abs();
            let noise = match oracle.law {
                HighSnrLaw::Zero => 0.0,
                HighSnrLaw::ScaledUniform => {
                    let half = cap.min(3.0_f64.sqrt() * oracle.sigma);
                    rng.uniform_in(-half, half)
                }
                HighSnrLaw::TruncatedGaussian => {
                    let sd = oracle.sigma.min(cap / 3.0);
                    if sd == 0.0 {
                        0.0
                    } else {
                        loop {
                            let z = sd * rng.standard_normal();
                            if z.abs() <= cap {
                                break z;
                            }
                        }
                    }
                }
            };
            grad + noise
        })
        .collect())
}
