//! Conditional variance gap between AdaBelief and MVN-Grad.
//!
//! Both kinds share the variance normalizer `s`. Frozen at a common state
//! `(m_prev, s_prev, u_prev)` and fed one fresh gradient `g`, their raw
//! one-step updates are
//!
//! ```text
//! s        = beta2 * s_prev + (1 - beta2) * beta1^2 * (g - m_prev)^2 + eps_s
//! ab_delta = (beta1 * m_prev + (1 - beta1) * g) / (sqrt(s) + eps)
//! mv_delta = beta1 * u_prev + (1 - beta1) * g / (sqrt(s) + eps)
//! ```
//!
//! When the frozen mean tracks the gradient mean and the noise is
//! symmetric, the conditional variances differ by exactly
//! `(2*beta1 - beta1^2) * m_prev^2 * Var(1 / (sqrt(s) + eps))`: momentum
//! applied before normalization rides on the random denominator, momentum
//! applied after does not.

use crate::error::{Error, Result};
use crate::optim::HyperParams;
use crate::oracles::{sample_symmetric, SymmetricNoiseModel};
use crate::rng::Rng;

/// Smallest inner sample for the analytic-side estimate.
pub const MIN_INNER_SAMPLES: usize = 1000;

/// Monte Carlo estimate of the variance gap at one frozen state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VGapResult {
    /// Frozen first moment the estimate was taken at (RMS over coordinates
    /// for multi-parameter states).
    pub m_prev: f64,
    /// Sample-variance difference `var(ab_delta) - var(mv_delta)`.
    pub mc_gap: f64,
    /// Jackknife standard error of `mc_gap` over the `k` draws.
    pub mc_stderr: f64,
    /// Analytic gap `(2*beta1 - beta1^2) * m_prev^2 * Var(1/(sqrt(s)+eps))`,
    /// with the variance term estimated on an independent inner sample.
    pub closed_form_gap: f64,
    /// Number of Monte Carlo draws.
    pub k: usize,
}

fn require_scalar(noise: &SymmetricNoiseModel) -> Result<()> {
    if noise.dim() != 1 {
        return Err(Error::DimensionMismatch {
            context: "vgap noise model",
            expected: 1,
            got: noise.dim(),
        });
    }
    Ok(())
}

fn one_step_denominator(g: f64, m_prev: f64, s_prev: f64, hp: &HyperParams) -> f64 {
    let dev = g - m_prev;
    let s = hp.beta2 * s_prev + (1.0 - hp.beta2) * hp.beta1 * hp.beta1 * dev * dev + hp.eps_s;
    s.sqrt() + hp.eps
}

/// Analytic side of the gap identity, with `Var(1/(sqrt(s)+eps))` estimated
/// from `n_inner` fresh draws (`n_inner >= 1000`).
pub fn vgap_closed_form(
    m_prev: f64,
    s_prev: f64,
    noise: &SymmetricNoiseModel,
    hp: &HyperParams,
    rng: &mut Rng,
    n_inner: usize,
) -> Result<f64> {
    require_scalar(noise)?;
    if n_inner < MIN_INNER_SAMPLES {
        return Err(Error::InvalidConfig(format!(
            "vgap_closed_form needs n_inner >= {MIN_INNER_SAMPLES}, got {n_inner}"
        )));
    }
    if !m_prev.is_finite() || !s_prev.is_finite() || s_prev < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "vgap frozen state must be finite with s_prev >= 0 (m_prev {m_prev}, s_prev {s_prev})"
        )));
    }
    let ys: Vec<f64> = (0..n_inner)
        .map(|_| {
            let g = sample_symmetric(noise, rng)[0];
            1.0 / one_step_denominator(g, m_prev, s_prev, hp)
        })
        .collect();
    let var_y = sample_variance(&ys);
    Ok((2.0 * hp.beta1 - hp.beta1 * hp.beta1) * m_prev * m_prev * var_y)
}

/// Unbiased sample variance (denominator `n - 1`), two-pass. A constant
/// sample short-circuits to exactly zero; the computed mean of `n` equal
/// values can round away from them, which would otherwise leak rounding
/// noise into a variance that is zero by construction.
fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 || xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
}

/// Monte Carlo estimate of the gap from `k >= 2` gradient draws, with a
/// jackknife standard error and the analytic reference alongside.
///
/// The analytic side draws its own, larger inner sample (clamped to
/// `[1000, 2_000_000]`, ten draws per Monte Carlo draw) from the same
/// generator so its estimation noise is subdominant to `mc_stderr`.
pub fn vgap_monte_carlo(
    m_prev: f64,
    s_prev: f64,
    u_prev: f64,
    noise: &SymmetricNoiseModel,
    hp: &HyperParams,
    rng: &mut Rng,
    k: usize,
) -> Result<VGapResult> {
    require_scalar(noise)?;
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "vgap_monte_carlo needs k >= 2, got {k}"
        )));
    }
    if !u_prev.is_finite() {
        return Err(Error::NonFinite("vgap u_prev"));
    }

    let mut ab = Vec::with_capacity(k);
    let mut mv = Vec::with_capacity(k);
    for _ in 0..k {
        let g = sample_symmetric(noise, rng)[0];
        let denom = one_step_denominator(g, m_prev, s_prev, hp);
        ab.push((hp.beta1 * m_prev + (1.0 - hp.beta1) * g) / denom);
        mv.push(hp.beta1 * u_prev + (1.0 - hp.beta1) * g / denom);
    }

    let mc_gap = sample_variance(&ab) - sample_variance(&mv);
    let mc_stderr = jackknife_stderr_of_variance_difference(&ab, &mv);

    let n_inner = (10 * k).clamp(MIN_INNER_SAMPLES, 2_000_000);
    let closed_form_gap = vgap_closed_form(m_prev, s_prev, noise, hp, rng, n_inner)?;

    Ok(VGapResult {
        m_prev,
        mc_gap,
        mc_stderr,
        closed_form_gap,
        k,
    })
}

/// Jackknife standard error of `var(a) - var(b)` over paired samples.
///
/// Each leave-one-out replicate removes one paired draw; the replicate
/// variance follows from the rank-one downdate of the centered sum of
/// squares. With `k = 2` a single remaining point has no spread, so the
/// replicates are pinned to zero and the stderr degenerates to zero while
/// staying finite.
pub(crate) fn jackknife_stderr_of_variance_difference(a: &[f64], b: &[f64]) -> f64 {
    let k = a.len();
    debug_assert_eq!(k, b.len());
    if k < 3 {
        return 0.0;
    }
    let kf = k as f64;
    let mean_a = a.iter().sum::<f64>() / kf;
    let mean_b = b.iter().sum::<f64>() / kf;
    let m2_a: f64 = a.iter().map(|x| (x - mean_a) * (x - mean_a)).sum();
    let m2_b: f64 = b.iter().map(|x| (x - mean_b) * (x - mean_b)).sum();

    let loo = |m2: f64, dev: f64| (m2 - kf / (kf - 1.0) * dev * dev) / (kf - 2.0);
    let thetas: Vec<f64> = (0..k)
        .map(|i| loo(m2_a, a[i] - mean_a) - loo(m2_b, b[i] - mean_b))
        .collect();
    let theta_bar = thetas.iter().sum::<f64>() / kf;
    let ss: f64 = thetas
        .iter()
        .map(|t| (t - theta_bar) * (t - theta_bar))
        .sum();
    ((kf - 1.0) / kf * ss).sqrt()
}
