//! Shared step kernel for the Adam-family 2x2 design space.
//!
//! A step is determined by two independent choices: where momentum is
//! applied ([`UpdateOrder`]) and what statistic normalizes the update
//! ([`Normalizer`]). All four combinations run through one kernel so that
//! any behavioural difference between, say, Adam and MVN-Grad is exactly
//! the difference along those two axes and nothing else.
//!
//! All arithmetic is `f64`. The kernel is a pure state transition:
//! identical inputs produce bit-identical outputs.

use crate::error::{Error, Result};

/// How weight decay enters the step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayMode {
    /// No decay; `lambda` is ignored.
    None,
    /// `lambda * params` is added to the gradient before any moment update.
    Coupled,
    /// `eta * lambda * params` is subtracted from the parameters after the
    /// adaptive update, leaving the moments untouched.
    Decoupled,
}

impl std::fmt::Display for DecayMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            DecayMode::None => "none",
            DecayMode::Coupled => "coupled",
            DecayMode::Decoupled => "decoupled",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for DecayMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(DecayMode::None),
            "coupled" => Ok(DecayMode::Coupled),
            "decoupled" => Ok(DecayMode::Decoupled),
            other => Err(format!("unknown decay mode `{other}`")),
        }
    }
}

/// Where momentum sits relative to normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateOrder {
    /// Accumulate momentum on raw gradients, then normalize the momentum
    /// (Adam, AdaBelief).
    MomentumThenNormalize,
    /// Normalize the raw gradient, then accumulate momentum on the
    /// normalized values (LaProp, MVN-Grad).
    NormalizeThenMomentum,
}

/// Statistic accumulated in the normalizer buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Normalizer {
    /// Exponential moving average of `g^2` (Adam, LaProp).
    SecondMoment,
    /// Exponential moving average of `(g - m)^2` with the freshly updated
    /// mean `m` (AdaBelief, MVN-Grad).
    Variance,
}

/// One corner of the 2x2 design space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OptimizerKind {
    pub order: UpdateOrder,
    pub normalizer: Normalizer,
}

impl OptimizerKind {
    /// Momentum then normalize, second-moment normalizer.
    pub const fn adam() -> Self {
        Self {
            order: UpdateOrder::MomentumThenNormalize,
            normalizer: Normalizer::SecondMoment,
        }
    }

    /// Momentum then normalize, variance normalizer.
    pub const fn adabelief() -> Self {
        Self {
            order: UpdateOrder::MomentumThenNormalize,
            normalizer: Normalizer::Variance,
        }
    }

    /// Normalize then momentum, second-moment normalizer.
    pub const fn laprop() -> Self {
        Self {
            order: UpdateOrder::NormalizeThenMomentum,
            normalizer: Normalizer::SecondMoment,
        }
    }

    /// Normalize then momentum, variance normalizer.
    pub const fn mvn_grad() -> Self {
        Self {
            order: UpdateOrder::NormalizeThenMomentum,
            normalizer: Normalizer::Variance,
        }
    }

    /// All four corners in a fixed display order.
    pub const ALL: [OptimizerKind; 4] = [
        Self::adam(),
        Self::adabelief(),
        Self::laprop(),
        Self::mvn_grad(),
    ];

    /// Canonical lowercase name; round-trips through [`std::str::FromStr`].
    pub fn name(&self) -> &'static str {
        match (self.order, self.normalizer) {
            (UpdateOrder::MomentumThenNormalize, Normalizer::SecondMoment) => "adam",
            (UpdateOrder::MomentumThenNormalize, Normalizer::Variance) => "adabelief",
            (UpdateOrder::NormalizeThenMomentum, Normalizer::SecondMoment) => "laprop",
            (UpdateOrder::NormalizeThenMomentum, Normalizer::Variance) => "mvngrad",
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "adam" => Ok(Self::adam()),
            "adabelief" => Ok(Self::adabelief()),
            "laprop" => Ok(Self::laprop()),
            "mvngrad" | "mvn-grad" => Ok(Self::mvn_grad()),
            other => Err(format!("unknown optimizer kind `{other}`")),
        }
    }
}

/// Step-size, smoothing, and decay constants shared by all four kinds.
///
/// A single `beta1` drives both the pre-normalization mean estimate and the
/// post-normalization momentum buffer; the two roles could in principle use
/// separate rates, but this implementation keeps them tied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    /// Learning rate `eta > 0`.
    pub eta: f64,
    /// First-moment smoothing, `0 <= beta1 < 1`.
    pub beta1: f64,
    /// Normalizer smoothing, `0 <= beta2 < 1`.
    pub beta2: f64,
    /// Denominator offset added outside the square root, `eps >= 0`.
    pub eps: f64,
    /// Floor added inside the normalizer accumulator each step, `eps_s >= 0`.
    pub eps_s: f64,
    /// Weight-decay coefficient, `lambda >= 0`.
    pub lambda: f64,
    /// How `lambda` enters the step.
    pub decay: DecayMode,
}

impl HyperParams {
    /// Validates and builds the full parameter set.
    pub fn new(
        eta: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        eps_s: f64,
        lambda: f64,
        decay: DecayMode,
    ) -> Result<Self> {
        let hp = Self {
            eta,
            beta1,
            beta2,
            eps,
            eps_s,
            lambda,
            decay,
        };
        hp.validate()?;
        Ok(hp)
    }

    /// Common case: no accumulator floor and no weight decay.
    pub fn basic(eta: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        Self::new(eta, beta1, beta2, eps, 0.0, 0.0, DecayMode::None)
    }

    fn validate(&self) -> Result<()> {
        let check = |name: &'static str, value: f64, ok: bool, reason: &'static str| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidHyperParam {
                    name,
                    value,
                    reason,
                })
            }
        };
        check("eta", self.eta, self.eta > 0.0, "must be > 0")?;
        check(
            "beta1",
            self.beta1,
            (0.0..1.0).contains(&self.beta1),
            "must lie in [0, 1)",
        )?;
        check(
            "beta2",
            self.beta2,
            (0.0..1.0).contains(&self.beta2),
            "must lie in [0, 1)",
        )?;
        check("eps", self.eps, self.eps >= 0.0, "must be >= 0")?;
        check("eps_s", self.eps_s, self.eps_s >= 0.0, "must be >= 0")?;
        check("lambda", self.lambda, self.lambda >= 0.0, "must be >= 0")?;
        Ok(())
    }

    /// True when both denominator guards are zero. Construction still
    /// succeeds, but runs should surface this in their configuration echo.
    pub fn unprotected(&self) -> bool {
        self.eps == 0.0 && self.eps_s == 0.0
    }
}

/// Per-coordinate optimizer buffers plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    /// Number of completed steps.
    pub t: u64,
    /// First-moment estimate (EMA of gradients).
    pub m: Vec<f64>,
    /// Normalizer accumulator (second moment or centered variance).
    pub r: Vec<f64>,
    /// Post-normalization momentum; stays exactly zero under
    /// [`UpdateOrder::MomentumThenNormalize`].
    pub u: Vec<f64>,
}

impl OptimizerState {
    /// Fresh state with `m = u = 0` and every `r` coordinate at `r_init`.
    pub fn new(dim: usize, r_init: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig(
                "state dimension must be at least 1".into(),
            ));
        }
        if !r_init.is_finite() {
            return Err(Error::NonFinite("r_init"));
        }
        Ok(Self {
            t: 0,
            m: vec![0.0; dim],
            r: vec![r_init; dim],
            u: vec![0.0; dim],
        })
    }

    /// Buffer length shared by `m`, `r`, and `u`.
    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

/// Update direction and the parameters after applying it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Normalized update; the parameter change is `-eta * delta` plus the
    /// decoupled decay term when enabled.
    pub delta: Vec<f64>,
    /// `params - eta * delta (- eta * lambda * params when decoupled)`.
    pub new_params: Vec<f64>,
}

/// One bias-corrected step; see [`step_uncorrected`] for the raw variant.
pub fn step(
    state: &OptimizerState,
    params: &[f64],
    grad: &[f64],
    hp: &HyperParams,
    kind: OptimizerKind,
) -> Result<(OptimizerState, StepOutput)> {
    step_inner(state, params, grad, hp, kind, true)
}

/// One step with the bias-correction factors pinned to 1.
///
/// The spike and variance-gap experiments study the raw recursions, whose
/// closed forms have no correction factors; this entry point runs exactly
/// those recursions.
pub fn step_uncorrected(
    state: &OptimizerState,
    params: &[f64],
    grad: &[f64],
    hp: &HyperParams,
    kind: OptimizerKind,
) -> Result<(OptimizerState, StepOutput)> {
    step_inner(state, params, grad, hp, kind, false)
}

fn step_inner(
    state: &OptimizerState,
    params: &[f64],
    grad: &[f64],
    hp: &HyperParams,
    kind: OptimizerKind,
    bias_correction: bool,
) -> Result<(OptimizerState, StepOutput)> {
    hp.validate()?;
    let dim = state.dim();
    if params.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "step params",
            expected: dim,
            got: params.len(),
        });
    }
    if grad.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "step grad",
            expected: dim,
            got: grad.len(),
        });
    }
    if params.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("step params"));
    }
    if grad.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("step grad"));
    }

    let t_next = state.t + 1;
    let (c_m, c_v) = if bias_correction {
        (
            1.0 - pow_u64(hp.beta1, t_next),
            1.0 - pow_u64(hp.beta2, t_next),
        )
    } else {
        (1.0, 1.0)
    };

    let mut m_next = vec![0.0; dim];
    let mut r_next = vec![0.0; dim];
    let mut u_next = vec![0.0; dim];
    let mut delta = vec![0.0; dim];
    let mut new_params = vec![0.0; dim];

    for i in 0..dim {
        let g = if hp.decay == DecayMode::Coupled {
            grad[i] + hp.lambda * params[i]
        } else {
            grad[i]
        };

        let m = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        let centered = match kind.normalizer {
            Normalizer::SecondMoment => g * g,
            Normalizer::Variance => {
                let dev = g - m;
                dev * dev
            }
        };
        let r = hp.beta2 * state.r[i] + (1.0 - hp.beta2) * centered + hp.eps_s;

        let denom = (r / c_v).sqrt() + hp.eps;
        if denom == 0.0 {
            return Err(Error::ZeroDenominator);
        }

        let (d, u) = match kind.order {
            UpdateOrder::MomentumThenNormalize => ((m / c_m) / denom, state.u[i]),
            UpdateOrder::NormalizeThenMomentum => {
                let z = g / denom;
                let u = hp.beta1 * state.u[i] + (1.0 - hp.beta1) * z;
                (u / c_m, u)
            }
        };

        m_next[i] = m;
        r_next[i] = r;
        u_next[i] = u;
        delta[i] = d;
        new_params[i] = if hp.decay == DecayMode::Decoupled {
            params[i] - hp.eta * d - hp.eta * hp.lambda * params[i]
        } else {
            params[i] - hp.eta * d
        };
    }

    Ok((
        OptimizerState {
            t: t_next,
            m: m_next,
            r: r_next,
            u: u_next,
        },
        StepOutput { delta, new_params },
    ))
}

/// `beta^t` as a deterministic multiply chain; saturates for huge `t`,
/// where the power has long since underflowed for any `beta < 1`.
fn pow_u64(beta: f64, t: u64) -> f64 {
    beta.powi(t.min(i32::MAX as u64) as i32)
}

/// Gradient-independent peak bound for `|delta|` under the single-spike
/// gradient model with baseline magnitude `u_mag` and normalizer warm
/// start `r_init > 0`.
///
/// Returns `None` where no gradient-independent bound exists: always for
/// AdaBelief, and for Adam when `beta2 <= beta1^2`. The LaProp and
/// MVN-Grad bounds contain a `u_mag / eps` term, so they require
/// `eps > 0` whenever `u_mag > 0`.
pub fn update_bound(
    kind: OptimizerKind,
    hp: &HyperParams,
    u_mag: f64,
    r_init: f64,
) -> Result<Option<f64>> {
    hp.validate()?;
    if !u_mag.is_finite() || u_mag < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "u_mag must be finite and >= 0, got {u_mag}"
        )));
    }
    if !r_init.is_finite() || r_init <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "r_init must be finite and > 0, got {r_init}"
        )));
    }

    let tail = |hp: &HyperParams| -> Result<f64> {
        if u_mag == 0.0 {
            Ok(0.0)
        } else if hp.eps == 0.0 {
            Err(Error::BoundRequiresEps)
        } else {
            Ok(u_mag / hp.eps)
        }
    };

    match (kind.order, kind.normalizer) {
        (UpdateOrder::MomentumThenNormalize, Normalizer::SecondMoment) => {
            if hp.beta2 > hp.beta1 * hp.beta1 {
                let bound = (1.0 - hp.beta1)
                    / (1.0 - hp.beta2).sqrt()
                    / (1.0 - hp.beta1 * hp.beta1 / hp.beta2).sqrt();
                Ok(Some(bound))
            } else {
                Ok(None)
            }
        }
        (UpdateOrder::MomentumThenNormalize, Normalizer::Variance) => Ok(None),
        (UpdateOrder::NormalizeThenMomentum, Normalizer::SecondMoment) => {
            let spike_term = 1.0 / (1.0 - hp.beta2).sqrt();
            Ok(Some(spike_term.max(tail(hp)?)))
        }
        (UpdateOrder::NormalizeThenMomentum, Normalizer::Variance) => {
            let spike_term = 1.0 / (hp.beta1 * (1.0 - hp.beta2).sqrt());
            Ok(Some(spike_term.max(tail(hp)?)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(eta: f64, beta1: f64, beta2: f64, eps: f64) -> HyperParams {
        HyperParams::basic(eta, beta1, beta2, eps).unwrap()
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in OptimizerKind::ALL {
            let parsed: OptimizerKind = kind.name().parse().unwrap();
            assert_eq!(parsed, kind);
        }
        assert!("adamw".parse::<OptimizerKind>().is_err());
    }

    #[test]
    fn hyperparam_validation_rejects_out_of_range() {
        assert!(HyperParams::basic(0.0, 0.9, 0.99, 1e-8).is_err());
        assert!(HyperParams::basic(1e-3, 1.0, 0.99, 1e-8).is_err());
        assert!(HyperParams::basic(1e-3, -0.1, 0.99, 1e-8).is_err());
        assert!(HyperParams::basic(1e-3, 0.9, 1.0, 1e-8).is_err());
        assert!(HyperParams::basic(1e-3, 0.9, 0.99, -1e-8).is_err());
        assert!(HyperParams::new(1e-3, 0.9, 0.99, 1e-8, -1.0, 0.0, DecayMode::None).is_err());
        assert!(HyperParams::new(1e-3, 0.9, 0.99, 1e-8, 0.0, -0.1, DecayMode::None).is_err());
        assert!(HyperParams::basic(f64::NAN, 0.9, 0.99, 1e-8).is_err());
    }

    #[test]
    fn unprotected_flag_only_when_both_guards_are_zero() {
        assert!(hp(1e-3, 0.9, 0.99, 0.0).unprotected());
        assert!(!hp(1e-3, 0.9, 0.99, 1e-8).unprotected());
        let floored = HyperParams::new(1e-3, 0.9, 0.99, 0.0, 1e-12, 0.0, DecayMode::None).unwrap();
        assert!(!floored.unprotected());
    }

    #[test]
    fn init_state_shapes_and_errors() {
        let st = OptimizerState::new(3, 0.5).unwrap();
        assert_eq!(st.t, 0);
        assert_eq!(st.m, vec![0.0; 3]);
        assert_eq!(st.r, vec![0.5; 3]);
        assert_eq!(st.u, vec![0.0; 3]);
        assert!(OptimizerState::new(0, 0.5).is_err());
        assert!(OptimizerState::new(3, f64::NAN).is_err());
    }

    // First bias-corrected Adam step from zero state: the correction factors
    // cancel the (1 - beta) weights exactly, so delta = g / |g| = 1.
    #[test]
    fn adam_first_step_is_unit_magnitude() {
        let st = OptimizerState::new(1, 0.0).unwrap();
        let hp = hp(1e-3, 0.9, 0.999, 0.0);
        let (next, out) = step(&st, &[0.0], &[2.0], &hp, OptimizerKind::adam()).unwrap();
        assert_eq!(out.delta[0], 1.0);
        assert_eq!(next.t, 1);
        assert_eq!(next.u[0], 0.0);
        assert!((next.m[0] - 0.2).abs() < 1e-15);
        assert!((next.r[0] - 0.004).abs() < 1e-15);
    }

    // First bias-corrected MVN-Grad step from zero state: the centered
    // deviation is beta1 * g, so z = 1/beta1 and delta = sign(g)/beta1.
    #[test]
    fn mvn_grad_first_step_is_inverse_beta1() {
        let st = OptimizerState::new(1, 0.0).unwrap();
        let hp = hp(1e-3, 0.9, 0.999, 0.0);
        let (next, out) = step(&st, &[0.0], &[2.0], &hp, OptimizerKind::mvn_grad()).unwrap();
        assert!((out.delta[0] - 1.0 / 0.9).abs() < 1e-12, "{}", out.delta[0]);
        assert!(next.u[0] != 0.0);

        let (_, neg) = step(&st, &[0.0], &[-2.0], &hp, OptimizerKind::mvn_grad()).unwrap();
        assert!((neg.delta[0] + 1.0 / 0.9).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_with_eps_guard_leaves_params_unchanged() {
        for kind in OptimizerKind::ALL {
            let st = OptimizerState::new(2, 0.0).unwrap();
            let hp = hp(1e-2, 0.9, 0.999, 1e-8);
            let (_, out) = step(&st, &[1.0, -2.0], &[0.0, 0.0], &hp, kind).unwrap();
            assert_eq!(out.delta, vec![0.0, 0.0], "{kind:?}");
            assert_eq!(out.new_params, vec![1.0, -2.0], "{kind:?}");
        }
    }

    #[test]
    fn zero_gradient_without_guards_is_a_zero_denominator_error() {
        let st = OptimizerState::new(1, 0.0).unwrap();
        let hp = hp(1e-2, 0.9, 0.999, 0.0);
        let err = step(&st, &[1.0], &[0.0], &hp, OptimizerKind::adam()).unwrap_err();
        assert!(matches!(err, Error::ZeroDenominator));
    }

    // Constant gradient stream: LaProp's accumulator settles at
    // c^2 + eps_s/(1-beta2), MVN-Grad's at eps_s/(1-beta2), and each delta
    // settles at c / (sqrt(accumulator) + eps).
    #[test]
    fn constant_stream_fixed_points_for_both_normalizers() {
        let c = 0.5;
        let hp = HyperParams::new(1e-3, 0.9, 0.9, 1e-8, 1e-6, 0.0, DecayMode::None).unwrap();
        let floor = hp.eps_s / (1.0 - hp.beta2);

        for (kind, r_expected) in [
            (OptimizerKind::laprop(), c * c + floor),
            (OptimizerKind::mvn_grad(), floor),
        ] {
            let mut st = OptimizerState::new(1, 0.0).unwrap();
            let mut params = vec![0.0];
            let mut last_delta = f64::NAN;
            for _ in 0..1000 {
                let (next, out) = step(&st, &params, &[c], &hp, kind).unwrap();
                st = next;
                params = out.new_params;
                last_delta = out.delta[0];
            }
            let rel_r = (st.r[0] - r_expected).abs() / r_expected;
            assert!(rel_r < 1e-9, "{kind:?} accumulator rel err {rel_r}");
            let delta_expected = c / (r_expected.sqrt() + hp.eps);
            let rel_d = (last_delta - delta_expected).abs() / delta_expected;
            assert!(rel_d < 1e-9, "{kind:?} delta rel err {rel_d}");
        }
    }

    // The accumulator floor: after t steps, r >= eps_s * (1 + beta2 + ... +
    // beta2^(t-1)). The oracle runs the identical recursion with the squared
    // term removed, so the comparison is exact in floating point.
    #[test]
    fn eps_s_floor_is_a_geometric_sum_lower_bound() {
        let hp = HyperParams::new(1e-3, 0.9, 0.95, 1e-8, 1e-7, 0.0, DecayMode::None).unwrap();
        let mut st = OptimizerState::new(1, 0.0).unwrap();
        let mut params = vec![0.3];
        let mut rng = crate::rng::Rng::new(9, 0);
        let mut floor = 0.0_f64;
        for t in 0..500 {
            let g = rng.standard_normal();
            let (next, out) = step(&st, &params, &[g], &hp, OptimizerKind::adabelief()).unwrap();
            st = next;
            params = out.new_params;
            floor = hp.beta2 * floor + hp.eps_s;
            assert!(st.r[0] >= floor, "step {t}: r {} < floor {floor}", st.r[0]);
        }
        let closed = hp.eps_s * (1.0 - pow_u64(hp.beta2, 500)) / (1.0 - hp.beta2);
        assert!((floor - closed).abs() / closed < 1e-12);
    }

    #[test]
    fn u_buffer_is_inert_under_momentum_then_normalize() {
        for kind in [OptimizerKind::adam(), OptimizerKind::adabelief()] {
            let mut st = OptimizerState::new(2, 0.0).unwrap();
            let mut params = vec![0.1, -0.4];
            let hp = hp(1e-2, 0.9, 0.99, 1e-8);
            let mut rng = crate::rng::Rng::new(4, 0);
            for _ in 0..50 {
                let g = [rng.standard_normal(), rng.standard_normal()];
                let (next, out) = step(&st, &params, &g, &hp, kind).unwrap();
                st = next;
                params = out.new_params;
                assert_eq!(st.u, vec![0.0, 0.0], "{kind:?}");
            }
        }
    }

    #[test]
    fn step_is_bit_deterministic() {
        let st = OptimizerState::new(3, 0.2).unwrap();
        let params = [0.4, -1.0, 2.5];
        let grad = [0.3, 0.7, -0.1];
        let hp =
            HyperParams::new(1e-3, 0.9, 0.99, 1e-8, 1e-10, 0.01, DecayMode::Decoupled).unwrap();
        for kind in OptimizerKind::ALL {
            let (s1, o1) = step(&st, &params, &grad, &hp, kind).unwrap();
            let (s2, o2) = step(&st, &params, &grad, &hp, kind).unwrap();
            assert_eq!(s1, s2);
            assert_eq!(o1, o2);
        }
    }

    #[test]
    fn coupled_decay_enters_the_moments() {
        let st = OptimizerState::new(1, 0.0).unwrap();
        let hp = HyperParams::new(1e-2, 0.9, 0.99, 1e-8, 0.0, 0.5, DecayMode::Coupled).unwrap();
        let (next, _) = step(&st, &[2.0], &[1.0], &hp, OptimizerKind::adam()).unwrap();
        // effective gradient 1 + 0.5 * 2 = 2
        assert!((next.m[0] - (1.0 - 0.9) * 2.0).abs() < 1e-15);
    }

    #[test]
    fn decoupled_decay_shrinks_params_but_not_moments() {
        let st = OptimizerState::new(1, 0.0).unwrap();
        let hp = HyperParams::new(1e-2, 0.9, 0.99, 1e-8, 0.0, 0.5, DecayMode::Decoupled).unwrap();
        let (next, out) = step(&st, &[2.0], &[1.0], &hp, OptimizerKind::adam()).unwrap();
        assert!((next.m[0] - (1.0 - 0.9) * 1.0).abs() < 1e-15);
        let expected = 2.0 - hp.eta * out.delta[0] - hp.eta * hp.lambda * 2.0;
        assert_eq!(out.new_params[0], expected);
    }

    #[test]
    fn dimension_and_finiteness_errors() {
        let st = OptimizerState::new(2, 0.0).unwrap();
        let hp = hp(1e-3, 0.9, 0.99, 1e-8);
        assert!(matches!(
            step(&st, &[1.0], &[1.0, 2.0], &hp, OptimizerKind::adam()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            step(&st, &[1.0, 2.0], &[1.0], &hp, OptimizerKind::adam()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            step(
                &st,
                &[1.0, f64::NAN],
                &[1.0, 2.0],
                &hp,
                OptimizerKind::adam()
            ),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            step(
                &st,
                &[1.0, 2.0],
                &[1.0, f64::INFINITY],
                &hp,
                OptimizerKind::adam()
            ),
            Err(Error::NonFinite(_))
        ));
    }

    // Frozen reference: (1-0.9)/sqrt(1-0.99) * 1/sqrt(1-0.81/0.99) = 2.3452.
    #[test]
    fn adam_bound_matches_frozen_value() {
        let hp = hp(1e-3, 0.9, 0.99, 1e-8);
        let bound = update_bound(OptimizerKind::adam(), &hp, 1e-3, 1.0)
            .unwrap()
            .unwrap();
        assert!((bound - 2.3452).abs() < 1e-4, "bound {bound}");
    }

    #[test]
    fn adam_bound_absent_when_beta2_not_above_beta1_squared() {
        let hp = hp(1e-3, 0.9, 0.6, 1e-8);
        assert_eq!(
            update_bound(OptimizerKind::adam(), &hp, 1e-3, 1.0).unwrap(),
            None
        );
        let hp_eq = hp_with_beta2(0.81);
        assert_eq!(
            update_bound(OptimizerKind::adam(), &hp_eq, 1e-3, 1.0).unwrap(),
            None
        );
    }

    fn hp_with_beta2(beta2: f64) -> HyperParams {
        HyperParams::basic(1e-3, 0.9, beta2, 1e-8).unwrap()
    }

    #[test]
    fn laprop_and_mvn_bounds_pick_the_larger_branch() {
        let hp = hp(1e-3, 0.9, 0.6, 1e-8);
        let lp = update_bound(OptimizerKind::laprop(), &hp, 1e-3, 1.0)
            .unwrap()
            .unwrap();
        assert!((lp - 1e5).abs() / 1e5 < 1e-12, "laprop bound {lp}");

        let mv = update_bound(OptimizerKind::mvn_grad(), &hp, 1e-3, 1.0)
            .unwrap()
            .unwrap();
        assert!((mv - 1e5).abs() / 1e5 < 1e-12, "mvn bound {mv}");

        // With a tiny baseline the spike branch dominates instead.
        let lp_small = update_bound(OptimizerKind::laprop(), &hp, 1e-10, 1.0)
            .unwrap()
            .unwrap();
        assert!((lp_small - 1.0 / 0.4_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn adabelief_has_no_bound() {
        let hp = hp(1e-3, 0.9, 0.99, 1e-8);
        assert_eq!(
            update_bound(OptimizerKind::adabelief(), &hp, 1e-3, 1.0).unwrap(),
            None
        );
    }

    #[test]
    fn bound_requires_eps_when_baseline_is_nonzero() {
        let hp = hp(1e-3, 0.9, 0.6, 0.0);
        let err = update_bound(OptimizerKind::laprop(), &hp, 1e-3, 1.0).unwrap_err();
        assert!(matches!(err, Error::BoundRequiresEps));
        // Zero baseline needs no eps.
        assert!(update_bound(OptimizerKind::laprop(), &hp, 0.0, 1.0)
            .unwrap()
            .is_some());
    }
}
