//! Randomized properties of the step kernel: the two design axes stay
//! isolated, the gradient-independent update bounds hold along arbitrary
//! streams, normalization ignores gradient scale, and optimizer state
//! invariants survive random inputs.

use mvngrad_core::experiments::{run_spike, BOUND_REL_SLACK};
use mvngrad_core::optim::{self, update_bound};
use mvngrad_core::oracles::SpikeModel;
use mvngrad_core::{DecayMode, HyperParams, OptimizerKind, OptimizerState, Rng, StepOutput};
use proptest::prelude::*;

/// Log-uniform magnitudes of either sign over the given decade range,
/// bounded away from zero so second-moment denominators never vanish.
fn signed_magnitude(decades: std::ops::Range<f64>) -> impl Strategy<Value = f64> {
    (any::<bool>(), decades).prop_map(|(neg, e)| {
        let x = 10f64.powf(e);
        if neg {
            -x
        } else {
            x
        }
    })
}

fn do_step(
    state: &OptimizerState,
    params: &[f64],
    grad: &[f64],
    hp: &HyperParams,
    kind: OptimizerKind,
    corrected: bool,
) -> (OptimizerState, StepOutput) {
    let res = if corrected {
        optim::step(state, params, grad, hp, kind)
    } else {
        optim::step_uncorrected(state, params, grad, hp, kind)
    };
    res.expect("step with a positive denominator guard cannot fail on finite inputs")
}

proptest! {
    /// With beta1 = 0 both momentum applications are the identity, so the
    /// update order must not matter: Adam collapses onto LaProp and
    /// AdaBelief onto MVN-Grad, bitwise, along any gradient stream.
    #[test]
    fn beta1_zero_collapses_the_order_axis(
        grads in prop::collection::vec(signed_magnitude(-6.0..6.0), 1..50),
        beta2 in 0.0..0.9999f64,
        eps in 1e-12..1e-2f64,
        eps_s in prop_oneof![Just(0.0), 1e-14..1e-6f64],
        corrected in any::<bool>(),
    ) {
        let hp = HyperParams::new(1e-3, 0.0, beta2, eps, eps_s, 0.0, DecayMode::None).unwrap();
        let pairs = [
            (OptimizerKind::adam(), OptimizerKind::laprop()),
            (OptimizerKind::adabelief(), OptimizerKind::mvn_grad()),
        ];
        for (pre, post) in pairs {
            let mut sa = OptimizerState::new(1, 0.0).unwrap();
            let mut sb = OptimizerState::new(1, 0.0).unwrap();
            let mut pa = vec![0.5];
            let mut pb = vec![0.5];
            for &g in &grads {
                let (na, oa) = do_step(&sa, &pa, &[g], &hp, pre, corrected);
                let (nb, ob) = do_step(&sb, &pb, &[g], &hp, post, corrected);
                prop_assert_eq!(&oa.delta, &ob.delta);
                prop_assert_eq!(&oa.new_params, &ob.new_params);
                sa = na;
                sb = nb;
                pa = oa.new_params;
                pb = ob.new_params;
            }
        }
    }

}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Every Adam delta, corrected or raw, stays under the
    /// gradient-independent bound whenever beta2 > beta1^2, for random
    /// finite gradient sequences spanning twelve decades.
    #[test]
    fn adam_deltas_respect_the_gradient_independent_bound(
        grads in prop::collection::vec(signed_magnitude(-6.0..6.0), 1..120),
        beta1 in 0.0..0.99f64,
        margin in 0.02..0.98f64,
        r_init in prop_oneof![Just(0.0), 1e-10..4.0f64],
        eps in prop_oneof![Just(0.0), 1e-10..1e-2f64],
        eps_s in prop_oneof![Just(0.0), 1e-12..1e-6f64],
        corrected in any::<bool>(),
    ) {
        let beta2 = beta1 * beta1 + margin * (1.0 - beta1 * beta1);
        let hp = HyperParams::new(1e-3, beta1, beta2, eps, eps_s, 0.0, DecayMode::None).unwrap();
        let bound = update_bound(OptimizerKind::adam(), &hp, 0.0, 1.0)
            .unwrap()
            .expect("beta2 > beta1^2 guarantees the Adam bound exists");
        let mut state = OptimizerState::new(1, r_init).unwrap();
        let mut params = vec![0.0];
        for &g in &grads {
            let (next, out) = do_step(&state, &params, &[g], &hp, OptimizerKind::adam(), corrected);
            prop_assert!(
                out.delta[0].abs() <= bound + 1e-12,
                "delta {} exceeds bound {} at t {}",
                out.delta[0],
                bound,
                next.t,
            );
            state = next;
            params = out.new_params;
        }
    }
}

proptest! {
    /// Rescaling the gradient stream by a power of two (and the normalizer
    /// warm start by its square) leaves every delta bitwise unchanged for
    /// all four kinds: binary scaling commutes exactly with rounding, and
    /// with both guards at zero the update is scale-free.
    #[test]
    fn binary_gradient_rescaling_leaves_deltas_bitwise_unchanged(
        grads in prop::collection::vec(signed_magnitude(-3.0..3.0), 1..40),
        k in -40i32..41,
        kind_idx in 0usize..4,
        beta1 in 0.0..0.99f64,
        beta2 in 0.1..0.9999f64,
        r_init in 1e-6..2.0f64,
        corrected in any::<bool>(),
    ) {
        let c = 2.0f64.powi(k);
        let kind = OptimizerKind::ALL[kind_idx];
        let hp = HyperParams::new(1e-3, beta1, beta2, 0.0, 0.0, 0.0, DecayMode::None).unwrap();
        let mut sa = OptimizerState::new(1, r_init).unwrap();
        let mut sb = OptimizerState::new(1, r_init * c * c).unwrap();
        let params = vec![0.25];
        for &g in &grads {
            let (na, oa) = do_step(&sa, &params, &[g], &hp, kind, corrected);
            let (nb, ob) = do_step(&sb, &params, &[c * g], &hp, kind, corrected);
            prop_assert_eq!(&oa.delta, &ob.delta);
            sa = na;
            sb = nb;
        }
    }

    /// With lambda = 0 the decay mode is inert: all three modes produce
    /// identical deltas and parameter trajectories.
    #[test]
    fn zero_lambda_makes_all_decay_modes_agree(
        grads in prop::collection::vec(signed_magnitude(-3.0..3.0), 1..30),
        kind_idx in 0usize..4,
        beta1 in 0.0..0.99f64,
        beta2 in 0.0..0.9999f64,
        corrected in any::<bool>(),
    ) {
        let kind = OptimizerKind::ALL[kind_idx];
        let modes = [DecayMode::None, DecayMode::Coupled, DecayMode::Decoupled];
        let hps: Vec<HyperParams> = modes
            .into_iter()
            .map(|d| HyperParams::new(1e-2, beta1, beta2, 1e-8, 0.0, 0.0, d).unwrap())
            .collect();
        let mut states = vec![OptimizerState::new(1, 0.0).unwrap(); 3];
        let mut params = vec![vec![0.7]; 3];
        for &g in &grads {
            let mut deltas = Vec::with_capacity(3);
            for i in 0..3 {
                let (next, out) = do_step(&states[i], &params[i], &[g], &hps[i], kind, corrected);
                states[i] = next;
                params[i] = out.new_params;
                deltas.push(out.delta);
            }
            prop_assert_eq!(&deltas[0], &deltas[1]);
            prop_assert_eq!(&deltas[0], &deltas[2]);
            prop_assert_eq!(&params[0], &params[1]);
            prop_assert_eq!(&params[0], &params[2]);
        }
    }

    /// Along any stream: t advances by one per step, the normalizer stays
    /// nonnegative, the u buffer stays zero under momentum-then-normalize,
    /// and repeating a step from the same state reproduces it bitwise.
    #[test]
    fn state_invariants_hold_along_random_streams(
        grads in prop::collection::vec(signed_magnitude(-4.0..4.0), 1..50),
        kind_idx in 0usize..4,
        beta1 in 0.0..0.99f64,
        beta2 in 0.0..0.9999f64,
        eps_s in prop_oneof![Just(0.0), 1e-12..1e-6f64],
        r_init in 0.0..3.0f64,
        corrected in any::<bool>(),
    ) {
        let kind = OptimizerKind::ALL[kind_idx];
        let momentum_first = kind == OptimizerKind::adam() || kind == OptimizerKind::adabelief();
        let hp = HyperParams::new(1e-3, beta1, beta2, 1e-9, eps_s, 0.0, DecayMode::None).unwrap();
        let mut state = OptimizerState::new(2, r_init).unwrap();
        let mut params = vec![0.3, -0.4];
        for (i, &g) in grads.iter().enumerate() {
            let grad = [g, -g];
            let (next, out) = do_step(&state, &params, &grad, &hp, kind, corrected);
            let (next2, out2) = do_step(&state, &params, &grad, &hp, kind, corrected);
            prop_assert_eq!(&out.delta, &out2.delta);
            prop_assert_eq!(&next.r, &next2.r);
            prop_assert_eq!(next.t, i as u64 + 1);
            prop_assert!(next.r.iter().all(|&r| r >= 0.0));
            if momentum_first {
                prop_assert_eq!(&next.u, &vec![0.0, 0.0]);
            }
            state = next;
            params = out.new_params;
        }
    }

    /// Raw LaProp and MVN-Grad runs through the spike stream never exceed
    /// their analytic magnitude-independent peak bounds.
    #[test]
    fn spike_peaks_stay_under_the_normalize_first_bounds(
        log_m in 0.0..5.0f64,
        baseline in signed_magnitude(-3.0..0.0),
        d_bar in 1e-2..10.0f64,
        beta1 in 0.05..0.99f64,
        beta2 in 0.3..0.9999f64,
        log_eps in -8.0..-3.0f64,
    ) {
        let model = SpikeModel::new(10f64.powf(log_m), baseline, d_bar, 120).unwrap();
        let hp = HyperParams::basic(1e-3, beta1, beta2, 10f64.powf(log_eps)).unwrap();
        for kind in [OptimizerKind::laprop(), OptimizerKind::mvn_grad()] {
            let res = run_spike(&model, &hp, kind, false, false).unwrap();
            let bound = res
                .analytic_bound
                .expect("normalize-first kinds always have a bound when eps > 0");
            prop_assert!(
                res.peak_update <= bound * (1.0 + BOUND_REL_SLACK),
                "{} peak {} exceeds bound {}",
                kind,
                res.peak_update,
                bound,
            );
            prop_assert_eq!(res.bound_ok, Some(true));
        }
    }
}

/// Scaling a gradient stream by 3 while both guards are zero leaves the
/// delta trajectory unchanged to relative 1e-12 for every kind; the update
/// depends on the gradient only through scale-free ratios.
#[test]
fn gradient_rescaling_by_three_preserves_deltas_without_guards() {
    let hp = HyperParams::new(1e-3, 0.9, 0.95, 0.0, 0.0, 0.0, DecayMode::None).unwrap();
    for kind in OptimizerKind::ALL {
        let mut rng = Rng::new(4242, 7);
        let mut sa = OptimizerState::new(1, 0.0).unwrap();
        let mut sb = OptimizerState::new(1, 0.0).unwrap();
        let mut pa = vec![0.0];
        let mut pb = vec![0.0];
        for t in 0..500 {
            let g = 1.0 + 0.3 * rng.standard_normal();
            let (na, oa) = optim::step(&sa, &pa, &[g], &hp, kind).unwrap();
            let (nb, ob) = optim::step(&sb, &pb, &[3.0 * g], &hp, kind).unwrap();
            let (da, db) = (oa.delta[0], ob.delta[0]);
            let rel = (da - db).abs() / da.abs().max(db.abs());
            assert!(
                rel <= 1e-12,
                "kind {kind} step {t}: {da} vs {db}, rel {rel}"
            );
            sa = na;
            sb = nb;
            pa = oa.new_params;
            pb = ob.new_params;
        }
    }
}
