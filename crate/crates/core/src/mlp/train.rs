//! Seeded minibatch training and the frozen-checkpoint variance probe.
//!
//! All randomness is keyed off one run seed through disjoint streams:
//! epoch shuffles use stream `1_000_000 + epoch`, the checkpoint probe uses
//! stream `2_000_000 + checkpoint_step`, and the eval subsample uses stream
//! `3_000_000`. Records and results are therefore a pure function of the
//! call arguments.

use crate::error::{Error, Result};
use crate::optim::{step, HyperParams, OptimizerKind, OptimizerState};
use crate::rng::Rng;

use super::data::Dataset;
use super::model::MlpModel;

const EPOCH_STREAM_BASE: u64 = 1_000_000;
const PROBE_STREAM_BASE: u64 = 2_000_000;
const EVAL_STREAM: u64 = 3_000_000;
/// Eval loss uses the full dataset up to this many rows, then a fixed
/// seeded subsample of exactly this size.
const EVAL_SUBSAMPLE_MAX: usize = 10_000;

/// One optimizer step's worth of training telemetry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    /// 1-based global step counter.
    pub step: usize,
    /// 0-based epoch the step belongs to.
    pub epoch: usize,
    /// Minibatch cross-entropy before the update.
    pub batch_loss: f64,
    /// L2 norm of the flat minibatch gradient.
    pub grad_norm: f64,
    /// Post-update loss on the eval set, on the `eval_every` schedule.
    pub eval_loss: Option<f64>,
}

/// A finished training run: per-step records plus the final model and the
/// configuration echo.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub records: Vec<TrainRecord>,
    pub model: MlpModel,
    pub kind: OptimizerKind,
    pub hp: HyperParams,
    pub seed: u64,
}

/// Frozen-checkpoint estimate of the AdaBelief-minus-MVN-Grad update
/// variance, averaged over parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpVGapResult {
    /// Training step count at which the state was frozen.
    pub checkpoint_step: usize,
    /// Coordinate-averaged `var(ab_delta) - var(mv_delta)` over the draws.
    pub mc_gap: f64,
    /// Jackknife standard error of `mc_gap` over the draws.
    pub mc_stderr: f64,
    /// Minibatch draws per estimate.
    pub k: usize,
    /// Parameters averaged over.
    pub param_count: usize,
}

/// Fisher-Yates shuffle of `0..n`, a pure function of `(seed, epoch)`.
pub fn epoch_permutation(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = Rng::new(seed, EPOCH_STREAM_BASE + epoch as u64);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.index(i + 1);
        perm.swap(i, j);
    }
    perm
}

fn check_run_shape(
    dataset: &Dataset,
    model: &MlpModel,
    batch_size: usize,
    epochs: usize,
) -> Result<()> {
    if model.p != dataset.p {
        return Err(Error::DimensionMismatch {
            context: "mlp input width vs dataset features",
            expected: dataset.p,
            got: model.p,
        });
    }
    if model.k != dataset.k {
        return Err(Error::DimensionMismatch {
            context: "mlp classes vs dataset classes",
            expected: dataset.k,
            got: model.k,
        });
    }
    if batch_size == 0 || batch_size > dataset.n {
        return Err(Error::InvalidConfig(format!(
            "batch size must lie in 1..={}, got {batch_size}",
            dataset.n
        )));
    }
    if epochs == 0 {
        return Err(Error::InvalidConfig("epochs must be at least 1".into()));
    }
    Ok(())
}

fn eval_indices(seed: u64, n: usize) -> Vec<usize> {
    if n <= EVAL_SUBSAMPLE_MAX {
        return (0..n).collect();
    }
    let mut rng = Rng::new(seed, EVAL_STREAM);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..EVAL_SUBSAMPLE_MAX {
        let j = i + rng.index(n - i);
        pool.swap(i, j);
    }
    pool.truncate(EVAL_SUBSAMPLE_MAX);
    pool
}

fn l2_norm(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Trains `model` on `dataset` with one bias-corrected optimizer step per
/// minibatch (the final short batch of an epoch included), shuffling with
/// [`epoch_permutation`]. `eval_every == 0` disables eval snapshots.
#[allow(clippy::too_many_arguments)]
pub fn train(
    dataset: &Dataset,
    mut model: MlpModel,
    hp: &HyperParams,
    kind: OptimizerKind,
    batch_size: usize,
    epochs: usize,
    seed: u64,
    eval_every: usize,
) -> Result<TrainOutcome> {
    check_run_shape(dataset, &model, batch_size, epochs)?;

    let (eval_xs, eval_ys) = if eval_every > 0 {
        let idx = eval_indices(seed, dataset.n);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        dataset.gather(&idx, &mut xs, &mut ys);
        (xs, ys)
    } else {
        (Vec::new(), Vec::new())
    };

    let mut state = OptimizerState::new(model.param_count(), 0.0)?;
    let mut records = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut step_no = 0usize;

    for epoch in 0..epochs {
        let perm = epoch_permutation(seed, epoch, dataset.n);
        for chunk in perm.chunks(batch_size) {
            dataset.gather(chunk, &mut xs, &mut ys);
            let (batch_loss, grads) = model.forward_backward(&xs, &ys)?;
            let grad_norm = l2_norm(&grads);
            let (next, out) = step(&state, model.params(), &grads, hp, kind)?;
            state = next;
            model.set_params(&out.new_params)?;
            step_no += 1;

            let eval_loss = if eval_every > 0 && step_no.is_multiple_of(eval_every) {
                Some(model.loss(&eval_xs, &eval_ys)?)
            } else {
                None
            };
            records.push(TrainRecord {
                step: step_no,
                epoch,
                batch_loss,
                grad_norm,
                eval_loss,
            });
        }
    }

    Ok(TrainOutcome {
        records,
        model,
        kind,
        hp: *hp,
        seed,
    })
}

/// Per-coordinate sample variances of two `k x p` draw matrices, reduced to
/// the coordinate-averaged difference plus its jackknife standard error
/// (pinned to zero below three draws).
fn coordinate_averaged_gap(ab: &[f64], mv: &[f64], k: usize, p: usize) -> (f64, f64) {
    let kf = k as f64;
    let pf = p as f64;
    let mut mean_a = vec![0.0; p];
    let mut mean_b = vec![0.0; p];
    for j in 0..k {
        for i in 0..p {
            mean_a[i] += ab[j * p + i];
            mean_b[i] += mv[j * p + i];
        }
    }
    for i in 0..p {
        mean_a[i] /= kf;
        mean_b[i] /= kf;
    }
    let mut m2_a = vec![0.0; p];
    let mut m2_b = vec![0.0; p];
    for j in 0..k {
        for i in 0..p {
            let da = ab[j * p + i] - mean_a[i];
            let db = mv[j * p + i] - mean_b[i];
            m2_a[i] += da * da;
            m2_b[i] += db * db;
        }
    }
    let mc_gap = (0..p).map(|i| m2_a[i] - m2_b[i]).sum::<f64>() / ((kf - 1.0) * pf);
    if k < 3 {
        return (mc_gap, 0.0);
    }

    let loo = |m2: f64, dev: f64| (m2 - kf / (kf - 1.0) * dev * dev) / (kf - 2.0);
    let mut thetas = vec![0.0; k];
    for (j, theta) in thetas.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in 0..p {
            acc +=
                loo(m2_a[i], ab[j * p + i] - mean_a[i]) - loo(m2_b[i], mv[j * p + i] - mean_b[i]);
        }
        *theta = acc / pf;
    }
    let theta_bar = thetas.iter().sum::<f64>() / kf;
    let ss: f64 = thetas
        .iter()
        .map(|t| (t - theta_bar) * (t - theta_bar))
        .sum();
    (mc_gap, ((kf - 1.0) / kf * ss).sqrt())
}

struct FrozenProbe<'a> {
    dataset: &'a Dataset,
    hp: &'a HyperParams,
    seed: u64,
    k_draws: usize,
    batch_size: usize,
}

impl FrozenProbe<'_> {
    fn run(
        &self,
        step_no: usize,
        model: &MlpModel,
        ab_state: &OptimizerState,
        shadow_state: &OptimizerState,
    ) -> Result<MlpVGapResult> {
        let pcount = model.param_count();
        let mut rng = Rng::new(self.seed, PROBE_STREAM_BASE + step_no as u64);
        let mut pool: Vec<usize> = (0..self.dataset.n).collect();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut ab_rows = Vec::with_capacity(self.k_draws * pcount);
        let mut mv_rows = Vec::with_capacity(self.k_draws * pcount);

        for _ in 0..self.k_draws {
            for i in 0..self.batch_size {
                let j = i + rng.index(self.dataset.n - i);
                pool.swap(i, j);
            }
            self.dataset
                .gather(&pool[..self.batch_size], &mut xs, &mut ys);
            let (_, g) = model.forward_backward(&xs, &ys)?;
            let (_, ab_out) = step(
                ab_state,
                model.params(),
                &g,
                self.hp,
                OptimizerKind::adabelief(),
            )?;
            let (_, mv_out) = step(
                shadow_state,
                model.params(),
                &g,
                self.hp,
                OptimizerKind::mvn_grad(),
            )?;
            ab_rows.extend_from_slice(&ab_out.delta);
            mv_rows.extend_from_slice(&mv_out.delta);
        }

        let (mc_gap, mc_stderr) = coordinate_averaged_gap(&ab_rows, &mv_rows, self.k_draws, pcount);
        Ok(MlpVGapResult {
            checkpoint_step: step_no,
            mc_gap,
            mc_stderr,
            k: self.k_draws,
            param_count: pcount,
        })
    }
}

/// Trains with AdaBelief and, at each checkpoint step, freezes the state
/// and estimates the conditional update-variance gap from `k_draws` fresh
/// minibatches.
///
/// AdaBelief and MVN-Grad share the `(m, r)` recursions, so the trajectory
/// carries a shadow MVN-Grad state whose `u` buffer is updated from the
/// same minibatch stream while the parameters follow AdaBelief. At a
/// checkpoint, both kinds take one bias-corrected step per draw from the
/// identical frozen `(params, m, r)` (plus the shadow `u`), and the
/// per-coordinate variance difference is averaged over all parameters.
/// Checkpoint `0` probes the freshly initialized state.
#[allow(clippy::too_many_arguments)]
pub fn vgap_mlp_checkpoint(
    dataset: &Dataset,
    mut model: MlpModel,
    hp: &HyperParams,
    seed: u64,
    k_draws: usize,
    checkpoints: &[usize],
    batch_size: usize,
    epochs: usize,
) -> Result<Vec<MlpVGapResult>> {
    check_run_shape(dataset, &model, batch_size, epochs)?;
    if k_draws < 2 {
        return Err(Error::InvalidConfig(format!(
            "the variance probe needs k_draws >= 2, got {k_draws}"
        )));
    }
    let steps_per_epoch = dataset.n.div_ceil(batch_size);
    let horizon = epochs * steps_per_epoch;
    let mut cps = checkpoints.to_vec();
    cps.sort_unstable();
    cps.dedup();
    if cps.is_empty() {
        return Err(Error::InvalidConfig(
            "the variance probe needs at least one checkpoint".into(),
        ));
    }
    if let Some(&beyond) = cps.iter().find(|&&c| c > horizon) {
        return Err(Error::InvalidConfig(format!(
            "checkpoint {beyond} is beyond the training horizon {horizon}"
        )));
    }

    let probe = FrozenProbe {
        dataset,
        hp,
        seed,
        k_draws,
        batch_size,
    };
    let mut ab_state = OptimizerState::new(model.param_count(), 0.0)?;
    let mut shadow_state = ab_state.clone();
    let mut results = Vec::with_capacity(cps.len());
    let mut next_cp = 0usize;

    if cps[next_cp] == 0 {
        results.push(probe.run(0, &model, &ab_state, &shadow_state)?);
        next_cp += 1;
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut step_no = 0usize;
    'training: for epoch in 0..epochs {
        if next_cp == cps.len() {
            break;
        }
        let perm = epoch_permutation(seed, epoch, dataset.n);
        for chunk in perm.chunks(batch_size) {
            dataset.gather(chunk, &mut xs, &mut ys);
            let (_, grads) = model.forward_backward(&xs, &ys)?;
            let (ab_next, ab_out) = step(
                &ab_state,
                model.params(),
                &grads,
                hp,
                OptimizerKind::adabelief(),
            )?;
            let (shadow_next, _) = step(
                &shadow_state,
                model.params(),
                &grads,
                hp,
                OptimizerKind::mvn_grad(),
            )?;
            debug_assert_eq!(ab_next.m, shadow_next.m);
            debug_assert_eq!(ab_next.r, shadow_next.r);
            ab_state = ab_next;
            shadow_state = shadow_next;
            model.set_params(&ab_out.new_params)?;
            step_no += 1;

            if cps[next_cp] == step_no {
                results.push(probe.run(step_no, &model, &ab_state, &shadow_state)?);
                next_cp += 1;
                if next_cp == cps.len() {
                    break 'training;
                }
            }
        }
    }

    Ok(results)
}
