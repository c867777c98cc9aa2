//! Subcommand definitions and dispatch: resolve each run's configuration,
//! execute the experiment arms, assemble the record table, and report
//! whether every built-in check passed.
//!
//! Exit-code contract (applied in `main`): 0 when all built-in checks in
//! the dispatched arms hold, 1 when any fails, 2 on configuration or I/O
//! errors.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};

use mvngrad_core::experiments::{
    run_separation_laprop, run_separation_mvn, run_separation_mvn_unpinned, run_spike,
    vgap_monte_carlo, SeparationResult, LAPROP_FLOOR_TOL, MOMENT_CHECK_REL_TOL,
    POTENTIAL_MONOTONE_TOL, TELESCOPE_TOL, TRAJECTORY_MATCH_TOL,
};
use mvngrad_core::mlp::{
    load_mnist_idx, make_blobs, train, vgap_mlp_checkpoint, Dataset, MlpModel,
};
use mvngrad_core::optim::update_bound;
use mvngrad_core::oracles::{
    HighSnrLaw, HighSnrOracle, SpikeModel, SymmetricLaw, SymmetricNoiseModel,
};
use mvngrad_core::{DecayMode, Error as CoreError, HyperParams, OptimizerKind, Rng};

use crate::config::{parse_list, resolve, resolve_flag, resolve_opt, FileConfig};
use crate::emit::{emit, now_unix_ms, Format, Meta};
use crate::records::{Cell, Table};

#[derive(Parser)]
#[command(
    name = "mvngrad",
    version,
    about = "Run and report the Adam-family optimizer verification experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Single-spike robustness sweep over spike magnitudes.
    Spike(SpikeArgs),
    /// Scalar one-step conditional variance gap, Monte Carlo vs analytic.
    Vgap(VgapArgs),
    /// Variance gap probed at frozen checkpoints of an MLP training run.
    VgapMlp(VgapMlpArgs),
    /// Sign-collapse separation: LaProp stall bound and MVN-Grad descent.
    Separation(SeparationArgs),
    /// MLP training curves for the four optimizer kinds.
    Train(TrainArgs),
    /// Analytic update-magnitude bounds for one hyperparameter setting.
    Bounds(BoundsArgs),
}

#[derive(Args)]
pub struct CommonArgs {
    /// Config file: flat `key = value` lines or one JSON object. CLI flags
    /// override file keys; unknown keys are rejected by name.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output data file (default `<subcommand>.<format>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format: csv or json.
    #[arg(long)]
    pub format: Option<String>,
    /// Also write a seed-aggregated `<stem>.agg.<ext>` file.
    #[arg(long)]
    pub aggregate: bool,
}

#[derive(Args)]
pub struct SpikeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Gradient-EMA and momentum decay.
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Normalizer decay.
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Denominator offset.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Accumulator floor added to the normalizer each step.
    #[arg(long = "eps-s")]
    pub eps_s: Option<f64>,
    /// Normalizer warm start shared by both accumulators.
    #[arg(long)]
    pub dbar: Option<f64>,
    /// Post-spike baseline gradient.
    #[arg(long)]
    pub u: Option<f64>,
    /// Steps after the spike.
    #[arg(long = "T")]
    pub horizon: Option<usize>,
    /// Comma-separated spike magnitudes.
    #[arg(long = "M")]
    pub magnitudes: Option<String>,
    /// Comma-separated optimizer kinds.
    #[arg(long)]
    pub kinds: Option<String>,
    /// Enable bias correction (default raw, matching the closed forms).
    #[arg(long = "bias-corrected")]
    pub bias_corrected: bool,
    /// Comma-separated record seeds (the spike stream is deterministic).
    #[arg(long)]
    pub seeds: Option<String>,
}

#[derive(Args)]
pub struct VgapArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Symmetric noise law: gaussian, uniform, or rademacher.
    #[arg(long)]
    pub law: Option<String>,
    /// Conditional mean of the gradient draw.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Noise scale of the gradient draw.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Frozen mean EMA carried into the probed step.
    #[arg(long = "m-prev")]
    pub m_prev: Option<f64>,
    /// Frozen variance accumulator carried into the probed step.
    #[arg(long = "s-prev")]
    pub s_prev: Option<f64>,
    /// Frozen post-normalization momentum carried into the probed step.
    #[arg(long = "u-prev")]
    pub u_prev: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long = "eps-s")]
    pub eps_s: Option<f64>,
    /// Gradient draws per Monte Carlo estimate.
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long)]
    pub seeds: Option<String>,
}

#[derive(Args)]
pub struct VgapMlpArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dataset source: blobs or idx.
    #[arg(long)]
    pub data: Option<String>,
    /// IDX image file (required with --data idx).
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// IDX label file (required with --data idx).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Blob samples.
    #[arg(long)]
    pub n: Option<usize>,
    /// Blob input dimension.
    #[arg(long)]
    pub p: Option<usize>,
    /// Blob class count.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Blob within-class spread.
    #[arg(long)]
    pub spread: Option<f64>,
    /// First hidden width.
    #[arg(long)]
    pub h1: Option<usize>,
    /// Second hidden width.
    #[arg(long)]
    pub h2: Option<usize>,
    /// Minibatch size.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long = "eps-s")]
    pub eps_s: Option<f64>,
    /// Minibatch draws per frozen-checkpoint estimate.
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Comma-separated training steps at which to freeze and probe.
    #[arg(long)]
    pub checkpoints: Option<String>,
    /// Training epochs (must cover the last checkpoint).
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seeds: Option<String>,
}

#[derive(Args)]
pub struct SeparationArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Which arm(s) to run: both, laprop, or mvn.
    #[arg(long)]
    pub arm: Option<String>,
    /// Problem dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// Horizon.
    #[arg(long = "T")]
    pub horizon: Option<usize>,
    /// Momentum decay of the LaProp sign recursion.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Stepsize constant of the decaying schedule c / (L sqrt(t+1)).
    #[arg(long)]
    pub c: Option<f64>,
    /// Quadratic curvature.
    #[arg(long = "L")]
    pub curvature: Option<f64>,
    /// Relative noise bound for the LaProp arm.
    #[arg(long = "lp-delta")]
    pub lp_delta: Option<f64>,
    /// Noise scale bound for the LaProp arm.
    #[arg(long = "lp-sigma")]
    pub lp_sigma: Option<f64>,
    /// Noise law for the LaProp arm.
    #[arg(long = "lp-law")]
    pub lp_law: Option<String>,
    /// Momentum decay of the MVN-Grad arm.
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Learning rate of the MVN-Grad arm (effective step eta(1-beta1)/sigma).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Pinned normalizer root and noise bound of the MVN-Grad arm.
    #[arg(long = "mvn-sigma")]
    pub mvn_sigma: Option<f64>,
    /// Relative noise bound for the MVN-Grad arm.
    #[arg(long = "mvn-delta")]
    pub mvn_delta: Option<f64>,
    /// Noise law for the MVN-Grad arm.
    #[arg(long = "mvn-law")]
    pub mvn_law: Option<String>,
    /// Every coordinate of the MVN-Grad start point.
    #[arg(long = "x0-coord")]
    pub x0_coord: Option<f64>,
    /// Run the MVN-Grad arm with a live variance estimate instead of the
    /// pinned normalizer (exploratory; only the rate check applies).
    #[arg(long)]
    pub unpinned: bool,
    /// Normalizer decay for the unpinned variant.
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub seeds: Option<String>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dataset source: blobs or idx.
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long)]
    pub h1: Option<usize>,
    #[arg(long)]
    pub h2: Option<usize>,
    /// Comma-separated optimizer kinds.
    #[arg(long)]
    pub kinds: Option<String>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long = "eps-s")]
    pub eps_s: Option<f64>,
    /// Weight-decay coefficient.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Weight-decay mode: none, coupled, or decoupled.
    #[arg(long)]
    pub decay: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Evaluate the full-data loss every this many steps (0 disables).
    #[arg(long = "eval-every")]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub seeds: Option<String>,
}

#[derive(Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Post-spike baseline gradient magnitude entering the tail bound.
    #[arg(long)]
    pub u: Option<f64>,
    /// Normalizer warm start.
    #[arg(long)]
    pub dbar: Option<f64>,
    #[arg(long)]
    pub kinds: Option<String>,
}

/// One resolved, executed run ready for emission.
struct RunOutput {
    table: Table,
    echo: Vec<(String, String)>,
    pass: bool,
    out: PathBuf,
    format: Format,
    aggregate: bool,
}

/// Emission settings resolved by [`Ctx::finish`].
struct Emission {
    echo: Vec<(String, String)>,
    out: PathBuf,
    format: Format,
    aggregate: bool,
}

/// Resolution context: the loaded config file plus the echo of every
/// resolved field, in resolution order.
struct Ctx {
    cfg: FileConfig,
    echo: Vec<(String, String)>,
}

impl Ctx {
    fn new(config: &Option<PathBuf>) -> Result<Self> {
        let cfg = match config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        Ok(Self {
            cfg,
            echo: Vec::new(),
        })
    }

    fn get<T>(&mut self, key: &str, cli: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = resolve(&mut self.cfg, key, cli, default)?;
        self.echo.push((key.to_string(), value.to_string()));
        Ok(value)
    }

    fn get_flag(&mut self, key: &str, cli: bool) -> Result<bool> {
        let value = resolve_flag(&mut self.cfg, key, cli)?;
        self.echo.push((key.to_string(), value.to_string()));
        Ok(value)
    }

    fn get_opt_path(&mut self, key: &str, cli: &Option<PathBuf>) -> Result<Option<PathBuf>> {
        let cli_str = cli.as_ref().map(|p| p.display().to_string());
        let value: Option<String> = resolve_opt(&mut self.cfg, key, cli_str)?;
        if let Some(s) = &value {
            self.echo.push((key.to_string(), s.clone()));
        }
        Ok(value.map(PathBuf::from))
    }

    /// Resolves the emission settings, verifies no config key was left
    /// unconsumed, and closes the context.
    fn finish(mut self, subcommand: &'static str, common: &CommonArgs) -> Result<Emission> {
        let cli_format: Option<Format> = common
            .format
            .as_deref()
            .map(str::parse)
            .transpose()
            .map_err(|e: String| anyhow!("flag `format`: {e}"))?;
        let format = self.get("format", cli_format, Format::Csv)?;
        let default_out = format!("{subcommand}.{format}");
        let out_cli = common.out.as_ref().map(|p| p.display().to_string());
        let out = self.get("out", out_cli, default_out)?;
        let aggregate = self.get_flag("aggregate", common.aggregate)?;
        self.cfg.finish(subcommand)?;
        Ok(Emission {
            echo: self.echo,
            out: PathBuf::from(out),
            format,
            aggregate,
        })
    }
}

fn sorted_kinds(raw: &str) -> Result<Vec<OptimizerKind>> {
    let mut kinds: Vec<OptimizerKind> = parse_list("kinds", raw)?;
    kinds.sort_by_key(|k| k.name());
    kinds.dedup_by_key(|k| k.name());
    Ok(kinds)
}

fn sorted_seeds(raw: &str) -> Result<Vec<u64>> {
    let mut seeds: Vec<u64> = parse_list("seeds", raw)?;
    seeds.sort_unstable();
    seeds.dedup();
    Ok(seeds)
}

/// Runs one parsed command end to end and returns whether every built-in
/// check passed; emission failures and invalid configurations surface as
/// errors.
pub fn execute(cmd: Cmd) -> Result<bool> {
    let started = now_unix_ms();
    let (name, output) = match cmd {
        Cmd::Spike(args) => ("spike", spike_cmd(args)?),
        Cmd::Vgap(args) => ("vgap", vgap_cmd(args)?),
        Cmd::VgapMlp(args) => ("vgap-mlp", vgap_mlp_cmd(args)?),
        Cmd::Separation(args) => ("separation", separation_cmd(args)?),
        Cmd::Train(args) => ("train", train_cmd(args)?),
        Cmd::Bounds(args) => ("bounds", bounds_cmd(args)?),
    };
    let meta = Meta {
        subcommand: name,
        config: output.echo,
        started_unix_ms: started,
        finished_unix_ms: now_unix_ms(),
    };
    emit(
        &output.table,
        &meta,
        &output.out,
        output.format,
        output.aggregate,
    )?;
    println!(
        "{name}: {} record(s) -> {} [{}]",
        output.table.len(),
        output.out.display(),
        if output.pass { "ok" } else { "FAILED CHECKS" },
    );
    Ok(output.pass)
}

fn spike_cmd(args: SpikeArgs) -> Result<RunOutput> {
    let mut ctx = Ctx::new(&args.common.config)?;
    let beta1 = ctx.get("beta1", args.beta1, 0.9)?;
    let beta2 = ctx.get("beta2", args.beta2, 0.6)?;
    let eps = ctx.get("eps", args.eps, 1e-8)?;
    let eps_s = ctx.get("eps-s", args.eps_s, 0.0)?;
    let dbar = ctx.get("dbar", args.dbar, 1.0)?;
    let u = ctx.get("u", args.u, 1e-3)?;
    let horizon = ctx.get("T", args.horizon, 1000usize)?;
    let magnitudes_raw = ctx.get("M", args.magnitudes, "1e2,1e4,1e6".to_string())?;
    let kinds_raw = ctx.get(
        "kinds",
        args.kinds,
        "adam,adabelief,laprop,mvngrad".to_string(),
    )?;
    let bias_corrected = ctx.get_flag("bias-corrected", args.bias_corrected)?;
    let seeds_raw = ctx.get("seeds", args.seeds, "0".to_string())?;
    let Emission {
        echo,
        out,
        format,
        aggregate,
    } = ctx.finish("spike", &args.common)?;

    let mut magnitudes: Vec<f64> = parse_list("M", &magnitudes_raw)?;
    magnitudes.sort_by(f64::total_cmp);
    magnitudes.dedup();
    let kinds = sorted_kinds(&kinds_raw)?;
    let seeds = sorted_seeds(&seeds_raw)?;

    let hp = HyperParams::new(1e-3, beta1, beta2, eps, eps_s, 0.0, DecayMode::None)?;
    let mut table = Table::new(&[
        "kind",
        "M",
        "seed",
        "peak_update",
        "peak_time",
        "t_star",
        "delta_at_t_star",
        "analytic_bound",
        "bound_ok",
        "moment_max_rel_err",
        "moment_ok",
        "bias_corrected",
    ]);
    table.mark_key("M");
    let mut pass = true;
    for kind in &kinds {
        for &magnitude in &magnitudes {
            let model = SpikeModel::new(magnitude, u, dbar, horizon)?;
            let res = run_spike(&model, &hp, *kind, bias_corrected, false)?;
            let moment_ok = res
                .moment_check_max_rel_err
                .map(|e| e <= MOMENT_CHECK_REL_TOL);
            pass &= res.bound_ok != Some(false) && moment_ok != Some(false);
            for &seed in &seeds {
                table.push(vec![
                    Cell::Str(kind.name().to_string()),
                    Cell::Float(magnitude),
                    Cell::Int(seed as i128),
                    Cell::Float(res.peak_update),
                    Cell::Int(res.peak_time as i128),
                    Cell::OptInt(res.t_star.map(|t| t as i128)),
                    Cell::OptFloat(res.delta_at_t_star),
                    Cell::OptFloat(res.analytic_bound),
                    Cell::OptBool(res.bound_ok),
                    Cell::OptFloat(res.moment_check_max_rel_err),
                    Cell::OptBool(moment_ok),
                    Cell::Bool(res.bias_corrected),
                ]);
            }
        }
    }
    Ok(RunOutput {
        table,
        echo,
        pass,
        out,
        format,
        aggregate,
    })
}

fn vgap_cmd(args: VgapArgs) -> Result<RunOutput> {
    let mut ctx = Ctx::new(&args.common.config)?;
    let law: SymmetricLaw = ctx.get(
        "law",
        parse_cli(args.law.as_deref(), "law")?,
        SymmetricLaw::Gaussian,
    )?;
    let mu = ctx.get("mu", args.mu, 0.5)?;
    let scale = ctx.get("scale", args.scale, 0.2)?;
    let m_prev = ctx.get("m-prev", args.m_prev, 0.5)?;
    let s_prev = ctx.get("s-prev", args.s_prev, 0.04)?;
    let u_prev = ctx.get("u-prev", args.u_prev, 0.0)?;
    let beta1 = ctx.get("beta1", args.beta1, 0.9)?;
    let beta2 = ctx.get("beta2", args.beta2, 0.95)?;
    let eps = ctx.get("eps", args.eps, 1e-8)?;
    let eps_s = ctx.get("eps-s", args.eps_s, 0.0)?;
    let k = ctx.get("K", args.k, 100_000usize)?;
    let seeds_raw = ctx.get("seeds", args.seeds, "1".to_string())?;
    let Emission {
        echo,
        out,
        format,
        aggregate,
    } = ctx.finish("vgap", &args.common)?;
    let seeds = sorted_seeds(&seeds_raw)?;

    let noise = SymmetricNoiseModel::scalar(mu, law, scale)?;
    let hp = HyperParams::new(1e-3, beta1, beta2, eps, eps_s, 0.0, DecayMode::None)?;
    let mut table = Table::new(&[
        "law",
        "mu",
        "scale",
        "m_prev",
        "s_prev",
        "u_prev",
        "K",
        "seed",
        "mc_gap",
        "mc_stderr",
        "closed_form_gap",
        "abs_err",
        "gap_ok",
    ]);
    let mut pass = true;
    for &seed in &seeds {
        let mut rng = Rng::new(seed, 0);
        let res = vgap_monte_carlo(m_prev, s_prev, u_prev, &noise, &hp, &mut rng, k)?;
        let abs_err = (res.mc_gap - res.closed_form_gap).abs();
        let gap_ok = abs_err <= 4.0 * res.mc_stderr && res.closed_form_gap >= 0.0;
        pass &= gap_ok;
        table.push(vec![
            Cell::Str(law.to_string()),
            Cell::Float(mu),
            Cell::Float(scale),
            Cell::Float(res.m_prev),
            Cell::Float(s_prev),
            Cell::Float(u_prev),
            Cell::Int(res.k as i128),
            Cell::Int(seed as i128),
            Cell::Float(res.mc_gap),
            Cell::Float(res.mc_stderr),
            Cell::Float(res.closed_form_gap),
            Cell::Float(abs_err),
            Cell::Bool(gap_ok),
        ]);
    }
    Ok(RunOutput {
        table,
        echo,
        pass,
        out,
        format,
        aggregate,
    })
}

/// Parses an optional CLI string into a typed value, naming the flag.
fn parse_cli<T>(raw: Option<&str>, flag: &str) -> Result<Option<T>>
where
    T: FromStr,
    T::Err: Display,
{
    raw.map(|s| s.parse().map_err(|e: T::Err| anyhow!("flag `{flag}`: {e}")))
        .transpose()
}

/// Loads the dataset shared by `vgap-mlp` and `train`: seeded synthetic
/// blobs, or an IDX pair when `data = idx`.
#[allow(clippy::too_many_arguments)]
fn load_dataset(
    data: &str,
    images: &Option<PathBuf>,
    labels: &Option<PathBuf>,
    n: usize,
    p: usize,
    classes: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    match data {
        "blobs" => Ok(make_blobs(n, p, classes, spread, &mut Rng::new(seed, 0))?),
        "idx" => {
            let images = images
                .as_ref()
                .ok_or_else(|| anyhow!("key `images` is required with data = idx"))?;
            let labels = labels
                .as_ref()
                .ok_or_else(|| anyhow!("key `labels` is required with data = idx"))?;
            Ok(load_mnist_idx(images, labels)?)
        }
        other => Err(anyhow!("key `data`: expected blobs or idx, got `{other}`")),
    }
}

fn vgap_mlp_cmd(args: VgapMlpArgs) -> Result<RunOutput> {
    let mut ctx = Ctx::new(&args.common.config)?;
    let data = ctx.get("data", args.data, "blobs".to_string())?;
    let images = ctx.get_opt_path("images", &args.images)?;
    let labels = ctx.get_opt_path("labels", &args.labels)?;
    let n = ctx.get("n", args.n, 2048usize)?;
    let p = ctx.get("p", args.p, 20usize)?;
    let classes = ctx.get("classes", args.classes, 4usize)?;
    let spread = ctx.get("spread", args.spread, 6.0)?;
    let h1 = ctx.get("h1", args.h1, 64usize)?;
    let h2 = ctx.get("h2", args.h2, 64usize)?;
    let batch = ctx.get("batch", args.batch, 16usize)?;
    let eta = ctx.get("eta", args.eta, 1e-3)?;
    let beta1 = ctx.get("beta1", args.beta1, 0.9)?;
    let beta2 = ctx.get("beta2", args.beta2, 0.95)?;
    let eps = ctx.get("eps", args.eps, 1e-8)?;
    let eps_s = ctx.get("eps-s", args.eps_s, 0.0)?;
    let k = ctx.get("K", args.k, 128usize)?;
    let checkpoints_raw = ctx.get(
        "checkpoints",
        args.checkpoints,
        "32,64,128,192,256".to_string(),
    )?;
    let epochs = ctx.get("epochs", args.epochs, 2usize)?;
    let seeds_raw = ctx.get("seeds", args.seeds, "1,2,3".to_string())?;
    let Emission {
        echo,
        out,
        format,
        aggregate,
    } = ctx.finish("vgap-mlp", &args.common)?;

    let mut checkpoints: Vec<usize> = parse_list("checkpoints", &checkpoints_raw)?;
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let seeds = sorted_seeds(&seeds_raw)?;
    let hp = HyperParams::new(eta, beta1, beta2, eps, eps_s, 0.0, DecayMode::None)?;

    let shared_idx = if data == "idx" {
        Some(load_dataset(
            &data, &images, &labels, n, p, classes, spread, 0,
        )?)
    } else {
        None
    };

    // results[seed_idx][cp_idx], aligned because the checkpoint list is
    // identical (sorted, deduplicated) for every seed.
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let dataset = match &shared_idx {
            Some(ds) => ds.clone(),
            None => load_dataset(&data, &images, &labels, n, p, classes, spread, seed)?,
        };
        let model = MlpModel::new(dataset.p, h1, h2, dataset.k, &mut Rng::new(seed, 1))?;
        let results =
            vgap_mlp_checkpoint(&dataset, model, &hp, seed, k, &checkpoints, batch, epochs)?;
        per_seed.push(results);
    }

    let mut table = Table::new(&[
        "checkpoint_step",
        "seed",
        "K",
        "param_count",
        "mc_gap",
        "mc_stderr",
        "seed_mean_gap",
        "mean_gap_positive",
    ]);
    let mut pass = true;
    for (cp_idx, &cp) in checkpoints.iter().enumerate() {
        let mean_gap = per_seed.iter().map(|r| r[cp_idx].mc_gap).sum::<f64>() / seeds.len() as f64;
        let mean_ok = mean_gap > 0.0;
        pass &= mean_ok;
        for (seed_idx, &seed) in seeds.iter().enumerate() {
            let res = &per_seed[seed_idx][cp_idx];
            table.push(vec![
                Cell::Int(cp as i128),
                Cell::Int(seed as i128),
                Cell::Int(res.k as i128),
                Cell::Int(res.param_count as i128),
                Cell::Float(res.mc_gap),
                Cell::Float(res.mc_stderr),
                Cell::Float(mean_gap),
                Cell::Bool(mean_ok),
            ]);
        }
    }
    Ok(RunOutput {
        table,
        echo,
        pass,
        out,
        format,
        aggregate,
    })
}

fn separation_row(
    arm: &str,
    beta: f64,
    seed: u64,
    res: &SeparationResult,
    pinned: Option<bool>,
    arm_ok: bool,
) -> Vec<Cell> {
    vec![
        Cell::Str(arm.to_string()),
        Cell::Int(res.dim as i128),
        Cell::Int(res.horizon as i128),
        Cell::Float(beta),
        Cell::Int(seed as i128),
        Cell::Float(res.min_grad_norm),
        Cell::Float(res.analytic_value),
        Cell::OptFloat(res.trajectory_match_err),
        Cell::OptBool(res.orthant_ok),
        Cell::OptBool(res.grad_norm_decreasing),
        Cell::OptFloat(res.max_potential_increase),
        Cell::OptFloat(res.telescope_slack),
        Cell::OptBool(pinned),
        Cell::Bool(arm_ok),
    ]
}

fn separation_cmd(args: SeparationArgs) -> Result<RunOutput> {
    let mut ctx = Ctx::new(&args.common.config)?;
    let arm = ctx.get("arm", args.arm, "both".to_string())?;
    let d = ctx.get("d", args.d, 16usize)?;
    let horizon = ctx.get("T", args.horizon, 100usize)?;
    let beta = ctx.get("beta", args.beta, 0.9)?;
    let c = ctx.get("c", args.c, 1.0)?;
    let curvature = ctx.get("L", args.curvature, 1.0)?;
    let lp_delta = ctx.get("lp-delta", args.lp_delta, 0.3)?;
    let lp_sigma = ctx.get("lp-sigma", args.lp_sigma, 1.0)?;
    let lp_law: HighSnrLaw = ctx.get(
        "lp-law",
        parse_cli(args.lp_law.as_deref(), "lp-law")?,
        HighSnrLaw::TruncatedGaussian,
    )?;
    let beta1 = ctx.get("beta1", args.beta1, 0.9)?;
    let eta = ctx.get("eta", args.eta, 1.0)?;
    let mvn_sigma = ctx.get("mvn-sigma", args.mvn_sigma, 1.0)?;
    let mvn_delta = ctx.get("mvn-delta", args.mvn_delta, 0.0)?;
    let mvn_law: HighSnrLaw = ctx.get(
        "mvn-law",
        parse_cli(args.mvn_law.as_deref(), "mvn-law")?,
        HighSnrLaw::Zero,
    )?;
    let x0_coord = ctx.get("x0-coord", args.x0_coord, 1.0)?;
    let unpinned = ctx.get_flag("unpinned", args.unpinned)?;
    let beta2 = ctx.get("beta2", args.beta2, 0.999)?;
    let seeds_raw = ctx.get("seeds", args.seeds, "1".to_string())?;
    let Emission {
        echo,
        out,
        format,
        aggregate,
    } = ctx.finish("separation", &args.common)?;
    let seeds = sorted_seeds(&seeds_raw)?;

    let run_laprop = arm == "both" || arm == "laprop";
    let run_mvn = arm == "both" || arm == "mvn";
    if !run_laprop && !run_mvn {
        return Err(anyhow!(
            "key `arm`: expected both, laprop, or mvn, got `{arm}`"
        ));
    }

    let mut table = Table::new(&[
        "arm",
        "d",
        "T",
        "beta",
        "seed",
        "min_grad_norm",
        "analytic_value",
        "trajectory_match_err",
        "orthant_ok",
        "grad_norm_decreasing",
        "max_potential_increase",
        "telescope_slack",
        "pinned",
        "arm_ok",
    ]);
    let mut pass = true;

    if run_laprop {
        let oracle = HighSnrOracle::new(curvature, lp_delta, lp_sigma, lp_law)?;
        for &seed in &seeds {
            let mut rng = Rng::new(seed, 10);
            let res = run_separation_laprop(d, horizon, beta, c, &oracle, &mut rng)?;
            let arm_ok = res.trajectory_match_err == Some(0.0)
                && res.orthant_ok == Some(true)
                && res.grad_norm_decreasing == Some(true)
                && (res.min_grad_norm - res.analytic_value).abs() <= LAPROP_FLOOR_TOL;
            pass &= arm_ok;
            table.push(separation_row("laprop", beta, seed, &res, None, arm_ok));
        }
    }
    if run_mvn {
        let oracle = HighSnrOracle::new(curvature, mvn_delta, mvn_sigma, mvn_law)?;
        let x0 = vec![x0_coord; d];
        for &seed in &seeds {
            let mut rng = Rng::new(seed, 11);
            let res = if unpinned {
                run_separation_mvn_unpinned(
                    d, horizon, beta1, beta2, eta, mvn_sigma, &oracle, &x0, &mut rng,
                )?
            } else {
                run_separation_mvn(d, horizon, beta1, eta, mvn_sigma, &oracle, &x0, &mut rng)?
            };
            let rate_ok = res.min_grad_norm <= res.analytic_value;
            let arm_ok = if unpinned {
                rate_ok
            } else {
                let match_ok = res
                    .trajectory_match_err
                    .is_some_and(|e| e <= TRAJECTORY_MATCH_TOL);
                let descent_ok = if mvn_law == HighSnrLaw::Zero {
                    res.max_potential_increase
                        .is_some_and(|v| v <= POTENTIAL_MONOTONE_TOL)
                        && res.telescope_slack.is_some_and(|v| v <= TELESCOPE_TOL)
                } else {
                    true
                };
                match_ok && descent_ok && rate_ok
            };
            pass &= arm_ok;
            table.push(separation_row(
                "mvn",
                beta1,
                seed,
                &res,
                Some(!unpinned),
                arm_ok,
            ));
        }
    }
    Ok(RunOutput {
        table,
        echo,
        pass,
        out,
        format,
        aggregate,
    })
}

fn train_cmd(args: TrainArgs) -> Result<RunOutput> {
    let mut ctx = Ctx::new(&args.common.config)?;
    let data = ctx.get("data", args.data, "blobs".to_string())?;
    let images = ctx.get_opt_path("images", &args.images)?;
    let labels = ctx.get_opt_path("labels", &args.labels)?;
    let n = ctx.get("n", args.n, 2048usize)?;
    let p = ctx.get("p", args.p, 20usize)?;
    let classes = ctx.get("classes", args.classes, 4usize)?;
    let spread = ctx.get("spread", args.spread, 6.0)?;
    let h1 = ctx.get("h1", args.h1, 64usize)?;
    let h2 = ctx.get("h2", args.h2, 64usize)?;
    let kinds_raw = ctx.get(
        "kinds",
        args.kinds,
        "adam,adabelief,laprop,mvngrad".to_string(),
    )?;
    let batch = ctx.get("batch", args.batch, 1024usize)?;
    let eta = ctx.get("eta", args.eta, 1e-4)?;
    let beta1 = ctx.get("beta1", args.beta1, 0.95)?;
    let beta2 = ctx.get("beta2", args.beta2, 0.999)?;
    let eps = ctx.get("eps", args.eps, 1e-8)?;
    let eps_s = ctx.get("eps-s", args.eps_s, 0.0)?;
    let lambda = ctx.get("lambda", args.lambda, 0.0)?;
    let decay: DecayMode = ctx.get(
        "decay",
        parse_cli(args.decay.as_deref(), "decay")?,
        DecayMode::None,
    )?;
    let epochs = ctx.get("epochs", args.epochs, 100usize)?;
    let eval_every = ctx.get("eval-every", args.eval_every, 0usize)?;
    let seeds_raw = ctx.get("seeds", args.seeds, "1,2,3".to_string())?;
    let Emission {
        echo,
        out,
        format,
        aggregate,
    } = ctx.finish("train", &args.common)?;

    let kinds = sorted_kinds(&kinds_raw)?;
    let seeds = sorted_seeds(&seeds_raw)?;
    let hp = HyperParams::new(eta, beta1, beta2, eps, eps_s, lambda, decay)?;

    let shared_idx = if data == "idx" {
        Some(load_dataset(
            &data, &images, &labels, n, p, classes, spread, 0,
        )?)
    } else {
        None
    };
    let mut datasets = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        datasets.push(match &shared_idx {
            Some(ds) => ds.clone(),
            None => load_dataset(&data, &images, &labels, n, p, classes, spread, seed)?,
        });
    }

    let mut table = Table::new(&[
        "kind",
        "seed",
        "step",
        "epoch",
        "batch_loss",
        "grad_norm",
        "eval_loss",
        "final_loss",
    ]);
    let mut pass = true;
    for kind in &kinds {
        for (seed_idx, &seed) in seeds.iter().enumerate() {
            let dataset = &datasets[seed_idx];
            let model = MlpModel::new(dataset.p, h1, h2, dataset.k, &mut Rng::new(seed, 1))?;
            let outcome = match train(dataset, model, &hp, *kind, batch, epochs, seed, eval_every) {
                Ok(outcome) => outcome,
                Err(CoreError::NonFinite(what)) => {
                    eprintln!(
                        "train: {} seed {seed} diverged (non-finite {what}); no records emitted for this arm",
                        kind.name(),
                    );
                    pass = false;
                    continue;
                }
                Err(other) => return Err(other.into()),
            };
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            let all: Vec<usize> = (0..dataset.n).collect();
            dataset.gather(&all, &mut xs, &mut ys);
            let final_loss = outcome.model.loss(&xs, &ys)?;
            let mut finite = final_loss.is_finite();
            for rec in &outcome.records {
                finite &= rec.batch_loss.is_finite()
                    && rec.grad_norm.is_finite()
                    && rec.eval_loss.is_none_or(f64::is_finite);
                table.push(vec![
                    Cell::Str(kind.name().to_string()),
                    Cell::Int(seed as i128),
                    Cell::Int(rec.step as i128),
                    Cell::Int(rec.epoch as i128),
                    Cell::Float(rec.batch_loss),
                    Cell::Float(rec.grad_norm),
                    Cell::OptFloat(rec.eval_loss),
                    Cell::Float(final_loss),
                ]);
            }
            pass &= finite;
        }
    }
    Ok(RunOutput {
        table,
        echo,
        pass,
        out,
        format,
        aggregate,
    })
}

fn bounds_cmd(args: BoundsArgs) -> Result<RunOutput> {
    let mut ctx = Ctx::new(&args.common.config)?;
    let beta1 = ctx.get("beta1", args.beta1, 0.9)?;
    let beta2 = ctx.get("beta2", args.beta2, 0.6)?;
    let eps = ctx.get("eps", args.eps, 1e-8)?;
    let u = ctx.get("u", args.u, 1e-3)?;
    let dbar = ctx.get("dbar", args.dbar, 1.0)?;
    let kinds_raw = ctx.get(
        "kinds",
        args.kinds,
        "adam,adabelief,laprop,mvngrad".to_string(),
    )?;
    let Emission {
        echo,
        out,
        format,
        aggregate,
    } = ctx.finish("bounds", &args.common)?;
    let kinds = sorted_kinds(&kinds_raw)?;

    let hp = HyperParams::new(1e-3, beta1, beta2, eps, 0.0, 0.0, DecayMode::None)?;
    let mut table = Table::new(&["kind", "beta1", "beta2", "eps", "u", "dbar", "bound"]);
    for kind in &kinds {
        let bound = update_bound(*kind, &hp, u.abs(), dbar)?;
        table.push(vec![
            Cell::Str(kind.name().to_string()),
            Cell::Float(beta1),
            Cell::Float(beta2),
            Cell::Float(eps),
            Cell::Float(u),
            Cell::Float(dbar),
            Cell::OptFloat(bound),
        ]);
    }
    Ok(RunOutput {
        table,
        echo,
        pass: true,
        out,
        format,
        aggregate,
    })
}
