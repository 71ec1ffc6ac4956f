//! Command-line front end: augmentation diagnostics, training, evaluation,
//! spectrum-drift comparisons, robustness sweeps, and hyperparameter grids.
//!
//! Every subcommand reads one JSON run configuration (`--config`), honors the
//! global overrides, writes its artifacts into the output directory, and
//! leaves a `manifest.json` recording the resolved configuration, the seed,
//! and the artifact version. All outputs are deterministic per seed.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use asgcl::augment::{apply_mask, optimize_delta, sample_mask, DeltaOptimization};
use asgcl::config::RunConfig;
use asgcl::data::{
    load_dataset, write_training_log_csv, write_trajectory_csv,
};
use asgcl::encoder::embed;
use asgcl::error::{Error, Result};
use asgcl::eval::{
    cluster_metrics, evaluate, linear_probe, make_split, perturb_for_robustness,
    write_report_csv, write_report_json, EvalTask, MetricStat, DEFAULT_SPLIT,
};
use asgcl::graph::{frobenius_distance, sym_norm_laplacian, Graph};
use asgcl::trainer::{
    epoch_stream, fit, load_checkpoint, prepare_delta, save_checkpoint, Checkpoint, TrainConfig,
};

#[derive(Parser)]
#[command(name = "asgcl", version, about = "Spectrum-preserving graph contrastive learning")]
struct Cli {
    /// JSON run configuration (dataset source plus training settings).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default: the config's `out`, else ./asgcl-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Replace spectrum-preserving flip optimization with the projected
    /// uniform initialization.
    #[arg(long, global = true)]
    no_spectral: bool,

    /// Give both views the same diffusion depth.
    #[arg(long, global = true)]
    symmetric_encoder: bool,

    /// Drop the upper-bound hinge from the objective.
    #[arg(long, global = true)]
    no_upper: bool,

    /// Drop the lower-bound hinge from the objective.
    #[arg(long, global = true)]
    no_lower: bool,

    /// Normalize diffusion without self-loops.
    #[arg(long, global = true)]
    raw_diffusion: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Classification,
    Clustering,
}

impl From<TaskArg> for EvalTask {
    fn from(t: TaskArg) -> EvalTask {
        match t {
            TaskArg::Classification => EvalTask::Classification,
            TaskArg::Clustering => EvalTask::Clustering,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GridArg {
    /// Perturbation budget ε.
    Epsilon,
    /// Extra diffusion depth k of the second view.
    Depth,
    /// Lower/upper margin pairs (α × β).
    Margins,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize per-view flip probabilities and write their loss
    /// trajectories and sparsity diagnostics.
    Augment,

    /// Train encoder weights; writes a checkpoint, the per-epoch loss log,
    /// and the augmentation trajectories.
    Train,

    /// Score a checkpoint with the linear probe or the clustering metrics.
    Eval {
        /// Checkpoint produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = TaskArg::Classification)]
        task: TaskArg,
        /// Number of evaluation seeds, consecutive from the base seed.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },

    /// Compare normalized-Laplacian drift of optimized augmentation against
    /// uniform flip / add / remove baselines at matched flip budgets.
    Spectra {
        /// Trials per budget; trial t uses seed base+t.
        #[arg(long, default_value_t = 10)]
        trials: u64,
        /// Comma-separated perturbation budgets.
        #[arg(long, value_delimiter = ',', default_value = "0.2")]
        budgets: Vec<f64>,
    },

    /// Sweep edge-drop and feature-mask ratios 0, 0.1, .. 0.8 and score
    /// embeddings on each perturbed graph.
    Robustness {
        /// Checkpoint to re-embed with (omit with --retrain).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Retrain on each perturbed graph instead of re-embedding.
        #[arg(long)]
        retrain: bool,
        #[arg(long, value_enum, default_value_t = TaskArg::Classification)]
        task: TaskArg,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },

    /// Retrain across a hyperparameter grid and record probe accuracy.
    Sweep {
        #[arg(long, value_enum)]
        grid: GridArg,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
    },
}

struct Context {
    run: RunConfig,
    out: PathBuf,
}

impl Context {
    fn resolve(cli: &Cli) -> Result<Context> {
        let path = cli
            .config
            .as_ref()
            .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
        let mut run = RunConfig::from_file(path)?;
        if let Some(seed) = cli.seed {
            run.train.seed = seed;
        }
        run.train.no_spectral |= cli.no_spectral;
        run.train.symmetric_encoder |= cli.symmetric_encoder;
        run.train.no_upper |= cli.no_upper;
        run.train.no_lower |= cli.no_lower;
        run.train.raw_diffusion |= cli.raw_diffusion;
        run.validate()?;
        let out = cli
            .out
            .clone()
            .or_else(|| run.out.clone())
            .unwrap_or_else(|| PathBuf::from("asgcl-out"));
        std::fs::create_dir_all(&out)?;
        Ok(Context { run, out })
    }

    fn write_manifest(&self, command: &str) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            artifact_version: &'static str,
            command: &'a str,
            seed: u64,
            config: &'a RunConfig,
        }
        let manifest = Manifest {
            artifact_version: env!("CARGO_PKG_VERSION"),
            command,
            seed: self.run.train.seed,
            config: &self.run,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.out.join("manifest.json"), text)?;
        Ok(())
    }
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: &Cli) -> Result<()> {
    let ctx = Context::resolve(cli)?;
    match &cli.command {
        Command::Augment => cmd_augment(&ctx),
        Command::Train => cmd_train(&ctx),
        Command::Eval { checkpoint, task, seeds } => {
            cmd_eval(&ctx, checkpoint, (*task).into(), *seeds)
        }
        Command::Spectra { trials, budgets } => cmd_spectra(&ctx, *trials, budgets),
        Command::Robustness { checkpoint, retrain, task, seeds } => {
            cmd_robustness(&ctx, checkpoint.as_deref(), *retrain, (*task).into(), *seeds)
        }
        Command::Sweep { grid, seeds } => cmd_sweep(&ctx, *grid, *seeds),
    }
}

fn seed_range(base: u64, count: u64) -> Result<Vec<u64>> {
    if count == 0 {
        return Err(Error::Config("need at least one seed".into()));
    }
    Ok((base..base + count).collect())
}

#[derive(Serialize)]
struct ViewDiagnostics {
    view: usize,
    budget: f64,
    entry_budget: usize,
    nnz: usize,
    expected_flips: f64,
    initial_loss: f64,
    final_loss: f64,
}

fn view_diagnostics(view: usize, budget: f64, opt: &DeltaOptimization) -> ViewDiagnostics {
    // Δ is symmetric with zero diagonal; expected Bernoulli flips count
    // unordered pairs, hence the halving.
    let expected_flips = opt.delta.delta().sum() / 2.0;
    ViewDiagnostics {
        view,
        budget,
        entry_budget: opt.delta.entry_budget(),
        nnz: opt.delta.nnz(),
        expected_flips,
        initial_loss: opt.trajectory.first().map_or(0.0, |p| p.loss),
        final_loss: opt.trajectory.last().map_or(0.0, |p| p.loss),
    }
}

fn cmd_augment(ctx: &Context) -> Result<()> {
    let g = load_dataset(&ctx.run.dataset)?;
    let cfg = &ctx.run.train;
    let (eps_1, eps_2) = cfg.view_budgets();
    let opt_1 = prepare_delta(&g, cfg, eps_1, &mut epoch_stream(cfg.seed, 1))?;
    let opt_2 = prepare_delta(&g, cfg, eps_2, &mut epoch_stream(cfg.seed, 2))?;
    write_trajectory_csv(&ctx.out.join("trajectory_1.csv"), &opt_1.trajectory)?;
    write_trajectory_csv(&ctx.out.join("trajectory_2.csv"), &opt_2.trajectory)?;
    let diagnostics =
        vec![view_diagnostics(1, eps_1, &opt_1), view_diagnostics(2, eps_2, &opt_2)];
    let mut text = serde_json::to_string_pretty(&diagnostics)?;
    text.push('\n');
    std::fs::write(ctx.out.join("augment.json"), text)?;
    ctx.write_manifest("augment")?;
    log::info!(
        "view 1: loss {:.6e} -> {:.6e}; view 2: loss {:.6e} -> {:.6e}",
        diagnostics[0].initial_loss,
        diagnostics[0].final_loss,
        diagnostics[1].initial_loss,
        diagnostics[1].final_loss
    );
    Ok(())
}

fn cmd_train(ctx: &Context) -> Result<()> {
    let g = load_dataset(&ctx.run.dataset)?;
    let cfg = &ctx.run.train;
    let outcome = fit(&g, cfg)?;
    save_checkpoint(
        &ctx.out.join("checkpoint.bin"),
        &Checkpoint { config: cfg.clone(), weights: outcome.weights, adam: outcome.adam },
    )?;
    write_training_log_csv(&ctx.out.join("training_log.csv"), &outcome.log)?;
    write_trajectory_csv(&ctx.out.join("trajectory_1.csv"), &outcome.trajectory_1)?;
    write_trajectory_csv(&ctx.out.join("trajectory_2.csv"), &outcome.trajectory_2)?;
    ctx.write_manifest("train")?;
    if let (Some(first), Some(last)) = (outcome.log.first(), outcome.log.last()) {
        log::info!("total loss {:.6} -> {:.6} over {} epochs", first.total, last.total, cfg.epochs);
    }
    Ok(())
}

fn cmd_eval(ctx: &Context, checkpoint: &Path, task: EvalTask, seeds: u64) -> Result<()> {
    let g = load_dataset(&ctx.run.dataset)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let raw = ckpt.config.raw_diffusion || ctx.run.train.raw_diffusion;
    let seed_list = seed_range(ctx.run.train.seed, seeds)?;
    let report = evaluate(&g, &ckpt.weights, raw, task, &seed_list, &ctx.run.dataset.name)?;
    write_report_json(&ctx.out.join("report.json"), std::slice::from_ref(&report))?;
    write_report_csv(&ctx.out.join("report.csv"), std::slice::from_ref(&report))?;
    ctx.write_manifest("eval")?;
    for (metric, stat) in report.named_stats() {
        log::info!("{metric}: {:.4} +- {:.4}", stat.mean, stat.std);
    }
    Ok(())
}

/// Flips exactly `count` pairs drawn from `pool` (capped by the pool size)
/// and returns the resulting graph.
fn toggle_pairs(
    g: &Graph,
    pool: &[(usize, usize)],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Graph> {
    let count = count.min(pool.len());
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    for t in 0..count {
        let j = rng.gen_range(t..idx.len());
        idx.swap(t, j);
    }
    let mut adjacency = g.adjacency().clone();
    for &e in &idx[..count] {
        let (i, j) = pool[e];
        let v = 1.0 - adjacency[(i, j)];
        adjacency[(i, j)] = v;
        adjacency[(j, i)] = v;
    }
    g.with_adjacency(adjacency)
}

fn cmd_spectra(ctx: &Context, trials: u64, budgets: &[f64]) -> Result<()> {
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    let g = load_dataset(&ctx.run.dataset)?;
    let cfg = &ctx.run.train;
    let lap = sym_norm_laplacian(&g);
    let n = g.n();
    let edges = g.edge_pairs();
    let edge_set: std::collections::HashSet<(usize, usize)> = edges.iter().copied().collect();
    let mut all_pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            all_pairs.push((i, j));
        }
    }
    let non_edges: Vec<(usize, usize)> =
        all_pairs.iter().copied().filter(|p| !edge_set.contains(p)).collect();

    let methods = ["optimized", "uniform_flip", "random_add", "random_remove"];
    let mut rows: Vec<(f64, &str, MetricStat, f64)> = Vec::new();
    for &budget in budgets {
        let mut dists: Vec<Vec<f64>> = vec![Vec::new(); methods.len()];
        let mut flips_used: Vec<f64> = Vec::new();
        for trial in 0..trials {
            let seed = ctx.run.train.seed + trial;
            let mut rng = epoch_stream(seed, 8);
            let opt = if cfg.no_spectral {
                prepare_delta(&g, cfg, budget, &mut rng)?
            } else {
                optimize_delta(&g, budget, cfg.rounds, cfg.eta, cfg.noise_scale, &mut rng)?
            };
            let mask = sample_mask(&opt.delta, &mut rng);
            let flips = mask.flip_count();
            flips_used.push(flips as f64);
            let augmented = apply_mask(&g, &mask)?;
            let drift = |g2: &Graph| -> Result<f64> {
                frobenius_distance(lap.matrix(), sym_norm_laplacian(g2).matrix())
            };
            dists[0].push(drift(&augmented)?);
            dists[1].push(drift(&toggle_pairs(&g, &all_pairs, flips, &mut rng)?)?);
            dists[2].push(drift(&toggle_pairs(&g, &non_edges, flips, &mut rng)?)?);
            dists[3].push(drift(&toggle_pairs(&g, &edges, flips, &mut rng)?)?);
        }
        let mean_flips = flips_used.iter().sum::<f64>() / trials as f64;
        for (m, name) in methods.iter().enumerate() {
            rows.push((budget, name, MetricStat::from_values(&dists[m]), mean_flips));
        }
    }

    let mut csv = String::from("budget,method,mean_distance,std_distance,mean_flips,trials\n");
    for (budget, method, stat, mean_flips) in &rows {
        csv.push_str(&format!(
            "{budget},{method},{},{},{mean_flips},{trials}\n",
            stat.mean, stat.std
        ));
    }
    std::fs::write(ctx.out.join("spectra.csv"), csv)?;
    ctx.write_manifest("spectra")?;
    for (budget, method, stat, _) in &rows {
        log::info!("budget {budget} {method}: {:.4} +- {:.4}", stat.mean, stat.std);
    }
    Ok(())
}

/// Scores one embedding against the labels for the chosen task; returns
/// (metric name, value) pairs.
fn task_scores(
    h: &DMatrix<f64>,
    labels: &[usize],
    classes: usize,
    task: EvalTask,
    seed: u64,
) -> Result<Vec<(&'static str, f64)>> {
    match task {
        EvalTask::Classification => {
            let split = make_split(h.nrows(), DEFAULT_SPLIT, seed)?;
            Ok(vec![("accuracy", linear_probe(h, labels, &split, seed)?)])
        }
        EvalTask::Clustering => {
            let s = cluster_metrics(h, labels, classes, seed)?;
            Ok(vec![
                ("clustering_acc", s.acc),
                ("nmi", s.nmi),
                ("ari", s.ari),
                ("fscore", s.fscore),
            ])
        }
    }
}

fn cmd_robustness(
    ctx: &Context,
    checkpoint: Option<&Path>,
    retrain: bool,
    task: EvalTask,
    seeds: u64,
) -> Result<()> {
    let g = load_dataset(&ctx.run.dataset)?;
    let labels = g
        .labels()
        .ok_or_else(|| Error::Config("robustness sweep needs node labels".into()))?
        .to_vec();
    let classes = g.num_classes().expect("labels are present");
    let seed_list = seed_range(ctx.run.train.seed, seeds)?;
    let ckpt = match (checkpoint, retrain) {
        (Some(path), false) => Some(load_checkpoint(path)?),
        (None, true) => None,
        (Some(_), true) => {
            return Err(Error::Config("--retrain and --checkpoint are mutually exclusive".into()));
        }
        (None, false) => {
            return Err(Error::Config("robustness needs --checkpoint or --retrain".into()));
        }
    };

    let ratios: Vec<f64> = (0..=8).map(|i| i as f64 / 10.0).collect();
    let mut csv = String::from("kind,ratio,metric,seed_count,mean,std\n");
    for kind in ["edge_drop", "feature_mask"] {
        for &ratio in &ratios {
            let (edge_drop, feature_mask) =
                if kind == "edge_drop" { (ratio, 0.0) } else { (0.0, ratio) };
            let mut per_metric: std::collections::BTreeMap<&'static str, Vec<f64>> =
                Default::default();
            for &seed in &seed_list {
                let mut rng = epoch_stream(seed, 9);
                let perturbed = perturb_for_robustness(&g, edge_drop, feature_mask, &mut rng)?;
                let (weights, raw) = match &ckpt {
                    Some(c) => {
                        (c.weights.clone(), c.config.raw_diffusion || ctx.run.train.raw_diffusion)
                    }
                    None => {
                        let mut cfg = ctx.run.train.clone();
                        cfg.seed = seed;
                        let outcome = fit(&perturbed, &cfg)?;
                        (outcome.weights, cfg.raw_diffusion)
                    }
                };
                let h = embed(&perturbed, &weights, raw)?;
                for (metric, value) in task_scores(&h, &labels, classes, task, seed)? {
                    per_metric.entry(metric).or_default().push(value);
                }
            }
            for (metric, values) in &per_metric {
                let stat = MetricStat::from_values(values);
                csv.push_str(&format!(
                    "{kind},{ratio},{metric},{},{},{}\n",
                    values.len(),
                    stat.mean,
                    stat.std
                ));
            }
        }
    }
    std::fs::write(ctx.out.join("robustness.csv"), csv)?;
    ctx.write_manifest("robustness")?;
    Ok(())
}

fn cmd_sweep(ctx: &Context, grid: GridArg, seeds: u64) -> Result<()> {
    let g = load_dataset(&ctx.run.dataset)?;
    let labels = g
        .labels()
        .ok_or_else(|| Error::Config("sweep needs node labels".into()))?
        .to_vec();
    let seed_list = seed_range(ctx.run.train.seed, seeds)?;

    let mut points: Vec<TrainConfig> = Vec::new();
    let base = &ctx.run.train;
    match grid {
        GridArg::Epsilon => {
            for eps in [0.05, 0.1, 0.2, 0.4] {
                let mut cfg = base.clone();
                cfg.epsilon = eps;
                cfg.epsilon_1 = None;
                cfg.epsilon_2 = None;
                points.push(cfg);
            }
        }
        GridArg::Depth => {
            for k in [0, 1, 2, 3] {
                let mut cfg = base.clone();
                cfg.extra_diffusion = k;
                points.push(cfg);
            }
        }
        GridArg::Margins => {
            for alpha in [1.0, 5.0] {
                for beta in [2.0, 9.0] {
                    let mut cfg = base.clone();
                    cfg.alpha = alpha;
                    cfg.beta = beta;
                    points.push(cfg);
                }
            }
        }
    }

    let mut csv =
        String::from("grid,epsilon,extra_diffusion,alpha,beta,seed_count,accuracy_mean,accuracy_std\n");
    let grid_name = match grid {
        GridArg::Epsilon => "epsilon",
        GridArg::Depth => "depth",
        GridArg::Margins => "margins",
    };
    for point in &points {
        let mut accs = Vec::new();
        for &seed in &seed_list {
            let mut cfg = point.clone();
            cfg.seed = seed;
            let outcome = fit(&g, &cfg)?;
            let h = embed(&g, &outcome.weights, cfg.raw_diffusion)?;
            let split = make_split(g.n(), DEFAULT_SPLIT, seed)?;
            accs.push(linear_probe(&h, &labels, &split, seed)?);
        }
        let stat = MetricStat::from_values(&accs);
        csv.push_str(&format!(
            "{grid_name},{},{},{},{},{},{},{}\n",
            point.epsilon,
            point.extra_diffusion,
            point.alpha,
            point.beta,
            accs.len(),
            stat.mean,
            stat.std
        ));
        log::info!(
            "eps {} k {} alpha {} beta {}: accuracy {:.4} +- {:.4}",
            point.epsilon,
            point.extra_diffusion,
            point.alpha,
            point.beta,
            stat.mean,
            stat.std
        );
    }
    std::fs::write(ctx.out.join("sweep.csv"), csv)?;
    ctx.write_manifest("sweep")?;
    Ok(())
}
