//! Command-line pipeline: generate chaotic PDE datasets, train and evaluate
//! the forecaster, run the noise/resolution sweeps, the ablation, and the
//! baseline comparison, and render field/error heatmaps.
//!
//! Every command writes a run manifest next to its primary output; `rerun`
//! replays a manifest bit-exactly.

mod manifest;
mod prediction;
mod render;

use afdsta_core::embedding::window_split;
use afdsta_core::experiment::runners::{
    generate_ks_dataset, predict_field, run_ablation, run_baselines, run_noise_sweep,
    run_resolution_sweep, ForecasterKind, RunSettings, StudyOutcome,
};
use afdsta_core::experiment::{
    compute_metrics, predict_delay_matrix, report, train_window, TrainConfig, TrainError,
    WindowSpec,
};
use afdsta_core::model::{checkpoint, ComponentToggles, ModelConfig};
use afdsta_core::pde::{
    add_noise, dataset, make_grid, simulate, Brusselator, EquationTag, FieldSeries,
    KuramotoSivashinsky, PdeError, SwiftHohenberg,
};
use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use manifest::{file_sha256, manifest_path, RunManifest};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "afdsta", about = "Spatiotemporal chaos forecasting pipeline")]
struct Cli {
    /// Worker pool size; AFDSTA_THREADS overrides, hardware threads by default.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize)]
pub enum Command {
    /// Integrate a PDE and write the dataset container plus CSV export.
    Generate(GenerateArgs),
    /// Train one model on a single window and target index.
    Train(TrainArgs),
    /// Train one model per target index and predict the future block.
    Predict(PredictArgs),
    /// Noise or resolution sweep with mean +/- std summaries.
    Sweep(SweepArgs),
    /// Five-arm component ablation on the noisy window.
    Ablate(AblateArgs),
    /// Compare the full model against the DNN and Dlinear baselines.
    Baselines(BaselinesArgs),
    /// Render a dataset or prediction as a PPM heatmap.
    Render(RenderArgs),
    /// Replay a recorded manifest.
    Rerun(RerunArgs),
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct GenerateArgs {
    /// Equation: ks, brusselator, or swift-hohenberg.
    #[arg(long, default_value = "ks")]
    eq: String,
    /// Grid points (power of two).
    #[arg(long, default_value_t = 128)]
    n: usize,
    #[arg(long = "t-end", default_value_t = 180.0)]
    t_end: f64,
    /// Solver step; snapshots are recorded every step.
    #[arg(long = "h", default_value_t = 0.1)]
    step: f64,
    /// Observation noise intensity; > 0 also writes a noiseless companion.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Spatial period; defaults to 32*pi for ks/swift-hohenberg, 64 for
    /// brusselator.
    #[arg(long = "domain-length")]
    domain_length: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Noiseless dataset for evaluation; defaults to the dataset itself
    /// when that one is noise-free.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// First predicted time; the observation window ends just before it.
    #[arg(long = "t-start", default_value_t = 120.0)]
    t_start: f64,
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long, default_value_t = 20)]
    l: usize,
    /// Target spatial index.
    #[arg(long, default_value_t = 64)]
    k: usize,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    toggles: ToggleArgs,
    /// Output prefix: writes <prefix>.ckpt and <prefix>.metrics.json.
    #[arg(long = "out-prefix")]
    out_prefix: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct PredictArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long = "t-start", default_value_t = 120.0)]
    t_start: f64,
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long, default_value_t = 20)]
    l: usize,
    /// Comma-separated target indices; overrides --k-stride.
    #[arg(long = "k-set")]
    k_set: Option<String>,
    /// Every k-stride-th index when --k-set is absent.
    #[arg(long = "k-stride", default_value_t = 8)]
    k_stride: usize,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    toggles: ToggleArgs,
    /// Output prefix: writes <prefix>.pred.bin, <prefix>.rows.csv,
    /// <prefix>.summary.json.
    #[arg(long = "out-prefix")]
    out_prefix: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SweepArgs {
    /// "noise" or "resolution".
    #[arg(long)]
    kind: String,
    /// Comma-separated noise intensities or grid sizes.
    #[arg(long)]
    values: Option<String>,
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[arg(long = "seed-base", default_value_t = 1)]
    seed_base: u64,
    #[arg(long = "t-start", default_value_t = 120.0)]
    t_start: f64,
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long, default_value_t = 20)]
    l: usize,
    /// Number of evenly spread target indices per run.
    #[arg(long = "k-count", default_value_t = 4)]
    k_count: usize,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct AblateArgs {
    #[arg(long, default_value_t = 0.2)]
    noise: f64,
    #[arg(long = "t-start", default_value_t = 120.0)]
    t_start: f64,
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long, default_value_t = 20)]
    l: usize,
    #[arg(long = "k-count", default_value_t = 3)]
    k_count: usize,
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[arg(long = "seed-base", default_value_t = 1)]
    seed_base: u64,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct BaselinesArgs {
    #[arg(long, default_value_t = 0.2)]
    noise: f64,
    #[arg(long = "t-start", default_value_t = 120.0)]
    t_start: f64,
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long, default_value_t = 20)]
    l: usize,
    #[arg(long = "k-count", default_value_t = 3)]
    k_count: usize,
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[arg(long = "seed-base", default_value_t = 1)]
    seed_base: u64,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct RenderArgs {
    /// Dataset container or prediction file.
    #[arg(long)]
    input: PathBuf,
    /// "field" or "error" (error requires a prediction file).
    #[arg(long, default_value = "field")]
    kind: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct RerunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Re-root every output path into this directory.
    #[arg(long)]
    redirect: Option<PathBuf>,
}

/// Optimization and network hyperparameters, mirrored one-to-one into the
/// manifest.
#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct HyperArgs {
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 2e-3)]
    lr: f64,
    /// Anti-diagonal consistency weight.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
}

impl HyperArgs {
    fn settings(&self) -> RunSettings {
        RunSettings {
            hidden: self.hidden,
            dropout_rate: self.dropout,
            epochs: self.epochs,
            learning_rate: self.lr,
            consistency_weight: self.lambda,
        }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ToggleArgs {
    /// Disable the adaptive exponential smoothing.
    #[arg(long = "no-ewma", default_value_t = false)]
    no_ewma: bool,
    /// Disable both attention paths.
    #[arg(long = "no-attention", default_value_t = false)]
    no_attention: bool,
    /// Replace gated fusion by stream averaging.
    #[arg(long = "no-fusion", default_value_t = false)]
    no_fusion: bool,
    /// Replace the projection head by a single affine map.
    #[arg(long = "no-dynafc6", default_value_t = false)]
    no_dynafc6: bool,
}

impl ToggleArgs {
    fn toggles(&self) -> ComponentToggles {
        ComponentToggles {
            smoothing: !self.no_ewma,
            attention: !self.no_attention,
            fusion: !self.no_fusion,
            projection: !self.no_dynafc6,
        }
    }
}

// ── error-to-exit-code mapping ──────────────────────────────────────

const EXIT_CONFIG: i32 = 2;
const EXIT_BLOW_UP: i32 = 3;
const EXIT_MISSING: i32 = 4;
const EXIT_NON_FINITE: i32 = 5;

fn exit_code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(pde) = cause.downcast_ref::<PdeError>() {
            return match pde {
                PdeError::BlowUp { .. } => EXIT_BLOW_UP,
                PdeError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => EXIT_MISSING,
                PdeError::Format(_) => EXIT_CONFIG,
                _ => EXIT_CONFIG,
            };
        }
        if let Some(train) = cause.downcast_ref::<TrainError>() {
            return match train {
                TrainError::NonFinite { .. } => EXIT_NON_FINITE,
                _ => EXIT_CONFIG,
            };
        }
        if let Some(run) =
            cause.downcast_ref::<afdsta_core::experiment::runners::RunError>()
        {
            use afdsta_core::experiment::runners::RunError;
            return match run {
                RunError::Train(TrainError::NonFinite { .. }) => EXIT_NON_FINITE,
                RunError::Pde(PdeError::BlowUp { .. }) => EXIT_BLOW_UP,
                _ => EXIT_CONFIG,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::NotFound {
                return EXIT_MISSING;
            }
        }
    }
    EXIT_CONFIG
}

fn main() {
    let cli = Cli::parse();
    let threads = std::env::var("AFDSTA_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .or(cli.threads);
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    if let Err(err) = dispatch(cli.command) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code_for(&err));
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Baselines(args) => cmd_baselines(args),
        Command::Render(args) => cmd_render(args),
        Command::Rerun(args) => cmd_rerun(args),
    }
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

fn load_dataset(path: &Path) -> anyhow::Result<FieldSeries> {
    if !path.exists() {
        return Err(anyhow!(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("dataset {} not found", path.display()),
        )));
    }
    Ok(dataset::read_container(path)?)
}

/// Observed and noiseless datasets for an evaluation command.
fn load_pair(
    dataset_path: &Path,
    truth_path: &Option<PathBuf>,
) -> anyhow::Result<(FieldSeries, FieldSeries)> {
    let observed = load_dataset(dataset_path)?;
    let truth = match truth_path {
        Some(p) => load_dataset(p)?,
        None => {
            if observed.noise_intensity > 0.0 {
                anyhow::bail!(
                    "dataset {} carries noise {}; pass --truth with the noiseless dataset",
                    dataset_path.display(),
                    observed.noise_intensity
                );
            }
            observed.clone()
        }
    };
    if truth.n_points() != observed.n_points() || truth.n_times != observed.n_times {
        anyhow::bail!("truth and dataset shapes differ");
    }
    Ok((observed, truth))
}

fn window_for(series: &FieldSeries, t_start: f64, m: usize, l: usize) -> anyhow::Result<WindowSpec> {
    let first_target = series.time_index(t_start);
    if first_target < m {
        anyhow::bail!(
            "observation window would start before the series (t-start {t_start}, M {m})"
        );
    }
    let window = WindowSpec {
        start_index: first_target - m,
        obs_len: m,
        horizon: l,
    };
    if window.start_index + m + l > series.n_times {
        anyhow::bail!(
            "window [{}..{}) exceeds the {} recorded snapshots",
            window.start_index,
            window.start_index + m + l,
            series.n_times
        );
    }
    Ok(window)
}

fn parse_k_set(spec: &Option<String>, stride: usize, n: usize) -> anyhow::Result<Vec<usize>> {
    let k_set: Vec<usize> = match spec {
        Some(text) => text
            .split(',')
            .map(|tok| tok.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .context("--k-set must be comma-separated indices")?,
        None => {
            if stride == 0 {
                anyhow::bail!("--k-stride must be >= 1");
            }
            (0..n).step_by(stride).collect()
        }
    };
    if k_set.is_empty() {
        anyhow::bail!("empty target set");
    }
    if let Some(&bad) = k_set.iter().find(|&&k| k >= n) {
        anyhow::bail!("target index {bad} out of range for {n} grid points");
    }
    Ok(k_set)
}

fn spread_k(n: usize, count: usize) -> Vec<usize> {
    // evenly spread interior points, the same fractions at any resolution
    (1..=count).map(|i| i * n / (count + 1)).collect()
}

// ── commands ────────────────────────────────────────────────────────

fn cmd_generate(args: GenerateArgs) -> anyhow::Result<()> {
    let eq = EquationTag::parse(&args.eq)
        .ok_or_else(|| anyhow!("unknown equation {:?} (ks, brusselator, swift-hohenberg)", args.eq))?;
    let mut manifest = RunManifest::new(Command::Generate(args.clone()), args.seed);
    let t = Instant::now();

    let domain_length = args.domain_length.unwrap_or(match eq {
        EquationTag::Ks | EquationTag::SwiftHohenberg => 32.0 * std::f64::consts::PI,
        EquationTag::Brusselator => 64.0,
    });
    let grid = make_grid(args.n, domain_length)?;
    let clean = match eq {
        EquationTag::Ks => {
            let initial = afdsta_core::pde::equations::ks_initial_condition(&grid);
            simulate(&KuramotoSivashinsky, &grid, &[initial], args.t_end, args.step)?
        }
        EquationTag::Brusselator => {
            let system = Brusselator::default();
            let initial = system.initial_condition(&grid, 0.1);
            simulate(&system, &grid, &initial, args.t_end, args.step)?
        }
        EquationTag::SwiftHohenberg => {
            let system = SwiftHohenberg::default();
            let initial = system.initial_condition(&grid, 0.1);
            simulate(&system, &grid, &[initial], args.t_end, args.step)?
        }
    };
    manifest.record_timing("simulate", t.elapsed());

    let mut primary = clean.clone();
    primary.seed = args.seed;
    ensure_parent(&args.out)?;
    if args.noise > 0.0 {
        let mut rng = ChaCha20Rng::seed_from_u64(args.seed);
        primary = add_noise(&primary, args.noise, &mut rng)?;
        // the noiseless companion is what evaluation compares against
        let clean_path = companion_clean_path(&args.out);
        let mut clean_out = clean;
        clean_out.seed = args.seed;
        dataset::write_container(&clean_out, &clean_path)?;
        manifest.record_output(&clean_path);
    }
    dataset::write_container(&primary, &args.out)?;
    manifest.record_output(&args.out);
    let csv_path = args.out.with_extension("csv");
    dataset::write_csv(&primary, &csv_path)?;
    manifest.record_output(&csv_path);

    manifest.dataset_hash = Some(file_sha256(&args.out)?);
    manifest.record_timing("total", t.elapsed());
    manifest.write(&manifest_path(&args.out))?;

    let values = primary.values();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let max = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    println!(
        "{}: {} x {} snapshots, dt {}, noise {}, mean {:.4}, max|u| {:.4}",
        eq.name(),
        primary.n_points(),
        primary.n_times,
        primary.dt,
        primary.noise_intensity,
        mean,
        max
    );
    Ok(())
}

fn companion_clean_path(out: &Path) -> PathBuf {
    match out.extension() {
        Some(ext) => out.with_extension(format!("clean.{}", ext.to_string_lossy())),
        None => out.with_extension("clean"),
    }
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new(Command::Train(args.clone()), args.seed);
    let t = Instant::now();
    let (observed, truth_series) = load_pair(&args.dataset, &args.truth)?;
    manifest.dataset_hash = Some(file_sha256(&args.dataset)?);
    let window = window_for(&observed, args.t_start, args.m, args.l)?;

    let model_config = ModelConfig {
        n_points: observed.n_points(),
        obs_len: args.m,
        horizon: args.l,
        hidden: args.hyper.hidden,
        dropout_rate: args.hyper.dropout,
        target_index: args.k,
    };
    model_config.validate()?;
    let train_config = TrainConfig {
        epochs: args.hyper.epochs,
        learning_rate: args.hyper.lr,
        consistency_weight: args.hyper.lambda,
        seed: args.seed,
        toggles: args.toggles.toggles(),
    };
    // training targets come from the observed series
    let (obs_window, train_truth) = window_split(
        &observed,
        &observed,
        window.start_index,
        args.m,
        args.l,
        args.k,
    )?;
    let (forecaster, fit_report) = train_window(&obs_window, &train_truth, &model_config, &train_config)?;
    manifest.record_timing("train", t.elapsed());

    let predicted = predict_delay_matrix(&forecaster, &obs_window, args.l, args.k)?;
    let readout = afdsta_core::embedding::antidiagonal_readout(&predicted)?;
    let future_start = window.start_index + args.m;
    let truth_future = &truth_series.row(args.k)[future_start..future_start + args.l];
    let mut metrics = compute_metrics(&readout.predictions, truth_future)?;
    metrics.seed = args.seed;
    metrics.config_hash =
        afdsta_core::experiment::metrics::config_hash(&(&train_config, &model_config));

    ensure_parent(&args.out_prefix)?;
    let ckpt_path = with_suffix(&args.out_prefix, ".ckpt");
    checkpoint::save(&forecaster.state, &ckpt_path)?;
    manifest.record_output(&ckpt_path);

    #[derive(Serialize)]
    struct TrainReport<'a> {
        final_loss: f64,
        metrics: &'a afdsta_core::experiment::MetricsReport,
        predictions: &'a [f64],
        dispersions: &'a [f64],
    }
    let report_path = with_suffix(&args.out_prefix, ".metrics.json");
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&TrainReport {
            final_loss: fit_report.final_loss,
            metrics: &metrics,
            predictions: &readout.predictions,
            dispersions: &readout.dispersions,
        })?,
    )?;
    manifest.record_output(&report_path);
    manifest.record_timing("total", t.elapsed());
    manifest.write(&manifest_path(&ckpt_path))?;

    println!(
        "k={} loss {:.6} rmse {:.5} mae {:.5} smape {:.3} mad {:.5}",
        args.k, fit_report.final_loss, metrics.rmse, metrics.mae, metrics.smape, metrics.mad
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new(Command::Predict(args.clone()), args.seed);
    let t = Instant::now();
    let (observed, truth) = load_pair(&args.dataset, &args.truth)?;
    manifest.dataset_hash = Some(file_sha256(&args.dataset)?);
    let window = window_for(&observed, args.t_start, args.m, args.l)?;
    let k_set = parse_k_set(&args.k_set, args.k_stride, observed.n_points())?;

    let prediction = predict_field(
        &observed,
        &truth,
        window,
        &k_set,
        &args.hyper.settings(),
        args.seed,
        ForecasterKind::AfdSta(args.toggles.toggles()),
    )?;
    manifest.record_timing("predict", t.elapsed());

    ensure_parent(&args.out_prefix)?;
    let pred_path = with_suffix(&args.out_prefix, ".pred.bin");
    prediction::write_prediction(&(&prediction).into(), &pred_path)?;
    manifest.record_output(&pred_path);

    let mut rows = Vec::new();
    for (k, m) in prediction.k_set.iter().zip(&prediction.per_k) {
        rows.push(afdsta_core::experiment::runners::ReportRow {
            experiment: "predict".into(),
            arm: "afd-sta".into(),
            seed: args.seed,
            k: *k,
            window_start: window.start_index,
            n_points: observed.n_points(),
            noise: observed.noise_intensity,
            epochs: args.hyper.epochs,
            learning_rate: args.hyper.lr,
            consistency_weight: args.hyper.lambda,
            hidden: args.hyper.hidden,
            dropout: args.hyper.dropout,
            rmse: m.rmse,
            mae: m.mae,
            smape: m.smape,
            mad: m.mad,
        });
    }
    let csv_path = with_suffix(&args.out_prefix, ".rows.csv");
    report::write_rows_csv(&rows, &csv_path)?;
    manifest.record_output(&csv_path);

    let summary_path = with_suffix(&args.out_prefix, ".summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&prediction.pooled)?)?;
    manifest.record_output(&summary_path);

    manifest.record_timing("total", t.elapsed());
    manifest.write(&manifest_path(&pred_path))?;
    println!(
        "pooled over {} targets: rmse {:.5} mae {:.5} smape {:.3} mad {:.5}",
        prediction.k_set.len(),
        prediction.pooled.rmse,
        prediction.pooled.mae,
        prediction.pooled.smape,
        prediction.pooled.mad
    );
    Ok(())
}

fn seeds_list(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base + i).collect()
}

fn write_study(
    outcome: &StudyOutcome,
    out_dir: &Path,
    manifest: &mut RunManifest,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let rows_path = out_dir.join(format!("{}.rows.csv", outcome.experiment));
    report::write_rows_csv(&outcome.rows, &rows_path)?;
    manifest.record_output(&rows_path);
    let summary_path = out_dir.join(format!("{}.summary.json", outcome.experiment));
    report::write_summary_json(outcome, &summary_path)?;
    manifest.record_output(&summary_path);
    for s in &outcome.summaries {
        println!(
            "{:<14} mean rmse {:.5} +/- {:.5} over {} seeds",
            s.arm,
            s.mean_rmse,
            s.std_rmse,
            s.per_seed_rmse.len()
        );
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new(Command::Sweep(args.clone()), args.seed_base);
    let t = Instant::now();
    let seeds = seeds_list(args.seed_base, args.seeds);
    let settings = args.hyper.settings();
    let outcome = match args.kind.as_str() {
        "noise" => {
            let intensities: Vec<f64> = match &args.values {
                Some(text) => text
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .context("--values must be comma-separated numbers")?,
                None => vec![0.0, 0.1, 0.15, 0.2],
            };
            let clean = generate_ks_dataset(128, 180.0)?;
            let window = window_for(&clean, args.t_start, args.m, args.l)?;
            let k_set = spread_k(clean.n_points(), args.k_count);
            run_noise_sweep(&clean, &intensities, window, &k_set, &settings, &seeds, 7)?
        }
        "resolution" => {
            let n_list: Vec<usize> = match &args.values {
                Some(text) => text
                    .split(',')
                    .map(|v| v.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .context("--values must be comma-separated integers")?,
                None => vec![64, 128, 256],
            };
            let fractions: Vec<f64> = (1..=args.k_count)
                .map(|i| i as f64 / (args.k_count + 1) as f64)
                .collect();
            // windows are defined in time, identical across resolutions
            let probe = generate_ks_dataset(n_list[0], 180.0)?;
            let window = window_for(&probe, args.t_start, args.m, args.l)?;
            run_resolution_sweep(&n_list, 180.0, window, &fractions, &settings, &seeds)?
        }
        other => anyhow::bail!("unknown sweep kind {other:?} (noise, resolution)"),
    };
    write_study(&outcome, &args.out_dir, &mut manifest)?;
    manifest.record_timing("total", t.elapsed());
    manifest.write(&args.out_dir.join("sweep.manifest.json"))?;
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new(Command::Ablate(args.clone()), args.seed_base);
    let t = Instant::now();
    let clean = generate_ks_dataset(128, 180.0)?;
    let window = window_for(&clean, args.t_start, args.m, args.l)?;
    let k_set = spread_k(clean.n_points(), args.k_count);
    let seeds = seeds_list(args.seed_base, args.seeds);
    let outcome = run_ablation(
        &clean,
        args.noise,
        window,
        &k_set,
        &args.hyper.settings(),
        &seeds,
        7,
    )?;
    write_study(&outcome, &args.out_dir, &mut manifest)?;
    manifest.record_timing("total", t.elapsed());
    manifest.write(&args.out_dir.join("ablation.manifest.json"))?;
    Ok(())
}

fn cmd_baselines(args: BaselinesArgs) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new(Command::Baselines(args.clone()), args.seed_base);
    let t = Instant::now();
    let clean = generate_ks_dataset(128, 180.0)?;
    let window = window_for(&clean, args.t_start, args.m, args.l)?;
    let k_set = spread_k(clean.n_points(), args.k_count);
    let seeds = seeds_list(args.seed_base, args.seeds);
    let outcome = run_baselines(
        &clean,
        args.noise,
        window,
        &k_set,
        &args.hyper.settings(),
        &seeds,
        7,
    )?;
    write_study(&outcome, &args.out_dir, &mut manifest)?;
    manifest.record_timing("total", t.elapsed());
    manifest.write(&args.out_dir.join("baselines.manifest.json"))?;
    Ok(())
}

fn cmd_render(args: RenderArgs) -> anyhow::Result<()> {
    if !args.input.exists() {
        return Err(anyhow!(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("input {} not found", args.input.display()),
        )));
    }
    let mut manifest = RunManifest::new(Command::Render(args.clone()), 0);
    let t = Instant::now();
    ensure_parent(&args.out)?;

    if prediction::is_prediction_file(&args.input) {
        let pred = prediction::read_prediction(&args.input)?;
        let rows = pred.k_set.len();
        let cols = pred.window.horizon;
        match args.kind.as_str() {
            "field" => render::write_heatmap(&pred.predictions, rows, cols, &args.out, "predicted field")?,
            "error" => {
                let abs_err: Vec<f64> = pred
                    .predictions
                    .iter()
                    .zip(&pred.truth)
                    .map(|(p, t)| (p - t).abs())
                    .collect();
                render::write_heatmap(&abs_err, rows, cols, &args.out, "absolute error")?;
            }
            other => anyhow::bail!("unknown render kind {other:?} (field, error)"),
        }
    } else {
        let series = load_dataset(&args.input)?;
        match args.kind.as_str() {
            "field" => {
                // row-major space x time is exactly the heatmap layout
                render::write_heatmap(
                    series.values(),
                    series.n_points(),
                    series.n_times,
                    &args.out,
                    "field",
                )?;
            }
            "error" => anyhow::bail!("error renders need a prediction file, not a dataset"),
            other => anyhow::bail!("unknown render kind {other:?} (field, error)"),
        }
    }
    manifest.record_output(&args.out);
    manifest.record_output(&args.out.with_extension("txt"));
    manifest.record_timing("total", t.elapsed());
    manifest.write(&manifest_path(&args.out))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_rerun(args: RerunArgs) -> anyhow::Result<()> {
    let recorded = RunManifest::read(&args.manifest)?;
    let mut command = recorded.command;
    if let Some(dir) = &args.redirect {
        redirect_outputs(&mut command, dir);
    }
    if matches!(command, Command::Rerun(_)) {
        anyhow::bail!("refusing to rerun a rerun manifest");
    }
    dispatch(command)
}

fn rebase(path: &mut PathBuf, dir: &Path) {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    *path = dir.join(name);
}

fn redirect_outputs(command: &mut Command, dir: &Path) {
    match command {
        Command::Generate(a) => rebase(&mut a.out, dir),
        Command::Train(a) => rebase(&mut a.out_prefix, dir),
        Command::Predict(a) => rebase(&mut a.out_prefix, dir),
        Command::Sweep(a) => a.out_dir = dir.to_path_buf(),
        Command::Ablate(a) => a.out_dir = dir.to_path_buf(),
        Command::Baselines(a) => a.out_dir = dir.to_path_buf(),
        Command::Render(a) => rebase(&mut a.out, dir),
        Command::Rerun(_) => {}
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    name.push_str(suffix);
    prefix.with_file_name(name)
}
