//! Study runners: full-field prediction, the resolution and noise sweeps,
//! the component ablation, and the in-engine baselines.
//!
//! Every job (one target index, one seed, one arm) is independent and owns
//! its model; the pool fans them out and results are collected in a fixed
//! order, so thread count never changes the numbers.

use super::metrics::{compute_metrics, config_hash, MetricsError, MetricsReport};
use super::train::{
    fit, predict_delay_matrix, AfdStaForecaster, DlinearBaseline, DnnBaseline, TrainConfig,
    TrainError, WindowForecaster,
};
use super::{AblationArm, WindowSpec};
use crate::embedding::{antidiagonal_readout, window_split, EmbeddingError};
use crate::model::{ComponentToggles, ModelConfig, ModelState};
use crate::pde::{
    add_noise, equations::ks_initial_condition, make_grid, simulate, FieldSeries,
    KuramotoSivashinsky, PdeError,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Network and optimizer settings shared by every job of a study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSettings {
    pub hidden: usize,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub consistency_weight: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            hidden: 64,
            dropout_rate: 0.1,
            epochs: 200,
            learning_rate: 2e-3,
            consistency_weight: 0.1,
        }
    }
}

/// Which forecaster a job trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForecasterKind {
    AfdSta(ComponentToggles),
    Dnn,
    Dlinear,
}

impl ForecasterKind {
    pub fn label(&self) -> String {
        match self {
            ForecasterKind::AfdSta(t) if *t == ComponentToggles::default() => "afd-sta".into(),
            ForecasterKind::AfdSta(_) => "afd-sta-ablated".into(),
            ForecasterKind::Dnn => "dnn".into(),
            ForecasterKind::Dlinear => "dlinear".into(),
        }
    }
}

fn build_forecaster(
    kind: ForecasterKind,
    config: &ModelConfig,
    seed: u64,
) -> Result<Box<dyn WindowForecaster + Send>, RunError> {
    Ok(match kind {
        ForecasterKind::AfdSta(toggles) => Box::new(AfdStaForecaster {
            state: ModelState::init(config, seed).map_err(TrainError::Model)?,
            toggles,
        }),
        ForecasterKind::Dnn => Box::new(DnnBaseline::init(
            config.n_points,
            config.hidden,
            config.horizon,
            seed,
        )),
        ForecasterKind::Dlinear => Box::new(DlinearBaseline::init(
            config.n_points,
            config.horizon,
            seed,
        )),
    })
}

/// Decorrelates per-target streams while keeping everything reproducible
/// from the single study seed.
fn job_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Prediction of the future block for a set of target indices, with both
/// pooled and per-target metrics against the noiseless truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldPrediction {
    pub k_set: Vec<usize>,
    pub window: WindowSpec,
    pub dt: f64,
    pub t0: f64,
    /// k_set.len() x horizon, row-major.
    pub predictions: Vec<f64>,
    /// Anti-diagonal spread per prediction; same layout.
    pub dispersions: Vec<f64>,
    /// Noiseless truth on the same block.
    pub truth: Vec<f64>,
    pub pooled: MetricsReport,
    pub per_k: Vec<MetricsReport>,
}

/// Trains one model per target index on the observed (possibly noisy)
/// window and reads its future series off the predicted delay matrix.
/// Metrics compare against the noiseless series.
pub fn predict_field(
    observed: &FieldSeries,
    noiseless: &FieldSeries,
    window: WindowSpec,
    k_set: &[usize],
    settings: &RunSettings,
    seed: u64,
    kind: ForecasterKind,
) -> Result<FieldPrediction, RunError> {
    let horizon = window.horizon;
    let jobs: Vec<(usize, Vec<f64>, Vec<f64>)> = k_set
        .par_iter()
        .map(|&k| -> Result<_, RunError> {
            let config = ModelConfig {
                n_points: observed.n_points(),
                obs_len: window.obs_len,
                horizon,
                hidden: settings.hidden,
                dropout_rate: settings.dropout_rate,
                target_index: k,
            };
            // Training targets come from the observed (possibly noisy)
            // series; only the evaluation below sees the noiseless truth.
            let (obs, truth) = window_split(
                observed,
                observed,
                window.start_index,
                window.obs_len,
                horizon,
                k,
            )?;
            let train_config = TrainConfig {
                epochs: settings.epochs,
                learning_rate: settings.learning_rate,
                consistency_weight: settings.consistency_weight,
                seed: job_seed(seed, k),
                toggles: match kind {
                    ForecasterKind::AfdSta(t) => t,
                    _ => ComponentToggles::default(),
                },
            };
            let mut forecaster = build_forecaster(kind, &config, train_config.seed)?;
            fit(forecaster.as_mut(), &obs, &truth, &train_config)?;
            let predicted = predict_delay_matrix(forecaster.as_ref(), &obs, horizon, k)?;
            let readout = antidiagonal_readout(&predicted)?;
            Ok((k, readout.predictions, readout.dispersions))
        })
        .collect::<Result<_, _>>()?;

    let mut predictions = Vec::with_capacity(k_set.len() * horizon);
    let mut dispersions = Vec::with_capacity(k_set.len() * horizon);
    let mut truth_block = Vec::with_capacity(k_set.len() * horizon);
    let mut per_k = Vec::with_capacity(k_set.len());
    let future_start = window.start_index + window.obs_len;
    let hash = config_hash(&(settings, &window, k_set));
    for (k, preds, disps) in &jobs {
        let truth_row = &noiseless.row(*k)[future_start..future_start + horizon];
        let mut m = compute_metrics(preds, truth_row)?;
        m.seed = seed;
        m.config_hash = hash.clone();
        per_k.push(m);
        predictions.extend_from_slice(preds);
        dispersions.extend_from_slice(disps);
        truth_block.extend_from_slice(truth_row);
    }
    let mut pooled = compute_metrics(&predictions, &truth_block)?;
    pooled.seed = seed;
    pooled.config_hash = hash;
    pooled.per_time_rmse = (0..horizon)
        .map(|r| {
            let se: f64 = (0..k_set.len())
                .map(|i| {
                    let e = predictions[i * horizon + r] - truth_block[i * horizon + r];
                    e * e
                })
                .sum();
            (se / k_set.len() as f64).sqrt()
        })
        .collect();

    Ok(FieldPrediction {
        k_set: k_set.to_vec(),
        window,
        dt: observed.dt,
        t0: observed.t0,
        predictions,
        dispersions,
        truth: truth_block,
        pooled,
        per_k,
    })
}

/// One CSV row of a study: a single (arm, seed, target) evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub arm: String,
    pub seed: u64,
    pub k: usize,
    pub window_start: usize,
    pub n_points: usize,
    pub noise: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub consistency_weight: f64,
    pub hidden: usize,
    pub dropout: f64,
    pub rmse: f64,
    pub mae: f64,
    pub smape: f64,
    pub mad: f64,
}

/// Mean and spread of the pooled RMSE over seeds for one arm/setting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub per_seed_rmse: Vec<f64>,
    pub per_time_rmse: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyOutcome {
    pub experiment: String,
    pub rows: Vec<ReportRow>,
    pub summaries: Vec<ArmSummary>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn push_rows(
    rows: &mut Vec<ReportRow>,
    experiment: &str,
    arm: &str,
    seed: u64,
    noise: f64,
    settings: &RunSettings,
    prediction: &FieldPrediction,
    n_points: usize,
) {
    for (k, m) in prediction.k_set.iter().zip(&prediction.per_k) {
        rows.push(ReportRow {
            experiment: experiment.into(),
            arm: arm.into(),
            seed,
            k: *k,
            window_start: prediction.window.start_index,
            n_points,
            noise,
            epochs: settings.epochs,
            learning_rate: settings.learning_rate,
            consistency_weight: settings.consistency_weight,
            hidden: settings.hidden,
            dropout: settings.dropout_rate,
            rmse: m.rmse,
            mae: m.mae,
            smape: m.smape,
            mad: m.mad,
        });
    }
}

/// Shared protocol of the desk-scale studies: per setting, repeat over the
/// seeds, pool the per-target errors, and summarize mean +/- std.
struct ArmRun<'a> {
    label: String,
    observed: &'a FieldSeries,
    noiseless: &'a FieldSeries,
    noise: f64,
    kind: ForecasterKind,
}

#[allow(clippy::too_many_arguments)]
fn run_arms(
    experiment: &str,
    arms: &[ArmRun<'_>],
    window: WindowSpec,
    k_set: &[usize],
    settings: &RunSettings,
    seeds: &[u64],
) -> Result<StudyOutcome, RunError> {
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for arm in arms {
        let mut per_seed = Vec::with_capacity(seeds.len());
        let mut profile = vec![0.0; window.horizon];
        for &seed in seeds {
            let prediction = predict_field(
                arm.observed,
                arm.noiseless,
                window,
                k_set,
                settings,
                seed,
                arm.kind,
            )?;
            per_seed.push(prediction.pooled.rmse);
            for (acc, r) in profile.iter_mut().zip(&prediction.pooled.per_time_rmse) {
                *acc += r / seeds.len() as f64;
            }
            push_rows(
                &mut rows,
                experiment,
                &arm.label,
                seed,
                arm.noise,
                settings,
                &prediction,
                arm.observed.n_points(),
            );
        }
        let (mean, std) = mean_std(&per_seed);
        summaries.push(ArmSummary {
            arm: arm.label.clone(),
            mean_rmse: mean,
            std_rmse: std,
            per_seed_rmse: per_seed,
            per_time_rmse: profile,
        });
    }
    Ok(StudyOutcome {
        experiment: experiment.into(),
        rows,
        summaries,
    })
}

/// The default chaotic dataset: N-point grid on the 32*pi domain, cosine
/// initial condition, solver step 0.1.
pub fn generate_ks_dataset(n_points: usize, t_end: f64) -> Result<FieldSeries, PdeError> {
    let grid = make_grid(n_points, 32.0 * std::f64::consts::PI)?;
    let initial = ks_initial_condition(&grid);
    simulate(&KuramotoSivashinsky, &grid, &[initial], t_end, 0.1)
}

/// Observation-noise sweep at fixed resolution. One noise field is drawn
/// per seed and scaled by each intensity, so settings differ only in the
/// noise level itself.
pub fn run_noise_sweep(
    clean: &FieldSeries,
    intensities: &[f64],
    window: WindowSpec,
    k_set: &[usize],
    settings: &RunSettings,
    seeds: &[u64],
    noise_seed: u64,
) -> Result<StudyOutcome, RunError> {
    let noisy: Vec<FieldSeries> = intensities
        .iter()
        .map(|&i| add_noise(clean, i, &mut ChaCha20Rng::seed_from_u64(noise_seed)))
        .collect::<Result<_, _>>()?;
    let arms: Vec<ArmRun<'_>> = intensities
        .iter()
        .zip(&noisy)
        .map(|(&intensity, observed)| ArmRun {
            label: format!("noise-{intensity}"),
            observed,
            noiseless: clean,
            noise: intensity,
            kind: ForecasterKind::AfdSta(ComponentToggles::default()),
        })
        .collect();
    run_arms("noise-sweep", &arms, window, k_set, settings, seeds)
}

/// Grid-resolution sweep on the noise-free dataset. Target indices are
/// given as fractions of N so the same physical points are tracked at
/// every resolution.
pub fn run_resolution_sweep(
    n_list: &[usize],
    t_end: f64,
    window: WindowSpec,
    k_fractions: &[f64],
    settings: &RunSettings,
    seeds: &[u64],
) -> Result<StudyOutcome, RunError> {
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &n in n_list {
        let clean = generate_ks_dataset(n, t_end)?;
        let k_set: Vec<usize> = k_fractions
            .iter()
            .map(|f| ((f * n as f64) as usize).min(n - 1))
            .collect();
        let arms = [ArmRun {
            label: format!("n-{n}"),
            observed: &clean,
            noiseless: &clean,
            noise: 0.0,
            kind: ForecasterKind::AfdSta(ComponentToggles::default()),
        }];
        let outcome = run_arms("resolution-sweep", &arms, window, &k_set, settings, seeds)?;
        rows.extend(outcome.rows);
        summaries.extend(outcome.summaries);
    }
    Ok(StudyOutcome {
        experiment: "resolution-sweep".into(),
        rows,
        summaries,
    })
}

/// Five-arm component ablation on the noisy window: the full model and the
/// four single-component removals, trained on identical data and seeds.
pub fn run_ablation(
    clean: &FieldSeries,
    noise_intensity: f64,
    window: WindowSpec,
    k_set: &[usize],
    settings: &RunSettings,
    seeds: &[u64],
    noise_seed: u64,
) -> Result<StudyOutcome, RunError> {
    let observed = add_noise(
        clean,
        noise_intensity,
        &mut ChaCha20Rng::seed_from_u64(noise_seed),
    )?;
    let arms: Vec<ArmRun<'_>> = AblationArm::all()
        .into_iter()
        .map(|arm| ArmRun {
            label: arm.name().into(),
            observed: &observed,
            noiseless: clean,
            noise: noise_intensity,
            kind: ForecasterKind::AfdSta(arm.toggles()),
        })
        .collect();
    run_arms("ablation", &arms, window, k_set, settings, seeds)
}

/// The full network against the in-engine DNN and Dlinear baselines on the
/// same noisy window.
pub fn run_baselines(
    clean: &FieldSeries,
    noise_intensity: f64,
    window: WindowSpec,
    k_set: &[usize],
    settings: &RunSettings,
    seeds: &[u64],
    noise_seed: u64,
) -> Result<StudyOutcome, RunError> {
    let observed = add_noise(
        clean,
        noise_intensity,
        &mut ChaCha20Rng::seed_from_u64(noise_seed),
    )?;
    let kinds = [
        ForecasterKind::AfdSta(ComponentToggles::default()),
        ForecasterKind::Dnn,
        ForecasterKind::Dlinear,
    ];
    let arms: Vec<ArmRun<'_>> = kinds
        .into_iter()
        .map(|kind| ArmRun {
            label: kind.label(),
            observed: &observed,
            noiseless: clean,
            noise: noise_intensity,
            kind,
        })
        .collect();
    run_arms("baselines", &arms, window, k_set, settings, seeds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::EquationTag;

    /// A cheap synthetic series: smooth traveling wave, no solver needed.
    fn synthetic_series(n: usize, t: usize) -> FieldSeries {
        let grid = make_grid(n, 2.0 * std::f64::consts::PI).unwrap();
        let xs = grid.grid_points();
        let mut values = vec![0.0; n * t];
        for (i, x) in xs.iter().enumerate() {
            for j in 0..t {
                values[i * t + j] = (x + 0.07 * j as f64).sin();
            }
        }
        FieldSeries::new(grid, EquationTag::Ks, 0.0, 0.1, values, 0.0, 1).unwrap()
    }

    fn tiny_settings() -> RunSettings {
        RunSettings {
            hidden: 8,
            dropout_rate: 0.0,
            epochs: 60,
            learning_rate: 5e-3,
            consistency_weight: 0.1,
        }
    }

    #[test]
    fn predict_field_shapes_and_determinism() {
        let series = synthetic_series(16, 40);
        let window = WindowSpec {
            start_index: 5,
            obs_len: 8,
            horizon: 6,
        };
        let settings = tiny_settings();
        let kind = ForecasterKind::AfdSta(ComponentToggles::default());
        let a = predict_field(&series, &series, window, &[2, 9], &settings, 3, kind).unwrap();
        let b = predict_field(&series, &series, window, &[2, 9], &settings, 3, kind).unwrap();
        assert_eq!(a.predictions.len(), 2 * 6);
        assert_eq!(a.pooled.per_time_rmse.len(), 6);
        assert_eq!(a.per_k.len(), 2);
        for (x, y) in a.predictions.iter().zip(&b.predictions) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let c = predict_field(&series, &series, window, &[2, 9], &settings, 4, kind).unwrap();
        assert!(a.predictions.iter().zip(&c.predictions).any(|(x, y)| x != y));
    }

    #[test]
    fn oracle_prediction_scores_zero_rmse() {
        // feed the truth itself through the metrics path
        let series = synthetic_series(8, 30);
        let window = WindowSpec {
            start_index: 0,
            obs_len: 6,
            horizon: 4,
        };
        let start = window.start_index + window.obs_len;
        let truth_row = &series.row(3)[start..start + 4];
        let m = compute_metrics(truth_row, truth_row).unwrap();
        assert_eq!(m.rmse, 0.0);
        let _ = window;
    }

    #[test]
    fn baseline_kinds_run_end_to_end() {
        let series = synthetic_series(8, 40);
        let window = WindowSpec {
            start_index: 2,
            obs_len: 8,
            horizon: 5,
        };
        let settings = tiny_settings();
        for kind in [ForecasterKind::Dnn, ForecasterKind::Dlinear] {
            let p = predict_field(&series, &series, window, &[1, 4], &settings, 2, kind).unwrap();
            assert_eq!(p.predictions.len(), 10);
            assert!(p.pooled.rmse.is_finite());
        }
    }

    #[test]
    fn noise_sweep_layout() {
        let series = synthetic_series(8, 40);
        let window = WindowSpec {
            start_index: 2,
            obs_len: 8,
            horizon: 5,
        };
        let outcome = run_noise_sweep(
            &series,
            &[0.0, 0.1],
            window,
            &[3],
            &tiny_settings(),
            &[1, 2],
            7,
        )
        .unwrap();
        assert_eq!(outcome.summaries.len(), 2);
        assert_eq!(outcome.rows.len(), 2 * 2); // settings x seeds x k
        assert_eq!(outcome.summaries[0].per_seed_rmse.len(), 2);
        // identical data at intensity zero across seeds differs only by
        // model seed
        assert!(outcome.summaries[0].mean_rmse.is_finite());
    }

    #[test]
    fn ablation_produces_five_arms_with_constant_shapes() {
        let series = synthetic_series(8, 40);
        let window = WindowSpec {
            start_index: 2,
            obs_len: 8,
            horizon: 5,
        };
        let outcome =
            run_ablation(&series, 0.05, window, &[3], &tiny_settings(), &[1], 9).unwrap();
        assert_eq!(outcome.summaries.len(), 5);
        let labels: Vec<_> = outcome.summaries.iter().map(|s| s.arm.as_str()).collect();
        assert_eq!(
            labels,
            vec!["full", "no-ewma", "no-attention", "no-fusion", "no-dynafc6"]
        );
    }
}
