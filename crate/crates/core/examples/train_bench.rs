//! Timing probe: one full-size window training at the default shapes.

use afdsta_core::embedding::window_split;
use afdsta_core::experiment::runners::generate_ks_dataset;
use afdsta_core::experiment::{train_window, TrainConfig, WindowSpec};
use afdsta_core::model::{ComponentToggles, ModelConfig};
use afdsta_core::pde::add_noise;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2e-3);

    let t0 = Instant::now();
    let clean = generate_ks_dataset(128, 180.0).unwrap();
    eprintln!("dataset: {:?}", t0.elapsed());

    let noisy = add_noise(&clean, 0.2, &mut ChaCha20Rng::seed_from_u64(99)).unwrap();
    let window = WindowSpec::for_region(120.0, 0.1, 20, 20);
    let (obs, truth) = window_split(&noisy, &noisy, window.start_index, 20, 20, 64).unwrap();

    let mcfg = ModelConfig {
        n_points: 128,
        obs_len: 20,
        horizon: 20,
        hidden: 64,
        dropout_rate: 0.1,
        target_index: 64,
    };
    let tcfg = TrainConfig {
        epochs,
        learning_rate: lr,
        consistency_weight: 0.1,
        seed: 1,
        toggles: ComponentToggles::default(),
    };
    let t1 = Instant::now();
    let (forecaster, report) = train_window(&obs, &truth, &mcfg, &tcfg).unwrap();
    let dt = t1.elapsed();
    eprintln!(
        "{epochs} epochs in {:?} ({:.1} ms/epoch), loss {:.6} -> {:.6}",
        dt,
        dt.as_secs_f64() * 1000.0 / epochs as f64,
        report.losses[0],
        report.final_loss
    );

    // quick quality probe: readout RMSE on this window
    use afdsta_core::embedding::antidiagonal_readout;
    use afdsta_core::experiment::predict_delay_matrix;
    let pred = predict_delay_matrix(&forecaster, &obs, 20, 64).unwrap();
    let readout = antidiagonal_readout(&pred).unwrap();
    let future_start = window.start_index + 20;
    let truth_row = &clean.row(64)[future_start..future_start + 20];
    let rmse = (readout
        .predictions
        .iter()
        .zip(truth_row)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / 20.0)
        .sqrt();
    eprintln!("window rmse at k=64: {rmse:.5}");
}
