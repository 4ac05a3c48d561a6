//! Pooled-quality probe: predict_field on the standard noisy window.

use afdsta_core::experiment::runners::{
    generate_ks_dataset, predict_field, ForecasterKind, RunSettings,
};
use afdsta_core::experiment::WindowSpec;
use afdsta_core::model::ComponentToggles;
use afdsta_core::pde::add_noise;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2e-3);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let stride: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(8);
    let noise: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.2);

    let clean = generate_ks_dataset(128, 180.0).unwrap();
    let observed = add_noise(&clean, noise, &mut ChaCha20Rng::seed_from_u64(7)).unwrap();
    let window = WindowSpec::for_region(120.0, 0.1, 20, 20);
    let k_set: Vec<usize> = (0..128).step_by(stride).collect();
    let settings = RunSettings {
        hidden: 64,
        dropout_rate: 0.1,
        epochs,
        learning_rate: lr,
        consistency_weight: 0.1,
    };
    let t = Instant::now();
    let p = predict_field(
        &observed,
        &clean,
        window,
        &k_set,
        &settings,
        seed,
        ForecasterKind::AfdSta(ComponentToggles::default()),
    )
    .unwrap();
    println!(
        "epochs={epochs} lr={lr} seed={seed} |k|={} noise={noise}: pooled rmse {:.5} mae {:.5} smape {:.3} mad {:.5}  ({:?})",
        k_set.len(),
        p.pooled.rmse,
        p.pooled.mae,
        p.pooled.smape,
        p.pooled.mad,
        t.elapsed()
    );
}
