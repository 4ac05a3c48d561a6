//! Gaussian observation noise.

use super::{FieldSeries, PdeError};
use rand::Rng;
use rand_distr::StandardNormal;

/// Adds an independent N(0, 1) draw scaled by `intensity` to every grid
/// point at every time. Draws follow storage order (space-major), so a
/// seeded generator makes the result reproducible.
pub fn add_noise<R: Rng>(
    series: &FieldSeries,
    intensity: f64,
    rng: &mut R,
) -> Result<FieldSeries, PdeError> {
    if intensity < 0.0 {
        return Err(PdeError::NegativeNoise(intensity));
    }
    let mut noisy = series.clone();
    noisy.noise_intensity = intensity;
    if intensity > 0.0 {
        for v in noisy.values_mut() {
            let draw: f64 = rng.sample(StandardNormal);
            *v += draw * intensity;
        }
    }
    Ok(noisy)
}
