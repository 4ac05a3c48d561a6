//! Forward/inverse Fourier transforms with the normalization the solver
//! assumes: forward divides by N, inverse does not, so a round trip is the
//! identity and physical-space products transform without extra factors.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

#[derive(Clone)]
pub struct SpectralTransform {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl SpectralTransform {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Real field to spectral coefficients, scaled by 1/N.
    pub fn to_spectral(&self, field: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut buf);
        buf
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        let mut scratch = vec![Complex64::default(); self.forward.get_inplace_scratch_len()];
        self.forward.process_with_scratch(buf, &mut scratch);
        let scale = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    /// Spectral coefficients back to the (complex) physical field.
    pub fn to_physical(&self, spectral: &[Complex64]) -> Vec<Complex64> {
        let mut buf = spectral.to_vec();
        let mut scratch = vec![Complex64::default(); self.inverse.get_inplace_scratch_len()];
        self.inverse.process_with_scratch(&mut buf, &mut scratch);
        buf
    }

    /// Real part of the inverse transform plus the largest imaginary residue,
    /// which should be at rounding level for conjugate-symmetric input.
    pub fn to_real(&self, spectral: &[Complex64]) -> (Vec<f64>, f64) {
        let phys = self.to_physical(spectral);
        let mut residue = 0.0f64;
        let real = phys
            .iter()
            .map(|c| {
                residue = residue.max(c.im.abs());
                c.re
            })
            .collect();
        (real, residue)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn roundtrip_reproduces_random_real_field() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1);
        for n in [8usize, 64, 256] {
            let field: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t = SpectralTransform::new(n);
            let spec = t.to_spectral(&field);
            let (back, residue) = t.to_real(&spec);
            let err = field
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-10, "n={n}: roundtrip error {err}");
            assert!(residue < 1e-12, "n={n}: imaginary residue {residue}");
        }
    }

    #[test]
    fn single_mode_lands_in_one_slot() {
        let n = 16;
        let t = SpectralTransform::new(n);
        let field: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 3.0 * i as f64 / n as f64).cos())
            .collect();
        let spec = t.to_spectral(&field);
        assert!((spec[3].re - 0.5).abs() < 1e-12);
        assert!((spec[n - 3].re - 0.5).abs() < 1e-12);
        let stray: f64 = spec
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 3 && *i != n - 3)
            .map(|(_, c)| c.norm())
            .sum();
        assert!(stray < 1e-12);
    }
}
