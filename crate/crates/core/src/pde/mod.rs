//! Pseudospectral generation of chaotic PDE trajectories.
//!
//! Fields live on a periodic grid of N equally spaced points. Time stepping
//! is fourth-order exponential time differencing (ETDRK4) with the scheme
//! coefficients computed by contour integration so that near-zero linear
//! modes never hit the removable singularity.

pub mod dataset;
pub mod equations;
pub mod etdrk4;
pub mod fft;
pub mod noise;

pub use equations::{ks_nonlinear, Brusselator, KuramotoSivashinsky, SwiftHohenberg};
pub use etdrk4::{
    etdrk4_coefficients, simulate, simulate_with_diagnostics, Etdrk4Coefficients,
    SolverDiagnostics, SpectralSystem,
};
pub use fft::SpectralTransform;
pub use noise::add_noise;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("grid size must be a power of two >= 8, got {0}")]
    BadGridSize(usize),
    #[error("domain length must be positive, got {0}")]
    BadDomainLength(f64),
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("initial condition has {got} points, grid has {expected}")]
    BadInitialCondition { got: usize, expected: usize },
    #[error("solution blew up at step {step} (t = {time}): max |u| = {magnitude:.3e}")]
    BlowUp {
        step: usize,
        time: f64,
        magnitude: f64,
    },
    #[error("noise intensity must be non-negative, got {0}")]
    NegativeNoise(f64),
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset format: {0}")]
    Format(String),
}

/// Which equation produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquationTag {
    Ks,
    Brusselator,
    SwiftHohenberg,
}

impl EquationTag {
    pub fn name(self) -> &'static str {
        match self {
            EquationTag::Ks => "ks",
            EquationTag::Brusselator => "brusselator",
            EquationTag::SwiftHohenberg => "swift-hohenberg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ks" => Some(EquationTag::Ks),
            "brusselator" => Some(EquationTag::Brusselator),
            "swift-hohenberg" => Some(EquationTag::SwiftHohenberg),
            _ => None,
        }
    }
}

/// A periodic sampling grid together with its Fourier wavenumbers.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrid {
    n_points: usize,
    domain_length: f64,
    wavenumbers: Vec<f64>,
}

/// Builds the grid: x_i = domain_length * i / N and wavenumbers
/// k_n = 2*pi*n / domain_length with integer frequencies
/// n in {0, 1, ..., N/2, -N/2+1, ..., -1}.
pub fn make_grid(n_points: usize, domain_length: f64) -> Result<SpectralGrid, PdeError> {
    if n_points < 8 || !n_points.is_power_of_two() {
        return Err(PdeError::BadGridSize(n_points));
    }
    if !(domain_length > 0.0) {
        return Err(PdeError::BadDomainLength(domain_length));
    }
    let base = 2.0 * std::f64::consts::PI / domain_length;
    let half = n_points / 2;
    let wavenumbers = (0..n_points)
        .map(|i| {
            let freq = if i <= half {
                i as f64
            } else {
                i as f64 - n_points as f64
            };
            freq * base
        })
        .collect();
    Ok(SpectralGrid {
        n_points,
        domain_length,
        wavenumbers,
    })
}

impl SpectralGrid {
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Integer frequency index of spectral slot `i` (signed, Nyquist positive).
    pub fn frequency_index(&self, i: usize) -> i64 {
        if i <= self.n_points / 2 {
            i as i64
        } else {
            i as i64 - self.n_points as i64
        }
    }

    pub fn grid_points(&self) -> Vec<f64> {
        (0..self.n_points)
            .map(|i| self.domain_length * i as f64 / self.n_points as f64)
            .collect()
    }

    /// True where the 2/3-rule dealiasing mask keeps a mode.
    pub fn dealias_keep(&self, i: usize) -> bool {
        3 * self.frequency_index(i).unsigned_abs() as usize <= self.n_points
    }
}

/// A generated trajectory: the observed field on an N x T grid, stored
/// row-major so each spatial row is contiguous in time.
#[derive(Debug, Clone)]
pub struct FieldSeries {
    pub grid: SpectralGrid,
    pub equation: EquationTag,
    pub t0: f64,
    pub dt: f64,
    pub n_times: usize,
    pub noise_intensity: f64,
    pub seed: u64,
    values: Vec<f64>,
}

impl FieldSeries {
    pub fn new(
        grid: SpectralGrid,
        equation: EquationTag,
        t0: f64,
        dt: f64,
        values: Vec<f64>,
        noise_intensity: f64,
        seed: u64,
    ) -> Result<Self, PdeError> {
        if !(dt > 0.0) {
            return Err(PdeError::BadTimeStep(dt));
        }
        let n = grid.n_points();
        if values.len() % n != 0 {
            return Err(PdeError::Format(format!(
                "value block of {} entries is not a multiple of N = {n}",
                values.len()
            )));
        }
        let n_times = values.len() / n;
        Ok(Self {
            grid,
            equation,
            t0,
            dt,
            n_times,
            noise_intensity,
            seed,
            values,
        })
    }

    pub fn n_points(&self) -> usize {
        self.grid.n_points()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// One spatial row across all recorded times.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_times..(i + 1) * self.n_times]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_times + j]
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_times).map(|j| self.t0 + j as f64 * self.dt).collect()
    }

    /// Index of the recorded snapshot closest to time `t`.
    pub fn time_index(&self, t: f64) -> usize {
        (((t - self.t0) / self.dt).round().max(0.0) as usize).min(self.n_times - 1)
    }

    /// Keeps every `stride`-th snapshot; realizes coarser sampling gaps.
    pub fn subsample(&self, stride: usize) -> FieldSeries {
        assert!(stride >= 1);
        let n = self.n_points();
        let kept = (self.n_times + stride - 1) / stride;
        let mut values = Vec::with_capacity(n * kept);
        for i in 0..n {
            let row = self.row(i);
            values.extend(row.iter().step_by(stride));
        }
        FieldSeries {
            grid: self.grid.clone(),
            equation: self.equation,
            t0: self.t0,
            dt: self.dt * stride as f64,
            n_times: kept,
            noise_intensity: self.noise_intensity,
            seed: self.seed,
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_period_wavenumber_layout() {
        let g = make_grid(8, 2.0 * std::f64::consts::PI).unwrap();
        let expect = [0.0, 1.0, 2.0, 3.0, 4.0, -3.0, -2.0, -1.0];
        for (k, e) in g.wavenumbers().iter().zip(expect) {
            assert!((k - e).abs() < 1e-14);
        }
    }

    #[test]
    fn long_domain_fundamental_mode() {
        let g = make_grid(128, 32.0 * std::f64::consts::PI).unwrap();
        assert!((g.wavenumbers()[1] - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_grid_sizes() {
        assert!(matches!(make_grid(100, 1.0), Err(PdeError::BadGridSize(_))));
        assert!(matches!(make_grid(4, 1.0), Err(PdeError::BadGridSize(_))));
        assert!(make_grid(8, 1.0).is_ok());
    }

    #[test]
    fn series_rows_and_subsampling() {
        let g = make_grid(8, 1.0).unwrap();
        let values: Vec<f64> = (0..8 * 5).map(|v| v as f64).collect();
        let s = FieldSeries::new(g, EquationTag::Ks, 0.0, 0.5, values, 0.0, 1).unwrap();
        assert_eq!(s.n_times, 5);
        assert_eq!(s.row(1), &[5.0, 6.0, 7.0, 8.0, 9.0]);
        assert_eq!(s.value(2, 3), 13.0);
        let sub = s.subsample(2);
        assert_eq!(sub.n_times, 3);
        assert_eq!(sub.row(0), &[0.0, 2.0, 4.0]);
        assert!((sub.dt - 1.0).abs() < 1e-15);
    }
}
