//! The three generated systems and their spectral splittings.

use super::etdrk4::SpectralSystem;
use super::fft::SpectralTransform;
use super::{EquationTag, SpectralGrid};
use num_complex::Complex64;

/// Nonlinear term of the Kuramoto-Sivashinsky equation,
/// N(v) = -0.5 i k F{ (F^{-1}{v})^2 }, dealiased by the 2/3 rule.
pub fn ks_nonlinear(
    grid: &SpectralGrid,
    fft: &SpectralTransform,
    v: &[Complex64],
) -> Vec<Complex64> {
    let phys = fft.to_physical(v);
    let squared: Vec<Complex64> = phys.iter().map(|u| u * u).collect();
    let mut spec = squared;
    fft.forward_in_place(&mut spec);
    for (i, (s, &k)) in spec.iter_mut().zip(grid.wavenumbers()).enumerate() {
        *s = if grid.dealias_keep(i) {
            Complex64::new(0.0, -0.5 * k) * *s
        } else {
            Complex64::default()
        };
    }
    spec
}

/// u_t = -u_xx - u_xxxx - u u_x on a periodic domain; L(k) = k^2 - k^4.
pub struct KuramotoSivashinsky;

impl SpectralSystem for KuramotoSivashinsky {
    fn tag(&self) -> EquationTag {
        EquationTag::Ks
    }

    fn linear_operator(&self, grid: &SpectralGrid, _field: usize) -> Vec<f64> {
        grid.wavenumbers()
            .iter()
            .map(|&k| k * k - k.powi(4))
            .collect()
    }

    fn nonlinear(
        &self,
        grid: &SpectralGrid,
        fft: &SpectralTransform,
        state: &[Vec<Complex64>],
        out: &mut [Vec<Complex64>],
    ) {
        out[0] = ks_nonlinear(grid, fft, &state[0]);
    }
}

/// Classic KS initial condition u(x, 0) = cos(x / 16); chaotic on the
/// 32*pi domain where that cosine is exactly one period.
pub fn ks_initial_condition(grid: &SpectralGrid) -> Vec<f64> {
    grid.grid_points().iter().map(|x| (x / 16.0).cos()).collect()
}

/// Two-species reaction-diffusion oscillator:
/// u_t = a + u^2 v - (b + 1) u + d_u u_xx,
/// v_t = b u - u^2 v + d_v v_xx.
/// Diffusion is the exact linear part; the reaction terms go through the
/// nonlinear path. The observed dataset is the u component.
pub struct Brusselator {
    pub a: f64,
    pub b: f64,
    pub d_u: f64,
    pub d_v: f64,
}

impl Default for Brusselator {
    fn default() -> Self {
        // b > 1 + a^2 puts the homogeneous state past the Hopf threshold
        Self {
            a: 1.0,
            b: 3.0,
            d_u: 1.0,
            d_v: 0.02,
        }
    }
}

impl Brusselator {
    /// Homogeneous steady state (u, v) = (a, b/a) plus a small cosine bump.
    pub fn initial_condition(&self, grid: &SpectralGrid, amplitude: f64) -> Vec<Vec<f64>> {
        let two_pi = 2.0 * std::f64::consts::PI;
        let len = grid.domain_length();
        let u = grid
            .grid_points()
            .iter()
            .map(|x| self.a + amplitude * (two_pi * x / len).cos())
            .collect();
        let v = grid
            .grid_points()
            .iter()
            .map(|x| self.b / self.a + amplitude * (2.0 * two_pi * x / len).sin())
            .collect();
        vec![u, v]
    }
}

impl SpectralSystem for Brusselator {
    fn tag(&self) -> EquationTag {
        EquationTag::Brusselator
    }

    fn n_fields(&self) -> usize {
        2
    }

    fn linear_operator(&self, grid: &SpectralGrid, field: usize) -> Vec<f64> {
        let d = if field == 0 { self.d_u } else { self.d_v };
        grid.wavenumbers().iter().map(|&k| -d * k * k).collect()
    }

    fn nonlinear(
        &self,
        grid: &SpectralGrid,
        fft: &SpectralTransform,
        state: &[Vec<Complex64>],
        out: &mut [Vec<Complex64>],
    ) {
        let u = fft.to_physical(&state[0]);
        let v = fft.to_physical(&state[1]);
        let mut ru = Vec::with_capacity(u.len());
        let mut rv = Vec::with_capacity(u.len());
        for (uu, vv) in u.iter().zip(&v) {
            let uuv = uu * uu * vv;
            ru.push(Complex64::new(self.a, 0.0) + uuv - (self.b + 1.0) * uu);
            rv.push(self.b * uu - uuv);
        }
        fft.forward_in_place(&mut ru);
        fft.forward_in_place(&mut rv);
        dealias(grid, &mut ru);
        dealias(grid, &mut rv);
        out[0] = ru;
        out[1] = rv;
    }
}

/// Pattern-forming equation u_t = r u - (1 + d_xx)^2 u - u^3 with
/// L(k) = r - (1 - k^2)^2 and a cubic nonlinearity.
pub struct SwiftHohenberg {
    pub r: f64,
}

impl Default for SwiftHohenberg {
    fn default() -> Self {
        Self { r: 0.7 }
    }
}

impl SwiftHohenberg {
    /// Seeds the linearly unstable band around k = 1 plus a long mode.
    pub fn initial_condition(&self, grid: &SpectralGrid, amplitude: f64) -> Vec<f64> {
        let two_pi = 2.0 * std::f64::consts::PI;
        let len = grid.domain_length();
        grid.grid_points()
            .iter()
            .map(|x| amplitude * x.cos() + 0.1 * amplitude * (two_pi * x / len).sin())
            .collect()
    }
}

impl SpectralSystem for SwiftHohenberg {
    fn tag(&self) -> EquationTag {
        EquationTag::SwiftHohenberg
    }

    fn linear_operator(&self, grid: &SpectralGrid, _field: usize) -> Vec<f64> {
        grid.wavenumbers()
            .iter()
            .map(|&k| {
                let w = 1.0 - k * k;
                self.r - w * w
            })
            .collect()
    }

    fn nonlinear(
        &self,
        grid: &SpectralGrid,
        fft: &SpectralTransform,
        state: &[Vec<Complex64>],
        out: &mut [Vec<Complex64>],
    ) {
        let u = fft.to_physical(&state[0]);
        let mut cubed: Vec<Complex64> = u.iter().map(|v| -(v * v * v)).collect();
        fft.forward_in_place(&mut cubed);
        dealias(grid, &mut cubed);
        out[0] = cubed;
    }
}

fn dealias(grid: &SpectralGrid, spec: &mut [Complex64]) {
    for (i, s) in spec.iter_mut().enumerate() {
        if !grid.dealias_keep(i) {
            *s = Complex64::default();
        }
    }
}
