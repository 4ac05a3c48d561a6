//! Fourth-order exponential time differencing with RK4-style stages.
//!
//! The stiff linear part is integrated exactly through e^{hL}; the scheme
//! coefficients Q and f1..f3 are averages of the ETDRK4 kernels over a unit
//! circle of contour points centered at hL(k), which keeps them finite and
//! smooth through hL = 0.

use super::fft::SpectralTransform;
use super::{EquationTag, FieldSeries, PdeError, SpectralGrid};
use num_complex::Complex64;

/// Per-mode scheme coefficients for one linear operator and step size.
#[derive(Debug, Clone)]
pub struct Etdrk4Coefficients {
    /// e^{hL}
    pub e_full: Vec<f64>,
    /// e^{hL/2}
    pub e_half: Vec<f64>,
    pub q: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub f3: Vec<f64>,
}

/// Evaluates the contour-averaged kernels with `m1` equally spaced points
/// r_p = exp(i*pi*(p - 1/2)/m1) on the upper half unit circle; conjugate
/// symmetry makes the real part equal to the full-circle average.
pub fn etdrk4_coefficients(linear: &[f64], h: f64, m1: usize) -> Result<Etdrk4Coefficients, PdeError> {
    if !(h > 0.0) {
        return Err(PdeError::BadTimeStep(h));
    }
    let points: Vec<Complex64> = (1..=m1)
        .map(|p| {
            let theta = std::f64::consts::PI * (p as f64 - 0.5) / m1 as f64;
            Complex64::new(0.0, theta).exp()
        })
        .collect();

    let n = linear.len();
    let mut coeff = Etdrk4Coefficients {
        e_full: Vec::with_capacity(n),
        e_half: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
        f1: Vec::with_capacity(n),
        f2: Vec::with_capacity(n),
        f3: Vec::with_capacity(n),
    };
    for &l in linear {
        let hl = h * l;
        coeff.e_full.push(hl.exp());
        coeff.e_half.push((hl / 2.0).exp());
        let mut q = Complex64::default();
        let mut f1 = Complex64::default();
        let mut f2 = Complex64::default();
        let mut f3 = Complex64::default();
        for &r in &points {
            let z = r + hl;
            let ez = z.exp();
            let z3 = z * z * z;
            q += ((z / 2.0).exp() - 1.0) / z;
            f1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
            f2 += (2.0 + z + ez * (z - 2.0)) / z3;
            f3 += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
        }
        let scale = h / m1 as f64;
        coeff.q.push(q.re * scale);
        coeff.f1.push(f1.re * scale);
        coeff.f2.push(f2.re * scale);
        coeff.f3.push(f3.re * scale);
    }
    Ok(coeff)
}

/// One PDE in its spectral splitting: a diagonal linear operator per field
/// plus a nonlinear term evaluated through physical space.
pub trait SpectralSystem {
    fn tag(&self) -> EquationTag;

    fn n_fields(&self) -> usize {
        1
    }

    /// Which field is recorded into the dataset.
    fn observed_field(&self) -> usize {
        0
    }

    /// Diagonal linear operator L(k) for one field.
    fn linear_operator(&self, grid: &SpectralGrid, field: usize) -> Vec<f64>;

    /// Writes the spectral nonlinear term for every field, already dealiased.
    fn nonlinear(
        &self,
        grid: &SpectralGrid,
        fft: &SpectralTransform,
        state: &[Vec<Complex64>],
        out: &mut [Vec<Complex64>],
    );
}

const BLOW_UP_LIMIT: f64 = 1e6;

/// Numerical health counters collected during a run.
#[derive(Debug, Clone, Default)]
pub struct SolverDiagnostics {
    /// Largest imaginary residue seen when transforming a recorded field
    /// back to physical space, before the real part is kept.
    pub max_imag_residue: f64,
}

/// Integrates `system` from the physical initial fields and records the
/// observed field every step (including t = 0). Aborts with the step index
/// if the solution stops being finite or exceeds the blow-up guard.
pub fn simulate<S: SpectralSystem>(
    system: &S,
    grid: &SpectralGrid,
    initial: &[Vec<f64>],
    t_end: f64,
    h: f64,
) -> Result<FieldSeries, PdeError> {
    simulate_with_diagnostics(system, grid, initial, t_end, h).map(|(series, _)| series)
}

/// As [`simulate`] but also returns the run's numerical health counters.
pub fn simulate_with_diagnostics<S: SpectralSystem>(
    system: &S,
    grid: &SpectralGrid,
    initial: &[Vec<f64>],
    t_end: f64,
    h: f64,
) -> Result<(FieldSeries, SolverDiagnostics), PdeError> {
    if !(h > 0.0) {
        return Err(PdeError::BadTimeStep(h));
    }
    let n = grid.n_points();
    let n_fields = system.n_fields();
    assert_eq!(initial.len(), n_fields, "one initial field per equation field");
    for f in initial {
        if f.len() != n {
            return Err(PdeError::BadInitialCondition {
                got: f.len(),
                expected: n,
            });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(PdeError::BadInitialCondition {
                got: f.len(),
                expected: n,
            });
        }
    }

    let fft = SpectralTransform::new(n);
    let coeffs: Vec<Etdrk4Coefficients> = (0..n_fields)
        .map(|f| etdrk4_coefficients(&system.linear_operator(grid, f), h, 16))
        .collect::<Result<_, _>>()?;

    let steps = (t_end / h).round() as usize;
    let n_times = steps + 1;
    let observed = system.observed_field();
    let mut values = vec![0.0; n * n_times];
    let mut diagnostics = SolverDiagnostics::default();

    let mut state: Vec<Vec<Complex64>> = initial.iter().map(|f| fft.to_spectral(f)).collect();
    record(
        &fft,
        &state[observed],
        &mut values,
        0,
        n_times,
        &mut diagnostics,
    );

    let zeros = || vec![vec![Complex64::default(); n]; n_fields];
    let mut n_v = zeros();
    let mut n_a = zeros();
    let mut n_b = zeros();
    let mut n_c = zeros();
    let mut stage_a = zeros();
    let mut stage_b = zeros();
    let mut stage_c = zeros();

    for step in 1..=steps {
        system.nonlinear(grid, &fft, &state, &mut n_v);
        for f in 0..n_fields {
            let c = &coeffs[f];
            for i in 0..n {
                stage_a[f][i] = c.e_half[i] * state[f][i] + c.q[i] * n_v[f][i];
            }
        }
        system.nonlinear(grid, &fft, &stage_a, &mut n_a);
        for f in 0..n_fields {
            let c = &coeffs[f];
            for i in 0..n {
                stage_b[f][i] = c.e_half[i] * state[f][i] + c.q[i] * n_a[f][i];
            }
        }
        system.nonlinear(grid, &fft, &stage_b, &mut n_b);
        for f in 0..n_fields {
            let c = &coeffs[f];
            for i in 0..n {
                stage_c[f][i] =
                    c.e_half[i] * stage_a[f][i] + c.q[i] * (2.0 * n_b[f][i] - n_v[f][i]);
            }
        }
        system.nonlinear(grid, &fft, &stage_c, &mut n_c);
        for f in 0..n_fields {
            let c = &coeffs[f];
            for i in 0..n {
                state[f][i] = c.e_full[i] * state[f][i]
                    + c.f1[i] * n_v[f][i]
                    + 2.0 * c.f2[i] * (n_a[f][i] + n_b[f][i])
                    + c.f3[i] * n_c[f][i];
            }
            project_real(&mut state[f]);
        }

        let max = record(
            &fft,
            &state[observed],
            &mut values,
            step,
            n_times,
            &mut diagnostics,
        );
        if !max.is_finite() || max > BLOW_UP_LIMIT {
            return Err(PdeError::BlowUp {
                step,
                time: step as f64 * h,
                magnitude: max,
            });
        }
    }

    let series = FieldSeries::new(grid.clone(), system.tag(), 0.0, h, values, 0.0, 0)?;
    Ok((series, diagnostics))
}

/// Projects spectral coefficients onto the conjugate-symmetric subspace,
/// discarding the rounding-level asymmetry that chaotic growth would
/// otherwise amplify into a visible imaginary part.
fn project_real(v: &mut [Complex64]) {
    let n = v.len();
    v[0] = Complex64::new(v[0].re, 0.0);
    if n % 2 == 0 {
        v[n / 2] = Complex64::new(v[n / 2].re, 0.0);
    }
    for i in 1..(n + 1) / 2 {
        let j = n - i;
        let avg = 0.5 * (v[i] + v[j].conj());
        v[i] = avg;
        v[j] = avg.conj();
    }
}

fn record(
    fft: &SpectralTransform,
    spectral: &[Complex64],
    values: &mut [f64],
    step: usize,
    n_times: usize,
    diagnostics: &mut SolverDiagnostics,
) -> f64 {
    let (field, residue) = fft.to_real(spectral);
    diagnostics.max_imag_residue = diagnostics.max_imag_residue.max(residue);
    let mut max = 0.0f64;
    for (i, v) in field.iter().enumerate() {
        values[i * n_times + step] = *v;
        max = max.max(v.abs());
    }
    max
}
