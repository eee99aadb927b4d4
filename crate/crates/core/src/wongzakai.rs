//! Colored-noise approximation of a classical Stratonovich equation.
//!
//! A Brownian path is smoothed with the two-sided exponential kernel
//! `G_λ(τ) = e^{−|τ|/λ} / 2λ`. The unitary driven by `V ẇ^λ(t) + H` is then
//! compared pathwise with the Stratonovich solution of
//! `dU = −i(V ∘ dB + H dt)U` on the same Brownian increments.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, c, fro, identity, op_norm, Mat, I};
use crate::rng::GaussianStream;
use crate::toyfock::{halvings_converge, ERROR_FLOOR};

/// Each halving of `λ` must shrink the mean error below this fraction.
pub const WZ_HALVING_RATIO: f64 = 0.85;
/// Kernel must span at least this many path steps.
pub const MIN_KERNEL_STEPS: f64 = 5.0;
/// ODE steps per correlation time used by the sweep.
pub const ODE_STEPS_PER_LAMBDA: f64 = 20.0;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum WzError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("kernel width λ = {lambda} is not resolved by path step {dt_path} (need λ ≥ 5·Δt_path)")]
    GridTooCoarse { lambda: f64, dt_path: f64 },
    #[error("ODE step {dt_ode} exceeds λ/10 = {}", lambda / 10.0)]
    StepTooLarge { dt_ode: f64, lambda: f64 },
    #[error("noise path has not been smoothed")]
    NotSmoothed,
    #[error("{which} is not self-adjoint (residual {residual:e})")]
    NotSelfAdjoint { which: &'static str, residual: f64 },
}

/// Two-sided exponential kernel of correlation time `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kernel {
    lambda: f64,
}

impl Kernel {
    pub fn new(lambda: f64) -> Result<Self, WzError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(WzError::InvalidInput(format!("λ must be positive, got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eval(&self, tau: f64) -> f64 {
        (-tau.abs() / self.lambda).exp() / (2.0 * self.lambda)
    }

    /// `∫₀^∞ G_λ`, the gauge parameter this kernel realizes.
    pub fn kappa(&self) -> f64 {
        0.5
    }

    /// Composite Simpson estimates of `∫_{−∞}^{∞} G_λ` and `∫₀^∞ G_λ`,
    /// truncated at `40λ` with `points_per_lambda` nodes per unit `λ`.
    pub fn quadrature_normalization(&self, points_per_lambda: usize) -> (f64, f64) {
        let n = 40 * points_per_lambda.max(1) * 2;
        let h = 40.0 * self.lambda / n as f64;
        let mut half = self.eval(0.0) + self.eval(40.0 * self.lambda);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            half += w * self.eval(k as f64 * h);
        }
        half *= h / 3.0;
        (2.0 * half, half)
    }
}

/// Brownian increments on a uniform grid, optionally with their smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    seed: u64,
    dt_path: f64,
    increments: Vec<f64>,
    smoothed: Option<Smoothed>,
}

#[derive(Debug, Clone, PartialEq)]
struct Smoothed {
    lambda: f64,
    /// `ẇ^λ` at the grid points `t_k = kΔt`, `k = 0..=n`.
    derivative: Vec<f64>,
    /// Exact `∫ ẇ^λ` over each grid interval.
    interval_integrals: Vec<f64>,
}

impl NoisePath {
    /// Brownian increments of variance `dt_path` drawn from `seed`.
    pub fn brownian(seed: u64, dt_path: f64, n_steps: usize) -> Result<Self, WzError> {
        if !(dt_path > 0.0) || n_steps == 0 {
            return Err(WzError::InvalidInput("path needs Δt > 0 and at least one step".into()));
        }
        Ok(Self {
            seed,
            dt_path,
            increments: GaussianStream::new(seed).normals(n_steps, dt_path),
            smoothed: None,
        })
    }

    pub fn from_increments(dt_path: f64, increments: Vec<f64>) -> Result<Self, WzError> {
        if !(dt_path > 0.0) || increments.is_empty() || increments.iter().any(|x| !x.is_finite()) {
            return Err(WzError::InvalidInput("bad increments".into()));
        }
        Ok(Self {
            seed: 0,
            dt_path,
            increments,
            smoothed: None,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt_path(&self) -> f64 {
        self.dt_path
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn n_steps(&self) -> usize {
        self.increments.len()
    }

    pub fn t_end(&self) -> f64 {
        self.dt_path * self.increments.len() as f64
    }

    /// `B(T)`.
    pub fn endpoint(&self) -> f64 {
        self.increments.iter().sum()
    }

    pub fn lambda(&self) -> Option<f64> {
        self.smoothed.as_ref().map(|s| s.lambda)
    }

    pub fn smoothed_derivative(&self) -> Option<&[f64]> {
        self.smoothed.as_ref().map(|s| s.derivative.as_slice())
    }

    pub fn smoothed_interval_integrals(&self) -> Option<&[f64]> {
        self.smoothed.as_ref().map(|s| s.interval_integrals.as_slice())
    }

    /// `∫₀^T ẇ^λ`.
    pub fn smoothed_endpoint(&self) -> Option<f64> {
        self.smoothed_interval_integrals().map(|v| v.iter().sum())
    }
}

/// Convolves the increments with the kernel: `ẇ^λ(t) = Σ_j G_λ(t − t_j) ΔB_j`,
/// each increment placed at the midpoint `t_j = (j + ½)Δt` of its interval.
///
/// Two exponential recursions give the sum in `O(n)`:
/// `F_k = Σ_{j<k} e^{−(k−j−½)Δt/λ} ΔB_j` and
/// `B_k = Σ_{j≥k} e^{−(j−k+½)Δt/λ} ΔB_j`, so `ẇ^λ(t_k) = (F_k + B_k)/2λ`.
pub fn smooth_path(path: &NoisePath, kernel: &Kernel) -> Result<NoisePath, WzError> {
    let (h, lambda) = (path.dt_path, kernel.lambda);
    if lambda < MIN_KERNEL_STEPS * h * (1.0 - 1e-12) {
        return Err(WzError::GridTooCoarse { lambda, dt_path: h });
    }
    let db = &path.increments;
    let n = db.len();
    let a = (-h / lambda).exp();
    let b = (-h / (2.0 * lambda)).exp();

    let mut fwd = vec![0.0; n + 1];
    for k in 1..=n {
        fwd[k] = a * fwd[k - 1] + b * db[k - 1];
    }
    let mut bwd = vec![0.0; n + 1];
    for k in (0..n).rev() {
        bwd[k] = a * bwd[k + 1] + b * db[k];
    }
    let derivative = (0..=n).map(|k| (fwd[k] + bwd[k]) / (2.0 * lambda)).collect();
    // Exact kernel mass of each increment inside [t_k, t_{k+1}].
    let interval_integrals = (0..n)
        .map(|k| 0.5 * (1.0 - a) * (fwd[k] + bwd[k + 1]) + (1.0 - b) * db[k])
        .collect();

    let mut out = path.clone();
    out.smoothed = Some(Smoothed {
        lambda,
        derivative,
        interval_integrals,
    });
    Ok(out)
}

fn require_self_adjoint(m: &Mat, which: &'static str) -> Result<(), WzError> {
    if !m.is_square() {
        return Err(WzError::InvalidInput(format!("{which} must be square")));
    }
    let residual = fro(&(m - m.adjoint()));
    if residual > 1e-12 * (1.0 + fro(m)) {
        return Err(WzError::NotSelfAdjoint { which, residual });
    }
    Ok(())
}

fn check_pair(v: &Mat, h: &Mat) -> Result<(), WzError> {
    require_self_adjoint(v, "V")?;
    require_self_adjoint(h, "H")?;
    if v.shape() != h.shape() {
        return Err(WzError::InvalidInput("V and H must have the same dimension".into()));
    }
    Ok(())
}

/// `U^λ(T)` for `dU/dt = −i(V ẇ^λ + H)U`.
///
/// Each ODE step spans a whole number of path steps and applies
/// `exp(−i(V ∫ẇ^λ + H τ))` with the exact kernel integral over the step, so
/// the result is unitary up to rounding.
pub fn integrate_colored(v: &Mat, h: &Mat, path: &NoisePath, dt_ode: f64) -> Result<Mat, WzError> {
    check_pair(v, h)?;
    let s = path.smoothed.as_ref().ok_or(WzError::NotSmoothed)?;
    if !(dt_ode > 0.0) || dt_ode > s.lambda / 10.0 * (1.0 + 1e-12) {
        return Err(WzError::StepTooLarge {
            dt_ode,
            lambda: s.lambda,
        });
    }
    let per_step = ((dt_ode / path.dt_path) * (1.0 + 1e-12)).floor().max(1.0) as usize;
    let mut u = identity(v.nrows());
    for chunk in s.interval_integrals.chunks(per_step) {
        let dw: f64 = chunk.iter().sum();
        let tau = chunk.len() as f64 * path.dt_path;
        let gen = (v * c(dw, 0.0) + h * c(tau, 0.0)) * (-I);
        u = linalg::expm(&gen) * u;
    }
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum ReferenceScheme {
    /// `exp(−i(V ΔB + H Δt))` per path step; unitary, strong order one.
    #[default]
    Exponential,
    /// `I − iV ΔB − (½V² + iH)Δt` per path step; strong order one half.
    ItoEuler,
}

/// Stratonovich solution of `dU = −i(V ∘ dB + H dt)U` on the raw increments.
pub fn stratonovich_reference(v: &Mat, h: &Mat, path: &NoisePath, scheme: ReferenceScheme) -> Result<Mat, WzError> {
    check_pair(v, h)?;
    let d = v.nrows();
    let dt = path.dt_path;
    let mut u = identity(d);
    match scheme {
        ReferenceScheme::Exponential => {
            for &db in &path.increments {
                u = linalg::expm(&((v * c(db, 0.0) + h * c(dt, 0.0)) * (-I))) * u;
            }
        }
        ReferenceScheme::ItoEuler => {
            let drift = (v * v * c(-0.5, 0.0) - h * I) * c(dt, 0.0);
            let id = identity(d);
            for &db in &path.increments {
                let step = &id + &drift + v * c(0.0, -db);
                u = step * u;
            }
        }
    }
    Ok(u)
}

/// Parameters of a λ sweep.
#[derive(Debug, Clone, Serialize)]
pub struct WzSetup {
    pub t_end: f64,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Path step; defaults to the largest `T/n` not above `min(λ)²/10`.
    pub dt_path: Option<f64>,
    pub reference: ReferenceScheme,
}

impl WzSetup {
    pub fn new(t_end: f64, lambdas: Vec<f64>, seeds: Vec<u64>) -> Self {
        Self {
            t_end,
            lambdas,
            seeds,
            dt_path: None,
            reference: ReferenceScheme::Exponential,
        }
    }

    fn path_grid(&self) -> Result<(f64, usize), WzError> {
        let lmin = self.lambdas.iter().copied().fold(f64::INFINITY, f64::min);
        let bound = lmin * lmin / 10.0;
        let dt = self.dt_path.unwrap_or(bound);
        if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
            return Err(WzError::InvalidInput(format!("path step {dt} exceeds min(λ)²/10 = {bound}")));
        }
        let n = (self.t_end / dt - 1e-9).ceil().max(1.0) as usize;
        Ok((self.t_end / n as f64, n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WzRow {
    pub lambda: f64,
    pub mean_err: f64,
    pub max_err: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct WzResult {
    pub rows: Vec<WzRow>,
    pub dt_path: f64,
    pub dt_ode: Vec<f64>,
    /// `mean_err(λ/2) / mean_err(λ)` for consecutive rows.
    pub ratios: Vec<f64>,
    pub monotone: bool,
    pub converging: bool,
}

/// Mean and max pathwise error `‖U^λ(T) − U_ref(T)‖` over seeds for each `λ`.
pub fn wz_convergence(v: &Mat, h: &Mat, setup: &WzSetup) -> Result<WzResult, WzError> {
    check_pair(v, h)?;
    if setup.lambdas.is_empty() || setup.lambdas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(WzError::InvalidInput("λ list must be non-empty and strictly decreasing".into()));
    }
    if setup.seeds.is_empty() || !(setup.t_end > 0.0) {
        return Err(WzError::InvalidInput("need at least one seed and T > 0".into()));
    }
    let (dt_path, n) = setup.path_grid()?;
    let kernels: Vec<Kernel> = setup.lambdas.iter().map(|&l| Kernel::new(l)).collect::<Result<_, _>>()?;
    let dt_ode: Vec<f64> = setup
        .lambdas
        .iter()
        .map(|&l| ((l / ODE_STEPS_PER_LAMBDA) / dt_path * (1.0 + 1e-12)).floor().max(1.0) * dt_path)
        .collect();

    // errors[seed][λ]
    let errors: Vec<Vec<f64>> = setup
        .seeds
        .par_iter()
        .map(|&seed| {
            let path = NoisePath::brownian(seed, dt_path, n)?;
            let reference = stratonovich_reference(v, h, &path, setup.reference)?;
            kernels
                .iter()
                .zip(&dt_ode)
                .map(|(k, &dto)| {
                    let colored = integrate_colored(v, h, &smooth_path(&path, k)?, dto)?;
                    Ok(op_norm(&(colored - &reference)))
                })
                .collect::<Result<Vec<f64>, WzError>>()
        })
        .collect::<Result<_, _>>()?;

    let rows: Vec<WzRow> = setup
        .lambdas
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let mut sum = 0.0;
            let mut max = 0.0f64;
            for e in &errors {
                sum += e[i];
                max = max.max(e[i]);
            }
            WzRow {
                lambda,
                mean_err: sum / errors.len() as f64,
                max_err: max,
                n_seeds: errors.len(),
            }
        })
        .collect();
    let means: Vec<f64> = rows.iter().map(|r| r.mean_err).collect();
    let ratios = means.windows(2).map(|w| w[1] / w[0]).collect();
    let monotone = means.windows(2).all(|w| w[1] <= ERROR_FLOOR || w[1] < w[0]);
    let converging = monotone && halvings_converge(&means, WZ_HALVING_RATIO, 3);
    Ok(WzResult {
        rows,
        dt_path,
        dt_ode,
        ratios,
        monotone,
        converging,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pauli;

    fn scalar(x: f64) -> Mat {
        Mat::from_element(1, 1, c(x, 0.0))
    }

    #[test]
    fn kernel_normalization() {
        let k = Kernel::new(0.03).unwrap();
        let (total, half) = k.quadrature_normalization(1000);
        assert!((total - 1.0).abs() < 1e-6);
        assert!((half - k.kappa()).abs() < 1e-6);
        assert_eq!(k.eval(0.01), k.eval(-0.01));
        assert!(Kernel::new(0.0).is_err());
    }

    #[test]
    fn zero_increments_smooth_to_zero() {
        let p = NoisePath::from_increments(1e-3, vec![0.0; 500]).unwrap();
        let s = smooth_path(&p, &Kernel::new(0.01).unwrap()).unwrap();
        assert!(s.smoothed_derivative().unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_increment_reproduces_kernel() {
        let (h, n, j0) = (1e-3, 1000, 437);
        let mut inc = vec![0.0; n];
        inc[j0] = 1.0;
        let k = Kernel::new(0.02).unwrap();
        let s = smooth_path(&NoisePath::from_increments(h, inc).unwrap(), &k).unwrap();
        let t0 = (j0 as f64 + 0.5) * h;
        for (i, &w) in s.smoothed_derivative().unwrap().iter().enumerate() {
            let expect = k.eval(i as f64 * h - t0);
            assert!((w - expect).abs() < 1e-12 * (1.0 + expect), "k = {i}");
        }
        let mass = 1.0 - 0.5 * (-t0 / 0.02f64).exp() - 0.5 * (-(1.0 - t0) / 0.02f64).exp();
        assert!((s.smoothed_endpoint().unwrap() - mass).abs() < 1e-12);
        assert!((mass - 1.0).abs() < 1e-9);
    }

    #[test]
    fn smoothing_matches_direct_convolution() {
        let (h, n) = (2e-3, 300);
        let p = NoisePath::brownian(5, h, n).unwrap();
        let k = Kernel::new(0.015).unwrap();
        let s = smooth_path(&p, &k).unwrap();
        let wd = s.smoothed_derivative().unwrap();
        for i in (0..=n).step_by(17) {
            let direct: f64 = p
                .increments()
                .iter()
                .enumerate()
                .map(|(j, db)| k.eval(i as f64 * h - (j as f64 + 0.5) * h) * db)
                .sum();
            assert!((wd[i] - direct).abs() < 1e-10);
        }
        // Interval integrals against fine Simpson quadrature of the direct sum.
        let direct_at = |t: f64| -> f64 {
            p.increments()
                .iter()
                .enumerate()
                .map(|(j, db)| k.eval(t - (j as f64 + 0.5) * h) * db)
                .sum()
        };
        let ints = s.smoothed_interval_integrals().unwrap();
        for i in [0usize, 1, 150, 299] {
            let (a, m) = (i as f64 * h, 64);
            let hh = h / m as f64;
            let mut acc = direct_at(a) + direct_at(a + h);
            for q in 1..m {
                acc += if q % 2 == 1 { 4.0 } else { 2.0 } * direct_at(a + q as f64 * hh);
            }
            assert!((ints[i] - acc * hh / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn smoothed_endpoint_tracks_brownian_endpoint() {
        let p = NoisePath::brownian(9, 1e-4, 10_000).unwrap();
        let lambda = 0.005;
        let s = smooth_path(&p, &Kernel::new(lambda).unwrap()).unwrap();
        let max_db = p.increments().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let bound = 2.0 * lambda * max_db / p.dt_path();
        assert!((s.smoothed_endpoint().unwrap() - p.endpoint()).abs() <= bound);
    }

    #[test]
    fn grid_and_step_preconditions() {
        let p = NoisePath::brownian(1, 1e-2, 100).unwrap();
        assert!(matches!(
            smooth_path(&p, &Kernel::new(0.04).unwrap()),
            Err(WzError::GridTooCoarse { .. })
        ));
        let s = smooth_path(&p, &Kernel::new(0.05).unwrap()).unwrap();
        let (v, h) = (pauli::x(), pauli::z());
        assert!(matches!(integrate_colored(&v, &h, &s, 0.01), Err(WzError::StepTooLarge { .. })));
        assert!(matches!(integrate_colored(&v, &h, &p, 0.001), Err(WzError::NotSmoothed)));
        let bad = pauli::plus();
        assert!(matches!(
            integrate_colored(&bad, &h, &s, 0.005),
            Err(WzError::NotSelfAdjoint { which: "V", .. })
        ));
    }

    #[test]
    fn zero_coupling_gives_free_evolution() {
        let p = NoisePath::brownian(3, 1e-3, 1000).unwrap();
        let h = pauli::z() * c(0.7, 0.0);
        let v = linalg::zeros(2, 2);
        let free = linalg::expm(&(&h * c(0.0, -1.0)));
        for lambda in [0.05, 0.01] {
            let s = smooth_path(&p, &Kernel::new(lambda).unwrap()).unwrap();
            let u = integrate_colored(&v, &h, &s, lambda / 20.0).unwrap();
            assert!(op_norm(&(u - &free)) < 1e-12);
        }
        for scheme in [ReferenceScheme::Exponential, ReferenceScheme::ItoEuler] {
            let u = stratonovich_reference(&v, &h, &p, scheme).unwrap();
            let tol = if scheme == ReferenceScheme::Exponential { 1e-12 } else { 1e-3 };
            assert!(op_norm(&(u - &free)) < tol);
        }
    }

    #[test]
    fn scalar_solutions() {
        let p = NoisePath::brownian(21, 1e-4, 10_000).unwrap();
        let (one, zero) = (scalar(1.0), scalar(0.0));
        let s = smooth_path(&p, &Kernel::new(0.01).unwrap()).unwrap();
        let u = integrate_colored(&one, &zero, &s, 5e-4).unwrap();
        let bl = s.smoothed_endpoint().unwrap();
        assert!((u[(0, 0)] - c(0.0, -bl).exp()).norm() < 1e-12);

        let exact = c(0.0, -p.endpoint()).exp();
        let r = stratonovich_reference(&one, &zero, &p, ReferenceScheme::Exponential).unwrap();
        assert!((r[(0, 0)] - exact).norm() < 1e-10);
        let e = stratonovich_reference(&one, &zero, &p, ReferenceScheme::ItoEuler).unwrap();
        assert!((e[(0, 0)] - exact).norm() < 0.05);
        // pathwise scalar error equals |e^{−iB^λ} − e^{−iB}|
        let err = (u[(0, 0)] - exact).norm();
        assert!((err - (c(0.0, -bl).exp() - exact).norm()).abs() < 1e-10);
    }

    #[test]
    fn ito_drift_matches_coefficient_conversion() {
        use crate::coeffs::{strat_to_ito, CoefficientBlock, GaugeParameter};
        let (v, h) = (pauli::x(), pauli::z());
        // Classical dipole noise: E₁₀ = E₀₁ = V (E₁₁ = 0) with E₀₀ = H.
        let e = CoefficientBlock::zeros(2, 1)
            .unwrap()
            .with(0, 0, h.clone())
            .unwrap()
            .with(1, 0, v.clone())
            .unwrap()
            .with(0, 1, v.clone())
            .unwrap();
        let g = strat_to_ito(&e, GaugeParameter::symmetric()).unwrap();
        let drift = (&v * &v * c(-0.5, 0.0) - &h * I) * c(1.0, 0.0);
        assert!(fro(&(g.block(0, 0) * (-I) - drift)) < 1e-14);
    }

    #[test]
    fn colored_unitarity() {
        let p = NoisePath::brownian(17, 2.5e-4, 4000).unwrap();
        let (v, h) = (pauli::x(), pauli::z());
        for lambda in [0.05, 0.0125] {
            let s = smooth_path(&p, &Kernel::new(lambda).unwrap()).unwrap();
            let u = integrate_colored(&v, &h, &s, lambda / 20.0).unwrap();
            assert!(fro(&(u.adjoint() * &u - identity(2))) < 1e-8);
            assert!((u.determinant().norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sweep_is_deterministic_and_trivial_without_coupling() {
        let setup = WzSetup::new(0.5, vec![0.1, 0.05], vec![1, 2]);
        let (v, h) = (pauli::x(), pauli::z());
        let a = wz_convergence(&v, &h, &setup).unwrap();
        let b = wz_convergence(&v, &h, &setup).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.rows[0].n_seeds, 2);
        let zero = wz_convergence(&linalg::zeros(2, 2), &h, &setup).unwrap();
        assert!(zero.rows.iter().all(|r| r.max_err < 1e-12));
        assert!(zero.monotone);
    }
}
