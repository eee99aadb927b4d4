//! Discrete-time QSDE on a toy Fock space.
//!
//! Time `[0, T]` is cut into slots of width `Δt`; each slot carries a qubit
//! `C²` with basis `|∅⟩, |1⟩` and the increments
//! `ΔA† = √Δt σ₊`, `ΔA = √Δt σ₋`, `ΔΛ = σ₊σ₋`, `Δt·I`.
//!
//! Matrix elements `⟨u ⊗ e(f)| V_n ⋯ V_1 |v ⊗ e(g)⟩` are contracted slot by
//! slot with unnormalized exponential-vector slots `|∅⟩ + √Δt g_j |1⟩`, so a
//! run costs `O(n d³)` and never forms the `2ⁿ`-dimensional state.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::coeffs::{ito_to_strat, strat_to_ito, CoeffError, CoefficientBlock, GaugeParameter};
use crate::itoalg::{exp_generator, ItoAlgError};
use crate::linalg::{self, c, identity, kron, pauli, Mat, C64, I};

/// Richardson error estimate required from the exponential-vector ODE.
pub const ORACLE_TOL: f64 = 1e-10;
/// Each halving of `Δt` must shrink the error below this fraction.
pub const HALVING_RATIO: f64 = 0.75;
/// Errors below this floor count as converged.
pub const ERROR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ToyFockError {
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error(transparent)]
    Algebra(#[from] ItoAlgError),
    #[error("invalid slot model: {0}")]
    InvalidModel(String),
    #[error("exponential-vector ODE not converged (Richardson estimate {estimate:e})")]
    OdeNotConverged { estimate: f64 },
}

/// The four slot increments as `2×2` matrices.
#[derive(Debug, Clone)]
pub struct SlotIncrements {
    pub time: Mat,
    pub creation: Mat,
    pub annihilation: Mat,
    pub gauge: Mat,
}

impl SlotIncrements {
    /// Increment multiplying coefficient `(α, β)` for one channel.
    pub fn get(&self, alpha: usize, beta: usize) -> &Mat {
        match (alpha, beta) {
            (0, 0) => &self.time,
            (1, 0) => &self.creation,
            (0, 1) => &self.annihilation,
            (1, 1) => &self.gauge,
            _ => panic!("single-channel slot has no index ({alpha}, {beta})"),
        }
    }
}

pub fn slot_increments(dt: f64) -> SlotIncrements {
    let s = dt.sqrt();
    SlotIncrements {
        time: identity(2) * c(dt, 0.0),
        creation: pauli::plus() * c(s, 0.0),
        annihilation: pauli::minus() * c(s, 0.0),
        gauge: pauli::plus() * pauli::minus(),
    }
}

/// `ΔQ = ΔA + ΔA†`, the discretized Wiener increment.
pub fn wiener_increment(dt: f64) -> Mat {
    let inc = slot_increments(dt);
    &inc.creation + &inc.annihilation
}

/// `ΔN = ΔΛ + ΔA + ΔA† + Δt`, the discretized Poisson increment.
pub fn poisson_increment(dt: f64) -> Mat {
    let inc = slot_increments(dt);
    &inc.gauge + &inc.creation + &inc.annihilation + &inc.time
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VacuumMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Vacuum mean and variance of `Σ_j A_j` for one self-adjoint slot operator
/// `A` repeated over `n_slots` slots. The product vacuum makes the slots
/// independent, so both moments add slot by slot.
pub fn vacuum_moments(slot_op: &Mat, n_slots: usize) -> VacuumMoments {
    let m1 = slot_op[(0, 0)].re;
    let m2 = (slot_op * slot_op)[(0, 0)].re;
    let (mut mean, mut variance) = (0.0, 0.0);
    for _ in 0..n_slots {
        mean += m1;
        variance += m2 - m1 * m1;
    }
    VacuumMoments { mean, variance }
}

/// Complex step function on `[0, t_end]` with equal-width pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    t_end: f64,
    values: Vec<C64>,
}

impl StepFunction {
    pub fn new(t_end: f64, values: Vec<C64>) -> Result<Self, ToyFockError> {
        if !(t_end > 0.0) || values.is_empty() {
            return Err(ToyFockError::InvalidModel("step function needs T > 0 and at least one piece".into()));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(ToyFockError::InvalidModel("non-finite step function value".into()));
        }
        Ok(Self { t_end, values })
    }

    pub fn constant(t_end: f64, value: C64) -> Result<Self, ToyFockError> {
        Self::new(t_end, vec![value])
    }

    pub fn zero(t_end: f64) -> Result<Self, ToyFockError> {
        Self::constant(t_end, c(0.0, 0.0))
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn piece_width(&self) -> f64 {
        self.t_end / self.values.len() as f64
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        let w = self.piece_width();
        (1..self.values.len()).map(move |k| k as f64 * w)
    }

    pub fn at(&self, t: f64) -> C64 {
        let k = ((t / self.piece_width()).floor() as isize).clamp(0, self.values.len() as isize - 1);
        self.values[k as usize]
    }
}

/// Test functions `f` (bra side) and `g` (ket side) of the exponential vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunctionPair {
    pub f: StepFunction,
    pub g: StepFunction,
}

impl TestFunctionPair {
    pub fn new(f: StepFunction, g: StepFunction) -> Result<Self, ToyFockError> {
        if (f.t_end - g.t_end).abs() > 1e-12 * f.t_end {
            return Err(ToyFockError::InvalidModel("f and g must share the horizon".into()));
        }
        Ok(Self { f, g })
    }

    pub fn vacuum(t_end: f64) -> Result<Self, ToyFockError> {
        Self::new(StepFunction::zero(t_end)?, StepFunction::zero(t_end)?)
    }

    pub fn t_end(&self) -> f64 {
        self.f.t_end
    }

    /// Sorted piece boundaries of both functions, including `0` and `T`.
    fn grid(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = std::iter::once(0.0)
            .chain(self.f.breakpoints())
            .chain(self.g.breakpoints())
            .chain(std::iter::once(self.t_end()))
            .collect();
        pts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        pts
    }

    /// `⟨f, g⟩ = ∫ f̄ g dt`, exact for step functions.
    pub fn inner(&self) -> C64 {
        self.grid()
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                self.f.at(mid).conj() * self.g.at(mid) * (w[1] - w[0])
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scheme {
    /// First-order step `I − i G_{αβ} ⊗ ΔA^{αβ}`.
    ItoEuler,
    /// Exact slot exponential `exp(−i E_{αβ} ⊗ ΔA^{αβ})`.
    SlotExp,
}

/// Single-channel slot discretization of `[0, n_slots·Δt]`.
#[derive(Debug, Clone)]
pub struct SlotModel {
    dt: f64,
    n_slots: usize,
    scheme: Scheme,
    coefficients: CoefficientBlock,
}

impl SlotModel {
    pub fn new(coefficients: CoefficientBlock, scheme: Scheme, dt: f64, t_end: f64) -> Result<Self, ToyFockError> {
        if coefficients.channels() != 1 {
            return Err(ToyFockError::InvalidModel(format!(
                "the slot simulator is single-channel, got N = {}",
                coefficients.channels()
            )));
        }
        if !(dt > 0.0) || !(t_end > 0.0) {
            return Err(ToyFockError::InvalidModel("Δt and T must be positive".into()));
        }
        let n = (t_end / dt).round();
        if (n * dt - t_end).abs() > 1e-9 * t_end || n < 1.0 {
            return Err(ToyFockError::InvalidModel(format!("T = {t_end} is not a multiple of Δt = {dt}")));
        }
        Ok(Self {
            dt,
            n_slots: n as usize,
            scheme,
            coefficients,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn dim(&self) -> usize {
        self.coefficients.dim()
    }

    pub fn coefficients(&self) -> &CoefficientBlock {
        &self.coefficients
    }

    /// `Σ_{αβ} X_{αβ} ⊗ ΔA^{αβ}` on system ⊗ slot (slot index fastest).
    fn lifted(&self) -> Mat {
        let inc = slot_increments(self.dt);
        let d = self.dim();
        let mut acc = linalg::zeros(2 * d, 2 * d);
        for a in 0..2 {
            for b in 0..2 {
                acc += kron(self.coefficients.block(a, b), inc.get(a, b));
            }
        }
        acc
    }

    /// The `2d×2d` slot propagator. Coefficients are time independent, so
    /// every slot uses the same matrix.
    pub fn slot_unitary(&self) -> Mat {
        let x = self.lifted() * (-I);
        match self.scheme {
            Scheme::ItoEuler => identity(2 * self.dim()) + x,
            Scheme::SlotExp => linalg::expm(&x),
        }
    }
}

/// Running partial matrix element `M_j = T_j ⋯ T_1`.
#[derive(Debug, Clone)]
pub struct TransferProduct {
    m: Mat,
    slot: usize,
    /// `V` split into its `d×d` slot blocks `V_{ss'} = (⟨s| ⊗ I) V (I ⊗ |s'⟩)`.
    blocks: [[Mat; 2]; 2],
    dt: f64,
}

impl TransferProduct {
    pub fn new(model: &SlotModel) -> Self {
        let v = model.slot_unitary();
        let d = model.dim();
        let block = |s: usize, t: usize| Mat::from_fn(d, d, |i, j| v[(2 * i + s, 2 * j + t)]);
        Self {
            m: identity(d),
            slot: 0,
            blocks: [[block(0, 0), block(0, 1)], [block(1, 0), block(1, 1)]],
            dt: model.dt,
        }
    }

    /// Contracts one slot with bra value `f_j` and ket value `g_j`.
    pub fn advance(&mut self, f: C64, g: C64) {
        let s = self.dt.sqrt();
        let chi = [c(1.0, 0.0), f * s];
        let phi = [c(1.0, 0.0), g * s];
        let mut t = &self.blocks[0][0] * (chi[0].conj() * phi[0]);
        t += &self.blocks[0][1] * (chi[0].conj() * phi[1]);
        t += &self.blocks[1][0] * (chi[1].conj() * phi[0]);
        t += &self.blocks[1][1] * (chi[1].conj() * phi[1]);
        self.m = t * &self.m;
        self.slot += 1;
    }

    pub fn matrix(&self) -> &Mat {
        &self.m
    }

    pub fn slot(&self) -> usize {
        self.slot
    }
}

fn check_alignment(model: &SlotModel, tf: &TestFunctionPair) -> Result<(), ToyFockError> {
    let t_end = model.dt * model.n_slots as f64;
    if (tf.t_end() - t_end).abs() > 1e-9 * t_end {
        return Err(ToyFockError::InvalidModel(format!(
            "test functions end at {} but the model at {t_end}",
            tf.t_end()
        )));
    }
    for b in tf.f.breakpoints().chain(tf.g.breakpoints()) {
        let k = b / model.dt;
        if (k - k.round()).abs() > 1e-6 {
            return Err(ToyFockError::InvalidModel(format!(
                "test-function breakpoint {b} is not on the slot grid Δt = {}",
                model.dt
            )));
        }
    }
    Ok(())
}

fn check_vectors(d: usize, u: &[C64], v: &[C64]) -> Result<(), ToyFockError> {
    if u.len() != d || v.len() != d {
        return Err(ToyFockError::InvalidModel(format!(
            "system vectors must have length {d}, got {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(())
}

fn sandwich(u: &[C64], m: &Mat, v: &[C64]) -> C64 {
    let mut z = c(0.0, 0.0);
    for i in 0..u.len() {
        for j in 0..v.len() {
            z += u[i].conj() * m[(i, j)] * v[j];
        }
    }
    z
}

/// Partial matrix element `(⟨e(f)| ⊗ I) U (|e(g)⟩ ⊗ I)` as a `d×d` matrix.
pub fn transfer_partial(model: &SlotModel, tf: &TestFunctionPair) -> Result<Mat, ToyFockError> {
    check_alignment(model, tf)?;
    let mut prod = TransferProduct::new(model);
    for j in 0..model.n_slots {
        let mid = (j as f64 + 0.5) * model.dt;
        prod.advance(tf.f.at(mid), tf.g.at(mid));
    }
    Ok(prod.m)
}

/// `⟨u ⊗ e(f)| V_n ⋯ V_1 |v ⊗ e(g)⟩`.
pub fn transfer_matrix_element(
    model: &SlotModel,
    tf: &TestFunctionPair,
    u: &[C64],
    v: &[C64],
) -> Result<C64, ToyFockError> {
    check_vectors(model.dim(), u, v)?;
    Ok(sandwich(u, &transfer_partial(model, tf)?, v))
}

fn rk4_piece(a: &Mat, m: &Mat, len: f64, steps: usize) -> Mat {
    let h = c(len / steps as f64, 0.0);
    let mut m = m.clone();
    for _ in 0..steps {
        let k1 = a * &m;
        let k2 = a * (&m + &k1 * (h * 0.5));
        let k3 = a * (&m + &k2 * (h * 0.5));
        let k4 = a * (&m + &k3 * h);
        m += (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * (h / 6.0);
    }
    m
}

fn oracle_propagator(g: &CoefficientBlock, tf: &TestFunctionPair, steps: usize) -> Mat {
    let t_end = tf.t_end();
    let grid = tf.grid();
    let mut m = identity(g.dim());
    for w in grid.windows(2) {
        let len = w[1] - w[0];
        let mid = 0.5 * (w[0] + w[1]);
        let (fb, gv) = (tf.f.at(mid).conj(), tf.g.at(mid));
        let a = (g.block(0, 0) + g.block(1, 0) * fb + g.block(0, 1) * gv + g.block(1, 1) * (fb * gv)) * (-I);
        let n = ((steps as f64 * len / t_end).ceil() as usize).max(1);
        m = rk4_piece(&a, &m, len, n);
    }
    m
}

/// `⟨u ⊗ e(f)| U_T |v ⊗ e(g)⟩` for the continuous-time Itô equation
/// `dU = −i dG U`, via the exponential-vector ODE
/// `dM/dt = −i(G₀₀ + f̄ G₁₀ + g G₀₁ + f̄ g G₁₁) M` and the factor `e^{⟨f,g⟩}`.
///
/// Integrated with fixed-step RK4 at `ode_steps` and `2·ode_steps`; the
/// step-doubling estimate must fall below [`ORACLE_TOL`].
pub fn oracle_matrix_element(
    g: &CoefficientBlock,
    tf: &TestFunctionPair,
    u: &[C64],
    v: &[C64],
    ode_steps: usize,
) -> Result<C64, ToyFockError> {
    if g.channels() != 1 {
        return Err(ToyFockError::InvalidModel("oracle is single-channel".into()));
    }
    check_vectors(g.dim(), u, v)?;
    let coarse = oracle_propagator(g, tf, ode_steps.max(1));
    let fine = oracle_propagator(g, tf, 2 * ode_steps.max(1));
    let estimate = (&fine - &coarse).norm() / 15.0;
    if !(estimate < ORACLE_TOL) {
        return Err(ToyFockError::OdeNotConverged { estimate });
    }
    Ok(sandwich(u, &fine, v) * tf.inner().exp())
}

/// Itô coefficients of the per-slot exponential limit: `−iG_ED = e^{−i dE} − 1`.
pub fn exponentiated_ito(e: &CoefficientBlock) -> Result<CoefficientBlock, ToyFockError> {
    Ok(exp_generator(&e.scale(-I))?.scale(I))
}

/// Everything a convergence sweep needs.
#[derive(Debug, Clone)]
pub struct SweepSetup {
    /// Stratonovich exponent driving the slot-exponential scheme.
    pub strat: CoefficientBlock,
    /// Itô coefficients of the Stratonovich-Dyson limit, `G(E)`.
    pub ito_sd: CoefficientBlock,
    /// Itô coefficients of the exponentiated-Dyson limit.
    pub ito_ed: CoefficientBlock,
    pub tf: TestFunctionPair,
    pub u: Vec<C64>,
    pub v: Vec<C64>,
    pub ode_steps: usize,
}

impl SweepSetup {
    pub fn from_strat(
        strat: CoefficientBlock,
        kappa: GaugeParameter,
        tf: TestFunctionPair,
        u: Vec<C64>,
        v: Vec<C64>,
    ) -> Result<Self, ToyFockError> {
        let ito_sd = strat_to_ito(&strat, kappa)?;
        let ito_ed = exponentiated_ito(&strat)?;
        Ok(Self {
            strat,
            ito_sd,
            ito_ed,
            tf,
            u,
            v,
            ode_steps: 2000,
        })
    }

    /// Keeps `ito` as the Stratonovich-Dyson target verbatim, so that
    /// everything computed from it is independent of `Im κ`.
    pub fn from_ito(
        ito: CoefficientBlock,
        kappa: GaugeParameter,
        tf: TestFunctionPair,
        u: Vec<C64>,
        v: Vec<C64>,
    ) -> Result<Self, ToyFockError> {
        let strat = ito_to_strat(&ito, kappa)?;
        let ito_ed = exponentiated_ito(&strat)?;
        Ok(Self {
            strat,
            ito_sd: ito,
            ito_ed,
            tf,
            u,
            v,
            ode_steps: 2000,
        })
    }

    pub fn t_end(&self) -> f64 {
        self.tf.t_end()
    }
}

/// Two-piece test functions switching at `T/2`.
pub fn default_test_functions(t_end: f64) -> Result<TestFunctionPair, ToyFockError> {
    TestFunctionPair::new(
        StepFunction::new(t_end, vec![c(0.6, 0.0), c(0.3, -0.2)])?,
        StepFunction::new(t_end, vec![c(0.8, 0.0), c(-0.4, 0.5)])?,
    )
}

/// `u` uniform over the basis, `v` the top basis vector.
pub fn default_vectors(d: usize) -> (Vec<C64>, Vec<C64>) {
    let u = vec![c(1.0 / (d as f64).sqrt(), 0.0); d];
    let mut v = vec![c(0.0, 0.0); d];
    v[d - 1] = c(1.0, 0.0);
    (u, v)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub dt: f64,
    #[serde(skip)]
    pub ito_value: C64,
    #[serde(skip)]
    pub slot_value: C64,
    pub abs_error_ito: f64,
    pub abs_error_ed_target: f64,
    pub abs_error_sd_target: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    #[serde(serialize_with = "linalg::serialize_c64")]
    pub oracle_sd: C64,
    #[serde(serialize_with = "linalg::serialize_c64")]
    pub oracle_ed: C64,
    #[serde(serialize_with = "linalg::serialize_c64")]
    pub extrapolated_ito: C64,
    #[serde(serialize_with = "linalg::serialize_c64")]
    pub extrapolated_slot: C64,
    /// `|extrapolated ITO_EULER − SD oracle|`.
    pub extrapolated_error_ito: f64,
    /// `|extrapolated SLOT_EXP − ED oracle|`.
    pub extrapolated_error_ed: f64,
    /// `|extrapolated SLOT_EXP − SD oracle|`.
    pub extrapolated_error_sd: f64,
    /// `|ED oracle − SD oracle|`.
    pub target_gap: f64,
    pub ito_converging: bool,
    pub slot_converging_to_ed: bool,
}

/// True when each of the last `count` consecutive halvings shrinks the error
/// below `ratio` times the previous one.
pub fn halvings_converge(errors: &[f64], ratio: f64, count: usize) -> bool {
    if errors.len() < 2 {
        return false;
    }
    let pairs: Vec<_> = errors.windows(2).collect();
    let start = pairs.len().saturating_sub(count);
    pairs[start..]
        .iter()
        .all(|w| w[1] <= ERROR_FLOOR || w[1] < ratio * w[0])
}

/// First-order Richardson extrapolation from the two finest steps.
pub fn richardson(h1: f64, s1: C64, h2: f64, s2: C64) -> C64 {
    s2 + (s2 - s1) * (h2 / (h1 - h2))
}

pub fn convergence_sweep(setup: &SweepSetup, dt_list: &[f64]) -> Result<SweepResult, ToyFockError> {
    if dt_list.len() < 2 || dt_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(ToyFockError::InvalidModel("Δt list must be strictly decreasing with ≥ 2 entries".into()));
    }
    let t_end = setup.t_end();
    let (u, v) = (&setup.u, &setup.v);
    let oracle_sd = oracle_matrix_element(&setup.ito_sd, &setup.tf, u, v, setup.ode_steps)?;
    let oracle_ed = oracle_matrix_element(&setup.ito_ed, &setup.tf, u, v, setup.ode_steps)?;

    let values: Vec<(C64, C64)> = dt_list
        .par_iter()
        .map(|&dt| {
            let ito = SlotModel::new(setup.ito_sd.clone(), Scheme::ItoEuler, dt, t_end)?;
            let slot = SlotModel::new(setup.strat.clone(), Scheme::SlotExp, dt, t_end)?;
            Ok((
                transfer_matrix_element(&ito, &setup.tf, u, v)?,
                transfer_matrix_element(&slot, &setup.tf, u, v)?,
            ))
        })
        .collect::<Result<_, ToyFockError>>()?;

    let rows: Vec<SweepRow> = dt_list
        .iter()
        .zip(&values)
        .map(|(&dt, &(ito_value, slot_value))| SweepRow {
            dt,
            ito_value,
            slot_value,
            abs_error_ito: (ito_value - oracle_sd).norm(),
            abs_error_ed_target: (slot_value - oracle_ed).norm(),
            abs_error_sd_target: (slot_value - oracle_sd).norm(),
        })
        .collect();

    let k = rows.len();
    let (a, b) = (&rows[k - 2], &rows[k - 1]);
    let extrapolated_ito = richardson(a.dt, a.ito_value, b.dt, b.ito_value);
    let extrapolated_slot = richardson(a.dt, a.slot_value, b.dt, b.slot_value);
    let ito_errors: Vec<f64> = rows.iter().map(|r| r.abs_error_ito).collect();
    let ed_errors: Vec<f64> = rows.iter().map(|r| r.abs_error_ed_target).collect();

    Ok(SweepResult {
        oracle_sd,
        oracle_ed,
        extrapolated_ito,
        extrapolated_slot,
        extrapolated_error_ito: (extrapolated_ito - oracle_sd).norm(),
        extrapolated_error_ed: (extrapolated_slot - oracle_ed).norm(),
        extrapolated_error_sd: (extrapolated_slot - oracle_sd).norm(),
        target_gap: (oracle_ed - oracle_sd).norm(),
        ito_converging: halvings_converge(&ito_errors, HALVING_RATIO, 3),
        slot_converging_to_ed: halvings_converge(&ed_errors, HALVING_RATIO, 3),
        rows,
    })
}
