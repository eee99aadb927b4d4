//! Coefficient-level algebra for quantum stochastic differentials.
//!
//! A differential `dX = X_{αβ} ⊗ dA^{αβ}` is stored as a [`CoefficientBlock`]:
//! an `(N+1)×(N+1)` array of square blocks. Index 0 is the time direction,
//! indices `1..=N` are noise channels. `block(i, 0)` multiplies the creation
//! differential `dA_i†`, `block(0, j)` the annihilation `dA_j`, and
//! `block(i, j)` the gauge process `dΛ_{ij}`.
//!
//! Itô coefficients `G` and Stratonovich coefficients `E` are related by
//!
//! ```text
//! G_{αβ} = E_{αβ} − iκ E_{α·} (I + iκ E₁₁)⁻¹ E_{·β}
//! E_{αβ} = G_{αβ} + iκ G_{α·} (I − iκ G₁₁)⁻¹ G_{·β}
//! ```
//!
//! where `E_{α·}` is the row of channel blocks, `E_{·β}` the column and `E₁₁`
//! the `Nd×Nd` channel-channel block.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, c, fro, hermitian_part, identity, inverse_checked, op_norm, Mat, C64, I};

pub const TOL_ALGEBRA: f64 = 1e-10;
pub const TOL_SERIES: f64 = 1e-12;
pub const COND_MAX: f64 = 1e12;

/// Neumann series terms below this norm end the summation.
pub const SERIES_TERM_CUTOFF: f64 = 1e-14;
const SERIES_MAX_TERMS: usize = 100_000;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CoeffError {
    #[error("gauge parameter must satisfy Re κ = 1/2, got Re κ = {re}")]
    InvalidGauge { re: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entry in block {0}")]
    NonFinite(String),
    #[error("resolvent {which} is numerically singular (condition estimate {cond:e})")]
    SingularResolvent { which: &'static str, cond: f64 },
    #[error("W is not unitary: ‖W†W − I‖ = {residual:e}")]
    NotUnitary { residual: f64 },
    #[error("H is not self-adjoint: ‖H − H†‖ = {residual:e}")]
    NotSelfAdjoint { residual: f64 },
    #[error("Itô coefficients violate the unitarity conditions (max residual {residual:e})")]
    UnitarityViolated { residual: f64 },
    #[error("‖κE₁₁‖ = {norm} ≥ 1: geometric series refused")]
    NormTooLarge { norm: f64 },
    #[error("Wa and Wb do not commute: ‖[Wa, Wb]‖ = {residual:e}")]
    NonCommuting { residual: f64 },
    #[error("factor {which} is numerically singular (condition estimate {cond:e})")]
    SingularFactor { which: &'static str, cond: f64 },
    #[error("not applicable: {0}")]
    NotApplicable(String),
}

/// Complex gauge κ with `Re κ = 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaugeParameter(#[serde(serialize_with = "crate::linalg::serialize_c64")] C64);

impl GaugeParameter {
    pub fn new(kappa: C64) -> Result<Self, CoeffError> {
        if kappa.re != 0.5 || !kappa.im.is_finite() {
            return Err(CoeffError::InvalidGauge { re: kappa.re });
        }
        Ok(Self(kappa))
    }

    pub fn with_imag(im: f64) -> Result<Self, CoeffError> {
        Self::new(c(0.5, im))
    }

    /// The symmetric choice κ = 1/2.
    pub fn symmetric() -> Self {
        Self(c(0.5, 0.0))
    }

    pub fn value(&self) -> C64 {
        self.0
    }

    pub fn imag(&self) -> f64 {
        self.0.im
    }
}

impl Default for GaugeParameter {
    fn default() -> Self {
        Self::symmetric()
    }
}

/// `(N+1)×(N+1)` array of `dim×dim` complex blocks.
///
/// The same container holds Itô and Stratonovich coefficients and, with
/// `dim = d²`, the blocks of a superoperator-valued generator.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientBlock {
    dim: usize,
    channels: usize,
    blocks: Vec<Mat>,
}

/// Label of the `(α, β)` entry as used in reports and coefficient files.
pub fn index_label(alpha: usize, beta: usize, channels: usize) -> String {
    if channels == 1 {
        format!("{alpha}{beta}")
    } else {
        format!("{alpha}_{beta}")
    }
}

impl CoefficientBlock {
    pub fn zeros(dim: usize, channels: usize) -> Result<Self, CoeffError> {
        if dim == 0 || channels == 0 {
            return Err(CoeffError::DimensionMismatch(format!(
                "need d ≥ 1 and N ≥ 1, got d = {dim}, N = {channels}"
            )));
        }
        let n = channels + 1;
        Ok(Self {
            dim,
            channels,
            blocks: vec![linalg::zeros(dim, dim); n * n],
        })
    }

    /// Builds a block array from `(N+1)²` blocks in row-major `(α, β)` order.
    pub fn from_blocks(dim: usize, channels: usize, blocks: Vec<Mat>) -> Result<Self, CoeffError> {
        let mut out = Self::zeros(dim, channels)?;
        let n = channels + 1;
        if blocks.len() != n * n {
            return Err(CoeffError::DimensionMismatch(format!(
                "expected {} blocks, got {}",
                n * n,
                blocks.len()
            )));
        }
        for (k, b) in blocks.into_iter().enumerate() {
            out.set(k / n, k % n, b)?;
        }
        Ok(out)
    }

    pub fn from_fn(
        dim: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize) -> Mat,
    ) -> Result<Self, CoeffError> {
        let n = channels + 1;
        let blocks = (0..n * n).map(|k| f(k / n, k % n)).collect();
        Self::from_blocks(dim, channels, blocks)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of index values `N + 1`.
    pub fn size(&self) -> usize {
        self.channels + 1
    }

    pub fn block(&self, alpha: usize, beta: usize) -> &Mat {
        &self.blocks[alpha * self.size() + beta]
    }

    pub fn set(&mut self, alpha: usize, beta: usize, m: Mat) -> Result<(), CoeffError> {
        let label = index_label(alpha, beta, self.channels);
        if alpha > self.channels || beta > self.channels {
            return Err(CoeffError::DimensionMismatch(format!(
                "index ({alpha}, {beta}) out of range for N = {}",
                self.channels
            )));
        }
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(CoeffError::DimensionMismatch(format!(
                "block {label} is {}x{}, expected {}x{}",
                m.nrows(),
                m.ncols(),
                self.dim,
                self.dim
            )));
        }
        if !linalg::is_finite(&m) {
            return Err(CoeffError::NonFinite(label));
        }
        let n = self.size();
        self.blocks[alpha * n + beta] = m;
        Ok(())
    }

    pub fn with(mut self, alpha: usize, beta: usize, m: Mat) -> Result<Self, CoeffError> {
        self.set(alpha, beta, m)?;
        Ok(self)
    }

    pub fn blocks(&self) -> impl Iterator<Item = ((usize, usize), &Mat)> {
        let n = self.size();
        self.blocks.iter().enumerate().map(move |(k, b)| ((k / n, k % n), b))
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<(), CoeffError> {
        if self.dim != other.dim || self.channels != other.channels {
            return Err(CoeffError::DimensionMismatch(format!(
                "(d, N) = ({}, {}) vs ({}, {})",
                self.dim, self.channels, other.dim, other.channels
            )));
        }
        Ok(())
    }

    /// The `Nd×Nd` channel-channel block.
    pub fn channel_block(&self) -> Mat {
        let (d, n) = (self.dim, self.channels);
        let mut m = linalg::zeros(n * d, n * d);
        for i in 0..n {
            for j in 0..n {
                m.view_mut((i * d, j * d), (d, d))
                    .copy_from(self.block(i + 1, j + 1));
            }
        }
        m
    }

    pub fn set_channel_block(&mut self, m: &Mat) -> Result<(), CoeffError> {
        let (d, n) = (self.dim, self.channels);
        if m.nrows() != n * d || m.ncols() != n * d {
            return Err(CoeffError::DimensionMismatch(format!(
                "channel block must be {}x{}, got {}x{}",
                n * d,
                n * d,
                m.nrows(),
                m.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                self.set(i + 1, j + 1, m.view((i * d, j * d), (d, d)).into_owned())?;
            }
        }
        Ok(())
    }

    /// Row `[X_{α1} … X_{αN}]`, a `d×Nd` matrix.
    pub fn channel_row(&self, alpha: usize) -> Mat {
        let (d, n) = (self.dim, self.channels);
        let mut m = linalg::zeros(d, n * d);
        for j in 0..n {
            m.view_mut((0, j * d), (d, d)).copy_from(self.block(alpha, j + 1));
        }
        m
    }

    /// Column `[X_{1β}; …; X_{Nβ}]`, an `Nd×d` matrix.
    pub fn channel_col(&self, beta: usize) -> Mat {
        let (d, n) = (self.dim, self.channels);
        let mut m = linalg::zeros(n * d, d);
        for i in 0..n {
            m.view_mut((i * d, 0), (d, d)).copy_from(self.block(i + 1, beta));
        }
        m
    }

    pub fn map(&self, f: impl Fn(&Mat) -> Mat) -> Self {
        Self {
            dim: self.dim,
            channels: self.channels,
            blocks: self.blocks.iter().map(f).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|b| b * s)
    }

    pub fn add(&self, other: &Self) -> Result<Self, CoeffError> {
        self.check_same_shape(other)?;
        Ok(Self {
            dim: self.dim,
            channels: self.channels,
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, CoeffError> {
        self.add(&other.scale(c(-1.0, 0.0)))
    }

    /// Adjoint differential: `(X†)_{αβ} = (X_{βα})†`, since `(dA^{αβ})† = dA^{βα}`.
    pub fn dagger(&self) -> Self {
        let n = self.size();
        Self {
            dim: self.dim,
            channels: self.channels,
            blocks: (0..n * n)
                .map(|k| self.block(k % n, k / n).adjoint())
                .collect(),
        }
    }

    /// Largest blockwise Frobenius distance.
    pub fn distance(&self, other: &Self) -> f64 {
        if self.check_same_shape(other).is_err() {
            return f64::INFINITY;
        }
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| fro(&(a - b)))
            .fold(0.0, f64::max)
    }

    pub fn max_block_norm(&self) -> f64 {
        self.blocks.iter().map(fro).fold(0.0, f64::max)
    }

    /// Itô-table product: `(XY)_{αβ} = Σ_j X_{αj} Y_{jβ}` over channel indices.
    pub fn ito_product(&self, other: &Self) -> Result<Self, CoeffError> {
        self.check_same_shape(other)?;
        let n = self.size();
        let blocks = (0..n * n)
            .map(|k| {
                let (a, b) = (k / n, k % n);
                (1..n).fold(linalg::zeros(self.dim, self.dim), |acc, j| {
                    acc + self.block(a, j) * other.block(j, b)
                })
            })
            .collect();
        Ok(Self {
            dim: self.dim,
            channels: self.channels,
            blocks,
        })
    }
}

/// Named residuals with a pass flag.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConversionReport {
    pub residual_norms: BTreeMap<String, f64>,
    pub tolerance: f64,
    pub passed: bool,
}

impl ConversionReport {
    pub fn from_residuals(residuals: impl IntoIterator<Item = (String, f64)>, tolerance: f64) -> Self {
        let residual_norms: BTreeMap<String, f64> = residuals.into_iter().collect();
        let passed = residual_norms.values().all(|r| *r <= tolerance);
        Self {
            residual_norms,
            tolerance,
            passed,
        }
    }

    pub fn max_residual(&self) -> f64 {
        self.residual_norms.values().copied().fold(0.0, f64::max)
    }

    pub fn merge(mut self, other: ConversionReport) -> Self {
        self.residual_norms.extend(other.residual_norms);
        self.tolerance = self.tolerance.min(other.tolerance);
        self.passed = self.residual_norms.values().all(|r| *r <= self.tolerance);
        self
    }
}

fn resolvent(m: &Mat, which: &'static str) -> Result<Mat, CoeffError> {
    inverse_checked(m, COND_MAX).map_err(|e| match e {
        linalg::LinalgError::Singular { cond, .. } => CoeffError::SingularResolvent { which, cond },
        linalg::LinalgError::NotSquare { rows, cols } => {
            CoeffError::DimensionMismatch(format!("{which}: {rows}x{cols}"))
        }
    })
}

/// Shared body of both conversions: `Y = X + s·X_{α·} (I − s X₁₁)⁻¹ X_{·β}`.
fn convert(x: &CoefficientBlock, s: C64, which: &'static str) -> Result<CoefficientBlock, CoeffError> {
    let nd = x.dim * x.channels;
    let r = resolvent(&(identity(nd) - x.channel_block() * s), which)?;
    let n = x.size();
    let cols: Vec<Mat> = (0..n).map(|b| &r * x.channel_col(b)).collect();
    let rows: Vec<Mat> = (0..n).map(|a| x.channel_row(a)).collect();
    CoefficientBlock::from_fn(x.dim, x.channels, |a, b| {
        x.block(a, b) + (&rows[a] * &cols[b]) * s
    })
}

/// Stratonovich → Itô.
pub fn strat_to_ito(e: &CoefficientBlock, kappa: GaugeParameter) -> Result<CoefficientBlock, CoeffError> {
    convert(e, -I * kappa.value(), "I + iκE₁₁")
}

/// Itô → Stratonovich.
pub fn ito_to_strat(g: &CoefficientBlock, kappa: GaugeParameter) -> Result<CoefficientBlock, CoeffError> {
    convert(g, I * kappa.value(), "I − iκG₁₁")
}

/// The `G₀₀` entry of the printed inverse table, `E₀₀ + iκE₀₁(1 + iκE₁₁)⁻¹E₁₀`.
///
/// Kept only to quantify its disagreement with [`strat_to_ito`], which uses
/// the compact form (minus sign).
pub fn printed_inverse_g00(e: &CoefficientBlock, kappa: GaugeParameter) -> Result<Mat, CoeffError> {
    let k = kappa.value();
    let nd = e.dim * e.channels;
    let r = resolvent(&(identity(nd) + e.channel_block() * (I * k)), "I + iκE₁₁")?;
    Ok(e.block(0, 0) + e.channel_row(0) * r * e.channel_col(0) * (I * k))
}

/// Residuals `‖E_{αβ}† − E_{βα}‖`.
pub fn check_strat_selfadjoint(e: &CoefficientBlock) -> ConversionReport {
    check_strat_selfadjoint_tol(e, TOL_ALGEBRA)
}

pub fn check_strat_selfadjoint_tol(e: &CoefficientBlock, tol: f64) -> ConversionReport {
    let n = e.size();
    let residuals = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).map(|(a, b)| {
        (
            format!("E{}^† − E{}", index_label(a, b, e.channels), index_label(b, a, e.channels)),
            fro(&(e.block(a, b).adjoint() - e.block(b, a))),
        )
    });
    ConversionReport::from_residuals(residuals, tol)
}

/// Blocks of `i G_{βα}† − i G_{αβ} + Σ_j G_{jα}† G_{jβ}`; all vanish iff the
/// Itô differential generates a unitary.
pub fn unitarity_defect(g: &CoefficientBlock) -> CoefficientBlock {
    let n = g.size();
    CoefficientBlock::from_fn(g.dim, g.channels, |a, b| {
        let quad = (1..n).fold(linalg::zeros(g.dim, g.dim), |acc, j| {
            acc + g.block(j, a).adjoint() * g.block(j, b)
        });
        g.block(b, a).adjoint() * I - g.block(a, b) * I + quad
    })
    .expect("shape preserved")
}

pub fn check_ito_unitarity(g: &CoefficientBlock) -> ConversionReport {
    check_ito_unitarity_tol(g, TOL_ALGEBRA)
}

pub fn check_ito_unitarity_tol(g: &CoefficientBlock, tol: f64) -> ConversionReport {
    let defect = unitarity_defect(g);
    let residuals = defect
        .blocks()
        .map(|((a, b), m)| (format!("HP{}", index_label(a, b, g.channels)), fro(m)));
    ConversionReport::from_residuals(residuals, tol)
}

/// Hudson–Parthasarathy parameters: `W` (Nd×Nd unitary), `K` (Nd×d), `H` (d×d self-adjoint).
#[derive(Debug, Clone, PartialEq)]
pub struct HpTriple {
    w: Mat,
    k: Mat,
    h: Mat,
}

impl HpTriple {
    pub fn new(w: Mat, k: Mat, h: Mat) -> Result<Self, CoeffError> {
        Self::with_tol(w, k, h, TOL_ALGEBRA)
    }

    pub fn with_tol(w: Mat, k: Mat, h: Mat, tol: f64) -> Result<Self, CoeffError> {
        let d = h.nrows();
        if d == 0 || h.ncols() != d || k.ncols() != d || k.nrows() % d != 0 || k.nrows() == 0 {
            return Err(CoeffError::DimensionMismatch(format!(
                "H {}x{}, K {}x{}",
                h.nrows(),
                h.ncols(),
                k.nrows(),
                k.ncols()
            )));
        }
        let nd = k.nrows();
        if w.nrows() != nd || w.ncols() != nd {
            return Err(CoeffError::DimensionMismatch(format!(
                "W must be {nd}x{nd}, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        let wres = fro(&(w.adjoint() * &w - identity(nd)));
        if wres > tol {
            return Err(CoeffError::NotUnitary { residual: wres });
        }
        let hres = fro(&(&h - h.adjoint()));
        if hres > tol {
            return Err(CoeffError::NotSelfAdjoint { residual: hres });
        }
        Ok(Self { w, k, h })
    }

    pub fn w(&self) -> &Mat {
        &self.w
    }
    pub fn k(&self) -> &Mat {
        &self.k
    }
    pub fn h(&self) -> &Mat {
        &self.h
    }
    pub fn dim(&self) -> usize {
        self.h.nrows()
    }
    pub fn channels(&self) -> usize {
        self.k.nrows() / self.h.nrows()
    }
    /// Channel-`j` coupling block `K_j` (zero based).
    pub fn k_channel(&self, j: usize) -> Mat {
        let d = self.dim();
        self.k.view((j * d, 0), (d, d)).into_owned()
    }
}

/// `G₀₀ = H − ½iK†K`, `G_{·0} = K`, `G_{0·} = K†W`, `G₁₁ = i(W − I)`.
pub fn ito_from_hp(hp: &HpTriple) -> Result<CoefficientBlock, CoeffError> {
    let (d, n) = (hp.dim(), hp.channels());
    let mut g = CoefficientBlock::zeros(d, n)?;
    g.set(0, 0, &hp.h - hp.k.adjoint() * &hp.k * c(0.0, 0.5))?;
    let kw = hp.k.adjoint() * &hp.w;
    for i in 0..n {
        g.set(i + 1, 0, hp.k_channel(i))?;
        g.set(0, i + 1, kw.view((0, i * d), (d, d)).into_owned())?;
    }
    g.set_channel_block(&((&hp.w - identity(n * d)) * I))?;
    Ok(g)
}

/// Reads `(W, K, H)` back from unitary Itô coefficients.
///
/// `W = I − iG₁₁`, `K = G_{·0}`, `H = ½(G₀₀ + G₀₀†)`. The report carries the
/// consistency residuals (`G_{0·} = K†W`, `G₀₀ = H − ½iK†K`, `W` unitary).
pub fn hp_from_ito(g: &CoefficientBlock) -> Result<(HpTriple, ConversionReport), CoeffError> {
    hp_from_ito_tol(g, TOL_ALGEBRA)
}

pub fn hp_from_ito_tol(g: &CoefficientBlock, tol: f64) -> Result<(HpTriple, ConversionReport), CoeffError> {
    let unitarity = check_ito_unitarity_tol(g, tol);
    if !unitarity.passed {
        return Err(CoeffError::UnitarityViolated {
            residual: unitarity.max_residual(),
        });
    }
    let nd = g.dim * g.channels;
    let w = identity(nd) - g.channel_block() * I;
    let k = g.channel_col(0);
    let h = hermitian_part(g.block(0, 0));
    let hp = HpTriple::with_tol(w, k, h, tol)?;
    let g_back = ito_from_hp(&hp)?;
    let mut residuals = vec![
        ("W†W − I".to_string(), fro(&(hp.w.adjoint() * &hp.w - identity(nd)))),
        ("WW† − I".to_string(), fro(&(&hp.w * hp.w.adjoint() - identity(nd)))),
        ("G0· − K†W".to_string(), fro(&(g.channel_row(0) - hp.k.adjoint() * &hp.w))),
        (
            "G00 − (H − ½iK†K)".to_string(),
            fro(&(g.block(0, 0) - g_back.block(0, 0))),
        ),
    ];
    residuals.push(("roundtrip".to_string(), g.distance(&g_back)));
    Ok((hp, ConversionReport::from_residuals(residuals, tol)))
}

/// Closed-form parameters obtained directly from Stratonovich coefficients:
/// `W = (I − iκ*E₁₁)(I + iκE₁₁)⁻¹`, `K = (I + iκE₁₁)⁻¹E_{·0}` and the printed
/// Hamiltonian `E₀₀ + Im κ E₀·(I + iκE₁₁)⁻¹E_{·0}`.
#[derive(Debug, Clone)]
pub struct ExplicitChoices {
    pub w: Mat,
    pub k: Mat,
    pub h_printed: Mat,
}

pub fn explicit_choices(e: &CoefficientBlock, kappa: GaugeParameter) -> Result<ExplicitChoices, CoeffError> {
    let k = kappa.value();
    let nd = e.dim * e.channels;
    let e11 = e.channel_block();
    let r = resolvent(&(identity(nd) + &e11 * (I * k)), "I + iκE₁₁")?;
    let w = (identity(nd) - &e11 * (I * k.conj())) * &r;
    let kk = &r * e.channel_col(0);
    let h_printed = e.block(0, 0) + e.channel_row(0) * &r * e.channel_col(0) * c(k.im, 0.0);
    Ok(ExplicitChoices { w, k: kk, h_printed })
}

/// `(I + iκE₁₁)⁻¹` by direct solve and, when `‖κE₁₁‖ < 1`, by the geometric series.
#[derive(Debug, Clone)]
pub struct ResolventPair {
    pub direct: Mat,
    pub series: Option<Mat>,
    /// Operator norm `‖κE₁₁‖`.
    pub norm: f64,
    pub terms: usize,
    /// Set when the series route was refused.
    pub warning: bool,
}

impl ResolventPair {
    /// Difference between the two routes, when both exist.
    pub fn agreement(&self) -> Option<f64> {
        self.series.as_ref().map(|s| fro(&(s - &self.direct)))
    }

    pub fn series(&self) -> Result<&Mat, CoeffError> {
        self.series
            .as_ref()
            .ok_or(CoeffError::NormTooLarge { norm: self.norm })
    }
}

pub fn neumann_resolvent(e11: &Mat, kappa: GaugeParameter) -> Result<ResolventPair, CoeffError> {
    if e11.nrows() != e11.ncols() {
        return Err(CoeffError::DimensionMismatch(format!(
            "E₁₁ must be square, got {}x{}",
            e11.nrows(),
            e11.ncols()
        )));
    }
    let n = e11.nrows();
    let x = e11 * (I * kappa.value());
    let direct = resolvent(&(identity(n) + &x), "I + iκE₁₁")?;
    let norm = op_norm(e11) * kappa.value().norm();
    if norm >= 1.0 {
        return Ok(ResolventPair {
            direct,
            series: None,
            norm,
            terms: 0,
            warning: true,
        });
    }
    let step = -x;
    let mut term = identity(n);
    let mut sum = identity(n);
    let mut terms = 1;
    while terms < SERIES_MAX_TERMS {
        term = &term * &step;
        sum += &term;
        terms += 1;
        if fro(&term) < SERIES_TERM_CUTOFF {
            break;
        }
    }
    Ok(ResolventPair {
        direct,
        series: Some(sum),
        norm,
        terms,
        warning: false,
    })
}

/// Result of adding stochastic Hamiltonians.
#[derive(Debug, Clone)]
pub struct GeneratorSum {
    pub strat: CoefficientBlock,
    pub ito: CoefficientBlock,
}

/// `E = Σ E⁽ⁿ⁾`, `G = G(E)`.
pub fn add_generators(terms: &[CoefficientBlock], kappa: GaugeParameter) -> Result<GeneratorSum, CoeffError> {
    let (first, rest) = terms
        .split_first()
        .ok_or_else(|| CoeffError::DimensionMismatch("no summands".into()))?;
    let strat = rest.iter().try_fold(first.clone(), |acc, e| acc.add(e))?;
    let ito = strat_to_ito(&strat, kappa)?;
    Ok(GeneratorSum { strat, ito })
}

/// Comparison of the Hamiltonian of a sum of diffusive (`E₁₁ = 0`) generators
/// against the per-summand formula `Σ H⁽ⁿ⁾ − Re κ Σ K⁽ⁿ⁾†K⁽ⁿ⁾`.
#[derive(Debug, Clone, Serialize)]
pub struct DiffusiveSumComparison {
    /// `‖K − Σ K⁽ⁿ⁾‖`.
    pub k_residual: f64,
    /// `‖H_general − H_per_summand‖`.
    pub h_deviation: f64,
    /// `‖Σ_{m≠n} K⁽ᵐ⁾†K⁽ⁿ⁾‖`, the cross terms the per-summand formula omits.
    pub cross_term_norm: f64,
    /// Deviation of `H_general` from `Σ E₀₀⁽ⁿ⁾ + Im κ (ΣK)†(ΣK)`.
    pub general_rule_residual: f64,
}

pub fn compare_diffusive_sum(
    terms: &[CoefficientBlock],
    kappa: GaugeParameter,
) -> Result<DiffusiveSumComparison, CoeffError> {
    if terms.iter().any(|e| e.channel_block().iter().any(|z| *z != c(0.0, 0.0))) {
        return Err(CoeffError::NotApplicable(
            "per-summand comparison needs E₁₁ = 0 in every summand".into(),
        ));
    }
    let sum = add_generators(terms, kappa)?;
    let d = sum.strat.dim();
    let h_general = hermitian_part(sum.ito.block(0, 0));
    let k_total = sum.ito.channel_col(0);
    let ks: Vec<Mat> = terms.iter().map(|e| e.channel_col(0)).collect();
    let k_sum = ks.iter().fold(linalg::zeros(k_total.nrows(), d), |a, k| a + k);
    let kap = kappa.value();
    let h_n: Vec<Mat> = terms
        .iter()
        .map(|e| {
            let k = e.channel_col(0);
            e.block(0, 0) + e.channel_row(0) * &k * c(kap.im, 0.0)
        })
        .collect();
    let h_per = h_n.iter().fold(linalg::zeros(d, d), |a, h| a + h)
        - ks.iter().fold(linalg::zeros(d, d), |a, k| a + k.adjoint() * k) * c(kap.re, 0.0);
    let mut cross = linalg::zeros(d, d);
    for (m, km) in ks.iter().enumerate() {
        for (n, kn) in ks.iter().enumerate() {
            if m != n {
                cross += km.adjoint() * kn;
            }
        }
    }
    let e00_sum = terms.iter().fold(linalg::zeros(d, d), |a, e| a + e.block(0, 0));
    let general = e00_sum + sum.strat.channel_row(0) * sum.strat.channel_col(0) * c(kap.im, 0.0);
    Ok(DiffusiveSumComparison {
        k_residual: fro(&(k_total - k_sum)),
        h_deviation: fro(&(&h_general - h_per)),
        cross_term_norm: fro(&cross),
        general_rule_residual: fro(&(h_general - general)),
    })
}

fn factor_inverse(m: &Mat, which: &'static str) -> Result<Mat, CoeffError> {
    inverse_checked(m, COND_MAX).map_err(|e| match e {
        linalg::LinalgError::Singular { cond, .. } => CoeffError::SingularFactor { which, cond },
        linalg::LinalgError::NotSquare { rows, cols } => {
            CoeffError::DimensionMismatch(format!("{which}: {rows}x{cols}"))
        }
    })
}

fn check_commuting_pair(wa: &Mat, wb: &Mat) -> Result<usize, CoeffError> {
    let d = wa.nrows();
    if wa.ncols() != d || wb.nrows() != d || wb.ncols() != d {
        return Err(CoeffError::DimensionMismatch(format!(
            "Wa {}x{}, Wb {}x{}",
            wa.nrows(),
            wa.ncols(),
            wb.nrows(),
            wb.ncols()
        )));
    }
    let comm = fro(&linalg::commutator(wa, wb));
    if comm > TOL_ALGEBRA {
        return Err(CoeffError::NonCommuting { residual: comm });
    }
    factor_inverse(&(wa + identity(d)), "Wa + I")?;
    factor_inverse(&(wb + identity(d)), "Wb + I")?;
    Ok(d)
}

/// Scattering matrix of the sum of two pure-gauge generators at κ = 1/2:
/// `W = Wa S† S⁻¹ Wb` with `S = 3 + Wa + Wb − Wa Wb`.
pub fn composite_w(wa: &Mat, wb: &Mat) -> Result<Mat, CoeffError> {
    let d = check_commuting_pair(wa, wb)?;
    let s = identity(d) * c(3.0, 0.0) + wa + wb - wa * wb;
    let s_inv = factor_inverse(&s, "3 + Wa + Wb − WaWb")?;
    Ok(wa * s.adjoint() * s_inv * wb)
}

/// Gauge block at κ = 1/2 whose scattering matrix is `W`: `E₁₁ = 2i(W − I)(W + I)⁻¹`.
pub fn gauge_block_from_w(w: &Mat) -> Result<Mat, CoeffError> {
    let d = w.nrows();
    let inv = factor_inverse(&(w + identity(d)), "W + I")?;
    Ok((w - identity(d)) * inv * c(0.0, 2.0))
}

/// The same composite obtained by adding the two gauge generators and reading
/// `W` off the Itô coefficients.
pub fn composite_w_via_addition(wa: &Mat, wb: &Mat) -> Result<Mat, CoeffError> {
    let d = check_commuting_pair(wa, wb)?;
    let mk = |w: &Mat| -> Result<CoefficientBlock, CoeffError> {
        CoefficientBlock::zeros(d, 1)?.with(1, 1, gauge_block_from_w(w)?)
    };
    let sum = add_generators(&[mk(wa)?, mk(wb)?], GaugeParameter::symmetric())?;
    let (hp, _) = hp_from_ito(&sum.ito)?;
    Ok(hp.w)
}
