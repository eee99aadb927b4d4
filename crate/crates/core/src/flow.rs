//! Evans–Hudson flow generators built from unitary Itô coefficients.
//!
//! For `dU = −i dG U` the Heisenberg flow `X ↦ U†XU` has differential
//! `𝓛_{αβ}(X) ⊗ dA^{αβ}` with
//!
//! ```text
//! 𝓛_{αβ}(X) = i G_{βα}† X − i X G_{αβ} + Σ_j G_{jα}† X G_{jβ}.
//! ```
//!
//! [`differential_oracle`] re-derives the same blocks by expanding
//! `d(U†XU)` with the Itô table, independently of the closed form.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::coeffs::{check_ito_unitarity_tol, CoeffError, CoefficientBlock, HpTriple, TOL_ALGEBRA};
use crate::itoalg::{qv_product, ItoAlgError, SuperGenerator, Superoperator};
use crate::linalg::{self, c, fro, matrix_unit_basis, Mat, I};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FlowError {
    #[error("Itô coefficients violate the unitarity conditions (max residual {residual:e})")]
    UnitarityViolated { residual: f64 },
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error(transparent)]
    Algebra(#[from] ItoAlgError),
}

/// Evans–Hudson maps `𝓛_{αβ}` together with the coefficients they came from.
#[derive(Debug, Clone)]
pub struct FlowGenerator {
    generator: SuperGenerator,
    source: CoefficientBlock,
}

impl FlowGenerator {
    pub fn generator(&self) -> &SuperGenerator {
        &self.generator
    }

    pub fn source(&self) -> &CoefficientBlock {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn size(&self) -> usize {
        self.generator.size()
    }

    pub fn apply(&self, alpha: usize, beta: usize, x: &Mat) -> Mat {
        self.generator.apply(alpha, beta, x)
    }

    /// Largest `‖𝓛_{αβ}(I)‖`.
    pub fn unital_residual(&self) -> f64 {
        let id = linalg::identity(self.dim());
        let n = self.size();
        (0..n * n)
            .map(|k| fro(&self.apply(k / n, k % n, &id)))
            .fold(0.0, f64::max)
    }

    /// Largest `‖𝓛_{αβ}(X†) − 𝓛_{βα}(X)†‖` over the matrix-unit basis.
    pub fn reality_residual(&self) -> f64 {
        let n = self.size();
        let basis = matrix_unit_basis(self.dim());
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                for x in &basis {
                    let r = self.apply(a, b, &x.adjoint()) - self.apply(b, a, x).adjoint();
                    worst = worst.max(fro(&r));
                }
            }
        }
        worst
    }
}

/// Builds the flow generator without checking unitarity of `g`.
pub fn eh_generator_unchecked(g: &CoefficientBlock) -> FlowGenerator {
    let n = g.size();
    let generator = SuperGenerator::from_fn(g.dim(), g.channels(), |a, b| {
        let mut op = Superoperator::left(&(g.block(b, a).adjoint() * I))
            .sub(&Superoperator::right(&(g.block(a, b) * I)));
        for j in 1..n {
            op = op.add(&Superoperator::sandwich(&g.block(j, a).adjoint(), g.block(j, b)));
        }
        op
    })
    .expect("block shapes follow g");
    FlowGenerator {
        generator,
        source: g.clone(),
    }
}

pub fn eh_generator(g: &CoefficientBlock) -> Result<FlowGenerator, FlowError> {
    eh_generator_tol(g, TOL_ALGEBRA)
}

pub fn eh_generator_tol(g: &CoefficientBlock, tol: f64) -> Result<FlowGenerator, FlowError> {
    let report = check_ito_unitarity_tol(g, tol);
    if !report.passed {
        return Err(FlowError::UnitarityViolated {
            residual: report.max_residual(),
        });
    }
    Ok(eh_generator_unchecked(g))
}

/// Wraps arbitrary maps as a flow generator; used to probe the structure
/// equations on generators that do not come from unitary coefficients.
pub fn flow_from_maps(generator: SuperGenerator) -> FlowGenerator {
    let source = CoefficientBlock::zeros(generator.dim(), generator.channels()).expect("valid shape");
    FlowGenerator { generator, source }
}

/// `𝓛_{αβ}(XY) − 𝓛_{αβ}(X)Y − X𝓛_{αβ}(Y) − Σ_j 𝓛_{αj}(X)𝓛_{jβ}(Y)` for every `(α, β)`.
pub fn structure_residual(f: &FlowGenerator, x: &Mat, y: &Mat) -> CoefficientBlock {
    let n = f.size();
    let lx: Vec<Mat> = (0..n * n).map(|k| f.apply(k / n, k % n, x)).collect();
    let ly: Vec<Mat> = (0..n * n).map(|k| f.apply(k / n, k % n, y)).collect();
    let xy = x * y;
    CoefficientBlock::from_fn(f.dim(), n - 1, |a, b| {
        let k = a * n + b;
        let mut r = f.apply(a, b, &xy) - &lx[k] * y - x * &ly[k];
        for j in 1..n {
            r -= &lx[a * n + j] * &ly[j * n + b];
        }
        r
    })
    .expect("shape follows flow")
}

/// Largest structure residual over all pairs of matrix units.
pub fn structure_residual_on_basis(f: &FlowGenerator) -> f64 {
    let basis = matrix_unit_basis(f.dim());
    basis
        .par_iter()
        .map(|x| {
            basis
                .iter()
                .map(|y| structure_residual(f, x, y).max_block_norm())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Vacuum forward derivative `u(X) = 𝓛₀₀(X)`.
pub fn vacuum_forward_derivative(f: &FlowGenerator, x: &Mat) -> Mat {
    f.apply(0, 0, x)
}

/// Coefficients of `d(U†XU)` at `U = I`, expanded as
/// `(dU†)X + X(dU) + (dU†)X(dU)` with `dU = −i dG` and the Itô table.
pub fn differential_oracle(g: &CoefficientBlock, x: &Mat) -> Result<CoefficientBlock, FlowError> {
    let du = g.scale(-I);
    let du_dag = du.dagger();
    let left = du_dag.map(|b| b * x);
    let right = du.map(|b| x * b);
    let quad = qv_product(&left, &du)?;
    Ok(left.add(&right)?.add(&quad)?)
}

/// `i[H, X] + Σ_j K_j†XK_j − ½{Σ_j K_j†K_j, X}`.
pub fn lindblad_heisenberg(hp: &HpTriple, x: &Mat) -> Mat {
    let mut out = (hp.h() * x - x * hp.h()) * I;
    let kk = hp.k().adjoint() * hp.k();
    for j in 0..hp.channels() {
        let kj = hp.k_channel(j);
        out += kj.adjoint() * x * &kj;
    }
    out - (&kk * x + x * &kk) * c(0.5, 0.0)
}

/// Schrödinger-picture counterpart `−i[H, ρ] + Σ_j K_j ρ K_j† − ½{Σ_j K_j†K_j, ρ}`.
pub fn lindblad_schrodinger(hp: &HpTriple, rho: &Mat) -> Mat {
    let mut out = (hp.h() * rho - rho * hp.h()) * (-I);
    let kk = hp.k().adjoint() * hp.k();
    for j in 0..hp.channels() {
        let kj = hp.k_channel(j);
        out += &kj * rho * kj.adjoint();
    }
    out - (&kk * rho + rho * &kk) * c(0.5, 0.0)
}

/// Predual `L_*` with `tr(L(X) ρ) = tr(X L_*(ρ))`.
pub fn predual(l: &Superoperator) -> Superoperator {
    // tr(A B) = vec(Aᵀ)ᵀ vec(B): the predual matrix is T Mᵀ T with T the
    // transpose permutation on vectorized operators.
    let d = l.dim();
    let mut t = linalg::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            t[(i + j * d, j + i * d)] = c(1.0, 0.0);
        }
    }
    Superoperator::from_matrix(d, &t * l.matrix().transpose() * &t).expect("same size")
}

/// Residual tables for one flow generator.
#[derive(Debug, Clone, Serialize)]
pub struct FlowReport {
    pub tolerance: f64,
    pub unital_residual: f64,
    pub reality_residual: f64,
    pub structure_residual: f64,
    pub lindblad_residual: f64,
    pub oracle_residual: f64,
    pub passed: bool,
}

/// Runs every flow check on `g` over the matrix-unit basis.
pub fn flow_report(g: &CoefficientBlock, tol: f64) -> Result<FlowReport, FlowError> {
    let f = eh_generator_tol(g, tol)?;
    let (hp, _) = crate::coeffs::hp_from_ito_tol(g, tol)?;
    let basis = matrix_unit_basis(g.dim());
    let mut lindblad: f64 = 0.0;
    let mut oracle: f64 = 0.0;
    for x in &basis {
        lindblad = lindblad.max(fro(&(f.apply(0, 0, x) - lindblad_heisenberg(&hp, x))));
        let o = differential_oracle(g, x)?;
        let n = f.size();
        for a in 0..n {
            for b in 0..n {
                oracle = oracle.max(fro(&(o.block(a, b) - f.apply(a, b, x))));
            }
        }
    }
    let unital = f.unital_residual();
    let reality = f.reality_residual();
    let structure = structure_residual_on_basis(&f);
    let passed = [unital, reality, structure, lindblad, oracle]
        .iter()
        .all(|r| *r <= tol);
    Ok(FlowReport {
        tolerance: tol,
        unital_residual: unital,
        reality_residual: reality,
        structure_residual: structure,
        lindblad_residual: lindblad,
        oracle_residual: oracle,
        passed,
    })
}
