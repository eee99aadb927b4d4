//! Itô-table algebra for operator- and superoperator-valued generators.
//!
//! Both kinds are `(N+1)×(N+1)` block arrays; the only difference is what a
//! block product means (operator product vs. composition of maps), and under
//! the vectorized representation both are plain matrix products. The shared
//! machinery therefore lives on [`CoefficientBlock`] and the [`ItoAlgebra`]
//! trait.

use thiserror::Error;

use crate::coeffs::{CoeffError, CoefficientBlock};
use crate::linalg::{self, c, fro, identity, kron, matrix_unit_basis, unvectorize, vectorize, Mat, C64, I};

/// Coefficients of `dX = X_{αβ} ⊗ dA^{αβ}` with `d×d` operator blocks.
pub type OperatorGenerator = CoefficientBlock;

const PHI_TERM_CUTOFF: f64 = 1e-14;
const PHI_MAX_TERMS: usize = 200;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ItoAlgError {
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error("series did not converge after {terms} terms (last term norm {last:e})")]
    SeriesDivergence { terms: usize, last: f64 },
    #[error("superoperator must be {expected}x{expected}, got {rows}x{cols}")]
    BadSuperoperator { expected: usize, rows: usize, cols: usize },
}

/// Linear map on `d×d` matrices, stored as a `d²×d²` matrix acting on
/// column-vectorized operators: left multiplication by `A` is `I ⊗ A`, right
/// multiplication by `B` is `Bᵀ ⊗ I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    d: usize,
    matrix: Mat,
}

impl Superoperator {
    pub fn from_matrix(d: usize, matrix: Mat) -> Result<Self, ItoAlgError> {
        if matrix.nrows() != d * d || matrix.ncols() != d * d {
            return Err(ItoAlgError::BadSuperoperator {
                expected: d * d,
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        Ok(Self { d, matrix })
    }

    pub fn zero(d: usize) -> Self {
        Self {
            d,
            matrix: linalg::zeros(d * d, d * d),
        }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            d,
            matrix: identity(d * d),
        }
    }

    /// `X ↦ A X`.
    pub fn left(a: &Mat) -> Self {
        let d = a.nrows();
        Self {
            d,
            matrix: kron(&identity(d), a),
        }
    }

    /// `X ↦ X B`.
    pub fn right(b: &Mat) -> Self {
        let d = b.nrows();
        Self {
            d,
            matrix: kron(&b.transpose(), &identity(d)),
        }
    }

    /// `X ↦ A X B`.
    pub fn sandwich(a: &Mat, b: &Mat) -> Self {
        Self {
            d: a.nrows(),
            matrix: kron(&b.transpose(), a),
        }
    }

    /// Hamiltonian derivation `X ↦ i[H, X]`.
    pub fn hamiltonian(h: &Mat) -> Self {
        Self::left(h).sub(&Self::right(h)).scale(I)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat {
        self.matrix
    }

    pub fn apply(&self, x: &Mat) -> Mat {
        unvectorize(&(&self.matrix * vectorize(x)), self.d)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            d: self.d,
            matrix: &self.matrix * &other.matrix,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            d: self.d,
            matrix: &self.matrix + &other.matrix,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            d: self.d,
            matrix: &self.matrix - &other.matrix,
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            d: self.d,
            matrix: &self.matrix * s,
        }
    }

    /// Largest `‖L(X†) − L(X)†‖` over the matrix-unit basis.
    pub fn reality_residual(&self) -> f64 {
        matrix_unit_basis(self.d)
            .iter()
            .map(|x| fro(&(self.apply(&x.adjoint()) - self.apply(x).adjoint())))
            .fold(0.0, f64::max)
    }

    /// Largest `‖L(XY) − L(X)L(Y)‖` over pairs of matrix units.
    pub fn homomorphism_residual(&self) -> f64 {
        let basis = matrix_unit_basis(self.d);
        let images: Vec<Mat> = basis.iter().map(|x| self.apply(x)).collect();
        let mut worst: f64 = 0.0;
        for (x, lx) in basis.iter().zip(&images) {
            for (y, ly) in basis.iter().zip(&images) {
                worst = worst.max(fro(&(self.apply(&(x * y)) - lx * ly)));
            }
        }
        worst
    }

    /// Largest `‖𝔇_L(X, Y)‖` over pairs of matrix units; zero iff `L` is a derivation.
    pub fn derivation_residual(&self) -> f64 {
        let basis = matrix_unit_basis(self.d);
        let mut worst: f64 = 0.0;
        for x in &basis {
            for y in &basis {
                worst = worst.max(fro(&dissipation_eval(self, x, y)));
            }
        }
        worst
    }
}

/// Superoperator-valued generator `dL = 𝓛_{αβ} ⊗ dA^{αβ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperGenerator {
    d: usize,
    blocks: CoefficientBlock,
}

impl SuperGenerator {
    pub fn zeros(d: usize, channels: usize) -> Result<Self, ItoAlgError> {
        Ok(Self {
            d,
            blocks: CoefficientBlock::zeros(d * d, channels)?,
        })
    }

    pub fn from_blocks(d: usize, blocks: CoefficientBlock) -> Result<Self, ItoAlgError> {
        if blocks.dim() != d * d {
            return Err(ItoAlgError::BadSuperoperator {
                expected: d * d,
                rows: blocks.dim(),
                cols: blocks.dim(),
            });
        }
        Ok(Self { d, blocks })
    }

    pub fn from_fn(
        d: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize) -> Superoperator,
    ) -> Result<Self, ItoAlgError> {
        let blocks = CoefficientBlock::from_fn(d * d, channels, |a, b| f(a, b).into_matrix())?;
        Ok(Self { d, blocks })
    }

    pub fn with(mut self, alpha: usize, beta: usize, op: Superoperator) -> Result<Self, ItoAlgError> {
        self.blocks.set(alpha, beta, op.into_matrix())?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn channels(&self) -> usize {
        self.blocks.channels()
    }

    pub fn size(&self) -> usize {
        self.blocks.size()
    }

    pub fn block(&self, alpha: usize, beta: usize) -> Superoperator {
        Superoperator {
            d: self.d,
            matrix: self.blocks.block(alpha, beta).clone(),
        }
    }

    pub fn apply(&self, alpha: usize, beta: usize, x: &Mat) -> Mat {
        unvectorize(&(self.blocks.block(alpha, beta) * vectorize(x)), self.d)
    }

    pub fn as_blocks(&self) -> &CoefficientBlock {
        &self.blocks
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.blocks.distance(&other.blocks)
    }

    /// Largest `‖𝓛_{αβ}(X†) − 𝓛_{αβ}(X)†‖`. Meaningful for generators whose
    /// blocks are individually real (e.g. classical-noise generators).
    pub fn reality_residual(&self) -> f64 {
        let n = self.size();
        (0..n * n)
            .map(|k| self.block(k / n, k % n).reality_residual())
            .fold(0.0, f64::max)
    }
}

/// Common surface of operator and superoperator generators.
pub trait ItoAlgebra: Sized {
    fn blocks(&self) -> &CoefficientBlock;
    fn rebuild(&self, blocks: CoefficientBlock) -> Self;
}

impl ItoAlgebra for CoefficientBlock {
    fn blocks(&self) -> &CoefficientBlock {
        self
    }
    fn rebuild(&self, blocks: CoefficientBlock) -> Self {
        blocks
    }
}

impl ItoAlgebra for SuperGenerator {
    fn blocks(&self) -> &CoefficientBlock {
        &self.blocks
    }
    fn rebuild(&self, blocks: CoefficientBlock) -> Self {
        Self { d: self.d, blocks }
    }
}

/// Product of two differentials under the Itô table `dA^{αi} dA^{jβ} = δ_{ij} dA^{αβ}`.
pub fn qv_product(dx: &OperatorGenerator, dy: &OperatorGenerator) -> Result<OperatorGenerator, ItoAlgError> {
    Ok(dx.ito_product(dy)?)
}

/// Mutual quadratic variation `[[L, M]]_{αβ} = Σ_j 𝓛_{αj} ∘ 𝓜_{jβ}`.
pub fn qv_bracket(dl: &SuperGenerator, dm: &SuperGenerator) -> Result<SuperGenerator, ItoAlgError> {
    if dl.d != dm.d {
        return Err(CoeffError::DimensionMismatch(format!("d = {} vs {}", dl.d, dm.d)).into());
    }
    Ok(dl.rebuild(dl.blocks.ito_product(&dm.blocks)?))
}

/// Stratonovich differential `dL + ½ (dL)∘²`.
pub fn strat_correction<T: ItoAlgebra>(dl: &T) -> T {
    let b = dl.blocks();
    let sq = b.ito_product(b).expect("same shape");
    dl.rebuild(b.add(&sq.scale(c(0.5, 0.0))).expect("same shape"))
}

/// `φ₂(X) = Σ_{k≥0} X^k/(k+2)!`, i.e. `(e^X − 1 − X)/X²`, by power series.
pub fn phi2(x: &Mat) -> Result<Mat, ItoAlgError> {
    let n = x.nrows();
    let mut term = identity(n) * c(0.5, 0.0);
    let mut sum = term.clone();
    let mut last = fro(&term);
    for k in 1..PHI_MAX_TERMS {
        term = &term * x * c(1.0 / (k as f64 + 2.0), 0.0);
        sum += &term;
        last = fro(&term);
        if last < PHI_TERM_CUTOFF {
            return Ok(sum);
        }
    }
    Err(ItoAlgError::SeriesDivergence {
        terms: PHI_MAX_TERMS,
        last,
    })
}

/// Exponentiated generator `dH = e^{dL} − id = Σ_{n≥1} (dL)^{∘n}/n!`.
///
/// Under the Itô table `(dL)^{∘n}_{αβ} = L_{α·} L₁₁^{n−2} L_{·β}` for `n ≥ 2`, so
/// `dH_{αβ} = L_{αβ} + L_{α·} φ₂(L₁₁) L_{·β}`. The channel block is cross-checked
/// against the direct exponential `e^{L₁₁} − I`.
pub fn exp_generator<T: ItoAlgebra>(dl: &T) -> Result<T, ItoAlgError> {
    let b = dl.blocks();
    let l11 = b.channel_block();
    let phi = phi2(&l11)?;
    let n = b.size();
    let cols: Vec<Mat> = (0..n).map(|j| &phi * b.channel_col(j)).collect();
    let out = CoefficientBlock::from_fn(b.dim(), b.channels(), |a, j| {
        b.block(a, j) + b.channel_row(a) * &cols[j]
    })?;
    let direct = linalg::expm(&l11) - identity(l11.nrows());
    let check = fro(&(out.channel_block() - &direct));
    if check > 1e-10 * (1.0 + fro(&direct)) {
        return Err(ItoAlgError::SeriesDivergence {
            terms: PHI_MAX_TERMS,
            last: check,
        });
    }
    Ok(dl.rebuild(out))
}

/// Dissipation `𝔇_L(X, Y) = L(XY) − L(X)Y − X L(Y)`.
pub fn dissipation_eval(l: &Superoperator, x: &Mat, y: &Mat) -> Mat {
    l.apply(&(x * y)) - l.apply(x) * y - x * l.apply(y)
}

/// `e^{tv}` as a superoperator.
pub fn superop_exponential(v: &Superoperator, t: f64) -> Superoperator {
    Superoperator {
        d: v.d,
        matrix: linalg::expm(&(&v.matrix * c(t, 0.0))),
    }
}

/// Assembles `d(L∘M) = (dL)∘M + L∘(dM) + [[dL, dM]]` blockwise for fixed
/// maps `L`, `M` and their differentials.
pub fn composition_differential(
    l: &Superoperator,
    dl: &SuperGenerator,
    m: &Superoperator,
    dm: &SuperGenerator,
) -> Result<SuperGenerator, ItoAlgError> {
    let bracket = qv_bracket(dl, dm)?;
    SuperGenerator::from_fn(dl.d, dl.channels(), |a, b| {
        dl.block(a, b)
            .compose(m)
            .add(&l.compose(&dm.block(a, b)))
            .add(&bracket.block(a, b))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pauli;

    fn scalar(z: C64) -> Mat {
        Mat::from_element(1, 1, z)
    }

    fn one() -> Mat {
        scalar(c(1.0, 0.0))
    }

    #[test]
    fn ito_table_entries() {
        let z = CoefficientBlock::zeros(1, 1).unwrap();
        let da = z.clone().with(0, 1, one()).unwrap();
        let da_dag = z.clone().with(1, 0, one()).unwrap();
        let dlam = z.clone().with(1, 1, one()).unwrap();
        let dt = z.clone().with(0, 0, one()).unwrap();

        // dA·dA† = dt
        let p = qv_product(&da, &da_dag).unwrap();
        assert_eq!(p, dt);
        // dA†·dA = 0
        assert_eq!(qv_product(&da_dag, &da).unwrap().max_block_norm(), 0.0);
        // dΛ·dΛ = dΛ, dΛ·dA† = dA†, dA·dΛ = dA
        assert_eq!(qv_product(&dlam, &dlam).unwrap(), dlam);
        assert_eq!(qv_product(&dlam, &da_dag).unwrap(), da_dag);
        assert_eq!(qv_product(&da, &dlam).unwrap(), da);
        // anything with dt vanishes
        for x in [&da, &da_dag, &dlam, &dt] {
            assert_eq!(qv_product(&dt, x).unwrap().max_block_norm(), 0.0);
            assert_eq!(qv_product(x, &dt).unwrap().max_block_norm(), 0.0);
        }
    }

    #[test]
    fn bracket_examples() {
        let d = 2;
        let h = Superoperator::hamiltonian(&pauli::z());
        let time_only = SuperGenerator::zeros(d, 1).unwrap().with(0, 0, h.clone()).unwrap();
        let other = SuperGenerator::zeros(d, 1)
            .unwrap()
            .with(1, 1, Superoperator::left(&pauli::x()))
            .unwrap()
            .with(0, 1, h.clone())
            .unwrap();
        assert_eq!(qv_bracket(&other, &time_only).unwrap().as_blocks().max_block_norm(), 0.0);

        let l01 = Superoperator::sandwich(&pauli::plus(), &pauli::minus());
        let m10 = Superoperator::left(&pauli::x());
        let l = SuperGenerator::zeros(d, 1).unwrap().with(0, 1, l01.clone()).unwrap();
        let m = SuperGenerator::zeros(d, 1).unwrap().with(1, 0, m10.clone()).unwrap();
        let br = qv_bracket(&l, &m).unwrap();
        assert!(fro(&(br.block(0, 0).matrix() - l01.compose(&m10).matrix())) < 1e-15);
        for (a, b) in [(0, 1), (1, 0), (1, 1)] {
            assert_eq!(fro(br.block(a, b).matrix()), 0.0);
        }

        let creation = SuperGenerator::zeros(d, 1).unwrap().with(1, 0, m10).unwrap();
        assert_eq!(qv_bracket(&creation, &creation).unwrap().as_blocks().max_block_norm(), 0.0);
    }

    #[test]
    fn strat_correction_examples() {
        let d = 2;
        let h = Superoperator::hamiltonian(&pauli::z());
        let regular = SuperGenerator::zeros(d, 1).unwrap().with(0, 0, h.clone()).unwrap();
        assert_eq!(strat_correction(&regular), regular);

        let l10 = Superoperator::hamiltonian(&pauli::x());
        let l01 = Superoperator::hamiltonian(&pauli::y());
        let diff = SuperGenerator::zeros(d, 1)
            .unwrap()
            .with(0, 0, h.clone())
            .unwrap()
            .with(1, 0, l10.clone())
            .unwrap()
            .with(0, 1, l01.clone())
            .unwrap();
        let s = strat_correction(&diff);
        let expect00 = h.add(&l01.compose(&l10).scale(c(0.5, 0.0)));
        assert!(fro(&(s.block(0, 0).matrix() - expect00.matrix())) < 1e-14);
        for (a, b) in [(0, 1), (1, 0), (1, 1)] {
            assert_eq!(s.block(a, b), diff.block(a, b));
        }

        let cc = c(0.7, -0.2);
        let toy = SuperGenerator::zeros(1, 1)
            .unwrap()
            .with(1, 1, Superoperator::from_matrix(1, scalar(cc)).unwrap())
            .unwrap();
        let s = strat_correction(&toy);
        assert!((s.block(1, 1).matrix()[(0, 0)] - (cc + cc * cc * 0.5)).norm() < 1e-15);
    }

    #[test]
    fn exp_generator_examples() {
        let d = 2;
        let h = Superoperator::hamiltonian(&pauli::z());
        let regular = SuperGenerator::zeros(d, 1).unwrap().with(0, 0, h.clone()).unwrap();
        assert!(exp_generator(&regular).unwrap().distance(&regular) < 1e-15);

        let diff = SuperGenerator::zeros(d, 1)
            .unwrap()
            .with(0, 0, h)
            .unwrap()
            .with(1, 0, Superoperator::hamiltonian(&pauli::x()))
            .unwrap()
            .with(0, 1, Superoperator::hamiltonian(&pauli::y()))
            .unwrap();
        let eh = exp_generator(&diff).unwrap();
        assert!(eh.distance(&strat_correction(&diff)) < 1e-14);

        let cc = c(0.4, 1.3);
        let gauge = CoefficientBlock::zeros(1, 1).unwrap().with(1, 1, scalar(cc)).unwrap();
        let eh = exp_generator(&gauge).unwrap();
        assert!((eh.block(1, 1)[(0, 0)] - (cc.exp() - 1.0)).norm() < 1e-14);
    }

    #[test]
    fn exp_generator_matches_term_by_term_powers() {
        // Σ_{n≥1} (dX)^n / n! summed with explicit Itô products.
        let g = CoefficientBlock::from_fn(2, 2, |a, b| {
            Mat::from_fn(2, 2, |i, j| c(0.05 * (a + 2 * b + i) as f64, -0.03 * (b + j + 1) as f64))
        })
        .unwrap();
        let mut power = g.clone();
        let mut sum = g.clone();
        let mut fact = 1.0;
        for n in 2..40 {
            fact *= n as f64;
            power = power.ito_product(&g).unwrap();
            sum = sum.add(&power.scale(c(1.0 / fact, 0.0))).unwrap();
        }
        assert!(exp_generator(&g).unwrap().distance(&sum) < 1e-12);
    }

    #[test]
    fn phi2_limits() {
        let z = phi2(&linalg::zeros(3, 3)).unwrap();
        assert!(fro(&(z - identity(3) * c(0.5, 0.0))) < 1e-16);
        let big = scalar(c(400.0, 0.0));
        assert!(matches!(phi2(&big), Err(ItoAlgError::SeriesDivergence { .. })));
    }

    #[test]
    fn dissipation_examples() {
        let x = Mat::from_fn(2, 2, |i, j| c(i as f64 + 0.3, j as f64 - 0.7));
        let y = Mat::from_fn(2, 2, |i, j| c((i * j) as f64 + 1.0, 0.2 * i as f64));
        let ham = Superoperator::hamiltonian(&pauli::y());
        assert!(fro(&dissipation_eval(&ham, &x, &y)) < 1e-14);
        assert!(ham.derivation_residual() < 1e-14);

        let id = Superoperator::identity(2);
        assert!(fro(&(dissipation_eval(&id, &x, &y) + &x * &y)) < 1e-14);

        let k = pauli::minus();
        let jump = Superoperator::sandwich(&k.adjoint(), &k);
        let (xm, yp) = (pauli::minus(), pauli::plus());
        let kd = k.adjoint();
        let direct = &kd * &xm * &yp * &k - &kd * &xm * &k * &yp - &xm * &kd * &yp * &k;
        let got = dissipation_eval(&jump, &xm, &yp);
        assert!(fro(&(got - &direct)) < 1e-15);
        assert!(fro(&direct) > 0.5);
    }

    #[test]
    fn superop_exponential_examples() {
        let v = Superoperator::hamiltonian(&pauli::z());
        let e0 = superop_exponential(&v, 0.0);
        assert!(fro(&(e0.matrix() - identity(4))) < 1e-15);

        let e = superop_exponential(&v, std::f64::consts::PI);
        assert!(e.homomorphism_residual() < 1e-10);
        let u = linalg::expm(&(pauli::z() * c(0.0, std::f64::consts::PI)));
        let x = Mat::from_fn(2, 2, |i, j| c(i as f64 - 0.5, j as f64 + 0.25));
        assert!(fro(&(e.apply(&x) - &u * &x * u.adjoint())) < 1e-12);

        // Lindblad generator for K = σ₋: unital, not a homomorphism.
        let k = pauli::minus();
        let kk = k.adjoint() * &k;
        let lind = Superoperator::sandwich(&k.adjoint(), &k)
            .sub(&Superoperator::left(&kk).add(&Superoperator::right(&kk)).scale(c(0.5, 0.0)));
        let e1 = superop_exponential(&lind, 1.0);
        assert!(fro(&(e1.apply(&identity(2)) - identity(2))) < 1e-14);
        assert!(e1.homomorphism_residual() > 0.1);
    }

    #[test]
    fn superoperator_vectorization_conventions() {
        let a = Mat::from_fn(3, 3, |i, j| c(i as f64, 1.0 + j as f64));
        let b = Mat::from_fn(3, 3, |i, j| c(1.0 - j as f64, i as f64 * 0.5));
        let x = Mat::from_fn(3, 3, |i, j| c((i + j) as f64, (i * j) as f64 - 1.0));
        assert!(fro(&(Superoperator::left(&a).apply(&x) - &a * &x)) < 1e-13);
        assert!(fro(&(Superoperator::right(&b).apply(&x) - &x * &b)) < 1e-13);
        assert!(fro(&(Superoperator::sandwich(&a, &b).apply(&x) - &a * &x * &b)) < 1e-12);
        let comp = Superoperator::left(&a).compose(&Superoperator::right(&b));
        assert!(fro(&(comp.apply(&x) - &a * &x * &b)) < 1e-12);
        assert!(Superoperator::from_matrix(2, identity(3)).is_err());
    }

    #[test]
    fn composition_rule_matches_slot_realization() {
        // Realize L_t = L + dL and M_t = M + dM on one toy-Fock slot and expand
        // (L + ΔL)∘(M + ΔM) − L∘M; its ΔA^{αβ} coefficients converge to
        // composition_differential as Δt → 0.
        use crate::toyfock::slot_increments;
        let d = 2;
        let l = Superoperator::hamiltonian(&pauli::x());
        let m = Superoperator::sandwich(&pauli::plus(), &pauli::minus());
        let mk = |s: f64| {
            SuperGenerator::from_fn(d, 1, |a, b| {
                Superoperator::from_matrix(
                    d,
                    Mat::from_fn(4, 4, |i, j| c(s * ((i + 2 * j + a) % 3) as f64 - 0.4, 0.3 * (b + i) as f64 - s)),
                )
                .unwrap()
            })
            .unwrap()
        };
        let (dl, dm) = (mk(0.2), mk(-0.5));
        let assembled = composition_differential(&l, &dl, &m, &dm).unwrap();

        // Contract the slot with ⟨χ| … |φ⟩, φ = |∅⟩ + √Δt g|1⟩, and divide by Δt.
        let (f, g) = (c(0.7, -0.2), c(0.4, 0.9));
        let weights = [[c(1.0, 0.0), g], [f.conj(), f.conj() * g]];
        let err_at = |dt: f64| {
            let inc = slot_increments(dt);
            let lift = |gen: &SuperGenerator| {
                let mut acc = linalg::zeros(8, 8);
                for a in 0..2 {
                    for b in 0..2 {
                        acc += kron(gen.block(a, b).matrix(), inc.get(a, b));
                    }
                }
                acc
            };
            let id2 = identity(2);
            let big_l = kron(l.matrix(), &id2) + lift(&dl);
            let big_m = kron(m.matrix(), &id2) + lift(&dm);
            let lhs = &big_l * &big_m - kron(&(l.matrix() * m.matrix()), &id2);
            let phi = [c(1.0, 0.0), g * dt.sqrt()];
            let chi = [c(1.0, 0.0), f * dt.sqrt()];
            let partial = Mat::from_fn(4, 4, |i, j| {
                let mut z = c(0.0, 0.0);
                for s in 0..2 {
                    for t in 0..2 {
                        z += chi[s].conj() * lhs[(2 * i + s, 2 * j + t)] * phi[t];
                    }
                }
                z / dt
            });
            let mut expect = linalg::zeros(4, 4);
            for a in 0..2 {
                for b in 0..2 {
                    expect += assembled.block(a, b).matrix() * weights[a][b];
                }
            }
            (partial - expect).norm()
        };
        let (e1, e2) = (err_at(1e-2), err_at(1e-4));
        assert!(e2 < 0.02 * e1 && e2 < 1e-2, "{e1} {e2}");
    }
}
