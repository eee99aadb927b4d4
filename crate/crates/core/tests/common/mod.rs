//! Seeded random coefficient generators shared by the integration tests.
#![allow(dead_code)]

use qstoch::coeffs::{ito_from_hp, CoefficientBlock, GaugeParameter, HpTriple};
use qstoch::linalg::{self, c, hermitian_part, op_norm, Mat, I};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const IM_KAPPAS: [f64; 4] = [-1.0, 0.0, 0.3, 1.0];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_mat(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| c(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
}

pub fn rand_hermitian(r: &mut ChaCha8Rng, d: usize) -> Mat {
    hermitian_part(&rand_mat(r, d, d))
}

pub fn rand_unitary(r: &mut ChaCha8Rng, d: usize) -> Mat {
    linalg::expm(&(rand_hermitian(r, d) * (I * c(2.0, 0.0))))
}

/// Rescales `m` so that `‖κ m‖ = target`.
fn with_kappa_norm(m: Mat, kappa: GaugeParameter, target: f64) -> Mat {
    let n = op_norm(&m) * kappa.value().norm();
    if n == 0.0 {
        m
    } else {
        m * c(target / n, 0.0)
    }
}

/// Arbitrary (not self-adjoint) block array with `‖κX₁₁‖ < 0.9`.
pub fn rand_block(r: &mut ChaCha8Rng, d: usize, n: usize, kappa: GaugeParameter) -> CoefficientBlock {
    let mut x = CoefficientBlock::from_fn(d, n, |_, _| rand_mat(r, d, d)).unwrap();
    let target = r.random_range(0.05..0.9);
    let e11 = with_kappa_norm(x.channel_block(), kappa, target);
    x.set_channel_block(&e11).unwrap();
    x
}

/// Self-adjoint Stratonovich block array with `‖κE₁₁‖ < 0.9`.
pub fn rand_strat(r: &mut ChaCha8Rng, d: usize, n: usize, kappa: GaugeParameter) -> CoefficientBlock {
    let mut e = CoefficientBlock::zeros(d, n).unwrap();
    e.set(0, 0, rand_hermitian(r, d)).unwrap();
    for j in 1..=n {
        let k = rand_mat(r, d, d);
        e.set(0, j, k.adjoint()).unwrap();
        e.set(j, 0, k).unwrap();
    }
    let target = r.random_range(0.05..0.9);
    e.set_channel_block(&with_kappa_norm(rand_hermitian(r, n * d), kappa, target)).unwrap();
    e
}

pub fn rand_hp(r: &mut ChaCha8Rng, d: usize, n: usize) -> HpTriple {
    HpTriple::new(rand_unitary(r, n * d), rand_mat(r, n * d, d), rand_hermitian(r, d)).unwrap()
}

/// Itô coefficients of a random unitary evolution.
pub fn rand_unitary_ito(r: &mut ChaCha8Rng, d: usize, n: usize) -> CoefficientBlock {
    ito_from_hp(&rand_hp(r, d, n)).unwrap()
}

pub fn kappa(im: f64) -> GaugeParameter {
    GaugeParameter::with_imag(im).unwrap()
}
