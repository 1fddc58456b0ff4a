//! Shared oracles for the integration suites. Everything here recomputes
//! results from first principles (dense matrices, explicit formulas) and
//! stays independent of the structured implementation paths it checks.

use lrsbe::measurement::PilotSet;
use lrsbe::{CMat, CVec, C64};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Circularly-symmetric complex Gaussian sample.
pub fn cg(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_cvec(len: usize, rng: &mut ChaCha8Rng) -> CVec {
    CVec::from_fn(len, |_, _| cg(rng))
}

/// Dense `X ⊗ I_M`.
pub fn dense_operator(p: &PilotSet, m: usize) -> CMat {
    let x = p.matrix();
    let (n, k) = (x.nrows(), x.ncols());
    let mut a = CMat::zeros(m * n, m * k);
    for rn in 0..n {
        for ck in 0..k {
            for d in 0..m {
                a[(rn * m + d, ck * m + d)] = x[(rn, ck)];
            }
        }
    }
    a
}

/// Textbook posterior mean and covariance blocks with explicit `A` and `Γ`.
pub fn dense_e_step(
    a: &CMat,
    gamma: &[f64],
    corr_c: &CMat,
    sigma2: f64,
    r: &CVec,
) -> (CVec, Vec<CMat>) {
    let l = corr_c.nrows();
    let mk = gamma.len() * l;
    let mut big_gamma = CMat::zeros(mk, mk);
    for (b, g) in gamma.iter().enumerate() {
        for i in 0..l {
            for j in 0..l {
                big_gamma[(b * l + i, b * l + j)] = corr_c[(i, j)] * C64::new(*g, 0.0);
            }
        }
    }
    let s = a * &big_gamma * a.adjoint()
        + CMat::identity(a.nrows(), a.nrows()) * C64::new(sigma2, 0.0);
    let s_inv = s.try_inverse().expect("oracle system invertible");
    let mu = &big_gamma * a.adjoint() * &s_inv * r;
    let sigma = &big_gamma - &big_gamma * a.adjoint() * &s_inv * a * &big_gamma;
    let blocks = (0..gamma.len())
        .map(|b| DMatrix::from_fn(l, l, |i, j| sigma[(b * l + i, b * l + j)]))
        .collect();
    (mu, blocks)
}

pub fn random_hermitian_pd(l: usize, rng: &mut ChaCha8Rng) -> CMat {
    let base = CMat::from_fn(l, l, |_, _| cg(rng));
    let mut h = &base * base.adjoint();
    for d in 0..l {
        h[(d, d)] += C64::new(0.5, 0.0);
    }
    let tr = h.trace().re;
    h * C64::new(l as f64 / tr, 0.0)
}
