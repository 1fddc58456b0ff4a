//! Orthogonal matching pursuit on the structured operator.
//!
//! Columns of `A = X ⊗ I_M` are `x_k ⊗ e_m`, so correlations come from the
//! structured adjoint and Gram entries reduce to the `K×K` pilot Gram:
//! `⟨a_i, a_j⟩ = (x_{k_i}^H x_{k_j})·δ_{m_i,m_j}`. The active-set least
//! squares is maintained with an incrementally grown Cholesky factor; users
//! sharing a pilot produce literally identical columns, and a column whose
//! admission would make the Gram singular is blacklisted instead.

use std::time::Instant;

use crate::beamspace::ChannelDims;
use crate::error::Result;
use crate::measurement::{Measurement, PilotSet};
use crate::solvers::{check_problem, EstimateResult, IterationTrace, LrsbeOptions};
use crate::{CMat, CVec, C64};

pub fn omp_estimate(
    meas: &Measurement,
    pilots: &PilotSet,
    dims: &ChannelDims,
    opts: &LrsbeOptions,
) -> Result<EstimateResult> {
    opts.validate()?;
    check_problem(meas, pilots, dims)?;
    let m = dims.m();
    let mk = dims.mk();
    let mn = m * pilots.n_pilots();
    let budget = opts.omp_max_support.unwrap_or_else(|| mn.min(mk));
    let noise_stop = (mn as f64 * meas.sigma2).sqrt();
    let numeric_stop = 1e-12 * meas.y.norm();
    let gram = pilots.matrix().adjoint() * pilots.matrix();
    let start = Instant::now();

    let mut support: Vec<usize> = Vec::new();
    let mut blacklist = vec![false; mk];
    // Lower-triangular Cholesky factor of the active Gram, stored row-major
    // as a growing flat triangle.
    let mut chol: Vec<C64> = Vec::new();
    let mut rhs: Vec<C64> = Vec::new();
    let mut h = CVec::zeros(mk);
    let mut residual = meas.y.clone();
    let mut trace = Vec::new();
    let mut converged = residual.norm() <= noise_stop.max(numeric_stop);

    let z0 = pilots.adjoint(&meas.y)?;

    while !converged && support.len() < budget {
        let corr = pilots.adjoint(&residual)?;
        let mut best = usize::MAX;
        let mut best_mag = 0.0;
        for j in 0..mk {
            if blacklist[j] {
                continue;
            }
            let mag = corr[j].norm();
            if mag > best_mag {
                best_mag = mag;
                best = j;
            }
        }
        if best == usize::MAX || best_mag <= 1e-14 * meas.y.norm().max(1.0) {
            break;
        }

        // Try to grow the Cholesky factor with column `best`: solve
        // L w = A_S^H a_best, then the new factor row is [w^H, δ].
        let s = support.len();
        let mut w = vec![C64::new(0.0, 0.0); s];
        for (row, &i) in support.iter().enumerate() {
            let mut acc = cross_gram(&gram, m, i, best);
            for c in 0..row {
                acc -= chol[tri(row, c)] * w[c];
            }
            w[row] = acc / chol[tri(row, row)];
        }
        let diag2 = 1.0 - w.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if diag2 <= 1e-12 {
            // Linearly dependent on the active set (shared pilot): never
            // admissible, and never informative again.
            blacklist[best] = true;
            continue;
        }
        for c in 0..s {
            chol.push(w[c].conj());
        }
        chol.push(C64::new(diag2.sqrt(), 0.0));
        support.push(best);
        blacklist[best] = true;
        rhs.push(z0[best]);

        // Solve L L^H c = rhs by forward/backward substitution.
        let s = support.len();
        let mut fwd = vec![C64::new(0.0, 0.0); s];
        for r in 0..s {
            let mut acc = rhs[r];
            for c in 0..r {
                acc -= chol[tri(r, c)] * fwd[c];
            }
            fwd[r] = acc / chol[tri(r, r)];
        }
        let mut coeffs = vec![C64::new(0.0, 0.0); s];
        for r in (0..s).rev() {
            let mut acc = fwd[r];
            for c in (r + 1)..s {
                acc -= chol[tri(c, r)].conj() * coeffs[c];
            }
            coeffs[r] = acc / chol[tri(r, r)];
        }

        h = CVec::zeros(mk);
        for (idx, &j) in support.iter().enumerate() {
            h[j] = coeffs[idx];
        }
        residual = &meas.y - pilots.forward(&h)?;
        let res_norm = residual.norm();
        converged = res_norm <= noise_stop.max(numeric_stop);

        trace.push(IterationTrace {
            iter: support.len(),
            rel_change: f64::NAN,
            objective: res_norm * res_norm,
            residual_norm: res_norm,
            alpha: f64::NAN,
            beta: f64::NAN,
            nnz_blocks: support.len(),
            rank_hl: 0,
            estimate: opts.record_iterates.then(|| h.clone()),
        });
    }

    Ok(EstimateResult {
        h_s_hat: h.clone(),
        h_l_hat: CVec::zeros(mk),
        h_hat: h,
        iterations: support.len(),
        converged,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        trace,
    })
}

/// Index into the flat lower-triangular factor.
fn tri(r: usize, c: usize) -> usize {
    r * (r + 1) / 2 + c
}

/// `⟨a_i, a_j⟩` for columns `i = k_i·M + m_i`, `j = k_j·M + m_j`.
fn cross_gram(gram: &CMat, m: usize, i: usize, j: usize) -> C64 {
    let (ki, mi) = (i / m, i % m);
    let (kj, mj) = (j / m, j % m);
    if mi == mj {
        gram[(ki, kj)]
    } else {
        C64::new(0.0, 0.0)
    }
}
