//! Iterative shrinkage-thresholding on `min ‖y − Ah‖² + λ‖h‖₁`.
//!
//! Step length `1/T` with `T = λ_max(A^H A)`, shrinkage `λ/(2T)` per step,
//! and the noise-scaled default `λ = c·σ·√(2·log MK)`.

use std::time::Instant;

use crate::beamspace::ChannelDims;
use crate::error::Result;
use crate::measurement::{Measurement, PilotSet};
use crate::solvers::{
    check_problem, rel_change, soft_threshold, EstimateResult, IterationTrace, LrsbeOptions,
};
use crate::{CVec, C64};

pub fn ista_estimate(
    meas: &Measurement,
    pilots: &PilotSet,
    dims: &ChannelDims,
    opts: &LrsbeOptions,
) -> Result<EstimateResult> {
    opts.validate()?;
    check_problem(meas, pilots, dims)?;
    let mk = dims.mk();
    let t_step = pilots.step_length();
    let lambda = opts.ista_lambda_scale * meas.sigma2.sqrt() * (2.0 * (mk as f64).ln()).sqrt();
    let tau = lambda / (2.0 * t_step);
    let start = Instant::now();

    let mut h = CVec::zeros(mk);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iter = 1;

    while iter <= opts.q_max {
        let residual = &meas.y - pilots.forward(&h)?;
        let grad = pilots.adjoint(&residual)?;
        let scale = C64::new(1.0 / t_step, 0.0);
        let h_new = CVec::from_iterator(
            mk,
            h.iter()
                .zip(grad.iter())
                .map(|(hv, gv)| soft_threshold(hv + gv * scale, tau)),
        );

        let rel = rel_change(&h_new, &h);
        let res_new = (&meas.y - pilots.forward(&h_new)?).norm();
        let l1: f64 = h_new.iter().map(|z| z.norm()).sum();
        trace.push(IterationTrace {
            iter,
            rel_change: rel,
            objective: res_new * res_new + lambda * l1,
            residual_norm: res_new,
            alpha: f64::NAN,
            beta: f64::NAN,
            nnz_blocks: h_new.iter().filter(|z| z.norm_sqr() > 0.0).count(),
            rank_hl: 0,
            estimate: opts.record_iterates.then(|| h_new.clone()),
        });

        h = h_new;
        if rel <= opts.tol {
            converged = true;
            break;
        }
        iter += 1;
    }

    let iterations = iter.min(opts.q_max);
    Ok(EstimateResult {
        h_s_hat: h.clone(),
        h_l_hat: CVec::zeros(mk),
        h_hat: h,
        iterations,
        converged,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        trace,
    })
}
