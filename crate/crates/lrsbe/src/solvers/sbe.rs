//! Element-wise sparse Bayesian learning.
//!
//! The block machinery with `L = 1` and `C = 1`: every entry of the channel
//! carries its own prior variance γ, updated with the classic EM rule
//! `γ_k = Σ_kk + |μ_k|²`. No low-rank branch, no α/β hyperparameters.

use std::time::Instant;

use crate::beamspace::ChannelDims;
use crate::error::Result;
use crate::measurement::{Measurement, PilotSet};
use crate::solvers::sbl::sbl_e_step;
use crate::solvers::{check_problem, rel_change, EstimateResult, IterationTrace, LrsbeOptions};
use crate::{CMat, CVec};

pub fn sbe_estimate(
    meas: &Measurement,
    pilots: &PilotSet,
    dims: &ChannelDims,
    opts: &LrsbeOptions,
) -> Result<EstimateResult> {
    opts.validate()?;
    check_problem(meas, pilots, dims)?;
    let mk = dims.mk();
    let corr_c = CMat::identity(1, 1);
    let start = Instant::now();

    let mut gamma = vec![1.0; mk];
    let mut h_prev = CVec::zeros(mk);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iter = 1;

    while iter <= opts.q_max {
        let (mu, sigmas) = sbl_e_step(pilots, &meas.y, &gamma, &corr_c, meas.sigma2)
            .map_err(|e| e.at_iteration(iter))?;
        for (b, g) in gamma.iter_mut().enumerate() {
            if *g == 0.0 {
                continue;
            }
            *g = (sigmas[b][(0, 0)].re + mu[b].norm_sqr()).max(0.0);
        }
        let top = gamma.iter().cloned().fold(0.0, f64::max);
        if top > 0.0 {
            let threshold = opts.prune_rel * top;
            for g in gamma.iter_mut() {
                if *g < threshold {
                    *g = 0.0;
                }
            }
        }

        let rel = rel_change(&mu, &h_prev);
        let residual = (&meas.y - pilots.forward(&mu)?).norm();
        trace.push(IterationTrace {
            iter,
            rel_change: rel,
            objective: residual * residual,
            residual_norm: residual,
            alpha: f64::NAN,
            beta: f64::NAN,
            nnz_blocks: gamma.iter().filter(|g| **g > 0.0).count(),
            rank_hl: 0,
            estimate: opts.record_iterates.then(|| mu.clone()),
        });

        h_prev = mu;
        if rel <= opts.tol {
            converged = true;
            break;
        }
        iter += 1;
    }

    let iterations = iter.min(opts.q_max);
    Ok(EstimateResult {
        h_s_hat: h_prev.clone(),
        h_l_hat: CVec::zeros(mk),
        h_hat: h_prev,
        iterations,
        converged,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        trace,
    })
}
