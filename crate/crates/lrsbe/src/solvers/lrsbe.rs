//! The joint low-rank and sparse Bayesian estimator and its sparse-only
//! variant.
//!
//! Each iteration alternates four moves inside an EM loop:
//!
//! 1. block-SBL posterior for the sparse component on the residual
//!    `r^S = y − A ĥ^L`, followed by the correlation/weight updates;
//! 2. a gradient step with step length `1/T`, `T = λ_max(A^H A)`, on the
//!    low-rank residual `r^L = y − A ĥ^S`, entrywise soft-thresholded at
//!    `β/(2T)`;
//! 3. singular-value thresholding of the collective matrix
//!    `H^L = [H_1^L, …, H_K^L]` at `√β/2`;
//! 4. closed-form hyperparameter updates for α and β.
//!
//! The loop stops once the combined estimate's relative change drops to the
//! tolerance or the iteration budget is exhausted. The sparse-only variant
//! (`bsbe`) pins `ĥ^L` to zero and skips the β update.

use std::time::Instant;

use nalgebra::SVD;

use crate::beamspace::ChannelDims;
use crate::error::{Error, Result};
use crate::measurement::{Measurement, PilotSet};
use crate::solvers::sbl::{sbl_e_step, update_block_params};
use crate::solvers::{
    check_problem, rel_change, soft_threshold, EstimateResult, IterationTrace, LrsbeOptions,
    TraceSigmaL,
};
use crate::{CMat, CVec, C64};

/// Hyperparameter clamp range for the M-step.
pub const HYPER_CLAMP: (f64, f64) = (1e-8, 1e12);

/// Noise floor multiplier for β. The point-mass β update collapses once the
/// low-rank iterate absorbs measurement noise (its energy inflates the
/// denominator, which weakens the very thresholds that should remove it), so
/// β is floored at the level that keeps the entrywise threshold
/// `τ = β/(2T)` a factor κ above the gradient-domain noise deviation `σ/T`.
pub const BETA_NOISE_FLOOR_FACTOR: f64 = 3.5;

/// All iterates of the estimator at one point of the loop.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Current sparse component estimate.
    pub h_s: CVec,
    /// Current low-rank component estimate.
    pub h_l: CVec,
    pub alpha: f64,
    pub beta: f64,
    /// Block weights γ, zero for pruned blocks.
    pub gamma: Vec<f64>,
    /// Shared correlation matrix C.
    pub corr_c: CMat,
    /// Latest posterior mean.
    pub mu: CVec,
    /// Latest diagonal posterior covariance blocks.
    pub sigma_blocks: Vec<CMat>,
    /// 1-based iteration counter.
    pub iter: usize,
}

/// Gradient step on the low-rank residual followed by the entrywise complex
/// soft threshold at `τ = β/(2T)`.
pub fn lowrank_step(
    p: &PilotSet,
    r_l: &CVec,
    h_l: &CVec,
    beta: f64,
    t_step: f64,
) -> Result<CVec> {
    if t_step <= 0.0 || t_step.is_nan() {
        return Err(Error::Parameter(format!(
            "gradient step length must be positive, got {t_step}"
        )));
    }
    let inner = r_l - p.forward(h_l)?;
    let grad = p.adjoint(&inner)?;
    let tau = beta / (2.0 * t_step);
    let scale = C64::new(1.0 / t_step, 0.0);
    Ok(CVec::from_iterator(
        h_l.len(),
        h_l.iter()
            .zip(grad.iter())
            .map(|(h, g)| soft_threshold(h + g * scale, tau)),
    ))
}

/// Soft-threshold the singular values of the collective low-rank matrix at
/// `√β/2` and re-vectorize.
pub fn svt_step(h_l: &CVec, beta: f64, dims: &ChannelDims) -> Result<CVec> {
    if h_l.len() != dims.mk() {
        return Err(Error::Dimension(format!(
            "h_l length {} does not match M·K = {}",
            h_l.len(),
            dims.mk()
        )));
    }
    if h_l.norm_squared() == 0.0 {
        return Ok(h_l.clone());
    }
    let tau = beta.sqrt() / 2.0;
    let mat = CMat::from_column_slice(dims.m_h, dims.m_v * dims.k_users, h_l.as_slice());
    let out = svt_matrix(mat, tau)?;
    Ok(CVec::from_column_slice(out.as_slice()))
}

/// Per-user variant: threshold each `M_h×M_v` block separately.
pub fn svt_step_per_user(h_l: &CVec, beta: f64, dims: &ChannelDims) -> Result<CVec> {
    if h_l.len() != dims.mk() {
        return Err(Error::Dimension("h_l length mismatch".into()));
    }
    let tau = beta.sqrt() / 2.0;
    let m = dims.m();
    let mut out = CVec::zeros(h_l.len());
    for k in 0..dims.k_users {
        let user = CMat::from_column_slice(dims.m_h, dims.m_v, &h_l.as_slice()[k * m..(k + 1) * m]);
        if user.norm_squared() == 0.0 {
            continue;
        }
        let t = svt_matrix(user, tau)?;
        out.rows_mut(k * m, m).copy_from_slice(t.as_slice());
    }
    Ok(out)
}

fn svt_matrix(mat: CMat, tau: f64) -> Result<CMat> {
    let mut svd = SVD::try_new(mat, true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical("SVD failed to converge"))?;
    for s in svd.singular_values.iter_mut() {
        *s = (*s - tau).max(0.0);
    }
    svd.recompose()
        .map_err(|e| Error::numerical(format!("SVD recompose failed: {e}")))
}

/// Number of singular values surviving the threshold, for trace reporting.
fn thresholded_rank(h_l: &CVec, dims: &ChannelDims) -> usize {
    if h_l.norm_squared() == 0.0 {
        return 0;
    }
    let mat = CMat::from_column_slice(dims.m_h, dims.m_v * dims.k_users, h_l.as_slice());
    mat.singular_values().iter().filter(|s| **s > 1e-12).count()
}

/// Closed-form hyperparameter update.
///
/// `α = MK/(‖y − A(ĥ^S+ĥ^L)‖² + (1/α)·Σ_k(1−θ_k))` with
/// `θ_k = |μ_k|²/Σ_kk` clamped to `[0,1]` (zero where the posterior variance
/// vanished), and `β = MK/(‖ĥ^L‖² + tr(Σ^L))`. Returns the new pair together
/// with the data residual reused by the caller.
pub fn m_step(
    y: &CVec,
    p: &PilotSet,
    state: &SolverState,
    sigma2: f64,
    t_step: f64,
    opts: &LrsbeOptions,
) -> Result<(f64, f64, CVec)> {
    let mk = state.h_s.len() as f64;
    let combined = &state.h_s + &state.h_l;
    let residual = y - p.forward(&combined)?;
    let r2 = residual.norm_squared();

    let l = state.corr_c.nrows();
    let mut theta_comp = 0.0;
    for (b, sig) in state.sigma_blocks.iter().enumerate() {
        for i in 0..l {
            let skk = sig[(i, i)].re;
            let theta = if skk > 0.0 {
                (state.mu[b * l + i].norm_sqr() / skk).clamp(0.0, 1.0)
            } else {
                0.0
            };
            theta_comp += 1.0 - theta;
        }
    }

    let denom_alpha = r2 + theta_comp / state.alpha;
    let denom_beta = state.h_l.norm_squared()
        + match opts.trace_sigma_l_mode {
            TraceSigmaL::Zero => 0.0,
            TraceSigmaL::NoiseScaled => mk * sigma2 / t_step,
        };
    let clamp = |v: f64| -> Result<f64> {
        if v.is_nan() {
            return Err(Error::numerical("hyperparameter update produced NaN"));
        }
        Ok(v.clamp(HYPER_CLAMP.0, HYPER_CLAMP.1))
    };
    let alpha_new = clamp(mk / denom_alpha)?;
    // τ = β/(2T) must dominate the noise deviation σ/T of the gradient step,
    // or the low-rank branch locks into fitting measurement noise.
    let beta_floor = 2.0 * BETA_NOISE_FLOOR_FACTOR * sigma2.sqrt();
    let beta_new = clamp((mk / denom_beta).max(beta_floor))?;
    Ok((alpha_new, beta_new, residual))
}

/// Run the full joint estimator.
pub fn lrsbe_estimate(
    meas: &Measurement,
    pilots: &PilotSet,
    dims: &ChannelDims,
    opts: &LrsbeOptions,
) -> Result<EstimateResult> {
    run_em(meas, pilots, dims, opts, true)
}

/// Sparse-only ancestor: the low-rank branch is disabled and β never moves.
pub fn bsbe_estimate(
    meas: &Measurement,
    pilots: &PilotSet,
    dims: &ChannelDims,
    opts: &LrsbeOptions,
) -> Result<EstimateResult> {
    run_em(meas, pilots, dims, opts, false)
}

fn run_em(
    meas: &Measurement,
    pilots: &PilotSet,
    dims: &ChannelDims,
    opts: &LrsbeOptions,
    low_rank: bool,
) -> Result<EstimateResult> {
    opts.validate()?;
    check_problem(meas, pilots, dims)?;
    let mk = dims.mk();
    let l = opts.block_len.unwrap_or(dims.m_h);
    if l == 0 || mk % l != 0 {
        return Err(Error::Parameter(format!(
            "block length {l} must divide M·K = {mk}"
        )));
    }
    let g_blocks = mk / l;
    let t_step = pilots.step_length();
    let start = Instant::now();

    // The noise floor applies from the first iteration: the initial gradient
    // step must not absorb measurement noise the later thresholds cannot
    // remove (see BETA_NOISE_FLOOR_FACTOR).
    let beta_floor = 2.0 * BETA_NOISE_FLOOR_FACTOR * meas.sigma2.sqrt();
    let mut state = SolverState {
        h_s: CVec::zeros(mk),
        h_l: CVec::zeros(mk),
        alpha: opts.alpha0,
        beta: opts.beta0.max(beta_floor),
        gamma: vec![1.0; g_blocks],
        corr_c: CMat::identity(l, l),
        mu: CVec::zeros(mk),
        sigma_blocks: vec![CMat::zeros(l, l); g_blocks],
        iter: 1,
    };
    let mut sparse_alive = true;
    let mut h_prev = CVec::zeros(mk);
    let mut trace = Vec::new();
    let mut converged = false;

    while state.iter <= opts.q_max {
        let i = state.iter;

        // Sparse half: block-SBL posterior on r^S = y − A ĥ^L.
        if sparse_alive {
            let r_s = &meas.y - pilots.forward(&state.h_l)?;
            let (mu, sigmas) = sbl_e_step(pilots, &r_s, &state.gamma, &state.corr_c, meas.sigma2)
                .map_err(|e| e.at_iteration(i))?;
            state.mu = mu;
            state.sigma_blocks = sigmas;
            match update_block_params(
                &state.mu,
                &state.sigma_blocks,
                &state.gamma,
                state.alpha,
                opts.c_reg,
                opts.prune_rel,
            ) {
                Ok((c, gamma)) => {
                    state.corr_c = c;
                    state.gamma = gamma;
                    state.h_s = state.mu.clone();
                }
                Err(Error::EmptyModel) => {
                    sparse_alive = false;
                    state.h_s = CVec::zeros(mk);
                    state.mu = CVec::zeros(mk);
                    state.sigma_blocks = vec![CMat::zeros(l, l); g_blocks];
                    state.gamma = vec![0.0; g_blocks];
                }
                Err(other) => return Err(other.at_iteration(i)),
            }
        }

        // Low-rank half: gradient + soft threshold, then SVT.
        let mut nuclear = 0.0;
        if low_rank {
            let r_l = &meas.y - pilots.forward(&state.h_s)?;
            let stepped = lowrank_step(pilots, &r_l, &state.h_l, state.beta, t_step)
                .map_err(|e| e.at_iteration(i))?;
            state.h_l = if opts.per_user_svt {
                svt_step_per_user(&stepped, state.beta, dims)
            } else {
                svt_step(&stepped, state.beta, dims)
            }
            .map_err(|e| e.at_iteration(i))?;
            if state.h_l.norm_squared() > 0.0 {
                let mat =
                    CMat::from_column_slice(dims.m_h, dims.m_v * dims.k_users, state.h_l.as_slice());
                nuclear = mat.singular_values().iter().sum();
            }
        }

        let h_new = &state.h_s + &state.h_l;

        // Hyperparameters; the α denominator uses the pre-update value.
        let (alpha_new, beta_new, residual) =
            m_step(&meas.y, pilots, &state, meas.sigma2, t_step, opts)
                .map_err(|e| e.at_iteration(i))?;
        state.alpha = alpha_new;
        if low_rank {
            state.beta = beta_new;
        }

        let rel = rel_change(&h_new, &h_prev);
        let res_norm = residual.norm();
        let l1: f64 = state.h_s.iter().map(|z| z.norm()).sum();
        trace.push(IterationTrace {
            iter: i,
            rel_change: rel,
            objective: res_norm * res_norm + state.alpha * l1 + state.beta * nuclear,
            residual_norm: res_norm,
            alpha: state.alpha,
            beta: state.beta,
            nnz_blocks: state.gamma.iter().filter(|g| **g > 0.0).count(),
            rank_hl: if low_rank {
                thresholded_rank(&state.h_l, dims)
            } else {
                0
            },
            estimate: opts.record_iterates.then(|| h_new.clone()),
        });

        h_prev = h_new;
        if rel <= opts.tol {
            converged = true;
            break;
        }
        state.iter += 1;
    }

    let iterations = state.iter.min(opts.q_max);
    Ok(EstimateResult {
        h_hat: h_prev,
        h_s_hat: state.h_s.clone(),
        h_l_hat: state.h_l.clone(),
        iterations,
        converged,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::add_noise;
    use num_complex::Complex64;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn cg(rng: &mut ChaCha8Rng) -> C64 {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    #[test]
    fn soft_threshold_gradient_recovers_data() {
        // Noiseless, A = I (N = K = 1), h_l = 0, beta = 0: one gradient step
        // with T = 1 lands exactly on the residual.
        let p = PilotSet::make_pilots(1, 1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r_l = CVec::from_fn(6, |_, _| cg(&mut rng));
        let h_l = CVec::zeros(6);
        let out = lowrank_step(&p, &r_l, &h_l, 0.0, 1.0).unwrap();
        assert!((out - &r_l).norm() < 1e-14);
    }

    #[test]
    fn gradient_descent_residual_is_monotone_without_threshold() {
        // beta = 0 turns the step into plain gradient descent with step 1/T;
        // the data residual must never increase.
        let dims = ChannelDims::new(2, 2, 3);
        let p = PilotSet::make_pilots(2, 3, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let r_l = CVec::from_fn(dims.m() * 2, |_, _| cg(&mut rng));
        let t = p.step_length();
        let mut h = CVec::zeros(dims.mk());
        let mut prev = (&r_l - p.forward(&h).unwrap()).norm();
        for _ in 0..25 {
            h = lowrank_step(&p, &r_l, &h, 0.0, t).unwrap();
            let now = (&r_l - p.forward(&h).unwrap()).norm();
            assert!(now <= prev + 1e-12 * prev.max(1.0));
            prev = now;
        }
    }

    #[test]
    fn lowrank_step_rejects_bad_step() {
        let p = PilotSet::make_pilots(1, 1, 0).unwrap();
        let v = CVec::zeros(4);
        assert!(matches!(
            lowrank_step(&p, &v, &v, 1.0, 0.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn svt_zero_and_rank_one() {
        let dims = ChannelDims::new(2, 2, 1);
        let z = CVec::zeros(4);
        assert_eq!(svt_step(&z, 4.0, &dims).unwrap().norm(), 0.0);

        // Rank-1 matrix with sigma_1 = 5, beta = 4: threshold is 1.
        let u = CVec::from_vec(vec![Complex64::new(0.6, 0.0), Complex64::new(0.8, 0.0)]);
        let v = CVec::from_vec(vec![Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0)]);
        let mat = &u * v.adjoint() * C64::new(5.0, 0.0);
        let h = CVec::from_column_slice(mat.as_slice());
        let out = svt_step(&h, 4.0, &dims).unwrap();
        let out_mat = CMat::from_column_slice(2, 2, out.as_slice());
        let sv = out_mat.singular_values();
        assert!((sv[0] - 4.0).abs() < 1e-10);
        assert!(sv[1].abs() < 1e-10);
        // Same singular vectors: thresholded matrix is a rescale.
        let expected = mat * C64::new(4.0 / 5.0, 0.0);
        assert!((out_mat - expected).norm() < 1e-10);
    }

    #[test]
    fn svt_matches_independent_oracle() {
        let dims = ChannelDims::new(4, 6, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let h = CVec::from_fn(24, |_, _| cg(&mut rng));
        let beta = 1.0;
        let out = svt_step(&h, beta, &dims).unwrap();

        // Oracle: explicit SVD, rebuild by summing thresholded outer products.
        let mat = CMat::from_column_slice(4, 6, h.as_slice());
        let svd = SVD::new(mat, true, true);
        let u = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let mut rebuilt = CMat::zeros(4, 6);
        for i in 0..svd.singular_values.len() {
            let s = (svd.singular_values[i] - beta.sqrt() / 2.0).max(0.0);
            if s == 0.0 {
                continue;
            }
            let ui = u.column(i);
            let vi = vt.row(i);
            rebuilt += &ui * vi * C64::new(s, 0.0);
        }
        let out_mat = CMat::from_column_slice(4, 6, out.as_slice());
        assert!((out_mat.clone() - rebuilt).norm() < 1e-10);

        // Thresholding never increases a singular value or the rank.
        let sv_in = CMat::from_column_slice(4, 6, h.as_slice()).singular_values();
        let sv_out = out_mat.singular_values();
        let rank = |sv: &nalgebra::DVector<f64>| sv.iter().filter(|s| **s > 1e-12).count();
        for (o, i) in sv_out.iter().zip(sv_in.iter()) {
            assert!(o <= i);
        }
        assert!(rank(&sv_out) <= rank(&sv_in));
    }

    #[test]
    fn m_step_guards_and_definition() {
        let p = PilotSet::make_pilots(1, 1, 0).unwrap();
        let mk = 4;
        let y = CVec::from_element(mk, Complex64::new(1.0, 0.0));
        let opts = LrsbeOptions::default();
        let mut state = SolverState {
            h_s: CVec::zeros(mk),
            h_l: CVec::zeros(mk),
            alpha: 1.0,
            beta: 1.0,
            gamma: vec![1.0; mk],
            corr_c: CMat::identity(1, 1),
            mu: CVec::zeros(mk),
            sigma_blocks: vec![CMat::zeros(1, 1); mk],
            iter: 1,
        };
        // h_l = 0 and tr(Sigma_L) = 0: beta hits the upper clamp.
        let (_, beta, _) = m_step(&y, &p, &state, 0.1, 1.0, &opts).unwrap();
        assert_eq!(beta, HYPER_CLAMP.1);

        // Perfect fit with all theta = 1: alpha hits the upper clamp.
        state.h_s = y.clone();
        state.mu = y.clone();
        state.sigma_blocks = vec![CMat::identity(1, 1) * C64::new(1e-9, 0.0); mk];
        let (alpha, _, _) = m_step(&y, &p, &state, 0.1, 1.0, &opts).unwrap();
        assert_eq!(alpha, HYPER_CLAMP.1);

        // ‖h_l‖² = MK gives beta = 1 (noiseless, so the noise floor is 0).
        state.h_l = CVec::from_element(mk, Complex64::new(1.0, 0.0));
        let (_, beta, _) = m_step(&y, &p, &state, 0.0, 1.0, &opts).unwrap();
        assert!((beta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_measurement_converges_to_zero() {
        let dims = ChannelDims::new(2, 2, 2);
        let p = PilotSet::make_pilots(2, 2, 0).unwrap();
        let meas = Measurement {
            y: CVec::zeros(dims.m() * 2),
            sigma2: 0.0,
            snr_db: f64::INFINITY,
        };
        let opts = LrsbeOptions::default();
        let res = lrsbe_estimate(&meas, &p, &dims, &opts).unwrap();
        assert_eq!(res.h_hat.norm(), 0.0);
        assert!(res.converged);
        assert!(res.iterations <= 2);
    }

    #[test]
    fn noiseless_square_system_is_exact() {
        // N = K with orthogonal pilots: the system is invertible and the
        // estimate must match the direct least-squares solution.
        let dims = ChannelDims::new(2, 2, 3);
        let k = dims.k_users;
        let p = PilotSet::make_pilots(k, k, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h_true = CVec::from_fn(dims.mk(), |_, _| cg(&mut rng));
        let y = p.forward(&h_true).unwrap();
        let meas = add_noise(&y, f64::INFINITY, 0).unwrap();
        let res = lrsbe_estimate(&meas, &p, &dims, &LrsbeOptions::default()).unwrap();
        let err = (&res.h_hat - &h_true).norm_squared() / h_true.norm_squared();
        assert!(
            10.0 * err.log10() <= -40.0,
            "nmse = {} dB",
            10.0 * err.log10()
        );
        assert!(res.converged);
    }

    #[test]
    fn bsbe_has_no_lowrank_component() {
        let dims = ChannelDims::new(2, 2, 2);
        let p = PilotSet::make_pilots(2, 2, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h_true = CVec::from_fn(dims.mk(), |_, _| cg(&mut rng));
        let y = p.forward(&h_true).unwrap();
        let meas = add_noise(&y, 20.0, 5).unwrap();
        let res = bsbe_estimate(&meas, &p, &dims, &LrsbeOptions::default()).unwrap();
        assert_eq!(res.h_l_hat.norm(), 0.0);
        for t in &res.trace {
            assert_eq!(t.rank_hl, 0);
            assert_eq!(t.beta, 1.0);
        }
    }

    #[test]
    fn lrsbe_equals_bsbe_when_beta_pinned_high() {
        // With beta pinned at the clamp ceiling every soft threshold and SVT
        // zeroes h^L, so the joint estimator degenerates to the sparse one.
        let dims = ChannelDims::new(2, 2, 2);
        let p = PilotSet::make_pilots(2, 2, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h_true = CVec::from_fn(dims.mk(), |_, _| cg(&mut rng));
        let y = p.forward(&h_true).unwrap();
        let meas = add_noise(&y, 10.0, 7).unwrap();
        let mut opts = LrsbeOptions::default();
        opts.beta0 = HYPER_CLAMP.1;
        let joint = lrsbe_estimate(&meas, &p, &dims, &opts).unwrap();
        let sparse = bsbe_estimate(&meas, &p, &dims, &opts).unwrap();
        assert_eq!(joint.h_l_hat.norm(), 0.0);
        assert!((&joint.h_hat - &sparse.h_hat).norm() <= 1e-12 * sparse.h_hat.norm().max(1.0));
    }
}
