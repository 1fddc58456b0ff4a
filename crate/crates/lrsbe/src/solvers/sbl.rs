//! Block sparse Bayesian learning: posterior computation and the common
//! correlation / block-weight updates.
//!
//! The sparse component carries a zero-mean Gaussian prior with block
//! covariance `Γ = blockdiag(γ_1 C, …, γ_G C)`, a shared `L×L` correlation
//! matrix `C`, and per-block weights `γ`. The posterior mean and covariance
//! follow the standard Gaussian identities
//!
//! ```text
//! μ = Γ A^H (A Γ A^H + σ² I)^{-1} r
//! Σ = Γ − Γ A^H (A Γ A^H + σ² I)^{-1} A Γ
//! ```
//!
//! with `A = X ⊗ I_M`. Only the `G` diagonal `L×L` blocks of `Σ` are needed
//! downstream, and `A` is never formed. When `L` divides `M` the `MN×MN`
//! system splits exactly into `M/L` independent `NL×NL` systems
//! `S_g = σ² I + W_g ⊗ C` with `W_g = Σ_k γ_{k,g} x_k x_k^H`, which is the
//! production path; a structured dense assembly covers block lengths that
//! straddle users.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::measurement::PilotSet;
use crate::{CMat, CVec, C64};

/// Relative ridge applied to the system matrix only when σ² = 0, keeping the
/// factorization positive definite for noiseless data without disturbing the
/// noisy-case posterior.
const NOISELESS_RIDGE_REL: f64 = 1e-11;

/// Posterior mean and diagonal covariance blocks of the sparse component.
///
/// `r_s` is the sparse residual `y − A ĥ^L` of length `M·N`; `gamma` holds
/// the `G` block weights (zero marks a pruned block) and `corr_c` the shared
/// `L×L` correlation matrix. Returns `μ` (length `M·K`) and the `G` diagonal
/// blocks of `Σ`.
pub fn sbl_e_step(
    p: &PilotSet,
    r_s: &CVec,
    gamma: &[f64],
    corr_c: &CMat,
    sigma2: f64,
) -> Result<(CVec, Vec<CMat>)> {
    let n = p.n_pilots();
    let k = p.k_users();
    if r_s.is_empty() || r_s.len() % n != 0 {
        return Err(Error::Dimension(format!(
            "residual length {} is not a positive multiple of N = {n}",
            r_s.len()
        )));
    }
    let m = r_s.len() / n;
    let l = corr_c.nrows();
    if corr_c.ncols() != l || l == 0 {
        return Err(Error::Dimension("corr_c must be square and nonempty".into()));
    }
    let g_blocks = gamma.len();
    if g_blocks * l != m * k {
        return Err(Error::Dimension(format!(
            "G·L = {} does not match M·K = {}",
            g_blocks * l,
            m * k
        )));
    }
    if sigma2 < 0.0 {
        return Err(Error::Parameter("sigma2 must be >= 0".into()));
    }
    if gamma.iter().any(|g| *g < 0.0 || !g.is_finite()) {
        return Err(Error::Parameter("gamma entries must be finite and >= 0".into()));
    }

    if m % l == 0 {
        e_step_slotwise(p, r_s, gamma, corr_c, sigma2, m)
    } else {
        e_step_general(p, r_s, gamma, corr_c, sigma2, m)
    }
}

fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn singular_system_error() -> Error {
    Error::numerical(
        "singular posterior system: sigma2 = 0 and the block prior is rank-deficient",
    )
}

/// Fast path: `L | M`, block `(k, g)` covers antennas `[gL, (g+1)L)` of user
/// `k`, and slot `g` decouples from every other slot.
fn e_step_slotwise(
    p: &PilotSet,
    r_s: &CVec,
    gamma: &[f64],
    corr_c: &CMat,
    sigma2: f64,
    m: usize,
) -> Result<(CVec, Vec<CMat>)> {
    let n = p.n_pilots();
    let k = p.k_users();
    let l = corr_c.nrows();
    let slots = m / l;
    let x = p.matrix();

    let mut mu = CVec::zeros(m * k);
    let mut sigmas = vec![CMat::zeros(l, l); gamma.len()];

    for g in 0..slots {
        let mut w = CMat::zeros(n, n);
        let mut active = false;
        for user in 0..k {
            let gb = gamma[user * slots + g];
            if gb == 0.0 {
                continue;
            }
            active = true;
            for a in 0..n {
                let xa = x[(a, user)];
                for b in 0..n {
                    w[(a, b)] += C64::new(gb, 0.0) * xa * x[(b, user)].conj();
                }
            }
        }
        if !active {
            // Every block in the slot is pruned: point mass at zero.
            continue;
        }

        let ridge = if sigma2 > 0.0 {
            sigma2
        } else {
            NOISELESS_RIDGE_REL * (w.trace().re * corr_c.trace().re).max(0.0) / (n * l) as f64
        };
        let mut s = CMat::zeros(n * l, n * l);
        for a in 0..n {
            for b in 0..n {
                let wab = w[(a, b)];
                if wab == C64::new(0.0, 0.0) {
                    continue;
                }
                for i in 0..l {
                    for j in 0..l {
                        s[(a * l + i, b * l + j)] = wab * corr_c[(i, j)];
                    }
                }
            }
        }
        for d in 0..n * l {
            s[(d, d)] += C64::new(ridge, 0.0);
        }
        let chol = Cholesky::new(s).ok_or_else(singular_system_error)?;

        let mut r_g = CVec::zeros(n * l);
        for a in 0..n {
            for i in 0..l {
                r_g[a * l + i] = r_s[a * m + g * l + i];
            }
        }
        let t = chol.solve(&r_g);

        // Users sharing a pilot sequence share B_k = x_k ⊗ I_L, so the inner
        // solves can be reused across them.
        let mut memo: Vec<(usize, CVec, CMat)> = Vec::new();
        for user in 0..k {
            let b = user * slots + g;
            let gb = gamma[b];
            if gb == 0.0 {
                continue;
            }
            let found = memo
                .iter()
                .find(|(prev, _, _)| x.column(*prev) == x.column(user))
                .map(|(_, u, q)| (u.clone(), q.clone()));
            let (u, q) = match found {
                Some(hit) => hit,
                None => {
                    let mut u = CVec::zeros(l);
                    for a in 0..n {
                        let xa = x[(a, user)].conj();
                        for i in 0..l {
                            u[i] += xa * t[a * l + i];
                        }
                    }
                    let mut bk = CMat::zeros(n * l, l);
                    for a in 0..n {
                        for i in 0..l {
                            bk[(a * l + i, i)] = x[(a, user)];
                        }
                    }
                    let z = chol.solve(&bk);
                    let mut q = CMat::zeros(l, l);
                    for a in 0..n {
                        let xa = x[(a, user)].conj();
                        for i in 0..l {
                            for j in 0..l {
                                q[(i, j)] += xa * z[(a * l + i, j)];
                            }
                        }
                    }
                    memo.push((user, u.clone(), q.clone()));
                    (u, q)
                }
            };
            let mu_b = corr_c * &u * C64::new(gb, 0.0);
            for i in 0..l {
                mu[user * m + g * l + i] = mu_b[i];
            }
            let cqc = corr_c * &q * corr_c;
            let sb = corr_c * C64::new(gb, 0.0) - cqc * C64::new(gb * gb, 0.0);
            sigmas[b] = hermitize(&sb);
        }
    }
    Ok((mu, sigmas))
}

/// General path for block lengths that straddle users: assemble the full
/// `MN×MN` system from the block structure, never touching `A` itself.
fn e_step_general(
    p: &PilotSet,
    r_s: &CVec,
    gamma: &[f64],
    corr_c: &CMat,
    sigma2: f64,
    m: usize,
) -> Result<(CVec, Vec<CMat>)> {
    let n = p.n_pilots();
    let k = p.k_users();
    let l = corr_c.nrows();
    let g_blocks = gamma.len();
    let mn = m * n;
    let x = p.matrix();
    // Column j = k·M + m of A equals x_k ⊗ e_m.
    let col = |j: usize| (j / m, j % m);

    let mut s = CMat::zeros(mn, mn);
    let mut prior_trace = 0.0;
    for b in 0..g_blocks {
        let gb = gamma[b];
        if gb == 0.0 {
            continue;
        }
        prior_trace += gb * corr_c.trace().re;
        for i in 0..l {
            let (ki, mi) = col(b * l + i);
            for j in 0..l {
                let (kj, mj) = col(b * l + j);
                let cij = corr_c[(i, j)] * C64::new(gb, 0.0);
                for a in 0..n {
                    for a2 in 0..n {
                        s[(a * m + mi, a2 * m + mj)] += x[(a, ki)] * cij * x[(a2, kj)].conj();
                    }
                }
            }
        }
    }
    if prior_trace == 0.0 && sigma2 == 0.0 {
        // Fully pruned prior and no noise: the posterior is a point mass.
        return Ok((CVec::zeros(m * k), vec![CMat::zeros(l, l); g_blocks]));
    }
    let ridge = if sigma2 > 0.0 {
        sigma2
    } else {
        NOISELESS_RIDGE_REL * prior_trace / mn as f64
    };
    for d in 0..mn {
        s[(d, d)] += C64::new(ridge, 0.0);
    }
    let chol = Cholesky::new(s).ok_or_else(singular_system_error)?;

    let t = chol.solve(r_s);
    let u = p.adjoint(&t)?;
    let mut mu = CVec::zeros(m * k);
    let mut sigmas = vec![CMat::zeros(l, l); g_blocks];
    for b in 0..g_blocks {
        let gb = gamma[b];
        if gb == 0.0 {
            continue;
        }
        let ub = CVec::from_fn(l, |i, _| u[b * l + i]);
        let mu_b = corr_c * &ub * C64::new(gb, 0.0);
        for i in 0..l {
            mu[b * l + i] = mu_b[i];
        }

        let mut rhs = CMat::zeros(mn, l);
        for i in 0..l {
            let (ki, mi) = col(b * l + i);
            for a in 0..n {
                rhs[(a * m + mi, i)] = x[(a, ki)];
            }
        }
        let z = chol.solve(&rhs);
        let mut q = CMat::zeros(l, l);
        for i in 0..l {
            let (ki, mi) = col(b * l + i);
            for a in 0..n {
                let xa = x[(a, ki)].conj();
                for j in 0..l {
                    q[(i, j)] += xa * z[(a * m + mi, j)];
                }
            }
        }
        let cqc = corr_c * &q * corr_c;
        let sb = corr_c * C64::new(gb, 0.0) - cqc * C64::new(gb * gb, 0.0);
        sigmas[b] = hermitize(&sb);
    }
    Ok((mu, sigmas))
}

/// EM update of the shared correlation matrix and the block weights.
///
/// `C` is the pruned-block-excluded mean of `(Σ_b + μ_b μ_b^H)/γ_b`,
/// Hermitian-symmetrized, ridge-stabilized, and trace-normalized to `L`;
/// the weights follow `γ_b = tr(C^{-1}(Σ_b + μ_b μ_b^H))/(L·(1+α))`. Blocks
/// whose new weight falls below `prune_rel` times the largest weight are
/// frozen at zero. Fails with [`Error::EmptyModel`] once every block is dead.
pub fn update_block_params(
    mu: &CVec,
    sigma_blocks: &[CMat],
    gamma: &[f64],
    alpha: f64,
    c_reg: f64,
    prune_rel: f64,
) -> Result<(CMat, Vec<f64>)> {
    let g_blocks = gamma.len();
    if sigma_blocks.len() != g_blocks || g_blocks == 0 {
        return Err(Error::Dimension(
            "gamma and sigma_blocks must agree and be nonempty".into(),
        ));
    }
    let l = sigma_blocks[0].nrows();
    if mu.len() != g_blocks * l {
        return Err(Error::Dimension(format!(
            "mu length {} does not match G·L = {}",
            mu.len(),
            g_blocks * l
        )));
    }
    if alpha < 0.0 {
        return Err(Error::Parameter("alpha must be >= 0".into()));
    }

    let active: Vec<usize> = (0..g_blocks).filter(|b| gamma[*b] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::EmptyModel);
    }

    let stat = |b: usize| -> CMat {
        let mu_b = CVec::from_fn(l, |i, _| mu[b * l + i]);
        &sigma_blocks[b] + &mu_b * mu_b.adjoint()
    };

    let mut c_raw = CMat::zeros(l, l);
    for &b in &active {
        c_raw += stat(b) / C64::new(gamma[b], 0.0);
    }
    c_raw /= C64::new(active.len() as f64, 0.0);
    let mut c = hermitize(&c_raw);
    for d in 0..l {
        c[(d, d)] += C64::new(c_reg, 0.0);
    }
    let tr = c.trace().re;
    if tr <= 0.0 {
        return Err(Error::EmptyModel);
    }
    c *= C64::new(l as f64 / tr, 0.0);

    let chol = Cholesky::new(c.clone())
        .ok_or_else(|| Error::numerical("correlation matrix is not positive definite"))?;
    let mut gamma_new = vec![0.0; g_blocks];
    for &b in &active {
        let solved = chol.solve(&stat(b));
        let val = solved.trace().re / l as f64 / (1.0 + alpha);
        gamma_new[b] = val.max(0.0);
    }

    let top = gamma_new.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return Err(Error::EmptyModel);
    }
    let threshold = prune_rel * top;
    for g in gamma_new.iter_mut() {
        if *g < threshold {
            *g = 0.0;
        }
    }
    Ok((c, gamma_new))
}
