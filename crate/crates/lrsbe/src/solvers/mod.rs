//! Channel estimators behind a single interface.
//!
//! [`SolverKind`] names the five estimators: the joint low-rank plus sparse
//! Bayesian estimator (`lrsbe`), its sparse-only ancestor (`bsbe`),
//! element-wise sparse Bayesian learning (`sbe`), iterative shrinkage
//! thresholding (`ista`), and orthogonal matching pursuit (`omp`). All of
//! them consume a [`Measurement`], a [`PilotSet`], and the array dimensions,
//! and produce an [`EstimateResult`] with a per-iteration trace.

use serde::{Deserialize, Serialize};

use crate::beamspace::ChannelDims;
use crate::error::{Error, Result};
use crate::measurement::{Measurement, PilotSet};
use crate::{CVec, C64};

pub mod ista;
pub mod lrsbe;
pub mod omp;
pub mod sbe;
pub mod sbl;

pub use lrsbe::{bsbe_estimate, lowrank_step, lrsbe_estimate, m_step, svt_step, SolverState};
pub use sbl::{sbl_e_step, update_block_params};

/// Approximation used for `tr(Σ^L)` in the β update; the low-rank iterate is
/// a point estimate, so no posterior covariance exists for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSigmaL {
    /// Point-mass approximation, `tr(Σ^L) = 0`.
    #[default]
    Zero,
    /// Noise-scaled alternative, `tr(Σ^L) = MK·σ²/T`.
    NoiseScaled,
}

/// Options shared by all estimators; fields beyond `q_max`/`tol` apply to the
/// solvers that use them and are ignored by the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrsbeOptions {
    /// Maximum iterations Q.
    pub q_max: usize,
    /// Relative-change stopping threshold.
    pub tol: f64,
    /// Sparse block length L; defaults to `M_h` when unset. Must divide M·K.
    pub block_len: Option<usize>,
    /// Initial sparsity hyperparameter α.
    pub alpha0: f64,
    /// Initial low-rankness hyperparameter β.
    pub beta0: f64,
    /// Ridge added to the common correlation matrix C before inversion.
    pub c_reg: f64,
    pub trace_sigma_l_mode: TraceSigmaL,
    /// Blocks with γ below `prune_rel·max γ` are frozen at zero.
    pub prune_rel: f64,
    /// Apply singular-value thresholding per user instead of on the
    /// collective matrix (ablation switch).
    pub per_user_svt: bool,
    /// Keep a copy of the running estimate in every trace row.
    pub record_iterates: bool,
    /// Accepted for configuration compatibility; estimation is always
    /// single-threaded and bitwise deterministic.
    pub deterministic: bool,
    /// ISTA regularization scale c in λ = c·σ·√(2·log MK).
    pub ista_lambda_scale: f64,
    /// OMP sparsity budget; defaults to min(MN, MK) when unset.
    pub omp_max_support: Option<usize>,
}

impl Default for LrsbeOptions {
    fn default() -> Self {
        Self {
            q_max: 50,
            tol: 1e-4,
            block_len: None,
            alpha0: 1.0,
            beta0: 1.0,
            c_reg: 1e-6,
            trace_sigma_l_mode: TraceSigmaL::Zero,
            prune_rel: 1e-8,
            per_user_svt: false,
            record_iterates: false,
            deterministic: true,
            ista_lambda_scale: 1.0,
            omp_max_support: None,
        }
    }
}

impl LrsbeOptions {
    pub fn validate(&self) -> Result<()> {
        if self.q_max == 0 {
            return Err(Error::Parameter("q_max must be >= 1".into()));
        }
        if self.tol <= 0.0 || self.tol.is_nan() {
            return Err(Error::Parameter("tol must be > 0".into()));
        }
        if self.alpha0 <= 0.0 || self.beta0 <= 0.0 {
            return Err(Error::Parameter("alpha0 and beta0 must be > 0".into()));
        }
        if self.c_reg < 0.0 {
            return Err(Error::Parameter("c_reg must be >= 0".into()));
        }
        Ok(())
    }
}

/// One row of an estimator's iteration trace.
#[derive(Debug, Clone)]
pub struct IterationTrace {
    /// 1-based iteration index.
    pub iter: usize,
    /// Relative change of the combined estimate.
    pub rel_change: f64,
    /// Value of the regularized objective at the end of the iteration.
    pub objective: f64,
    /// Data-fit residual norm ‖y − A·ĥ‖.
    pub residual_norm: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Active (unpruned) sparse blocks, OMP support size, or ISTA nonzeros.
    pub nnz_blocks: usize,
    /// Rank of the low-rank iterate after thresholding; zero for solvers
    /// without a low-rank branch.
    pub rank_hl: usize,
    /// Estimate snapshot, kept only when `record_iterates` is on.
    pub estimate: Option<CVec>,
}

/// Output of one estimator invocation.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    /// Combined estimate `ĥ = ĥ^S + ĥ^L`.
    pub h_hat: CVec,
    pub h_s_hat: CVec,
    pub h_l_hat: CVec,
    pub iterations: usize,
    pub converged: bool,
    pub runtime_ms: f64,
    pub trace: Vec<IterationTrace>,
}

impl EstimateResult {
    /// Trace rows as CSV: `iter,rel_change,residual_norm,alpha,beta,nnz_blocks,rank_hl`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,rel_change,residual_norm,alpha,beta,nnz_blocks,rank_hl\n");
        for t in &self.trace {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                t.iter, t.rel_change, t.residual_norm, t.alpha, t.beta, t.nnz_blocks, t.rank_hl
            ));
        }
        out
    }
}

/// The five estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Lrsbe,
    Omp,
    Ista,
    Sbe,
    Bsbe,
}

impl SolverKind {
    pub const ALL: [SolverKind; 5] = [
        SolverKind::Lrsbe,
        SolverKind::Omp,
        SolverKind::Ista,
        SolverKind::Sbe,
        SolverKind::Bsbe,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Lrsbe => "lrsbe",
            SolverKind::Omp => "omp",
            SolverKind::Ista => "ista",
            SolverKind::Sbe => "sbe",
            SolverKind::Bsbe => "bsbe",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|k| k.name() == name)
            .copied()
            .ok_or_else(|| Error::UnknownSolver {
                name: name.to_string(),
                valid: Self::ALL.map(|k| k.name()).join(", "),
            })
    }

    /// Run this estimator on one measurement.
    pub fn estimate(
        &self,
        meas: &Measurement,
        pilots: &PilotSet,
        dims: &ChannelDims,
        opts: &LrsbeOptions,
    ) -> Result<EstimateResult> {
        match self {
            SolverKind::Lrsbe => lrsbe::lrsbe_estimate(meas, pilots, dims, opts),
            SolverKind::Bsbe => lrsbe::bsbe_estimate(meas, pilots, dims, opts),
            SolverKind::Sbe => sbe::sbe_estimate(meas, pilots, dims, opts),
            SolverKind::Ista => ista::ista_estimate(meas, pilots, dims, opts),
            SolverKind::Omp => omp::omp_estimate(meas, pilots, dims, opts),
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Complex soft threshold: shrink the magnitude by `tau`, keep the phase.
pub fn soft_threshold(z: C64, tau: f64) -> C64 {
    let mag = z.norm();
    if mag <= tau {
        C64::new(0.0, 0.0)
    } else {
        z * ((mag - tau) / mag)
    }
}

/// Relative change ‖new − old‖/‖old‖ with the zero-vector convention used by
/// the stopping rule: zero to zero counts as converged, growth from zero
/// never does.
pub fn rel_change(new: &CVec, old: &CVec) -> f64 {
    let denom = old.norm();
    let num = (new - old).norm();
    if denom > 0.0 {
        num / denom
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub(crate) fn check_problem(
    meas: &Measurement,
    pilots: &PilotSet,
    dims: &ChannelDims,
) -> Result<()> {
    dims.validate()?;
    let expect = dims.m() * pilots.n_pilots();
    if meas.y.len() != expect {
        return Err(Error::Dimension(format!(
            "measurement length {} does not match M·N = {}",
            meas.y.len(),
            expect
        )));
    }
    Ok(())
}
