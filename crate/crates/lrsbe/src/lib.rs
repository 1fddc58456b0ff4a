//! Beamspace channel estimation for massive MIMO uplinks.
//!
//! The crate combines a structural beamspace channel generator, a
//! Kronecker-structured pilot measurement model, the LRSBE joint low-rank and
//! sparse Bayesian estimator together with four compressive-sensing baselines
//! (OMP, ISTA, SBE, BSBE), and a seeded Monte-Carlo evaluation harness that
//! sweeps SNR, array size, and pilot count.
//!
//! The library is organized around a small set of building blocks:
//!
//! - [`beamspace`]: DFT beam transforms and synthesis of ground-truth
//!   channels with a low-rank plus block-sparse beam-domain split.
//! - [`measurement`]: pilot construction and the structured measurement
//!   operator `A = X ⊗ I_M` applied without ever materializing `A`.
//! - [`solvers`]: the estimators behind one [`solvers::SolverKind`] interface.
//! - [`eval`]: NMSE, empirical CDFs, and the paired Monte-Carlo sweep runner.
//! - [`cli`]: the `generate | estimate | sweep` command front end.
//!
//! All randomness flows through explicit `u64` seeds; identical inputs give
//! bit-identical estimates and sweep results.

pub mod beamspace;
pub mod cli;
pub mod error;
pub mod eval;
pub mod measurement;
pub mod solvers;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;

/// Dense complex vector.
pub type CVec = nalgebra::DVector<C64>;

pub(crate) mod seed {
    /// SplitMix64 round; the standard 64-bit finalizer.
    pub fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Stable combination of a base seed with stream labels, used to derive
    /// independent per-trial and per-purpose seeds.
    pub fn derive(base: u64, a: u64, b: u64) -> u64 {
        mix(mix(mix(base) ^ a) ^ b)
    }
}
