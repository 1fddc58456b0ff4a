//! Pilot construction and the structured measurement operator.
//!
//! The uplink stacks K users' length-M channels into `h ∈ C^{MK}` and
//! observes `y = A h + n` with `A = X ⊗ I_M`, where the columns of the `N×K`
//! pilot matrix `X` are the per-user pilot sequences. `A` is never formed:
//! the forward map is an `M×K` by `K×N` product and the adjoint its mirror.
//! With fewer orthogonal sequences than users (`N < K`) pilots are reused
//! cyclically, which reproduces pilot contamination between users sharing a
//! sequence.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::beamspace::dft_matrix;
use crate::error::{Error, Result};
use crate::{CMat, CVec};

/// The K pilot sequences of length N, columns of an `N×K` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSet {
    pilots: CMat,
}

impl PilotSet {
    /// Assign the columns of the unitary `N×N` DFT matrix to users
    /// cyclically: user `k` transmits sequence `k mod N`.
    ///
    /// The seed is accepted for interface stability; the cyclic DFT
    /// construction is deterministic and does not consume it.
    pub fn make_pilots(n_pilots: usize, k_users: usize, _rng_seed: u64) -> Result<Self> {
        if n_pilots == 0 {
            return Err(Error::Dimension("n_pilots must be >= 1".into()));
        }
        if n_pilots > k_users {
            return Err(Error::Parameter(format!(
                "n_pilots = {n_pilots} exceeds k_users = {k_users}; the model assumes N <= K"
            )));
        }
        let dft = dft_matrix(n_pilots)?;
        let mut pilots = CMat::zeros(n_pilots, k_users);
        for k in 0..k_users {
            pilots.set_column(k, &dft.column(k % n_pilots));
        }
        Ok(Self { pilots })
    }

    /// Pilot matrix `X`, `N×K`.
    pub fn matrix(&self) -> &CMat {
        &self.pilots
    }

    pub fn n_pilots(&self) -> usize {
        self.pilots.nrows()
    }

    pub fn k_users(&self) -> usize {
        self.pilots.ncols()
    }

    /// Antennas per user implied by a collective vector length.
    fn infer_m(&self, len: usize, what: &str) -> Result<usize> {
        let div = match what {
            "forward" => self.k_users(),
            _ => self.n_pilots(),
        };
        if len == 0 || len % div != 0 {
            return Err(Error::Dimension(format!(
                "{what}: vector length {len} is not a positive multiple of {div}"
            )));
        }
        Ok(len / div)
    }

    /// `A h` for `h ∈ C^{MK}` without materializing `A`: reshape `h` to
    /// `M×K`, multiply by `X^T`, and re-vectorize so the n-th M-block equals
    /// `Σ_k X[n,k]·h_k`.
    pub fn forward(&self, h: &CVec) -> Result<CVec> {
        let m = self.infer_m(h.len(), "forward")?;
        let h_mat = CMat::from_column_slice(m, self.k_users(), h.as_slice());
        let y = h_mat * self.pilots.transpose();
        Ok(CVec::from_column_slice(y.as_slice()))
    }

    /// `A^H v` for `v ∈ C^{MN}`, the structured adjoint.
    pub fn adjoint(&self, v: &CVec) -> Result<CVec> {
        let m = self.infer_m(v.len(), "adjoint")?;
        let v_mat = CMat::from_column_slice(m, self.n_pilots(), v.as_slice());
        let h = v_mat * self.pilots.conjugate();
        Ok(CVec::from_column_slice(h.as_slice()))
    }

    /// Gradient step length `T = λ_max(A^H A) = λ_max(X^H X)`, computed on
    /// the `K×K` pilot Gram matrix.
    pub fn step_length(&self) -> f64 {
        let gram = self.pilots.adjoint() * &self.pilots;
        let eig = nalgebra::SymmetricEigen::new(gram);
        eig.eigenvalues.iter().cloned().fold(0.0, f64::max)
    }
}

/// One noisy observation of the collective channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// Received signal of length `M·N`.
    pub y: CVec,
    /// Noise power per entry (linear). Zero only for infinite SNR.
    pub sigma2: f64,
    /// Configured SNR in dB; `f64::INFINITY` marks the noiseless sentinel.
    pub snr_db: f64,
}

/// Add circularly-symmetric complex Gaussian noise at the requested SNR,
/// defined on the average received signal power per entry of `y`.
pub fn add_noise(y_clean: &CVec, snr_db: f64, rng_seed: u64) -> Result<Measurement> {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(Measurement {
            y: y_clean.clone(),
            sigma2: 0.0,
            snr_db,
        });
    }
    let p_avg = y_clean.norm_squared() / y_clean.len().max(1) as f64;
    if p_avg == 0.0 {
        return Err(Error::DegenerateInput(
            "cannot set a finite SNR on an all-zero signal".into(),
        ));
    }
    let sigma2 = p_avg / 10f64.powf(snr_db / 10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let std = (sigma2 / 2.0).sqrt();
    let y = CVec::from_iterator(
        y_clean.len(),
        y_clean.iter().map(|z| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            z + Complex64::new(re * std, im * std)
        }),
    );
    Ok(Measurement { y, sigma2, snr_db })
}

// JSON layout mirrors the channel files: interleaved re/im arrays plus the
// noise metadata. Infinite SNR is spelled "inf" since JSON has no infinity.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasurementJson {
    y_re: Vec<f64>,
    y_im: Vec<f64>,
    sigma2: f64,
    snr_db: SnrField,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SnrField {
    Finite(f64),
    Sentinel(String),
}

impl Measurement {
    pub fn to_json(&self) -> Result<String> {
        let snr_db = if self.snr_db.is_finite() {
            SnrField::Finite(self.snr_db)
        } else {
            SnrField::Sentinel("inf".into())
        };
        let doc = MeasurementJson {
            y_re: self.y.iter().map(|z| z.re).collect(),
            y_im: self.y.iter().map(|z| z.im).collect(),
            sigma2: self.sigma2,
            snr_db,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MeasurementJson = serde_json::from_str(text)?;
        if doc.y_re.len() != doc.y_im.len() {
            return Err(Error::Dimension(
                "y_re and y_im have different lengths".into(),
            ));
        }
        let snr_db = match doc.snr_db {
            SnrField::Finite(v) => v,
            SnrField::Sentinel(s) if s == "inf" => f64::INFINITY,
            SnrField::Sentinel(s) => {
                return Err(Error::Parameter(format!("unrecognized snr_db '{s}'")))
            }
        };
        let y = CVec::from_iterator(
            doc.y_re.len(),
            doc.y_re
                .iter()
                .zip(doc.y_im.iter())
                .map(|(&re, &im)| Complex64::new(re, im)),
        );
        Ok(Measurement {
            y,
            sigma2: doc.sigma2,
            snr_db,
        })
    }
}
