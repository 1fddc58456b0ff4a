//! Beam-domain transforms and synthetic channel generation.
//!
//! A base-station array with `M = M_h × M_v` antennas sees each user through
//! an `M_h×M_v` channel matrix. Applying horizontal and vertical DFT
//! beamforming matrices moves the channel into the beam domain, where the
//! energy splits into a low-rank component (clusters visible to part of the
//! array, concentrated in a few beam columns) and a block-sparse component
//! (clusters visible to the whole array, concentrated in a few beams).
//!
//! [`synthesize_channel`] draws ground-truth realizations with exactly this
//! structure: a rank-`r` outer-product term supported on a contiguous band of
//! beam columns plus contiguous blocks of circularly-symmetric Gaussian
//! entries, scaled so the low-rank share of the total energy hits a requested
//! split exactly.

use nalgebra::QR;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{CMat, CVec, C64};

/// Unitary DFT matrix of size `m×m`, entry `(p,q) = exp(-j·2π·p·q/m)/√m`.
pub fn dft_matrix(m: usize) -> Result<CMat> {
    if m == 0 {
        return Err(Error::Dimension("dft_matrix: m must be >= 1".into()));
    }
    let scale = 1.0 / (m as f64).sqrt();
    Ok(CMat::from_fn(m, m, |p, q| {
        let phase = -2.0 * std::f64::consts::PI * (p as f64) * (q as f64) / (m as f64);
        Complex64::from_polar(scale, phase)
    }))
}

/// Array dimensions shared by generator, solvers, and harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelDims {
    /// Horizontal antennas `M_h`.
    pub m_h: usize,
    /// Vertical antennas `M_v`.
    pub m_v: usize,
    /// Number of users `K`.
    pub k_users: usize,
}

impl ChannelDims {
    pub fn new(m_h: usize, m_v: usize, k_users: usize) -> Self {
        Self { m_h, m_v, k_users }
    }

    /// Antennas per user, `M = M_h·M_v`.
    pub fn m(&self) -> usize {
        self.m_h * self.m_v
    }

    /// Length of the collective channel vector, `M·K`.
    pub fn mk(&self) -> usize {
        self.m() * self.k_users
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_h == 0 || self.m_v == 0 || self.k_users == 0 {
            return Err(Error::Dimension(format!(
                "dims must be positive, got {}x{}, K={}",
                self.m_h, self.m_v, self.k_users
            )));
        }
        Ok(())
    }
}

/// Paired horizontal/vertical DFT beamforming matrices.
#[derive(Debug, Clone)]
pub struct BeamTransform {
    pub u_h: CMat,
    pub u_v: CMat,
}

impl BeamTransform {
    /// DFT transform pair for an `m_h × m_v` array.
    pub fn new(m_h: usize, m_v: usize) -> Result<Self> {
        Ok(Self {
            u_h: dft_matrix(m_h)?,
            u_v: dft_matrix(m_v)?,
        })
    }

    /// Space domain to beam domain: `U_h^H · H · U_v`.
    pub fn to_beam(&self, h_space: &CMat) -> Result<CMat> {
        self.check(h_space)?;
        Ok(self.u_h.adjoint() * h_space * &self.u_v)
    }

    /// Beam domain back to space domain: `U_h · H · U_v^H`.
    pub fn from_beam(&self, h_beam: &CMat) -> Result<CMat> {
        self.check(h_beam)?;
        Ok(&self.u_h * h_beam * self.u_v.adjoint())
    }

    fn check(&self, h: &CMat) -> Result<()> {
        if h.nrows() != self.u_h.nrows() || h.ncols() != self.u_v.nrows() {
            return Err(Error::Dimension(format!(
                "channel is {}x{}, transform expects {}x{}",
                h.nrows(),
                h.ncols(),
                self.u_h.nrows(),
                self.u_v.nrows()
            )));
        }
        Ok(())
    }
}

/// Shape parameters of the structural channel surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    /// Rank of the low-rank component per user.
    pub rank_r: usize,
    /// Number of active contiguous blocks in the sparse component per user.
    pub sparse_blocks: usize,
    /// Length of each generated sparse block.
    pub block_len_gen: usize,
    /// Fraction of per-user channel energy carried by the low-rank component.
    pub power_split: f64,
    /// Energy fraction the top `rank_r` singular values keep relative to the
    /// geometric decay they sit on; controls how fast the spectrum falls off.
    pub energy_concentration: f64,
    /// Channel amplitude relative to the unit-variance hyperparameter
    /// initialization of the estimators: per-user energy is `gain²·M`.
    #[serde(default = "default_gain")]
    pub gain: f64,
}

fn default_gain() -> f64 {
    2.0
}

impl GeneratorParams {
    pub fn validate(&self, dims: &ChannelDims) -> Result<()> {
        dims.validate()?;
        let m = dims.m();
        if self.rank_r == 0 || self.rank_r > dims.m_h.min(dims.m_v) {
            return Err(Error::Parameter(format!(
                "rank_r must be in 1..=min(M_h, M_v)={}, got {}",
                dims.m_h.min(dims.m_v),
                self.rank_r
            )));
        }
        if self.sparse_blocks == 0 || self.block_len_gen == 0 {
            return Err(Error::Parameter(
                "sparse_blocks and block_len_gen must be positive".into(),
            ));
        }
        if self.sparse_blocks * self.block_len_gen > m {
            return Err(Error::Parameter(format!(
                "sparse_blocks*block_len_gen = {} exceeds M = {}",
                self.sparse_blocks * self.block_len_gen,
                m
            )));
        }
        // Active blocks are placed on the aligned grid with a one-slot gap so
        // that distinct blocks stay distinct runs.
        let slots = m / self.block_len_gen;
        if self.sparse_blocks > slots.div_ceil(2) {
            return Err(Error::Parameter(format!(
                "cannot place {} non-adjacent blocks of length {} in M = {}",
                self.sparse_blocks, self.block_len_gen, m
            )));
        }
        if !(0.0..=1.0).contains(&self.power_split) {
            return Err(Error::Parameter(format!(
                "power_split must be in [0,1], got {}",
                self.power_split
            )));
        }
        if !(self.energy_concentration > 0.0 && self.energy_concentration <= 1.0) {
            return Err(Error::Parameter(format!(
                "energy_concentration must be in (0,1], got {}",
                self.energy_concentration
            )));
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(Error::Parameter(format!(
                "gain must be positive and finite, got {}",
                self.gain
            )));
        }
        Ok(())
    }

    /// Defaults used by the desk-scale experiments: rank 3, two active blocks
    /// of one beam column each, even energy split, 90% concentration.
    pub fn default_for(dims: &ChannelDims) -> Self {
        Self {
            rank_r: 3.min(dims.m_h.min(dims.m_v)),
            sparse_blocks: 2,
            block_len_gen: dims.m_h,
            power_split: 0.5,
            energy_concentration: 0.9,
            gain: default_gain(),
        }
    }
}

/// One user's ground-truth beam-domain channel split.
///
/// Vectors are column-major vectorizations of the `M_h×M_v` matrices, so a
/// contiguous run of `M_h` entries is one beam column.
#[derive(Debug, Clone, PartialEq)]
pub struct UserChannel {
    pub lowrank: CVec,
    pub sparse: CVec,
}

impl UserChannel {
    /// Total beam-domain channel `h = h^L + h^S`.
    pub fn beam(&self) -> CVec {
        &self.lowrank + &self.sparse
    }
}

/// A full multi-user channel realization with its ground-truth split.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub dims: ChannelDims,
    pub seed: u64,
    pub users: Vec<UserChannel>,
}

/// Per-realization statistics printed by the CLI after generation.
#[derive(Debug, Clone, Serialize)]
pub struct ChannelSummary {
    /// Mean over users of the energy share of the top-5 singular values of
    /// the total beam matrix.
    pub top5_energy_share: f64,
    /// Mean over users of the fraction of nonzero entries in the sparse part.
    pub sparse_nnz_fraction: f64,
    /// Mean over users of the low-rank share of total energy.
    pub lowrank_energy_share: f64,
}

impl ChannelRealization {
    /// The collective channel `h = [h_1; …; h_K]` of length `M·K`.
    pub fn collective(&self) -> CVec {
        stack_users(self.users.iter().map(|u| u.beam()), self.dims.m())
    }

    /// Collective low-rank component.
    pub fn collective_lowrank(&self) -> CVec {
        stack_users(self.users.iter().map(|u| u.lowrank.clone()), self.dims.m())
    }

    /// Collective sparse component.
    pub fn collective_sparse(&self) -> CVec {
        stack_users(self.users.iter().map(|u| u.sparse.clone()), self.dims.m())
    }

    pub fn summary(&self) -> ChannelSummary {
        let m_h = self.dims.m_h;
        let m_v = self.dims.m_v;
        let mut top5 = 0.0;
        let mut nnz = 0.0;
        let mut lr_share = 0.0;
        for u in &self.users {
            let beam = u.beam();
            let mat = CMat::from_column_slice(m_h, m_v, beam.as_slice());
            let sv = mat.singular_values();
            let total: f64 = sv.iter().map(|s| s * s).sum();
            let head: f64 = sv.iter().take(5).map(|s| s * s).sum();
            top5 += if total > 0.0 { head / total } else { 1.0 };
            nnz += u.sparse.iter().filter(|z| z.norm_sqr() > 0.0).count() as f64
                / u.sparse.len() as f64;
            let el = u.lowrank.norm_squared();
            let es = u.sparse.norm_squared();
            lr_share += if el + es > 0.0 { el / (el + es) } else { 0.0 };
        }
        let k = self.users.len() as f64;
        ChannelSummary {
            top5_energy_share: top5 / k,
            sparse_nnz_fraction: nnz / k,
            lowrank_energy_share: lr_share / k,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ChannelJson::from(self);
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ChannelJson = serde_json::from_str(text)?;
        doc.try_into()
    }
}

fn stack_users(users: impl Iterator<Item = CVec>, m: usize) -> CVec {
    let mut out = Vec::new();
    for u in users {
        debug_assert_eq!(u.len(), m);
        out.extend_from_slice(u.as_slice());
    }
    CVec::from_vec(out)
}

/// Fraction of the low-rank energy shared by all users. The partially
/// visible scatterers are features of the cell geometry, so every user sees
/// the same array-side subspace and largely the same cluster coefficients;
/// the remainder is an individual perturbation in the same subspace.
pub const COMMON_VISIBILITY_MIX: f64 = 0.9;

/// Draw a ground-truth realization with the configured low-rank plus
/// block-sparse structure. Deterministic in `rng_seed`.
///
/// The partially-visible component lives on a contiguous band of beam
/// columns shared by the cell, with an array-side (left) singular subspace
/// common to all users, so the collective matrix `[H_1^L, …, H_K^L]` has
/// rank at most `rank_r` while each user's reshaped component does too.
pub fn synthesize_channel(
    params: &GeneratorParams,
    dims: ChannelDims,
    rng_seed: u64,
) -> Result<ChannelRealization> {
    params.validate(&dims)?;
    let m = dims.m();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let cell = LowRankCell::draw(params, &dims, &mut rng);
    let energy = params.gain * params.gain * m as f64;
    let mut users = Vec::with_capacity(dims.k_users);
    for _ in 0..dims.k_users {
        let lowrank = cell.user_component(params, &dims, &mut rng);
        let sparse = gen_sparse(params, m, &mut rng);
        // Exact energy split: ||h^L||^2 = split·E, ||h^S||^2 = (1-split)·E.
        let lowrank = rescale(lowrank, params.power_split * energy);
        let sparse = rescale(sparse, (1.0 - params.power_split) * energy);
        users.push(UserChannel { lowrank, sparse });
    }
    Ok(ChannelRealization {
        dims,
        seed: rng_seed,
        users,
    })
}

/// Cell-wide ingredients of the partially-visible component.
struct LowRankCell {
    /// Shared array-side subspace, `M_h × r` orthonormal, supported on the
    /// antenna rows that actually see the partially-visible clusters.
    u: CMat,
    /// Common right factors on the shared band, `M_v × r`.
    v_common: CMat,
    /// First beam column of the shared band.
    band_start: usize,
    band: usize,
    /// Geometric singular-value profile.
    sigma: Vec<f64>,
}

impl LowRankCell {
    fn draw(params: &GeneratorParams, dims: &ChannelDims, rng: &mut ChaCha8Rng) -> Self {
        let (m_h, m_v, r) = (dims.m_h, dims.m_v, params.rank_r);
        // Bands must be at least r wide to support rank r.
        let band = m_v.div_ceil(4).max(r).min(m_v);
        let band_start = rng.random_range(0..=(m_v - band));
        // Partial visibility across the array: the component is seen by a
        // contiguous subset of the horizontal antennas.
        let rows = m_h.div_ceil(4).max(r).min(m_h);
        let row_start = rng.random_range(0..=(m_h - rows));
        let u = embed_band(
            &QR::new(CMat::from_fn(rows, r, |_, _| complex_gaussian(rng))).q(),
            m_h,
            row_start,
        );
        let v_common = embed_band(
            &QR::new(CMat::from_fn(band, r, |_, _| complex_gaussian(rng))).q(),
            m_v,
            band_start,
        );
        // Geometric decay pinned so the first r terms of the extended series
        // carry energy_concentration of its total energy.
        let rho = (1.0 - params.energy_concentration).powf(1.0 / (2.0 * r as f64));
        let sigma = (0..r)
            .map(|i| if i == 0 { 1.0 } else { rho.powi(i as i32) })
            .collect();
        Self {
            u,
            v_common,
            band_start,
            band,
            sigma,
        }
    }

    /// One user's low-rank matrix, vectorized column-major: the common term
    /// plus an individual perturbation drawn in the same subspace and band.
    fn user_component(
        &self,
        params: &GeneratorParams,
        dims: &ChannelDims,
        rng: &mut ChaCha8Rng,
    ) -> CVec {
        let (m_h, m_v, r) = (dims.m_h, dims.m_v, params.rank_r);
        let v_own = embed_band(
            &QR::new(CMat::from_fn(self.band, r, |_, _| complex_gaussian(rng))).q(),
            m_v,
            self.band_start,
        );
        let c_mix = COMMON_VISIBILITY_MIX.sqrt();
        let i_mix = (1.0 - COMMON_VISIBILITY_MIX).sqrt();
        let mut h = CMat::zeros(m_h, m_v);
        for i in 0..r {
            let s = Complex64::new(self.sigma[i], 0.0);
            let ui = self.u.column(i);
            for c in 0..m_v {
                let w = s * (self.v_common[(c, i)].conj() * c_mix + v_own[(c, i)].conj() * i_mix);
                if w.norm_sqr() == 0.0 {
                    continue;
                }
                for rr in 0..m_h {
                    h[(rr, c)] += ui[rr] * w;
                }
            }
        }
        CVec::from_column_slice(h.as_slice())
    }
}

fn embed_band(v_band: &CMat, m_v: usize, start: usize) -> CMat {
    let mut v = CMat::zeros(m_v, v_band.ncols());
    v.view_mut((start, 0), (v_band.nrows(), v_band.ncols()))
        .copy_from(v_band);
    v
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> C64 {
    // CN(0,1): real and imaginary parts each N(0, 1/2).
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn gen_sparse(params: &GeneratorParams, m: usize, rng: &mut ChaCha8Rng) -> CVec {
    let len = params.block_len_gen;
    let b = params.sparse_blocks;
    let slots = m / len;
    // b non-adjacent slots out of `slots`: choose b distinct positions from
    // the compacted range and re-expand, which is uniform over valid picks.
    let mut picks = sample_distinct(rng, slots - b + 1, b);
    picks.sort_unstable();
    let mut h = CVec::zeros(m);
    for (i, p) in picks.iter().enumerate() {
        let slot = p + i;
        for e in 0..len {
            h[slot * len + e] = complex_gaussian(rng);
        }
    }
    h
}

fn sample_distinct(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<usize> {
    debug_assert!(count <= n);
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let idx = rng.random_range(0..pool.len());
        out.push(pool.swap_remove(idx));
    }
    out
}

fn rescale(v: CVec, target_energy: f64) -> CVec {
    let e = v.norm_squared();
    if target_energy <= 0.0 {
        return CVec::zeros(v.len());
    }
    if e == 0.0 {
        return v;
    }
    v * Complex64::new((target_energy / e).sqrt(), 0.0)
}

// --- JSON layout -----------------------------------------------------------
//
// {"dims":[M_h,M_v,K], "seed":…, "users":[{"lowrank_re":[…],"lowrank_im":[…],
//  "sparse_re":[…],"sparse_im":[…]}…]} with row-major arrays of length M.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelJson {
    dims: [usize; 3],
    seed: u64,
    users: Vec<UserJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserJson {
    lowrank_re: Vec<f64>,
    lowrank_im: Vec<f64>,
    sparse_re: Vec<f64>,
    sparse_im: Vec<f64>,
}

fn to_row_major(v: &CVec, m_h: usize, m_v: usize) -> (Vec<f64>, Vec<f64>) {
    let mut re = vec![0.0; m_h * m_v];
    let mut im = vec![0.0; m_h * m_v];
    for i in 0..m_h {
        for j in 0..m_v {
            let z = v[i + j * m_h];
            re[i * m_v + j] = z.re;
            im[i * m_v + j] = z.im;
        }
    }
    (re, im)
}

fn from_row_major(re: &[f64], im: &[f64], m_h: usize, m_v: usize) -> Result<CVec> {
    let m = m_h * m_v;
    if re.len() != m || im.len() != m {
        return Err(Error::Dimension(format!(
            "channel array length {} does not match M = {}",
            re.len(),
            m
        )));
    }
    let mut v = CVec::zeros(m);
    for i in 0..m_h {
        for j in 0..m_v {
            v[i + j * m_h] = Complex64::new(re[i * m_v + j], im[i * m_v + j]);
        }
    }
    Ok(v)
}

impl From<&ChannelRealization> for ChannelJson {
    fn from(c: &ChannelRealization) -> Self {
        let (m_h, m_v) = (c.dims.m_h, c.dims.m_v);
        ChannelJson {
            dims: [m_h, m_v, c.dims.k_users],
            seed: c.seed,
            users: c
                .users
                .iter()
                .map(|u| {
                    let (lowrank_re, lowrank_im) = to_row_major(&u.lowrank, m_h, m_v);
                    let (sparse_re, sparse_im) = to_row_major(&u.sparse, m_h, m_v);
                    UserJson {
                        lowrank_re,
                        lowrank_im,
                        sparse_re,
                        sparse_im,
                    }
                })
                .collect(),
        }
    }
}

impl TryFrom<ChannelJson> for ChannelRealization {
    type Error = Error;

    fn try_from(doc: ChannelJson) -> Result<Self> {
        let dims = ChannelDims::new(doc.dims[0], doc.dims[1], doc.dims[2]);
        dims.validate()?;
        if doc.users.len() != dims.k_users {
            return Err(Error::Dimension(format!(
                "file has {} users, dims say K = {}",
                doc.users.len(),
                dims.k_users
            )));
        }
        let users = doc
            .users
            .iter()
            .map(|u| {
                Ok(UserChannel {
                    lowrank: from_row_major(&u.lowrank_re, &u.lowrank_im, dims.m_h, dims.m_v)?,
                    sparse: from_row_major(&u.sparse_re, &u.sparse_im, dims.m_h, dims.m_v)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ChannelRealization {
            dims,
            seed: doc.seed,
            users,
        })
    }
}
