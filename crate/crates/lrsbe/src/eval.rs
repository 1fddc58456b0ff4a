//! NMSE, empirical CDFs, and the seeded Monte-Carlo experiment harness.
//!
//! A sweep walks the (SNR, trial) grid; each cell derives one trial seed from
//! the base seed and the grid coordinates, synthesizes channel, pilots, and
//! measurement once, and runs every configured solver on the identical data.
//! Records merge deterministically, so re-running a sweep reproduces every
//! metric bit for bit (wall-clock fields aside).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamspace::{synthesize_channel, ChannelDims, GeneratorParams};
use crate::error::{Error, Result};
use crate::measurement::{add_noise, PilotSet};
use crate::seed;
use crate::solvers::{LrsbeOptions, SolverKind};
use crate::CVec;

/// Per-user normalized squared error, averaged over users.
///
/// Returns `(linear, dB)`; exact recovery yields `(0, -inf)`.
pub fn nmse(h_true: &CVec, h_hat: &CVec, k_users: usize) -> Result<(f64, f64)> {
    if h_true.len() != h_hat.len() || k_users == 0 || h_true.len() % k_users != 0 {
        return Err(Error::Dimension(format!(
            "nmse: shapes {} vs {} with K = {k_users}",
            h_true.len(),
            h_hat.len()
        )));
    }
    let m = h_true.len() / k_users;
    let mut acc = 0.0;
    for k in 0..k_users {
        let mut err = 0.0;
        let mut pow = 0.0;
        for i in 0..m {
            err += (h_true[k * m + i] - h_hat[k * m + i]).norm_sqr();
            pow += h_true[k * m + i].norm_sqr();
        }
        if pow == 0.0 {
            return Err(Error::DegenerateInput(format!(
                "nmse: user {k} has a zero-norm true channel"
            )));
        }
        acc += err / pow;
    }
    let linear = acc / k_users as f64;
    Ok((linear, 10.0 * linear.log10()))
}

/// Empirical CDF with the right-continuous convention: sorted values paired
/// with probabilities `i/n`.
pub fn ecdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::DegenerateInput("ecdf of an empty list".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-comparable value in ecdf"));
    let n = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect())
}

/// One estimator entry in an experiment: a solver and its options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub name: SolverKind,
    #[serde(default)]
    pub options: LrsbeOptions,
}

/// Full description of one Monte-Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dims: ChannelDims,
    pub n_pilots: usize,
    pub snr_grid: Vec<f64>,
    pub n_trials: usize,
    pub base_seed: u64,
    pub generator: GeneratorParams,
    pub solvers: Vec<SolverSpec>,
    #[serde(default)]
    pub nmse_target: Option<f64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.generator.validate(&self.dims)?;
        if self.n_trials == 0 {
            return Err(Error::Parameter("n_trials must be >= 1".into()));
        }
        if self.snr_grid.is_empty() {
            return Err(Error::Parameter("snr_grid must be non-empty".into()));
        }
        if self.solvers.is_empty() {
            return Err(Error::Parameter("at least one solver is required".into()));
        }
        if self.n_pilots == 0 || self.n_pilots > self.dims.k_users {
            return Err(Error::Parameter(format!(
                "n_pilots must be in 1..=K={}, got {}",
                self.dims.k_users, self.n_pilots
            )));
        }
        for s in &self.solvers {
            s.options.validate()?;
        }
        if let Some(t) = self.nmse_target {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Parameter(format!(
                    "nmse_target must be in (0,1], got {t}"
                )));
            }
        }
        Ok(())
    }

    /// Seed of one (snr, trial) grid cell; every solver in the cell consumes
    /// the same data derived from it.
    pub fn trial_seed(&self, snr_index: usize, trial: usize) -> u64 {
        seed::derive(self.base_seed, snr_index as u64, trial as u64)
    }
}

/// One solver run on one trial.
#[derive(Debug, Clone)]
pub struct ResultRecord {
    pub solver: SolverKind,
    pub snr_db: f64,
    pub trial: usize,
    pub seed: u64,
    pub nmse_linear: f64,
    pub nmse_db: f64,
    pub iterations: usize,
    pub runtime_ms: f64,
    pub converged: bool,
    /// Populated when the solver failed; metric fields are NaN then.
    pub error: Option<String>,
}

/// Run the full paired sweep. Solver failures become failed records; the
/// sweep itself only fails on configuration errors.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let cells: Vec<(usize, usize)> = (0..cfg.snr_grid.len())
        .flat_map(|si| (0..cfg.n_trials).map(move |t| (si, t)))
        .collect();

    let mut records: Vec<ResultRecord> = cells
        .par_iter()
        .map(|&(si, trial)| run_cell(cfg, si, trial))
        .collect::<Result<Vec<Vec<ResultRecord>>>>()?
        .into_iter()
        .flatten()
        .collect();

    // Deterministic merge order: solver, then SNR, then trial.
    let solver_pos = |k: SolverKind| cfg.solvers.iter().position(|s| s.name == k).unwrap_or(0);
    records.sort_by(|a, b| {
        solver_pos(a.solver)
            .cmp(&solver_pos(b.solver))
            .then(a.snr_db.partial_cmp(&b.snr_db).unwrap())
            .then(a.trial.cmp(&b.trial))
    });
    Ok(records)
}

fn run_cell(cfg: &ExperimentConfig, snr_index: usize, trial: usize) -> Result<Vec<ResultRecord>> {
    let trial_seed = cfg.trial_seed(snr_index, trial);
    let snr_db = cfg.snr_grid[snr_index];
    let channel = synthesize_channel(&cfg.generator, cfg.dims, seed::derive(trial_seed, 1, 0))?;
    let pilots = PilotSet::make_pilots(cfg.n_pilots, cfg.dims.k_users, seed::derive(trial_seed, 2, 0))?;
    let h_true = channel.collective();
    let y_clean = pilots.forward(&h_true)?;
    let meas = add_noise(&y_clean, snr_db, seed::derive(trial_seed, 3, 0))?;

    let mut out = Vec::with_capacity(cfg.solvers.len());
    for spec in &cfg.solvers {
        let record = match spec.name.estimate(&meas, &pilots, &cfg.dims, &spec.options) {
            Ok(res) => {
                let (lin, db) = nmse(&h_true, &res.h_hat, cfg.dims.k_users)?;
                ResultRecord {
                    solver: spec.name,
                    snr_db,
                    trial,
                    seed: trial_seed,
                    nmse_linear: lin,
                    nmse_db: db,
                    iterations: res.iterations,
                    runtime_ms: res.runtime_ms,
                    converged: res.converged,
                    error: None,
                }
            }
            Err(e) => ResultRecord {
                solver: spec.name,
                snr_db,
                trial,
                seed: trial_seed,
                nmse_linear: f64::NAN,
                nmse_db: f64::NAN,
                iterations: 0,
                runtime_ms: 0.0,
                converged: false,
                error: Some(e.to_string()),
            },
        };
        out.push(record);
    }
    Ok(out)
}

/// Iteration counts needed to reach a target NMSE, per solver and SNR.
#[derive(Debug, Clone, Serialize)]
pub struct TargetStats {
    pub solver: SolverKind,
    pub snr_db: f64,
    /// Mean over trials of the first iteration whose running estimate meets
    /// the target; trials that never reach it count as the full budget.
    pub mean_first_crossing: f64,
    pub mean_runtime_ms: f64,
}

/// Re-run every configured solver with iterate recording and measure the
/// first iteration whose running estimate reaches `nmse ≤ target`.
pub fn iterations_to_target(cfg: &ExperimentConfig, nmse_target: f64) -> Result<Vec<TargetStats>> {
    cfg.validate()?;
    if !(nmse_target > 0.0 && nmse_target <= 1.0) {
        return Err(Error::Parameter(format!(
            "nmse_target must be in (0,1], got {nmse_target}"
        )));
    }

    let cells: Vec<(usize, usize)> = (0..cfg.snr_grid.len())
        .flat_map(|si| (0..cfg.n_trials).map(move |t| (si, t)))
        .collect();
    let per_cell: Vec<Vec<(usize, f64, f64)>> = cells
        .par_iter()
        .map(|&(si, trial)| target_cell(cfg, si, trial, nmse_target))
        .collect::<Result<Vec<_>>>()?;

    let mut stats = Vec::new();
    for (sidx, spec) in cfg.solvers.iter().enumerate() {
        for (si, &snr_db) in cfg.snr_grid.iter().enumerate() {
            let mut crossings = 0.0;
            let mut runtimes = 0.0;
            let mut count = 0usize;
            for (cell_idx, &(ci, _)) in cells.iter().enumerate() {
                if ci != si {
                    continue;
                }
                let (cross, runtime) = {
                    let row = &per_cell[cell_idx][sidx];
                    (row.1, row.2)
                };
                crossings += cross;
                runtimes += runtime;
                count += 1;
            }
            stats.push(TargetStats {
                solver: spec.name,
                snr_db,
                mean_first_crossing: crossings / count as f64,
                mean_runtime_ms: runtimes / count as f64,
            });
        }
    }
    Ok(stats)
}

fn target_cell(
    cfg: &ExperimentConfig,
    snr_index: usize,
    trial: usize,
    target: f64,
) -> Result<Vec<(usize, f64, f64)>> {
    let trial_seed = cfg.trial_seed(snr_index, trial);
    let snr_db = cfg.snr_grid[snr_index];
    let channel = synthesize_channel(&cfg.generator, cfg.dims, seed::derive(trial_seed, 1, 0))?;
    let pilots = PilotSet::make_pilots(cfg.n_pilots, cfg.dims.k_users, seed::derive(trial_seed, 2, 0))?;
    let h_true = channel.collective();
    let y_clean = pilots.forward(&h_true)?;
    let meas = add_noise(&y_clean, snr_db, seed::derive(trial_seed, 3, 0))?;

    let mut rows = Vec::with_capacity(cfg.solvers.len());
    for (sidx, spec) in cfg.solvers.iter().enumerate() {
        let mut opts = spec.options.clone();
        opts.record_iterates = true;
        let res = spec.name.estimate(&meas, &pilots, &cfg.dims, &opts)?;
        let mut crossing = opts.q_max;
        for t in &res.trace {
            if let Some(est) = &t.estimate {
                let (lin, _) = nmse(&h_true, est, cfg.dims.k_users)?;
                if lin <= target {
                    crossing = t.iter;
                    break;
                }
            }
        }
        rows.push((sidx, crossing as f64, res.runtime_ms));
    }
    Ok(rows)
}

/// Aggregate view of one (solver, SNR) cell of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryEntry {
    pub solver: SolverKind,
    pub snr_db: f64,
    pub trials: usize,
    pub failures: usize,
    /// `10·log10` of the mean linear NMSE; `None` when non-finite.
    pub mean_nmse_db: Option<f64>,
    /// Median of the per-trial dB values; `None` when non-finite.
    pub median_nmse_db: Option<f64>,
    pub mean_iterations: f64,
    pub mean_runtime_ms: f64,
}

/// Mean linear NMSE of one solver at one SNR, in dB.
pub fn mean_nmse_db(records: &[ResultRecord], solver: SolverKind, snr_db: f64) -> Option<f64> {
    let sel: Vec<f64> = records
        .iter()
        .filter(|r| r.solver == solver && r.snr_db == snr_db && r.error.is_none())
        .map(|r| r.nmse_linear)
        .collect();
    if sel.is_empty() {
        return None;
    }
    let mean = sel.iter().sum::<f64>() / sel.len() as f64;
    Some(10.0 * mean.log10())
}

pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryEntry> {
    let mut keys: Vec<(SolverKind, f64)> = Vec::new();
    for r in records {
        if !keys.iter().any(|(s, v)| *s == r.solver && *v == r.snr_db) {
            keys.push((r.solver, r.snr_db));
        }
    }
    keys.iter()
        .map(|&(solver, snr_db)| {
            let sel: Vec<&ResultRecord> = records
                .iter()
                .filter(|r| r.solver == solver && r.snr_db == snr_db)
                .collect();
            let ok: Vec<&&ResultRecord> = sel.iter().filter(|r| r.error.is_none()).collect();
            let mean_db = mean_nmse_db(records, solver, snr_db);
            let mut dbs: Vec<f64> = ok.iter().map(|r| r.nmse_db).collect();
            dbs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = if dbs.is_empty() {
                None
            } else {
                let mid = dbs.len() / 2;
                let v = if dbs.len() % 2 == 1 {
                    dbs[mid]
                } else {
                    0.5 * (dbs[mid - 1] + dbs[mid])
                };
                v.is_finite().then_some(v)
            };
            SummaryEntry {
                solver,
                snr_db,
                trials: sel.len(),
                failures: sel.len() - ok.len(),
                mean_nmse_db: mean_db.filter(|v| v.is_finite()),
                median_nmse_db: median,
                mean_iterations: if ok.is_empty() {
                    0.0
                } else {
                    ok.iter().map(|r| r.iterations as f64).sum::<f64>() / ok.len() as f64
                },
                mean_runtime_ms: if ok.is_empty() {
                    0.0
                } else {
                    ok.iter().map(|r| r.runtime_ms).sum::<f64>() / ok.len() as f64
                },
            }
        })
        .collect()
}

/// Records as CSV with the fixed header
/// `solver,snr_db,trial,seed,nmse_db,iterations,runtime_ms,converged`.
pub fn records_to_csv(records: &[ResultRecord]) -> String {
    let mut out = String::from("solver,snr_db,trial,seed,nmse_db,iterations,runtime_ms,converged\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.solver, r.snr_db, r.trial, r.seed, r.nmse_db, r.iterations, r.runtime_ms, r.converged
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn config_one() -> ExperimentConfig {
        let dims = ChannelDims::new(4, 4, 2);
        ExperimentConfig {
            dims,
            n_pilots: 2,
            snr_grid: vec![10.0],
            n_trials: 1,
            base_seed: 7,
            generator: GeneratorParams {
                rank_r: 2,
                sparse_blocks: 2,
                block_len_gen: 4,
                power_split: 0.5,
                energy_concentration: 0.9,
                gain: 2.0,
            },
            solvers: vec![SolverSpec {
                name: SolverKind::Lrsbe,
                options: LrsbeOptions::default(),
            }],
            nmse_target: None,
        }
    }

    #[test]
    fn nmse_identities() {
        let h = CVec::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 2.0),
            Complex64::new(-1.0, 1.0),
            Complex64::new(0.5, 0.0),
        ]);
        let (lin, db) = nmse(&h, &h, 2).unwrap();
        assert_eq!(lin, 0.0);
        assert!(db.is_infinite() && db < 0.0);

        let zero = CVec::zeros(4);
        let (lin, db) = nmse(&h, &zero, 2).unwrap();
        assert!((lin - 1.0).abs() < 1e-15);
        assert!(db.abs() < 1e-12);

        let double = &h * Complex64::new(2.0, 0.0);
        let (lin, _) = nmse(&h, &double, 2).unwrap();
        assert!((lin - 1.0).abs() < 1e-15);

        assert!(matches!(
            nmse(&zero, &h, 2),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn ecdf_basics() {
        assert!(ecdf(&[]).is_err());
        let single = ecdf(&[5.0]).unwrap();
        assert_eq!(single, vec![(5.0, 1.0)]);
        let four = ecdf(&[3.0, 1.0, 4.0, 2.0]).unwrap();
        assert_eq!(four[1], (2.0, 0.5));
    }

    #[test]
    fn ecdf_quantile_round_trip() {
        // Quantiles read back from the ecdf match direct order statistics.
        let vals: Vec<f64> = (0..100).map(|i| seed::mix(i) as f64 / u64::MAX as f64).collect();
        let cdf = ecdf(&vals).unwrap();
        let mut sorted = vals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for q in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let from_cdf = cdf
                .iter()
                .find(|(_, p)| *p >= q)
                .map(|(v, _)| *v)
                .unwrap();
            let direct = sorted[((q * 100.0).ceil() as usize - 1).min(99)];
            assert_eq!(from_cdf, direct);
        }
    }

    #[test]
    fn sweep_single_record() {
        let cfg = config_one();
        let records = run_sweep(&cfg).unwrap();
        assert_eq!(records.len(), 1);
        assert!(records[0].error.is_none());
        assert!(records[0].nmse_db.is_finite());
    }

    #[test]
    fn sweep_paired_seeds() {
        let mut cfg = config_one();
        cfg.solvers.push(SolverSpec {
            name: SolverKind::Omp,
            options: LrsbeOptions::default(),
        });
        let records = run_sweep(&cfg).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].seed, records[1].seed);
    }

    #[test]
    fn sweep_deterministic() {
        let mut cfg = config_one();
        cfg.n_trials = 3;
        cfg.snr_grid = vec![0.0, 10.0];
        let a = run_sweep(&cfg).unwrap();
        let b = run_sweep(&cfg).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.nmse_db.to_bits(), y.nmse_db.to_bits());
            assert_eq!(x.seed, y.seed);
            assert_eq!(x.iterations, y.iterations);
        }
    }

    #[test]
    fn csv_shape() {
        let cfg = config_one();
        let records = run_sweep(&cfg).unwrap();
        let csv = records_to_csv(&records);
        let lines: Vec<&str> = csv.trim().lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            "solver,snr_db,trial,seed,nmse_db,iterations,runtime_ms,converged"
        );
        assert!(lines[1].starts_with("lrsbe,10,"));
    }

    #[test]
    fn crossing_with_trivial_target() {
        let mut cfg = config_one();
        cfg.snr_grid = vec![30.0];
        let stats = iterations_to_target(&cfg, 1.0).unwrap();
        assert_eq!(stats.len(), 1);
        // At 30 dB the first iterate is already below NMSE 1.
        assert!((stats[0].mean_first_crossing - 1.0).abs() < 1e-12);
    }
}
