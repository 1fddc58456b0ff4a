//! Command front end: `generate | estimate | sweep`.
//!
//! All three commands read a JSON experiment config with strict key checking
//! (a typo in a hyperparameter name is an error, not a silent default).
//! Exit codes: 0 success, 1 runtime failure, 2 validation or usage error.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::beamspace::{synthesize_channel, ChannelDims, ChannelRealization, GeneratorParams};
use crate::error::{Error, Result};
use crate::eval::{
    iterations_to_target, records_to_csv, run_sweep, summarize, ExperimentConfig, SolverSpec,
    SummaryEntry, TargetStats,
};
use crate::measurement::{add_noise, PilotSet};
use crate::seed;
use crate::solvers::{LrsbeOptions, SolverKind};

/// Experiment config as stored on disk; mirrors [`ExperimentConfig`] plus
/// output paths and verbosity. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    /// `[M_h, M_v, K]`.
    pub dims: [usize; 3],
    pub n_pilots: usize,
    pub snr_grid: Vec<f64>,
    pub n_trials: usize,
    pub base_seed: u64,
    /// Generator shape; defaults are derived from `dims` when omitted.
    #[serde(default)]
    pub generator: Option<GeneratorParams>,
    /// Solvers to run; all five with default options when omitted.
    #[serde(default)]
    pub solvers: Option<Vec<SolverSpec>>,
    #[serde(default)]
    pub nmse_target: Option<f64>,
    #[serde(default)]
    pub out_csv: Option<PathBuf>,
    #[serde(default)]
    pub out_summary: Option<PathBuf>,
    #[serde(default)]
    pub verbosity: u8,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Replace the SNR grid with a single point.
    pub snr_db: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    /// Force deterministic single-run options on every solver.
    pub deterministic: bool,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: CliConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn dims(&self) -> ChannelDims {
        ChannelDims::new(self.dims[0], self.dims[1], self.dims[2])
    }

    /// Materialize the experiment description with overrides applied.
    pub fn experiment(&self, ovr: &Overrides) -> Result<ExperimentConfig> {
        let dims = self.dims();
        let generator = self
            .generator
            .unwrap_or_else(|| GeneratorParams::default_for(&dims));
        let mut solvers = self.solvers.clone().unwrap_or_else(|| {
            SolverKind::ALL
                .iter()
                .map(|k| SolverSpec {
                    name: *k,
                    options: LrsbeOptions::default(),
                })
                .collect()
        });
        if ovr.deterministic {
            for s in solvers.iter_mut() {
                s.options.deterministic = true;
            }
        }
        let cfg = ExperimentConfig {
            dims,
            n_pilots: self.n_pilots,
            snr_grid: ovr
                .snr_db
                .map(|s| vec![s])
                .unwrap_or_else(|| self.snr_grid.clone()),
            n_trials: ovr.trials.unwrap_or(self.n_trials),
            base_seed: ovr.seed.unwrap_or(self.base_seed),
            generator,
            solvers,
            nmse_target: self.nmse_target,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Map an error to the documented process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parameter(_)
        | Error::Dimension(_)
        | Error::UnknownSolver { .. }
        | Error::DegenerateInput(_)
        | Error::Json(_) => 2,
        _ => 1,
    }
}

/// Synthesize a channel from the config and write it as JSON; prints summary
/// statistics of the realization.
pub fn cmd_generate(config_path: &Path, out_path: &Path, ovr: &Overrides) -> Result<()> {
    let cfg = CliConfig::load(config_path)?;
    let exp = cfg.experiment(ovr)?;
    let channel = synthesize_channel(&exp.generator, exp.dims, exp.base_seed)?;
    std::fs::write(out_path, channel.to_json()?)?;
    let s = channel.summary();
    println!(
        "wrote {} (M_h={}, M_v={}, K={}, seed={})",
        out_path.display(),
        exp.dims.m_h,
        exp.dims.m_v,
        exp.dims.k_users,
        exp.base_seed
    );
    println!(
        "top-5 singular-value energy share: {:.4}; sparse nonzero fraction: {:.4}; low-rank energy share: {:.4}",
        s.top5_energy_share, s.sparse_nnz_fraction, s.lowrank_energy_share
    );
    Ok(())
}

/// Run one estimator on a freshly noised measurement of a stored channel.
pub fn cmd_estimate(
    config_path: &Path,
    channel_path: &Path,
    solver_name: &str,
    trace_out: Option<&Path>,
    ovr: &Overrides,
) -> Result<()> {
    let cfg = CliConfig::load(config_path)?;
    let solver = SolverKind::parse(solver_name)?;
    let channel = ChannelRealization::from_json(&std::fs::read_to_string(channel_path)?)?;
    let exp = cfg.experiment(ovr)?;
    if channel.dims != exp.dims {
        return Err(Error::Dimension(format!(
            "channel file is {}x{} K={}, config says {}x{} K={}",
            channel.dims.m_h,
            channel.dims.m_v,
            channel.dims.k_users,
            exp.dims.m_h,
            exp.dims.m_v,
            exp.dims.k_users
        )));
    }
    let snr_db = ovr.snr_db.unwrap_or(exp.snr_grid[0]);
    let pilots = PilotSet::make_pilots(exp.n_pilots, exp.dims.k_users, 0)?;
    let h_true = channel.collective();
    let y_clean = pilots.forward(&h_true)?;
    let meas = add_noise(&y_clean, snr_db, seed::derive(exp.base_seed, 4, 0))?;

    let opts = exp
        .solvers
        .iter()
        .find(|s| s.name == solver)
        .map(|s| s.options.clone())
        .unwrap_or_default();
    let res = solver.estimate(&meas, &pilots, &exp.dims, &opts)?;
    let (_, db) = crate::eval::nmse(&h_true, &res.h_hat, exp.dims.k_users)?;
    println!(
        "solver={} snr_db={} nmse_db={:.4} iterations={} runtime_ms={:.3} converged={}",
        solver, snr_db, db, res.iterations, res.runtime_ms, res.converged
    );
    if let Some(path) = trace_out {
        std::fs::write(path, res.trace_csv())?;
        println!("trace written to {}", path.display());
    }
    Ok(())
}

/// Sweep summary document: per-cell aggregates plus optional target stats.
#[derive(Debug, Serialize)]
struct SummaryDoc {
    entries: Vec<SummaryEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<Vec<TargetStats>>,
}

/// Execute the configured sweep; writes the records CSV and a summary JSON
/// next to it (`<stem>.summary.json` unless the config names a path).
/// `out_csv` falls back to the config's `out_csv` when not given.
pub fn cmd_sweep(config_path: &Path, out_csv: Option<&Path>, ovr: &Overrides) -> Result<()> {
    let cfg = CliConfig::load(config_path)?;
    let out_csv = match out_csv.or(cfg.out_csv.as_deref()) {
        Some(p) => p.to_path_buf(),
        None => {
            return Err(Error::Parameter(
                "no output path: pass --out or set out_csv in the config".into(),
            ))
        }
    };
    let out_csv = out_csv.as_path();
    let exp = cfg.experiment(ovr)?;
    if cfg.verbosity > 0 {
        eprintln!(
            "sweep: {} solvers x {} SNRs x {} trials",
            exp.solvers.len(),
            exp.snr_grid.len(),
            exp.n_trials
        );
    }
    let records = run_sweep(&exp)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    std::fs::write(out_csv, records_to_csv(&records))?;

    let target = match exp.nmse_target {
        Some(t) => Some(iterations_to_target(&exp, t)?),
        None => None,
    };
    let doc = SummaryDoc {
        entries: summarize(&records),
        target,
    };
    let summary_path = cfg
        .out_summary
        .clone()
        .unwrap_or_else(|| summary_path_for(out_csv));
    std::fs::write(&summary_path, serde_json::to_string_pretty(&doc)?)?;

    println!(
        "wrote {} ({} records, {} failed) and {}",
        out_csv.display(),
        records.len(),
        failed,
        summary_path.display()
    );
    if failed == records.len() {
        return Err(Error::numerical("every trial failed"));
    }
    Ok(())
}

fn summary_path_for(out_csv: &Path) -> PathBuf {
    let stem = out_csv
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results".into());
    out_csv.with_file_name(format!("{stem}.summary.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &Path) -> PathBuf {
        let path = dir.join("config.json");
        let cfg = serde_json::json!({
            "dims": [4, 4, 2],
            "n_pilots": 2,
            "snr_grid": [10.0],
            "n_trials": 1,
            "base_seed": 3,
            "generator": {
                "rank_r": 2,
                "sparse_blocks": 2,
                "block_len_gen": 4,
                "power_split": 0.5,
                "energy_concentration": 0.9
            },
            "solvers": [{"name": "lrsbe"}]
        });
        std::fs::write(&path, cfg.to_string()).unwrap();
        path
    }

    #[test]
    fn generate_estimate_sweep_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let config = write_config(dir.path());
        let channel = dir.path().join("channel.json");
        cmd_generate(&config, &channel, &Overrides::default()).unwrap();
        assert!(channel.exists());

        // Reload gives back the identical realization.
        let loaded =
            ChannelRealization::from_json(&std::fs::read_to_string(&channel).unwrap()).unwrap();
        let cfg = CliConfig::load(&config).unwrap();
        let exp = cfg.experiment(&Overrides::default()).unwrap();
        let expect = synthesize_channel(&exp.generator, exp.dims, exp.base_seed).unwrap();
        assert_eq!(loaded, expect);

        cmd_estimate(&config, &channel, "lrsbe", None, &Overrides::default()).unwrap();

        let out = dir.path().join("results.csv");
        cmd_sweep(&config, Some(&out), &Overrides::default()).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.trim().lines().count(), 2);
        assert!(dir.path().join("results.summary.json").exists());
    }

    #[test]
    fn unknown_solver_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let config = write_config(dir.path());
        let channel = dir.path().join("channel.json");
        cmd_generate(&config, &channel, &Overrides::default()).unwrap();
        let err =
            cmd_estimate(&config, &channel, "bogus", None, &Overrides::default()).unwrap_err();
        assert_eq!(exit_code(&err), 2);
        assert!(err.to_string().contains("lrsbe"));
    }

    #[test]
    fn invalid_generator_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        let cfg = serde_json::json!({
            "dims": [4, 4, 2],
            "n_pilots": 2,
            "snr_grid": [10.0],
            "n_trials": 1,
            "base_seed": 3,
            "generator": {
                "rank_r": 9,
                "sparse_blocks": 2,
                "block_len_gen": 4,
                "power_split": 0.5,
                "energy_concentration": 0.9
            }
        });
        std::fs::write(&path, cfg.to_string()).unwrap();
        let err = cmd_generate(&path, &dir.path().join("c.json"), &Overrides::default())
            .unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn unknown_config_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("typo.json");
        let cfg = serde_json::json!({
            "dims": [4, 4, 2],
            "n_pilots": 2,
            "snr_grid": [10.0],
            "n_trials": 1,
            "base_seed": 3,
            "n_trails": 5
        });
        std::fs::write(&path, cfg.to_string()).unwrap();
        let err = CliConfig::load(&path).unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }
}
