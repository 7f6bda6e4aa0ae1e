//! Desk-scale comparison of the sized run against the full-data baseline.

use serde::{Deserialize, Serialize};

use crate::matrix::{apply_mcar, make_holdout, rmse, MaskedDataset};
use crate::orchestrator::{run, run_full_baseline, Result, ScisConfig};
use crate::synth::{synth, SynthKind, SynthSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskOptions {
    pub n: usize,
    pub d: usize,
    pub missing_rate: f64,
    pub holdout: f64,
    pub seeds: Vec<u64>,
}

impl Default for DeskOptions {
    fn default() -> Self {
        Self {
            n: 20_000,
            d: 8,
            missing_rate: 0.3,
            holdout: 0.2,
            seeds: vec![0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskTimes {
    pub scis_secs: f64,
    pub full_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskRun {
    pub seed: u64,
    pub n_star: usize,
    pub training_sample_rate: f64,
    pub rmse_scis: f64,
    pub rmse_full: f64,
    /// Observed cells returned unchanged by both runs.
    pub observed_preserved: bool,
    pub wall_times: DeskTimes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskReport {
    pub suite: String,
    pub options: DeskOptions,
    pub runs: Vec<DeskRun>,
}

fn preserved(ds: &MaskedDataset, imputed: &crate::matrix::DenseMatrix) -> bool {
    (0..ds.rows()).all(|r| {
        (0..ds.cols()).all(|c| !ds.mask.is_observed(r, c) || imputed.get(r, c).to_bits() == ds.data.get(r, c).to_bits())
    })
}

/// One seeded synthetic mixture per seed, imputed by both pipelines.
pub fn desk_run(opts: &DeskOptions, base: &ScisConfig, seed: u64) -> Result<DeskRun> {
    let full = synth(&SynthSpec::new(SynthKind::GaussianMixture, opts.n, opts.d, seed));
    let ds = apply_mcar(&full, opts.missing_rate, seed.wrapping_add(100))?;
    let split = make_holdout(&ds, opts.holdout, seed.wrapping_add(200))?;
    let cfg = ScisConfig {
        seed,
        ..base.clone()
    };
    let scis = run(&split.train, &cfg)?;
    let baseline = run_full_baseline(&split.train, &cfg)?;
    Ok(DeskRun {
        seed,
        n_star: scis.report.n_star,
        training_sample_rate: scis.report.training_sample_rate,
        rmse_scis: rmse(&split, &scis.imputed)?,
        rmse_full: rmse(&split, &baseline.imputed)?,
        observed_preserved: preserved(&split.train, &scis.imputed) && preserved(&split.train, &baseline.imputed),
        wall_times: DeskTimes {
            scis_secs: scis.report.wall_times.total_secs,
            full_secs: baseline.report.wall_times.total_secs,
        },
    })
}

pub fn desk_suite(opts: &DeskOptions, base: &ScisConfig) -> Result<DeskReport> {
    let runs = opts
        .seeds
        .iter()
        .map(|&s| desk_run(opts, base, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(DeskReport {
        suite: "desk".into(),
        options: opts.clone(),
        runs,
    })
}
