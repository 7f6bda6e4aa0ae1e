//! End-to-end run: validation and initial samples, initial model, size
//! estimate, optional retraining on the larger subset, imputation.

use std::time::Instant;

use crate::dim::{impute, train, DimConfig, DimError, TrainedImputer};
use crate::matrix::{make_holdout, rmse, DenseMatrix, MaskedDataset, MatrixError};
use crate::sse::{estimate_min_size, SizeEstimate, SseConfig, SseError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScisError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sse(#[from] SseError),
    #[error(transparent)]
    Dim(#[from] DimError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

pub type Result<T> = std::result::Result<T, ScisError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScisConfig {
    pub dim: DimConfig,
    pub sse: SseConfig,
    pub seed: u64,
    /// Retrain from a fresh initialisation instead of the initial model.
    pub cold_start: bool,
}

impl Default for ScisConfig {
    fn default() -> Self {
        Self {
            dim: DimConfig::default(),
            sse: SseConfig::default(),
            seed: 0,
            cold_start: false,
        }
    }
}

impl ScisConfig {
    /// Checks the size constraints for a dataset of `n_total` rows.
    pub fn validate(&self, n_total: usize) -> Result<f64> {
        let threshold = self.sse.validate()?;
        self.dim_config().validate()?;
        if self.sse.n0 + self.sse.nv > n_total {
            return Err(ScisError::InvalidConfig(format!(
                "n0 + nv = {} exceeds the {} available rows",
                self.sse.n0 + self.sse.nv,
                n_total
            )));
        }
        Ok(threshold)
    }

    /// Training settings with the run seed and the shared `λ` applied.
    pub fn dim_config(&self) -> DimConfig {
        DimConfig {
            seed: self.seed,
            lambda: self.sse.lambda,
            ..self.dim.clone()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WallTimes {
    pub sampling_secs: f64,
    pub initial_train_secs: f64,
    pub sse_secs: f64,
    pub retrain_secs: Option<f64>,
    pub impute_secs: f64,
    pub total_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub run: u64,
    pub dim: u64,
    pub sse: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: String,
    pub n_total: usize,
    pub n_star: usize,
    /// Rows actually used for the final model.
    pub train_rows: usize,
    pub training_sample_rate: f64,
    pub retrained: bool,
    pub rmse: Option<f64>,
    pub sse_estimate: Option<SizeEstimate>,
    pub wall_times: WallTimes,
    pub seeds: Seeds,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub imputed: DenseMatrix,
    pub model: TrainedImputer,
    pub report: RunReport,
    /// Row indices of the validation set, initial set and final training set.
    pub validation_rows: Vec<usize>,
    pub initial_rows: Vec<usize>,
    pub train_rows: Vec<usize>,
}

/// Disjoint validation and initial samples plus the remaining rows, in a
/// seeded random order.
fn split_rows(n_total: usize, nv: usize, n0: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n_total).collect();
    perm.shuffle(&mut rng);
    let rest = perm.split_off(nv + n0);
    let initial = perm.split_off(nv);
    (perm, initial, rest)
}

/// Full pipeline on a normalized dataset.
pub fn run(ds: &MaskedDataset, cfg: &ScisConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let n_total = ds.rows();
    cfg.validate(n_total)?;
    let dim_cfg = cfg.dim_config();
    let sse_seed = cfg.seed.wrapping_add(1);
    let mut times = WallTimes::default();

    let t = Instant::now();
    let (val_rows, init_rows, rest) = split_rows(n_total, cfg.sse.nv, cfg.sse.n0, cfg.seed);
    let validation = ds.select_rows(&val_rows);
    let ds0 = ds.select_rows(&init_rows);
    times.sampling_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let model0 = train(&ds0, &dim_cfg, None)?;
    times.initial_train_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let estimate = estimate_min_size(&model0, &ds0, &validation, n_total, &cfg.sse, sse_seed)?;
    times.sse_secs = t.elapsed().as_secs_f64();

    let n_star = estimate.n_star;
    let (model, train_rows) = if n_star == cfg.sse.n0 {
        (model0, init_rows.clone())
    } else {
        // validation rows stay out of the training set
        let target = n_star.min(n_total - cfg.sse.nv);
        let mut rows = init_rows.clone();
        rows.extend_from_slice(&rest[..target - cfg.sse.n0]);
        let t = Instant::now();
        let init = if cfg.cold_start { None } else { Some(&model0.params) };
        let m = train(&ds.select_rows(&rows), &dim_cfg, init)?;
        times.retrain_secs = Some(t.elapsed().as_secs_f64());
        (m, rows)
    };

    let t = Instant::now();
    let imputed = impute(&model, ds)?;
    times.impute_secs = t.elapsed().as_secs_f64();
    times.total_secs = start.elapsed().as_secs_f64();

    let report = RunReport {
        mode: "scis".into(),
        n_total,
        n_star,
        train_rows: train_rows.len(),
        training_sample_rate: n_star as f64 / n_total as f64,
        retrained: times.retrain_secs.is_some(),
        rmse: None,
        sse_estimate: Some(estimate),
        wall_times: times,
        seeds: Seeds {
            run: cfg.seed,
            dim: dim_cfg.seed,
            sse: sse_seed,
        },
    };
    Ok(RunOutput {
        imputed,
        model,
        report,
        validation_rows: val_rows,
        initial_rows: init_rows,
        train_rows,
    })
}

/// Trains on every row with the divergence loss, no size estimation.
pub fn run_full_baseline(ds: &MaskedDataset, cfg: &ScisConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let n_total = ds.rows();
    let dim_cfg = cfg.dim_config();
    dim_cfg.validate()?;
    if n_total == 0 {
        return Err(DimError::EmptyDataset.into());
    }
    let mut times = WallTimes::default();
    let t = Instant::now();
    let model = train(ds, &dim_cfg, None)?;
    times.initial_train_secs = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let imputed = impute(&model, ds)?;
    times.impute_secs = t.elapsed().as_secs_f64();
    times.total_secs = start.elapsed().as_secs_f64();
    let all: Vec<usize> = (0..n_total).collect();
    Ok(RunOutput {
        imputed,
        model,
        report: RunReport {
            mode: "full".into(),
            n_total,
            n_star: n_total,
            train_rows: n_total,
            training_sample_rate: 1.0,
            retrained: false,
            rmse: None,
            sse_estimate: None,
            wall_times: times,
            seeds: Seeds {
                run: cfg.seed,
                dim: dim_cfg.seed,
                sse: cfg.seed.wrapping_add(1),
            },
        },
        validation_rows: Vec::new(),
        initial_rows: Vec::new(),
        train_rows: all,
    })
}

/// Size estimate alone: samples, trains the initial model and searches.
pub fn estimate_only(ds: &MaskedDataset, cfg: &ScisConfig) -> Result<SizeEstimate> {
    let n_total = ds.rows();
    cfg.validate(n_total)?;
    let (val_rows, init_rows, _) = split_rows(n_total, cfg.sse.nv, cfg.sse.n0, cfg.seed);
    let ds0 = ds.select_rows(&init_rows);
    let model0 = train(&ds0, &cfg.dim_config(), None)?;
    Ok(estimate_min_size(
        &model0,
        &ds0,
        &ds.select_rows(&val_rows),
        n_total,
        &cfg.sse,
        cfg.seed.wrapping_add(1),
    )?)
}

/// Hides `holdout` of the observed cells, runs the pipeline (or the full
/// baseline) and scores the hidden cells.
pub fn evaluate(ds: &MaskedDataset, cfg: &ScisConfig, holdout: f64, full: bool) -> Result<RunOutput> {
    let split = make_holdout(ds, holdout, cfg.seed.wrapping_add(2))?;
    let mut out = if full {
        run_full_baseline(&split.train, cfg)?
    } else {
        run(&split.train, cfg)?
    };
    out.report.rmse = Some(rmse(&split, &out.imputed)?);
    Ok(out)
}
