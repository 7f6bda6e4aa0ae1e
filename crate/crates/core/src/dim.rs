//! Generator training on the masked Sinkhorn loss, imputation, and the
//! per-column regression backend.

use std::io::Write;

use crate::matrix::{fuse_imputation, DenseMatrix, MaskMatrix, MaskedDataset, MatrixError};
use crate::neural::{
    adam_step, backward, backward_full, forward, init_params, predict, Activation, AdamState, MlpSpec,
    NeuralError, OutputActivation, ParamVector,
};
use crate::sinkhorn::{apply_mask, divergence_with_grad_impl, ms_loss_impl, CostKind, OtError, SinkhornSettings};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper end of the uniform noise placed in missing input coordinates.
pub const NOISE_SCALE: f64 = 0.01;

const IMPUTE_STREAM: u64 = 0x1d2f_7a11;

#[derive(Debug, Error)]
pub enum DimError {
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, batch {batch} (value {value})")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

pub type Result<T> = std::result::Result<T, DimError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DimConfig {
    pub lambda: f64,
    pub sinkhorn_max_iters: usize,
    pub sinkhorn_tolerance: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adversarial: bool,
    pub disc_steps_per_gen_step: usize,
    pub seed: u64,
    /// Hidden width of the generator; `None` means the data width.
    pub hidden_width: Option<usize>,
    /// Fraction of observed input cells hidden from the generator during
    /// training while still scored by the loss.
    pub input_drop_rate: f64,
    /// Weight of the mean squared reconstruction error on observed cells,
    /// added to the divergence loss.
    pub reconstruction_weight: f64,
}

impl Default for DimConfig {
    fn default() -> Self {
        let s = SinkhornSettings::default();
        Self {
            lambda: s.lambda,
            sinkhorn_max_iters: s.max_iters,
            sinkhorn_tolerance: s.tolerance,
            epochs: 100,
            batch_size: 128,
            lr: 0.001,
            adversarial: false,
            disc_steps_per_gen_step: 1,
            seed: 0,
            hidden_width: None,
            input_drop_rate: 0.2,
            reconstruction_weight: 1.0,
        }
    }
}

impl DimConfig {
    pub fn sinkhorn(&self) -> SinkhornSettings {
        SinkhornSettings {
            lambda: self.lambda,
            max_iters: self.sinkhorn_max_iters,
            tolerance: self.sinkhorn_tolerance,
            log_domain: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(DimError::InvalidConfig(format!("batch_size {} < 2", self.batch_size)));
        }
        if self.epochs < 1 {
            return Err(DimError::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(DimError::InvalidConfig(format!("lr {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.input_drop_rate) {
            return Err(DimError::InvalidConfig(format!("input_drop_rate {}", self.input_drop_rate)));
        }
        if self.adversarial && self.disc_steps_per_gen_step == 0 {
            return Err(DimError::InvalidConfig("disc_steps_per_gen_step is zero".into()));
        }
        if !(self.reconstruction_weight >= 0.0 && self.reconstruction_weight.is_finite()) {
            return Err(DimError::InvalidConfig(format!(
                "reconstruction_weight {}",
                self.reconstruction_weight
            )));
        }
        if self.hidden_width == Some(0) {
            return Err(DimError::InvalidConfig("hidden_width is zero".into()));
        }
        self.sinkhorn().validate()?;
        Ok(())
    }

    /// Generator for `d` data columns: input `[x, m]`, output `x̄`.
    pub fn generator_spec(&self, d: usize) -> MlpSpec {
        let h = self.hidden_width.unwrap_or(d);
        MlpSpec::new(vec![2 * d, h, d], Activation::Relu, OutputActivation::Sigmoid, self.seed)
    }

    fn discriminator_spec(&self, d: usize) -> MlpSpec {
        MlpSpec::new(
            vec![d, d, d],
            Activation::Tanh,
            OutputActivation::Sigmoid,
            self.seed.wrapping_add(1),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedImputer {
    pub spec: MlpSpec,
    pub params: ParamVector,
    pub discriminator: Option<(MlpSpec, ParamVector)>,
    pub loss_history: Vec<f64>,
    pub config: DimConfig,
}

impl TrainedImputer {
    pub fn input_dim(&self) -> usize {
        self.spec.output_dim()
    }

    /// Same architecture and discriminator, different generator parameters.
    pub fn with_params(&self, params: ParamVector) -> Self {
        Self {
            params,
            loss_history: Vec::new(),
            ..self.clone()
        }
    }

    pub fn write_loss_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,loss")?;
        for (e, l) in self.loss_history.iter().enumerate() {
            writeln!(w, "{},{}", e + 1, l)?;
        }
        Ok(())
    }
}

/// `[m ⊙ x + (1 − m) ⊙ u, m]` with `u ~ U(0, NOISE_SCALE)`.
pub fn generator_input<R: Rng>(data: &DenseMatrix, mask: &MaskMatrix, rng: &mut R) -> Result<DenseMatrix> {
    if data.shape() != mask.shape() {
        return Err(DimError::ShapeMismatch(format!("data {:?} vs mask {:?}", data.shape(), mask.shape())));
    }
    let (n, d) = data.shape();
    let mut out = DenseMatrix::zeros(n, 2 * d);
    for r in 0..n {
        let xr = data.row(r);
        let mr = mask.row(r);
        let or = out.row_mut(r);
        for k in 0..d {
            if mr[k] {
                or[k] = xr[k];
                or[d + k] = 1.0;
            } else {
                or[k] = rng.random_range(0.0..NOISE_SCALE);
            }
        }
    }
    Ok(out)
}

pub(crate) fn impute_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(IMPUTE_STREAM);
    rng
}

/// Row chunks of a shuffled order; a trailing singleton joins the previous chunk.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        out.pop();
        let k = out.len() - 1;
        let start = k * size;
        out[k] = &order[start..];
    }
    out
}

/// Adds `w · mean_{observed}(x̄ − x)²` to the loss and its gradient.
fn add_reconstruction(
    w: f64,
    recon: &DenseMatrix,
    data: &DenseMatrix,
    mask: &MaskMatrix,
    grad: &mut DenseMatrix,
) -> f64 {
    let count = mask.observed_count();
    if w == 0.0 || count == 0 {
        return 0.0;
    }
    let scale = w / count as f64;
    let mut sse = 0.0;
    for (((g, &r), &x), &m) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(recon.as_slice())
        .zip(data.as_slice())
        .zip(mask.as_slice())
    {
        if m {
            sse += (r - x) * (r - x);
            *g += 2.0 * scale * (r - x);
        }
    }
    sse * scale
}

fn check_finite(value: f64, epoch: usize, batch: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(DimError::NonFiniteLoss { epoch, batch, value })
    }
}

struct Discriminator {
    spec: MlpSpec,
    params: ParamVector,
    adam: AdamState,
}

/// Embedding-space loss and its gradient with respect to the masked
/// reconstruction (left) and, optionally, the discriminator parameters.
fn embedding_loss(
    disc: &Discriminator,
    left: &DenseMatrix,
    right: &DenseMatrix,
    settings: &SinkhornSettings,
) -> Result<(f64, DenseMatrix, ParamVector)> {
    let n = left.rows() as f64;
    let (ea, ta) = forward(&disc.params, &disc.spec, left)?;
    let (eb, tb) = forward(&disc.params, &disc.spec, right)?;
    let div = divergence_with_grad_impl(&ea, &eb, settings, CostKind::SquaredL2, true)?;
    let scale = 1.0 / (2.0 * n);
    let mut ga = div.grad_left.expect("gradient requested");
    let mut gb = div.grad_right.expect("gradient requested");
    ga.as_mut_slice().iter_mut().for_each(|g| *g *= scale);
    gb.as_mut_slice().iter_mut().for_each(|g| *g *= scale);
    let (pa, grad_left) = backward_full(&disc.params, &disc.spec, &ta, &ga)?;
    let pb = backward(&disc.params, &disc.spec, &tb, &gb)?;
    let mut gp = pa;
    for (x, y) in gp.values.iter_mut().zip(&pb.values) {
        *x += y;
    }
    Ok((div.value * scale, grad_left, gp))
}

/// Trains the generator on `ds` (values in `[0, 1]`), optionally warm-started.
pub fn train(ds: &MaskedDataset, cfg: &DimConfig, init: Option<&ParamVector>) -> Result<TrainedImputer> {
    cfg.validate()?;
    let (n, d) = (ds.rows(), ds.cols());
    if n == 0 || d == 0 {
        return Err(DimError::EmptyDataset);
    }
    let spec = cfg.generator_spec(d);
    let mut params = match init {
        Some(p) => ParamVector::from_values(&spec, p.values.clone())?,
        None => init_params(&spec)?,
    };
    let mut adam = AdamState::new(params.len());
    let settings = cfg.sinkhorn();
    let mut disc = if cfg.adversarial {
        let s = cfg.discriminator_spec(d);
        let p = init_params(&s)?;
        let len = p.len();
        Some(Discriminator {
            spec: s,
            params: p,
            adam: AdamState::new(len),
        })
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let batch_size = cfg.batch_size.min(n).max(1);
    let mut loss_history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for (bi, idx) in batches(&order, batch_size).into_iter().enumerate() {
            let x = ds.data.select_rows(idx);
            let m = ds.mask.select_rows(idx);
            let mut m_in = m.clone();
            if cfg.input_drop_rate > 0.0 {
                for r in 0..m_in.rows() {
                    for c in 0..d {
                        if m_in.is_observed(r, c) && rng.random_bool(cfg.input_drop_rate) {
                            m_in.set(r, c, false);
                        }
                    }
                }
            }
            let input = generator_input(&x, &m_in, &mut rng)?;
            let (recon, trace) = forward(&params, &spec, &input)?;

            let (value, mut grad_recon) = match disc.as_mut() {
                None => {
                    let loss = ms_loss_impl(&x, &m, &recon, &settings, CostKind::SquaredL2, true)?;
                    (loss.value, loss.grad)
                }
                Some(disc) => {
                    let a = apply_mask(&recon, &m)?;
                    let b = apply_mask(&x, &m)?;
                    for _ in 0..cfg.disc_steps_per_gen_step {
                        let (v, _, gp) = embedding_loss(disc, &a, &b, &settings)?;
                        check_finite(v, epoch, bi)?;
                        let mut ascent = gp;
                        ascent.values.iter_mut().for_each(|g| *g = -*g);
                        adam_step(&mut disc.params, &ascent, &mut disc.adam, cfg.lr)?;
                    }
                    let (v, mut ga, _) = embedding_loss(disc, &a, &b, &settings)?;
                    for (g, &bit) in ga.as_mut_slice().iter_mut().zip(m.as_slice()) {
                        if !bit {
                            *g = 0.0;
                        }
                    }
                    (v, ga)
                }
            };
            let value = value + add_reconstruction(cfg.reconstruction_weight, &recon, &x, &m, &mut grad_recon);
            check_finite(value, epoch, bi)?;
            let grad = backward(&params, &spec, &trace, &grad_recon)?;
            adam_step(&mut params, &grad, &mut adam, cfg.lr)?;
            total += value;
            count += 1;
        }
        loss_history.push(total / count as f64);
    }

    Ok(TrainedImputer {
        spec,
        params,
        discriminator: disc.map(|d| (d.spec, d.params)),
        loss_history,
        config: cfg.clone(),
    })
}

/// Generator output `x̄` for every row, with missing inputs filled by noise
/// drawn from `noise_seed`.
pub fn reconstruct_with_seed(
    spec: &MlpSpec,
    params: &ParamVector,
    ds: &MaskedDataset,
    noise_seed: u64,
) -> Result<DenseMatrix> {
    if 2 * ds.cols() != spec.input_dim() {
        return Err(DimError::ShapeMismatch(format!(
            "dataset has {} columns, generator expects {}",
            ds.cols(),
            spec.input_dim() / 2
        )));
    }
    let input = generator_input(&ds.data, &ds.mask, &mut impute_rng(noise_seed))?;
    Ok(predict(params, spec, &input)?)
}

pub fn reconstruct(model: &TrainedImputer, ds: &MaskedDataset) -> Result<DenseMatrix> {
    reconstruct_with_seed(&model.spec, &model.params, ds, model.config.seed)
}

/// Observed cells kept as given, missing cells taken from the reconstruction.
pub fn impute(model: &TrainedImputer, ds: &MaskedDataset) -> Result<DenseMatrix> {
    let recon = reconstruct(model, ds)?;
    Ok(fuse_imputation(ds, &recon)?)
}

/// Regressor for one incomplete column from the remaining (mean-filled) columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImputer {
    pub column: usize,
    pub inputs: Vec<usize>,
    pub fill: Vec<f64>,
    pub model: TrainedImputer,
}

fn featurewise_inputs(ds: &MaskedDataset, inputs: &[usize], fill: &[f64], rows: &[usize]) -> DenseMatrix {
    let width = inputs.len().max(1);
    let mut out = DenseMatrix::zeros(rows.len(), width);
    if inputs.is_empty() {
        out.as_mut_slice().fill(1.0);
        return out;
    }
    for (r, &i) in rows.iter().enumerate() {
        let or = out.row_mut(r);
        for (k, &c) in inputs.iter().enumerate() {
            or[k] = if ds.mask.is_observed(i, c) { ds.data.get(i, c) } else { fill[c] };
        }
    }
    out
}

/// One regressor per incomplete column, trained on the 1-D masked divergence
/// with the absolute-difference cost over rows where that column is observed.
pub fn train_featurewise(ds: &MaskedDataset, cfg: &DimConfig) -> Result<Vec<FeatureImputer>> {
    cfg.validate()?;
    if ds.rows() == 0 || ds.cols() == 0 {
        return Err(DimError::EmptyDataset);
    }
    let fill = ds.observed_column_means();
    let settings = cfg.sinkhorn();
    let mut out = Vec::new();
    for j in ds.incomplete_columns() {
        let rows: Vec<usize> = (0..ds.rows()).filter(|&i| ds.mask.is_observed(i, j)).collect();
        if rows.len() < 2 {
            continue;
        }
        let inputs: Vec<usize> = (0..ds.cols()).filter(|&c| c != j).collect();
        let x_all = featurewise_inputs(ds, &inputs, &fill, &rows);
        let y_all = DenseMatrix::from_vec(rows.len(), 1, rows.iter().map(|&i| ds.data.get(i, j)).collect())?;
        let seed = cfg.seed.wrapping_add(j as u64);
        let width = x_all.cols();
        let spec = MlpSpec::new(
            vec![width, cfg.hidden_width.unwrap_or(width.max(2)), 1],
            Activation::Relu,
            OutputActivation::Sigmoid,
            seed,
        );
        let mut params = init_params(&spec)?;
        let mut adam = AdamState::new(params.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..rows.len()).collect();
        let batch_size = cfg.batch_size.min(rows.len());
        let mut history = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            let mut count = 0;
            for (bi, idx) in batches(&order, batch_size).into_iter().enumerate() {
                let xb = x_all.select_rows(idx);
                let yb = y_all.select_rows(idx);
                let mb = MaskMatrix::full(idx.len(), 1);
                let (pred, trace) = forward(&params, &spec, &xb)?;
                let mut loss = ms_loss_impl(&yb, &mb, &pred, &settings, CostKind::Abs1d, true)?;
                let value = loss.value + add_reconstruction(cfg.reconstruction_weight, &pred, &yb, &mb, &mut loss.grad);
                check_finite(value, epoch, bi)?;
                let grad = backward(&params, &spec, &trace, &loss.grad)?;
                adam_step(&mut params, &grad, &mut adam, cfg.lr)?;
                total += value;
                count += 1;
            }
            history.push(total / count as f64);
        }
        out.push(FeatureImputer {
            column: j,
            inputs,
            fill: fill.clone(),
            model: TrainedImputer {
                spec,
                params,
                discriminator: None,
                loss_history: history,
                config: DimConfig { seed, ..cfg.clone() },
            },
        });
    }
    Ok(out)
}

/// Fills each modelled column from its regressor; observed cells are kept.
pub fn impute_featurewise(models: &[FeatureImputer], ds: &MaskedDataset) -> Result<DenseMatrix> {
    let mut recon = ds.data.clone();
    let rows: Vec<usize> = (0..ds.rows()).collect();
    for f in models {
        if f.column >= ds.cols() || f.fill.len() != ds.cols() {
            return Err(DimError::ShapeMismatch(format!(
                "regressor for column {} does not fit a {}-column dataset",
                f.column,
                ds.cols()
            )));
        }
        let x = featurewise_inputs(ds, &f.inputs, &f.fill, &rows);
        let pred = predict(&f.model.params, &f.model.spec, &x)?;
        for r in 0..ds.rows() {
            recon.set(r, f.column, pred.get(r, 0));
        }
    }
    Ok(fuse_imputation(ds, &recon)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{apply_mcar, make_holdout, mean_impute, rmse};

    fn correlated(n: usize, seed: u64) -> MaskedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let t: f64 = rng.random_range(0.1..0.9);
            v.push(t);
            v.push((0.9 * t + 0.05 + rng.random_range(-0.03..0.03)).clamp(0.0, 1.0));
        }
        MaskedDataset::fully_observed(DenseMatrix::from_vec(n, 2, v).unwrap(), "corr")
    }

    fn quick(epochs: usize) -> DimConfig {
        DimConfig {
            epochs,
            batch_size: 32,
            lr: 0.01,
            ..DimConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(DimConfig::default().validate().is_ok());
        assert!(DimConfig { batch_size: 1, ..DimConfig::default() }.validate().is_err());
        assert!(DimConfig { epochs: 0, ..DimConfig::default() }.validate().is_err());
    }

    #[test]
    fn generator_input_layout() {
        let x = DenseMatrix::from_rows(&[vec![0.4, 0.0]]).unwrap();
        let m = MaskMatrix::from_rows(&[vec![1, 0]]).unwrap();
        let inp = generator_input(&x, &m, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let r = inp.row(0);
        assert_eq!(r[0], 0.4);
        assert!((0.0..NOISE_SCALE).contains(&r[1]));
        assert_eq!(&r[2..], &[1.0, 0.0]);
    }

    #[test]
    fn batches_absorb_singleton() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.iter().map(|c| c.len()).collect::<Vec<_>>(), vec![4, 5]);
        assert_eq!(batches(&order, 3).len(), 3);
    }

    #[test]
    fn empty_dataset_rejected() {
        let ds = MaskedDataset::fully_observed(DenseMatrix::zeros(0, 2), "e");
        assert!(matches!(train(&ds, &quick(1), None), Err(DimError::EmptyDataset)));
    }

    #[test]
    fn complete_data_loss_decreases() {
        let ds = correlated(128, 1);
        let m = train(&ds, &DimConfig { lambda: 0.05, ..quick(5) }, None).unwrap();
        assert_eq!(m.loss_history.len(), 5);
        assert!(m.loss_history[4] <= m.loss_history[0], "{:?}", m.loss_history);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = apply_mcar(&correlated(64, 2), 0.3, 3).unwrap();
        let a = train(&ds, &quick(3), None).unwrap();
        let b = train(&ds, &quick(3), None).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn impute_keeps_observed_and_stays_in_range() {
        let ds = apply_mcar(&correlated(64, 4), 0.3, 5).unwrap();
        let m = train(&ds, &quick(2), None).unwrap();
        let out = impute(&m, &ds).unwrap();
        assert_eq!(out, impute(&m, &ds).unwrap());
        for r in 0..ds.rows() {
            for c in 0..ds.cols() {
                if ds.mask.is_observed(r, c) {
                    assert_eq!(out.get(r, c), ds.data.get(r, c));
                } else {
                    assert!((0.0..=1.0).contains(&out.get(r, c)));
                }
            }
        }
        let full = correlated(16, 6);
        assert_eq!(impute(&m, &full).unwrap(), full.data);
    }

    #[test]
    fn adversarial_mode_runs() {
        let ds = apply_mcar(&correlated(64, 7), 0.3, 8).unwrap();
        let cfg = DimConfig {
            adversarial: true,
            disc_steps_per_gen_step: 2,
            ..quick(3)
        };
        let m = train(&ds, &cfg, None).unwrap();
        assert!(m.discriminator.is_some());
        assert_eq!(m.loss_history.len(), 3);
        assert!(m.loss_history.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn warm_start_uses_given_params() {
        let ds = correlated(32, 9);
        let cfg = DimConfig { epochs: 1, lr: 1e-12, ..quick(1) };
        let base = train(&ds, &quick(1), None).unwrap();
        let warm = train(&ds, &cfg, Some(&base.params)).unwrap();
        let drift = base
            .params
            .values
            .iter()
            .zip(&warm.params.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(drift < 1e-9);
    }

    #[test]
    fn featurewise_complete_dataset_is_empty() {
        let ds = correlated(32, 10);
        assert!(train_featurewise(&ds, &quick(1)).unwrap().is_empty());
    }

    #[test]
    fn featurewise_learns_linear_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 400;
        let mut v = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let t: f64 = rng.random_range(0.1..0.9);
            v.push(t);
            v.push(0.8 * t + 0.1);
        }
        let full = DenseMatrix::from_vec(n, 2, v).unwrap();
        let mut mask = MaskMatrix::full(n, 2);
        let mut hidden = Vec::new();
        for r in 0..n {
            if r % 4 == 0 {
                mask.set(r, 1, false);
                hidden.push((r, full.get(r, 1)));
            }
        }
        let train_ds = MaskedDataset::new(full, mask, "lin").unwrap();
        let cfg = DimConfig {
            epochs: 150,
            batch_size: 64,
            lr: 0.01,
            hidden_width: Some(8),
            ..DimConfig::default()
        };
        let models = train_featurewise(&train_ds, &cfg).unwrap();
        assert_eq!(models.len(), 1);
        assert_eq!(models[0].column, 1);
        let out = impute_featurewise(&models, &train_ds).unwrap();
        let err = (hidden.iter().map(|&(r, v)| (out.get(r, 1) - v).powi(2)).sum::<f64>() / hidden.len() as f64).sqrt();
        assert!(err < 0.05, "column rmse {err}");
        assert_eq!(models, train_featurewise(&train_ds, &cfg).unwrap());
    }

    #[test]
    fn beats_mean_imputation_on_correlated_pair() {
        let ds = apply_mcar(&correlated(600, 13), 0.3, 14).unwrap();
        let split = make_holdout(&ds, 0.2, 15).unwrap();
        let cfg = DimConfig {
            epochs: 60,
            batch_size: 64,
            lr: 0.01,
            hidden_width: Some(8),
            ..DimConfig::default()
        };
        let m = train(&split.train, &cfg, None).unwrap();
        let ours = rmse(&split, &impute(&m, &split.train).unwrap()).unwrap();
        let mean = rmse(&split, &mean_impute(&split.train)).unwrap();
        assert!(ours < mean, "model {ours} vs mean {mean}");
    }
}
