//! Dense matrices, masks and the masked-dataset container.
//!
//! Missing cells are carried by a [`MaskMatrix`]; the companion
//! [`DenseMatrix`] stores the placeholder `0.0` in those cells so every
//! numeric kernel can run without NaN checks.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("column {0} has no observed values")]
    EmptyColumn(usize),
    #[error("feature ranges are missing; dataset was never normalized")]
    MissingRanges,
    #[error("dataset has no observed cells")]
    NoObservedCells,
    #[error("holdout set is empty")]
    EmptyHoldout,
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, MatrixError>;

/// Row-major matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(MatrixError::ShapeMismatch {
                expected: (rows, cols),
                got: (values.len(), 1),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(MatrixError::ShapeMismatch {
                    expected: (rows.len(), cols),
                    got: (rows.len(), r.len()),
                });
            }
            values.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, values)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.values[r * c..(r + 1) * c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Rows gathered in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            values,
        }
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hconcat(&self, other: &DenseMatrix) -> Result<Self> {
        if self.rows != other.rows {
            return Err(MatrixError::ShapeMismatch {
                expected: (self.rows, other.cols),
                got: other.shape(),
            });
        }
        let cols = self.cols + other.cols;
        let mut values = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            values.extend_from_slice(self.row(r));
            values.extend_from_slice(other.row(r));
        }
        Ok(Self {
            rows: self.rows,
            cols,
            values,
        })
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Binary observation mask; `true` means observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl MaskMatrix {
    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn from_bits(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(MatrixError::ShapeMismatch {
                expected: (rows, cols),
                got: (bits.len(), 1),
            });
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut bits = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(MatrixError::ShapeMismatch {
                    expected: (rows.len(), cols),
                    got: (rows.len(), r.len()),
                });
            }
            bits.extend(r.iter().map(|&b| b != 0));
        }
        Self::from_bits(rows.len(), cols, bits)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn is_observed(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    /// Mask entry as a float multiplier (1.0 or 0.0).
    #[inline]
    pub fn weight(&self, r: usize, c: usize) -> f64 {
        if self.bits[r * self.cols + c] {
            1.0
        } else {
            0.0
        }
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, observed: bool) {
        self.bits[r * self.cols + c] = observed;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[bool] {
        &self.bits[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn observed_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut bits = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            bits.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            bits,
        }
    }

    /// The mask as a 0/1 dense matrix.
    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Per-column `(min, max)` taken from observed cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    #[inline]
    fn span(&self) -> f64 {
        self.max - self.min
    }
}

/// An incomplete data matrix with its observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedDataset {
    pub data: DenseMatrix,
    pub mask: MaskMatrix,
    /// Present once the dataset has been normalized.
    pub feature_ranges: Option<Vec<FeatureRange>>,
    pub name: String,
}

impl MaskedDataset {
    /// Builds a dataset and zeroes every masked-out cell.
    pub fn new(mut data: DenseMatrix, mask: MaskMatrix, name: impl Into<String>) -> Result<Self> {
        if data.shape() != mask.shape() {
            return Err(MatrixError::ShapeMismatch {
                expected: data.shape(),
                got: mask.shape(),
            });
        }
        for (v, &b) in data.values.iter_mut().zip(&mask.bits) {
            if !b {
                *v = 0.0;
            }
        }
        Ok(Self {
            data,
            mask,
            feature_ranges: None,
            name: name.into(),
        })
    }

    pub fn fully_observed(data: DenseMatrix, name: impl Into<String>) -> Self {
        let mask = MaskMatrix::full(data.rows(), data.cols());
        Self {
            data,
            mask,
            feature_ranges: None,
            name: name.into(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.data.cols()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            data: self.data.select_rows(idx),
            mask: self.mask.select_rows(idx),
            feature_ranges: self.feature_ranges.clone(),
            name: self.name.clone(),
        }
    }

    /// Indices of columns with at least one missing cell.
    pub fn incomplete_columns(&self) -> Vec<usize> {
        (0..self.cols())
            .filter(|&c| (0..self.rows()).any(|r| !self.mask.is_observed(r, c)))
            .collect()
    }

    /// Mean of the observed cells of each column (0.0 for empty columns).
    pub fn observed_column_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols()];
        let mut counts = vec![0usize; self.cols()];
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                if self.mask.is_observed(r, c) {
                    sums[c] += self.data.get(r, c);
                    counts[c] += 1;
                }
            }
        }
        sums.iter()
            .zip(&counts)
            .map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
            .collect()
    }
}

/// Rescales each column's observed values onto `[0, 1]`.
pub fn normalize(ds: &MaskedDataset) -> Result<MaskedDataset> {
    let (rows, cols) = ds.data.shape();
    let mut ranges = Vec::with_capacity(cols);
    for c in 0..cols {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..rows {
            if ds.mask.is_observed(r, c) {
                let v = ds.data.get(r, c);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if lo > hi {
            return Err(MatrixError::EmptyColumn(c));
        }
        ranges.push(FeatureRange { min: lo, max: hi });
    }
    let mut out = ds.clone();
    for r in 0..rows {
        for (c, range) in ranges.iter().enumerate() {
            let v = if ds.mask.is_observed(r, c) {
                let span = range.span();
                if span > 0.0 {
                    (ds.data.get(r, c) - range.min) / span
                } else {
                    0.0
                }
            } else {
                0.0
            };
            out.data.set(r, c, v);
        }
    }
    out.feature_ranges = Some(ranges);
    Ok(out)
}

/// Inverse of [`normalize`], applied to every cell (masked cells included).
pub fn denormalize(ds: &MaskedDataset) -> Result<MaskedDataset> {
    let ranges = ds.feature_ranges.as_ref().ok_or(MatrixError::MissingRanges)?;
    let mut out = ds.clone();
    out.data = denormalize_matrix(&ds.data, ranges)?;
    out.feature_ranges = None;
    Ok(out)
}

pub fn denormalize_matrix(m: &DenseMatrix, ranges: &[FeatureRange]) -> Result<DenseMatrix> {
    if ranges.len() != m.cols() {
        return Err(MatrixError::ShapeMismatch {
            expected: (m.rows(), ranges.len()),
            got: m.shape(),
        });
    }
    let mut out = m.clone();
    for r in 0..m.rows() {
        for (c, range) in ranges.iter().enumerate() {
            out.set(r, c, range.min + m.get(r, c) * range.span());
        }
    }
    Ok(out)
}

/// Flips each observed cell to missing with probability `rate`.
pub fn apply_mcar(ds: &MaskedDataset, rate: f64, seed: u64) -> Result<MaskedDataset> {
    if !(0.0..1.0).contains(&rate) {
        return Err(MatrixError::InvalidArgument(format!(
            "missing rate {rate} outside [0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ds.clone();
    for i in 0..out.mask.bits.len() {
        // one draw per cell keeps the stream aligned regardless of prior missingness
        let u: f64 = rng.random();
        if out.mask.bits[i] && u < rate {
            out.mask.bits[i] = false;
            out.data.values[i] = 0.0;
        }
    }
    Ok(out)
}

/// A training dataset with some observed cells hidden for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutSplit {
    pub train: MaskedDataset,
    /// `(row, col, true_value)` for every hidden cell.
    pub hidden_cells: Vec<(usize, usize, f64)>,
}

/// Hides exactly `floor(fraction * observed)` observed cells.
pub fn make_holdout(ds: &MaskedDataset, fraction: f64, seed: u64) -> Result<HoldoutSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(MatrixError::InvalidArgument(format!(
            "holdout fraction {fraction} outside (0, 1)"
        )));
    }
    let observed: Vec<usize> = ds
        .mask
        .bits
        .iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i))
        .collect();
    if observed.is_empty() {
        return Err(MatrixError::NoObservedCells);
    }
    let count = (fraction * observed.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, observed.len(), count)
        .into_iter()
        .map(|k| observed[k])
        .collect();
    picked.sort_unstable();

    let cols = ds.cols();
    let mut train = ds.clone();
    let mut hidden_cells = Vec::with_capacity(count);
    for flat in picked {
        let (r, c) = (flat / cols, flat % cols);
        hidden_cells.push((r, c, ds.data.get(r, c)));
        train.mask.set(r, c, false);
        train.data.set(r, c, 0.0);
    }
    Ok(HoldoutSplit {
        train,
        hidden_cells,
    })
}

/// Root mean squared error over the hidden cells.
pub fn rmse(hidden: &HoldoutSplit, imputed: &DenseMatrix) -> Result<f64> {
    if imputed.shape() != hidden.train.data.shape() {
        return Err(MatrixError::ShapeMismatch {
            expected: hidden.train.data.shape(),
            got: imputed.shape(),
        });
    }
    if hidden.hidden_cells.is_empty() {
        return Err(MatrixError::EmptyHoldout);
    }
    let sse: f64 = hidden
        .hidden_cells
        .iter()
        .map(|&(r, c, truth)| {
            let e = truth - imputed.get(r, c);
            e * e
        })
        .sum();
    Ok((sse / hidden.hidden_cells.len() as f64).sqrt())
}

/// `M ⊙ X + (1 − M) ⊙ X̄`: observed cells from the data, the rest from the reconstruction.
pub fn fuse_imputation(ds: &MaskedDataset, reconstructed: &DenseMatrix) -> Result<DenseMatrix> {
    if reconstructed.shape() != ds.data.shape() {
        return Err(MatrixError::ShapeMismatch {
            expected: ds.data.shape(),
            got: reconstructed.shape(),
        });
    }
    let values = ds
        .data
        .values
        .iter()
        .zip(&reconstructed.values)
        .zip(&ds.mask.bits)
        .map(|((&x, &xr), &m)| if m { x } else { xr })
        .collect();
    Ok(DenseMatrix {
        rows: ds.rows(),
        cols: ds.cols(),
        values,
    })
}

/// Mean-imputation of a dataset, column means over observed cells.
pub fn mean_impute(ds: &MaskedDataset) -> DenseMatrix {
    let means = ds.observed_column_means();
    let mut fill = DenseMatrix::zeros(ds.rows(), ds.cols());
    for r in 0..ds.rows() {
        fill.row_mut(r).copy_from_slice(&means);
    }
    fuse_imputation(ds, &fill).expect("shapes agree by construction")
}
