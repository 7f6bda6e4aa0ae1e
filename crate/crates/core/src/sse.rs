//! Sample-size estimation: Gauss-Newton Hessian, perturbation variance,
//! parameter sampling, model distance and the binary search for `n⋆`.

use crate::dim::{generator_input, reconstruct, DimError, TrainedImputer};
use crate::matrix::{DenseMatrix, MaskMatrix, MaskedDataset, MatrixError};
use crate::neural::{per_sample_jacobian, predict, MlpSpec, NeuralError, ParamVector};
use crate::sinkhorn::{masked_cost, sinkhorn_solve, CostKind, OtError, SinkhornSettings, TransportResult};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const VALIDATION_STREAM: u64 = 0x5a11_d47e;

#[derive(Debug, Error)]
pub enum SseError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("infeasible configuration: hoeffding threshold {threshold:.6} exceeds 1")]
    ConfigInfeasible { threshold: f64 },
    #[error("invalid sizes: n = {n} is below n0 = {n0}")]
    InvalidSizes { n0: usize, n: usize },
    #[error("hessian is not positive definite after adding ridge {ridge:e}")]
    SingularAfterRidge { ridge: f64 },
    #[error("transport plan for the hessian did not converge")]
    NotConverged,
    #[error("validation set has no observed cells")]
    NoObservedCells,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Dim(#[from] DimError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

pub type Result<T> = std::result::Result<T, SseError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoeffdingVariant {
    /// Radicand `ln(1/β) / 2k`.
    Strict,
    /// Radicand `−ln(1−β) / 2k`.
    #[default]
    PaperAppendix,
}

impl std::str::FromStr for HoeffdingVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "strict" => Ok(Self::Strict),
            "paper_appendix" | "paper-appendix" => Ok(Self::PaperAppendix),
            other => Err(format!("unknown hoeffding variant `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SseConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub lambda: f64,
    pub n0: usize,
    pub nv: usize,
    pub variant: HoeffdingVariant,
    /// `None` selects `1e-6 · trace(H) / p`.
    pub ridge: Option<f64>,
}

impl Default for SseConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.001,
            alpha: 0.05,
            beta: 0.01,
            k: 20,
            lambda: 130.0,
            n0: 500,
            nv: 500,
            variant: HoeffdingVariant::PaperAppendix,
            ridge: None,
        }
    }
}

impl SseConfig {
    /// Checks ranges and feasibility; returns the Hoeffding threshold.
    pub fn validate(&self) -> Result<f64> {
        if !(self.epsilon > 0.0) {
            return Err(SseError::InvalidConfig(format!("epsilon {}", self.epsilon)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(SseError::InvalidConfig(format!("lambda {}", self.lambda)));
        }
        if self.n0 == 0 || self.nv == 0 {
            return Err(SseError::InvalidConfig("n0 and nv must be positive".into()));
        }
        if let Some(r) = self.ridge {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(SseError::InvalidConfig(format!("ridge {r}")));
            }
        }
        let t = hoeffding_threshold(self.alpha, self.beta, self.k, self.variant)?;
        if t > 1.0 {
            return Err(SseError::ConfigInfeasible { threshold: t });
        }
        Ok(t)
    }

    pub fn sinkhorn(&self) -> SinkhornSettings {
        SinkhornSettings::with_lambda(self.lambda)
    }
}

/// Minimum success fraction over `k` sampled pairs.
pub fn hoeffding_threshold(alpha: f64, beta: f64, k: usize, variant: HoeffdingVariant) -> Result<f64> {
    if !(beta > 0.0 && beta <= alpha && alpha <= 1.0) {
        return Err(SseError::InvalidConfig(format!(
            "need 0 < beta <= alpha <= 1, got alpha {alpha}, beta {beta}"
        )));
    }
    if k == 0 {
        return Err(SseError::InvalidConfig("k must be at least 1".into()));
    }
    let radicand = match variant {
        HoeffdingVariant::Strict => (1.0 / beta).ln(),
        HoeffdingVariant::PaperAppendix => -(1.0 - beta).ln(),
    };
    let base = if beta == 1.0 { 1.0 } else { (1.0 - alpha) / (1.0 - beta) };
    Ok(base + (radicand / (2.0 * k as f64)).sqrt())
}

/// `e^{6/λ} (1 + λ^{−⌊d/2⌋})² (1/n₀ − 1/n)`.
pub fn eta(lambda: f64, d: usize, n0: usize, n: usize) -> Result<f64> {
    if n0 == 0 {
        return Err(SseError::InvalidSizes { n0, n });
    }
    if n < n0 {
        return Err(SseError::InvalidSizes { n0, n });
    }
    if !(lambda > 0.0) {
        return Err(SseError::InvalidConfig(format!("lambda {lambda}")));
    }
    let middle = 1.0 + lambda.powi(-((d / 2) as i32));
    Ok((6.0 / lambda).exp() * middle * middle * (1.0 / n0 as f64 - 1.0 / n as f64))
}

#[derive(Debug, Clone)]
pub struct HessianApprox {
    /// Symmetric Gauss-Newton sum, before the ridge.
    pub matrix: DMatrix<f64>,
    pub ridge_used: f64,
    pub source_size: usize,
    /// Lower Cholesky factor of `matrix + ridge_used · I`.
    pub factor: DMatrix<f64>,
}

impl HessianApprox {
    /// Adds the ridge and factors; `None` picks `1e-6 · trace / p`.
    pub fn from_matrix(matrix: DMatrix<f64>, ridge: Option<f64>, source_size: usize) -> Result<Self> {
        let p = matrix.nrows();
        if matrix.ncols() != p {
            return Err(SseError::ShapeMismatch(format!("{}x{} hessian", p, matrix.ncols())));
        }
        let ridge_used = match ridge {
            Some(r) => r,
            None => {
                let tr = matrix.trace();
                if tr > 0.0 && p > 0 {
                    1e-6 * tr / p as f64
                } else {
                    1e-6
                }
            }
        };
        let mut reg = matrix.clone();
        for i in 0..p {
            reg[(i, i)] += ridge_used;
        }
        let chol = nalgebra::Cholesky::new(reg).ok_or(SseError::SingularAfterRidge { ridge: ridge_used })?;
        Ok(Self {
            matrix,
            ridge_used,
            source_size,
            factor: chol.l(),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `L⁻ᵀ z`, a draw from `N(0, (H + ridge·I)⁻¹)` when `z` is standard normal.
    pub fn whiten(&self, z: &[f64]) -> Vec<f64> {
        let z = DVector::from_column_slice(z);
        self.factor
            .tr_solve_lower_triangular(&z)
            .expect("cholesky factor has a positive diagonal")
            .as_slice()
            .to_vec()
    }
}

/// `Σ_i Σ_j P_ij [T(m_i) J_i]ᵀ T(m_i) J_i`, where `J_i` is the output
/// Jacobian of the network at input row `i`.
pub fn gauss_newton_hessian(
    spec: &MlpSpec,
    params: &ParamVector,
    inputs: &DenseMatrix,
    mask: &MaskMatrix,
    plan: &TransportResult,
) -> Result<DMatrix<f64>> {
    let n = inputs.rows();
    if mask.rows() != n || mask.cols() != spec.output_dim() || plan.n_left != n {
        return Err(SseError::ShapeMismatch(format!(
            "{} input rows, mask {:?}, plan {}x{}",
            n,
            mask.shape(),
            plan.n_left,
            plan.n_right
        )));
    }
    let p = spec.param_count();
    let weights = plan.row_sums();
    let mut h = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let jac = per_sample_jacobian(params, spec, inputs.row(i))?;
        for k in 0..jac.rows() {
            if !mask.is_observed(i, k) {
                continue;
            }
            let row = jac.row(k);
            for a in 0..p {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                for b in a..p {
                    h[(a, b)] += w * ra * row[b];
                }
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            h[(a, b)] = h[(b, a)];
        }
    }
    Ok(h)
}

/// Hessian of the divergence loss at the model's parameters over `ds0`.
pub fn compute_hessian(
    model: &TrainedImputer,
    ds0: &MaskedDataset,
    settings: &SinkhornSettings,
    ridge: Option<f64>,
) -> Result<HessianApprox> {
    let recon = reconstruct(model, ds0)?;
    let cost = masked_cost(&recon, &ds0.mask, &ds0.data, &ds0.mask, CostKind::SquaredL2)?;
    let plan = match sinkhorn_solve(&cost, settings) {
        Ok(p) => p,
        Err(OtError::DidNotConverge(_)) => return Err(SseError::NotConverged),
        Err(e) => return Err(e.into()),
    };
    let inputs = generator_input(
        &ds0.data,
        &ds0.mask,
        &mut crate::dim::impute_rng(model.config.seed),
    )?;
    let h = gauss_newton_hessian(&model.spec, &model.params, &inputs, &ds0.mask, &plan)?;
    HessianApprox::from_matrix(h, ridge, ds0.rows())
}

fn standard_normal(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// `count` draws from `N(θ₀, η (H + ridge·I)⁻¹)`.
pub fn sample_params(
    theta0: &ParamVector,
    h: &HessianApprox,
    eta_value: f64,
    seed: u64,
    count: usize,
) -> Result<Vec<ParamVector>> {
    if theta0.len() != h.dim() {
        return Err(SseError::ShapeMismatch(format!(
            "{} parameters vs {}x{} hessian",
            theta0.len(),
            h.dim(),
            h.dim()
        )));
    }
    if !(eta_value >= 0.0) {
        return Err(SseError::InvalidConfig(format!("eta {eta_value}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = eta_value.sqrt();
    Ok((0..count)
        .map(|_| {
            let mut out = theta0.clone();
            if s > 0.0 {
                let w = h.whiten(&standard_normal(&mut rng, theta0.len()));
                for (v, wi) in out.values.iter_mut().zip(w) {
                    *v += s * wi;
                }
            }
            out
        })
        .collect())
}

/// A validation set with its generator input fixed once, so the distance
/// is a deterministic function of the two parameter vectors.
#[derive(Debug, Clone)]
pub struct PreparedValidation {
    pub input: DenseMatrix,
    pub mask: MaskMatrix,
    observed: usize,
}

impl PreparedValidation {
    pub fn new(ds: &MaskedDataset, noise_seed: u64) -> Result<Self> {
        let observed = ds.mask.observed_count();
        if ds.rows() == 0 || observed == 0 {
            return Err(SseError::NoObservedCells);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        rng.set_stream(VALIDATION_STREAM);
        let input = generator_input(&ds.data, &ds.mask, &mut rng)?;
        Ok(Self {
            input,
            mask: ds.mask.clone(),
            observed,
        })
    }

    fn distance_outputs(&self, a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        let mut s = 0.0;
        for ((x, y), &m) in a.as_slice().iter().zip(b.as_slice()).zip(self.mask.as_slice()) {
            if m {
                s += (x - y) * (x - y);
            }
        }
        (s / self.observed as f64).sqrt()
    }
}

/// Root mean square of `m ⊙ (x̄_a − x̄_b)` over the observed validation cells.
pub fn model_distance(
    theta_a: &ParamVector,
    theta_b: &ParamVector,
    spec: &MlpSpec,
    validation: &PreparedValidation,
) -> Result<f64> {
    let a = predict(theta_a, spec, &validation.input)?;
    let b = predict(theta_b, spec, &validation.input)?;
    if a.cols() != validation.mask.cols() {
        return Err(SseError::ShapeMismatch(format!(
            "model emits {} columns, validation has {}",
            a.cols(),
            validation.mask.cols()
        )));
    }
    Ok(validation.distance_outputs(&a, &b))
}

/// Monte-Carlo estimate of `P(D(θ_n, θ_N) ≤ ε)` with the Gaussian draws
/// fixed up front, so estimates for different `n` share the same randomness.
pub struct ProbabilityEstimator<'a> {
    theta0: &'a ParamVector,
    spec: &'a MlpSpec,
    validation: &'a PreparedValidation,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    lambda: f64,
    n0: usize,
    n_total: usize,
    epsilon: f64,
}

impl<'a> ProbabilityEstimator<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        theta0: &'a ParamVector,
        h: &HessianApprox,
        spec: &'a MlpSpec,
        validation: &'a PreparedValidation,
        n_total: usize,
        cfg: &SseConfig,
        seed: u64,
    ) -> Result<Self> {
        if theta0.len() != h.dim() {
            return Err(SseError::ShapeMismatch(format!(
                "{} parameters vs {}x{} hessian",
                theta0.len(),
                h.dim(),
                h.dim()
            )));
        }
        if n_total < cfg.n0 {
            return Err(SseError::InvalidSizes { n0: cfg.n0, n: n_total });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = theta0.len();
        let mut first = Vec::with_capacity(cfg.k);
        let mut second = Vec::with_capacity(cfg.k);
        for _ in 0..cfg.k {
            first.push(h.whiten(&standard_normal(&mut rng, p)));
            second.push(h.whiten(&standard_normal(&mut rng, p)));
        }
        Ok(Self {
            theta0,
            spec,
            validation,
            first,
            second,
            lambda: cfg.lambda,
            n0: cfg.n0,
            n_total,
            epsilon: cfg.epsilon,
        })
    }

    /// Distances `D(θ_{n,i}, θ_{N,i})` for every sampled pair.
    pub fn distances(&self, n: usize) -> Result<Vec<f64>> {
        if n > self.n_total {
            return Err(SseError::InvalidSizes { n0: n, n: self.n_total });
        }
        let d = self.spec.output_dim();
        let s1 = eta(self.lambda, d, self.n0, n)?.sqrt();
        let s2 = eta(self.lambda, d, n, self.n_total)?.sqrt();
        let mut out = Vec::with_capacity(self.first.len());
        for (w1, w2) in self.first.iter().zip(&self.second) {
            let mut theta_n = self.theta0.clone();
            for (v, w) in theta_n.values.iter_mut().zip(w1) {
                *v += s1 * w;
            }
            if s2 == 0.0 {
                out.push(0.0);
                continue;
            }
            let mut theta_big = theta_n.clone();
            for (v, w) in theta_big.values.iter_mut().zip(w2) {
                *v += s2 * w;
            }
            out.push(model_distance(&theta_n, &theta_big, self.spec, self.validation)?);
        }
        Ok(out)
    }

    pub fn probability(&self, n: usize) -> Result<f64> {
        let d = self.distances(n)?;
        if d.is_empty() {
            return Ok(1.0);
        }
        Ok(d.iter().filter(|&&x| x <= self.epsilon).count() as f64 / d.len() as f64)
    }
}

/// Fraction of `k` sampled pairs `(θ_n, θ_N)` within distance `ε`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_probability(
    theta0: &ParamVector,
    h: &HessianApprox,
    spec: &MlpSpec,
    validation: &PreparedValidation,
    n: usize,
    n_total: usize,
    cfg: &SseConfig,
    seed: u64,
) -> Result<f64> {
    if n < cfg.n0 {
        return Err(SseError::InvalidSizes { n0: cfg.n0, n });
    }
    ProbabilityEstimator::new(theta0, h, spec, validation, n_total, cfg, seed)?.probability(n)
}

/// Smallest `n` in `[lo, hi]` with `pred(n)`, assuming `pred` is monotone.
/// Returns `hi` when nothing in the range satisfies it, plus every probe.
pub fn min_satisfying<T, E, F>(lo: usize, hi: usize, mut pred: F) -> std::result::Result<(usize, Vec<(usize, T)>), E>
where
    F: FnMut(usize) -> std::result::Result<(bool, T), E>,
{
    let mut probes = Vec::new();
    let (ok, v) = pred(lo)?;
    probes.push((lo, v));
    if ok || hi <= lo {
        return Ok((lo, probes));
    }
    let (ok, v) = pred(hi)?;
    probes.push((hi, v));
    if !ok {
        return Ok((hi, probes));
    }
    // pred(lo) false, pred(hi) true
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let (ok, v) = pred(mid)?;
        probes.push((mid, v));
        if ok {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((hi, probes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub n: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeEstimate {
    pub n_star: usize,
    pub threshold: f64,
    pub probe_curve: Vec<Probe>,
    pub seed: u64,
    pub variant: HoeffdingVariant,
}

/// Binary search for the smallest `n ∈ [n₀, N]` whose empirical probability
/// reaches the Hoeffding threshold.
pub fn estimate_min_size(
    model0: &TrainedImputer,
    ds0: &MaskedDataset,
    validation: &MaskedDataset,
    n_total: usize,
    cfg: &SseConfig,
    seed: u64,
) -> Result<SizeEstimate> {
    let threshold = cfg.validate()?;
    if n_total < cfg.n0 {
        return Err(SseError::InvalidSizes { n0: cfg.n0, n: n_total });
    }
    let h = compute_hessian(model0, ds0, &cfg.sinkhorn(), cfg.ridge)?;
    let prepared = PreparedValidation::new(validation, seed)?;
    let est = ProbabilityEstimator::new(&model0.params, &h, &model0.spec, &prepared, n_total, cfg, seed)?;
    let (n_star, probes) = min_satisfying(cfg.n0, n_total, |n| {
        let p = est.probability(n)?;
        Ok::<_, SseError>((p >= threshold, p))
    })?;
    Ok(SizeEstimate {
        n_star,
        threshold,
        probe_curve: probes.into_iter().map(|(n, p)| Probe { n, p }).collect(),
        seed,
        variant: cfg.variant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{init_params, Activation, OutputActivation};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn hoeffding_values() {
        let t = hoeffding_threshold(0.05, 0.01, 20, HoeffdingVariant::PaperAppendix).unwrap();
        assert!(close(t, 0.975447, 1e-6), "{t}");
        let t = hoeffding_threshold(0.05, 0.01, 2000, HoeffdingVariant::Strict).unwrap();
        assert!(close(t, 0.993526, 1e-6), "{t}");
        let t = hoeffding_threshold(0.05, 0.01, 20, HoeffdingVariant::Strict).unwrap();
        assert!(close(t, 1.299, 1e-3), "{t}");
        let t = hoeffding_threshold(0.1, 0.1, 100_000, HoeffdingVariant::Strict).unwrap();
        assert!(t > 1.0);
    }

    #[test]
    fn hoeffding_rejects_bad_inputs() {
        assert!(hoeffding_threshold(0.01, 0.05, 20, HoeffdingVariant::Strict).is_err());
        assert!(hoeffding_threshold(0.05, 0.0, 20, HoeffdingVariant::Strict).is_err());
        assert!(hoeffding_threshold(0.05, 0.01, 0, HoeffdingVariant::Strict).is_err());
    }

    #[test]
    fn config_feasibility() {
        assert!(SseConfig::default().validate().is_ok());
        let strict = SseConfig {
            variant: HoeffdingVariant::Strict,
            ..SseConfig::default()
        };
        assert!(matches!(strict.validate(), Err(SseError::ConfigInfeasible { .. })));
        let strict_big = SseConfig { k: 2000, ..strict };
        assert!(strict_big.validate().is_ok());
    }

    #[test]
    fn eta_values() {
        assert_eq!(eta(130.0, 9, 500, 500).unwrap(), 0.0);
        let v = eta(130.0, 9, 500, 1000).unwrap();
        assert!(close(v, 1.0472e-3, 1e-7), "{v}");
        assert!(eta(130.0, 9, 500, 400).is_err());
        let mut prev = 0.0;
        for n in [501, 600, 1000, 5000, 100_000] {
            let v = eta(130.0, 8, 500, n).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    fn scalar() -> (MlpSpec, ParamVector) {
        let spec = MlpSpec::new(vec![1, 1], Activation::Relu, OutputActivation::Identity, 0);
        let p = ParamVector::from_values(&spec, vec![0.5, 0.1]).unwrap();
        (spec, p)
    }

    fn unit_plan(n: usize) -> TransportResult {
        TransportResult {
            n_left: n,
            n_right: n,
            plan: (0..n * n).map(|k| if k % (n + 1) == 0 { 1.0 / n as f64 } else { 0.0 }).collect(),
            dual_u: vec![0.0; n],
            dual_v: vec![0.0; n],
            value: 0.0,
            iterations: 1,
            converged: true,
            max_violation: 0.0,
        }
    }

    #[test]
    fn scalar_hessian_by_hand() {
        let (spec, p) = scalar();
        let x = DenseMatrix::from_vec(1, 1, vec![2.0]).unwrap();
        let h = gauss_newton_hessian(&spec, &p, &x, &MaskMatrix::full(1, 1), &unit_plan(1)).unwrap();
        assert_eq!(h.as_slice(), &[4.0, 2.0, 2.0, 1.0]);
    }

    #[test]
    fn masked_out_hessian_is_zero() {
        let (spec, p) = scalar();
        let x = DenseMatrix::from_vec(2, 1, vec![2.0, 3.0]).unwrap();
        let h = gauss_newton_hessian(&spec, &p, &x, &MaskMatrix::empty(2, 1), &unit_plan(2)).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
        let approx = HessianApprox::from_matrix(h, Some(0.5), 2).unwrap();
        assert_eq!(approx.ridge_used, 0.5);
        assert!(HessianApprox::from_matrix(DMatrix::zeros(2, 2), Some(0.0), 2).is_err());
    }

    #[test]
    fn zero_eta_returns_theta0() {
        let h = HessianApprox::from_matrix(DMatrix::identity(3, 3), Some(0.0), 1).unwrap();
        let spec = MlpSpec::new(vec![1, 1, 1], Activation::Relu, OutputActivation::Identity, 0);
        let theta = ParamVector::from_values(&spec, vec![0.3; 4]).unwrap();
        assert!(sample_params(&theta, &h, 0.0, 1, 4).is_err());
        let h = HessianApprox::from_matrix(DMatrix::identity(4, 4), Some(0.0), 1).unwrap();
        for s in sample_params(&theta, &h, 0.0, 1, 4).unwrap() {
            assert_eq!(s, theta);
        }
        assert_eq!(
            sample_params(&theta, &h, 1.0, 9, 3).unwrap(),
            sample_params(&theta, &h, 1.0, 9, 3).unwrap()
        );
    }

    #[test]
    fn whiten_inverts_factor() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let h = HessianApprox::from_matrix(m.clone(), Some(0.0), 1).unwrap();
        // Cov(L⁻ᵀz) = (L Lᵀ)⁻¹; check L⁻ᵀ L⁻¹ = H⁻¹ column by column.
        let inv = m.try_inverse().unwrap();
        let mut cov = DMatrix::<f64>::zeros(2, 2);
        for e in [[1.0, 0.0], [0.0, 1.0]] {
            let w = DVector::from_vec(h.whiten(&e));
            cov += &w * w.transpose();
        }
        assert!((cov - inv).abs().max() < 1e-12);
    }

    #[test]
    fn distance_basics() {
        let spec = MlpSpec::new(vec![2, 1], Activation::Relu, OutputActivation::Identity, 0);
        let a = ParamVector::from_values(&spec, vec![0.0, 0.0, 0.3]).unwrap();
        let b = ParamVector::from_values(&spec, vec![0.0, 0.0, 0.4]).unwrap();
        let ds = MaskedDataset::fully_observed(DenseMatrix::filled(5, 1, 0.2), "v");
        let v = PreparedValidation::new(&ds, 0).unwrap();
        assert_eq!(model_distance(&a, &a, &spec, &v).unwrap(), 0.0);
        assert!(close(model_distance(&a, &b, &spec, &v).unwrap(), 0.1, 1e-12));
        assert_eq!(
            model_distance(&a, &b, &spec, &v).unwrap(),
            model_distance(&b, &a, &spec, &v).unwrap()
        );
        let empty = MaskedDataset::new(DenseMatrix::zeros(3, 1), MaskMatrix::empty(3, 1), "e").unwrap();
        assert!(matches!(PreparedValidation::new(&empty, 0), Err(SseError::NoObservedCells)));
    }

    #[test]
    fn planted_threshold_search() {
        let (n, probes) = min_satisfying(500, 1000, |n| Ok::<_, ()>((n >= 700, ()))).unwrap();
        assert_eq!(n, 700);
        let bound = (500f64).log2().ceil() as usize + 2;
        assert!(probes.len() <= bound, "{} probes", probes.len());
        assert_eq!(min_satisfying(500, 1000, |_| Ok::<_, ()>((true, ()))).unwrap().0, 500);
        assert_eq!(min_satisfying(500, 1000, |_| Ok::<_, ()>((false, ()))).unwrap().0, 1000);
        assert_eq!(min_satisfying(5, 5, |_| Ok::<_, ()>((false, ()))).unwrap().0, 5);
    }

    #[test]
    fn probability_is_one_at_full_size() {
        let spec = MlpSpec::new(vec![4, 2, 2], Activation::Relu, OutputActivation::Sigmoid, 3);
        let theta = init_params(&spec).unwrap();
        let h = HessianApprox::from_matrix(DMatrix::identity(spec.param_count(), spec.param_count()), Some(0.0), 10)
            .unwrap();
        let ds = MaskedDataset::fully_observed(DenseMatrix::filled(8, 2, 0.5), "v");
        let v = PreparedValidation::new(&ds, 1).unwrap();
        let cfg = SseConfig {
            n0: 10,
            lambda: 1.0,
            ..SseConfig::default()
        };
        assert_eq!(empirical_probability(&theta, &h, &spec, &v, 100, 100, &cfg, 4).unwrap(), 1.0);
        let loose = SseConfig { epsilon: 1e300, ..cfg.clone() };
        assert_eq!(empirical_probability(&theta, &h, &spec, &v, 10, 100, &loose, 4).unwrap(), 1.0);
        assert!(empirical_probability(&theta, &h, &spec, &v, 5, 100, &cfg, 4).is_err());
    }

    #[test]
    fn size_estimate_json_shape() {
        let est = SizeEstimate {
            n_star: 700,
            threshold: 0.975,
            probe_curve: vec![Probe { n: 500, p: 0.5 }],
            seed: 3,
            variant: HoeffdingVariant::PaperAppendix,
        };
        let v: serde_json::Value = serde_json::to_value(&est).unwrap();
        assert_eq!(v["variant"], "paper_appendix");
        assert_eq!(v["probe_curve"][0]["n"], 500);
        for key in ["n_star", "threshold", "probe_curve", "seed", "variant"] {
            assert!(v.get(key).is_some());
        }
    }
}
