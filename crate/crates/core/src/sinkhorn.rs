//! Entropic optimal transport between masked empirical measures.
//!
//! Both measures carry uniform weights. The regularized objective is
//! `<P, C> + λ Σ p log p`, solved by Sinkhorn scaling (log-domain by default).
//! The debiased masking Sinkhorn divergence and its envelope gradients are
//! built on top of it.

use crate::matrix::{DenseMatrix, MaskMatrix};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OtError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("cost matrix contains a non-finite entry at ({0}, {1})")]
    NonFiniteCost(usize, usize),
    #[error("sinkhorn did not converge in {} iterations (violation {:.3e})", .0.iterations, .0.max_violation)]
    DidNotConverge(Box<TransportResult>),
    #[error("transport plan is not converged")]
    NotConverged,
    #[error("kernel underflow in plain-domain sinkhorn; use the log-domain solver")]
    KernelUnderflow,
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
}

pub type Result<T> = std::result::Result<T, OtError>;

/// Ground cost between two (masked) points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostKind {
    /// `Σ_k (a_k − b_k)²`
    #[default]
    SquaredL2,
    /// `|a − b|`, single column only.
    Abs1d,
}

impl CostKind {
    #[inline]
    fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            CostKind::SquaredL2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            CostKind::Abs1d => (a[0] - b[0]).abs(),
        }
    }

    /// Partial derivative of the cost in its first argument, coordinate-wise.
    #[inline]
    fn d_first(self, a: f64, b: f64) -> f64 {
        match self {
            CostKind::SquaredL2 => 2.0 * (a - b),
            CostKind::Abs1d => {
                let diff = a - b;
                if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornSettings {
    pub lambda: f64,
    pub max_iters: usize,
    /// Maximum tolerated marginal violation.
    pub tolerance: f64,
    pub log_domain: bool,
}

impl Default for SinkhornSettings {
    fn default() -> Self {
        Self {
            lambda: 130.0,
            max_iters: 1000,
            tolerance: 1e-6,
            log_domain: true,
        }
    }
}

impl SinkhornSettings {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(OtError::InvalidSettings(format!("lambda {}", self.lambda)));
        }
        if !(self.tolerance > 0.0) {
            return Err(OtError::InvalidSettings(format!(
                "tolerance {}",
                self.tolerance
            )));
        }
        if self.max_iters == 0 {
            return Err(OtError::InvalidSettings("max_iters is zero".into()));
        }
        Ok(())
    }
}

/// Row-major `n_left × n_right` cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedCostMatrix {
    pub n_left: usize,
    pub n_right: usize,
    pub costs: Vec<f64>,
}

impl MaskedCostMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.n_right + j]
    }

    /// Cost matrix between two unmasked point clouds.
    pub fn between(left: &DenseMatrix, right: &DenseMatrix, kind: CostKind) -> Result<Self> {
        check_kind(left.cols(), right.cols(), kind)?;
        let (n, m) = (left.rows(), right.rows());
        let mut costs = Vec::with_capacity(n * m);
        for i in 0..n {
            let a = left.row(i);
            for j in 0..m {
                costs.push(kind.eval(a, right.row(j)));
            }
        }
        Ok(Self {
            n_left: n,
            n_right: m,
            costs,
        })
    }
}

fn check_kind(left_cols: usize, right_cols: usize, kind: CostKind) -> Result<()> {
    if left_cols != right_cols {
        return Err(OtError::ShapeMismatch(format!(
            "left has {left_cols} columns, right has {right_cols}"
        )));
    }
    if kind == CostKind::Abs1d && left_cols != 1 {
        return Err(OtError::ShapeMismatch(format!(
            "abs_1d cost needs one column, got {left_cols}"
        )));
    }
    Ok(())
}

/// `m ⊙ x`, row by row.
pub fn apply_mask(x: &DenseMatrix, mask: &MaskMatrix) -> Result<DenseMatrix> {
    if x.shape() != mask.shape() {
        return Err(OtError::ShapeMismatch(format!(
            "data {:?} vs mask {:?}",
            x.shape(),
            mask.shape()
        )));
    }
    let mut out = x.clone();
    for (v, &b) in out.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        if !b {
            *v = 0.0;
        }
    }
    Ok(out)
}

/// Cost matrix between `m_i ⊙ x̄_i` (left) and `m_j ⊙ x_j` (right).
pub fn masked_cost(
    left: &DenseMatrix,
    left_mask: &MaskMatrix,
    right: &DenseMatrix,
    right_mask: &MaskMatrix,
    kind: CostKind,
) -> Result<MaskedCostMatrix> {
    check_kind(left.cols(), right.cols(), kind)?;
    let a = apply_mask(left, left_mask)?;
    let b = apply_mask(right, right_mask)?;
    MaskedCostMatrix::between(&a, &b, kind)
}

/// A solved entropic transport problem.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportResult {
    pub n_left: usize,
    pub n_right: usize,
    /// Row-major plan.
    pub plan: Vec<f64>,
    /// Dual potential on the left measure (`f` in `P = exp((f ⊕ g − C)/λ)`).
    pub dual_u: Vec<f64>,
    pub dual_v: Vec<f64>,
    /// Entropic objective `<P, C> + λ Σ p log p`, read from the dual
    /// potentials; its error is quadratic in the marginal violation.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub max_violation: f64,
}

impl TransportResult {
    #[inline]
    pub fn plan_at(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.n_right + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.plan
            .chunks(self.n_right)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n_right];
        for row in self.plan.chunks(self.n_right) {
            for (acc, p) in s.iter_mut().zip(row) {
                *acc += p;
            }
        }
        s
    }
}

/// `<f, a> + <g, b> − λ (Σ P − 1)` for uniform `a`, `b`.
fn dual_value(f: &[f64], g: &[f64], plan: &[f64], lambda: f64) -> f64 {
    let fa = f.iter().sum::<f64>() / f.len() as f64;
    let gb = g.iter().sum::<f64>() / g.len() as f64;
    fa + gb - lambda * (plan.iter().sum::<f64>() - 1.0)
}

fn violation(plan: &[f64], n: usize, m: usize) -> f64 {
    let (a, b) = (1.0 / n as f64, 1.0 / m as f64);
    let mut worst = 0.0f64;
    let mut cols = vec![0.0; m];
    for row in plan.chunks(m) {
        let s: f64 = row.iter().sum();
        worst = worst.max((s - a).abs());
        for (acc, p) in cols.iter_mut().zip(row) {
            *acc += p;
        }
    }
    cols.iter().fold(worst, |w, s| w.max((s - b).abs()))
}

/// Solves `min_P <P, C> + λ Σ p log p` over couplings of two uniform measures.
pub fn sinkhorn_solve(cost: &MaskedCostMatrix, settings: &SinkhornSettings) -> Result<TransportResult> {
    settings.validate()?;
    if cost.n_left == 0 || cost.n_right == 0 {
        return Err(OtError::ShapeMismatch("empty cost matrix".into()));
    }
    if let Some(pos) = cost.costs.iter().position(|c| !c.is_finite()) {
        return Err(OtError::NonFiniteCost(pos / cost.n_right, pos % cost.n_right));
    }
    let result = if settings.log_domain {
        solve_log(cost, settings)
    } else {
        solve_plain(cost, settings)?
    };
    if result.converged {
        Ok(result)
    } else {
        Err(OtError::DidNotConverge(Box::new(result)))
    }
}

/// Like [`sinkhorn_solve`] but hands back the best-so-far plan instead of
/// failing when the iteration budget runs out.
pub(crate) fn sinkhorn_solve_lenient(
    cost: &MaskedCostMatrix,
    settings: &SinkhornSettings,
) -> Result<TransportResult> {
    match sinkhorn_solve(cost, settings) {
        Err(OtError::DidNotConverge(best)) => Ok(*best),
        other => other,
    }
}

fn solve_log(cost: &MaskedCostMatrix, settings: &SinkhornSettings) -> TransportResult {
    let (n, m) = (cost.n_left, cost.n_right);
    let lam = settings.lambda;
    let log_a = -(n as f64).ln();
    let log_b = -(m as f64).ln();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut f_new = vec![0.0; n];
    let mut col_max = vec![0.0; m];
    let mut col_sum = vec![0.0; m];
    let a = 1.0 / n as f64;

    let mut iterations = 0;
    let mut converged = false;
    let mut last_violation = f64::INFINITY;

    // g = 0 start; the loop alternates f- and g-updates. After every g-update
    // the column marginals hold exactly, so the row violation of (f, g) can be
    // read off the next f-update: r_i = a · exp((f_i − f_new_i)/λ).
    for it in 0..=settings.max_iters {
        for i in 0..n {
            let row = &cost.costs[i * m..(i + 1) * m];
            let mut mx = f64::NEG_INFINITY;
            for (gj, cij) in g.iter().zip(row) {
                mx = mx.max((gj - cij) / lam);
            }
            let s: f64 = g
                .iter()
                .zip(row)
                .map(|(gj, cij)| ((gj - cij) / lam - mx).exp())
                .sum();
            f_new[i] = lam * log_a - lam * (mx + s.ln());
        }
        if it > 0 {
            last_violation = f
                .iter()
                .zip(&f_new)
                .map(|(fo, fn_)| (a * ((fo - fn_) / lam).exp() - a).abs())
                .fold(0.0, f64::max);
            if last_violation <= settings.tolerance {
                converged = true;
                break;
            }
        }
        if it == settings.max_iters {
            break;
        }
        std::mem::swap(&mut f, &mut f_new);
        iterations = it + 1;

        col_max.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
        for i in 0..n {
            let row = &cost.costs[i * m..(i + 1) * m];
            for (mx, cij) in col_max.iter_mut().zip(row) {
                *mx = mx.max((f[i] - cij) / lam);
            }
        }
        col_sum.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let row = &cost.costs[i * m..(i + 1) * m];
            for ((s, mx), cij) in col_sum.iter_mut().zip(&col_max).zip(row) {
                *s += ((f[i] - cij) / lam - mx).exp();
            }
        }
        for j in 0..m {
            g[j] = lam * log_b - lam * (col_max[j] + col_sum[j].ln());
        }
    }

    let mut plan = Vec::with_capacity(n * m);
    for i in 0..n {
        let row = &cost.costs[i * m..(i + 1) * m];
        plan.extend(g.iter().zip(row).map(|(gj, cij)| ((f[i] + gj - cij) / lam).exp()));
    }
    let max_violation = violation(&plan, n, m);
    let value = dual_value(&f, &g, &plan, lam);
    TransportResult {
        n_left: n,
        n_right: m,
        plan,
        dual_u: f,
        dual_v: g,
        value,
        iterations,
        converged: converged && last_violation.is_finite(),
        max_violation,
    }
}

fn solve_plain(cost: &MaskedCostMatrix, settings: &SinkhornSettings) -> Result<TransportResult> {
    let (n, m) = (cost.n_left, cost.n_right);
    let lam = settings.lambda;
    let (a, b) = (1.0 / n as f64, 1.0 / m as f64);
    let kernel: Vec<f64> = cost.costs.iter().map(|c| (-c / lam).exp()).collect();
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; m];
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..settings.max_iters {
        for i in 0..n {
            let kv: f64 = kernel[i * m..(i + 1) * m].iter().zip(&v).map(|(k, vj)| k * vj).sum();
            if kv <= 0.0 || !kv.is_finite() {
                return Err(OtError::KernelUnderflow);
            }
            u[i] = a / kv;
        }
        let mut ktu = vec![0.0; m];
        for i in 0..n {
            for (acc, k) in ktu.iter_mut().zip(&kernel[i * m..(i + 1) * m]) {
                *acc += k * u[i];
            }
        }
        for j in 0..m {
            if ktu[j] <= 0.0 || !ktu[j].is_finite() {
                return Err(OtError::KernelUnderflow);
            }
            v[j] = b / ktu[j];
        }
        iterations = it + 1;
        let worst = (0..n)
            .map(|i| {
                let kv: f64 = kernel[i * m..(i + 1) * m]
                    .iter()
                    .zip(&v)
                    .map(|(k, vj)| k * vj)
                    .sum();
                (u[i] * kv - a).abs()
            })
            .fold(0.0, f64::max);
        if worst <= settings.tolerance {
            converged = true;
            break;
        }
    }
    let mut plan = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            plan.push(u[i] * kernel[i * m + j] * v[j]);
        }
    }
    let max_violation = violation(&plan, n, m);
    let dual_u: Vec<f64> = u.iter().map(|x| lam * x.ln()).collect();
    let dual_v: Vec<f64> = v.iter().map(|x| lam * x.ln()).collect();
    let value = dual_value(&dual_u, &dual_v, &plan, lam);
    Ok(TransportResult {
        n_left: n,
        n_right: m,
        plan,
        dual_u,
        dual_v,
        value,
        iterations,
        converged,
        max_violation,
    })
}

fn check_same_rows(left: &DenseMatrix, right: &DenseMatrix) -> Result<()> {
    if left.rows() != right.rows() {
        return Err(OtError::ShapeMismatch(format!(
            "sample counts differ: {} vs {}",
            left.rows(),
            right.rows()
        )));
    }
    Ok(())
}

/// Masked regularized OT value between `x̄ ⊙ m` (left) and `x ⊙ m` (right).
pub fn regularized_ot(
    left: &DenseMatrix,
    left_mask: &MaskMatrix,
    right: &DenseMatrix,
    right_mask: &MaskMatrix,
    settings: &SinkhornSettings,
) -> Result<f64> {
    check_same_rows(left, right)?;
    let cost = masked_cost(left, left_mask, right, right_mask, CostKind::SquaredL2)?;
    Ok(sinkhorn_solve(&cost, settings)?.value)
}

/// Debiased divergence `2·OT(ν, μ) − OT(ν, ν) − OT(μ, μ)` on masked rows.
pub fn ms_divergence(
    left: &DenseMatrix,
    left_mask: &MaskMatrix,
    right: &DenseMatrix,
    right_mask: &MaskMatrix,
    settings: &SinkhornSettings,
) -> Result<f64> {
    check_same_rows(left, right)?;
    let a = apply_mask(left, left_mask)?;
    let b = apply_mask(right, right_mask)?;
    Ok(divergence_points(&a, &b, settings, CostKind::SquaredL2, false)?.value)
}

/// Barycentric displacement `[Σ_j P_ij (m_i ⊙ x̄_i − m_j ⊙ x_j)] ⊙ m_i` per left row.
///
/// Under the squared-L2 cost the gradient of the regularized OT value with
/// respect to `x̄_i` is twice this quantity.
pub fn barycentric_grad(
    plan: &TransportResult,
    left: &DenseMatrix,
    left_mask: &MaskMatrix,
    right: &DenseMatrix,
    right_mask: &MaskMatrix,
) -> Result<DenseMatrix> {
    if !plan.converged {
        return Err(OtError::NotConverged);
    }
    if plan.n_left != left.rows() || plan.n_right != right.rows() {
        return Err(OtError::ShapeMismatch(format!(
            "plan is {}x{}, rows are {} and {}",
            plan.n_left,
            plan.n_right,
            left.rows(),
            right.rows()
        )));
    }
    check_kind(left.cols(), right.cols(), CostKind::SquaredL2)?;
    let a = apply_mask(left, left_mask)?;
    let b = apply_mask(right, right_mask)?;
    let d = a.cols();
    let mut out = DenseMatrix::zeros(a.rows(), d);
    for i in 0..a.rows() {
        let ai = a.row(i);
        let acc = out.row_mut(i);
        for j in 0..b.rows() {
            let p = plan.plan_at(i, j);
            for ((o, x), y) in acc.iter_mut().zip(ai).zip(b.row(j)) {
                *o += p * (x - y);
            }
        }
        for (k, o) in acc.iter_mut().enumerate() {
            if !left_mask.is_observed(i, k) {
                *o = 0.0;
            }
        }
    }
    Ok(out)
}

/// Envelope gradients of an OT value with respect to both point clouds.
fn envelope_grads(
    plan: &TransportResult,
    left: &DenseMatrix,
    right: &DenseMatrix,
    kind: CostKind,
) -> (DenseMatrix, DenseMatrix) {
    let d = left.cols();
    let mut gl = DenseMatrix::zeros(left.rows(), d);
    let mut gr = DenseMatrix::zeros(right.rows(), d);
    for i in 0..left.rows() {
        let ai = left.row(i);
        for j in 0..right.rows() {
            let p = plan.plan_at(i, j);
            if p == 0.0 {
                continue;
            }
            let bj = right.row(j);
            for k in 0..d {
                let dc = kind.d_first(ai[k], bj[k]);
                gl.row_mut(i)[k] += p * dc;
                gr.row_mut(j)[k] -= p * dc;
            }
        }
    }
    (gl, gr)
}

/// Debiased divergence between point clouds with optional envelope gradients.
#[derive(Debug, Clone)]
pub struct DivergenceWithGrad {
    pub value: f64,
    pub grad_left: Option<DenseMatrix>,
    pub grad_right: Option<DenseMatrix>,
}

fn solve_with(cost: &MaskedCostMatrix, settings: &SinkhornSettings, lenient: bool) -> Result<TransportResult> {
    if lenient {
        sinkhorn_solve_lenient(cost, settings)
    } else {
        sinkhorn_solve(cost, settings)
    }
}

impl TransportResult {
    fn transposed(self) -> Self {
        let (n, m) = (self.n_left, self.n_right);
        let mut plan = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                plan[j * n + i] = self.plan[i * m + j];
            }
        }
        Self {
            n_left: m,
            n_right: n,
            plan,
            dual_u: self.dual_v,
            dual_v: self.dual_u,
            ..self
        }
    }
}

/// Cross term solved in a fixed orientation, so swapping the clouds gives a
/// bitwise identical value and a transposed plan.
fn solve_cross(
    a: &DenseMatrix,
    b: &DenseMatrix,
    settings: &SinkhornSettings,
    kind: CostKind,
    lenient: bool,
) -> Result<TransportResult> {
    let swap = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .is_some_and(|o| o.is_gt());
    if swap {
        Ok(solve_with(&MaskedCostMatrix::between(b, a, kind)?, settings, lenient)?.transposed())
    } else {
        solve_with(&MaskedCostMatrix::between(a, b, kind)?, settings, lenient)
    }
}

fn divergence_points(
    a: &DenseMatrix,
    b: &DenseMatrix,
    settings: &SinkhornSettings,
    kind: CostKind,
    lenient: bool,
) -> Result<DivergenceWithGrad> {
    let cross = solve_cross(a, b, settings, kind, lenient)?;
    let self_a = solve_with(&MaskedCostMatrix::between(a, a, kind)?, settings, lenient)?;
    let self_b = solve_with(&MaskedCostMatrix::between(b, b, kind)?, settings, lenient)?;
    Ok(DivergenceWithGrad {
        value: 2.0 * cross.value - self_a.value - self_b.value,
        grad_left: None,
        grad_right: None,
    })
}

/// Debiased Sinkhorn divergence between two unmasked point clouds, with the
/// envelope gradient with respect to each cloud.
pub fn sinkhorn_divergence_with_grad(
    a: &DenseMatrix,
    b: &DenseMatrix,
    settings: &SinkhornSettings,
    kind: CostKind,
) -> Result<DivergenceWithGrad> {
    divergence_with_grad_impl(a, b, settings, kind, false)
}

pub(crate) fn divergence_with_grad_impl(
    a: &DenseMatrix,
    b: &DenseMatrix,
    settings: &SinkhornSettings,
    kind: CostKind,
    lenient: bool,
) -> Result<DivergenceWithGrad> {
    check_same_rows(a, b)?;
    let cross = solve_cross(a, b, settings, kind, lenient)?;
    let self_a = solve_with(&MaskedCostMatrix::between(a, a, kind)?, settings, lenient)?;
    let self_b = solve_with(&MaskedCostMatrix::between(b, b, kind)?, settings, lenient)?;

    let (ga_cross, gb_cross) = envelope_grads(&cross, a, b, kind);
    let (ga_l, ga_r) = envelope_grads(&self_a, a, a, kind);
    let (gb_l, gb_r) = envelope_grads(&self_b, b, b, kind);

    let mut grad_a = ga_cross;
    for ((g, l), r) in grad_a
        .as_mut_slice()
        .iter_mut()
        .zip(ga_l.as_slice())
        .zip(ga_r.as_slice())
    {
        *g = 2.0 * *g - l - r;
    }
    let mut grad_b = gb_cross;
    for ((g, l), r) in grad_b
        .as_mut_slice()
        .iter_mut()
        .zip(gb_l.as_slice())
        .zip(gb_r.as_slice())
    {
        *g = 2.0 * *g - l - r;
    }
    Ok(DivergenceWithGrad {
        value: 2.0 * cross.value - self_a.value - self_b.value,
        grad_left: Some(grad_a),
        grad_right: Some(grad_b),
    })
}

/// Batch loss `S_m / (2n)` and its gradient with respect to the reconstruction.
#[derive(Debug, Clone)]
pub struct MsLoss {
    pub value: f64,
    pub grad: DenseMatrix,
}

/// MS-divergence loss between `m ⊙ x̄` and `m ⊙ x` for one batch.
pub fn ms_loss(
    batch_data: &DenseMatrix,
    batch_mask: &MaskMatrix,
    reconstructed: &DenseMatrix,
    settings: &SinkhornSettings,
) -> Result<MsLoss> {
    ms_loss_with_cost(batch_data, batch_mask, reconstructed, settings, CostKind::SquaredL2)
}

pub fn ms_loss_with_cost(
    batch_data: &DenseMatrix,
    batch_mask: &MaskMatrix,
    reconstructed: &DenseMatrix,
    settings: &SinkhornSettings,
    kind: CostKind,
) -> Result<MsLoss> {
    ms_loss_impl(batch_data, batch_mask, reconstructed, settings, kind, false)
}

pub(crate) fn ms_loss_impl(
    batch_data: &DenseMatrix,
    batch_mask: &MaskMatrix,
    reconstructed: &DenseMatrix,
    settings: &SinkhornSettings,
    kind: CostKind,
    lenient: bool,
) -> Result<MsLoss> {
    if reconstructed.shape() != batch_data.shape() {
        return Err(OtError::ShapeMismatch(format!(
            "reconstruction {:?} vs batch {:?}",
            reconstructed.shape(),
            batch_data.shape()
        )));
    }
    let n = batch_data.rows();
    if n == 0 {
        return Err(OtError::ShapeMismatch("empty batch".into()));
    }
    let a = apply_mask(reconstructed, batch_mask)?;
    let b = apply_mask(batch_data, batch_mask)?;
    let div = divergence_with_grad_impl(&a, &b, settings, kind, lenient)?;
    let scale = 1.0 / (2.0 * n as f64);
    let mut grad = div.grad_left.expect("gradient requested");
    for (g, &m) in grad.as_mut_slice().iter_mut().zip(batch_mask.as_slice()) {
        *g = if m { *g * scale } else { 0.0 };
    }
    Ok(MsLoss {
        value: div.value * scale,
        grad,
    })
}
