//! A small fully connected network with hand-written backprop.
//!
//! Parameters live in one flat vector so they can be perturbed, sampled and
//! multiplied by dense Hessians without reshaping.

use std::io::{Read, Write};

use crate::matrix::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("trace does not match the network: {0}")]
    TraceMismatch(String),
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NeuralError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width first, output width last.
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub output: OutputActivation,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerOffsets {
    pub weights: usize,
    pub biases: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, output: OutputActivation, seed: u64) -> Self {
        Self {
            layer_sizes,
            activation,
            output,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(NeuralError::InvalidSpec("need at least two layer sizes".into()));
        }
        if self.layer_sizes.contains(&0) {
            return Err(NeuralError::InvalidSpec("layer sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    pub fn layer_count(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    pub fn layout(&self) -> Vec<LayerOffsets> {
        let mut off = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let l = LayerOffsets {
                    weights: off,
                    biases: off + w[0] * w[1],
                    fan_in: w[0],
                    fan_out: w[1],
                };
                off += (w[0] + 1) * w[1];
                l
            })
            .collect()
    }
}

/// Flat parameter vector; weights of layer `l` are stored `fan_out × fan_in`
/// row-major, followed by that layer's biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Vec<LayerOffsets>,
}

impl ParamVector {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            values: vec![0.0; spec.param_count()],
            layout: spec.layout(),
        }
    }

    pub fn from_values(spec: &MlpSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(NeuralError::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                spec.param_count(),
                values.len()
            )));
        }
        Ok(Self {
            values,
            layout: spec.layout(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check(&self, spec: &MlpSpec) -> Result<()> {
        if self.values.len() != spec.param_count() {
            return Err(NeuralError::ShapeMismatch(format!(
                "parameter vector has {} entries, spec needs {}",
                self.values.len(),
                spec.param_count()
            )));
        }
        Ok(())
    }
}

/// Seeded uniform init in `±1/sqrt(fan_in)`, zero biases.
pub fn init_params(spec: &MlpSpec) -> Result<ParamVector> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut p = ParamVector::zeros(spec);
    for l in spec.layout() {
        let bound = 1.0 / (l.fan_in as f64).sqrt();
        for w in &mut p.values[l.weights..l.biases] {
            *w = rng.random_range(-bound..bound);
        }
    }
    Ok(p)
}

/// Activations retained from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: DenseMatrix,
    /// Pre-activation of each layer.
    pub pre: Vec<DenseMatrix>,
    /// Post-activation of each layer; the last entry is the network output.
    pub post: Vec<DenseMatrix>,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn activate(spec: &MlpSpec, last: bool, z: f64) -> f64 {
    if last {
        match spec.output {
            OutputActivation::Identity => z,
            OutputActivation::Sigmoid => sigmoid(z),
        }
    } else {
        match spec.activation {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }
}

/// Derivative of the activation, given the pre-activation `z` and output `a`.
fn activate_deriv(spec: &MlpSpec, last: bool, z: f64, a: f64) -> f64 {
    if last {
        match spec.output {
            OutputActivation::Identity => 1.0,
            OutputActivation::Sigmoid => a * (1.0 - a),
        }
    } else {
        match spec.activation {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

pub fn forward(params: &ParamVector, spec: &MlpSpec, input: &DenseMatrix) -> Result<(DenseMatrix, ForwardTrace)> {
    spec.validate()?;
    params.check(spec)?;
    if input.cols() != spec.input_dim() {
        return Err(NeuralError::ShapeMismatch(format!(
            "input has {} columns, network expects {}",
            input.cols(),
            spec.input_dim()
        )));
    }
    let layout = spec.layout();
    let n = input.rows();
    let mut pre = Vec::with_capacity(layout.len());
    let mut post: Vec<DenseMatrix> = Vec::with_capacity(layout.len());
    for (li, l) in layout.iter().enumerate() {
        let last = li + 1 == layout.len();
        let x = if li == 0 { input } else { &post[li - 1] };
        let w = &params.values[l.weights..l.biases];
        let b = &params.values[l.biases..l.biases + l.fan_out];
        let mut z = DenseMatrix::zeros(n, l.fan_out);
        let mut a = DenseMatrix::zeros(n, l.fan_out);
        for r in 0..n {
            let xr = x.row(r);
            for o in 0..l.fan_out {
                let wr = &w[o * l.fan_in..(o + 1) * l.fan_in];
                let s: f64 = wr.iter().zip(xr).map(|(wi, xi)| wi * xi).sum::<f64>() + b[o];
                z.set(r, o, s);
                a.set(r, o, activate(spec, last, s));
            }
        }
        pre.push(z);
        post.push(a);
    }
    let output = post.last().expect("at least one layer").clone();
    Ok((
        output,
        ForwardTrace {
            input: input.clone(),
            pre,
            post,
        },
    ))
}

/// Output only; skips keeping the trace around for callers that do not backprop.
pub fn predict(params: &ParamVector, spec: &MlpSpec, input: &DenseMatrix) -> Result<DenseMatrix> {
    forward(params, spec, input).map(|(out, _)| out)
}

fn check_trace(spec: &MlpSpec, trace: &ForwardTrace, grad_out: &DenseMatrix) -> Result<()> {
    let layers = spec.layer_count();
    if trace.pre.len() != layers || trace.post.len() != layers {
        return Err(NeuralError::TraceMismatch(format!(
            "trace has {} layers, network has {layers}",
            trace.pre.len()
        )));
    }
    for (li, w) in spec.layer_sizes.windows(2).enumerate() {
        if trace.pre[li].cols() != w[1] || trace.pre[li].rows() != trace.input.rows() {
            return Err(NeuralError::TraceMismatch(format!("layer {li} has the wrong width")));
        }
    }
    if trace.input.cols() != spec.input_dim() {
        return Err(NeuralError::TraceMismatch("input width".into()));
    }
    if grad_out.shape() != trace.post[layers - 1].shape() {
        return Err(NeuralError::ShapeMismatch(format!(
            "upstream gradient {:?} vs output {:?}",
            grad_out.shape(),
            trace.post[layers - 1].shape()
        )));
    }
    Ok(())
}

/// Gradient of `Σ_i <grad_out_i, out_i>` with respect to parameters and input.
pub fn backward_full(
    params: &ParamVector,
    spec: &MlpSpec,
    trace: &ForwardTrace,
    grad_out: &DenseMatrix,
) -> Result<(ParamVector, DenseMatrix)> {
    params.check(spec)?;
    check_trace(spec, trace, grad_out)?;
    let layout = spec.layout();
    let n = trace.input.rows();
    let mut grad = ParamVector::zeros(spec);
    let mut upstream = grad_out.clone();
    for li in (0..layout.len()).rev() {
        let l = layout[li];
        let last = li + 1 == layout.len();
        let x = if li == 0 { &trace.input } else { &trace.post[li - 1] };
        let z = &trace.pre[li];
        let a = &trace.post[li];
        let w = &params.values[l.weights..l.biases];
        let mut delta = DenseMatrix::zeros(n, l.fan_out);
        for r in 0..n {
            for o in 0..l.fan_out {
                let d = upstream.get(r, o) * activate_deriv(spec, last, z.get(r, o), a.get(r, o));
                delta.set(r, o, d);
            }
        }
        let (gw, gb) = grad.values[l.weights..l.biases + l.fan_out].split_at_mut(l.fan_in * l.fan_out);
        let mut down = DenseMatrix::zeros(n, l.fan_in);
        for r in 0..n {
            let xr = x.row(r);
            let dr = delta.row(r);
            let downr = down.row_mut(r);
            for o in 0..l.fan_out {
                let d = dr[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row_w = &w[o * l.fan_in..(o + 1) * l.fan_in];
                let row_g = &mut gw[o * l.fan_in..(o + 1) * l.fan_in];
                for i in 0..l.fan_in {
                    row_g[i] += d * xr[i];
                    downr[i] += d * row_w[i];
                }
            }
        }
        upstream = down;
    }
    Ok((grad, upstream))
}

/// Gradient of `Σ_i <grad_out_i, out_i>` with respect to the parameters.
pub fn backward(params: &ParamVector, spec: &MlpSpec, trace: &ForwardTrace, grad_out: &DenseMatrix) -> Result<ParamVector> {
    backward_full(params, spec, trace, grad_out).map(|(g, _)| g)
}

/// `d_out × p` Jacobian of one output row with respect to the parameters,
/// assembled from one-hot backward passes.
pub fn per_sample_jacobian(params: &ParamVector, spec: &MlpSpec, input_row: &[f64]) -> Result<DenseMatrix> {
    let input = DenseMatrix::from_vec(1, input_row.len(), input_row.to_vec())
        .map_err(|e| NeuralError::ShapeMismatch(e.to_string()))?;
    let (_, trace) = forward(params, spec, &input)?;
    let d = spec.output_dim();
    let p = spec.param_count();
    let mut jac = DenseMatrix::zeros(d, p);
    let mut onehot = DenseMatrix::zeros(1, d);
    for k in 0..d {
        onehot.as_mut_slice().fill(0.0);
        onehot.set(0, k, 1.0);
        let g = backward(params, spec, &trace, &onehot)?;
        jac.row_mut(k).copy_from_slice(&g.values);
    }
    Ok(jac)
}

/// First and second moment estimates for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One Adam descent step, in place.
pub fn adam_step(params: &mut ParamVector, grad: &ParamVector, state: &mut AdamState, lr: f64) -> Result<()> {
    if grad.len() != params.len() || state.m.len() != params.len() {
        return Err(NeuralError::ShapeMismatch(format!(
            "params {}, grad {}, state {}",
            params.len(),
            grad.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let b1t = 1.0 - AdamState::BETA1.powi(state.t as i32);
    let b2t = 1.0 - AdamState::BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grad.values[i];
        state.m[i] = AdamState::BETA1 * state.m[i] + (1.0 - AdamState::BETA1) * g;
        state.v[i] = AdamState::BETA2 * state.v[i] + (1.0 - AdamState::BETA2) * g * g;
        let m_hat = state.m[i] / b1t;
        let v_hat = state.v[i] / b2t;
        params.values[i] -= lr * m_hat / (v_hat.sqrt() + AdamState::EPS);
    }
    Ok(())
}

const MAGIC: &[u8; 8] = b"SCISMLP1";

#[derive(Serialize, Deserialize)]
struct Header {
    #[serde(flatten)]
    spec: MlpSpec,
    param_count: usize,
}

/// Writes `MAGIC | u32 header length | JSON header | f64 LE parameters`.
pub fn save_params<W: Write>(mut w: W, spec: &MlpSpec, params: &ParamVector) -> Result<()> {
    params.check(spec)?;
    let header = serde_json::to_vec(&Header {
        spec: spec.clone(),
        param_count: params.len(),
    })
    .map_err(|e| NeuralError::Format(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for v in &params.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_params<R: Read>(mut r: R) -> Result<(MlpSpec, ParamVector)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NeuralError::Format("bad magic".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header).map_err(|e| NeuralError::Format(e.to_string()))?;
    header.spec.validate()?;
    if header.param_count != header.spec.param_count() {
        return Err(NeuralError::Format("parameter count disagrees with layer sizes".into()));
    }
    let mut values = Vec::with_capacity(header.param_count);
    let mut buf = [0u8; 8];
    for _ in 0..header.param_count {
        r.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    let params = ParamVector::from_values(&header.spec, values)?;
    Ok((header.spec, params))
}
