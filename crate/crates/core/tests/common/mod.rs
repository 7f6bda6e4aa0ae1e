#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scis::matrix::{DenseMatrix, MaskMatrix, MaskedDataset};

/// Plain scaling iterations `u = a / Kv`, `v = b / Kᵀu` with `K = exp(−C/λ)`.
/// Returns the plan and `<P, C> + λ Σ p log p`.
pub fn naive_sinkhorn(cost: &[f64], n: usize, m: usize, lambda: f64, iters: usize) -> (Vec<f64>, f64) {
    let k: Vec<f64> = cost.iter().map(|c| (-c / lambda).exp()).collect();
    let a = 1.0 / n as f64;
    let b = 1.0 / m as f64;
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; m];
    for _ in 0..iters {
        for i in 0..n {
            let s: f64 = (0..m).map(|j| k[i * m + j] * v[j]).sum();
            u[i] = a / s;
        }
        for j in 0..m {
            let s: f64 = (0..n).map(|i| k[i * m + j] * u[i]).sum();
            v[j] = b / s;
        }
    }
    let mut plan = vec![0.0; n * m];
    let mut value = 0.0;
    for i in 0..n {
        for j in 0..m {
            let p = u[i] * k[i * m + j] * v[j];
            plan[i * m + j] = p;
            value += p * cost[i * m + j];
            if p > 0.0 {
                value += lambda * p * p.ln();
            }
        }
    }
    (plan, value)
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DenseMatrix {
    let v = (0..n * d).map(|_| rng.random_range(0.0..1.0)).collect();
    DenseMatrix::from_vec(n, d, v).unwrap()
}

pub fn random_mask(rng: &mut ChaCha8Rng, n: usize, d: usize, p_obs: f64) -> MaskMatrix {
    let bits = (0..n * d).map(|_| rng.random_bool(p_obs)).collect();
    MaskMatrix::from_bits(n, d, bits).unwrap()
}

pub fn random_dataset(seed: u64, n: usize, d: usize, p_obs: f64) -> MaskedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_points(&mut rng, n, d);
    let m = random_mask(&mut rng, n, d, p_obs);
    MaskedDataset::new(x, m, "random").unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}
