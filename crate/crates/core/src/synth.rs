//! Seeded synthetic datasets.

use crate::matrix::{normalize, DenseMatrix, MaskedDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    GaussianMixture,
    LinearManifold,
    MaskedDirac,
}

impl std::str::FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "gaussian_mixture" => Ok(Self::GaussianMixture),
            "linear_manifold" => Ok(Self::LinearManifold),
            "masked_dirac" => Ok(Self::MaskedDirac),
            other => Err(format!("unknown synthetic kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    pub d: usize,
    /// Mixture components.
    pub components: usize,
    /// Noise scale (mixture spread or off-manifold noise).
    pub noise: f64,
    /// Location of the Dirac.
    pub theta: f64,
    /// Observation probability for the Dirac masks; drawn by the caller.
    pub q: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, n: usize, d: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            d,
            components: 3,
            noise: 0.1,
            theta: 0.5,
            q: 0.5,
            seed,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Fully observed dataset; mixture and manifold data are min-max scaled.
pub fn synth(spec: &SynthSpec) -> MaskedDataset {
    let n = spec.n.max(1);
    let d = spec.d.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let name = format!("{:?}", spec.kind).to_lowercase();
    match spec.kind {
        SynthKind::MaskedDirac => {
            MaskedDataset::fully_observed(DenseMatrix::filled(n, d, spec.theta), name)
        }
        SynthKind::GaussianMixture => {
            let k = spec.components.max(1);
            // per component: mean in [-2, 2]^d and a random mixing matrix,
            // so columns are correlated within each component
            let comps: Vec<(Vec<f64>, Vec<f64>)> = (0..k)
                .map(|_| {
                    let mean = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                    let mix = (0..d * d).map(|_| normal(&mut rng) * spec.noise).collect();
                    (mean, mix)
                })
                .collect();
            let mut values = Vec::with_capacity(n * d);
            let mut z = vec![0.0; d];
            for _ in 0..n {
                let (mean, mix) = &comps[rng.random_range(0..k)];
                z.iter_mut().for_each(|v| *v = normal(&mut rng));
                for r in 0..d {
                    let s: f64 = (0..d).map(|c| mix[r * d + c] * z[c]).sum();
                    values.push(mean[r] + s);
                }
            }
            scaled(DenseMatrix::from_vec(n, d, values).expect("finite"), name)
        }
        SynthKind::LinearManifold => {
            let rank = (d / 2).max(1);
            let basis: Vec<f64> = (0..d * rank).map(|_| normal(&mut rng)).collect();
            let mut values = Vec::with_capacity(n * d);
            let mut t = vec![0.0; rank];
            for _ in 0..n {
                t.iter_mut().for_each(|v| *v = normal(&mut rng));
                for r in 0..d {
                    let s: f64 = (0..rank).map(|c| basis[r * rank + c] * t[c]).sum();
                    values.push(s + spec.noise * normal(&mut rng));
                }
            }
            scaled(DenseMatrix::from_vec(n, d, values).expect("finite"), name)
        }
    }
}

fn scaled(m: DenseMatrix, name: String) -> MaskedDataset {
    let ds = MaskedDataset::fully_observed(m, name);
    let mut out = normalize(&ds).expect("every column is observed");
    // synthetic data carries no original units
    out.feature_ranges = None;
    out
}
