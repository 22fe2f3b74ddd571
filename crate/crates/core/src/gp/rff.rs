//! Random-Fourier-feature sample paths.
//!
//! Features come in cos/sin pairs sharing one frequency, scaled so that
//! `⟨z(p), z(p)⟩ = σ_f` exactly. A path is `f(p) = wᵀ z(p)` with `w ~ N(0, I)`.

use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::kernel::{KernelKind, KernelSpec};
use crate::error::{invalid, Result};
use crate::rng::{substream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum FeatureMap {
    /// Row-major `n_features × dim` frequencies.
    Fourier { omega: Vec<f64>, dim: usize, scale: f64 },
    /// The linear kernel has an exact finite feature map.
    Linear { scales: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffSample {
    features: FeatureMap,
    weights: Vec<f64>,
    seed: u64,
}

impl RffSample {
    pub fn draw(kernel: &KernelSpec, n_features: usize, seed: u64) -> Result<Self> {
        kernel.validate()?;
        if n_features == 0 {
            return Err(invalid("sample path needs at least one feature"));
        }
        let mut rng = substream(seed, Stream::Benchmark, 0);
        let dim = kernel.input_dim();
        let lengthscales: Vec<f64> = kernel.lengthscales().collect();
        let features = match kernel.kind {
            KernelKind::Linear => FeatureMap::Linear {
                scales: lengthscales.iter().map(|l| kernel.amplitude.sqrt() / l).collect(),
            },
            KernelKind::GaussianArd | KernelKind::Matern { .. } => {
                let chi = match kernel.kind {
                    KernelKind::Matern { nu } => Some(ChiSquared::new(2.0 * nu).map_err(|e| invalid(e.to_string()))?),
                    _ => None,
                };
                let mut omega = Vec::with_capacity(n_features * dim);
                for _ in 0..n_features {
                    // multivariate-t frequencies for Matérn, Gaussian otherwise
                    let t_scale = match (&chi, kernel.kind) {
                        (Some(chi), KernelKind::Matern { nu }) => {
                            let u: f64 = chi.sample(&mut rng);
                            (2.0 * nu / u).sqrt()
                        }
                        _ => 1.0,
                    };
                    for l in &lengthscales {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        omega.push(z * t_scale / l);
                    }
                }
                FeatureMap::Fourier {
                    omega,
                    dim,
                    scale: (kernel.amplitude / n_features as f64).sqrt(),
                }
            }
        };
        let n_weights = match &features {
            FeatureMap::Fourier { .. } => 2 * n_features,
            FeatureMap::Linear { scales } => scales.len(),
        };
        let weights = (0..n_weights).map(|_| StandardNormal.sample(&mut rng)).collect();
        Ok(Self { features, weights, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        match &self.features {
            FeatureMap::Fourier { dim, .. } => *dim,
            FeatureMap::Linear { scales } => scales.len(),
        }
    }

    /// Feature vector `z(p)`.
    pub fn features(&self, p: &[f64]) -> Vec<f64> {
        match &self.features {
            FeatureMap::Fourier { omega, dim, scale } => {
                let n = self.weights.len() / 2;
                let mut z = Vec::with_capacity(2 * n);
                for j in 0..n {
                    let row = &omega[j * dim..(j + 1) * dim];
                    let a: f64 = row.iter().zip(p).map(|(w, x)| w * x).sum();
                    z.push(scale * a.cos());
                    z.push(scale * a.sin());
                }
                z
            }
            FeatureMap::Linear { scales } => scales.iter().zip(p).map(|(s, x)| s * x).collect(),
        }
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        match &self.features {
            FeatureMap::Fourier { omega, dim, scale } => {
                let mut acc = 0.0;
                for (j, w) in self.weights.chunks_exact(2).enumerate() {
                    let row = &omega[j * dim..(j + 1) * dim];
                    let a: f64 = row.iter().zip(p).map(|(o, x)| o * x).sum();
                    let (s, c) = a.sin_cos();
                    acc += w[0] * c + w[1] * s;
                }
                scale * acc
            }
            FeatureMap::Linear { scales } => scales
                .iter()
                .zip(p)
                .zip(&self.weights)
                .map(|((s, x), w)| s * x * w)
                .sum(),
        }
    }

    /// Kernel implied by the feature map, `z(p)ᵀ z(q)`.
    pub fn kernel_estimate(&self, p: &[f64], q: &[f64]) -> f64 {
        self.features(p)
            .iter()
            .zip(self.features(q))
            .map(|(a, b)| a * b)
            .sum()
    }
}

pub fn sample_path(kernel: &KernelSpec, n_features: usize, seed: u64) -> Result<RffSample> {
    RffSample::draw(kernel, n_features, seed)
}
