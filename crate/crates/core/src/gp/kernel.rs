//! Stationary and linear covariance functions over joint (w, x) inputs.
//!
//! A joint point is the concatenation of the previous-stage output `w` and the
//! stage controls `x`. The amplitude multiplies the correlation directly, so
//! `k(p, p) = amplitude` for the stationary kernels.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelKind {
    GaussianArd,
    Linear,
    Matern { nu: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Output-variance scale `σ_f` (not squared).
    pub amplitude: f64,
    /// One lengthscale per previous-output coordinate.
    pub w_lengthscales: Vec<f64>,
    /// One lengthscale per control coordinate.
    pub x_lengthscales: Vec<f64>,
}

impl KernelSpec {
    pub fn new(
        kind: KernelKind,
        amplitude: f64,
        w_lengthscales: Vec<f64>,
        x_lengthscales: Vec<f64>,
    ) -> Result<Self> {
        let spec = Self {
            kind,
            amplitude,
            w_lengthscales,
            x_lengthscales,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(amplitude: f64, w_lengthscales: Vec<f64>, x_lengthscales: Vec<f64>) -> Result<Self> {
        Self::new(KernelKind::GaussianArd, amplitude, w_lengthscales, x_lengthscales)
    }

    /// Gaussian kernel with one shared lengthscale over `w_dim + x_dim` inputs.
    pub fn gaussian_iso(amplitude: f64, lengthscale: f64, w_dim: usize, x_dim: usize) -> Result<Self> {
        Self::gaussian(amplitude, vec![lengthscale; w_dim], vec![lengthscale; x_dim])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(invalid(format!("kernel amplitude must be positive, got {}", self.amplitude)));
        }
        if let Some(l) = self.lengthscales().find(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(invalid(format!("kernel lengthscales must be positive, got {l}")));
        }
        if let KernelKind::Matern { nu } = self.kind {
            if !(nu.is_finite() && nu > 1.0) {
                return Err(invalid(format!("Matern degrees of freedom must exceed 1, got {nu}")));
            }
        }
        Ok(())
    }

    pub fn w_dim(&self) -> usize {
        self.w_lengthscales.len()
    }

    pub fn x_dim(&self) -> usize {
        self.x_lengthscales.len()
    }

    pub fn input_dim(&self) -> usize {
        self.w_dim() + self.x_dim()
    }

    pub fn lengthscales(&self) -> impl Iterator<Item = f64> + '_ {
        self.w_lengthscales.iter().chain(self.x_lengthscales.iter()).copied()
    }

    /// The shared lengthscale when all lengthscales coincide.
    pub fn isotropic_lengthscale(&self) -> Option<f64> {
        let mut it = self.lengthscales();
        let first = it.next()?;
        it.all(|l| l == first).then_some(first)
    }

    pub fn eval(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        let d = self.input_dim();
        if p.len() != d || q.len() != d {
            return Err(invalid(format!(
                "kernel expects {d}-dimensional points, got {} and {}",
                p.len(),
                q.len()
            )));
        }
        Ok(self.eval_unchecked(p, q))
    }

    pub(crate) fn eval_unchecked(&self, p: &[f64], q: &[f64]) -> f64 {
        match self.kind {
            KernelKind::GaussianArd => {
                let r2 = self.scaled_sq_dist(p, q);
                self.amplitude * (-0.5 * r2).exp()
            }
            KernelKind::Linear => {
                let dot: f64 = p
                    .iter()
                    .zip(q)
                    .zip(self.lengthscales())
                    .map(|((a, b), l)| a * b / (l * l))
                    .sum();
                self.amplitude * dot
            }
            KernelKind::Matern { nu } => {
                let r = self.scaled_sq_dist(p, q).sqrt();
                self.amplitude * matern_correlation(nu, r)
            }
        }
    }

    /// Prior variance `k(p, p)`.
    pub(crate) fn diag_unchecked(&self, p: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => self.eval_unchecked(p, p),
            _ => self.amplitude,
        }
    }

    fn scaled_sq_dist(&self, p: &[f64], q: &[f64]) -> f64 {
        p.iter()
            .zip(q)
            .zip(self.lengthscales())
            .map(|((a, b), l)| {
                let d = (a - b) / l;
                d * d
            })
            .sum()
    }

    pub(crate) fn log_params(&self) -> Vec<f64> {
        std::iter::once(self.amplitude.ln())
            .chain(self.lengthscales().map(f64::ln))
            .collect()
    }

    pub(crate) fn with_log_params(&self, theta: &[f64]) -> Self {
        let w = self.w_dim();
        Self {
            kind: self.kind,
            amplitude: theta[0].exp(),
            w_lengthscales: theta[1..1 + w].iter().map(|v| v.exp()).collect(),
            x_lengthscales: theta[1 + w..].iter().map(|v| v.exp()).collect(),
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, p: &[f64], q: &[f64]) -> Result<f64> {
    spec.eval(p, q)
}

/// Matérn correlation at scaled distance `r`, normalised so that it equals 1 at 0.
pub(crate) fn matern_correlation(nu: f64, r: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    let z = (2.0 * nu).sqrt() * r;
    if nu == 1.5 {
        return (1.0 + z) * (-z).exp();
    }
    if nu == 2.5 {
        return (1.0 + z + z * z / 3.0) * (-z).exp();
    }
    let value = 2f64.powf(1.0 - nu) / gamma(nu) * z.powf(nu) * bessel_k(nu, z);
    value.clamp(0.0, 1.0)
}

/// Modified Bessel function of the second kind, `K_ν(z)` for `z > 0`.
///
/// Trapezoidal rule on `∫_0^∞ exp(-z cosh t) cosh(νt) dt`; the integrand is
/// analytic and decays double-exponentially, so the rule converges fast.
pub(crate) fn bessel_k(nu: f64, z: f64) -> f64 {
    debug_assert!(z > 0.0);
    let h = 0.02;
    let term = |t: f64| {
        let c = -z * t.cosh();
        0.5 * ((c + nu * t).exp() + (c - nu * t).exp())
    };
    let mut sum = 0.5 * term(0.0);
    let mut t = h;
    loop {
        let v = term(t);
        sum += v;
        let past_peak = z * t.sinh() > nu;
        if past_peak && v <= 1e-17 * sum {
            break;
        }
        if t > 200.0 {
            break;
        }
        t += h;
    }
    sum * h
}
