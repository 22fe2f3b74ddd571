use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::kernel::KernelSpec;
use crate::error::{invalid, Error, Result};

/// Jitter ladder tried, in order, when `K + σ²I` fails to factorize.
const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Observations for one stage: joint inputs `(w, x)` and vector outputs `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDataset {
    w_dim: usize,
    x_dim: usize,
    out_dim: usize,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl StageDataset {
    pub fn new(w_dim: usize, x_dim: usize, out_dim: usize) -> Self {
        Self {
            w_dim,
            x_dim,
            out_dim,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn push(&mut self, w: &[f64], x: &[f64], y: &[f64]) -> Result<()> {
        if w.len() != self.w_dim || x.len() != self.x_dim || y.len() != self.out_dim {
            return Err(invalid(format!(
                "row dims (w={}, x={}, y={}) do not match dataset dims (w={}, x={}, y={})",
                w.len(),
                x.len(),
                y.len(),
                self.w_dim,
                self.x_dim,
                self.out_dim
            )));
        }
        if w.iter().chain(x).chain(y).any(|v| !v.is_finite()) {
            return Err(invalid("dataset rows must be finite"));
        }
        let mut joint = Vec::with_capacity(self.w_dim + self.x_dim);
        joint.extend_from_slice(w);
        joint.extend_from_slice(x);
        self.inputs.push(joint);
        self.outputs.push(y.to_vec());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn w_dim(&self) -> usize {
        self.w_dim
    }

    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Joint `(w, x)` input of row `i`.
    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i]
    }

    pub fn output(&self, i: usize) -> &[f64] {
        &self.outputs[i]
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    pub fn output_column(&self, m: usize) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.outputs.iter().map(|y| y[m]))
    }
}

/// Predictive mean and variance for every output coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// A fitted GP posterior shared by all output coordinates of one stage.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: KernelSpec,
    noise: f64,
    out_dim: usize,
    inputs: Vec<Vec<f64>>,
    chol: Option<Cholesky<f64, Dyn>>,
    alphas: Vec<DVector<f64>>,
    jitter: f64,
}

pub(crate) fn kernel_matrix(kernel: &KernelSpec, inputs: &[Vec<f64>]) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval_unchecked(&inputs[i], &inputs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Factorizes `K + σ²I`, escalating diagonal jitter on failure.
pub(crate) fn factorize(kernel: &KernelSpec, inputs: &[Vec<f64>], noise: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut k = kernel_matrix(kernel, inputs);
    for i in 0..k.nrows() {
        k[(i, i)] += noise;
    }
    for &jitter in &JITTER_LADDER {
        let mut m = k.clone();
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, jitter));
        }
    }
    let diag = k.diagonal();
    Err(Error::NumericalFailure {
        size: k.nrows(),
        jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
        min_diag: diag.min(),
        max_diag: diag.max(),
    })
}

fn check_inputs(data: &StageDataset, kernel: &KernelSpec, noise: f64) -> Result<()> {
    kernel.validate()?;
    if !(noise.is_finite() && noise > 0.0) {
        return Err(invalid(format!("GP noise variance must be positive, got {noise}")));
    }
    if kernel.w_dim() != data.w_dim() || kernel.x_dim() != data.x_dim() {
        return Err(invalid(format!(
            "kernel dims (w={}, x={}) do not match data dims (w={}, x={})",
            kernel.w_dim(),
            kernel.x_dim(),
            data.w_dim(),
            data.x_dim()
        )));
    }
    Ok(())
}

impl GpPosterior {
    /// The unconditioned prior: zero mean, variance `k(p, p)`.
    pub fn prior(kernel: KernelSpec, noise: f64, out_dim: usize) -> Self {
        Self {
            kernel,
            noise,
            out_dim,
            inputs: Vec::new(),
            chol: None,
            alphas: Vec::new(),
            jitter: 0.0,
        }
    }

    pub fn fit(data: &StageDataset, kernel: &KernelSpec, noise: f64) -> Result<Self> {
        check_inputs(data, kernel, noise)?;
        if data.is_empty() {
            return Ok(Self::prior(kernel.clone(), noise, data.out_dim()));
        }
        let (chol, jitter) = factorize(kernel, data.inputs(), noise)?;
        let alphas = (0..data.out_dim())
            .map(|m| chol.solve(&data.output_column(m)))
            .collect();
        Ok(Self {
            kernel: kernel.clone(),
            noise,
            out_dim: data.out_dim(),
            inputs: data.inputs().to_vec(),
            chol: Some(chol),
            alphas,
            jitter,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// Diagonal jitter that was added beyond `σ²` to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn w_dim(&self) -> usize {
        self.kernel.w_dim()
    }

    pub fn x_dim(&self) -> usize {
        self.kernel.x_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.kernel.input_dim()
    }

    pub fn n_train(&self) -> usize {
        self.inputs.len()
    }

    /// Lower-triangular factor of `K + (σ² + jitter)I`, absent for the prior.
    pub fn cholesky_factor(&self) -> Option<DMatrix<f64>> {
        self.chol.as_ref().map(|c| c.l())
    }

    pub fn predict(&self, p: &[f64]) -> Result<Prediction> {
        if p.len() != self.input_dim() {
            return Err(invalid(format!(
                "query has dimension {}, posterior expects {}",
                p.len(),
                self.input_dim()
            )));
        }
        let mut mean = vec![0.0; self.out_dim];
        let var = self.predict_into(p, &mut mean);
        Ok(Prediction {
            mean,
            var: vec![var; self.out_dim],
        })
    }

    /// Writes the per-output means into `mean` and returns the shared variance.
    ///
    /// Variance is clipped at zero; it is identical across outputs because the
    /// outputs share one kernel and one set of training inputs.
    pub(crate) fn predict_into(&self, p: &[f64], mean: &mut [f64]) -> f64 {
        let prior = self.kernel.diag_unchecked(p);
        let Some(chol) = &self.chol else {
            mean.iter_mut().for_each(|m| *m = 0.0);
            return prior.max(0.0);
        };
        let n = self.inputs.len();
        let kvec: Vec<f64> = self
            .inputs
            .iter()
            .map(|xi| self.kernel.eval_unchecked(p, xi))
            .collect();
        for (m, alpha) in mean.iter_mut().zip(&self.alphas) {
            *m = kvec.iter().zip(alpha.iter()).map(|(a, b)| a * b).sum();
        }
        // forward substitution v = L⁻¹ k
        let l = chol.l_dirty();
        let mut v = kvec;
        let mut quad = 0.0;
        for i in 0..n {
            let mut s = v[i];
            for j in 0..i {
                s -= l[(i, j)] * v[j];
            }
            s /= l[(i, i)];
            v[i] = s;
            quad += s * s;
        }
        (prior - quad).max(0.0)
    }

    /// Mean and standard deviation of a scalar-output posterior.
    pub(crate) fn mean_std_scalar(&self, p: &[f64]) -> (f64, f64) {
        let mut m = [0.0];
        let var = self.predict_into(p, &mut m[..self.out_dim.min(1)]);
        (m[0], var.sqrt())
    }
}

pub fn fit_posterior(data: &StageDataset, kernel: &KernelSpec, noise: f64) -> Result<GpPosterior> {
    GpPosterior::fit(data, kernel, noise)
}

pub fn posterior_mean_var(gp: &GpPosterior, p: &[f64]) -> Result<Prediction> {
    gp.predict(p)
}

/// GP evidence summed over the independent output coordinates.
pub fn log_marginal_likelihood(data: &StageDataset, kernel: &KernelSpec, noise: f64) -> Result<f64> {
    check_inputs(data, kernel, noise)?;
    if data.is_empty() {
        return Ok(0.0);
    }
    let (chol, _) = factorize(kernel, data.inputs(), noise)?;
    Ok(lml_from_factor(&chol, data))
}

pub(crate) fn lml_from_factor(chol: &Cholesky<f64, Dyn>, data: &StageDataset) -> f64 {
    let n = data.len() as f64;
    let m = data.out_dim() as f64;
    let half_log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let fit: f64 = (0..data.out_dim())
        .map(|j| {
            let y = data.output_column(j);
            let alpha = chol.solve(&y);
            y.dot(&alpha)
        })
        .sum();
    -0.5 * fit - m * half_log_det - 0.5 * n * m * (2.0 * std::f64::consts::PI).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_point(y: f64) -> StageDataset {
        let mut d = StageDataset::new(0, 1, 1);
        d.push(&[], &[0.0], &[y]).unwrap();
        d
    }

    #[test]
    fn empty_data_is_prior() {
        let k = KernelSpec::gaussian(3.0, vec![1.0], vec![1.0]).unwrap();
        let gp = GpPosterior::fit(&StageDataset::new(1, 1, 2), &k, 1e-4).unwrap();
        let p = gp.predict(&[0.4, -2.0]).unwrap();
        assert_eq!(p.mean, vec![0.0, 0.0]);
        assert_eq!(p.var, vec![3.0, 3.0]);
    }

    #[test]
    fn single_point_variance() {
        let k = KernelSpec::gaussian(1.0, vec![], vec![1.0]).unwrap();
        let s2 = 1e-4;
        let gp = GpPosterior::fit(&one_point(0.7), &k, s2).unwrap();
        let p = gp.predict(&[0.0]).unwrap();
        // 1 - 1/(1+σ²) = σ²/(1+σ²)
        assert_relative_eq!(p.var[0], s2 / (1.0 + s2), max_relative = 1e-8);
        assert_relative_eq!(p.var[0], 9.999e-5, max_relative = 1e-4);
        assert_relative_eq!(p.mean[0], 0.7 / (1.0 + s2), max_relative = 1e-12);
    }

    #[test]
    fn lml_scalar_case() {
        let k = KernelSpec::gaussian(1.0, vec![], vec![1.0]).unwrap();
        let lml = log_marginal_likelihood(&one_point(0.0), &k, 1.0).unwrap();
        let expected = -0.5 * 2f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(lml, expected, epsilon = 1e-14);
    }

    #[test]
    fn lml_of_empty_is_zero() {
        let k = KernelSpec::gaussian(1.0, vec![], vec![1.0]).unwrap();
        assert_eq!(log_marginal_likelihood(&StageDataset::new(0, 1, 1), &k, 1e-4).unwrap(), 0.0);
    }

    #[test]
    fn dataset_rejects_bad_rows() {
        let mut d = StageDataset::new(1, 2, 1);
        assert!(d.push(&[0.0], &[1.0], &[0.0]).is_err());
        assert!(d.push(&[0.0], &[1.0, f64::NAN], &[0.0]).is_err());
        assert!(d.push(&[0.0], &[1.0, 2.0], &[0.0]).is_ok());
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn duplicate_points_need_no_failure() {
        // Duplicates with tiny noise stay positive definite thanks to σ² (and jitter if needed).
        let k = KernelSpec::gaussian(1.0, vec![], vec![1.0]).unwrap();
        let mut d = StageDataset::new(0, 1, 1);
        for _ in 0..5 {
            d.push(&[], &[0.3], &[1.0]).unwrap();
        }
        let gp = GpPosterior::fit(&d, &k, 1e-12).unwrap();
        let p = gp.predict(&[0.3]).unwrap();
        assert!(p.var[0] >= 0.0 && p.mean[0].is_finite());
    }

    #[test]
    fn nonpositive_noise_rejected() {
        let k = KernelSpec::gaussian(1.0, vec![], vec![1.0]).unwrap();
        assert!(GpPosterior::fit(&one_point(1.0), &k, 0.0).is_err());
    }
}
