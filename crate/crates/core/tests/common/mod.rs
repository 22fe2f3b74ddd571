//! Fixtures shared by the integration tests: a small two-stage cascade whose
//! controls live on a lattice, plus independent numerical oracles.
#![allow(dead_code)]

use std::sync::Arc;

use cascade_bo::cascade::{CascadeSpec, EvalRecord, ObservationLog, StageSpec};
use cascade_bo::gp::{GpPosterior, KernelSpec, StageDataset, DEFAULT_NOISE};
use cascade_bo::inner_opt::{Bounds, GridSearch};
use cascade_bo::surrogate::CascadeModel;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Lattice nodes per control coordinate of the toy cascade.
pub const TOY_GRID: usize = 21;

pub fn toy_stage1(x: f64) -> f64 {
    0.8 * (2.0 * x).sin()
}

pub fn toy_stage2(w: f64, x: f64) -> f64 {
    -(w - 0.3).powi(2) - (x - 0.5 * w).powi(2) + 0.2 * (3.0 * x).cos()
}

/// `y = 0.8 sin 2x`, then `F = −(y − 0.3)² − (x₂ − y/2)² + 0.2 cos 3x₂`, both controls in `[−1, 1]`.
pub fn toy_cascade() -> CascadeSpec {
    let b = Bounds::cube(1, -1.0, 1.0).unwrap();
    CascadeSpec::new(vec![
        StageSpec::new(b.clone(), 0, 1, Arc::new(|_, x| vec![toy_stage1(x[0])])).unwrap(),
        StageSpec::new(b, 1, 1, Arc::new(|w, x| vec![toy_stage2(w[0], x[0])])).unwrap(),
    ])
    .unwrap()
}

pub fn toy_grid() -> GridSearch {
    GridSearch::new(TOY_GRID)
}

pub fn toy_nodes() -> Vec<f64> {
    toy_grid().axis(&Bounds::cube(1, -1.0, 1.0).unwrap(), 0)
}

pub fn toy_kernels() -> [KernelSpec; 2] {
    [
        KernelSpec::gaussian(1.0, vec![], vec![0.5]).unwrap(),
        KernelSpec::gaussian(1.0, vec![0.5], vec![0.5]).unwrap(),
    ]
}

/// Largest `|∂F/∂y|` over the reachable outputs and the control lattice.
pub fn toy_lf() -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..=400 {
        let w = -0.8 + 1.6 * i as f64 / 400.0;
        for x in toy_nodes() {
            let g = -2.0 * (w - 0.3) + (x - 0.5 * w);
            best = best.max(g.abs());
        }
    }
    best
}

/// Brute-force `(F*, x₁, x₂)` over the lattice.
pub fn toy_optimum() -> (f64, f64, f64) {
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for x1 in toy_nodes() {
        let v = toy_reachable(toy_stage1(x1));
        if v.0 > best.0 {
            best = (v.0, x1, v.1);
        }
    }
    best
}

/// Best final value reachable from an intermediate output, and its control.
pub fn toy_reachable(w: f64) -> (f64, f64) {
    toy_nodes()
        .into_iter()
        .map(|x| (toy_stage2(w, x), x))
        .fold((f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 { b } else { a })
}

/// Runs full cascades at the given lattice controls and logs every stage.
pub fn toy_log(spec: &CascadeSpec, controls: &[(f64, f64)]) -> ObservationLog {
    let mut log = ObservationLog::new(spec);
    for &(x1, x2) in controls {
        let y = spec.eval_stage(1, &[], &[x1]).unwrap();
        let f = spec.eval_stage(2, &y, &[x2]).unwrap();
        log.append(EvalRecord::new(0, 1, vec![], vec![x1], y.clone())).unwrap();
        log.append(EvalRecord::new(0, 2, y, vec![x2], f)).unwrap();
    }
    log
}

pub fn toy_model(log: &ObservationLog) -> CascadeModel {
    let k = toy_kernels();
    CascadeModel::new(
        vec![
            GpPosterior::fit(log.dataset(1), &k[0], DEFAULT_NOISE).unwrap(),
            GpPosterior::fit(log.dataset(2), &k[1], DEFAULT_NOISE).unwrap(),
        ],
        vec![Bounds::cube(1, -1.0, 1.0).unwrap(); 2],
    )
    .unwrap()
}

/// Gaussian kernel written out directly.
pub fn oracle_kernel(amplitude: f64, lengthscales: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let r2: f64 = p
        .iter()
        .zip(q)
        .zip(lengthscales)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum();
    amplitude * (-0.5 * r2).exp()
}

/// Posterior by LU solves on `K + sI`: per-output means, shared variance, log evidence.
pub struct DenseOracle {
    pub means: Vec<f64>,
    pub var: f64,
}

pub fn dense_gram(amplitude: f64, ls: &[f64], data: &StageDataset, diag: f64) -> DMatrix<f64> {
    let n = data.len();
    DMatrix::from_fn(n, n, |i, j| {
        oracle_kernel(amplitude, ls, data.input(i), data.input(j)) + if i == j { diag } else { 0.0 }
    })
}

pub fn dense_predict(amplitude: f64, ls: &[f64], data: &StageDataset, diag: f64, p: &[f64]) -> DenseOracle {
    let a = dense_gram(amplitude, ls, data, diag);
    let lu = a.lu();
    let k = DVector::from_iterator(data.len(), (0..data.len()).map(|i| oracle_kernel(amplitude, ls, p, data.input(i))));
    let means = (0..data.out_dim())
        .map(|m| {
            let y = data.output_column(m);
            k.dot(&lu.solve(&y).unwrap())
        })
        .collect();
    let var = amplitude - k.dot(&lu.solve(&k).unwrap());
    DenseOracle { means, var }
}

pub fn dense_lml(amplitude: f64, ls: &[f64], data: &StageDataset, diag: f64) -> f64 {
    let a = dense_gram(amplitude, ls, data, diag);
    let n = data.len() as f64;
    let lu = a.clone().lu();
    let log_det = lu.determinant().ln();
    (0..data.out_dim())
        .map(|m| {
            let y = data.output_column(m);
            -0.5 * y.dot(&lu.solve(&y).unwrap()) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
        })
        .sum()
}

/// Probabilists' Gauss–Hermite rule (weights sum to one) by Golub–Welsch.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut rule: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

/// `E[(X − f)⁺]` for `X ~ N(μ, σ²)` by composite Simpson on the standardized tail.
pub fn ei_quadrature(mu: f64, sigma: f64, f_best: f64) -> f64 {
    let z0 = (f_best - mu) / sigma;
    let hi = z0.max(0.0) + 14.0;
    let n = 40_000;
    let h = (hi - z0) / n as f64;
    let g = |z: f64| (z - z0) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = g(z0) + g(hi);
    for i in 1..n {
        let z = z0 + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(z);
    }
    sigma * s * h / 3.0
}
