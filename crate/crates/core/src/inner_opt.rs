//! Bound-constrained maximization shared by every acquisition surface.
//!
//! The default maximizer seeds with a Latin hypercube, refines the best few
//! candidates with a loose tolerance and then polishes the single best one.
//! Refinement is a projected quasi-Newton (BFGS) ascent with central
//! finite-difference gradients, falling back to a coordinate pattern search
//! whenever the line search stalls. Only improving steps are accepted, so the
//! reported value is never below the best space-filling candidate.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{substream, Stream};

/// Axis-aligned box `[lower, upper]`. Degenerate coordinates (`lower == upper`) are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(invalid("lower and upper bounds differ in length"));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite()) || l > u {
                return Err(invalid(format!("invalid interval [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn empty() -> Self {
        Self {
            lower: Vec::new(),
            upper: Vec::new(),
        }
    }

    /// Cartesian product, coordinates in order.
    pub fn product<'a>(parts: impl IntoIterator<Item = &'a Bounds>) -> Self {
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for b in parts {
            lower.extend_from_slice(&b.lower);
            upper.extend_from_slice(&b.upper);
        }
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Uniform draw from the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let u: f64 = rng.random();
                self.lower[i] + u * self.width(i)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptBudget {
    pub n_space_filling: usize,
    pub n_top: usize,
    pub coarse_tol: f64,
    pub fine_tol: f64,
    pub max_refine_steps: usize,
    /// Hard cap on objective evaluations spent in refinement.
    pub max_evals: usize,
    pub seed: u64,
}

impl Default for OptBudget {
    fn default() -> Self {
        Self {
            n_space_filling: 1000,
            n_top: 5,
            coarse_tol: 1e-3,
            fine_tol: 2.2e-9,
            max_refine_steps: 100,
            max_evals: 2000,
            seed: 0,
        }
    }
}

impl OptBudget {
    /// Reduced budget used for nested maximizations inside other objectives.
    pub fn nested(seed: u64) -> Self {
        Self {
            n_space_filling: 200,
            n_top: 3,
            max_evals: 600,
            seed,
            ..Self::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_space_filling == 0 {
            return Err(invalid("n_space_filling must be at least 1"));
        }
        if self.n_top == 0 || self.n_top > self.n_space_filling {
            return Err(invalid(format!(
                "n_top must lie in 1..={}, got {}",
                self.n_space_filling, self.n_top
            )));
        }
        if !(self.coarse_tol > 0.0 && self.fine_tol > 0.0) {
            return Err(invalid("refinement tolerances must be positive"));
        }
        Ok(())
    }
}

/// Result of a maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct Maximum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

pub type Objective<'a> = dyn Fn(&[f64]) -> f64 + 'a;

/// Anything able to maximize a scalar objective over a box.
pub trait Maximizer {
    fn maximize(&self, f: &Objective<'_>, bounds: &Bounds) -> Result<Maximum>;
}

impl Maximizer for OptBudget {
    fn maximize(&self, f: &Objective<'_>, bounds: &Bounds) -> Result<Maximum> {
        maximize(f, bounds, self)
    }
}

/// Exhaustive search over the regular lattice with `points_per_dim` nodes per
/// coordinate (endpoints included). Ties go to the first node in
/// lexicographic order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSearch {
    pub points_per_dim: usize,
}

impl GridSearch {
    pub fn new(points_per_dim: usize) -> Self {
        Self { points_per_dim }
    }

    /// Node values of coordinate `i`.
    pub fn axis(&self, bounds: &Bounds, i: usize) -> Vec<f64> {
        let w = bounds.width(i);
        if w == 0.0 || self.points_per_dim == 1 {
            return vec![bounds.lower()[i] + if self.points_per_dim == 1 { 0.5 * w } else { 0.0 }];
        }
        let k = self.points_per_dim;
        (0..k)
            .map(|j| {
                if j + 1 == k {
                    bounds.upper()[i]
                } else {
                    bounds.lower()[i] + w * j as f64 / (k - 1) as f64
                }
            })
            .collect()
    }

    /// All lattice nodes in lexicographic order (last coordinate fastest).
    pub fn nodes(&self, bounds: &Bounds) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..bounds.dim()).map(|i| self.axis(bounds, i)).collect();
        let mut out = vec![Vec::with_capacity(bounds.dim())];
        for axis in &axes {
            let mut next = Vec::with_capacity(out.len() * axis.len());
            for prefix in &out {
                for v in axis {
                    let mut p = prefix.clone();
                    p.push(*v);
                    next.push(p);
                }
            }
            out = next;
        }
        out
    }
}

impl Maximizer for GridSearch {
    fn maximize(&self, f: &Objective<'_>, bounds: &Bounds) -> Result<Maximum> {
        if self.points_per_dim == 0 {
            return Err(invalid("grid needs at least one point per dimension"));
        }
        let total = (self.points_per_dim as f64).powi(bounds.dim() as i32);
        if total > 5e6 {
            return Err(invalid(format!("grid of {total} nodes is too large")));
        }
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut evaluations = 0;
        for node in self.nodes(bounds) {
            let v = f(&node);
            evaluations += 1;
            if v.is_finite() && best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((node, v));
            }
        }
        let (x, value) =
            best.ok_or_else(|| Error::OptimizerFailure("objective non-finite at every grid node".into()))?;
        Ok(Maximum { x, value, evaluations })
    }
}

/// Latin hypercube design: each coordinate has exactly one point per stratum
/// `[l + i(u-l)/n, l + (i+1)(u-l)/n)`.
pub fn lhs_sample<R: Rng + ?Sized>(bounds: &Bounds, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let d = bounds.dim();
    let mut points = vec![vec![0.0; d]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..d {
        strata.shuffle(rng);
        let w = bounds.width(j);
        for (i, p) in points.iter_mut().enumerate() {
            let u: f64 = rng.random();
            let v = bounds.lower()[j] + w * (strata[i] as f64 + u) / n as f64;
            // guard against rounding onto the next stratum's edge
            p[j] = v.min(bounds.upper()[j]);
        }
    }
    points
}

pub fn lhs_sample_seeded(bounds: &Bounds, n: usize, seed: u64) -> Vec<Vec<f64>> {
    lhs_sample(bounds, n, &mut substream(seed, Stream::Optimizer, 0))
}

struct Counter<'a, 'f> {
    f: &'a Objective<'f>,
    evals: usize,
    cap: usize,
}

impl Counter<'_, '_> {
    fn exhausted(&self) -> bool {
        self.evals >= self.cap
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct RefineTol {
    ftol: f64,
    gtol: f64,
    max_steps: usize,
}

fn fd_gradient(c: &mut Counter<'_, '_>, bounds: &Bounds, x: &[f64], fx: f64) -> Vec<f64> {
    let d = x.len();
    let mut g = vec![0.0; d];
    let mut probe = x.to_vec();
    for i in 0..d {
        let w = bounds.width(i);
        if w == 0.0 {
            continue;
        }
        let h = 1e-6 * w;
        let up = x[i] + h <= bounds.upper()[i];
        let down = x[i] - h >= bounds.lower()[i];
        g[i] = match (up, down) {
            (true, true) => {
                probe[i] = x[i] + h;
                let fp = c.eval(&probe);
                probe[i] = x[i] - h;
                let fm = c.eval(&probe);
                (fp - fm) / (2.0 * h)
            }
            (true, false) => {
                probe[i] = x[i] + h;
                (c.eval(&probe) - fx) / h
            }
            (false, true) => {
                probe[i] = x[i] - h;
                (fx - c.eval(&probe)) / h
            }
            (false, false) => 0.0,
        };
        if !g[i].is_finite() {
            g[i] = 0.0;
        }
        probe[i] = x[i];
    }
    g
}

/// Zero gradient components that push against an active bound.
fn project(bounds: &Bounds, x: &[f64], v: &mut [f64]) {
    for i in 0..x.len() {
        if bounds.width(i) == 0.0
            || (x[i] <= bounds.lower()[i] && v[i] < 0.0)
            || (x[i] >= bounds.upper()[i] && v[i] > 0.0)
        {
            v[i] = 0.0;
        }
    }
}

fn pattern_search(
    c: &mut Counter<'_, '_>,
    bounds: &Bounds,
    mut x: Vec<f64>,
    mut fx: f64,
    tol: f64,
) -> (Vec<f64>, f64) {
    let d = x.len();
    let mut step: Vec<f64> = (0..d).map(|i| 0.1 * bounds.width(i)).collect();
    let min_rel = tol.clamp(1e-9, 1e-3);
    loop {
        if c.exhausted() {
            break;
        }
        let mut improved = false;
        for i in 0..d {
            if step[i] == 0.0 {
                continue;
            }
            for dir in [1.0, -1.0] {
                let mut trial = x.clone();
                trial[i] = (x[i] + dir * step[i]).clamp(bounds.lower()[i], bounds.upper()[i]);
                if trial[i] == x[i] {
                    continue;
                }
                let ft = c.eval(&trial);
                if ft > fx {
                    x = trial;
                    fx = ft;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            let mut active = false;
            for (i, s) in step.iter_mut().enumerate() {
                *s *= 0.5;
                if *s > min_rel * bounds.width(i) {
                    active = true;
                }
            }
            if !active {
                break;
            }
        }
    }
    (x, fx)
}

fn refine(
    c: &mut Counter<'_, '_>,
    bounds: &Bounds,
    x0: &[f64],
    f0: f64,
    tol: RefineTol,
) -> (Vec<f64>, f64) {
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f0;
    if d == 0 || !fx.is_finite() {
        return (x, fx);
    }
    let max_width = (0..d).map(|i| bounds.width(i)).fold(0.0, f64::max);
    if max_width == 0.0 {
        return (x, fx);
    }
    let mut g = fd_gradient(c, bounds, &x, fx);
    let identity = || {
        let mut h = vec![vec![0.0; d]; d];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        h
    };
    let mut h = identity();
    let mut fresh = true;
    for _ in 0..tol.max_steps {
        if c.exhausted() {
            break;
        }
        let mut pg = g.clone();
        project(bounds, &x, &mut pg);
        let pg_norm = (0..d).map(|i| (pg[i] * bounds.width(i)).abs()).fold(0.0, f64::max);
        if pg_norm <= tol.gtol * fx.abs().max(1.0) {
            break;
        }
        let mut dir: Vec<f64> = (0..d).map(|i| (0..d).map(|j| h[i][j] * pg[j]).sum()).collect();
        project(bounds, &x, &mut dir);
        let slope: f64 = dir.iter().zip(&pg).map(|(a, b)| a * b).sum();
        if !(slope > 0.0) {
            h = identity();
            fresh = true;
            dir = pg.clone();
        }
        let dir_inf = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if dir_inf == 0.0 {
            break;
        }
        let mut alpha = if fresh { (0.1 * max_width / dir_inf).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..30 {
            if c.exhausted() {
                break;
            }
            let mut xn: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + alpha * b).collect();
            bounds.clamp(&mut xn);
            let gain: f64 = g.iter().zip(xn.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            let fxn = c.eval(&xn);
            if fxn > fx && fxn >= fx + 1e-4 * gain {
                accepted = Some((xn, fxn));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            if !fresh {
                h = identity();
                fresh = true;
                continue;
            }
            return pattern_search(c, bounds, x, fx, tol.ftol);
        };
        let gn = fd_gradient(c, bounds, &xn, fxn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // curvature pair for minimizing -f
        let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            let hy: Vec<f64> = (0..d).map(|i| (0..d).map(|j| h[i][j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let rho = 1.0 / sy;
            for i in 0..d {
                for j in 0..d {
                    h[i][j] += (1.0 + yhy * rho) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
            fresh = false;
        }
        let rel = (fxn - fx) / fx.abs().max(fxn.abs()).max(1.0);
        x = xn;
        fx = fxn;
        g = gn;
        if rel <= tol.ftol {
            break;
        }
    }
    (x, fx)
}

/// Multi-start maximization: Latin-hypercube candidates, coarse refinement of
/// the top `n_top`, fine refinement of the best.
pub fn maximize(f: &Objective<'_>, bounds: &Bounds, budget: &OptBudget) -> Result<Maximum> {
    budget.validate()?;
    if bounds.dim() == 0 {
        let value = f(&[]);
        if !value.is_finite() {
            return Err(Error::OptimizerFailure("objective is non-finite".into()));
        }
        return Ok(Maximum {
            x: Vec::new(),
            value,
            evaluations: 1,
        });
    }
    let candidates = lhs_sample_seeded(bounds, budget.n_space_filling, budget.seed);
    let mut scored: Vec<(usize, f64)> = candidates
        .iter()
        .enumerate()
        .map(|(i, x)| (i, f(x)))
        .filter(|(_, v)| v.is_finite())
        .collect();
    if scored.is_empty() {
        return Err(Error::OptimizerFailure(
            "objective non-finite at every space-filling candidate".into(),
        ));
    }
    let seeding_evals = candidates.len();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let top = &scored[..budget.n_top.min(scored.len())];

    let per_start = (budget.max_evals / (top.len() + 1)).max(1);
    let coarse = RefineTol {
        ftol: budget.coarse_tol,
        gtol: budget.coarse_tol,
        max_steps: budget.max_refine_steps,
    };
    let mut used = 0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for &(idx, v) in top {
        let mut c = Counter {
            f,
            evals: 0,
            cap: per_start,
        };
        let (x, fx) = refine(&mut c, bounds, &candidates[idx], v, coarse);
        used += c.evals;
        if best.as_ref().is_none_or(|(_, b)| fx > *b) {
            best = Some((x, fx));
        }
    }
    let (bx, bv) = best.expect("at least one start");
    let mut c = Counter {
        f,
        evals: 0,
        cap: budget.max_evals.saturating_sub(used).max(1),
    };
    let fine = RefineTol {
        ftol: budget.fine_tol,
        gtol: 1e-5,
        max_steps: budget.max_refine_steps,
    };
    let (x, value) = refine(&mut c, bounds, &bx, bv, fine);
    used += c.evals;
    debug_assert!(bounds.contains(&x));
    Ok(Maximum {
        x,
        value,
        evaluations: seeding_evals + used,
    })
}

/// Local refinement from a single start; used where the caller supplies its
/// own starting points (hyperparameter restarts).
pub(crate) fn refine_from(
    f: &Objective<'_>,
    bounds: &Bounds,
    x0: &[f64],
    tol: f64,
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let mut c = Counter {
        f,
        evals: 0,
        cap: max_evals,
    };
    let f0 = c.eval(x0);
    refine(
        &mut c,
        bounds,
        x0,
        f0,
        RefineTol {
            ftol: tol,
            gtol: tol,
            max_steps: 200,
        },
    )
}
