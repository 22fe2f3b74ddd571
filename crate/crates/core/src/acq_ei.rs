//! Expected-improvement acquisition for cascades.
//!
//! The utility of running stages `n..=N` from a known previous output is the
//! final-stage EI averaged over Monte-Carlo rollouts of the intermediate
//! stages. Rollouts use fixed standard-normal base samples so the estimate is
//! a deterministic, smooth function of the controls.

use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

use crate::error::Result;
use crate::inner_opt::Maximizer;
use crate::rng::{substream, Stream};
use crate::surrogate::CascadeModel;

const SIGMA_FLOOR: f64 = 1e-12;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `E[(Y − f_best)⁺]` for `Y ~ N(μ, σ²)`.
pub fn ei_scalar(mu: f64, sigma: f64, f_best: f64) -> f64 {
    let diff = mu - f_best;
    if sigma < SIGMA_FLOOR {
        return diff.max(0.0);
    }
    let z = diff / sigma;
    (sigma * normal_pdf(z) + diff * normal_cdf(z)).max(0.0)
}

/// Standard-normal draws for every intermediate stage `1..N−1`.
///
/// Row `s` of stage `m` holds the `M⁽ᵐ⁾` draws of replicate `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseSamples {
    n_samples: usize,
    draws: Vec<Vec<f64>>,
    seed: u64,
}

impl BaseSamples {
    pub fn draw(model: &CascadeModel, n_samples: usize, seed: u64) -> Self {
        let mut rng = substream(seed, Stream::BaseSamples, 0);
        let draws = (1..model.n_stages())
            .map(|m| {
                (0..n_samples * model.stage(m).out_dim())
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect()
            })
            .collect();
        Self {
            n_samples,
            draws,
            seed,
        }
    }

    /// Explicit draws, e.g. quadrature nodes. `draws[m−1]` is row-major `S × M⁽ᵐ⁾`.
    pub fn from_draws(n_samples: usize, draws: Vec<Vec<f64>>) -> Self {
        Self {
            n_samples,
            draws,
            seed: 0,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn row(&self, stage: usize, s: usize, width: usize) -> &[f64] {
        &self.draws[stage - 1][s * width..(s + 1) * width]
    }
}

/// Everything the EI utility needs for one acquisition optimization.
#[derive(Debug, Clone, Copy)]
pub struct EiContext<'a> {
    pub model: &'a CascadeModel,
    pub f_best: f64,
    pub base: &'a BaseSamples,
}

impl<'a> EiContext<'a> {
    pub fn new(model: &'a CascadeModel, f_best: f64, base: &'a BaseSamples) -> Self {
        Self { model, f_best, base }
    }

    /// Monte-Carlo utility of running stages `n..=N` from `y_prev` with the
    /// given per-stage controls.
    pub fn tail_utility(&self, n: usize, y_prev: &[f64], controls: &[&[f64]]) -> Result<f64> {
        self.model.check_prev(n, y_prev)?;
        self.model.check_controls(n, controls)?;
        Ok(self.tail_utility_unchecked(n, y_prev, controls))
    }

    /// Per-replicate final-stage EI values; their mean is `tail_utility`.
    pub fn replicate_values(&self, n: usize, y_prev: &[f64], controls: &[&[f64]]) -> Result<Vec<f64>> {
        self.model.check_prev(n, y_prev)?;
        self.model.check_controls(n, controls)?;
        let mut out = Vec::with_capacity(self.base.n_samples);
        self.rollout(n, y_prev, controls, |v| out.push(v));
        Ok(out)
    }

    pub(crate) fn tail_utility_unchecked(&self, n: usize, y_prev: &[f64], controls: &[&[f64]]) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        self.rollout(n, y_prev, controls, |v| {
            sum += v;
            count += 1;
        });
        sum / count as f64
    }

    fn rollout(&self, n: usize, y_prev: &[f64], controls: &[&[f64]], mut sink: impl FnMut(f64)) {
        let model = self.model;
        let last = model.n_stages();
        let mut joint = Vec::new();
        let mut fin = [0.0];
        if n == last {
            let var = model.predict(last, y_prev, controls[0], &mut joint, &mut fin);
            sink(ei_scalar(fin[0], var.sqrt(), self.f_best));
            return;
        }
        // The first propagated stage sees the same input in every replicate.
        let width = model.stage(n).out_dim();
        let mut first_mean = vec![0.0; width];
        let first_sd = model.predict(n, y_prev, controls[0], &mut joint, &mut first_mean).sqrt();
        let mut cur = Vec::new();
        let mut next = Vec::new();
        for s in 0..self.base.n_samples {
            let omega = self.base.row(n, s, width);
            cur.clear();
            cur.extend(first_mean.iter().zip(omega).map(|(m, o)| m + first_sd * o));
            for m in n + 1..last {
                let w = model.stage(m).out_dim();
                next.resize(w, 0.0);
                let sd = model.predict(m, &cur, controls[m - n], &mut joint, &mut next).sqrt();
                for (v, o) in next.iter_mut().zip(self.base.row(m, s, w)) {
                    *v += sd * o;
                }
                std::mem::swap(&mut cur, &mut next);
            }
            let var = model.predict(last, &cur, controls[last - n], &mut joint, &mut fin);
            sink(ei_scalar(fin[0], var.sqrt(), self.f_best));
        }
    }
}

pub fn tail_utility(ctx: &EiContext<'_>, n: usize, y_prev: &[f64], controls: &[&[f64]]) -> Result<f64> {
    ctx.tail_utility(n, y_prev, controls)
}

/// Result of a joint maximization over the controls of stages `n..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct EiChoice {
    /// Stage-`n` controls, the actual selection.
    pub x: Vec<f64>,
    /// Controls of stages `n+1..=N` at the joint maximizer.
    pub tail: Vec<Vec<f64>>,
    pub value: f64,
}

/// Maximizes `tail_utility` jointly over `x⁽ⁿ⁾, …, x⁽ᴺ⁾`.
pub fn maximize_ei(ctx: &EiContext<'_>, y_prev: &[f64], n: usize, opt: &dyn Maximizer) -> Result<EiChoice> {
    ctx.model.check_prev(n, y_prev)?;
    let bounds = ctx.model.tail_bounds(n);
    let f = |flat: &[f64]| {
        let parts = ctx.model.split_controls(n, flat);
        ctx.tail_utility_unchecked(n, y_prev, &parts)
    };
    let (x, value) = match opt.maximize(&f, &bounds) {
        Ok(m) => (m.x, m.value),
        Err(e) => {
            log::warn!("EI maximization at stage {n} failed ({e}); using the box midpoint");
            let mid = bounds.midpoint();
            let v = f(&mid);
            (mid, v)
        }
    };
    Ok(split_choice(ctx.model, n, &x, value))
}

pub(crate) fn split_choice(model: &CascadeModel, n: usize, flat: &[f64], value: f64) -> EiChoice {
    let mut parts = model.split_controls(n, flat).into_iter().map(<[f64]>::to_vec);
    let x = parts.next().unwrap_or_default();
    EiChoice {
        x,
        tail: parts.collect(),
        value,
    }
}
