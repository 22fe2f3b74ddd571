//! Credible-interval bounds for cascades and the acquisition built on them.
//!
//! Uncertainty is pushed through the chain along the posterior-mean path:
//! each stage adds its own posterior standard deviation plus a Lipschitz
//! multiple of the summed uncertainty of its input.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gp::{KernelKind, KernelSpec};
use crate::inner_opt::{lhs_sample_seeded, Bounds, Maximizer, Maximum};
use crate::surrogate::CascadeModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CiParams {
    /// Width multiplier on the propagated standard deviation.
    pub beta_sqrt: f64,
    /// Lipschitz constant assumed for every stage.
    pub lf: f64,
    /// Scale of the exploration floor `η_t = c_eta / (1 + ln t)`.
    pub c_eta: f64,
}

impl Default for CiParams {
    fn default() -> Self {
        Self {
            beta_sqrt: 2.0,
            lf: 1.0,
            c_eta: 1e-4,
        }
    }
}

impl CiParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta_sqrt", self.beta_sqrt), ("lf", self.lf), ("c_eta", self.c_eta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn eta(&self, t: usize) -> f64 {
        self.c_eta / (1.0 + (t.max(1) as f64).ln())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiBounds {
    /// Propagated means, one vector per stage from the starting stage on.
    pub means: Vec<Vec<f64>>,
    /// Propagated standard deviations, per stage and output coordinate.
    pub sigmas: Vec<Vec<f64>>,
    pub lcb: f64,
    pub ucb: f64,
}

impl CiBounds {
    pub fn final_mean(&self) -> f64 {
        self.means.last().map_or(0.0, |m| m[0])
    }

    pub fn final_sigma(&self) -> f64 {
        self.sigmas.last().map_or(0.0, |s| s[0])
    }
}

/// Runs the recursion from stage `n` (fed `y_prev`) through stage
/// `n + controls.len() − 1`.
pub fn ci_recursion(
    model: &CascadeModel,
    n: usize,
    y_prev: &[f64],
    controls: &[&[f64]],
    params: &CiParams,
) -> Result<CiBounds> {
    model.check_prev(n, y_prev)?;
    if controls.is_empty() || n + controls.len() - 1 > model.n_stages() {
        return Err(invalid(format!(
            "{} control vectors do not fit stages starting at {n}",
            controls.len()
        )));
    }
    for (i, x) in controls.iter().enumerate() {
        if x.len() != model.control_box(n + i).dim() {
            return Err(invalid(format!("stage {} control has the wrong dimension", n + i)));
        }
    }
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(controls.len());
    let mut sigmas: Vec<Vec<f64>> = Vec::with_capacity(controls.len());
    let mut joint = Vec::new();
    for (i, x) in controls.iter().enumerate() {
        let m = n + i;
        let mut mean = vec![0.0; model.stage(m).out_dim()];
        let w: &[f64] = if i == 0 { y_prev } else { &means[i - 1] };
        let sd = model.predict(m, w, x, &mut joint, &mut mean).sqrt();
        let carried = sigmas.last().map_or(0.0, |prev| params.lf * prev.iter().sum::<f64>());
        sigmas.push(vec![sd + carried; mean.len()]);
        means.push(mean);
    }
    let mu = means.last().expect("nonempty")[0];
    let sigma = sigmas.last().expect("nonempty")[0];
    Ok(CiBounds {
        means,
        sigmas,
        lcb: mu - params.beta_sqrt * sigma,
        ucb: mu + params.beta_sqrt * sigma,
    })
}

/// Final `(μ̃, σ̃)` over stages `n..=N` without bookkeeping.
pub(crate) fn chain_mean_sigma(
    model: &CascadeModel,
    n: usize,
    y_prev: &[f64],
    controls: &[&[f64]],
    lf: f64,
) -> (f64, f64) {
    let mut joint = Vec::new();
    let mut cur = y_prev.to_vec();
    let mut next = Vec::new();
    let mut carried = 0.0;
    for (i, x) in controls.iter().enumerate() {
        let m = n + i;
        let width = model.stage(m).out_dim();
        next.resize(width, 0.0);
        let sd = model.predict(m, &cur, x, &mut joint, &mut next).sqrt();
        let sigma = sd + carried;
        carried = lf * sigma * width as f64;
        std::mem::swap(&mut cur, &mut next);
        if i + 1 == controls.len() {
            return (cur[0], sigma);
        }
    }
    unreachable!("controls is nonempty")
}

/// `(LCB, UCB)` of the final output for fixed controls of stages `n..=N`.
pub fn lcb_ucb(
    model: &CascadeModel,
    n: usize,
    y_prev: &[f64],
    controls: &[&[f64]],
    params: &CiParams,
) -> Result<(f64, f64)> {
    model.check_controls(n, controls)?;
    let b = ci_recursion(model, n, y_prev, controls, params)?;
    Ok((b.lcb, b.ucb))
}

/// Which functional of the final-stage interval a tail maximization targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Lcb,
    Ucb,
    Sigma,
}

impl Surface {
    fn pick(self, mu: f64, sigma: f64, beta_sqrt: f64) -> f64 {
        match self {
            Surface::Lcb => mu - beta_sqrt * sigma,
            Surface::Ucb => mu + beta_sqrt * sigma,
            Surface::Sigma => sigma,
        }
    }
}

/// Maximizes `surface` over the controls of stages `n..=N`, starting from `y_prev`.
pub fn maximize_surface(
    model: &CascadeModel,
    n: usize,
    y_prev: &[f64],
    surface: Surface,
    params: &CiParams,
    opt: &dyn Maximizer,
) -> Result<Maximum> {
    model.check_prev(n, y_prev)?;
    let bounds = model.tail_bounds(n);
    let f = |flat: &[f64]| {
        let parts = model.split_controls(n, flat);
        let (mu, s) = chain_mean_sigma(model, n, y_prev, &parts, params.lf);
        surface.pick(mu, s, params.beta_sqrt)
    };
    opt.maximize(&f, &bounds)
}

/// Maximizes `surface` over stages `n+1..=N` with `x⁽ⁿ⁾` fixed.
pub fn maximize_surface_given_x(
    model: &CascadeModel,
    n: usize,
    y_prev: &[f64],
    x_n: &[f64],
    surface: Surface,
    params: &CiParams,
    opt: &dyn Maximizer,
) -> Result<Maximum> {
    model.check_prev(n, y_prev)?;
    if x_n.len() != model.control_box(n).dim() {
        return Err(invalid(format!("stage {n} control has the wrong dimension")));
    }
    let bounds = if n == model.n_stages() {
        Bounds::empty()
    } else {
        model.tail_bounds(n + 1)
    };
    let f = |flat: &[f64]| {
        let mut parts = Vec::with_capacity(model.n_stages() + 1 - n);
        parts.push(x_n);
        if n < model.n_stages() {
            parts.extend(model.split_controls(n + 1, flat));
        }
        let (mu, s) = chain_mean_sigma(model, n, y_prev, &parts, params.lf);
        surface.pick(mu, s, params.beta_sqrt)
    };
    opt.maximize(&f, &bounds)
}

/// Pessimistic maximum `Q_t = max LCB` over all controls from stage 1.
pub fn q_t(model: &CascadeModel, params: &CiParams, opt: &dyn Maximizer) -> Result<Maximum> {
    maximize_surface(model, 1, &model.initial_output(), Surface::Lcb, params, opt)
}

/// `max LCB` over `x⁽ⁿ⁾, …, x⁽ᴺ⁾` given the previous output.
pub fn lcb_given_y(
    model: &CascadeModel,
    y_prev: &[f64],
    n: usize,
    params: &CiParams,
    opt: &dyn Maximizer,
) -> Result<Maximum> {
    maximize_surface(model, n, y_prev, Surface::Lcb, params, opt)
}

/// `max UCB` over `x⁽ⁿ⁺¹⁾, …, x⁽ᴺ⁾` given the previous output and `x⁽ⁿ⁾`.
pub fn ucb_given_xy(
    model: &CascadeModel,
    x_n: &[f64],
    y_prev: &[f64],
    n: usize,
    params: &CiParams,
    opt: &dyn Maximizer,
) -> Result<Maximum> {
    maximize_surface_given_x(model, n, y_prev, x_n, Surface::Ucb, params, opt)
}

/// Largest final-stage `σ̃` reachable from `(y_prev, x⁽ⁿ⁾)`.
pub fn max_tail_sigma(
    model: &CascadeModel,
    x_n: &[f64],
    y_prev: &[f64],
    n: usize,
    params: &CiParams,
    opt: &dyn Maximizer,
) -> Result<Maximum> {
    maximize_surface_given_x(model, n, y_prev, x_n, Surface::Sigma, params, opt)
}

/// Components of the CI acquisition at one candidate `x⁽ⁿ⁾`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiScore {
    /// Optimistic improvement over the pessimistic baseline.
    pub improvement: f64,
    /// Largest reachable final uncertainty.
    pub uncertainty: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiChoice {
    pub x: Vec<f64>,
    pub score: CiScore,
}

/// Stateless evaluator of the CI acquisition for one stage selection.
pub struct CiAcquisition<'a> {
    pub model: &'a CascadeModel,
    pub params: &'a CiParams,
    pub nested: &'a dyn Maximizer,
    pub n: usize,
    pub y_prev: &'a [f64],
    /// `max(LCB given y_prev, Q)`.
    pub baseline: f64,
    pub eta: f64,
}

impl<'a> CiAcquisition<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &'a CascadeModel,
        y_prev: &'a [f64],
        n: usize,
        t: usize,
        q: f64,
        params: &'a CiParams,
        nested: &'a dyn Maximizer,
    ) -> Result<Self> {
        if t == 0 {
            return Err(invalid("iteration index t must be at least 1"));
        }
        let lcb_y = lcb_given_y(model, y_prev, n, params, nested)?.value;
        Ok(Self {
            model,
            params,
            nested,
            n,
            y_prev,
            baseline: lcb_y.max(q),
            eta: params.eta(t),
        })
    }

    pub fn score(&self, x_n: &[f64]) -> Result<CiScore> {
        let ucb = ucb_given_xy(self.model, x_n, self.y_prev, self.n, self.params, self.nested)?.value;
        let b = max_tail_sigma(self.model, x_n, self.y_prev, self.n, self.params, self.nested)?.value;
        let a = ucb - self.baseline;
        Ok(CiScore {
            improvement: a,
            uncertainty: b,
            score: a.max(self.eta * b),
        })
    }
}

/// Selects `x⁽ⁿ⁾` maximizing `max(a, η_t b)`. `q` is the sweep's frozen `Q_t`.
#[allow(clippy::too_many_arguments)]
pub fn ci_select(
    model: &CascadeModel,
    y_prev: &[f64],
    n: usize,
    t: usize,
    q: f64,
    params: &CiParams,
    outer: &dyn Maximizer,
    nested: &dyn Maximizer,
) -> Result<CiChoice> {
    let acq = CiAcquisition::new(model, y_prev, n, t, q, params, nested)?;
    let f = |x: &[f64]| acq.score(x).map_or(f64::NAN, |s| s.score);
    let best = outer.maximize(&f, model.control_box(n))?;
    let score = acq.score(&best.x)?;
    Ok(CiChoice { x: best.x, score })
}

/// Cascade UCB `μ̃ + β σ̃` of the full chain from stage 1.
pub fn cucb(model: &CascadeModel, controls: &[&[f64]], params: &CiParams) -> Result<f64> {
    model.check_controls(1, controls)?;
    let b = ci_recursion(model, 1, &model.initial_output(), controls, params)?;
    Ok(b.ucb)
}

/// Largest 1-norm of a central finite-difference gradient over Latin-hypercube probes.
pub fn estimate_lf(f: &dyn Fn(&[f64]) -> f64, bounds: &Bounds, probes: usize, seed: u64) -> Result<f64> {
    if probes == 0 {
        return Err(invalid("estimate_lf needs at least one probe"));
    }
    let d = bounds.dim();
    let steps: Vec<f64> = (0..d).map(|i| 1e-4 * bounds.width(i)).collect();
    let mut best: f64 = 0.0;
    let mut buf = vec![0.0; d];
    for p in lhs_sample_seeded(bounds, probes, seed) {
        let mut norm = 0.0;
        for i in 0..d {
            let h = steps[i];
            if h == 0.0 {
                continue;
            }
            // Keep the stencil inside the box.
            let c = p[i].clamp(bounds.lower()[i] + h, bounds.upper()[i] - h);
            buf.copy_from_slice(&p);
            buf[i] = c + h;
            let up = f(&buf);
            buf[i] = c - h;
            let down = f(&buf);
            norm += ((up - down) / (2.0 * h)).abs();
        }
        best = best.max(norm);
    }
    Ok(best)
}

/// Lipschitz constant of the posterior standard deviation implied by the kernel.
pub fn sigma_lipschitz_bound(kernel: &KernelSpec) -> Result<f64> {
    if let KernelKind::Matern { nu } = kernel.kind {
        if nu <= 1.0 {
            return Err(Error::Unsupported(format!(
                "posterior std is not Lipschitz for Matern nu = {nu} <= 1"
            )));
        }
    }
    kernel.validate()?;
    // The amplitude enters the kernel as a², so a = √amplitude.
    let a = kernel.amplitude.sqrt();
    if kernel.kind == KernelKind::Linear {
        return Ok(a);
    }
    let rho = kernel
        .isotropic_lengthscale()
        .ok_or_else(|| invalid("the bound needs one shared lengthscale"))?;
    let gauss = std::f64::consts::SQRT_2 * a / rho;
    match kernel.kind {
        KernelKind::GaussianArd => Ok(gauss),
        KernelKind::Matern { nu } => Ok(gauss * (nu / (nu - 1.0)).sqrt()),
        KernelKind::Linear => unreachable!(),
    }
}

/// Constants of the cumulative-regret bound of the credible-interval policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegretConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub l_sigma: f64,
    /// Set when a constant exceeds the `f64` range; the affected values are `+∞`.
    pub overflow: bool,
}

pub fn regret_constants(n_stages: usize, lf: f64, l_sigma: f64, beta_sqrt: f64) -> Result<RegretConstants> {
    if n_stages == 0 {
        return Err(invalid("stage count must be positive"));
    }
    for (name, v) in [("lf", lf), ("l_sigma", l_sigma), ("beta_sqrt", beta_sqrt)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(format!("{name} must be positive, got {v}")));
        }
    }
    let n = n_stages as f64;
    let c0 = l_sigma * beta_sqrt + lf + 1.0;
    let c1 = 1f64.max(lf).max(1.0 / lf);
    let c2 = 4.0 * n * n * c0.powf(2.0 * n - 3.0) * c1.powf(n);
    let c3 = n * c2.powf(n);
    let c4 = (2.0 * beta_sqrt + 2.0).powf(n) * c3.powf(n);
    Ok(RegretConstants {
        c0,
        c1,
        c2,
        c3,
        c4,
        l_sigma,
        overflow: [c2, c3, c4].iter().any(|v| v.is_infinite()),
    })
}
