//! Comparison policies: uniform random search, black-box BO on the
//! concatenated controls, and reverse-order target matching.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acq_ei::ei_scalar;
use crate::cascade::split_by_dims;
use crate::error::{invalid, Result};
use crate::gp::GpPosterior;
use crate::inner_opt::{Bounds, Maximizer};
use crate::surrogate::CascadeModel;

/// Uniform draw from every stage box.
pub fn random_select(boxes: &[Bounds], seed: u64) -> Vec<Vec<f64>> {
    random_select_with(boxes, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn random_select_with<R: Rng + ?Sized>(boxes: &[Bounds], rng: &mut R) -> Vec<Vec<f64>> {
    boxes.iter().map(|b| b.sample(rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FbMode {
    Ei,
    Ucb,
}

/// Exploration weight of the black-box UCB baseline.
pub const FB_UCB_BETA_SQRT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FbChoice {
    pub controls: Vec<Vec<f64>>,
    pub value: f64,
}

/// Maximizes EI or UCB of a GP over the concatenated controls of all stages.
pub fn fb_select(
    posterior: &GpPosterior,
    mode: FbMode,
    f_best: f64,
    boxes: &[Bounds],
    opt: &dyn Maximizer,
) -> Result<FbChoice> {
    let bounds = Bounds::product(boxes);
    if posterior.input_dim() != bounds.dim() || posterior.out_dim() != 1 {
        return Err(invalid(format!(
            "black-box posterior takes {} inputs, the stage boxes have {}",
            posterior.input_dim(),
            bounds.dim()
        )));
    }
    let f = |x: &[f64]| {
        let (mu, sd) = posterior.mean_std_scalar(x);
        match mode {
            FbMode::Ei => ei_scalar(mu, sd, f_best),
            FbMode::Ucb => mu + FB_UCB_BETA_SQRT * sd,
        }
    };
    let best = opt.maximize(&f, &bounds)?;
    Ok(FbChoice {
        controls: split_by_dims(boxes.iter().map(Bounds::dim), &best.x)
            .into_iter()
            .map(<[f64]>::to_vec)
            .collect(),
        value: best.value,
    })
}

/// Extra cost of querying a stage at `(w, x)`.
pub type StageCost = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CboParams {
    pub kappa1: f64,
    pub kappa2: f64,
    /// Factor by which the true intermediate output range is widened around its midpoint.
    pub widen: f64,
    /// Zero when absent.
    #[serde(skip)]
    pub cost: Option<StageCost>,
}

impl fmt::Debug for CboParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CboParams")
            .field("kappa1", &self.kappa1)
            .field("kappa2", &self.kappa2)
            .field("widen", &self.widen)
            .field("cost", &self.cost.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

impl PartialEq for CboParams {
    fn eq(&self, other: &Self) -> bool {
        self.kappa1 == other.kappa1
            && self.kappa2 == other.kappa2
            && self.widen == other.widen
            && self.cost.is_none()
            && other.cost.is_none()
    }
}

impl Default for CboParams {
    fn default() -> Self {
        Self {
            kappa1: 1.0,
            kappa2: 1.0,
            widen: 2.0,
            cost: None,
        }
    }
}

impl CboParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kappa1", self.kappa1), ("kappa2", self.kappa2), ("widen", self.widen)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Mismatch penalty of a predicted output against its target.
    pub fn mismatch(&self, mean: &[f64], var: f64, target: &[f64]) -> f64 {
        let v = var.max(1e-12);
        let sq: f64 = mean.iter().zip(target).map(|(m, t)| (m - t) * (m - t)).sum();
        (self.kappa1 / v + self.kappa2 * v) * sq
    }
}

/// Centered widening of a range box.
pub fn widen_range(range: &Bounds, factor: f64) -> Bounds {
    let (lower, upper) = range
        .lower()
        .iter()
        .zip(range.upper())
        .map(|(l, u)| {
            let c = 0.5 * (l + u);
            let h = 0.5 * (u - l) * factor;
            (c - h, c + h)
        })
        .unzip();
    Bounds::new(lower, upper).expect("widening preserves order")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CboPlan {
    pub controls: Vec<Vec<f64>>,
    /// Target outputs `y⁽¹⁾ … y⁽ᴺ⁻¹⁾` the plan aims for.
    pub targets: Vec<Vec<f64>>,
}

/// Plans all controls backwards from the final stage.
///
/// `ranges[i]` is the true range of the output of stage `i + 1`, for the
/// intermediate stages only.
pub fn cbo_select(
    model: &CascadeModel,
    ranges: &[Bounds],
    params: &CboParams,
    f_best: f64,
    opt: &dyn Maximizer,
) -> Result<CboPlan> {
    params.validate()?;
    let n_stages = model.n_stages();
    if ranges.len() + 1 != n_stages {
        return Err(invalid(format!(
            "need {} intermediate output ranges, got {}",
            n_stages - 1,
            ranges.len()
        )));
    }
    for (i, r) in ranges.iter().enumerate() {
        if r.dim() != model.stage(i + 1).out_dim() {
            return Err(invalid(format!("output range of stage {} has the wrong dimension", i + 1)));
        }
    }
    let y0 = model.initial_output();
    // Search box over (w, x) for stage n; stage 1 sees the fixed initial output.
    let domain = |n: usize| -> Bounds {
        if n == 1 {
            let fixed = Bounds::new(y0.clone(), y0.clone()).expect("degenerate box");
            Bounds::product([&fixed, model.control_box(1)])
        } else {
            Bounds::product([&widen_range(&ranges[n - 2], params.widen), model.control_box(n)])
        }
    };
    let mut controls = vec![Vec::new(); n_stages];
    let mut targets = vec![Vec::new(); n_stages - 1];

    let last = model.stage(n_stages);
    let w_dim = last.w_dim();
    let ei = |p: &[f64]| {
        let (mu, sd) = last.mean_std_scalar(p);
        ei_scalar(mu, sd, f_best)
    };
    let best = opt.maximize(&ei, &domain(n_stages))?;
    controls[n_stages - 1] = best.x[w_dim..].to_vec();
    if n_stages > 1 {
        targets[n_stages - 2] = best.x[..w_dim].to_vec();
    }

    for n in (1..n_stages).rev() {
        let gp = model.stage(n);
        let w_dim = gp.w_dim();
        let target = targets[n - 1].clone();
        let obj = |p: &[f64]| {
            let mut mean = vec![0.0; gp.out_dim()];
            let var = gp.predict_into(p, &mut mean);
            let extra = params.cost.as_ref().map_or(0.0, |c| c(&p[..w_dim], &p[w_dim..]));
            -(params.mismatch(&mean, var, &target) + extra)
        };
        let best = opt.maximize(&obj, &domain(n))?;
        controls[n - 1] = best.x[w_dim..].to_vec();
        if n > 1 {
            targets[n - 2] = best.x[..w_dim].to_vec();
        }
    }
    Ok(CboPlan { controls, targets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{KernelSpec, StageDataset, DEFAULT_NOISE};
    use crate::inner_opt::{GridSearch, OptBudget};

    #[test]
    fn random_draws() {
        let boxes = vec![Bounds::new(vec![0.5], vec![0.5]).unwrap(), Bounds::cube(2, -1.0, 1.0).unwrap()];
        let a = random_select(&boxes, 9);
        assert_eq!(a[0], vec![0.5]);
        assert_eq!(a, random_select(&boxes, 9));
        assert_ne!(a, random_select(&boxes, 10));
    }

    fn quad_posterior() -> GpPosterior {
        let mut d = StageDataset::new(0, 1, 1);
        for i in 0..7 {
            let x = -1.0 + i as f64 / 3.0;
            d.push(&[], &[x], &[-(x - 0.3f64).powi(2)]).unwrap();
        }
        let k = KernelSpec::gaussian(1.0, vec![], vec![0.5]).unwrap();
        GpPosterior::fit(&d, &k, DEFAULT_NOISE).unwrap()
    }

    #[test]
    fn fb_matches_grid() {
        let gp = quad_posterior();
        let boxes = vec![Bounds::cube(1, -1.0, 1.0).unwrap()];
        let opt = OptBudget::default();
        for mode in [FbMode::Ei, FbMode::Ucb] {
            let got = fb_select(&gp, mode, 0.0, &boxes, &opt).unwrap();
            let grid = fb_select(&gp, mode, 0.0, &boxes, &GridSearch::new(20001)).unwrap();
            assert!((got.controls[0][0] - grid.controls[0][0]).abs() < 1e-3, "{mode:?}");
        }
        let got = fb_select(&gp, FbMode::Ucb, 0.0, &boxes, &opt).unwrap();
        let (mu, sd) = gp.mean_std_scalar(&got.controls[0]);
        assert_eq!(got.value, mu + 2.0 * sd);
    }

    #[test]
    fn mismatch_zero_at_target() {
        let p = CboParams::default();
        assert_eq!(p.mismatch(&[0.3, 1.0], 0.5, &[0.3, 1.0]), 0.0);
        assert!(p.mismatch(&[0.3], 0.0, &[0.4]).is_finite());
    }

    #[test]
    fn widening_is_centered() {
        let r = widen_range(&Bounds::new(vec![0.0], vec![2.0]).unwrap(), 2.0);
        assert_eq!((r.lower()[0], r.upper()[0]), (-1.0, 3.0));
    }

    #[test]
    fn cbo_plans_every_stage() {
        let mut d1 = StageDataset::new(0, 1, 1);
        let mut d2 = StageDataset::new(1, 1, 1);
        for &x in &[-1.0, -0.3, 0.4, 1.0] {
            d1.push(&[], &[x], &[x]).unwrap();
            d2.push(&[x], &[0.5 * x], &[-(x - 0.5).powi(2) - 0.25 * x * x]).unwrap();
        }
        let k1 = KernelSpec::gaussian(1.0, vec![], vec![0.6]).unwrap();
        let k2 = KernelSpec::gaussian(1.0, vec![0.6], vec![0.6]).unwrap();
        let model = CascadeModel::new(
            vec![
                GpPosterior::fit(&d1, &k1, DEFAULT_NOISE).unwrap(),
                GpPosterior::fit(&d2, &k2, DEFAULT_NOISE).unwrap(),
            ],
            vec![Bounds::cube(1, -1.0, 1.0).unwrap(); 2],
        )
        .unwrap();
        let ranges = vec![Bounds::cube(1, -1.0, 1.0).unwrap()];
        let plan = cbo_select(&model, &ranges, &CboParams::default(), 0.0, &GridSearch::new(41)).unwrap();
        assert_eq!(plan.controls.len(), 2);
        assert_eq!(plan.targets.len(), 1);
        assert!(model.control_box(1).contains(&plan.controls[0]));
        assert!(plan.targets[0][0] >= -2.0 && plan.targets[0][0] <= 2.0);
    }
}
