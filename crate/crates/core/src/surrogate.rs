//! Per-stage GP posteriors bundled with the control boxes they are queried on.

use crate::cascade::split_by_dims;
use crate::error::{invalid, Result};
use crate::gp::GpPosterior;
use crate::inner_opt::Bounds;

#[derive(Debug, Clone)]
pub struct CascadeModel {
    stages: Vec<GpPosterior>,
    boxes: Vec<Bounds>,
}

impl CascadeModel {
    pub fn new(stages: Vec<GpPosterior>, boxes: Vec<Bounds>) -> Result<Self> {
        if stages.is_empty() || stages.len() != boxes.len() {
            return Err(invalid(format!(
                "need one control box per stage posterior, got {} posteriors and {} boxes",
                stages.len(),
                boxes.len()
            )));
        }
        for (i, (gp, b)) in stages.iter().zip(&boxes).enumerate() {
            if gp.x_dim() != b.dim() {
                return Err(invalid(format!(
                    "stage {} posterior takes {} controls but its box has {}",
                    i + 1,
                    gp.x_dim(),
                    b.dim()
                )));
            }
            if i > 0 && stages[i - 1].out_dim() != gp.w_dim() {
                return Err(invalid(format!(
                    "stage {} posterior expects a {}-dimensional previous output, stage {} produces {}",
                    i + 1,
                    gp.w_dim(),
                    i,
                    stages[i - 1].out_dim()
                )));
            }
        }
        if stages.last().map(GpPosterior::out_dim) != Some(1) {
            return Err(invalid("the final stage posterior must be scalar"));
        }
        Ok(Self { stages, boxes })
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    /// Posterior of stage `n` (1-based).
    pub fn stage(&self, n: usize) -> &GpPosterior {
        &self.stages[n - 1]
    }

    pub fn control_box(&self, n: usize) -> &Bounds {
        &self.boxes[n - 1]
    }

    pub fn boxes(&self) -> &[Bounds] {
        &self.boxes
    }

    /// Product of the control boxes of stages `from..=N`.
    pub fn tail_bounds(&self, from: usize) -> Bounds {
        Bounds::product(&self.boxes[from - 1..])
    }

    pub fn split_controls<'a>(&self, from: usize, flat: &'a [f64]) -> Vec<&'a [f64]> {
        split_by_dims(self.boxes[from - 1..].iter().map(Bounds::dim), flat)
    }

    pub fn initial_output(&self) -> Vec<f64> {
        vec![0.0; self.stages[0].w_dim()]
    }

    /// Posterior mean (written to `mean`) and variance of stage `n` at `(w, x)`.
    /// `joint` is scratch space.
    pub(crate) fn predict(&self, n: usize, w: &[f64], x: &[f64], joint: &mut Vec<f64>, mean: &mut [f64]) -> f64 {
        joint.clear();
        joint.extend_from_slice(w);
        joint.extend_from_slice(x);
        self.stages[n - 1].predict_into(joint, mean)
    }

    pub(crate) fn check_prev(&self, n: usize, y_prev: &[f64]) -> Result<()> {
        if n == 0 || n > self.n_stages() {
            return Err(invalid(format!("stage index {n} outside 1..={}", self.n_stages())));
        }
        let want = self.stage(n).w_dim();
        if y_prev.len() != want {
            return Err(invalid(format!(
                "stage {n} expects a {want}-dimensional previous output, got {}",
                y_prev.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_controls(&self, n: usize, controls: &[&[f64]]) -> Result<()> {
        if controls.len() != self.n_stages() + 1 - n {
            return Err(invalid(format!(
                "expected controls for stages {n}..={}, got {} vectors",
                self.n_stages(),
                controls.len()
            )));
        }
        for (i, x) in controls.iter().enumerate() {
            if x.len() != self.control_box(n + i).dim() {
                return Err(invalid(format!(
                    "stage {} control has dimension {}, expected {}",
                    n + i,
                    x.len(),
                    self.control_box(n + i).dim()
                )));
            }
        }
        Ok(())
    }
}
