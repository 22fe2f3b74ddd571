//! Cascade processes: ordered stages `y⁽ⁿ⁾ = f⁽ⁿ⁾(y⁽ⁿ⁻¹⁾, x⁽ⁿ⁾)`.
//!
//! Stage indices are 1-based throughout the public API. The initial output
//! `y⁽⁰⁾` is the zero vector of the dimension stage 1 declares for its
//! previous-output input (zero-dimensional for all built-in benchmarks).

use std::fmt;
use std::sync::Arc;
use std::time::SystemTime;

use crate::error::{invalid, Error, Result};
use crate::gp::StageDataset;
use crate::inner_opt::Bounds;

/// Black-box stage function `(w, x) ↦ y`.
pub type StageFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub struct StageSpec {
    control_box: Bounds,
    input_dim: usize,
    output_dim: usize,
    evaluator: StageFn,
}

impl fmt::Debug for StageSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StageSpec")
            .field("control_box", &self.control_box)
            .field("input_dim", &self.input_dim)
            .field("output_dim", &self.output_dim)
            .finish_non_exhaustive()
    }
}

impl StageSpec {
    /// `input_dim` is the dimension of the previous output `w` this stage consumes.
    pub fn new(control_box: Bounds, input_dim: usize, output_dim: usize, evaluator: StageFn) -> Result<Self> {
        if control_box
            .lower()
            .iter()
            .zip(control_box.upper())
            .any(|(l, u)| l >= u)
        {
            return Err(invalid("stage control box needs lower < upper in every coordinate"));
        }
        if output_dim == 0 {
            return Err(invalid("stage output dimension must be positive"));
        }
        Ok(Self {
            control_box,
            input_dim,
            output_dim,
            evaluator,
        })
    }

    pub fn control_box(&self) -> &Bounds {
        &self.control_box
    }

    pub fn control_dim(&self) -> usize {
        self.control_box.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn evaluator(&self) -> &StageFn {
        &self.evaluator
    }
}

#[derive(Debug, Clone)]
pub struct CascadeSpec {
    stages: Vec<StageSpec>,
}

impl CascadeSpec {
    pub fn new(stages: Vec<StageSpec>) -> Result<Self> {
        if stages.is_empty() {
            return Err(invalid("a cascade needs at least one stage"));
        }
        for (i, pair) in stages.windows(2).enumerate() {
            if pair[0].output_dim != pair[1].input_dim {
                return Err(invalid(format!(
                    "stage {} outputs {} values but stage {} consumes {}",
                    i + 1,
                    pair[0].output_dim,
                    i + 2,
                    pair[1].input_dim
                )));
            }
        }
        if stages.last().map(|s| s.output_dim) != Some(1) {
            return Err(invalid("the final stage must have a scalar output"));
        }
        Ok(Self { stages })
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    /// Stage `n` (1-based).
    pub fn stage(&self, n: usize) -> &StageSpec {
        &self.stages[n - 1]
    }

    pub fn stages(&self) -> &[StageSpec] {
        &self.stages
    }

    pub fn control_boxes(&self) -> Vec<Bounds> {
        self.stages.iter().map(|s| s.control_box.clone()).collect()
    }

    /// `y⁽⁰⁾`.
    pub fn initial_output(&self) -> Vec<f64> {
        vec![0.0; self.stages[0].input_dim]
    }

    pub fn eval_stage(&self, n: usize, w: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if n == 0 || n > self.n_stages() {
            return Err(invalid(format!("stage index {n} outside 1..={}", self.n_stages())));
        }
        let stage = self.stage(n);
        if w.len() != stage.input_dim {
            return Err(invalid(format!(
                "stage {n} expects a {}-dimensional previous output, got {}",
                stage.input_dim,
                w.len()
            )));
        }
        if !stage.control_box.contains(x) {
            return Err(invalid(format!("stage {n} control {x:?} lies outside its box")));
        }
        let y = (stage.evaluator)(w, x);
        if y.len() != stage.output_dim {
            return Err(Error::EvaluatorFailure {
                stage: n,
                message: format!("returned {} values, expected {}", y.len(), stage.output_dim),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::EvaluatorFailure {
                stage: n,
                message: format!("non-finite output {y:?}"),
            });
        }
        Ok(y)
    }

    pub fn eval_cascade(&self, controls: &[Vec<f64>]) -> Result<CascadeOutput> {
        if controls.len() != self.n_stages() {
            return Err(invalid(format!(
                "expected {} control vectors, got {}",
                self.n_stages(),
                controls.len()
            )));
        }
        let mut y = self.initial_output();
        let mut intermediates = Vec::with_capacity(self.n_stages() - 1);
        for (i, x) in controls.iter().enumerate() {
            let next = self.eval_stage(i + 1, &y, x)?;
            if i + 1 < self.n_stages() {
                intermediates.push(next.clone());
            }
            y = next;
        }
        Ok(CascadeOutput {
            value: y[0],
            intermediates,
        })
    }

    /// Splits a flat control vector for stages `from..=N` into per-stage slices.
    pub fn split_controls<'a>(&self, from: usize, flat: &'a [f64]) -> Vec<&'a [f64]> {
        split_by_dims(
            self.stages[from - 1..].iter().map(|s| s.control_dim()),
            flat,
        )
    }
}

pub(crate) fn split_by_dims(dims: impl Iterator<Item = usize>, flat: &[f64]) -> Vec<&[f64]> {
    let mut out = Vec::new();
    let mut offset = 0;
    for d in dims {
        out.push(&flat[offset..offset + d]);
        offset += d;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeOutput {
    /// `F(x⁽¹⁾, …, x⁽ᴺ⁾)`.
    pub value: f64,
    /// `y⁽¹⁾ … y⁽ᴺ⁻¹⁾`.
    pub intermediates: Vec<Vec<f64>>,
}

pub fn eval_stage(spec: &CascadeSpec, n: usize, w: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    spec.eval_stage(n, w, x)
}

pub fn eval_cascade(spec: &CascadeSpec, controls: &[Vec<f64>]) -> Result<CascadeOutput> {
    spec.eval_cascade(controls)
}

/// One observed stage evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub t: usize,
    pub stage: usize,
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub stamp: SystemTime,
}

impl EvalRecord {
    pub fn new(t: usize, stage: usize, w: Vec<f64>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            t,
            stage,
            w,
            x,
            y,
            stamp: SystemTime::now(),
        }
    }
}

/// Append-only per-stage observation history.
#[derive(Debug, Clone)]
pub struct ObservationLog {
    datasets: Vec<StageDataset>,
    records: Vec<EvalRecord>,
    t: usize,
}

impl ObservationLog {
    pub fn new(spec: &CascadeSpec) -> Self {
        Self {
            datasets: spec
                .stages()
                .iter()
                .map(|s| StageDataset::new(s.input_dim(), s.control_dim(), s.output_dim()))
                .collect(),
            records: Vec::new(),
            t: 0,
        }
    }

    pub fn append(&mut self, record: EvalRecord) -> Result<()> {
        let n = record.stage;
        if n == 0 || n > self.datasets.len() {
            return Err(invalid(format!("record for unknown stage {n}")));
        }
        self.datasets[n - 1].push(&record.w, &record.x, &record.y)?;
        self.t = self.t.max(record.t);
        self.records.push(record);
        Ok(())
    }

    pub fn dataset(&self, n: usize) -> &StageDataset {
        &self.datasets[n - 1]
    }

    pub fn datasets(&self) -> &[StageDataset] {
        &self.datasets
    }

    pub fn records(&self) -> &[EvalRecord] {
        &self.records
    }

    pub fn counts(&self) -> Vec<usize> {
        self.datasets.iter().map(StageDataset::len).collect()
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    /// Largest final-stage output observed so far.
    pub fn best_final(&self) -> Option<f64> {
        self.datasets
            .last()
            .and_then(|d| d.outputs().iter().map(|y| y[0]).max_by(f64::total_cmp))
    }
}

pub fn append_observation(log: &mut ObservationLog, record: EvalRecord) -> Result<()> {
    log.append(record)
}
