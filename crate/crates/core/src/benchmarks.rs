//! Synthetic cascade benchmarks.
//!
//! Function benchmarks chain a negated test function: stage 1 evaluates it on
//! its controls alone, later stages on `(w, x)`. Scaled variants map each
//! stage's output range affinely onto the control interval so the next stage
//! sees inputs of the same magnitude as its own controls.

use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::cascade::{CascadeSpec, StageFn, StageSpec};
use crate::error::{invalid, Result};
use crate::gp::{sample_path, KernelSpec};
use crate::inner_opt::{lhs_sample_seeded, maximize, Bounds, OptBudget};
use crate::rng::{substream, substream_seed, Stream};

/// Samples used to estimate a stage's output range.
pub const RANGE_SAMPLES: usize = 100_000;
pub const SAMPLE_PATH_AMPLITUDE: f64 = 15.02;
pub const SAMPLE_PATH_LENGTHSCALE: f64 = 3.0;
pub const SAMPLE_PATH_FEATURES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Rosenbrock,
    Sphere,
    Matyas,
    SamplePath,
}

/// Negated standard test functions.
pub fn base_function(name: &str, v: &[f64]) -> Result<f64> {
    let family = match name {
        "rosenbrock" => Family::Rosenbrock,
        "sphere" => Family::Sphere,
        "matyas" => Family::Matyas,
        other => return Err(invalid(format!("unknown base function {other:?}"))),
    };
    eval_family(family, v)
}

fn eval_family(family: Family, v: &[f64]) -> Result<f64> {
    match family {
        Family::Rosenbrock if v.len() >= 2 => Ok(-v
            .windows(2)
            .map(|p| 100.0 * (p[1] - p[0] * p[0]).powi(2) + (p[0] - 1.0).powi(2))
            .sum::<f64>()),
        Family::Sphere if !v.is_empty() => Ok(-v.iter().map(|x| x * x).sum::<f64>()),
        Family::Matyas if v.len() == 2 => Ok(-(0.26 * (v[0] * v[0] + v[1] * v[1]) - 0.48 * v[0] * v[1])),
        _ => Err(invalid(format!("{family:?} is not defined on {} inputs", v.len()))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkSpec {
    pub name: String,
    pub family: Family,
    pub control_dims: Vec<usize>,
    /// Every control box is `[lo, hi]^D`.
    pub lo: f64,
    pub hi: f64,
    /// Outputs are affinely mapped onto `[lo, hi]`; for sample paths only the intermediate ones.
    pub scaled: bool,
    /// Random complete cascades provided before optimization starts.
    pub n_initial: usize,
}

impl BenchmarkSpec {
    pub fn n_stages(&self) -> usize {
        self.control_dims.len()
    }

    pub fn boxes(&self) -> Vec<Bounds> {
        self.control_dims
            .iter()
            .map(|&d| Bounds::cube(d, self.lo, self.hi).expect("registered box is valid"))
            .collect()
    }

    /// Whether the optimum is known in closed form (unscaled chains of
    /// functions maximized at the origin with value 0).
    pub fn analytic_optimum(&self) -> Option<f64> {
        (!self.scaled && matches!(self.family, Family::Sphere | Family::Matyas)).then_some(0.0)
    }

    /// GP hyperparameters are the generating ones and stay fixed.
    pub fn fixed_hyperparameters(&self) -> bool {
        self.family == Family::SamplePath
    }
}

fn spec(name: &str, family: Family, dims: &[usize], lo: f64, hi: f64, scaled: bool) -> BenchmarkSpec {
    BenchmarkSpec {
        name: name.to_string(),
        family,
        control_dims: dims.to_vec(),
        lo,
        hi,
        scaled,
        n_initial: if dims.len() >= 5 { 20 } else { 10 },
    }
}

/// Every registered benchmark.
pub fn registry() -> Vec<BenchmarkSpec> {
    let mut out = vec![
        spec("rosenbrock-3", Family::Rosenbrock, &[3, 2, 2], -2.0, 2.0, true),
        spec("rosenbrock-5", Family::Rosenbrock, &[3, 2, 2, 2, 2], -2.0, 2.0, true),
    ];
    // Unscaled chains of Rosenbrock blow up in magnitude stage after stage,
    // so only the analytically solvable families get unscaled variants.
    for scaled in [true, false] {
        let sfx = if scaled { "" } else { "-unscaled" };
        out.push(spec(&format!("sphere-3{sfx}"), Family::Sphere, &[3, 2, 2], -5.12, 5.12, scaled));
        out.push(spec(&format!("matyas-3{sfx}"), Family::Matyas, &[2, 1, 1], -10.0, 10.0, scaled));
    }
    out.push(spec("samplepath-3", Family::SamplePath, &[2, 2, 2], -10.0, 10.0, true));
    out.push(spec("samplepath-5", Family::SamplePath, &[2, 2, 2, 2, 2], -10.0, 10.0, true));
    out
}

pub fn lookup(name: &str) -> Result<BenchmarkSpec> {
    registry().into_iter().find(|s| s.name == name).ok_or_else(|| {
        let names: Vec<String> = registry().into_iter().map(|s| s.name).collect();
        invalid(format!("unknown benchmark {name:?}; known: {}", names.join(", ")))
    })
}

/// A built benchmark instance.
#[derive(Debug)]
pub struct Benchmark {
    pub spec: BenchmarkSpec,
    pub cascade: CascadeSpec,
    pub seed: u64,
    true_kernels: Option<Vec<KernelSpec>>,
    ranges: OnceLock<Vec<Bounds>>,
}

impl Benchmark {
    /// Generating kernels of sample-path stages.
    pub fn true_kernels(&self) -> Option<&[KernelSpec]> {
        self.true_kernels.as_deref()
    }

    /// Starting kernels for hyperparameter fitting.
    pub fn initial_kernels(&self) -> Vec<KernelSpec> {
        if let Some(k) = &self.true_kernels {
            return k.clone();
        }
        let width = self.spec.hi - self.spec.lo;
        self.cascade
            .stages()
            .iter()
            .map(|s| {
                KernelSpec::gaussian(
                    (width / 4.0).powi(2),
                    vec![width / 4.0; s.input_dim()],
                    vec![width / 4.0; s.control_dim()],
                )
                .expect("positive hyperparameters")
            })
            .collect()
    }

    /// Ranges of the intermediate outputs `y⁽¹⁾ … y⁽ᴺ⁻¹⁾`.
    ///
    /// Scaled benchmarks land on the control interval by construction; others
    /// are estimated from random forward passes.
    pub fn output_ranges(&self) -> &[Bounds] {
        self.ranges.get_or_init(|| {
            let n = self.cascade.n_stages();
            if self.spec.scaled {
                return (1..n)
                    .map(|i| Bounds::cube(self.cascade.stage(i).output_dim(), self.spec.lo, self.spec.hi).unwrap())
                    .collect();
            }
            let mut rng = substream(self.seed, Stream::Scaling, 1_000);
            let boxes = self.cascade.control_boxes();
            let mut lo: Vec<Vec<f64>> = (1..n)
                .map(|i| vec![f64::INFINITY; self.cascade.stage(i).output_dim()])
                .collect();
            let mut hi: Vec<Vec<f64>> = lo.iter().map(|v| vec![f64::NEG_INFINITY; v.len()]).collect();
            for _ in 0..10_000 {
                let controls: Vec<Vec<f64>> = boxes.iter().map(|b| b.sample(&mut rng)).collect();
                if let Ok(out) = self.cascade.eval_cascade(&controls) {
                    for (i, y) in out.intermediates.iter().enumerate() {
                        for (k, v) in y.iter().enumerate() {
                            lo[i][k] = lo[i][k].min(*v);
                            hi[i][k] = hi[i][k].max(*v);
                        }
                    }
                }
            }
            lo.into_iter()
                .zip(hi)
                .map(|(l, h)| Bounds::new(l, h).expect("finite sampled range"))
                .collect()
        })
    }
}

/// Builds a registered benchmark. `seed` selects the sample paths; function
/// benchmarks are the same for every seed.
pub fn build_cascade(spec: &BenchmarkSpec, seed: u64) -> Result<Benchmark> {
    if spec.family == Family::SamplePath {
        let (cascade, kernels) = sample_path_stages(&spec.control_dims, spec.lo, spec.hi, seed)?;
        return Ok(Benchmark {
            spec: spec.clone(),
            cascade,
            seed,
            true_kernels: Some(kernels),
            ranges: OnceLock::new(),
        });
    }
    let family = spec.family;
    let mut stages = Vec::with_capacity(spec.n_stages());
    for (i, &d) in spec.control_dims.iter().enumerate() {
        let w_dim = usize::from(i > 0);
        let x_box = Bounds::cube(d, spec.lo, spec.hi)?;
        let raw: StageFn = Arc::new(move |w: &[f64], x: &[f64]| {
            let v: Vec<f64> = w.iter().chain(x).copied().collect();
            vec![eval_family(family, &v).unwrap_or(f64::NAN)]
        });
        // Check the stage's input dimension once here rather than per call.
        eval_family(family, &vec![0.0; w_dim + d])?;
        let evaluator = if spec.scaled {
            let w_box = Bounds::cube(w_dim, spec.lo, spec.hi)?;
            let s = scale_stage(
                raw,
                &w_box,
                &x_box,
                (spec.lo, spec.hi),
                RANGE_SAMPLES,
                substream_seed(0, Stream::Scaling, i as u64),
            )?;
            s.evaluator
        } else {
            raw
        };
        stages.push(StageSpec::new(x_box, w_dim, 1, evaluator)?);
    }
    Ok(Benchmark {
        spec: spec.clone(),
        cascade: CascadeSpec::new(stages)?,
        seed,
        true_kernels: None,
        ranges: OnceLock::new(),
    })
}

pub fn build(name: &str, seed: u64) -> Result<Benchmark> {
    build_cascade(&lookup(name)?, seed)
}

fn sample_path_stages(dims: &[usize], lo: f64, hi: f64, seed: u64) -> Result<(CascadeSpec, Vec<KernelSpec>)> {
    let mut stages = Vec::with_capacity(dims.len());
    let mut kernels = Vec::with_capacity(dims.len());
    for (i, &d) in dims.iter().enumerate() {
        let w_dim = usize::from(i > 0);
        let mut kernel = KernelSpec::gaussian_iso(SAMPLE_PATH_AMPLITUDE, SAMPLE_PATH_LENGTHSCALE, w_dim, d)?;
        let path = Arc::new(sample_path(
            &kernel,
            SAMPLE_PATH_FEATURES,
            substream_seed(seed, Stream::Benchmark, i as u64),
        )?);
        let mut evaluator: StageFn = Arc::new(move |w: &[f64], x: &[f64]| {
            let v: Vec<f64> = w.iter().chain(x).copied().collect();
            vec![path.eval(&v)]
        });
        let x_box = Bounds::cube(d, lo, hi)?;
        // Intermediate outputs are mapped onto the next stage's input box; the
        // GP prior of a scaled path has its amplitude scaled by a².
        if i + 1 < dims.len() {
            let s = scale_stage(
                evaluator,
                &Bounds::cube(w_dim, lo, hi)?,
                &x_box,
                (lo, hi),
                RANGE_SAMPLES,
                substream_seed(seed, Stream::Scaling, i as u64),
            )?;
            kernel.amplitude *= s.scale[0] * s.scale[0];
            evaluator = s.evaluator;
        }
        stages.push(StageSpec::new(x_box, w_dim, 1, evaluator)?);
        kernels.push(kernel);
    }
    Ok((CascadeSpec::new(stages)?, kernels))
}

/// `N`-stage cascade of independent GP-prior sample paths on `[−10, 10]²` controls,
/// intermediate outputs scaled onto `[−10, 10]`.
pub fn sample_path_cascade(n_stages: usize, seed: u64) -> Result<CascadeSpec> {
    if n_stages == 0 {
        return Err(invalid("stage count must be positive"));
    }
    Ok(sample_path_stages(&vec![2; n_stages], -10.0, 10.0, seed)?.0)
}

pub struct ScaledStage {
    pub evaluator: StageFn,
    /// Per-output multiplier.
    pub scale: Vec<f64>,
    /// Per-output offset.
    pub offset: Vec<f64>,
}

/// Affinely maps each output coordinate so that its empirical range over
/// `n_samples` uniform inputs lands on `target`.
pub fn scale_stage(
    f: StageFn,
    w_box: &Bounds,
    x_box: &Bounds,
    target: (f64, f64),
    n_samples: usize,
    seed: u64,
) -> Result<ScaledStage> {
    let (t_lo, t_hi) = target;
    if !(t_lo.is_finite() && t_hi.is_finite() && t_lo < t_hi) {
        return Err(invalid(format!("target range [{t_lo}, {t_hi}] is not a finite interval")));
    }
    if n_samples == 0 {
        return Err(invalid("range estimation needs samples"));
    }
    let joint = Bounds::product([w_box, x_box]);
    let wd = w_box.dim();
    let mut lo: Vec<f64> = Vec::new();
    let mut hi: Vec<f64> = Vec::new();
    for p in lhs_sample_seeded(&joint, n_samples, seed) {
        let y = f(&p[..wd], &p[wd..]);
        if lo.is_empty() {
            lo = vec![f64::INFINITY; y.len()];
            hi = vec![f64::NEG_INFINITY; y.len()];
        }
        for (k, v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(invalid(format!("stage output {v} while estimating its range")));
            }
            lo[k] = lo[k].min(*v);
            hi[k] = hi[k].max(*v);
        }
    }
    let mut scale = Vec::with_capacity(lo.len());
    let mut offset = Vec::with_capacity(lo.len());
    for (l, h) in lo.iter().zip(&hi) {
        if h - l <= 0.0 {
            return Err(invalid("stage output is constant over its domain; cannot scale"));
        }
        let a = (t_hi - t_lo) / (h - l);
        scale.push(a);
        offset.push(t_lo - a * l);
    }
    let (s, o) = (scale.clone(), offset.clone());
    let evaluator: StageFn = Arc::new(move |w: &[f64], x: &[f64]| {
        f(w, x)
            .into_iter()
            .zip(s.iter().zip(&o))
            .map(|(y, (a, b))| a * y + b)
            .collect()
    });
    Ok(ScaledStage {
        evaluator,
        scale,
        offset,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum {
    pub value: f64,
    pub controls: Vec<Vec<f64>>,
}

/// Budget used for `F*`: 10⁴ space-filling points and 20 refined starts.
pub fn optimum_budget(seed: u64) -> OptBudget {
    OptBudget {
        n_space_filling: 10_000,
        n_top: 20,
        max_evals: 20 * 400,
        max_refine_steps: 200,
        seed,
        ..OptBudget::default()
    }
}

/// Numerical maximum of the whole cascade over its control boxes.
pub fn true_optimum(cascade: &CascadeSpec, budget: &OptBudget) -> Result<Optimum> {
    let boxes = cascade.control_boxes();
    let bounds = Bounds::product(&boxes);
    let f = |flat: &[f64]| {
        let controls: Vec<Vec<f64>> = cascade.split_controls(1, flat).into_iter().map(<[f64]>::to_vec).collect();
        cascade.eval_cascade(&controls).map_or(f64::NAN, |o| o.value)
    };
    let best = maximize(&f, &bounds, budget)?;
    Ok(Optimum {
        value: best.value,
        controls: cascade.split_controls(1, &best.x).into_iter().map(<[f64]>::to_vec).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn base_function_references() {
        assert_eq!(base_function("rosenbrock", &[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(base_function("sphere", &[0.0, 0.0]).unwrap(), 0.0);
        assert_relative_eq!(base_function("matyas", &[1.0, 1.0]).unwrap(), -0.04, epsilon = 1e-15);
        assert!(base_function("matyas", &[1.0]).is_err());
        assert!(base_function("rosenbrock", &[1.0]).is_err());
        assert!(base_function("ackley", &[1.0]).is_err());
    }

    #[test]
    fn registered_dims() {
        let m = lookup("matyas-3").unwrap();
        assert_eq!(m.control_dims, vec![2, 1, 1]);
        let r = lookup("rosenbrock-5").unwrap();
        assert_eq!(r.n_stages(), 5);
        assert!(r.boxes().iter().all(|b| b.lower().iter().all(|&l| l == -2.0)));
        assert_eq!(r.n_initial, 20);
        assert!(lookup("nope").is_err());
    }

    #[test]
    fn every_benchmark_evaluates() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for spec in registry() {
            let b = build_cascade(&spec, 1).unwrap();
            for _ in 0..100 {
                let controls: Vec<Vec<f64>> = spec.boxes().iter().map(|bx| bx.sample(&mut rng)).collect();
                let v = b.cascade.eval_cascade(&controls).unwrap().value;
                assert!(v.is_finite(), "{}", spec.name);
            }
        }
    }

    #[test]
    fn scaling_midpoint_and_inverse() {
        let id: StageFn = Arc::new(|_: &[f64], x: &[f64]| vec![x[0]]);
        let s = scale_stage(
            id.clone(),
            &Bounds::empty(),
            &Bounds::cube(1, 0.0, 1.0).unwrap(),
            (-10.0, 10.0),
            10_000,
            3,
        )
        .unwrap();
        assert!((s.evaluator)(&[], &[0.5])[0].abs() < 1e-3);
        for &x in &[0.0, 0.2, 0.77, 1.0] {
            let y = (s.evaluator)(&[], &[x])[0];
            assert_relative_eq!((y - s.offset[0]) / s.scale[0], x, epsilon = 1e-10);
        }
        let constant: StageFn = Arc::new(|_: &[f64], _: &[f64]| vec![2.0]);
        assert!(scale_stage(constant, &Bounds::empty(), &Bounds::cube(1, 0.0, 1.0).unwrap(), (0.0, 1.0), 10, 0).is_err());
    }

    #[test]
    fn sample_paths_are_seeded() {
        let a = sample_path_cascade(3, 5).unwrap();
        let b = sample_path_cascade(3, 5).unwrap();
        let c = sample_path_cascade(3, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut differs = false;
        for _ in 0..50 {
            let controls: Vec<Vec<f64>> = a.control_boxes().iter().map(|bx| bx.sample(&mut rng)).collect();
            assert_eq!(a.eval_cascade(&controls).unwrap(), b.eval_cascade(&controls).unwrap());
            differs |= a.eval_stage(1, &[], &controls[0]).unwrap() != c.eval_stage(1, &[], &controls[0]).unwrap();
        }
        assert!(differs);
    }
}
