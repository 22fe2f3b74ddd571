//! Experiment loops for the sequential and suspension settings.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::acq_ci::{ci_select, maximize_surface, q_t, CiParams, Surface};
use crate::acq_ei::{maximize_ei, BaseSamples, EiContext};
use crate::baselines::{cbo_select, fb_select, random_select_with, FbMode};
use crate::benchmarks::{build_cascade, lookup, optimum_budget, true_optimum, Benchmark};
use crate::cascade::{EvalRecord, ObservationLog};
use crate::error::{Error, Result};
use crate::gp::{fit_hyperparams, GpPosterior, KernelSpec, StageDataset, DEFAULT_NOISE};
use crate::inner_opt::{Maximizer, Maximum, OptBudget};
use crate::rng::{substream, substream_seed, Stream};
use crate::surrogate::CascadeModel;
use crate::suspension::{
    apply_observation, select_suspension_within, stock_reduction, CostVector, ReuseMode, StockLedger,
};

use super::config::{Method, RunConfig};
use super::trace::{write_ledger, write_trace, LedgerRow, TraceRow};

/// Outcome of a stopping check.
#[derive(Debug, Clone, PartialEq)]
pub struct StopCheck {
    pub fired: bool,
    /// `max UCB − max LCB` over all controls.
    pub gap: f64,
    /// Maximizer of the LCB, a candidate for the estimated solution.
    pub lcb_max: Maximum,
    pub ucb_max: f64,
}

/// `max UCB − max LCB` over all controls, with the LCB maximizer.
pub fn ci_gap(model: &CascadeModel, params: &CiParams, opt: &dyn Maximizer) -> Result<(f64, Maximum, f64)> {
    let lcb_max = q_t(model, params, opt)?;
    let ucb_max = maximize_surface(model, 1, &model.initial_output(), Surface::Ucb, params, opt)?.value;
    Ok(((ucb_max - lcb_max.value).max(0.0), lcb_max, ucb_max))
}

pub fn stopping_check(model: &CascadeModel, params: &CiParams, xi: f64, opt: &dyn Maximizer) -> Result<StopCheck> {
    if !(xi > 0.0) {
        return Err(Error::InvalidArgument(format!("xi must be positive, got {xi}")));
    }
    let (gap, lcb_max, ucb_max) = ci_gap(model, params, opt)?;
    Ok(StopCheck {
        fired: gap < xi,
        gap,
        lcb_max,
        ucb_max,
    })
}

/// Running maximum of per-sweep LCB maxima and their controls.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimatedSolution {
    best: Option<(f64, Vec<f64>)>,
}

impl EstimatedSolution {
    pub fn update(&mut self, lcb_max: &Maximum) {
        if self.best.as_ref().is_none_or(|(v, _)| lcb_max.value > *v) {
            self.best = Some((lcb_max.value, lcb_max.x.clone()));
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.0)
    }

    /// Flat controls of all stages.
    pub fn controls(&self) -> Result<&[f64]> {
        self.best
            .as_ref()
            .map(|b| b.1.as_slice())
            .ok_or_else(|| Error::Unsupported("no credible-interval sweep has completed".into()))
    }
}

/// The estimated solution from a history of per-sweep LCB maxima.
pub fn estimated_solution(history: &[Maximum]) -> Result<Vec<f64>> {
    let mut est = EstimatedSolution::default();
    history.iter().for_each(|m| est.update(m));
    est.controls().map(<[f64]>::to_vec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub f_star: f64,
    pub best_value: Option<f64>,
    pub final_regret: Option<f64>,
    pub stop_iteration: Option<usize>,
    pub spent_cost: f64,
    pub estimated_solution: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub config: RunConfig,
    pub seeds: Vec<SeedSummary>,
    pub mean_final_regret: Option<f64>,
    pub median_final_regret: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub ledger: Vec<LedgerRow>,
    pub summary: Summary,
}

/// Trace of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub rows: Vec<TraceRow>,
    pub ledger: Vec<LedgerRow>,
    pub summary: SeedSummary,
}

/// Runs every configured seed; a failing seed is logged and the others continue.
pub fn run(config: &RunConfig) -> Result<RunTrace> {
    config.validate()?;
    lookup(&config.benchmark)?;
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut ledger = Vec::new();
    let mut seeds = Vec::new();
    let mut optima: BTreeMap<u64, f64> = BTreeMap::new();
    for &seed in &config.seeds {
        let bseed = config.benchmark_seed.unwrap_or(seed);
        let result = build_cascade(&lookup(&config.benchmark)?, bseed).and_then(|bench| {
            let f_star = match optima.get(&bseed) {
                Some(&v) => v,
                None => {
                    let v = optimum_value(&bench)?;
                    optima.insert(bseed, v);
                    v
                }
            };
            run_seed(config, &bench, f_star, seed)
        });
        match result {
            Ok(r) => {
                rows.extend(r.rows);
                ledger.extend(r.ledger);
                seeds.push(r.summary);
            }
            Err(e) => {
                log::error!("seed {seed} aborted: {e}");
                seeds.push(SeedSummary {
                    seed,
                    f_star: optima.get(&bseed).copied().unwrap_or(f64::NAN),
                    best_value: None,
                    final_regret: None,
                    stop_iteration: None,
                    spent_cost: 0.0,
                    estimated_solution: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let mut regrets: Vec<f64> = seeds.iter().filter_map(|s| s.final_regret).collect();
    regrets.sort_by(f64::total_cmp);
    let mean = (!regrets.is_empty()).then(|| regrets.iter().sum::<f64>() / regrets.len() as f64);
    Ok(RunTrace {
        rows,
        ledger,
        summary: Summary {
            config: config.clone(),
            seeds,
            mean_final_regret: mean,
            median_final_regret: median(&regrets),
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    })
}

pub fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

/// `F*`, analytic when known.
pub fn optimum_value(bench: &Benchmark) -> Result<f64> {
    if let Some(v) = bench.spec.analytic_optimum() {
        return Ok(v);
    }
    Ok(true_optimum(&bench.cascade, &optimum_budget(substream_seed(bench.seed, Stream::Probe, 0)))?.value)
}

/// Writes `trace.csv`, `ledger.csv` (suspension methods) and `summary.json`.
pub fn write_outputs(trace: &RunTrace, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_trace(std::fs::File::create(dir.join("trace.csv"))?, &trace.rows)?;
    if trace.summary.config.method.is_suspension() {
        write_ledger(std::fs::File::create(dir.join("ledger.csv"))?, &trace.ledger)?;
    }
    let json = serde_json::to_string_pretty(&trace.summary).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(())
}

pub fn run_sequential(config: &RunConfig) -> Result<RunTrace> {
    if config.method.is_suspension() {
        return Err(Error::Config(format!("{} is a suspension method", config.method)));
    }
    run(config)
}

pub fn run_suspension(config: &RunConfig) -> Result<RunTrace> {
    if !config.method.is_suspension() {
        return Err(Error::Config(format!("{} is not a suspension method", config.method)));
    }
    run(config)
}

/// Runs one seed on a built benchmark with known `F*`.
pub fn run_seed(config: &RunConfig, bench: &Benchmark, f_star: f64, seed: u64) -> Result<SeedRun> {
    config.validate()?;
    let n = bench.cascade.n_stages();
    let costs = match &config.suspension.costs {
        Some(c) if c.len() != n => {
            return Err(Error::Config(format!("{} stage costs given for {n} stages", c.len())))
        }
        Some(c) => CostVector::new(c.clone())?,
        None => CostVector::uniform(n),
    };
    let mut state = SeedState::new(config, bench, f_star, seed, costs)?;
    if config.method.is_suspension() {
        state.suspension_loop()?;
    } else {
        state.sequential_loop()?;
    }
    Ok(state.finish())
}

struct SeedState<'a> {
    config: &'a RunConfig,
    bench: &'a Benchmark,
    f_star: f64,
    seed: u64,
    costs: CostVector,
    log: ObservationLog,
    /// Complete cascades as (concatenated controls → final output).
    fb_data: StageDataset,
    kernels: Vec<KernelSpec>,
    fb_kernel: KernelSpec,
    best: Option<f64>,
    spent: f64,
    rows: Vec<TraceRow>,
    ledger_rows: Vec<LedgerRow>,
    estimate: EstimatedSolution,
    stop_iteration: Option<usize>,
}

impl<'a> SeedState<'a> {
    fn new(config: &'a RunConfig, bench: &'a Benchmark, f_star: f64, seed: u64, costs: CostVector) -> Result<Self> {
        let cascade = &bench.cascade;
        let total_dim: usize = cascade.stages().iter().map(|s| s.control_dim()).sum();
        let width = bench.spec.hi - bench.spec.lo;
        let fb_kernel = KernelSpec::gaussian((width / 4.0).powi(2), vec![], vec![width / 4.0; total_dim])?;
        let mut state = Self {
            config,
            bench,
            f_star,
            seed,
            costs,
            log: ObservationLog::new(cascade),
            fb_data: StageDataset::new(0, total_dim, 1),
            kernels: bench.initial_kernels(),
            fb_kernel,
            best: None,
            spent: 0.0,
            rows: Vec::new(),
            ledger_rows: Vec::new(),
            estimate: EstimatedSolution::default(),
            stop_iteration: None,
        };
        state.initial_design()?;
        Ok(state)
    }

    fn initial_design(&mut self) -> Result<()> {
        let cascade = &self.bench.cascade;
        let count = self.config.initial_points.unwrap_or(self.bench.spec.n_initial);
        let mut rng = substream(self.seed, Stream::InitialDesign, 0);
        let boxes = cascade.control_boxes();
        for _ in 0..count {
            let controls = random_select_with(&boxes, &mut rng);
            self.execute(0, &controls, false, None)?;
        }
        Ok(())
    }

    /// Runs a full cascade with fixed controls, logging every stage.
    fn execute(&mut self, t: usize, controls: &[Vec<f64>], traced: bool, gap: Option<f64>) -> Result<()> {
        let mut y = self.bench.cascade.initial_output();
        for (i, x) in controls.iter().enumerate() {
            y = self.observe(t, i + 1, y, x.clone(), traced, gap)?;
        }
        self.fb_data.push(&[], &controls.concat(), &y)?;
        Ok(())
    }

    /// Evaluates one stage, logs it and (if `traced`) emits a trace row.
    fn observe(&mut self, t: usize, stage: usize, w: Vec<f64>, x: Vec<f64>, traced: bool, gap: Option<f64>) -> Result<Vec<f64>> {
        let y = self.bench.cascade.eval_stage(stage, &w, &x)?;
        if stage == self.bench.cascade.n_stages() {
            self.best = Some(self.best.map_or(y[0], |b| b.max(y[0])));
        }
        self.log.append(EvalRecord::new(t, stage, w, x.clone(), y.clone()))?;
        if traced {
            self.spent += self.costs.stage(stage);
            self.rows.push(TraceRow {
                seed: self.seed,
                t,
                stage,
                x,
                y: y.clone(),
                best_so_far: self.best,
                simple_regret: self.best.map(|b| self.f_star - b),
                spent_cost: self.spent,
                ci_gap: gap,
            });
        }
        Ok(y)
    }

    fn fit_models(&mut self, t: usize) -> Result<CascadeModel> {
        let fixed = self.bench.spec.fixed_hyperparameters();
        let mut stages = Vec::with_capacity(self.kernels.len());
        for (i, kernel) in self.kernels.iter_mut().enumerate() {
            let data = self.log.dataset(i + 1);
            if !fixed {
                let s = substream_seed(self.seed, Stream::Hyperparameters, (t * 64 + i) as u64);
                *kernel = fit_hyperparams(data, kernel, DEFAULT_NOISE, s)?.kernel;
            }
            stages.push(GpPosterior::fit(data, kernel, DEFAULT_NOISE)?);
        }
        CascadeModel::new(stages, self.bench.cascade.control_boxes())
    }

    fn fit_fb(&mut self, t: usize) -> Result<GpPosterior> {
        let s = substream_seed(self.seed, Stream::Hyperparameters, (t * 64 + 63) as u64);
        self.fb_kernel = fit_hyperparams(&self.fb_data, &self.fb_kernel, DEFAULT_NOISE, s)?.kernel;
        GpPosterior::fit(&self.fb_data, &self.fb_kernel, DEFAULT_NOISE)
    }

    fn optimizer(&self, t: usize, stage: usize) -> OptBudget {
        let counter = (t * 64 + stage) as u64;
        self.config
            .optimizer
            .with_seed(substream_seed(self.seed, Stream::Optimizer, counter))
    }

    fn f_best(&self) -> f64 {
        self.best.unwrap_or(f64::NEG_INFINITY)
    }

    fn sequential_loop(&mut self) -> Result<()> {
        let config = self.config;
        let method = config.method;
        let n = self.bench.cascade.n_stages();
        let boxes = self.bench.cascade.control_boxes();
        for t in 1..=config.iterations {
            // Plans that fix every stage's controls before the sweep starts.
            let plan: Option<Vec<Vec<f64>>> = match method {
                Method::Random => {
                    let mut rng = substream(self.seed, Stream::RandomPolicy, t as u64);
                    Some(random_select_with(&boxes, &mut rng))
                }
                Method::FbEi | Method::FbUcb => {
                    let gp = self.fit_fb(t)?;
                    let mode = if method == Method::FbEi { FbMode::Ei } else { FbMode::Ucb };
                    Some(fb_select(&gp, mode, self.f_best(), &boxes, &self.optimizer(t, 0))?.controls)
                }
                _ => None,
            };
            if let Some(controls) = plan {
                self.execute(t, &controls, true, None)?;
                continue;
            }

            let model = self.fit_models(t)?;
            if method == Method::Cbo {
                let plan = cbo_select(
                    &model,
                    self.bench.output_ranges(),
                    &config.cbo,
                    self.f_best(),
                    &self.optimizer(t, 0),
                )?;
                self.execute(t, &plan.controls, true, None)?;
                continue;
            }

            let mut gap = None;
            let mut q = f64::NEG_INFINITY;
            if method.has_ci() {
                let (g, lcb_max, _) = ci_gap(&model, &config.ci, &self.optimizer(t, 0))?;
                self.estimate.update(&lcb_max);
                q = lcb_max.value;
                gap = Some(g);
                if config.xi.is_some_and(|xi| g < xi) {
                    self.stop_iteration = Some(t);
                    break;
                }
            }

            let mut y = self.bench.cascade.initial_output();
            for stage in 1..=n {
                let opt = self.optimizer(t, stage);
                let x = match method {
                    Method::Ei => {
                        let base = BaseSamples::draw(
                            &model,
                            config.mc_samples,
                            substream_seed(self.seed, Stream::BaseSamples, (t * 64 + stage) as u64),
                        );
                        let ctx = EiContext::new(&model, self.f_best(), &base);
                        maximize_ei(&ctx, &y, stage, &opt)?.x
                    }
                    Method::Ci => {
                        let nested = config.nested_optimizer.clone();
                        ci_select(&model, &y, stage, t, q, &config.ci, &opt, &nested)?.x
                    }
                    Method::Cucb => {
                        let m = maximize_surface(&model, stage, &y, Surface::Ucb, &config.ci, &opt)?;
                        m.x[..model.control_box(stage).dim()].to_vec()
                    }
                    _ => unreachable!("handled above"),
                };
                y = self.observe(t, stage, y, x, true, gap)?;
            }
        }
        Ok(())
    }

    fn suspension_loop(&mut self) -> Result<()> {
        let config = self.config;
        let n = self.bench.cascade.n_stages();
        let budget = config
            .suspension
            .budget
            .unwrap_or(config.iterations as f64 * self.costs.tail_sum(1));
        let reuse = config.suspension.reuse;
        let mut ledger = StockLedger::new(n, self.bench.cascade.initial_output());
        let mut t = 0;
        // The final stage alone is the cheapest way to finish a cascade.
        while budget - self.spent >= self.costs.stage(n) {
            t += 1;
            let model = self.fit_models(t)?;
            let base = BaseSamples::draw(
                &model,
                config.mc_samples,
                substream_seed(self.seed, Stream::BaseSamples, t as u64),
            );
            let ctx = EiContext::new(&model, self.f_best(), &base);
            let remaining = budget - self.spent;
            let Some(choice) = select_suspension_within(&ledger, &ctx, &self.costs, &self.optimizer(t, 0), remaining)?
            else {
                break;
            };
            let w = ledger
                .get(choice.stock_id)
                .map(|s| s.value.clone())
                .ok_or_else(|| Error::ConsistencyViolation("selected stock vanished".into()))?;
            let y = self.observe(t, choice.stage, w, choice.x.clone(), true, None)?;
            let new_id = apply_observation(&mut ledger, &choice, y, reuse, t)?;
            if config.method == Method::EiSusR {
                let nested = config.nested_optimizer.clone();
                stock_reduction(&mut ledger, &model, &config.ci, &nested, new_id, t)?;
            }
            self.snapshot_ledger(&ledger, t);
        }
        Ok(())
    }

    fn snapshot_ledger(&mut self, ledger: &StockLedger, t: usize) {
        let reuse_name = |r: ReuseMode| match r {
            ReuseMode::Once => "once",
            ReuseMode::Unlimited => "unlimited",
        };
        for d in ledger.discards().iter().filter(|d| d.t == t) {
            self.ledger_rows.push(LedgerRow {
                seed: self.seed,
                t,
                event: "discard".into(),
                stock_id: d.id,
                stage: d.stage,
                value: d.value.clone(),
                reuse: String::new(),
                lcb: Some(d.lcb),
                ucb: Some(d.ucb),
                threshold: Some(d.threshold),
            });
        }
        for s in ledger.stocks() {
            self.ledger_rows.push(LedgerRow {
                seed: self.seed,
                t,
                event: "stock".into(),
                stock_id: s.id,
                stage: s.stage,
                value: s.value.clone(),
                reuse: reuse_name(s.reuse).into(),
                lcb: None,
                ucb: None,
                threshold: None,
            });
        }
    }

    fn finish(self) -> SeedRun {
        SeedRun {
            summary: SeedSummary {
                seed: self.seed,
                f_star: self.f_star,
                best_value: self.best,
                final_regret: self.best.map(|b| self.f_star - b),
                stop_iteration: self.stop_iteration,
                spent_cost: self.spent,
                estimated_solution: self.estimate.controls().ok().map(<[f64]>::to_vec),
                error: None,
            },
            rows: self.rows,
            ledger: self.ledger_rows,
        }
    }
}
