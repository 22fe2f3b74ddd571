//! Suspension setting: intermediate outputs are banked as stocks and the
//! cascade may resume from any of them.

use serde::{Deserialize, Serialize};

use crate::acq_ci::{maximize_surface, CiParams, Surface};
use crate::acq_ei::{maximize_ei, EiContext};
use crate::error::{invalid, Error, Result};
use crate::inner_opt::Maximizer;
use crate::surrogate::CascadeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReuseMode {
    /// A stock is consumed by the stage run that resumes from it.
    Once,
    /// Stocks stay available after use.
    Unlimited,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stock {
    pub id: u64,
    /// Stage that produced the value; 0 for the initial zero output.
    pub stage: usize,
    pub value: Vec<f64>,
    pub reuse: ReuseMode,
    pub created: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discard {
    pub t: usize,
    pub id: u64,
    pub stage: usize,
    pub value: Vec<f64>,
    pub lcb: f64,
    pub ucb: f64,
    /// Largest LCB over all stocks when the stock was discarded.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StockLedger {
    n_stages: usize,
    stocks: Vec<Stock>,
    next_id: u64,
    discards: Vec<Discard>,
}

impl StockLedger {
    /// A ledger holding only the permanent stage-0 stock `y_initial`.
    pub fn new(n_stages: usize, y_initial: Vec<f64>) -> Self {
        Self {
            n_stages,
            stocks: vec![Stock {
                id: 0,
                stage: 0,
                value: y_initial,
                reuse: ReuseMode::Unlimited,
                created: 0,
            }],
            next_id: 1,
            discards: Vec::new(),
        }
    }

    pub fn n_stages(&self) -> usize {
        self.n_stages
    }

    /// Stocks ordered by stage, then id.
    pub fn stocks(&self) -> &[Stock] {
        &self.stocks
    }

    pub fn stage_stocks(&self, stage: usize) -> impl Iterator<Item = &Stock> {
        self.stocks.iter().filter(move |s| s.stage == stage)
    }

    pub fn get(&self, id: u64) -> Option<&Stock> {
        self.stocks.iter().find(|s| s.id == id)
    }

    pub fn discards(&self) -> &[Discard] {
        &self.discards
    }

    /// Adds a stock and returns its id.
    pub fn add(&mut self, stage: usize, value: Vec<f64>, reuse: ReuseMode, t: usize) -> Result<u64> {
        if stage == 0 || stage >= self.n_stages {
            return Err(invalid(format!(
                "stocks hold outputs of stages 1..{}, got stage {stage}",
                self.n_stages
            )));
        }
        let id = self.next_id;
        self.next_id += 1;
        let stock = Stock {
            id,
            stage,
            value,
            reuse,
            created: t,
        };
        let pos = self.stocks.partition_point(|s| (s.stage, s.id) < (stage, id));
        self.stocks.insert(pos, stock);
        Ok(id)
    }

    fn remove(&mut self, id: u64) -> Option<Stock> {
        let pos = self.stocks.iter().position(|s| s.id == id)?;
        Some(self.stocks.remove(pos))
    }
}

/// Per-stage evaluation costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostVector(Vec<f64>);

impl CostVector {
    pub fn new(costs: Vec<f64>) -> Result<Self> {
        if costs.is_empty() {
            return Err(invalid("cost vector is empty"));
        }
        if let Some(c) = costs.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(invalid(format!("stage costs must be positive, got {c}")));
        }
        Ok(Self(costs))
    }

    pub fn uniform(n_stages: usize) -> Self {
        Self(vec![1.0; n_stages])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Cost of stage `n` (1-based).
    pub fn stage(&self, n: usize) -> f64 {
        self.0[n - 1]
    }

    /// Cost of running stages `n..=N`.
    pub fn tail_sum(&self, n: usize) -> f64 {
        self.0[n - 1..].iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuspensionChoice {
    /// Stage to run next (1-based), fed by the stock.
    pub stage: usize,
    pub stock_id: u64,
    pub x: Vec<f64>,
    /// Cost-normalized utility.
    pub score: f64,
    /// Utility before normalization.
    pub utility: f64,
}

/// Best (stage, stock, control) by utility per unit of remaining cascade cost.
pub fn select_suspension(
    ledger: &StockLedger,
    ctx: &EiContext<'_>,
    costs: &CostVector,
    opt: &dyn Maximizer,
) -> Result<SuspensionChoice> {
    select_suspension_within(ledger, ctx, costs, opt, f64::INFINITY)?
        .ok_or_else(|| invalid("the ledger holds no stock"))
}

/// As [`select_suspension`], restricted to candidates whose remaining cascade
/// (this stage through the last) fits in `remaining`. An evaluation that cannot
/// reach the final stage cannot improve the incumbent. `None` when nothing fits.
pub fn select_suspension_within(
    ledger: &StockLedger,
    ctx: &EiContext<'_>,
    costs: &CostVector,
    opt: &dyn Maximizer,
    remaining: f64,
) -> Result<Option<SuspensionChoice>> {
    if costs.len() != ledger.n_stages || ctx.model.n_stages() != ledger.n_stages {
        return Err(invalid("ledger, costs and model disagree on the stage count"));
    }
    let mut best: Option<SuspensionChoice> = None;
    for stock in ledger.stocks() {
        let stage = stock.stage + 1;
        if costs.tail_sum(stage) > remaining {
            continue;
        }
        let choice = maximize_ei(ctx, &stock.value, stage, opt)?;
        let score = choice.value / costs.tail_sum(stage);
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(SuspensionChoice {
                stage,
                stock_id: stock.id,
                x: choice.x,
                score,
                utility: choice.value,
            });
        }
    }
    Ok(best)
}

/// Consumes the used stock (unless reusable) and banks `y_new` when the cascade
/// stopped before the final stage. Returns the new stock id, if any.
pub fn apply_observation(
    ledger: &mut StockLedger,
    choice: &SuspensionChoice,
    y_new: Vec<f64>,
    reuse: ReuseMode,
    t: usize,
) -> Result<Option<u64>> {
    let stock = ledger.get(choice.stock_id).ok_or_else(|| {
        Error::ConsistencyViolation(format!("selected stock {} is not in the ledger", choice.stock_id))
    })?;
    if stock.stage + 1 != choice.stage {
        return Err(Error::ConsistencyViolation(format!(
            "stock {} holds a stage-{} output but stage {} was run",
            stock.id, stock.stage, choice.stage
        )));
    }
    if stock.reuse == ReuseMode::Once {
        ledger.remove(choice.stock_id);
    }
    if choice.stage < ledger.n_stages {
        return ledger.add(choice.stage, y_new, reuse, t).map(Some);
    }
    Ok(None)
}

/// `(max LCB, max UCB)` of the final output reachable from a stock.
pub fn stock_bounds(model: &CascadeModel, stock: &Stock, params: &CiParams, opt: &dyn Maximizer) -> Result<(f64, f64)> {
    let n = stock.stage + 1;
    let lcb = maximize_surface(model, n, &stock.value, Surface::Lcb, params, opt)?.value;
    let ucb = maximize_surface(model, n, &stock.value, Surface::Ucb, params, opt)?.value;
    Ok((lcb, ucb))
}

/// Discards every stock whose best UCB falls below the best LCB over all
/// stocks. The stage-0 stock and `exempt` are kept. Returns the discarded ids.
pub fn stock_reduction(
    ledger: &mut StockLedger,
    model: &CascadeModel,
    params: &CiParams,
    opt: &dyn Maximizer,
    exempt: Option<u64>,
    t: usize,
) -> Result<Vec<u64>> {
    let bounds = ledger
        .stocks()
        .iter()
        .map(|s| stock_bounds(model, s, params, opt))
        .collect::<Result<Vec<_>>>()?;
    let threshold = bounds.iter().map(|b| b.0).fold(f64::NEG_INFINITY, f64::max);
    let doomed: Vec<(u64, f64, f64)> = ledger
        .stocks()
        .iter()
        .zip(&bounds)
        .filter(|(s, (_, ucb))| s.stage > 0 && Some(s.id) != exempt && *ucb < threshold)
        .map(|(s, &(lcb, ucb))| (s.id, lcb, ucb))
        .collect();
    let mut ids = Vec::with_capacity(doomed.len());
    for (id, lcb, ucb) in doomed {
        let stock = ledger.remove(id).expect("stock listed above");
        ledger.discards.push(Discard {
            t,
            id,
            stage: stock.stage,
            value: stock.value,
            lcb,
            ucb,
            threshold,
        });
        ids.push(id);
    }
    Ok(ids)
}
