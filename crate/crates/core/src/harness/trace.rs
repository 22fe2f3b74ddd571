//! CSV persistence of run traces and stock-ledger events.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 9] = [
    "seed",
    "t",
    "stage",
    "x",
    "y",
    "best_so_far",
    "simple_regret",
    "spent_cost",
    "ci_gap",
];

/// One stage evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub seed: u64,
    pub t: usize,
    pub stage: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub best_so_far: Option<f64>,
    pub simple_regret: Option<f64>,
    pub spent_cost: f64,
    pub ci_gap: Option<f64>,
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn parse_f64(field: &str, what: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::Io(format!("bad {what} value {field:?}")))
}

fn parse_list(field: &str, what: &str) -> Result<Vec<f64>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field.split(';').map(|p| parse_f64(p, what)).collect()
}

fn parse_opt(field: &str, what: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field, what).map(Some)
    }
}

pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.t.to_string(),
            r.stage.to_string(),
            join(&r.x),
            join(&r.y),
            opt(r.best_so_far),
            opt(r.simple_regret),
            r.spent_cost.to_string(),
            opt(r.ci_gap),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?;
    if header.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(Error::Io(format!("unexpected trace header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let int = |i: usize| -> Result<u64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Io(format!("bad {} value {:?}", TRACE_HEADER[i], &rec[i])))
        };
        rows.push(TraceRow {
            seed: int(0)?,
            t: int(1)? as usize,
            stage: int(2)? as usize,
            x: parse_list(&rec[3], "x")?,
            y: parse_list(&rec[4], "y")?,
            best_so_far: parse_opt(&rec[5], "best_so_far")?,
            simple_regret: parse_opt(&rec[6], "simple_regret")?,
            spent_cost: parse_f64(&rec[7], "spent_cost")?,
            ci_gap: parse_opt(&rec[8], "ci_gap")?,
        });
    }
    Ok(rows)
}

pub const LEDGER_HEADER: [&str; 10] = [
    "seed", "t", "event", "stock_id", "stage", "value", "reuse", "lcb", "ucb", "threshold",
];

/// A ledger snapshot entry or a discard event.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub seed: u64,
    pub t: usize,
    /// `stock` for snapshot entries, `discard` for reductions.
    pub event: String,
    pub stock_id: u64,
    pub stage: usize,
    pub value: Vec<f64>,
    pub reuse: String,
    pub lcb: Option<f64>,
    pub ucb: Option<f64>,
    pub threshold: Option<f64>,
}

pub fn write_ledger<W: Write>(out: W, rows: &[LedgerRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LEDGER_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.t.to_string(),
            r.event.clone(),
            r.stock_id.to_string(),
            r.stage.to_string(),
            join(&r.value),
            r.reuse.clone(),
            opt(r.lcb),
            opt(r.ucb),
            opt(r.threshold),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ledger<R: Read>(input: R) -> Result<Vec<LedgerRow>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let int = |i: usize| -> Result<u64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Io(format!("bad {} value {:?}", LEDGER_HEADER[i], &rec[i])))
        };
        rows.push(LedgerRow {
            seed: int(0)?,
            t: int(1)? as usize,
            event: rec[2].to_string(),
            stock_id: int(3)?,
            stage: int(4)? as usize,
            value: parse_list(&rec[5], "value")?,
            reuse: rec[6].to_string(),
            lcb: parse_opt(&rec[7], "lcb")?,
            ucb: parse_opt(&rec[8], "ucb")?,
            threshold: parse_opt(&rec[9], "threshold")?,
        });
    }
    Ok(rows)
}
