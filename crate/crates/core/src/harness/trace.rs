//! Per-step CSV traces.
//!
//! One row per `(k, agent, state)` with columns
//! `k,agent,state,lower,upper,width,e_lower,e_upper`. Steps up to
//! [`FULL_TRACE_STEPS`] are all kept; later steps are thinned to every
//! [`THINNING`]th one plus the last.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::pipeline::ObserverRun;
use super::simulate::Trajectory;

pub const FULL_TRACE_STEPS: usize = 10_000;
pub const THINNING: usize = 10;
pub const HEADER: &str = "k,agent,state,lower,upper,width,e_lower,e_upper";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub agent: usize,
    pub state: usize,
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
    pub e_lower: f64,
    pub e_upper: f64,
}

fn kept(k: usize, last: usize) -> bool {
    k <= FULL_TRACE_STEPS || k == last || (k - FULL_TRACE_STEPS).is_multiple_of(THINNING)
}

pub fn trace_rows(run: &ObserverRun, trajectory: &Trajectory) -> Vec<TraceRow> {
    let last = run.framers.len() - 1;
    let mut rows = Vec::new();
    for (k, framers) in run.framers.iter().enumerate().filter(|(k, _)| kept(*k, last)) {
        let x = &trajectory.x[k];
        for (agent, f) in framers.iter().enumerate() {
            for state in 0..f.len() {
                let (lo, hi) = (f.lower()[state], f.upper()[state]);
                rows.push(TraceRow {
                    k,
                    agent,
                    state,
                    lower: lo,
                    upper: hi,
                    width: hi - lo,
                    e_lower: x[state] - lo,
                    e_upper: hi - x[state],
                });
            }
        }
    }
    rows
}

pub fn write_csv<W: Write>(out: &mut W, rows: &[TraceRow]) -> Result<()> {
    writeln!(out, "{HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.k, r.agent, r.state, r.lower, r.upper, r.width, r.e_lower, r.e_upper
        )?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<TraceRow>> {
    let mut lines = input.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == HEADER => {}
        Some(Ok(h)) => return Err(Error::Parse(format!("unexpected trace header {h:?}"))),
        Some(Err(e)) => return Err(e.into()),
        None => return Err(Error::Parse("empty trace file".into())),
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Parse(format!("trace line {}: malformed row", n + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad());
        }
        let u = |s: &str| s.parse::<usize>().map_err(|_| bad());
        let x = |s: &str| s.parse::<f64>().map_err(|_| bad());
        rows.push(TraceRow {
            k: u(f[0])?,
            agent: u(f[1])?,
            state: u(f[2])?,
            lower: x(f[3])?,
            upper: x(f[4])?,
            width: x(f[5])?,
            e_lower: x(f[6])?,
            e_upper: x(f[7])?,
        });
    }
    Ok(rows)
}

/// Aggregates of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub rows: usize,
    pub last_k: usize,
    pub agents: usize,
    pub states: usize,
    /// Rows with a negative error, i.e. a framer that missed the state.
    pub violations: usize,
    /// `[agent][state]`.
    pub max_width: Vec<Vec<f64>>,
    pub final_width: Vec<Vec<f64>>,
}

pub fn summarize(rows: &[TraceRow]) -> TraceSummary {
    let agents = rows.iter().map(|r| r.agent + 1).max().unwrap_or(0);
    let states = rows.iter().map(|r| r.state + 1).max().unwrap_or(0);
    let last_k = rows.iter().map(|r| r.k).max().unwrap_or(0);
    let mut max_width = vec![vec![0.0f64; states]; agents];
    let mut final_width = vec![vec![0.0f64; states]; agents];
    let mut violations = 0;
    for r in rows {
        max_width[r.agent][r.state] = max_width[r.agent][r.state].max(r.width);
        if r.k == last_k {
            final_width[r.agent][r.state] = r.width;
        }
        if r.e_lower < 0.0 || r.e_upper < 0.0 {
            violations += 1;
        }
    }
    TraceSummary {
        rows: rows.len(),
        last_k,
        agents,
        states,
        violations,
        max_width,
        final_width,
    }
}
