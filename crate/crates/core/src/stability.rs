//! Collective error dynamics and their stability certificates.
//!
//! The collective error of `N` agents on an `n`-state plant is a vector of
//! length `2Nn` laid out as `[e̲¹; ē¹; …; e̲ᴺ; ēᴺ]`. With 0-based agent `i`
//! and state `s`, the lower error of `(i, s)` sits at row `2n·i + s` and the
//! upper error at row `2n·i + s + n`.
//!
//! Noise-free, the error evolves as `e_{k+1} = H_k Â e_k` where
//! `Â = diag(Â¹, …, Âᴺ)`, `Âⁱ = [Ã⁺ Ã⁻; Ã⁻ Ã⁺]`, and `H_k` is a row selector
//! choosing, for every `(i, s, side)`, which agent in `N_i^d` supplied the
//! tightest bound. Selectors are kept as [`SelectionAssignment`] maps and are
//! never stored as dense 0/1 matrices outside of tests.

use std::collections::HashSet;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Digraph;
use crate::interval::{sign_split, IntervalVector};
use crate::synthesis::{AgentGains, CpdnResult};

/// Certificates require `value < 1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-9;
/// Candidate-product size up to which the lower spectral radius is computed by
/// enumerating every selection.
pub const DEFAULT_EXHAUSTIVE_LIMIT: u64 = 1_000_000;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 100_000;
const POLICY_MAX_ITERS: usize = 10_000;
const POLISH_MAX_PASSES: usize = 100;

pub fn lower_index(n: usize, agent: usize, state: usize) -> usize {
    2 * n * agent + state
}

pub fn upper_index(n: usize, agent: usize, state: usize) -> usize {
    2 * n * agent + state + n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Lower,
    Upper,
}

/// The nonnegative block-diagonal lift `Â`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveMatrix {
    n: usize,
    agents: usize,
    matrix: DMatrix<f64>,
}

impl CollectiveMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn dim(&self) -> usize {
        2 * self.n * self.agents
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

pub fn assemble_ahat(gains: &[AgentGains]) -> Result<CollectiveMatrix> {
    let agents = gains.len();
    if agents == 0 {
        return Err(Error::InvalidInput("no agents".into()));
    }
    let n = gains[0].n();
    let dim = 2 * n * agents;
    let mut matrix = DMatrix::zeros(dim, dim);
    for (i, g) in gains.iter().enumerate() {
        if g.a_tilde.shape() != (n, n) {
            return Err(Error::shape("assemble_ahat", format!("{n}x{n}"), format!("{:?}", g.a_tilde.shape())));
        }
        let split = sign_split(&g.a_tilde)?;
        let o = 2 * n * i;
        matrix.view_mut((o, o), (n, n)).copy_from(&split.plus);
        matrix.view_mut((o, o + n), (n, n)).copy_from(&split.minus);
        matrix.view_mut((o + n, o), (n, n)).copy_from(&split.minus);
        matrix.view_mut((o + n, o + n), (n, n)).copy_from(&split.plus);
    }
    Ok(CollectiveMatrix { n, agents, matrix })
}

/// For every `(agent, state, side)`, the agent whose bound is adopted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectionAssignment {
    n: usize,
    agents: usize,
    lower: Vec<usize>,
    upper: Vec<usize>,
}

impl SelectionAssignment {
    /// Every agent keeps its own bounds (`H = I`).
    pub fn identity(n: usize, agents: usize) -> Self {
        let own: Vec<usize> = (0..agents).flat_map(|i| std::iter::repeat_n(i, n)).collect();
        Self {
            n,
            agents,
            lower: own.clone(),
            upper: own,
        }
    }

    /// `lower[i*n + s]`, `upper[i*n + s]` give the source agents.
    pub fn from_sources(n: usize, agents: usize, lower: Vec<usize>, upper: Vec<usize>) -> Result<Self> {
        if lower.len() != n * agents || upper.len() != n * agents {
            return Err(Error::InvalidAssignment(format!(
                "expected {} sources per side",
                n * agents
            )));
        }
        if let Some(bad) = lower.iter().chain(&upper).find(|&&j| j >= agents) {
            return Err(Error::InvalidAssignment(format!("source agent {bad} out of range")));
        }
        Ok(Self {
            n,
            agents,
            lower,
            upper,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn dim(&self) -> usize {
        2 * self.n * self.agents
    }

    pub fn source(&self, agent: usize, state: usize, side: Side) -> usize {
        match side {
            Side::Lower => self.lower[agent * self.n + state],
            Side::Upper => self.upper[agent * self.n + state],
        }
    }

    /// The row of `Â` that row `r` of `H Â` copies.
    pub fn selected_row(&self, r: usize) -> usize {
        let n = self.n;
        let agent = r / (2 * n);
        let local = r % (2 * n);
        if local < n {
            lower_index(n, self.lower[agent * n + local], local)
        } else {
            upper_index(n, self.upper[agent * n + local - n], local - n)
        }
    }

    /// `H v`.
    pub fn select_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim(), |r, _| v[self.selected_row(r)])
    }

    /// `H M` for a `2Nn`-row matrix.
    pub fn select_rows(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim(), m.ncols());
        for r in 0..self.dim() {
            out.set_row(r, &m.row(self.selected_row(r)));
        }
        out
    }

    /// The dense 0/1 selector. Intended for tests and diagnostics.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim(), self.dim());
        for r in 0..self.dim() {
            h[(r, self.selected_row(r))] = 1.0;
        }
        h
    }

    /// Checks `source(i, s, ·) ∈ N_i^d` for every pair.
    pub fn validate(&self, graph: &Digraph, d: usize) -> Result<()> {
        if graph.node_count() != self.agents {
            return Err(Error::InvalidAssignment(format!(
                "assignment has {} agents, graph has {} nodes",
                self.agents,
                graph.node_count()
            )));
        }
        for i in 0..self.agents {
            let hood = graph.dhop(i, d)?;
            for s in 0..self.n {
                for side in [Side::Lower, Side::Upper] {
                    let j = self.source(i, s, side);
                    if hood.binary_search(&j).is_err() {
                        return Err(Error::InvalidAssignment(format!(
                            "agent {i}, state {s}, {side:?}: source {j} is not within {d} hops"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Infnorm,
    SpectralRadius,
    LowerSpectralRadius,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub kind: CertificateKind,
    pub value: f64,
    pub assignment: SelectionAssignment,
    pub stable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

fn is_stable(value: f64) -> bool {
    value < 1.0 - STABILITY_MARGIN
}

/// Builds `H_*` from the stabilizer map: both sides of `(i, s)` read `ℓ(i, s)`.
pub fn hstar_from_assignment(cpdn: &CpdnResult, graph: &Digraph, d: usize) -> Result<SelectionAssignment> {
    if !cpdn.success {
        return Err(Error::InvalidAssignment("detectability check failed; no stabilizer map".into()));
    }
    let agents = cpdn.stabilizer.len();
    let n = cpdn.stabilizer.first().map_or(0, Vec::len);
    let mut sources = Vec::with_capacity(agents * n);
    for i in 0..agents {
        for s in 0..n {
            let l = cpdn
                .stabilizer_of(i, s)
                .ok_or_else(|| Error::InvalidAssignment(format!("no stabilizer for agent {i}, state {s}")))?;
            sources.push(l);
        }
    }
    let assignment = SelectionAssignment::from_sources(n, agents, sources.clone(), sources)?;
    assignment.validate(graph, d)?;
    Ok(assignment)
}

/// `‖H Â‖∞`, which bounds `ρ(H Â)` from above.
pub fn infnorm_certificate(assignment: &SelectionAssignment, ahat: &CollectiveMatrix) -> StabilityCertificate {
    let value = (0..assignment.dim())
        .map(|r| ahat.matrix.row(assignment.selected_row(r)).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    StabilityCertificate {
        kind: CertificateKind::Infnorm,
        value,
        assignment: assignment.clone(),
        stable: is_stable(value),
        warning: None,
    }
}

/// `ρ(H Â)` via [`spectral_radius`].
pub fn spectral_certificate(assignment: &SelectionAssignment, ahat: &CollectiveMatrix) -> Result<StabilityCertificate> {
    let sr = spectral_radius(&assignment.select_rows(&ahat.matrix))?;
    Ok(StabilityCertificate {
        kind: CertificateKind::SpectralRadius,
        value: sr.value,
        assignment: assignment.clone(),
        stable: is_stable(sr.value),
        warning: (!sr.converged).then(|| "power iteration did not converge".to_string()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralRadius {
    pub value: f64,
    /// Nonnegative vector with `M v ≈ value · v`, normalized to unit 1-norm.
    pub vector: DVector<f64>,
    pub nilpotent: bool,
    pub converged: bool,
    pub iterations: usize,
}

/// `M^k = 0` for `k = dim`, decided on the sparsity pattern by repeated
/// squaring. For nonnegative `M` the pattern of `M^k` is exact.
pub fn is_nilpotent(m: &DMatrix<f64>) -> bool {
    let dim = m.nrows();
    if dim == 0 {
        return true;
    }
    let mut p: Vec<Vec<bool>> = (0..dim)
        .map(|i| (0..dim).map(|j| m[(i, j)] != 0.0).collect())
        .collect();
    let mut power = 1usize;
    while power < dim {
        let mut q = vec![vec![false; dim]; dim];
        for i in 0..dim {
            for k in 0..dim {
                if p[i][k] {
                    for j in 0..dim {
                        q[i][j] |= p[k][j];
                    }
                }
            }
        }
        p = q;
        power *= 2;
        if p.iter().all(|row| row.iter().all(|v| !v)) {
            return true;
        }
    }
    p.iter().all(|row| row.iter().all(|v| !v))
}

/// Strongly connected components of the nonzero pattern (iterative Tarjan).
fn pattern_components(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let dim = m.nrows();
    let succ: Vec<Vec<usize>> = (0..dim).map(|i| (0..dim).filter(|&j| m[(i, j)] != 0.0).collect()).collect();
    let mut index = vec![usize::MAX; dim];
    let mut low = vec![0; dim];
    let mut on_stack = vec![false; dim];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0;
    for root in 0..dim {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call = vec![(root, 0usize)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if let Some(&w) = succ[v].get(*pos) {
                *pos += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                while let Some(w) = stack.pop() {
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comps.push(comp);
            }
        }
    }
    comps
}

/// Spectral radius of an irreducible block from the Collatz–Wielandt bracket
/// of the shifted iteration. Returns the bracket midpoint, or its upper end
/// if it never closes.
fn irreducible_radius(m: &DMatrix<f64>) -> (f64, bool, usize) {
    let dim = m.nrows();
    let mut v = DVector::from_element(dim, 1.0 / dim as f64);
    let mut hi = f64::INFINITY;
    for it in 1..=POWER_MAX_ITERS {
        let mv = m * &v;
        let (lo, h) = mv
            .iter()
            .zip(v.iter())
            .map(|(a, b)| a / b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
        hi = h;
        if hi - lo <= 0.1 * POWER_TOL * hi.max(1.0) {
            return (0.5 * (lo + hi), true, it);
        }
        let next = mv + &v;
        let norm = next.sum();
        v = next / norm;
    }
    (hi, false, POWER_MAX_ITERS)
}

/// Spectral radius of a nonnegative square matrix.
///
/// Nilpotent patterns return exactly 0. Otherwise the value is the largest
/// radius over the diagonal blocks of the strongly connected components:
/// singleton blocks are read off the diagonal and larger ones are bracketed
/// by the shifted iteration until the Collatz–Wielandt bounds agree to about
/// `1e-11`.
///
/// The reported vector comes from the same shifted iteration on the whole
/// matrix, stopped when the bracket closes or when the estimate moves by
/// less than `1e-10` and the geometric extrapolation of the remaining
/// movement is also below `1e-10`. It is only approximately an eigenvector
/// when the matrix is reducible.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<SpectralRadius> {
    let dim = m.nrows();
    if m.ncols() != dim {
        return Err(Error::shape("spectral_radius", "square", format!("{}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("spectral_radius expects a finite nonnegative matrix".into()));
    }
    let uniform = DVector::from_element(dim, 1.0 / dim.max(1) as f64);
    if is_nilpotent(m) {
        return Ok(SpectralRadius {
            value: 0.0,
            vector: uniform,
            nilpotent: true,
            converged: true,
            iterations: 0,
        });
    }
    let mut value = 0.0f64;
    let mut converged = true;
    let mut iterations = 0;
    for comp in pattern_components(m) {
        if comp.len() == 1 {
            value = value.max(m[(comp[0], comp[0])]);
            continue;
        }
        let block = m.select_rows(&comp).select_columns(&comp);
        let (r, ok, its) = irreducible_radius(&block);
        value = value.max(r);
        converged &= ok;
        iterations += its;
    }

    let mut v = uniform;
    let mut prev = f64::NAN;
    let mut deltas = [f64::NAN; 2];
    for _ in 1..=POWER_MAX_ITERS {
        let mv = m * &v;
        let estimate = mv.sum();
        let bracket_closed = v.iter().all(|x| *x > 0.0) && {
            let (lo, hi) = mv
                .iter()
                .zip(v.iter())
                .map(|(a, b)| a / b)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
            hi - lo <= 1e-13 * hi.max(1.0)
        };
        let delta = (estimate - prev).abs();
        // geometric tail of the remaining change, from the observed contraction
        let q = (delta / deltas[1]).max((delta / deltas[0]).sqrt());
        let tail = if delta == 0.0 {
            0.0
        } else if q < 1.0 {
            delta * q / (1.0 - q)
        } else {
            f64::INFINITY
        };
        iterations += 1;
        if bracket_closed || (delta < POWER_TOL && tail < POWER_TOL) {
            break;
        }
        deltas = [deltas[1], delta];
        prev = estimate;
        let next = mv + &v;
        let norm = next.sum();
        v = next / norm;
    }
    Ok(SpectralRadius {
        value,
        vector: v,
        nilpotent: false,
        converged,
        iterations,
    })
}

/// Row-wise candidate sets of an independent-row-uncertainty family.
#[derive(Debug, Clone, PartialEq)]
pub struct RowCandidates {
    dim: usize,
    rows: Vec<Vec<DVector<f64>>>,
}

impl RowCandidates {
    pub fn new(rows: Vec<Vec<DVector<f64>>>) -> Result<Self> {
        let dim = rows.len();
        for (r, cands) in rows.iter().enumerate() {
            if cands.is_empty() {
                return Err(Error::InvalidInput(format!("row {r} has no candidates")));
            }
            for c in cands {
                if c.len() != dim {
                    return Err(Error::shape("RowCandidates", dim, c.len()));
                }
                if c.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidInput(format!("row {r} has a negative or non-finite candidate")));
                }
            }
        }
        Ok(Self { dim, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn candidates(&self, row: usize) -> &[DVector<f64>] {
        &self.rows[row]
    }

    /// Product of candidate-set sizes, saturating.
    pub fn combinations(&self) -> u64 {
        self.rows
            .iter()
            .fold(1u64, |acc, c| acc.saturating_mul(c.len() as u64))
    }

    pub fn assemble(&self, choice: &[usize]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, &k) in choice.iter().enumerate() {
            m.set_row(r, &self.rows[r][k].transpose());
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LsrMethod {
    Exhaustive,
    PolicyIteration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsrResult {
    pub value: f64,
    /// Candidate index chosen per row.
    pub choice: Vec<usize>,
    pub method: LsrMethod,
    pub nilpotent: bool,
    pub warning: Option<String>,
}

/// Minimum spectral radius over the family; exhaustive when the number of
/// selections is at most `exhaustive_limit`, policy iteration otherwise.
pub fn lower_spectral_radius(cands: &RowCandidates, exhaustive_limit: u64) -> Result<LsrResult> {
    if cands.combinations() <= exhaustive_limit {
        lsr_exhaustive(cands)
    } else {
        lsr_policy_iteration(cands)
    }
}

/// Enumerates every selection; the first minimizer in odometer order wins.
pub fn lsr_exhaustive(cands: &RowCandidates) -> Result<LsrResult> {
    let dim = cands.dim();
    let mut choice = vec![0usize; dim];
    let mut best: Option<(f64, Vec<usize>, bool)> = None;
    let mut warning = None;
    loop {
        let sr = spectral_radius(&cands.assemble(&choice))?;
        if !sr.converged {
            warning = Some("power iteration did not converge for some selection".to_string());
        }
        if best.as_ref().is_none_or(|(v, _, _)| sr.value < *v) {
            best = Some((sr.value, choice.clone(), sr.nilpotent));
        }
        // odometer increment, last row fastest
        let mut r = dim;
        loop {
            if r == 0 {
                let (value, choice, nilpotent) = best.expect("at least one selection");
                return Ok(LsrResult {
                    value,
                    choice,
                    method: LsrMethod::Exhaustive,
                    nilpotent,
                    warning,
                });
            }
            r -= 1;
            choice[r] += 1;
            if choice[r] < cands.candidates(r).len() {
                break;
            }
            choice[r] = 0;
        }
    }
}

/// Rows that can be made acyclic: a row is resolved once one of its
/// candidates is supported only on already-resolved rows. Returns the chosen
/// candidate for each resolved row.
fn acyclic_attractor(cands: &RowCandidates) -> Vec<Option<usize>> {
    let dim = cands.dim();
    let mut resolved: Vec<Option<usize>> = vec![None; dim];
    loop {
        let mut changed = false;
        for r in 0..dim {
            if resolved[r].is_some() {
                continue;
            }
            let pick = cands.candidates(r).iter().position(|c| {
                c.iter()
                    .enumerate()
                    .all(|(j, v)| *v == 0.0 || resolved[j].is_some())
            });
            if let Some(k) = pick {
                resolved[r] = Some(k);
                changed = true;
            }
        }
        if !changed {
            return resolved;
        }
    }
}

/// Policy iteration on `v ↦ min_row (candidate · v)`.
///
/// Rows that can be placed in an acyclic part of the selection are fixed
/// first; they never lie on a cycle, so they cannot raise the spectral radius,
/// and if every row is fixed the result is an exact 0. The remaining rows
/// start from the cheapest candidate against the all-ones vector; each step
/// takes the Perron vector `v` of the current selection (shifted by `1e-12`
/// to stay positive) and switches a row only to a candidate that is strictly
/// smaller on `v`, lowest index first among equals. Once the selection is
/// stable, single-row exchanges that strictly lower `ρ` are applied until
/// none is left.
pub fn lsr_policy_iteration(cands: &RowCandidates) -> Result<LsrResult> {
    let dim = cands.dim();
    let fixed = acyclic_attractor(cands);
    if fixed.iter().all(Option::is_some) {
        let choice: Vec<usize> = fixed.into_iter().map(|c| c.expect("all fixed")).collect();
        return Ok(LsrResult {
            value: 0.0,
            choice,
            method: LsrMethod::PolicyIteration,
            nilpotent: true,
            warning: None,
        });
    }
    let argmin = |r: usize, v: &DVector<f64>| -> (usize, f64) {
        cands
            .candidates(r)
            .iter()
            .map(|c| c.dot(v))
            .enumerate()
            .fold((0, f64::INFINITY), |(bk, bv), (k, val)| if val < bv { (k, val) } else { (bk, bv) })
    };
    let ones = DVector::from_element(dim, 1.0);
    let mut choice: Vec<usize> = (0..dim)
        .map(|r| fixed[r].unwrap_or_else(|| argmin(r, &ones).0))
        .collect();

    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut best: Option<(f64, Vec<usize>, bool)> = None;
    let mut warning = None;
    for _ in 0..POLICY_MAX_ITERS {
        seen.insert(choice.clone());
        let sr = spectral_radius(&cands.assemble(&choice))?;
        if !sr.converged {
            warning = Some("power iteration did not converge".to_string());
        }
        if best.as_ref().is_none_or(|(v, _, _)| sr.value < *v) {
            best = Some((sr.value, choice.clone(), sr.nilpotent));
        }
        let scale = sr.vector.max();
        let v = if scale > 0.0 { &sr.vector / scale } else { sr.vector.clone() }.add_scalar(1e-12);
        let mut next = choice.clone();
        for r in 0..dim {
            if fixed[r].is_some() {
                continue;
            }
            let current = cands.candidates(r)[choice[r]].dot(&v);
            let (k, val) = argmin(r, &v);
            if val < current * (1.0 - 1e-12) {
                next[r] = k;
            }
        }
        if next == choice {
            break;
        }
        if seen.contains(&next) {
            warning = Some("policy iteration revisited a selection; returning best so far".to_string());
            warn!("lower spectral radius: policy iteration cycled");
            break;
        }
        choice = next;
    }
    let (mut value, mut choice, mut nilpotent) = best.expect("at least one iteration");

    // single-row exchanges judged by ρ itself; catches reducible selections
    // where the Perron vector gives no signal on the non-dominant classes
    for _ in 0..POLISH_MAX_PASSES {
        if value == 0.0 {
            break;
        }
        let mut improved = false;
        for r in (0..dim).filter(|&r| fixed[r].is_none()) {
            for k in 0..cands.candidates(r).len() {
                if k == choice[r] {
                    continue;
                }
                let mut trial = choice.clone();
                trial[r] = k;
                let sr = spectral_radius(&cands.assemble(&trial))?;
                if sr.value < value * (1.0 - 1e-12) {
                    value = sr.value;
                    choice = trial;
                    nilpotent = sr.nilpotent;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(LsrResult {
        value,
        choice,
        method: LsrMethod::PolicyIteration,
        nilpotent,
        warning,
    })
}

/// Candidate rows of the family `F` for `d` network rounds, together with the
/// source agent behind each candidate.
pub fn selection_candidates(
    ahat: &CollectiveMatrix,
    graph: &Digraph,
    d: usize,
) -> Result<(RowCandidates, Vec<Vec<usize>>)> {
    let n = ahat.n;
    if graph.node_count() != ahat.agents {
        return Err(Error::InvalidInput("graph size does not match agent count".into()));
    }
    let mut rows = vec![Vec::new(); ahat.dim()];
    let mut sources = vec![Vec::new(); ahat.dim()];
    for i in 0..ahat.agents {
        let hood = graph.dhop(i, d)?;
        for s in 0..n {
            for &j in &hood {
                for (r, src) in [(lower_index(n, i, s), lower_index(n, j, s)), (upper_index(n, i, s), upper_index(n, j, s))] {
                    rows[r].push(ahat.matrix.row(src).transpose());
                    sources[r].push(j);
                }
            }
        }
    }
    Ok((RowCandidates::new(rows)?, sources))
}

/// Lower spectral radius of `F` for `d` rounds, as a certificate.
pub fn lsr_certificate(ahat: &CollectiveMatrix, graph: &Digraph, d: usize, exhaustive_limit: u64) -> Result<StabilityCertificate> {
    let (cands, sources) = selection_candidates(ahat, graph, d)?;
    let lsr = lower_spectral_radius(&cands, exhaustive_limit)?;
    let n = ahat.n;
    let mut lower = vec![0; n * ahat.agents];
    let mut upper = vec![0; n * ahat.agents];
    for i in 0..ahat.agents {
        for s in 0..n {
            lower[i * n + s] = sources[lower_index(n, i, s)][lsr.choice[lower_index(n, i, s)]];
            upper[i * n + s] = sources[upper_index(n, i, s)][lsr.choice[upper_index(n, i, s)]];
        }
    }
    let assignment = SelectionAssignment::from_sources(n, ahat.agents, lower, upper)?;
    Ok(StabilityCertificate {
        kind: CertificateKind::LowerSpectralRadius,
        value: lsr.value,
        assignment,
        stable: is_stable(lsr.value),
        warning: lsr.warning,
    })
}

/// The selector realized by the network update: per `(i, s)`, the lowest
/// index maximizing the lower bound and the lowest index minimizing the
/// upper bound over `N_i^d`.
pub fn realized_selection(pre_network: &[IntervalVector], graph: &Digraph, d: usize) -> Result<SelectionAssignment> {
    let agents = pre_network.len();
    if agents == 0 || graph.node_count() != agents {
        return Err(Error::InvalidInput("one framer per graph node is required".into()));
    }
    let n = pre_network[0].len();
    let mut lower = Vec::with_capacity(agents * n);
    let mut upper = Vec::with_capacity(agents * n);
    let hoods: Vec<Vec<usize>> = (0..agents).map(|i| graph.dhop(i, d)).collect::<Result<_>>()?;
    for hood in &hoods {
        for s in 0..n {
            let mut lo = hood[0];
            let mut up = hood[0];
            for &j in &hood[1..] {
                if pre_network[j].lower()[s] > pre_network[lo].lower()[s] {
                    lo = j;
                }
                if pre_network[j].upper()[s] < pre_network[up].upper()[s] {
                    up = j;
                }
            }
            lower.push(lo);
            upper.push(up);
        }
    }
    SelectionAssignment::from_sources(n, agents, lower, upper)
}
