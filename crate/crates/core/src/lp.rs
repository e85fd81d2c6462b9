//! Small dense linear programs.
//!
//! `min cᵀz  s.t.  G·z ≤ h,  A_eq·z = b_eq`, variables free unless flagged
//! nonnegative. Solved by a two-phase tableau simplex with Bland's rule, which
//! makes the pivot sequence (and therefore the returned vertex) a pure
//! function of the input.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Primal feasibility tolerance, absolute per constraint row.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Pivots smaller than this are refused.
pub const PIVOT_TOL: f64 = 1e-12;
const OPTIMALITY_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    /// Variables restricted to `z ≥ 0`; all others are free.
    pub nonnegative: Vec<bool>,
}

impl LinearProgram {
    /// An unconstrained problem over free variables.
    pub fn new(objective: DVector<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            g: DMatrix::zeros(0, n),
            h: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            nonnegative: vec![false; n],
        }
    }

    pub fn with_inequalities(mut self, g: DMatrix<f64>, h: DVector<f64>) -> Self {
        self.g = g;
        self.h = h;
        self
    }

    pub fn with_equalities(mut self, a_eq: DMatrix<f64>, b_eq: DVector<f64>) -> Self {
        self.a_eq = a_eq;
        self.b_eq = b_eq;
        self
    }

    pub fn with_nonnegative(mut self, vars: impl IntoIterator<Item = usize>) -> Self {
        for v in vars {
            self.nonnegative[v] = true;
        }
        self
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.g.ncols() != n || self.g.nrows() != self.h.len() {
            return Err(Error::shape(
                "LinearProgram inequalities",
                format!("{}x{n}", self.h.len()),
                format!("{}x{}", self.g.nrows(), self.g.ncols()),
            ));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return Err(Error::shape(
                "LinearProgram equalities",
                format!("{}x{n}", self.b_eq.len()),
                format!("{}x{}", self.a_eq.nrows(), self.a_eq.ncols()),
            ));
        }
        if self.nonnegative.len() != n {
            return Err(Error::shape("LinearProgram sign flags", n, self.nonnegative.len()));
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.g.iter().all(|v| v.is_finite())
            && self.h.iter().all(|v| v.is_finite())
            && self.a_eq.iter().all(|v| v.is_finite())
            && self.b_eq.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("LP data must be finite".into()));
        }
        Ok(())
    }

    /// Largest violation of any constraint (or sign restriction) at `z`.
    pub fn max_violation(&self, z: &DVector<f64>) -> f64 {
        let ineq = (&self.g * z - &self.h).iter().fold(0.0f64, |m, v| m.max(*v));
        let eq = (&self.a_eq * z - &self.b_eq)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let sign = z
            .iter()
            .zip(&self.nonnegative)
            .filter(|(_, nn)| **nn)
            .fold(0.0f64, |m, (v, _)| m.max(-v));
        ineq.max(eq).max(sign)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal point; empty unless `status == Optimal`.
    pub z: DVector<f64>,
    pub objective: f64,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Dense tableau in canonical form with respect to `basis`.
struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        self.rows[r][c] = 1.0;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r];
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c];
            if f == 0.0 {
                continue;
            }
            for (v, pv) in self.rows[i].iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.rows[i][c] = 0.0;
            self.rhs[i] -= f * pivot_rhs;
        }
        self.basis[r] = c;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut red = cost.to_vec();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (rj, aij) in red.iter_mut().zip(&self.rows[i]) {
                    *rj -= cb * aij;
                }
            }
        }
        red
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        self.basis
            .iter()
            .zip(&self.rhs)
            .map(|(b, x)| cost[*b] * x)
            .sum()
    }

    /// Bland's rule: lowest-index improving column enters; ratio-test ties
    /// leave by lowest basic index.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<PhaseOutcome> {
        for _ in 0..MAX_PIVOTS {
            let red = self.reduced_costs(cost);
            let entering = (0..self.ncols).find(|&j| allowed[j] && red[j] < -OPTIMALITY_TOL);
            let Some(c) = entering else {
                return Ok(PhaseOutcome::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            let mut tiny = 0.0f64;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > PIVOT_TOL {
                    let ratio = self.rhs[i].max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br || (ratio == br && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                } else if a > 0.0 {
                    tiny = tiny.max(a);
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, c),
                None if tiny > 0.0 => return Err(Error::DegeneratePivot(tiny)),
                None => return Ok(PhaseOutcome::Unbounded),
            }
        }
        Err(Error::Internal("simplex pivot limit exceeded".into()))
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.num_vars();

    // Column map: each free variable becomes z⁺ - z⁻.
    let mut col_of: Vec<(usize, Option<usize>)> = Vec::with_capacity(n);
    let mut nstd = 0;
    for &nn in &lp.nonnegative {
        if nn {
            col_of.push((nstd, None));
            nstd += 1;
        } else {
            col_of.push((nstd, Some(nstd + 1)));
            nstd += 2;
        }
    }
    let m_ineq = lp.g.nrows();
    let m_eq = lp.a_eq.nrows();
    let m = m_ineq + m_eq;
    let slack0 = nstd;
    let art0 = nstd + m_ineq;
    let ncols = art0 + m;

    let mut rows = vec![vec![0.0; ncols]; m];
    let mut rhs = vec![0.0; m];
    for r in 0..m {
        let (coef, b) = if r < m_ineq {
            (lp.g.row(r).clone_owned(), lp.h[r])
        } else {
            (lp.a_eq.row(r - m_ineq).clone_owned(), lp.b_eq[r - m_ineq])
        };
        for (j, &(p, neg)) in col_of.iter().enumerate() {
            rows[r][p] = coef[j];
            if let Some(q) = neg {
                rows[r][q] = -coef[j];
            }
        }
        if r < m_ineq {
            rows[r][slack0 + r] = 1.0;
        }
        rhs[r] = b;
        if rhs[r] < 0.0 {
            for v in rows[r][..art0].iter_mut() {
                *v = -*v;
            }
            rhs[r] = -rhs[r];
        }
        rows[r][art0 + r] = 1.0;
    }
    let mut tab = Tableau {
        rows,
        rhs,
        basis: (art0..art0 + m).collect(),
        ncols,
    };

    // Phase 1: minimize the sum of artificials.
    let mut cost1 = vec![0.0; ncols];
    for c in cost1[art0..].iter_mut() {
        *c = 1.0;
    }
    let all = vec![true; ncols];
    tab.optimize(&cost1, &all)?;
    let infeasibility = tab.objective(&cost1);
    if infeasibility > FEASIBILITY_TOL {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            z: DVector::zeros(0),
            objective: f64::INFINITY,
        });
    }

    // Drive remaining artificials out of the basis; drop redundant rows.
    let mut r = 0;
    while r < tab.rows.len() {
        if tab.basis[r] >= art0 {
            let col = (0..art0).find(|&j| tab.rows[r][j].abs() > PIVOT_TOL);
            match col {
                Some(c) => {
                    tab.pivot(r, c);
                    r += 1;
                }
                None => {
                    tab.rows.remove(r);
                    tab.rhs.remove(r);
                    tab.basis.remove(r);
                }
            }
        } else {
            r += 1;
        }
    }

    // Phase 2.
    let mut cost2 = vec![0.0; ncols];
    for (j, &(p, neg)) in col_of.iter().enumerate() {
        cost2[p] = lp.objective[j];
        if let Some(q) = neg {
            cost2[q] = -lp.objective[j];
        }
    }
    let mut allowed = vec![true; ncols];
    for a in allowed[art0..].iter_mut() {
        *a = false;
    }
    if let PhaseOutcome::Unbounded = tab.optimize(&cost2, &allowed)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            z: DVector::zeros(0),
            objective: f64::NEG_INFINITY,
        });
    }

    let mut std = vec![0.0; ncols];
    for (i, &b) in tab.basis.iter().enumerate() {
        std[b] = tab.rhs[i];
    }
    let z = DVector::from_iterator(
        n,
        col_of
            .iter()
            .map(|&(p, neg)| std[p] - neg.map_or(0.0, |q| std[q])),
    );
    let violation = lp.max_violation(&z);
    if violation > FEASIBILITY_TOL {
        return Err(Error::Internal(format!(
            "simplex returned a point violating a constraint by {violation:e}"
        )));
    }
    let objective = lp.objective.dot(&z);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        z,
        objective,
    })
}
