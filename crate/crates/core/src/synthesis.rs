//! Observer gain design and the distributed detectability check.
//!
//! Gains minimize `Σ |(T A - L C)_{st}|` subject to `T = I - Γ C`. Row `s` of
//! `T` and `L` only touches row `s` of `Ã = T A - L C`, so the problem splits
//! into `n` independent row programs, each minimizing `‖A_s - Γ_s C A - L_s C‖₁`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Digraph;
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::model::PlantModel;
use crate::network::SyncNetwork;

/// Rows with 1-norm at most this count as contracting (`‖·‖₁ < 1`).
pub const STRICT_CONTRACTION: f64 = 1.0 - 1e-9;

/// Observer gains of one agent, with the derived `T` and `Ã`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentGains {
    pub l: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub a_tilde: DMatrix<f64>,
    /// `row_norms[s] = ‖Ã_s‖₁`.
    pub row_norms: Vec<f64>,
}

impl AgentGains {
    /// Derives `T = I - Γ C` and `Ã = T A - L C` from `L` and `Γ`.
    pub fn from_gains(a: &DMatrix<f64>, c: &DMatrix<f64>, l: DMatrix<f64>, gamma: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let m = c.nrows();
        if a.ncols() != n || c.ncols() != n {
            return Err(Error::shape("AgentGains", format!("A {n}x{n}, C {m}x{n}"), format!("A {}x{}, C {}x{}", a.nrows(), a.ncols(), c.nrows(), c.ncols())));
        }
        if l.shape() != (n, m) || gamma.shape() != (n, m) {
            return Err(Error::shape(
                "AgentGains",
                format!("L, Γ {n}x{m}"),
                format!("L {:?}, Γ {:?}", l.shape(), gamma.shape()),
            ));
        }
        let t = DMatrix::identity(n, n) - &gamma * c;
        let a_tilde = &t * a - &l * c;
        let row_norms = row_l1_norms(&a_tilde);
        Ok(Self {
            l,
            gamma,
            t,
            a_tilde,
            row_norms,
        })
    }

    pub fn n(&self) -> usize {
        self.a_tilde.nrows()
    }

    /// States whose closed-loop row contracts.
    pub fn contracting_states(&self) -> Vec<usize> {
        self.row_norms
            .iter()
            .enumerate()
            .filter(|(_, &r)| r <= STRICT_CONTRACTION)
            .map(|(s, _)| s)
            .collect()
    }
}

pub fn row_l1_norms(m: &DMatrix<f64>) -> Vec<f64> {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum()).collect()
}

/// Optimal row `s` of `Γ` and `L` together with the attained `‖Ã_s‖₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowDesign {
    pub gamma: DVector<f64>,
    pub l: DVector<f64>,
    pub min_norm: f64,
}

/// Solves `min ‖A_s - Γ_s (C A) - L_s C‖₁` over `(Γ_s, L_s)` with the
/// epigraph variables `E_s ≥ |·|`.
pub fn design_gains_row(a: &DMatrix<f64>, c: &DMatrix<f64>, s: usize) -> Result<RowDesign> {
    let n = a.nrows();
    let m = c.nrows();
    if a.ncols() != n || c.ncols() != n {
        return Err(Error::shape("design_gains_row", format!("A {n}x{n}, C _x{n}"), format!("A {}x{}, C {}x{}", a.nrows(), a.ncols(), m, c.ncols())));
    }
    if s >= n {
        return Err(Error::InvalidInput(format!("state index {s} out of range for n = {n}")));
    }
    let ca = c * a;
    // z = [Γ_s (m), L_s (m), E (n)]
    let nv = 2 * m + n;
    let mut objective = DVector::zeros(nv);
    for t in 0..n {
        objective[2 * m + t] = 1.0;
    }
    let mut g = DMatrix::zeros(2 * n, nv);
    let mut h = DVector::zeros(2 * n);
    for t in 0..n {
        // residual r_t = A_st - Γ·CA_t - L·C_t ;  r_t ≤ E_t  and  -r_t ≤ E_t
        for k in 0..m {
            g[(2 * t, k)] = -ca[(k, t)];
            g[(2 * t, m + k)] = -c[(k, t)];
            g[(2 * t + 1, k)] = ca[(k, t)];
            g[(2 * t + 1, m + k)] = c[(k, t)];
        }
        g[(2 * t, 2 * m + t)] = -1.0;
        g[(2 * t + 1, 2 * m + t)] = -1.0;
        h[2 * t] = -a[(s, t)];
        h[2 * t + 1] = a[(s, t)];
    }
    let lp = LinearProgram::new(objective)
        .with_inequalities(g, h)
        .with_nonnegative(2 * m..nv);
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!("row program for state {s} returned {:?}", sol.status)));
    }
    Ok(RowDesign {
        gamma: sol.z.rows(0, m).clone_owned(),
        l: sol.z.rows(m, m).clone_owned(),
        min_norm: sol.objective,
    })
}

/// Gains for one agent; also returns the total LP objective `Σ_s min_norm`.
pub fn design_gains(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<(AgentGains, f64)> {
    let n = a.nrows();
    let m = c.nrows();
    let mut l = DMatrix::zeros(n, m);
    let mut gamma = DMatrix::zeros(n, m);
    let mut total = 0.0;
    for s in 0..n {
        let row = design_gains_row(a, c, s)?;
        l.set_row(s, &row.l.transpose());
        gamma.set_row(s, &row.gamma.transpose());
        total += row.min_norm;
    }
    Ok((AgentGains::from_gains(a, c, l, gamma)?, total))
}

/// The undecomposed program over `(T, Γ, L, E)` with the equality
/// `T + Γ C = I`. Slower than [`design_gains`]; kept to cross-check it.
pub fn design_gains_joint(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<(AgentGains, f64)> {
    let n = a.nrows();
    let m = c.nrows();
    if a.ncols() != n || c.ncols() != n {
        return Err(Error::shape("design_gains_joint", n, a.ncols()));
    }
    let t_off = 0;
    let g_off = n * n;
    let l_off = g_off + n * m;
    let e_off = l_off + n * m;
    let nv = e_off + n * n;
    let mut objective = DVector::zeros(nv);
    for k in 0..n * n {
        objective[e_off + k] = 1.0;
    }
    let mut g = DMatrix::zeros(2 * n * n, nv);
    let h = DVector::zeros(2 * n * n);
    for s in 0..n {
        for t in 0..n {
            let r = 2 * (s * n + t);
            // (T A)_st = Σ_u T_su A_ut ; (L C)_st = Σ_k L_sk C_kt
            for u in 0..n {
                g[(r, t_off + s * n + u)] = a[(u, t)];
                g[(r + 1, t_off + s * n + u)] = -a[(u, t)];
            }
            for k in 0..m {
                g[(r, l_off + s * m + k)] = -c[(k, t)];
                g[(r + 1, l_off + s * m + k)] = c[(k, t)];
            }
            g[(r, e_off + s * n + t)] = -1.0;
            g[(r + 1, e_off + s * n + t)] = -1.0;
        }
    }
    let mut a_eq = DMatrix::zeros(n * n, nv);
    let mut b_eq = DVector::zeros(n * n);
    for s in 0..n {
        for t in 0..n {
            let r = s * n + t;
            a_eq[(r, t_off + s * n + t)] = 1.0;
            for k in 0..m {
                a_eq[(r, g_off + s * m + k)] = c[(k, t)];
            }
            b_eq[r] = if s == t { 1.0 } else { 0.0 };
        }
    }
    let lp = LinearProgram::new(objective)
        .with_inequalities(g, h)
        .with_equalities(a_eq, b_eq)
        .with_nonnegative(e_off..nv);
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!("joint gain program returned {:?}", sol.status)));
    }
    let gamma = DMatrix::from_row_slice(n, m, &sol.z.as_slice()[g_off..l_off]);
    let l = DMatrix::from_row_slice(n, m, &sol.z.as_slice()[l_off..e_off]);
    Ok((AgentGains::from_gains(a, c, l, gamma)?, sol.objective))
}

/// Designs gains for every agent of the plant.
pub fn design_all(plant: &PlantModel) -> Result<Vec<AgentGains>> {
    plant
        .c
        .iter()
        .map(|c| design_gains(&plant.a, c).map(|(g, _)| g))
        .collect()
}

/// An entry of a node's `Q` set: the closed-loop matrix of `origin`, first
/// heard after `hops` exchanges.
#[derive(Debug, Clone, PartialEq)]
pub struct QEntry {
    pub origin: usize,
    pub hops: usize,
    pub a_tilde: DMatrix<f64>,
}

/// Outcome of the distributed initialization protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpdnResult {
    pub success: bool,
    /// Common `d*` after max-consensus; `diameter + 1` on failure.
    pub d_star: usize,
    /// Each node's `d*` before max-consensus.
    pub local_d_star: Vec<usize>,
    /// `stabilizer[i][s] = ℓ(i, s)`; `None` for pairs with no stabilizer.
    pub stabilizer: Vec<Vec<Option<usize>>>,
    /// Hop distance from `i` to `ℓ(i, s)`.
    pub stabilizer_hops: Vec<Vec<Option<usize>>>,
    /// `trace[r][i]` lists the origins in `Q_i` after `r` exchanges.
    pub trace: Vec<Vec<Vec<usize>>>,
    pub diameter: usize,
}

impl CpdnResult {
    pub fn stabilizer_of(&self, i: usize, s: usize) -> Option<usize> {
        self.stabilizer.get(i).and_then(|row| row.get(s)).copied().flatten()
    }
}

fn row_norm(m: &DMatrix<f64>, s: usize) -> f64 {
    m.row(s).iter().map(|v| v.abs()).sum()
}

/// Per state, the qualifying entry with the fewest hops, then lowest origin.
fn pick_stabilizers(q: &[QEntry], n: usize) -> Vec<Option<(usize, usize)>> {
    (0..n)
        .map(|s| {
            q.iter()
                .filter(|e| row_norm(&e.a_tilde, s) <= STRICT_CONTRACTION)
                .map(|e| (e.hops, e.origin))
                .min()
                .map(|(h, o)| (o, h))
        })
        .collect()
}

/// Runs the initialization protocol as synchronous rounds over `graph`.
///
/// Every node starts with `Q_i = {Ã^i}` and checks whether each state has a
/// contracting row in `Q_i`; otherwise it merges its neighbors' sets and
/// counts one more hop. Nodes keep relaying after they are satisfied so that
/// sets keep growing for the others. A node's `d*` is the number of merges it
/// needed (at least 1), or `diameter + 1` if it never became satisfied; a
/// final max-consensus over `diameter` rounds makes `d*` common.
pub fn run_cpdn_init(plant: &PlantModel, graph: &Digraph, gains: &[AgentGains]) -> Result<CpdnResult> {
    let nodes = graph.node_count();
    if gains.len() != nodes || plant.agents() != nodes {
        return Err(Error::InvalidInput(format!(
            "graph has {nodes} nodes but {} gain sets and {} agents were given",
            gains.len(),
            plant.agents()
        )));
    }
    let n = plant.n();
    let diameter = graph.diameter()?;
    let mut net = SyncNetwork::new(graph);

    let mut q: Vec<Vec<QEntry>> = gains
        .iter()
        .enumerate()
        .map(|(i, g)| {
            vec![QEntry {
                origin: i,
                hops: 0,
                a_tilde: g.a_tilde.clone(),
            }]
        })
        .collect();
    let mut local: Vec<Option<usize>> = vec![None; nodes];
    let mut stabilizer = vec![vec![None; n]; nodes];
    let mut stabilizer_hops = vec![vec![None; n]; nodes];
    let mut trace = Vec::new();

    for round in 0..=diameter {
        trace.push(q.iter().map(|set| set.iter().map(|e| e.origin).collect()).collect());
        for i in 0..nodes {
            if local[i].is_some() {
                continue;
            }
            let picks = pick_stabilizers(&q[i], n);
            if picks.iter().all(Option::is_some) {
                local[i] = Some(round.max(1));
                for (s, p) in picks.into_iter().enumerate() {
                    let (origin, hops) = p.expect("checked above");
                    stabilizer[i][s] = Some(origin);
                    stabilizer_hops[i][s] = Some(hops);
                }
            }
        }
        if round == diameter || local.iter().all(Option::is_some) {
            break;
        }
        let inboxes = net.exchange(&q)?;
        for (i, inbox) in inboxes.into_iter().enumerate() {
            let mut merged: BTreeMap<usize, QEntry> = BTreeMap::new();
            for env in inbox {
                for mut entry in env.payload {
                    if env.sender != i {
                        entry.hops += 1;
                    }
                    match merged.get(&entry.origin) {
                        Some(existing) if existing.hops <= entry.hops => {}
                        _ => {
                            merged.insert(entry.origin, entry);
                        }
                    }
                }
            }
            q[i] = merged.into_values().collect();
        }
    }

    let failed = diameter + 1;
    let mut d: Vec<usize> = local.iter().map(|v| v.unwrap_or(failed)).collect();
    let local_d_star = d.clone();
    let mut consensus = SyncNetwork::new(graph);
    for _ in 0..diameter {
        let inboxes = consensus.exchange(&d)?;
        d = inboxes
            .into_iter()
            .map(|inbox| inbox.into_iter().map(|e| e.payload).max().expect("self message"))
            .collect();
    }
    let success = local.iter().all(Option::is_some);
    let d_star = d.iter().copied().max().unwrap_or(failed);
    Ok(CpdnResult {
        success,
        d_star,
        local_d_star,
        stabilizer,
        stabilizer_hops,
        trace,
        diameter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::IntervalVector;

    fn ex1_a() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[1., 0., 1., 0., 0., 1., 0., 1., 0., 0., 1., 0., 0., 0., 0., 1.],
        )
    }

    #[test]
    fn row_examples() {
        let a = ex1_a();
        let c1 = DMatrix::from_row_slice(1, 4, &[1., 0., 0., 0.]);
        assert!(design_gains_row(&a, &c1, 0).unwrap().min_norm.abs() < 1e-9);
        assert!((design_gains_row(&a, &c1, 1).unwrap().min_norm - 2.0).abs() < 1e-9);

        let mut a0 = a.clone();
        a0.set_row(2, &DMatrix::zeros(1, 4).row(0));
        let row = design_gains_row(&a0, &c1, 2).unwrap();
        assert_eq!(row.min_norm, 0.0);
        assert_eq!(row.gamma[0], 0.0);
        assert_eq!(row.l[0], 0.0);
        assert!(design_gains_row(&a, &c1, 4).is_err());
    }

    #[test]
    fn full_observation_zeroes_the_closed_loop() {
        let a = ex1_a();
        let (g, total) = design_gains(&a, &DMatrix::identity(4, 4)).unwrap();
        assert!(total.abs() < 1e-9);
        assert!(g.row_norms.iter().all(|r| r.abs() < 1e-9));
    }

    #[test]
    fn stored_identities_hold() {
        let a = ex1_a();
        let c = DMatrix::from_row_slice(1, 4, &[1., 1., 0., 0.]);
        let (g, _) = design_gains(&a, &c).unwrap();
        assert_eq!(g.t, DMatrix::identity(4, 4) - &g.gamma * &c);
        assert_eq!(g.a_tilde, &g.t * &a - &g.l * &c);
    }

    #[test]
    fn single_agent_full_observation_cpdn() {
        let a = ex1_a();
        let plant = PlantModel::new(
            a.clone(),
            DMatrix::identity(4, 4),
            vec![DMatrix::identity(4, 4)],
            vec![DMatrix::identity(4, 4)],
            IntervalVector::from_slices(&[0.; 4], &[0.; 4]).unwrap(),
            vec![IntervalVector::from_slices(&[0.; 4], &[0.; 4]).unwrap()],
            IntervalVector::from_slices(&[0.; 4], &[1.; 4]).unwrap(),
        )
        .unwrap();
        let gains = design_all(&plant).unwrap();
        let g = Digraph::new(1, &[]).unwrap();
        let res = run_cpdn_init(&plant, &g, &gains).unwrap();
        assert!(res.success);
        assert_eq!(res.d_star, 1);
        assert!(res.stabilizer[0].iter().all(|s| *s == Some(0)));
    }
}
