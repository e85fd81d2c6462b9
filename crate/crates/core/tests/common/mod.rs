//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use dio_core::interval::IntervalVector;
use dio_core::lp::LinearProgram;
use dio_core::stability::RowCandidates;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Random bounded, feasible LP: box `[-10, 10]` on every variable, a few
/// random inequalities and equalities that a hidden interior point satisfies.
pub fn random_lp(rng: &mut impl Rng, max_vars: usize) -> LinearProgram {
    let n = rng.random_range(1..=max_vars);
    let z: DVector<f64> = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
    let extra = rng.random_range(0..=4);
    let eqs = rng.random_range(0..=n.saturating_sub(1).min(2));
    let mut g = DMatrix::zeros(2 * n + extra, n);
    let mut h = DVector::zeros(2 * n + extra);
    for j in 0..n {
        g[(2 * j, j)] = 1.0;
        h[2 * j] = 10.0;
        g[(2 * j + 1, j)] = -1.0;
        h[2 * j + 1] = 10.0;
    }
    for r in 0..extra {
        let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let val: f64 = row.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
        for (j, v) in row.iter().enumerate() {
            g[(2 * n + r, j)] = *v;
        }
        h[2 * n + r] = val + rng.random_range(0.0..2.0);
    }
    let a_eq = DMatrix::from_fn(eqs, n, |_, _| rng.random_range(-1.0..1.0));
    let b_eq = &a_eq * &z;
    let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let nonneg: Vec<usize> = (0..n).filter(|&j| z[j] >= 0.0 && rng.random_bool(0.3)).collect();
    LinearProgram::new(c)
        .with_inequalities(g, h)
        .with_equalities(a_eq, b_eq)
        .with_nonnegative(nonneg)
}

fn combinations(m: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..m {
            if m - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, m, k, cur, f);
            cur.pop();
        }
    }
    rec(0, m, k, &mut Vec::with_capacity(k), f);
}

/// Minimum of a bounded LP by enumerating every basic solution.
pub fn lp_vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let n = lp.objective.len();
    let mut rows: Vec<(Vec<f64>, f64)> = (0..lp.g.nrows())
        .map(|r| ((0..n).map(|j| lp.g[(r, j)]).collect(), lp.h[r]))
        .collect();
    for (j, nn) in lp.nonnegative.iter().enumerate() {
        if *nn {
            let mut row = vec![0.0; n];
            row[j] = -1.0;
            rows.push((row, 0.0));
        }
    }
    let eqs = lp.a_eq.nrows();
    let need = n - eqs;
    let mut best: Option<f64> = None;
    combinations(rows.len(), need, &mut |active| {
        let mut m = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for e in 0..eqs {
            for j in 0..n {
                m[(e, j)] = lp.a_eq[(e, j)];
            }
            rhs[e] = lp.b_eq[e];
        }
        for (k, &r) in active.iter().enumerate() {
            for j in 0..n {
                m[(eqs + k, j)] = rows[r].0[j];
            }
            rhs[eqs + k] = rows[r].1;
        }
        let lu = m.lu();
        if let Some(z) = lu.solve(&rhs) {
            if !z.iter().all(|v| v.is_finite()) || lp.max_violation(&z) > 1e-9 {
                return;
            }
            let val = lp.objective.dot(&z);
            if best.is_none_or(|b| val < b) {
                best = Some(val);
            }
        }
    });
    best
}

/// `min_{γ, l} ‖a − γ u − l w‖₁` for scalar `γ, l`, by evaluating every point
/// where two residual entries vanish (plus the origin).
pub fn row_lp_breakpoints(a: &[f64], u: &[f64], w: &[f64]) -> f64 {
    let f = |g: f64, l: f64| -> f64 { (0..a.len()).map(|t| (a[t] - g * u[t] - l * w[t]).abs()).sum() };
    let mut best = f(0.0, 0.0);
    for p in 0..a.len() {
        for q in p + 1..a.len() {
            let det = u[p] * w[q] - u[q] * w[p];
            if det.abs() < 1e-14 {
                continue;
            }
            let g = (a[p] * w[q] - a[q] * w[p]) / det;
            let l = (u[p] * a[q] - u[q] * a[p]) / det;
            best = best.min(f(g, l));
        }
        // one residual zero with the other variable at zero
        if u[p] != 0.0 {
            best = best.min(f(a[p] / u[p], 0.0));
        }
        if w[p] != 0.0 {
            best = best.min(f(0.0, a[p] / w[p]));
        }
    }
    best
}

/// Random nonnegative independent-row family of dimension `dim` with up to
/// `max_cands` candidates per row. `density` is the chance that an entry is
/// nonzero.
pub fn random_row_family(rng: &mut impl Rng, dim: usize, max_cands: usize, density: f64) -> RowCandidates {
    let rows = (0..dim)
        .map(|_| {
            let k = rng.random_range(1..=max_cands);
            (0..k)
                .map(|_| {
                    DVector::from_fn(dim, |_, _| {
                        if rng.random_bool(density) {
                            rng.random_range(0.0..1.0)
                        } else {
                            0.0
                        }
                    })
                })
                .collect()
        })
        .collect();
    RowCandidates::new(rows).unwrap()
}

/// Largest eigenvalue modulus from nalgebra's real Schur decomposition.
pub fn spectral_radius_eig(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Straight-line evaluation of the local update for one agent, scalar by
/// scalar. `d` bounds both `v_k` and `v_{k+1}`.
#[allow(clippy::too_many_arguments)]
pub fn local_update_oracle(
    a_tilde: &DMatrix<f64>,
    tb: &DMatrix<f64>,
    l: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    d: &DMatrix<f64>,
    x: &IntervalVector,
    w: &IntervalVector,
    v: &IntervalVector,
    y_k: &DVector<f64>,
    y_k1: &DVector<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let n = a_tilde.nrows();
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for s in 0..n {
        for j in 0..n {
            let a = a_tilde[(s, j)];
            if a >= 0.0 {
                lo[s] += a * x.lower()[j];
                hi[s] += a * x.upper()[j];
            } else {
                lo[s] += a * x.upper()[j];
                hi[s] += a * x.lower()[j];
            }
        }
        for j in 0..tb.ncols() {
            let b = tb[(s, j)];
            if b >= 0.0 {
                lo[s] += b * w.lower()[j];
                hi[s] += b * w.upper()[j];
            } else {
                lo[s] += b * w.upper()[j];
                hi[s] += b * w.lower()[j];
            }
        }
        for r in 0..l.ncols() {
            lo[s] += l[(s, r)] * y_k[r] + gamma[(s, r)] * y_k1[r];
            hi[s] += l[(s, r)] * y_k[r] + gamma[(s, r)] * y_k1[r];
        }
        // − (L D) v_k − (Γ D) v_{k+1}
        for j in 0..d.ncols() {
            for coef in [
                (0..l.ncols()).map(|r| l[(s, r)] * d[(r, j)]).sum::<f64>(),
                (0..l.ncols()).map(|r| gamma[(s, r)] * d[(r, j)]).sum::<f64>(),
            ] {
                if coef >= 0.0 {
                    lo[s] -= coef * v.upper()[j];
                    hi[s] -= coef * v.lower()[j];
                } else {
                    lo[s] -= coef * v.lower()[j];
                    hi[s] -= coef * v.upper()[j];
                }
            }
        }
    }
    (lo, hi)
}

pub fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

pub fn ex1_a() -> DMatrix<f64> {
    m(4, 4, &[1., 0., 1., 0., 0., 1., 0., 1., 0., 0., 1., 0., 0., 0., 0., 1.])
}

pub fn ex1_c() -> Vec<DMatrix<f64>> {
    vec![m(1, 4, &[1., 0., 0., 0.]), m(1, 4, &[0., 1., 0., 0.]), m(1, 4, &[1., 1., 0., 0.])]
}

/// The published gains `(L, Γ)` for the first system.
pub fn ex1_printed() -> Vec<(DMatrix<f64>, DMatrix<f64>)> {
    vec![
        (m(4, 1, &[0., 0., -1., 0.]), m(4, 1, &[1., 0., 1., 0.])),
        (m(4, 1, &[0., 0., 0., -1.]), m(4, 1, &[0., 1., 0., 1.])),
        (m(4, 1, &[0., 0., -0.5, -0.5]), m(4, 1, &[0.5, 0.5, 0.5, 0.5])),
    ]
}

/// `Ã = (I − ΓC)A − LC` with explicit loops.
pub fn closed_loop_by_hand(a: &DMatrix<f64>, c: &DMatrix<f64>, l: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut t = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            for r in 0..c.nrows() {
                t[(i, j)] -= g[(i, r)] * c[(r, j)];
            }
        }
    }
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut v = 0.0;
            for k in 0..n {
                v += t[(i, k)] * a[(k, j)];
            }
            for r in 0..c.nrows() {
                v -= l[(i, r)] * c[(r, j)];
            }
            out[(i, j)] = v;
        }
    }
    out
}

pub fn row_norms(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs()).sum()).collect()
}
