//! Collective framer errors, the noise terms that drive them, and the
//! comparison system used to bound them.
//!
//! With `H_k` the realized selector and `Â` the lifted closed loop,
//! `e_{k+1} = H_k (Â e_k + W_k + V_k)`. For agent `i` and state `s` the
//! injections are, with `s̲ = w − w̲`, `s̄ = w̄ − w` and the same for `v`:
//!
//! - lower rows: `(TB)⁺s̲ + (TB)⁻s̄` and `(LD)⁺s̄ᵛ_k + (LD)⁻s̲ᵛ_k + (ΓD)⁺s̄ᵛ_{k+1} + (ΓD)⁻s̲ᵛ_{k+1}`
//! - upper rows: `(TB)⁻s̲ + (TB)⁺s̄` and `(LD)⁺s̲ᵛ_k + (LD)⁻s̄ᵛ_k + (ΓD)⁺s̲ᵛ_{k+1} + (ΓD)⁻s̄ᵛ_{k+1}`
//!
//! The measurement terms enter with a minus sign, which is why their slack
//! orientation is the reverse of the process-noise one.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::IntervalVector;
use crate::observer::ObserverGains;
use crate::stability::{lower_index, upper_index, CollectiveMatrix, SelectionAssignment};

/// `[e̲¹; ē¹; …; e̲ᴺ; ēᴺ]` with `e̲ⁱ = x − x̲ⁱ` and `ēⁱ = x̄ⁱ − x`.
pub fn collective_error(framers: &[IntervalVector], x: &DVector<f64>) -> Result<DVector<f64>> {
    let n = x.len();
    let mut e = DVector::zeros(2 * n * framers.len());
    for (i, f) in framers.iter().enumerate() {
        if f.len() != n {
            return Err(Error::shape("collective_error", n, f.len()));
        }
        for s in 0..n {
            e[lower_index(n, i, s)] = x[s] - f.lower()[s];
            e[upper_index(n, i, s)] = f.upper()[s] - x[s];
        }
    }
    Ok(e)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseInjection {
    pub w: DVector<f64>,
    pub v: DVector<f64>,
}

impl NoiseInjection {
    pub fn total(&self) -> DVector<f64> {
        &self.w + &self.v
    }
}

fn slacks(x: &DVector<f64>, bounds: &IntervalVector, what: &str) -> Result<(DVector<f64>, DVector<f64>)> {
    if x.len() != bounds.len() {
        return Err(Error::shape("noise_injection", bounds.len(), x.len()));
    }
    if !bounds.contains(x)? {
        return Err(Error::InvalidInput(format!("{what} lies outside its bounds")));
    }
    Ok((x - bounds.lower(), bounds.upper() - x))
}

/// `W_k` and `V_k` for one step. `v_k[i]` and `v_k1[i]` are agent `i`'s
/// measurement noise at `k` and `k + 1`.
pub fn noise_injection(
    gains: &[ObserverGains],
    w_k: &DVector<f64>,
    w_bounds: &IntervalVector,
    v_k: &[DVector<f64>],
    v_k1: &[DVector<f64>],
    v_bounds: &[IntervalVector],
) -> Result<NoiseInjection> {
    let agents = gains.len();
    if v_k.len() != agents || v_k1.len() != agents || v_bounds.len() != agents || agents == 0 {
        return Err(Error::InvalidInput("one noise sample and bound per agent".into()));
    }
    let n = gains[0].n();
    let (sw_lo, sw_hi) = slacks(w_k, w_bounds, "process noise")?;
    let mut w = DVector::zeros(2 * n * agents);
    let mut v = DVector::zeros(2 * n * agents);
    for (i, g) in gains.iter().enumerate() {
        let (a_lo, a_hi) = slacks(&v_k[i], &v_bounds[i], "measurement noise at k")?;
        let (b_lo, b_hi) = slacks(&v_k1[i], &v_bounds[i], "measurement noise at k+1")?;
        let wl = &g.tb.plus * &sw_lo + &g.tb.minus * &sw_hi;
        let wu = &g.tb.minus * &sw_lo + &g.tb.plus * &sw_hi;
        let vl = &g.ld.plus * &a_hi + &g.ld.minus * &a_lo + &g.gd.plus * &b_hi + &g.gd.minus * &b_lo;
        let vu = &g.ld.plus * &a_lo + &g.ld.minus * &a_hi + &g.gd.plus * &b_lo + &g.gd.minus * &b_hi;
        let o = 2 * n * i;
        w.rows_mut(o, n).copy_from(&wl);
        w.rows_mut(o + n, n).copy_from(&wu);
        v.rows_mut(o, n).copy_from(&vl);
        v.rows_mut(o + n, n).copy_from(&vu);
    }
    Ok(NoiseInjection { w, v })
}

/// `H (Â e + W + V)`, the one-step error prediction.
pub fn propagate_error(
    selection: &SelectionAssignment,
    ahat: &CollectiveMatrix,
    e: &DVector<f64>,
    noise: Option<&NoiseInjection>,
) -> DVector<f64> {
    let mut pre = ahat.matrix() * e;
    if let Some(nz) = noise {
        pre += nz.total();
    }
    selection.select_vec(&pre)
}

/// `ẽ_0 = e_0`, `ẽ_{k+1} = H_* (Â ẽ_k + W_k + V_k)`; one entry per step plus
/// the initial one.
pub fn comparison_trajectory(
    h_star: &SelectionAssignment,
    ahat: &CollectiveMatrix,
    e0: &DVector<f64>,
    noise: &[NoiseInjection],
) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(noise.len() + 1);
    out.push(e0.clone());
    for nz in noise {
        let next = propagate_error(h_star, ahat, out.last().expect("nonempty"), Some(nz));
        out.push(next);
    }
    out
}

/// Same as [`comparison_trajectory`] for a noiseless run of `steps` steps.
pub fn comparison_trajectory_noiseless(
    h_star: &SelectionAssignment,
    ahat: &CollectiveMatrix,
    e0: &DVector<f64>,
    steps: usize,
) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(e0.clone());
    for _ in 0..steps {
        let next = propagate_error(h_star, ahat, out.last().expect("nonempty"), None);
        out.push(next);
    }
    out
}

/// First `k` and entry where `upper_k ≥ lower_k` fails by more than `slack`.
pub fn domination_violation(
    dominating: &[DVector<f64>],
    dominated: &[DVector<f64>],
    slack: f64,
) -> Option<(usize, usize, f64)> {
    for (k, (a, b)) in dominating.iter().zip(dominated).enumerate() {
        for r in 0..a.len() {
            if b[r] - a[r] > slack {
                return Some((k, r, b[r] - a[r]));
            }
        }
    }
    None
}

/// Exponential fit `‖e_k‖∞ ≈ C λ^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub constant: f64,
    pub r_squared: f64,
    /// The sequence hit numerical zero and stayed there; `rate` is 0.
    pub finite_time: bool,
    pub points: usize,
}

/// Fits a decay rate to a norm sequence.
///
/// Values at or below `1e-9 · norms[0]` count as zero. A sequence that reaches
/// zero and stays there converged in finite time and has rate 0. Otherwise a
/// least-squares line through `(k, ln ‖e_k‖)` over the nonzero entries gives
/// `λ = exp(slope)`. Returns `None` with fewer than two usable points.
pub fn fit_decay(norms: &[f64]) -> Option<DecayFit> {
    let first = *norms.first()?;
    let floor = 1e-9 * first.abs().max(f64::MIN_POSITIVE);
    let is_zero = |v: f64| v.abs() <= floor;
    if let Some(z) = norms.iter().position(|&v| is_zero(v)) {
        if norms[z..].iter().all(|&v| is_zero(v)) {
            return Some(DecayFit {
                rate: 0.0,
                constant: first,
                r_squared: 1.0,
                finite_time: true,
                points: z,
            });
        }
    }
    let pts: Vec<(f64, f64)> = norms
        .iter()
        .enumerate()
        .filter(|(_, v)| !is_zero(**v))
        .map(|(k, v)| (k as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Some(DecayFit {
        rate: slope.exp(),
        constant: intercept.exp(),
        r_squared,
        finite_time: false,
        points: pts.len(),
    })
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Upper bound on `sup_k ‖e_k‖∞` from the comparison system:
/// `max_k ‖(H_*Â)^k e_0‖∞ + ‖(I − H_*Â)⁻¹‖∞ · sup_k ‖H_*(W_k + V_k)‖∞`.
///
/// The transient term runs for `horizon` steps. Fails when `I − H_*Â` is
/// singular.
pub fn iss_bound(
    h_star: &SelectionAssignment,
    ahat: &CollectiveMatrix,
    e0: &DVector<f64>,
    noise: &[NoiseInjection],
    horizon: usize,
) -> Result<f64> {
    let m = h_star.select_rows(ahat.matrix());
    let dim = m.nrows();
    let resolvent = (DMatrix::identity(dim, dim) - &m)
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("I - H*Â is singular".into()))?;
    let resolvent_norm = resolvent
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let forcing = noise
        .iter()
        .map(|nz| inf_norm(&h_star.select_vec(&nz.total())))
        .fold(0.0, f64::max);
    let mut transient = inf_norm(e0);
    let mut e = e0.clone();
    for _ in 0..horizon {
        e = &m * e;
        transient = transient.max(inf_norm(&e));
    }
    Ok(transient + resolvent_norm * forcing)
}
