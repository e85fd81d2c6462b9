//! Plant simulation with in-bounds noise.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::interval::IntervalVector;

use super::scenario::{NoisePolicy, Scenario};

/// States, outputs, and the noise that produced them, for `k = 0..=K`.
///
/// `w[k]` drives `x[k] → x[k+1]`, so it has `K` entries; the others have
/// `K + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    /// `v[k][i]`: agent `i`'s measurement noise at `k`.
    pub v: Vec<Vec<DVector<f64>>>,
    /// `y[k][i]`: agent `i`'s output at `k`.
    pub y: Vec<Vec<DVector<f64>>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.x.len() - 1
    }
}

fn draw(policy: &NoisePolicy, bounds: &IntervalVector, k: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    match policy {
        NoisePolicy::Zero => DVector::zeros(bounds.len()),
        NoisePolicy::Formula(components) => DVector::from_iterator(components.len(), components.iter().map(|c| c.eval(k))),
        NoisePolicy::Uniform => uniform_in(bounds, rng),
    }
}

/// Uniform sample inside `bounds`, clamped against rounding at the edges.
pub fn uniform_in(bounds: &IntervalVector, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_iterator(
        bounds.len(),
        bounds.lower().iter().zip(bounds.upper().iter()).map(|(&lo, &hi)| {
            if lo < hi {
                rng.random_range(lo..=hi).clamp(lo, hi)
            } else {
                lo
            }
        }),
    )
}

/// Simulates `x_{k+1} = A x_k + B w_k`, `yⁱ_k = Cⁱ x_k + Dⁱ vⁱ_k` for
/// `k = 0..=horizon`. Identical seeds give identical trajectories.
pub fn simulate_plant(scenario: &Scenario, seed: u64) -> Result<Trajectory> {
    let plant = &scenario.plant;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = match &scenario.x0 {
        Some(x0) => x0.clone(),
        None => uniform_in(&plant.x0_bounds, &mut rng),
    };
    let k_max = scenario.horizon;
    let agents = plant.agents();
    let mut x = Vec::with_capacity(k_max + 1);
    let mut w = Vec::with_capacity(k_max);
    let mut v = Vec::with_capacity(k_max + 1);
    let mut y = Vec::with_capacity(k_max + 1);
    x.push(x0);
    for k in 0..=k_max {
        let vk: Vec<DVector<f64>> = (0..agents)
            .map(|i| draw(&scenario.measurement_noise[i], &plant.v_bounds[i], k, &mut rng))
            .collect();
        let xk = &x[k];
        let yk: Vec<DVector<f64>> = (0..agents).map(|i| &plant.c[i] * xk + &plant.d[i] * &vk[i]).collect();
        v.push(vk);
        y.push(yk);
        if k < k_max {
            let wk = draw(&scenario.process_noise, &plant.w_bounds, k, &mut rng);
            let next = &plant.a * xk + &plant.b * &wk;
            if next.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidInput(format!("plant state left the floating-point range at k = {}", k + 1)));
            }
            w.push(wk);
            x.push(next);
        }
    }
    Ok(Trajectory { x, w, v, y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::{parse_scenario, Rounds};
    use crate::harness::bundled;

    #[test]
    fn seeded_runs_repeat() {
        let sc = parse_scenario(bundled::EXAMPLE1).unwrap();
        let a = simulate_plant(&sc, 5).unwrap();
        let b = simulate_plant(&sc, 5).unwrap();
        assert_eq!(a, b);
        let c = simulate_plant(&sc, 6).unwrap();
        assert_ne!(a.x[3], c.x[3]);
        assert_eq!(sc.rounds, Rounds::Auto);
    }

    #[test]
    fn noise_stays_in_bounds() {
        let sc = parse_scenario(bundled::EXAMPLE1).unwrap();
        let t = simulate_plant(&sc, 9).unwrap();
        assert!(t.w.iter().all(|w| sc.plant.w_bounds.contains(w).unwrap()));
        for vk in &t.v {
            for (i, vi) in vk.iter().enumerate() {
                assert!(sc.plant.v_bounds[i].contains(vi).unwrap());
            }
        }
        assert!(sc.plant.x0_bounds.contains(&t.x[0]).unwrap());
    }
}
