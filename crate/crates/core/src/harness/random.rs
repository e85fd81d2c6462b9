//! Random scenarios for property and acceptance tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::Result;
use crate::graph::Digraph;
use crate::interval::IntervalVector;
use crate::model::PlantModel;

use super::scenario::{NoisePolicy, Rounds, Scenario};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainMode {
    /// Gains from the LP design.
    Designed,
    /// Entries of `L` and `Γ` uniform in `[-scale, scale]`; usually destabilizing.
    Random { scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpec {
    pub max_states: usize,
    pub max_agents: usize,
    pub max_outputs: usize,
    /// `‖A‖∞` is drawn uniformly from this range.
    pub a_norm: (f64, f64),
    pub gains: GainMode,
    pub noiseless: bool,
    pub horizon: usize,
    /// Extra edge probability on top of a Hamiltonian ring.
    pub edge_probability: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        Self {
            max_states: 4,
            max_agents: 4,
            max_outputs: 2,
            a_norm: (0.5, 1.3),
            gains: GainMode::Designed,
            noiseless: false,
            horizon: 100,
            edge_probability: 0.3,
        }
    }
}

fn uniform_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..=scale))
}

/// A strongly connected graph: a ring through a random permutation plus
/// independent extra edges.
pub fn random_graph(rng: &mut impl Rng, nodes: usize, edge_probability: f64) -> Result<Digraph> {
    let mut order: Vec<usize> = (0..nodes).collect();
    for i in (1..nodes).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut edges: Vec<(usize, usize)> = (0..nodes).map(|i| (order[i], order[(i + 1) % nodes])).collect();
    for i in 0..nodes {
        for j in 0..nodes {
            if i != j && rng.random_bool(edge_probability) {
                edges.push((i, j));
            }
        }
    }
    Digraph::new(nodes, &edges)
}

fn random_bounds(rng: &mut impl Rng, len: usize, noiseless: bool) -> IntervalVector {
    if noiseless {
        return IntervalVector::point(DVector::zeros(len)).expect("zero bounds");
    }
    let lo = DVector::from_fn(len, |_, _| -rng.random_range(0.01..=0.5));
    let hi = DVector::from_fn(len, |_, _| rng.random_range(0.01..=0.5));
    IntervalVector::new(lo, hi).expect("lo < 0 < hi")
}

pub fn random_scenario(rng: &mut impl Rng, spec: &RandomSpec) -> Result<Scenario> {
    let n = rng.random_range(1..=spec.max_states);
    let agents = rng.random_range(1..=spec.max_agents);
    let nw = rng.random_range(1..=3);

    let mut a = uniform_matrix(rng, n, n, 1.0);
    let norm = a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    if norm > 0.0 {
        a *= rng.random_range(spec.a_norm.0..=spec.a_norm.1) / norm;
    }
    let b = uniform_matrix(rng, n, nw, 1.0);
    let mut c = Vec::with_capacity(agents);
    let mut d = Vec::with_capacity(agents);
    let mut v_bounds = Vec::with_capacity(agents);
    for _ in 0..agents {
        let m = rng.random_range(1..=spec.max_outputs);
        let nv = rng.random_range(1..=2);
        c.push(uniform_matrix(rng, m, n, 1.0));
        d.push(uniform_matrix(rng, m, nv, 1.0));
        v_bounds.push(random_bounds(rng, nv, spec.noiseless));
    }
    let w_bounds = random_bounds(rng, nw, spec.noiseless);
    let center = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
    let radius = DVector::from_fn(n, |_, _| rng.random_range(0.1..=1.0));
    let x0_bounds = IntervalVector::new(&center - &radius, &center + &radius)?;

    let explicit_gains = match spec.gains {
        GainMode::Designed => None,
        GainMode::Random { scale } => Some(
            c.iter()
                .map(|ci| (uniform_matrix(rng, n, ci.nrows(), scale), uniform_matrix(rng, n, ci.nrows(), scale)))
                .collect(),
        ),
    };
    let graph = random_graph(rng, agents, spec.edge_probability)?;
    let policy = if spec.noiseless { NoisePolicy::Zero } else { NoisePolicy::Uniform };
    let plant = PlantModel::new(a, b, c, d, w_bounds, v_bounds, x0_bounds)?;
    let scenario = Scenario {
        name: "random".to_string(),
        plant,
        graph,
        x0: None,
        process_noise: policy.clone(),
        measurement_noise: vec![policy; agents],
        horizon: spec.horizon,
        rounds: Rounds::Auto,
        seed: rng.random(),
        explicit_gains,
        source: None,
    };
    scenario.validate()?;
    Ok(scenario)
}
