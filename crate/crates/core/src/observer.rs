//! The distributed interval observer runtime.
//!
//! Every step has two phases. First, each agent propagates its framer through
//! the equivalent plant form
//! `x_{k+1} = Ã x_k + T B w_k + Γ (y_{k+1} − D v_{k+1}) + L (y_k − D v_k)`
//! and bounds every uncertain term with the sign-split interval image. Then
//! `d` synchronous rounds of neighborhood intersection follow.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::Digraph;
use crate::interval::{sign_split, IntervalVector, SignSplitMatrix};
use crate::model::PlantModel;
use crate::network::{Envelope, SyncNetwork};
use crate::stability::{realized_selection, SelectionAssignment};
use crate::synthesis::AgentGains;

/// Gains of one agent together with the sign splits the local update needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGains {
    pub l: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub a_tilde: SignSplitMatrix,
    pub tb: SignSplitMatrix,
    pub ld: SignSplitMatrix,
    pub gd: SignSplitMatrix,
    rounding: RoundingModel,
}

/// Coefficients of the outward margin that absorbs floating-point rounding.
///
/// The margin bounds three things: the rounding in evaluating the update; the
/// difference between the stored `T`, `Ã`, `TB`, `LD`, `ΓD` and the exact
/// ones implied by the stored `L`, `Γ`; and the rounding in the simulated
/// plant step and outputs the framers are compared against. All bounds are
/// the usual `γ_k = k u / (1 − k u)` estimates.
#[derive(Debug, Clone, PartialEq)]
struct RoundingModel {
    abs_a: DMatrix<f64>,
    abs_b: DMatrix<f64>,
    /// Multipliers of `|x_k|`, `|x_{k+1}|`, `|w|` and `|v|` in the margin.
    mx: DMatrix<f64>,
    mx1: DMatrix<f64>,
    mw: DMatrix<f64>,
    mv: DMatrix<f64>,
    /// `|Ã|`, `|TB|` and `|LD| + |ΓD|` as stored.
    a_tilde: DMatrix<f64>,
    tb: DMatrix<f64>,
    d: DMatrix<f64>,
    update: f64,
    plant: f64,
}

fn gamma(k: usize) -> f64 {
    let ku = k as f64 * f64::EPSILON / 2.0;
    ku / (1.0 - ku)
}

fn abs_max(lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    lo.zip_map(hi, |a, b| a.abs().max(b.abs()))
}

impl RoundingModel {
    fn new(
        gains: &AgentGains,
        split: (&SignSplitMatrix, &SignSplitMatrix, &SignSplitMatrix, &SignSplitMatrix),
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        c: &DMatrix<f64>,
        d: &DMatrix<f64>,
    ) -> Self {
        let (n, nw, m, nv) = (a.nrows(), b.ncols(), c.nrows(), d.ncols());
        let (abs_a, abs_b, abs_c, abs_d) = (a.abs(), b.abs(), c.abs(), d.abs());
        let (abs_l, abs_g) = (gains.l.abs(), gains.gamma.abs());
        let gc = &abs_g * &abs_c;
        // stored T against I − ΓC
        let dt = (DMatrix::identity(n, n) + &gc) * gamma(m + 1);
        let abs_t = gains.t.abs() + &dt;
        let d_a_tilde = (gains.t.abs() * &abs_a + &abs_l * &abs_c) * gamma(n + m + 1) + &dt * &abs_a;
        let d_tb = gains.t.abs() * &abs_b * gamma(n) + &dt * &abs_b;
        let d_ld = (&abs_l * &abs_d + &abs_g * &abs_d) * gamma(m);
        let plant = gamma(n.max(nw) + 1);
        let output = gamma(n.max(nv) + 1);
        let (a_split, tb_split, ld_split, gd_split) = split;
        Self {
            mx: &abs_t * &abs_a * plant + &abs_l * &abs_c * output + d_a_tilde,
            mx1: gc * output,
            mw: &abs_t * &abs_b * plant + d_tb,
            mv: (&abs_g + &abs_l) * &abs_d * output + d_ld,
            abs_a,
            abs_b,
            a_tilde: a_split.abs(),
            tb: tb_split.abs(),
            d: ld_split.abs() + gd_split.abs(),
            // products, the longest inner sum, the paired sign-split terms,
            // the chain of five vector sums, and the final margin shift
            update: gamma(n.max(nw).max(m).max(nv) + 10),
            plant,
        }
    }
}

impl ObserverGains {
    pub fn new(gains: &AgentGains, a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<Self> {
        let n = gains.n();
        if a.shape() != (n, n)
            || b.nrows() != n
            || c.shape() != (gains.l.ncols(), n)
            || gains.l.ncols() != d.nrows()
            || gains.gamma.ncols() != d.nrows()
        {
            return Err(Error::shape(
                "ObserverGains",
                format!("A {n}x{n}, B with {n} rows, C and D with {} rows", gains.l.ncols()),
                format!("A {:?}, B {:?}, C {:?}, D {:?}", a.shape(), b.shape(), c.shape(), d.shape()),
            ));
        }
        let a_tilde = sign_split(&gains.a_tilde)?;
        let tb = sign_split(&(&gains.t * b))?;
        let ld = sign_split(&(&gains.l * d))?;
        let gd = sign_split(&(&gains.gamma * d))?;
        Ok(Self {
            l: gains.l.clone(),
            gamma: gains.gamma.clone(),
            rounding: RoundingModel::new(gains, (&a_tilde, &tb, &ld, &gd), a, b, c, d),
            a_tilde,
            tb,
            ld,
            gd,
        })
    }

    pub fn for_plant(plant: &PlantModel, gains: &[AgentGains]) -> Result<Vec<Self>> {
        if gains.len() != plant.agents() {
            return Err(Error::InvalidInput(format!(
                "{} gain sets for {} agents",
                gains.len(),
                plant.agents()
            )));
        }
        gains
            .iter()
            .zip(plant.c.iter().zip(&plant.d))
            .map(|(g, (c, d))| Self::new(g, &plant.a, &plant.b, c, d))
            .collect()
    }

    pub fn n(&self) -> usize {
        self.a_tilde.nrows()
    }

    /// Outward margin per state for one update from `x` with the given noise
    /// bounds and outputs.
    fn rounding_margin(
        &self,
        x: &IntervalVector,
        w: &IntervalVector,
        v: &IntervalVector,
        y_k: &DVector<f64>,
        y_k1: &DVector<f64>,
    ) -> DVector<f64> {
        let r = &self.rounding;
        let xm = abs_max(x.lower(), x.upper());
        let wm = abs_max(w.lower(), w.upper());
        let vm = abs_max(v.lower(), v.upper());
        let x1 = (&r.abs_a * &xm + &r.abs_b * &wm) * (1.0 + r.plant);
        // what the update itself sums, in absolute value
        let mag = &r.a_tilde * &xm + &r.tb * &wm + self.l.abs() * y_k.abs() + self.gamma.abs() * y_k1.abs() + &r.d * &vm;
        let margin = mag * r.update + &r.mx * &xm + &r.mx1 * x1 + &r.mw * &wm + &r.mv * vm;
        // the margin is itself a rounded nonnegative sum
        margin.map(|v| v * (1.0 + 4.0 * r.update) + f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentObserverState {
    pub agent: usize,
    pub framer: IntervalVector,
    pub gains: ObserverGains,
    pub last_measurement: Option<DVector<f64>>,
}

/// Framer broadcast during one network round.
pub type NetworkMessage = Envelope<IntervalVector>;

/// One agent's propagation and measurement update.
///
/// `y_k` and `y_k1` are the agent's outputs at `k` and `k + 1`; `v_bounds`
/// bound both `v_k` and `v_{k+1}`.
pub fn local_update(
    state: &AgentObserverState,
    y_k: &DVector<f64>,
    y_k1: &DVector<f64>,
    w_bounds: &IntervalVector,
    v_bounds: &IntervalVector,
) -> Result<IntervalVector> {
    let g = &state.gains;
    let (xl, xu) = (state.framer.lower(), state.framer.upper());
    let (wl, wu) = (w_bounds.lower(), w_bounds.upper());
    let (vl, vu) = (v_bounds.lower(), v_bounds.upper());
    if xl.len() != g.n() || wl.len() != g.tb.ncols() || vl.len() != g.ld.ncols() {
        return Err(Error::shape("local_update", "framer, w and v sized to the gains", "mismatch"));
    }
    if y_k.len() != g.l.ncols() || y_k1.len() != g.gamma.ncols() {
        return Err(Error::shape("local_update", g.l.ncols(), y_k.len()));
    }
    let known = &g.l * y_k + &g.gamma * y_k1;
    let v_plus = &g.ld.plus + &g.gd.plus;
    let v_minus = &g.ld.minus + &g.gd.minus;

    let margin = g.rounding_margin(&state.framer, w_bounds, v_bounds, y_k, y_k1);

    let lower = g.a_tilde.image_lower(xl, xu) + g.tb.image_lower(wl, wu) + &known - &v_plus * vu + &v_minus * vl - &margin;
    let upper = g.a_tilde.image_upper(xl, xu) + g.tb.image_upper(wl, wu) + &known - &v_plus * vl + &v_minus * vu + &margin;
    if let Some(s) = (0..lower.len()).find(|&s| !(lower[s] <= upper[s])) {
        return Err(Error::Internal(format!(
            "agent {}: local update produced lower {} > upper {} in state {s}",
            state.agent, lower[s], upper[s]
        )));
    }
    IntervalVector::new(lower, upper)
}

/// One round of neighborhood intersection, exchanged through `net`.
pub fn network_round(framers: &[IntervalVector], net: &mut SyncNetwork<'_>) -> Result<Vec<IntervalVector>> {
    let inboxes: Vec<Vec<NetworkMessage>> = net.exchange(framers)?;
    inboxes
        .into_iter()
        .map(|inbox| {
            let mut msgs = inbox.into_iter();
            let first = msgs.next().expect("self-loop guarantees one message").payload;
            msgs.try_fold(first, |acc, m| acc.intersect(&m.payload))
        })
        .collect()
}

/// What a step produced besides the new framers.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub pre_network: Vec<IntervalVector>,
    pub selection: SelectionAssignment,
}

/// Advances every agent from `k` to `k + 1`: local update, `d` network rounds,
/// commit. With `d = 0` the agents run as independent local observers.
pub fn dio_step(
    states: &mut [AgentObserverState],
    graph: &Digraph,
    y_k: &[DVector<f64>],
    y_k1: &[DVector<f64>],
    w_bounds: &IntervalVector,
    v_bounds: &[IntervalVector],
    d: usize,
) -> Result<StepRecord> {
    let agents = states.len();
    if graph.node_count() != agents || y_k.len() != agents || y_k1.len() != agents || v_bounds.len() != agents {
        return Err(Error::InvalidInput("one state, measurement pair and noise bound per graph node".into()));
    }
    let pre_network: Vec<IntervalVector> = states
        .iter()
        .enumerate()
        .map(|(i, st)| local_update(st, &y_k[i], &y_k1[i], w_bounds, &v_bounds[i]))
        .collect::<Result<_>>()?;

    let mut framers = pre_network.clone();
    let mut net = SyncNetwork::new(graph);
    for _ in 0..d {
        framers = network_round(&framers, &mut net)?;
    }
    let selection = if d == 0 {
        SelectionAssignment::identity(pre_network[0].len(), agents)
    } else {
        realized_selection(&pre_network, graph, d)?
    };
    for ((st, framer), y) in states.iter_mut().zip(framers).zip(y_k1) {
        st.framer = framer;
        st.last_measurement = Some(y.clone());
    }
    Ok(StepRecord { pre_network, selection })
}

/// All agents of one plant, advanced in lockstep.
#[derive(Debug, Clone)]
pub struct DistributedObserver {
    graph: Digraph,
    states: Vec<AgentObserverState>,
    w_bounds: IntervalVector,
    v_bounds: Vec<IntervalVector>,
    d: usize,
}

impl DistributedObserver {
    /// Every agent starts from the plant's initial bounds.
    pub fn new(plant: &PlantModel, graph: Digraph, gains: &[AgentGains], d: usize) -> Result<Self> {
        if graph.node_count() != plant.agents() {
            return Err(Error::InvalidInput(format!(
                "graph has {} nodes but the plant has {} agents",
                graph.node_count(),
                plant.agents()
            )));
        }
        let states = ObserverGains::for_plant(plant, gains)?
            .into_iter()
            .enumerate()
            .map(|(agent, gains)| AgentObserverState {
                agent,
                framer: plant.x0_bounds.clone(),
                gains,
                last_measurement: None,
            })
            .collect();
        Ok(Self {
            graph,
            states,
            w_bounds: plant.w_bounds.clone(),
            v_bounds: plant.v_bounds.clone(),
            d,
        })
    }

    pub fn rounds(&self) -> usize {
        self.d
    }

    pub fn states(&self) -> &[AgentObserverState] {
        &self.states
    }

    pub fn framers(&self) -> Vec<IntervalVector> {
        self.states.iter().map(|s| s.framer.clone()).collect()
    }

    pub fn step(&mut self, y_k: &[DVector<f64>], y_k1: &[DVector<f64>]) -> Result<StepRecord> {
        dio_step(&mut self.states, &self.graph, y_k, y_k1, &self.w_bounds, &self.v_bounds, self.d)
    }
}
