//! Scenario files.
//!
//! Scenarios are TOML. Numbers may be written as integers, floats, or strings
//! holding a decimal or a fraction (`"1/3"`). Matrices are either explicit
//! row lists or one of the shorthand tables:
//!
//! ```toml
//! a = { kron = [{ identity = 6 }, [[1, 0.01], [0, 1]]] }
//! c = { kron = [{ unit_row = [2, 6] }, [[1, 0]]] }
//! b = { scale = "1/2", of = { identity = 4 } }
//! z = { zeros = [2, 3] }
//! ```
//!
//! `unit_row = [i, len]` is the `1 × len` row with a one in column `i`;
//! `unit_col` is its transpose. A bare number is a `1 × 1` matrix. Vectors are
//! lists, `{ repeat = r, of = [...] }`, or `{ fill = x, len = n }`. Agents and
//! graph nodes are numbered from 0.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use toml::Value;

use crate::error::{Error, Result};
use crate::graph::Digraph;
use crate::interval::IntervalVector;
use crate::model::PlantModel;

/// Scalar signal shapes for formula noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    Sin,
    Cos,
    Sin2,
    Const,
}

/// `amplitude · f(frequency · k + phase)`; `const` ignores the argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormulaComponent {
    pub form: Form,
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl FormulaComponent {
    pub fn eval(&self, k: usize) -> f64 {
        let arg = self.frequency * k as f64 + self.phase;
        match self.form {
            Form::Sin => self.amplitude * arg.sin(),
            Form::Cos => self.amplitude * arg.cos(),
            Form::Sin2 => self.amplitude * arg.sin().powi(2),
            Form::Const => self.amplitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoisePolicy {
    /// Seeded draws, uniform within the bounds.
    Uniform,
    Zero,
    /// One component per coordinate.
    Formula(Vec<FormulaComponent>),
}

impl NoisePolicy {
    pub fn is_deterministic(&self) -> bool {
        !matches!(self, NoisePolicy::Uniform)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounds {
    /// Use `d*` from the detectability check.
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub plant: PlantModel,
    pub graph: Digraph,
    /// True initial state; sampled inside the initial bounds when absent.
    pub x0: Option<DVector<f64>>,
    pub process_noise: NoisePolicy,
    pub measurement_noise: Vec<NoisePolicy>,
    pub horizon: usize,
    pub rounds: Rounds,
    pub seed: u64,
    /// Per-agent `(L, Γ)` overriding the LP design.
    pub explicit_gains: Option<Vec<(DMatrix<f64>, DMatrix<f64>)>>,
    /// Text the scenario was loaded from, if any.
    pub source: Option<String>,
}

impl Scenario {
    /// The same plant with all noise bounds collapsed to zero.
    pub fn noiseless(&self) -> Scenario {
        let mut s = self.clone();
        let zero = |len: usize| IntervalVector::point(DVector::zeros(len)).expect("zero interval");
        s.plant.w_bounds = zero(s.plant.w_bounds.len());
        s.plant.v_bounds = s.plant.v_bounds.iter().map(|v| zero(v.len())).collect();
        s.process_noise = NoisePolicy::Zero;
        s.measurement_noise = vec![NoisePolicy::Zero; s.plant.agents()];
        s
    }

    /// Checks bounds, shapes, and that deterministic noise stays in bounds for
    /// every `k ≤ horizon`.
    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        if self.graph.node_count() != self.plant.agents() {
            return Err(Error::validation(
                "graph.nodes",
                format!("{} nodes for {} agents", self.graph.node_count(), self.plant.agents()),
            ));
        }
        if self.measurement_noise.len() != self.plant.agents() {
            return Err(Error::validation("agents", "one measurement noise policy per agent"));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != self.plant.n() {
                return Err(Error::validation("initial.state", format!("expected length {}", self.plant.n())));
            }
            if !self.plant.x0_bounds.contains(x0)? {
                return Err(Error::validation("initial.state", "true initial state lies outside the initial bounds"));
            }
        }
        check_policy("process_noise", &self.process_noise, &self.plant.w_bounds, self.horizon)?;
        for (i, (p, b)) in self.measurement_noise.iter().zip(&self.plant.v_bounds).enumerate() {
            check_policy(&format!("agents[{i}].noise"), p, b, self.horizon)?;
        }
        if let Some(gains) = &self.explicit_gains {
            if gains.len() != self.plant.agents() {
                return Err(Error::validation("agents", "explicit gains must be given for every agent or none"));
            }
            let n = self.plant.n();
            for (i, ((l, g), c)) in gains.iter().zip(&self.plant.c).enumerate() {
                let m = c.nrows();
                if l.shape() != (n, m) || g.shape() != (n, m) {
                    return Err(Error::validation(format!("agents[{i}].l"), format!("L and gamma must be {n}x{m}")));
                }
            }
        }
        Ok(())
    }
}

fn check_policy(field: &str, policy: &NoisePolicy, bounds: &IntervalVector, horizon: usize) -> Result<()> {
    match policy {
        NoisePolicy::Uniform => Ok(()),
        NoisePolicy::Zero => {
            if bounds.contains(&DVector::zeros(bounds.len()))? {
                Ok(())
            } else {
                Err(Error::validation(field, "zero noise lies outside the bounds"))
            }
        }
        NoisePolicy::Formula(components) => {
            if components.len() != bounds.len() {
                return Err(Error::validation(
                    field,
                    format!("formula has {} components for {} coordinates", components.len(), bounds.len()),
                ));
            }
            for k in 0..=horizon {
                for (j, c) in components.iter().enumerate() {
                    let v = c.eval(k);
                    if !(bounds.lower()[j] <= v && v <= bounds.upper()[j]) {
                        return Err(Error::validation(
                            field,
                            format!("formula component {j} gives {v} at k = {k}, outside [{}, {}]", bounds.lower()[j], bounds.upper()[j]),
                        ));
                    }
                }
            }
            Ok(())
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    horizon: usize,
    #[serde(default)]
    rounds: Option<Value>,
    #[serde(default)]
    seed: u64,
    plant: RawPlant,
    initial: RawInitial,
    process_noise: RawNoise,
    graph: RawGraph,
    agents: Vec<RawAgent>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    a: Value,
    b: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    lower: Option<Value>,
    upper: Option<Value>,
    state: Option<Value>,
    radius: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    lower: Value,
    upper: Value,
    #[serde(default)]
    policy: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    kind: String,
    nodes: usize,
    #[serde(default)]
    edges: Vec<(usize, usize)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    c: Value,
    d: Option<Value>,
    noise: RawNoise,
    l: Option<Value>,
    gamma: Option<Value>,
}

pub fn parse_number(v: &Value, field: &str) -> Result<f64> {
    let x = match v {
        Value::Integer(i) => *i as f64,
        Value::Float(f) => *f,
        Value::String(s) => parse_number_str(s).ok_or_else(|| Error::validation(field, format!("cannot parse number {s:?}")))?,
        other => return Err(Error::validation(field, format!("expected a number, got {}", other.type_str()))),
    };
    if !x.is_finite() {
        return Err(Error::validation(field, "numbers must be finite"));
    }
    Ok(x)
}

fn parse_number_str(s: &str) -> Option<f64> {
    let s = s.trim();
    match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().ok()?;
            let den: f64 = den.trim().parse().ok()?;
            (den != 0.0).then(|| num / den)
        }
        None => s.parse().ok(),
    }
}

fn parse_usize(v: &Value, field: &str) -> Result<usize> {
    v.as_integer()
        .and_then(|i| usize::try_from(i).ok())
        .ok_or_else(|| Error::validation(field, "expected a nonnegative integer"))
}

fn parse_pair(v: &Value, field: &str) -> Result<(usize, usize)> {
    match v.as_array().map(Vec::as_slice) {
        Some([a, b]) => Ok((parse_usize(a, field)?, parse_usize(b, field)?)),
        _ => Err(Error::validation(field, "expected a pair [a, b]")),
    }
}

pub fn parse_matrix(v: &Value, field: &str) -> Result<DMatrix<f64>> {
    match v {
        Value::Integer(_) | Value::Float(_) | Value::String(_) => Ok(DMatrix::from_element(1, 1, parse_number(v, field)?)),
        Value::Array(rows) => {
            if rows.is_empty() {
                return Err(Error::validation(field, "matrix has no rows"));
            }
            let parsed: Vec<Vec<f64>> = rows
                .iter()
                .enumerate()
                .map(|(r, row)| {
                    let f = format!("{field}[{r}]");
                    row.as_array()
                        .ok_or_else(|| Error::validation(&f, "expected a row list"))?
                        .iter()
                        .enumerate()
                        .map(|(c, x)| parse_number(x, &format!("{f}[{c}]")))
                        .collect()
                })
                .collect::<Result<_>>()?;
            let cols = parsed[0].len();
            if let Some(r) = parsed.iter().position(|row| row.len() != cols) {
                return Err(Error::validation(format!("{field}[{r}]"), format!("expected {cols} entries, got {}", parsed[r].len())));
            }
            Ok(DMatrix::from_fn(parsed.len(), cols, |i, j| parsed[i][j]))
        }
        Value::Table(t) => {
            if let Some(n) = t.get("identity") {
                let n = parse_usize(n, &format!("{field}.identity"))?;
                Ok(DMatrix::identity(n, n))
            } else if let Some(z) = t.get("zeros") {
                let (r, c) = parse_pair(z, &format!("{field}.zeros"))?;
                Ok(DMatrix::zeros(r, c))
            } else if let Some(u) = t.get("unit_row") {
                let (i, len) = parse_pair(u, &format!("{field}.unit_row"))?;
                if i >= len {
                    return Err(Error::validation(format!("{field}.unit_row"), format!("index {i} out of range for length {len}")));
                }
                Ok(DMatrix::from_fn(1, len, |_, j| if j == i { 1.0 } else { 0.0 }))
            } else if let Some(u) = t.get("unit_col") {
                let (i, len) = parse_pair(u, &format!("{field}.unit_col"))?;
                if i >= len {
                    return Err(Error::validation(format!("{field}.unit_col"), format!("index {i} out of range for length {len}")));
                }
                Ok(DMatrix::from_fn(len, 1, |j, _| if j == i { 1.0 } else { 0.0 }))
            } else if let Some(k) = t.get("kron") {
                match k.as_array().map(Vec::as_slice) {
                    Some([a, b]) => {
                        let a = parse_matrix(a, &format!("{field}.kron[0]"))?;
                        let b = parse_matrix(b, &format!("{field}.kron[1]"))?;
                        Ok(a.kronecker(&b))
                    }
                    _ => Err(Error::validation(format!("{field}.kron"), "expected two matrices")),
                }
            } else if let (Some(s), Some(of)) = (t.get("scale"), t.get("of")) {
                let s = parse_number(s, &format!("{field}.scale"))?;
                Ok(parse_matrix(of, &format!("{field}.of"))? * s)
            } else {
                let keys: Vec<&str> = t.keys().map(String::as_str).collect();
                Err(Error::validation(field, format!("unknown matrix shorthand with keys {keys:?}")))
            }
        }
        other => Err(Error::validation(field, format!("expected a matrix, got {}", other.type_str()))),
    }
}

pub fn parse_vector(v: &Value, field: &str) -> Result<DVector<f64>> {
    match v {
        Value::Array(items) => {
            let xs: Vec<f64> = items
                .iter()
                .enumerate()
                .map(|(i, x)| parse_number(x, &format!("{field}[{i}]")))
                .collect::<Result<_>>()?;
            Ok(DVector::from_vec(xs))
        }
        Value::Table(t) => {
            if let (Some(r), Some(of)) = (t.get("repeat"), t.get("of")) {
                let r = parse_usize(r, &format!("{field}.repeat"))?;
                let base = parse_vector(of, &format!("{field}.of"))?;
                Ok(DVector::from_iterator(base.len() * r, (0..r).flat_map(|_| base.iter().copied())))
            } else if let (Some(x), Some(len)) = (t.get("fill"), t.get("len")) {
                let x = parse_number(x, &format!("{field}.fill"))?;
                Ok(DVector::from_element(parse_usize(len, &format!("{field}.len"))?, x))
            } else {
                Err(Error::validation(field, "expected a list, {repeat, of} or {fill, len}"))
            }
        }
        _ => Ok(DVector::from_element(1, parse_number(v, field)?)),
    }
}

fn parse_bounds(lower: &Value, upper: &Value, field: &str) -> Result<IntervalVector> {
    let lo = parse_vector(lower, &format!("{field}.lower"))?;
    let hi = parse_vector(upper, &format!("{field}.upper"))?;
    if lo.len() != hi.len() {
        return Err(Error::validation(field, format!("lower has length {}, upper has length {}", lo.len(), hi.len())));
    }
    if let Some(s) = (0..lo.len()).find(|&s| !(lo[s] <= hi[s])) {
        return Err(Error::validation(field, format!("lower[{s}] = {} exceeds upper[{s}] = {}", lo[s], hi[s])));
    }
    IntervalVector::new(lo, hi)
}

fn parse_policy(v: Option<&Value>, field: &str) -> Result<NoisePolicy> {
    match v {
        None => Ok(NoisePolicy::Uniform),
        Some(Value::String(s)) => match s.as_str() {
            "uniform" => Ok(NoisePolicy::Uniform),
            "zero" => Ok(NoisePolicy::Zero),
            other => Err(Error::validation(field, format!("unknown noise policy {other:?}"))),
        },
        Some(Value::Table(t)) => {
            if let Some(k) = t.keys().find(|k| !matches!(k.as_str(), "formula" | "repeat")) {
                return Err(Error::validation(field, format!("unknown key {k:?}")));
            }
            let items = t
                .get("formula")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::validation(field, "expected a formula list"))?;
            let base: Vec<FormulaComponent> = items
                .iter()
                .enumerate()
                .map(|(j, c)| parse_component(c, &format!("{field}.formula[{j}]")))
                .collect::<Result<_>>()?;
            let r = t.get("repeat").map(|r| parse_usize(r, &format!("{field}.repeat"))).transpose()?.unwrap_or(1);
            Ok(NoisePolicy::Formula((0..r).flat_map(|_| base.iter().copied()).collect()))
        }
        Some(other) => Err(Error::validation(field, format!("expected a policy, got {}", other.type_str()))),
    }
}

fn parse_component(v: &Value, field: &str) -> Result<FormulaComponent> {
    let t = v.as_table().ok_or_else(|| Error::validation(field, "expected a table"))?;
    if let Some(k) = t.keys().find(|k| !matches!(k.as_str(), "form" | "amplitude" | "frequency" | "phase")) {
        return Err(Error::validation(field, format!("unknown key {k:?}")));
    }
    let form = match t.get("form").and_then(Value::as_str) {
        Some("sin") => Form::Sin,
        Some("cos") => Form::Cos,
        Some("sin2") => Form::Sin2,
        Some("const") => Form::Const,
        other => return Err(Error::validation(format!("{field}.form"), format!("expected sin, cos, sin2 or const, got {other:?}"))),
    };
    let num = |key: &str| -> Result<f64> {
        t.get(key).map(|x| parse_number(x, &format!("{field}.{key}"))).transpose().map(|x| x.unwrap_or(0.0))
    };
    Ok(FormulaComponent {
        form,
        amplitude: num("amplitude")?,
        frequency: num("frequency")?,
        phase: num("phase")?,
    })
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let a = parse_matrix(&raw.plant.a, "plant.a")?;
    let b = parse_matrix(&raw.plant.b, "plant.b")?;
    let n = a.nrows();

    let (x0_bounds, x0) = match (&raw.initial.lower, &raw.initial.upper, &raw.initial.state, &raw.initial.radius) {
        (Some(lo), Some(hi), state, None) => {
            let bounds = parse_bounds(lo, hi, "initial")?;
            let x0 = state.as_ref().map(|s| parse_vector(s, "initial.state")).transpose()?;
            (bounds, x0)
        }
        (None, None, Some(state), Some(radius)) => {
            let x0 = parse_vector(state, "initial.state")?;
            let r = parse_number(radius, "initial.radius")?;
            if r < 0.0 {
                return Err(Error::validation("initial.radius", "radius must be nonnegative"));
            }
            (IntervalVector::new(x0.add_scalar(-r), x0.add_scalar(r))?, Some(x0))
        }
        _ => {
            return Err(Error::validation(
                "initial",
                "give either lower and upper (optionally with state) or state and radius",
            ))
        }
    };

    let w_bounds = parse_bounds(&raw.process_noise.lower, &raw.process_noise.upper, "process_noise")?;
    let process_noise = parse_policy(raw.process_noise.policy.as_ref(), "process_noise.policy")?;

    let mut c = Vec::new();
    let mut d = Vec::new();
    let mut v_bounds = Vec::new();
    let mut measurement_noise = Vec::new();
    let mut gains = Vec::new();
    for (i, agent) in raw.agents.iter().enumerate() {
        let ci = parse_matrix(&agent.c, &format!("agents[{i}].c"))?;
        let di = match &agent.d {
            Some(v) => parse_matrix(v, &format!("agents[{i}].d"))?,
            None => DMatrix::identity(ci.nrows(), ci.nrows()),
        };
        v_bounds.push(parse_bounds(&agent.noise.lower, &agent.noise.upper, &format!("agents[{i}].noise"))?);
        measurement_noise.push(parse_policy(agent.noise.policy.as_ref(), &format!("agents[{i}].noise.policy"))?);
        match (&agent.l, &agent.gamma) {
            (Some(l), Some(g)) => gains.push((parse_matrix(l, &format!("agents[{i}].l"))?, parse_matrix(g, &format!("agents[{i}].gamma"))?)),
            (None, None) => {}
            _ => return Err(Error::validation(format!("agents[{i}]"), "give both l and gamma or neither")),
        }
        c.push(ci);
        d.push(di);
    }
    let explicit_gains = match gains.len() {
        0 => None,
        k if k == c.len() => Some(gains),
        _ => return Err(Error::validation("agents", "explicit gains must be given for every agent or none")),
    };

    let graph = match raw.graph.kind.as_str() {
        "complete" => Digraph::complete(raw.graph.nodes),
        "directed_ring" => Digraph::directed_ring(raw.graph.nodes),
        "edges" => Digraph::new(raw.graph.nodes, &raw.graph.edges),
        other => return Err(Error::validation("graph.kind", format!("unknown graph kind {other:?}"))),
    }
    .map_err(|e| Error::validation("graph", e.to_string()))?;

    let rounds = match &raw.rounds {
        None => Rounds::Auto,
        Some(Value::String(s)) if s == "auto" => Rounds::Auto,
        Some(v) => Rounds::Fixed(parse_usize(v, "rounds")?),
    };

    if x0_bounds.len() != n {
        return Err(Error::validation("initial", format!("bounds have length {} but A is {n}x{n}", x0_bounds.len())));
    }
    let plant = PlantModel::new(a, b, c, d, w_bounds, v_bounds, x0_bounds)?;
    let scenario = Scenario {
        name: raw.name.unwrap_or_else(|| "scenario".to_string()),
        plant,
        graph,
        x0,
        process_noise,
        measurement_noise,
        horizon: raw.horizon,
        rounds,
        seed: raw.seed,
        explicit_gains,
        source: Some(text.to_string()),
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: impl AsRef<std::path::Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}
