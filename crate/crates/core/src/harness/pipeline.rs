//! End-to-end runs: gain design, detectability check, certificate, observer
//! simulation, and error analysis.

use std::time::Instant;

use log::{info, warn};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::error_analysis::{
    collective_error, comparison_trajectory, domination_violation, inf_norm, iss_bound, noise_injection, NoiseInjection,
};
use crate::interval::IntervalVector;
use crate::observer::{DistributedObserver, ObserverGains};
use crate::stability::{
    assemble_ahat, hstar_from_assignment, infnorm_certificate, lsr_certificate, CertificateKind, SelectionAssignment,
    StabilityCertificate, DEFAULT_EXHAUSTIVE_LIMIT,
};
use crate::synthesis::{design_gains, run_cpdn_init, AgentGains, CpdnResult};

use super::scenario::{Rounds, Scenario};
use super::simulate::{simulate_plant, Trajectory};

/// Slack allowed when checking `ẽ_k ≥ e_k` in floating point.
pub const DOMINATION_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub gains: Vec<AgentGains>,
    /// Sum of `Ã` row norms per agent, the LP objective when gains were designed.
    pub objective: Vec<f64>,
    pub cpdn: CpdnResult,
    pub explicit: bool,
}

/// Designs gains for every agent (unless the scenario fixes them) and runs
/// the distributed detectability check.
pub fn synthesize(scenario: &Scenario) -> Result<Synthesis> {
    let plant = &scenario.plant;
    let (gains, explicit) = match &scenario.explicit_gains {
        Some(g) => (
            g.iter()
                .zip(&plant.c)
                .map(|((l, gamma), c)| AgentGains::from_gains(&plant.a, c, l.clone(), gamma.clone()))
                .collect::<Result<Vec<_>>>()?,
            true,
        ),
        None => (
            plant
                .c
                .iter()
                .map(|c| design_gains(&plant.a, c).map(|(g, _)| g))
                .collect::<Result<Vec<_>>>()?,
            false,
        ),
    };
    let objective = gains.iter().map(|g| g.row_norms.iter().sum()).collect();
    let cpdn = run_cpdn_init(plant, &scenario.graph, &gains)?;
    Ok(Synthesis {
        gains,
        objective,
        cpdn,
        explicit,
    })
}

/// Rounds to run: the scenario's fixed value, else `d*`, else the diameter.
pub fn resolve_rounds(scenario: &Scenario, synthesis: &Synthesis) -> usize {
    match scenario.rounds {
        Rounds::Fixed(d) => d,
        Rounds::Auto if synthesis.cpdn.success => synthesis.cpdn.d_star,
        Rounds::Auto => synthesis.cpdn.diameter,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateMethod {
    /// `‖H_*Â‖∞`; requires a successful detectability check with `d* ≤ d`.
    Infnorm,
    /// Lower spectral radius over all selections reachable in `d` rounds.
    Lsr,
    /// `Infnorm` when available and stable, `Lsr` otherwise.
    Auto,
}

/// Certifies the collective error system for `d` rounds.
pub fn certify(scenario: &Scenario, synthesis: &Synthesis, d: usize, method: CertificateMethod) -> Result<StabilityCertificate> {
    let ahat = assemble_ahat(&synthesis.gains)?;
    let graph = &scenario.graph;
    let hstar = || -> Result<SelectionAssignment> {
        if !synthesis.cpdn.success {
            return Err(Error::InvalidAssignment("detectability check failed".into()));
        }
        if d < synthesis.cpdn.d_star {
            return Err(Error::InvalidAssignment(format!(
                "d = {d} is below d* = {}",
                synthesis.cpdn.d_star
            )));
        }
        hstar_from_assignment(&synthesis.cpdn, graph, d)
    };
    match method {
        CertificateMethod::Infnorm => Ok(infnorm_certificate(&hstar()?, &ahat)),
        CertificateMethod::Lsr => lsr_certificate(&ahat, graph, d, DEFAULT_EXHAUSTIVE_LIMIT),
        CertificateMethod::Auto => {
            if let Ok(h) = hstar() {
                let cert = infnorm_certificate(&h, &ahat);
                if cert.stable {
                    return Ok(cert);
                }
            }
            lsr_certificate(&ahat, graph, d, DEFAULT_EXHAUSTIVE_LIMIT)
        }
    }
}

/// Framers for `k = 0..=K` and the selector realized at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverRun {
    pub d: usize,
    pub framers: Vec<Vec<IntervalVector>>,
    /// `selections[k]` maps pre-network framers at `k + 1` to the committed ones.
    pub selections: Vec<SelectionAssignment>,
}

pub fn run_observer(scenario: &Scenario, gains: &[AgentGains], trajectory: &Trajectory, d: usize) -> Result<ObserverRun> {
    let mut obs = DistributedObserver::new(&scenario.plant, scenario.graph.clone(), gains, d)?;
    let k_max = trajectory.horizon();
    let mut framers = Vec::with_capacity(k_max + 1);
    let mut selections = Vec::with_capacity(k_max);
    framers.push(obs.framers());
    for k in 0..k_max {
        let rec = obs.step(&trajectory.y[k], &trajectory.y[k + 1])?;
        selections.push(rec.selection);
        framers.push(obs.framers());
    }
    Ok(ObserverRun { d, framers, selections })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub d: usize,
    /// Fraction of steps at which each agent's framer contained the state.
    pub correctness: Vec<f64>,
    pub violations: usize,
    /// `[agent][state]`.
    pub max_width: Vec<Vec<f64>>,
    pub mean_width: Vec<Vec<f64>>,
    pub final_width: Vec<Vec<f64>>,
    pub initial_width: Vec<f64>,
    /// `(agent, state)` pairs whose width exceeded ten times the initial width.
    pub diverging: Vec<(usize, usize)>,
}

impl RunStats {
    pub fn all_correct(&self) -> bool {
        self.violations == 0
    }
}

pub fn run_stats(run: &ObserverRun, trajectory: &Trajectory, initial: &IntervalVector) -> Result<RunStats> {
    let agents = run.framers[0].len();
    let n = initial.len();
    let steps = run.framers.len();
    let mut hits = vec![0usize; agents];
    let mut max_width = vec![vec![0.0f64; n]; agents];
    let mut sum_width = vec![vec![0.0f64; n]; agents];
    for (k, framers) in run.framers.iter().enumerate() {
        for (i, f) in framers.iter().enumerate() {
            if f.contains(&trajectory.x[k])? {
                hits[i] += 1;
            }
            let w = f.width();
            for s in 0..n {
                max_width[i][s] = max_width[i][s].max(w[s]);
                sum_width[i][s] += w[s];
            }
        }
    }
    let initial_width: Vec<f64> = initial.width().iter().copied().collect();
    let diverging = (0..agents)
        .flat_map(|i| (0..n).map(move |s| (i, s)))
        .filter(|&(i, s)| max_width[i][s] > 10.0 * initial_width[s])
        .collect();
    let last = run.framers.last().expect("at least the initial framers");
    Ok(RunStats {
        d: run.d,
        correctness: hits.iter().map(|&h| h as f64 / steps as f64).collect(),
        violations: hits.iter().map(|&h| steps - h).sum(),
        max_width,
        mean_width: sum_width
            .into_iter()
            .map(|row| row.into_iter().map(|s| s / steps as f64).collect())
            .collect(),
        final_width: last.iter().map(|f| f.width().iter().copied().collect()).collect(),
        initial_width,
        diverging,
    })
}

/// Error trajectories of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTrace {
    pub errors: Vec<DVector<f64>>,
    pub injections: Vec<NoiseInjection>,
    pub comparison: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub max_error: f64,
    pub max_comparison: f64,
    pub domination_holds: bool,
    /// Largest `e_k − ẽ_k` entry; nonpositive when domination holds exactly.
    pub worst_gap: f64,
    pub iss_bound: Option<f64>,
}

/// Collective errors, noise injections, and the comparison trajectory driven
/// by `assignment`.
pub fn error_trace(
    scenario: &Scenario,
    gains: &[AgentGains],
    trajectory: &Trajectory,
    run: &ObserverRun,
    assignment: &SelectionAssignment,
) -> Result<ErrorTrace> {
    let plant = &scenario.plant;
    let obs_gains = ObserverGains::for_plant(plant, gains)?;
    let ahat = assemble_ahat(gains)?;
    let errors: Vec<DVector<f64>> = run
        .framers
        .iter()
        .zip(&trajectory.x)
        .map(|(f, x)| collective_error(f, x))
        .collect::<Result<_>>()?;
    let injections: Vec<NoiseInjection> = (0..trajectory.horizon())
        .map(|k| {
            noise_injection(
                &obs_gains,
                &trajectory.w[k],
                &plant.w_bounds,
                &trajectory.v[k],
                &trajectory.v[k + 1],
                &plant.v_bounds,
            )
        })
        .collect::<Result<_>>()?;
    let comparison = comparison_trajectory(assignment, &ahat, &errors[0], &injections);
    Ok(ErrorTrace {
        errors,
        injections,
        comparison,
    })
}

pub fn summarize_errors(trace: &ErrorTrace, scenario_gains: &[AgentGains], certificate: &StabilityCertificate) -> Result<ErrorSummary> {
    let worst_gap = trace
        .comparison
        .iter()
        .zip(&trace.errors)
        .flat_map(|(c, e)| e.iter().zip(c.iter()).map(|(a, b)| a - b).collect::<Vec<_>>())
        .fold(f64::NEG_INFINITY, f64::max);
    let iss = if certificate.stable {
        let ahat = assemble_ahat(scenario_gains)?;
        Some(iss_bound(
            &certificate.assignment,
            &ahat,
            &trace.errors[0],
            &trace.injections,
            trace.errors.len(),
        )?)
    } else {
        None
    };
    Ok(ErrorSummary {
        max_error: trace.errors.iter().map(inf_norm).fold(0.0, f64::max),
        max_comparison: trace.comparison.iter().map(inf_norm).fold(0.0, f64::max),
        domination_holds: domination_violation(&trace.comparison, &trace.errors, DOMINATION_SLACK).is_none(),
        worst_gap,
        iss_bound: iss,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub kind: CertificateKind,
    pub value: f64,
    pub stable: bool,
    pub warning: Option<String>,
}

impl From<&StabilityCertificate> for CertificateSummary {
    fn from(c: &StabilityCertificate) -> Self {
        Self {
            kind: c.kind,
            value: c.value,
            stable: c.stable,
            warning: c.warning.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub synthesize_ms: f64,
    pub verify_ms: f64,
    pub simulate_ms: f64,
    pub analyze_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub horizon: usize,
    pub d: usize,
    pub d_star: usize,
    pub cpdn_success: bool,
    pub objective: Vec<f64>,
    pub certificate: CertificateSummary,
    pub dio: RunStats,
    pub baseline: Option<RunStats>,
    pub errors: Option<ErrorSummary>,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    /// Overrides the scenario's rounds.
    pub d: Option<usize>,
    /// Overrides the scenario's seed.
    pub seed: Option<u64>,
    /// Also run the `d = 0` local-observer baseline.
    pub baseline: bool,
    pub method: CertificateMethod,
    pub analyze_errors: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            d: None,
            seed: None,
            baseline: false,
            method: CertificateMethod::Auto,
            analyze_errors: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub report: RunReport,
    pub synthesis: Synthesis,
    pub certificate: StabilityCertificate,
    pub trajectory: Trajectory,
    pub dio: ObserverRun,
    pub baseline: Option<ObserverRun>,
    pub error_trace: Option<ErrorTrace>,
}

/// SHA-256 of the scenario text, or of its debug rendering when it was built
/// in code.
pub fn scenario_hash(scenario: &Scenario) -> String {
    let text = match &scenario.source {
        Some(s) => s.clone(),
        None => format!("{:?}", scenario),
    };
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub fn run_pipeline(scenario: &Scenario, options: &PipelineOptions) -> Result<PipelineOutput> {
    let t = Instant::now();
    let synthesis = synthesize(scenario).map_err(|e| e.in_stage("synthesize"))?;
    let synthesize_ms = ms(t);
    let d = options.d.unwrap_or_else(|| resolve_rounds(scenario, &synthesis));
    if !synthesis.cpdn.success {
        warn!("{}: detectability check failed; running with d = {d}", scenario.name);
    }

    let t = Instant::now();
    let certificate = certify(scenario, &synthesis, d, options.method).map_err(|e| e.in_stage("verify"))?;
    let verify_ms = ms(t);
    info!(
        "{}: d* = {}, d = {d}, {:?} certificate {}",
        scenario.name, synthesis.cpdn.d_star, certificate.kind, certificate.value
    );

    let t = Instant::now();
    let seed = options.seed.unwrap_or(scenario.seed);
    let trajectory = simulate_plant(scenario, seed).map_err(|e| e.in_stage("simulate"))?;
    let dio = run_observer(scenario, &synthesis.gains, &trajectory, d).map_err(|e| e.in_stage("simulate"))?;
    let baseline = if options.baseline {
        Some(run_observer(scenario, &synthesis.gains, &trajectory, 0).map_err(|e| e.in_stage("baseline"))?)
    } else {
        None
    };
    let simulate_ms = ms(t);

    let t = Instant::now();
    let initial = &scenario.plant.x0_bounds;
    let dio_stats = run_stats(&dio, &trajectory, initial)?;
    let baseline_stats = baseline.as_ref().map(|b| run_stats(b, &trajectory, initial)).transpose()?;
    let (error_trace, errors) = if options.analyze_errors {
        let trace = error_trace(scenario, &synthesis.gains, &trajectory, &dio, &certificate.assignment)
            .map_err(|e| e.in_stage("analyze"))?;
        let summary = summarize_errors(&trace, &synthesis.gains, &certificate).map_err(|e| e.in_stage("analyze"))?;
        (Some(trace), Some(summary))
    } else {
        (None, None)
    };
    let analyze_ms = ms(t);

    let report = RunReport {
        scenario: scenario.name.clone(),
        scenario_hash: scenario_hash(scenario),
        seed,
        horizon: scenario.horizon,
        d,
        d_star: synthesis.cpdn.d_star,
        cpdn_success: synthesis.cpdn.success,
        objective: synthesis.objective.clone(),
        certificate: (&certificate).into(),
        dio: dio_stats,
        baseline: baseline_stats,
        errors,
        timing: Timing {
            synthesize_ms,
            verify_ms,
            simulate_ms,
            analyze_ms,
        },
    };
    Ok(PipelineOutput {
        report,
        synthesis,
        certificate,
        trajectory,
        dio,
        baseline,
        error_trace,
    })
}
