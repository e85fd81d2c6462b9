//! `dio`: design, certify and simulate distributed interval observers.
//!
//! Exit codes: 0 on success, 2 for invalid input (bad scenario file or
//! arguments), 3 when `--require-stable` is given and the certificate fails,
//! 1 for anything else.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use dio_core::harness::pipeline::{certify, resolve_rounds, synthesize, CertificateMethod};
use dio_core::harness::trace::{read_csv, summarize, trace_rows, write_csv};
use dio_core::harness::{bundled, load_scenario, parse_scenario, run_pipeline, PipelineOptions, Scenario};
use dio_core::StabilityCertificate;
use dio_core::nalgebra::DMatrix;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "dio", version, about = "Distributed interval observers over digraphs")]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design gains for every agent and run the detectability check.
    Synthesize {
        /// Scenario file, or the name of a bundled scenario.
        scenario: String,
        /// Also write the result to this JSON file.
        #[arg(long, value_name = "FILE")]
        cache: Option<PathBuf>,
    },
    /// Certify stability of the collective error system.
    Verify {
        scenario: String,
        /// Communication rounds per step; defaults to the scenario's setting.
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        /// Exit with code 3 if the certificate does not show stability.
        #[arg(long)]
        require_stable: bool,
    },
    /// Simulate plant and observers; write traces and a manifest.
    Simulate {
        scenario: String,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also run the local observers without communication.
        #[arg(long)]
        baseline: bool,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        /// Output directory for CSV traces, report.json and manifest.json.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        require_stable: bool,
    },
    /// Summarize a directory written by `simulate --out`.
    Report { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Infnorm,
    Lsr,
    Auto,
}

impl From<Method> for CertificateMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Infnorm => CertificateMethod::Infnorm,
            Method::Lsr => CertificateMethod::Lsr,
            Method::Auto => CertificateMethod::Auto,
        }
    }
}

enum Failure {
    Invalid(anyhow::Error),
    Unstable(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        // An invalid assignment here can only come from the requested method
        // (infnorm below d*), so it is a usage error too.
        let invalid = e.chain().any(|c| {
            c.downcast_ref::<dio_core::Error>()
                .is_some_and(|d| d.is_validation() || matches!(d, dio_core::Error::InvalidAssignment(..)))
        });
        if invalid {
            Failure::Invalid(e)
        } else {
            Failure::Other(e)
        }
    }
}

impl From<dio_core::Error> for Failure {
    fn from(e: dio_core::Error) -> Self {
        anyhow::Error::new(e).into()
    }
}

type CliResult<T> = Result<T, Failure>;

const MANIFEST: &str = "manifest.json";
const REPORT: &str = "report.json";

fn load(arg: &str) -> CliResult<Scenario> {
    let path = Path::new(arg);
    if path.exists() {
        return Ok(load_scenario(path).with_context(|| format!("loading {arg}"))?);
    }
    match bundled::text(arg) {
        Some(text) => Ok(parse_scenario(text)?),
        None => Err(Failure::Invalid(anyhow::anyhow!(
            "{arg}: no such file and no bundled scenario of that name (bundled: {})",
            bundled::ALL.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn print_json(v: &Value) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v).context("writing to stdout")?;
    writeln!(out).context("writing to stdout")?;
    Ok(())
}

fn write_json(path: &Path, v: &Value) -> CliResult<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), v).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn certificate_json(c: &StabilityCertificate) -> Value {
    json!({
        "kind": c.kind,
        "value": c.value,
        "stable": c.stable,
        "warning": c.warning,
        "assignment": c.assignment,
    })
}

fn synthesize_cmd(scenario: &str, cache: Option<&Path>) -> CliResult<()> {
    let sc = load(scenario)?;
    let syn = synthesize(&sc)?;
    let agents: Vec<Value> = syn
        .gains
        .iter()
        .zip(&syn.objective)
        .map(|(g, obj)| {
            json!({
                "l": rows(&g.l),
                "gamma": rows(&g.gamma),
                "a_tilde": rows(&g.a_tilde),
                "row_norms": g.row_norms,
                "objective": obj,
            })
        })
        .collect();
    let out = json!({
        "scenario": sc.name,
        "explicit_gains": syn.explicit,
        "agents": agents,
        "detectability": syn.cpdn,
        "rounds": resolve_rounds(&sc, &syn),
    });
    if let Some(path) = cache {
        write_json(path, &out)?;
    }
    print_json(&out)
}

fn verify_cmd(scenario: &str, d: Option<usize>, method: Method, require_stable: bool) -> CliResult<()> {
    let sc = load(scenario)?;
    let syn = synthesize(&sc)?;
    let d = d.unwrap_or_else(|| resolve_rounds(&sc, &syn));
    let cert = certify(&sc, &syn, d, method.into())?;
    print_json(&json!({
        "scenario": sc.name,
        "d": d,
        "d_star": syn.cpdn.d_star,
        "detectability_success": syn.cpdn.success,
        "certificate": certificate_json(&cert),
    }))?;
    if require_stable && !cert.stable {
        return Err(Failure::Unstable(format!("{:?} certificate {} is not below 1", cert.kind, cert.value)));
    }
    Ok(())
}

struct SimulateArgs {
    d: Option<usize>,
    seed: Option<u64>,
    baseline: bool,
    method: Method,
    out: Option<PathBuf>,
    require_stable: bool,
}

fn simulate_cmd(scenario: &str, args: SimulateArgs) -> CliResult<()> {
    let sc = load(scenario)?;
    let opts = PipelineOptions {
        d: args.d,
        seed: args.seed,
        baseline: args.baseline,
        method: args.method.into(),
        analyze_errors: true,
    };
    let out = run_pipeline(&sc, &opts)?;
    let report = &out.report;

    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut traces = vec![("dio", "dio.csv", &out.dio)];
        if let Some(b) = &out.baseline {
            traces.push(("baseline", "baseline.csv", b));
        }
        let mut files = serde_json::Map::new();
        for (label, name, run) in traces {
            let path = dir.join(name);
            let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(f);
            write_csv(&mut w, &trace_rows(run, &out.trajectory))?;
            w.flush().with_context(|| format!("writing {}", path.display()))?;
            files.insert(label.to_string(), json!(name));
        }
        write_json(&dir.join(REPORT), &serde_json::to_value(report).context("serializing report")?)?;
        let manifest = json!({
            "scenario": report.scenario,
            "scenario_hash": report.scenario_hash,
            "seed": report.seed,
            "d": report.d,
            "horizon": report.horizon,
            "certificate": {
                "kind": report.certificate.kind,
                "value": report.certificate.value,
                "stable": report.certificate.stable,
            },
            "traces": files,
            "report": REPORT,
        });
        write_json(&dir.join(MANIFEST), &manifest)?;
    }
    print_json(&serde_json::to_value(report).context("serializing report")?)?;
    if args.require_stable && !out.certificate.stable {
        return Err(Failure::Unstable(format!(
            "{:?} certificate {} is not below 1",
            out.certificate.kind, out.certificate.value
        )));
    }
    Ok(())
}

fn report_cmd(dir: &Path) -> CliResult<()> {
    let read = |name: &str| -> CliResult<Value> {
        let path = dir.join(name);
        let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        serde_json::from_reader(BufReader::new(f))
            .map_err(|e| Failure::Invalid(anyhow::anyhow!("{}: {e}", path.display())))
    };
    let manifest = read(MANIFEST)?;
    let traces = manifest["traces"]
        .as_object()
        .ok_or_else(|| Failure::Invalid(anyhow::anyhow!("{MANIFEST}: missing `traces`")))?;
    let mut summaries = serde_json::Map::new();
    for (label, name) in traces {
        let name = name
            .as_str()
            .ok_or_else(|| Failure::Invalid(anyhow::anyhow!("{MANIFEST}: trace `{label}` is not a file name")))?;
        let path = dir.join(name);
        let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let rows = read_csv(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?;
        summaries.insert(label.clone(), serde_json::to_value(summarize(&rows)).context("serializing summary")?);
    }
    let report = read(REPORT)?;
    print_json(&json!({
        "manifest": manifest,
        "traces": summaries,
        "errors": report["errors"],
        "timing": report["timing"],
    }))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synthesize { scenario, cache } => synthesize_cmd(&scenario, cache.as_deref()),
        Command::Verify {
            scenario,
            d,
            method,
            require_stable,
        } => verify_cmd(&scenario, d, method, require_stable),
        Command::Simulate {
            scenario,
            d,
            seed,
            baseline,
            method,
            out,
            require_stable,
        } => simulate_cmd(
            &scenario,
            SimulateArgs {
                d,
                seed,
                baseline,
                method,
                out,
                require_stable,
            },
        ),
        Command::Report { dir } => report_cmd(&dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Unstable(msg)) => {
            eprintln!("not certified stable: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
