use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use mmhkf_core::baselines::Method;
use mmhkf_core::config::Config;
use mmhkf_core::engine::{Engine, HealthFactors, TrimOptions, SENSOR_NAMES};
use mmhkf_core::harness::io::{read_events, read_trace, write_events, write_jsonl, write_trace};
use mmhkf_core::harness::{
    compare, estimate_severity, monte_carlo, sensor_channel, simulate, diagnose, sweep, write_campaign, Campaign,
    CampaignResult, Scenario, Workbench, WORKERS_ENV,
};
use mmhkf_core::linearize::{build_bank, ModelBank, OperatingPoint};
use mmhkf_core::mm_fdi::{EventKind, Isolation, Status};
use mmhkf_core::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "mmhkf", version, about = "Turbojet sensor fault diagnosis with hybrid Kalman filter banks")]
struct Cli {
    /// Engine, filter and decision configuration (TOML); built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model bank file; overrides the scenario's bank and skips building the mission bank.
    #[arg(long, global = true)]
    bank: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Steady state and sensor readings for a fuel flow and flight condition.
    Trim(TrimArgs),
    /// Trim, linearize and discretize at a set of operating points and write the model bank.
    Linearize(LinearizeArgs),
    /// Simulate and diagnose one scenario.
    Run(RunArgs),
    /// Monte Carlo campaign with confusion-matrix metrics.
    Montecarlo(MonteCarloArgs),
    /// Bias estimation and reconstruction error on a recorded trace.
    Glr(GlrArgs),
    /// Diagnose one shared trace with several methods.
    Compare(CompareArgs),
}

#[derive(Args)]
struct TrimArgs {
    /// Fuel flow [kg/s].
    #[arg(long)]
    fuel: f64,
    #[arg(long, default_value_t = 16404.2)]
    alt_ft: f64,
    #[arg(long, default_value_t = 0.85)]
    mach: f64,
    /// Health factors eta_c,eta_t,mdot_c,mdot_t.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    health: Option<Vec<f64>>,
}

#[derive(Args)]
struct LinearizeArgs {
    /// Operating-point table with header `mdot_f,alt_ft,mach`; the mission set when absent.
    #[arg(long, alias = "points")]
    profile: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Directory for `output.json` and `events.jsonl`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the recorded measurements as a trace file.
    #[arg(long)]
    save_trace: Option<PathBuf>,
    /// Write the per-sample probability and weight series as JSON lines.
    #[arg(long)]
    series: Option<PathBuf>,
    /// Overrides the scenario's method.
    #[arg(long)]
    method: Option<Method>,
}

#[derive(Args)]
struct MonteCarloArgs {
    #[arg(long)]
    campaign: PathBuf,
    /// Output directory; one subdirectory per sweep point.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

#[derive(Args)]
struct GlrArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Diagnosis events of the trace; the isolations are taken from them.
    #[arg(long, conflicts_with_all = ["sensor", "k_ds"])]
    events: Option<PathBuf>,
    /// Isolated sensor (name or number).
    #[arg(long, requires = "k_ds")]
    sensor: Option<String>,
    /// Start sample of the persistent isolation.
    #[arg(long, requires = "sensor")]
    k_ds: Option<usize>,
    /// Second isolated sensor of a concurrent fault.
    #[arg(long, requires_all = ["second_k_ds", "sensor"])]
    second_sensor: Option<String>,
    #[arg(long, requires = "second_sensor")]
    second_k_ds: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, value_delimiter = ',', default_value = "mhkf,mlkf,ekf,ukf,ckf")]
    methods: Vec<Method>,
    /// Scenario producing the shared trace.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Recorded trace to replay instead of simulating.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Timed repetitions of each method's healthy filters; 0 disables timing.
    #[arg(long, default_value_t = 0)]
    timing_reps: usize,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<Config> {
    let cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn workbench(cli: &Cli, scenario_bank: Option<&Path>) -> anyhow::Result<Workbench> {
    let config = load_config(cli.config.as_deref())?;
    match cli.bank.as_deref().or(scenario_bank) {
        Some(p) => Ok(Workbench::with_bank(config, ModelBank::load(p)?)?),
        None => Ok(Workbench::new(config)?),
    }
}

fn print_json(v: &serde_json::Value) {
    // a closed pipe (`| head`) is not an error worth reporting
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(v).expect("json values serialize"));
}

fn trim(cli: &Cli, a: &TrimArgs) -> anyhow::Result<()> {
    let config = load_config(cli.config.as_deref())?;
    let engine = Engine::new(config.engine())?;
    let health = match &a.health {
        Some(h) => HealthFactors::new(h[0], h[1], h[2], h[3]),
        None => HealthFactors::healthy(),
    };
    health.validate()?;
    let amb = engine.ambient(a.alt_ft, a.mach);
    let x = engine.trim_with(a.fuel, &amb, &health, None, TrimOptions::default())?;
    let y = engine.outputs(&x, &health, &amb)?;
    let outputs: serde_json::Map<_, _> = SENSOR_NAMES.iter().zip(y.iter()).map(|(n, v)| (n.to_string(), json!(v))).collect();
    print_json(&json!({ "ambient": amb, "state": x, "outputs": outputs }));
    Ok(())
}

fn linearize(cli: &Cli, a: &LinearizeArgs) -> anyhow::Result<()> {
    let config = load_config(cli.config.as_deref())?;
    let engine = Engine::new(config.engine())?;
    let points = match &a.profile {
        Some(p) => OperatingPoint::load_table(p)?,
        None => OperatingPoint::mission_set(),
    };
    let bank = build_bank(&engine, &points, &config.linearize)?;
    bank.save(&a.out)?;
    let models: Vec<_> = bank
        .models
        .iter()
        .map(|m| json!({ "id": m.id, "point": m.point, "estimator_spectral_radius": m.estimator_spectral_radius() }))
        .collect();
    print_json(&json!({ "out": a.out, "dt": bank.dt, "checksum": bank.checksum(), "models": models }));
    Ok(())
}

fn run(cli: &Cli, a: &RunArgs) -> anyhow::Result<()> {
    let mut sc = Scenario::load(&a.scenario)?;
    if let Some(m) = a.method {
        sc.method = m;
    }
    if a.series.is_some() {
        sc.record.probabilities = true;
        sc.record.weights = true;
    }
    let wb = workbench(cli, sc.bank.as_deref())?;
    sc.validate(&wb.config)?;
    let recorded = simulate(&wb, &sc)?;
    if let Some(p) = &a.save_trace {
        write_trace(p, &recorded)?;
    }
    let out = diagnose(&wb, &sc, &recorded, sc.method)?;
    if let Some(p) = &a.series {
        write_jsonl(p, &out.series)?;
    }
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let text = serde_json::to_string_pretty(&out)?;
        std::fs::write(dir.join("output.json"), text).with_context(|| format!("writing {}", dir.display()))?;
        write_events(&dir.join("events.jsonl"), &out.events)?;
    }
    print_json(&json!({
        "name": out.name,
        "method": out.method,
        "status": out.status,
        "classification": out.classification.map(|s| SENSOR_NAMES[s - 1]),
        "false_alarm": out.false_alarm,
        "faults": out.faults,
        "severities": out.severities,
        "healthy_residual_mean_pct": out.healthy_residual_mean_pct,
    }));
    Ok(())
}

fn summary(r: &CampaignResult) -> serde_json::Value {
    let fdts = r.fdts();
    let mean_fdt = (!fdts.is_empty()).then(|| fdts.iter().sum::<f64>() / fdts.len() as f64);
    json!({
        "name": r.name,
        "fpr": r.metrics.fpr.to_string(),
        "acc": r.metrics.acc.to_string(),
        "ifdr": r.metrics.ifdr.to_string(),
        "mean_fdt_s": mean_fdt,
        "runs": r.runs.len(),
        "failures": r.failures.len(),
    })
}

fn montecarlo(cli: &Cli, a: &MonteCarloArgs) -> anyhow::Result<()> {
    if let Some(w) = a.workers {
        if w == 0 {
            bail!(Error::Validation("worker count must be positive".into()));
        }
        // the campaign runner reads the worker count from the environment
        std::env::set_var(WORKERS_ENV, w.to_string());
    }
    let campaign = Campaign::load(&a.campaign)?;
    campaign.validate()?;
    let wb = workbench(cli, None)?;
    let results = if campaign.sweep.is_empty() { vec![monte_carlo(&wb, &campaign)?] } else { sweep(&wb, &campaign)? };
    if let Some(dir) = &a.out {
        for (i, r) in results.iter().enumerate() {
            let (sub, snapshot) = if campaign.sweep.is_empty() {
                (dir.clone(), campaign.to_toml())
            } else {
                (dir.join(&r.name), campaign.at(&campaign.sweep[i]).to_toml())
            };
            write_campaign(&sub, &snapshot, r)?;
        }
    }
    for r in &results {
        eprint!("{}", r.confusion.to_csv());
    }
    print_json(&json!(results.iter().map(summary).collect::<Vec<_>>()));
    Ok(())
}

fn status_from_events(path: &Path) -> anyhow::Result<Status> {
    let events = read_events(path)?;
    let isolation = |kind: EventKind| {
        events.iter().rev().find(|e| e.event == kind).and_then(|e| {
            let sensor = sensor_channel(e.sensor.as_deref()?).ok()? + 1;
            Some(Isolation { sensor, k_ds: e.k_ds? })
        })
    };
    Ok(match (isolation(EventKind::Isolated), isolation(EventKind::Concurrent)) {
        (Some(first), Some(second)) => Status::ConcurrentIsolated { first, second },
        (Some(fault), None) => Status::Isolated { fault },
        _ => bail!(Error::Validation(format!("{} contains no isolation event", path.display()))),
    })
}

fn glr(cli: &Cli, a: &GlrArgs) -> anyhow::Result<()> {
    let recorded = read_trace(&a.trace)?;
    let status = match (&a.events, &a.sensor, a.k_ds) {
        (Some(p), _, _) => status_from_events(p)?,
        (None, Some(s), Some(k)) => {
            let first = Isolation { sensor: sensor_channel(s)? + 1, k_ds: k };
            match (&a.second_sensor, a.second_k_ds) {
                (Some(s2), Some(k2)) => {
                    Status::ConcurrentIsolated { first, second: Isolation { sensor: sensor_channel(s2)? + 1, k_ds: k2 } }
                }
                _ => Status::Isolated { fault: first },
            }
        }
        _ => bail!(Error::Validation("give --events or --sensor with --k-ds".into())),
    };
    let n = recorded.samples.len();
    let in_range = |i: &Isolation| i.k_ds < n;
    let ok = match &status {
        Status::Healthy => true,
        Status::Isolated { fault } => in_range(fault),
        Status::ConcurrentIsolated { first, second } => in_range(first) && in_range(second),
    };
    if !ok {
        bail!(Error::Validation(format!("isolation sample outside the {n}-sample trace")));
    }
    let wb = workbench(cli, None)?;
    if (wb.dt() - recorded.dt).abs() > 1e-12 {
        bail!(Error::Validation(format!("trace period {} s differs from the bank's {} s", recorded.dt, wb.dt())));
    }
    let reports = estimate_severity(&wb, &recorded, &status)?;
    print_json(&json!({ "status": status, "severities": reports }));
    Ok(())
}

fn compare_cmd(cli: &Cli, a: &CompareArgs) -> anyhow::Result<()> {
    let sc = match &a.scenario {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    let wb = workbench(cli, sc.bank.as_deref())?;
    sc.validate(&wb.config)?;
    let recorded = match &a.trace {
        Some(p) => read_trace(p)?,
        None => simulate(&wb, &sc)?,
    };
    let table = compare(&wb, &sc, &recorded, &a.methods, a.timing_reps)?;
    let csv = table.to_csv();
    match &a.out {
        Some(p) => std::fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let _ = std::io::stdout().lock().write_all(csv.as_bytes());
        }
    }
    Ok(())
}

/// 2 for rejected input, 3 for numerical failure, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            if matches!(e, Error::Validation(_) | Error::Parse { .. }) {
                return 2;
            }
            if e.is_numerical() {
                return 3;
            }
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Trim(a) => trim(&cli, a),
        Command::Linearize(a) => linearize(&cli, a),
        Command::Run(a) => run(&cli, a),
        Command::Montecarlo(a) => montecarlo(&cli, a),
        Command::Glr(a) => glr(&cli, a),
        Command::Compare(a) => compare_cmd(&cli, a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // core errors already embed their source, so skip causes repeated verbatim
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
