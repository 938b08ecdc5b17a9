//! `fsor`: placement, feasibility-region analytics, closed-loop replay,
//! scenarios and benchmarks.
//!
//! Exit codes: 0 success or feasible, 2 infeasible with a certificate,
//! 1 any error.

mod config;

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use fsor_core::bench::{run_scale, BenchConfig, Scale};
use fsor_core::formulation::build_instance;
use fsor_core::fsor::{classify_green_but_far, enumerate_fsor, extract_iis, fsor_contains, UNIVERSE_GUARD};
use fsor_core::lp_file::write_lp;
use fsor_core::milp::{solve, SolveStatus};
use fsor_core::model::{validate_snapshot, Problem, WorkloadId};
use fsor_core::scenarios::{
    build_scenario, peak_stress_cycle, run_scenario, snapshot_at, ComparativeReport, RunOptions, ScenarioId,
    ScenarioSpec,
};
use fsor_core::telemetry::{generate_stream, read_ndjson, write_ndjson};
use fsor_core::twin::ControlLoop;
use fsor_core::verify::{verify_placement, VerifyContext};
use serde_json::json;

use crate::config::Config;

#[derive(Parser)]
#[command(name = "fsor", version, about = "Sustainability-constrained joint placement and routing")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Carbon weight in [0, 1].
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    budget_secs: Option<f64>,
    /// Directory for output files; stdout gets a summary either way.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one snapshot; prints the placement or a certificate.
    Solve {
        #[arg(long)]
        problem: PathBuf,
    },
    /// Membership query or exact enumeration of the feasible region.
    Fsor {
        #[arg(long)]
        problem: PathBuf,
        /// Comma-separated workload ids; omitted means enumerate.
        #[arg(long, value_delimiter = ',')]
        query: Vec<String>,
    },
    /// Irreducible infeasible set of one snapshot.
    Iis {
        #[arg(long)]
        problem: PathBuf,
    },
    /// Replay a reading stream through the control loop.
    Loop {
        /// Template snapshot and workloads.
        #[arg(long)]
        problem: PathBuf,
        /// Newline-delimited JSON readings.
        #[arg(long)]
        readings: PathBuf,
    },
    /// Run Baseline, ComputeOnly and Joint over a scenario.
    Scenario {
        #[arg(value_parser = parse_scenario)]
        id: ScenarioId,
        /// Scenario file overriding the shipped default.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        horizon_days: Option<f64>,
        /// Run only the first N seeds.
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Also write per-cycle traces.
        #[arg(long)]
        plot_data: bool,
        /// Re-check every certificate for irreducibility.
        #[arg(long)]
        check_certificates: bool,
        /// Write the instance, its readings and (for stressed scenarios) the
        /// peak-stress snapshot instead of running.
        #[arg(long)]
        export: bool,
    },
    /// Solve-time table over random instances.
    Bench {
        /// small, medium, paper or all.
        #[arg(long, default_value = "all")]
        scale: String,
        #[arg(long, default_value_t = 5)]
        instances: usize,
    },
    /// Write the MILP of one snapshot in LP format.
    ExportLp {
        #[arg(long)]
        problem: PathBuf,
    },
    /// Orderings and summary of a saved scenario report.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn parse_scenario(s: &str) -> Result<ScenarioId, String> {
    s.parse().map_err(|e: fsor_core::Error| e.to_string())
}

/// What the process reports through its exit code.
enum Outcome {
    Done,
    Infeasible,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Infeasible) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut c = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(a) = cli.alpha {
        c.alpha = a;
    }
    if let Some(b) = cli.budget_secs {
        c.budget_secs = b;
    }
    c.validate().context("command-line overrides")?;
    Ok(c)
}

fn load_problem(path: &Path) -> Result<Problem> {
    let text = fs::read_to_string(path).with_context(|| format!("reading problem {}", path.display()))?;
    let mut p: Problem = serde_json::from_str(&text).with_context(|| format!("problem {}", path.display()))?;
    // A problem file with no confidence map is a measured snapshot; a
    // partial map is still rejected below.
    if p.snapshot.confidence.is_empty() {
        p.snapshot.mark_all_fresh();
    }
    if let Some(first) = validate_snapshot(&p.snapshot, &p.workloads).first() {
        bail!("problem {}: {first}", path.display());
    }
    Ok(p)
}

fn write_out(out: Option<&Path>, name: &str, contents: &str) -> Result<()> {
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn print_json(value: &serde_json::Value) -> Result<String> {
    let text = serde_json::to_string_pretty(value)?;
    println!("{text}");
    Ok(text)
}

fn run(cli: Cli) -> Result<Outcome> {
    let config = load_config(&cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Solve { problem } => {
            let p = load_problem(problem)?;
            let options = config.build_options();
            let inst = build_instance(&p.snapshot, &p.workloads, &options)?;
            let result = solve(&inst, config.budget_secs)?;
            match result.status {
                SolveStatus::Optimal => {
                    let placement = result.placement.ok_or_else(|| anyhow!("optimal outcome without a placement"))?;
                    // Defensive: nothing leaves this process unverified.
                    let violations = verify_placement(&p.snapshot, &p.workloads, &placement, &VerifyContext::default());
                    if let Some(v) = violations.first() {
                        bail!("solver placement failed verification: {v}");
                    }
                    let text = print_json(&json!({
                        "status": "Optimal",
                        "objective": placement.objective,
                        "nodes": result.nodes,
                        "secs": result.wall_secs,
                        "placement": placement,
                    }))?;
                    write_out(out, "placement.json", &text)?;
                    Ok(Outcome::Done)
                }
                SolveStatus::Infeasible => {
                    let cert = extract_iis(&p.snapshot, &p.workloads, &options, config.budget_secs)?;
                    let text = print_json(&json!({ "status": "Infeasible", "certificate": cert }))?;
                    write_out(out, "certificate.json", &text)?;
                    Ok(Outcome::Infeasible)
                }
                SolveStatus::Timeout => bail!(
                    "no certified optimum within {} s (gap {:.3e}, {} nodes)",
                    config.budget_secs,
                    result.gap,
                    result.nodes
                ),
            }
        }
        Command::Fsor { problem, query } => {
            let p = load_problem(problem)?;
            let options = config.build_options();
            let text = if query.is_empty() {
                if p.workloads.len() > UNIVERSE_GUARD {
                    bail!(
                        "{} workloads exceed the enumeration guard of {UNIVERSE_GUARD}; pass --query",
                        p.workloads.len()
                    );
                }
                let report = enumerate_fsor(&p.snapshot, &p.workloads, &options, config.budget_secs)?;
                print_json(&serde_json::to_value(&report)?)?
            } else {
                let ids: Vec<WorkloadId> = query.iter().map(|s| WorkloadId::from(s.trim().to_string())).collect();
                let mut subset = Vec::new();
                for id in &ids {
                    let w = p
                        .workloads
                        .iter()
                        .find(|w| &w.id == id)
                        .ok_or_else(|| anyhow!("problem {}: unknown workload `{id}` in --query", problem.display()))?;
                    subset.push(w.clone());
                }
                let m = fsor_contains(&p.snapshot, &subset, &options, config.budget_secs)?;
                let mut partitions = serde_json::Map::new();
                for w in &subset {
                    partitions.insert(w.id.0.clone(), serde_json::to_value(classify_green_but_far(&p.snapshot, w)?)?);
                }
                print_json(&json!({
                    "workloads": ids,
                    "feasible": m.feasible,
                    "witness": m.witness,
                    "sites": partitions,
                }))?
            };
            write_out(out, "fsor.json", &text)?;
            Ok(Outcome::Done)
        }
        Command::Iis { problem } => {
            let p = load_problem(problem)?;
            match extract_iis(&p.snapshot, &p.workloads, &config.build_options(), config.budget_secs) {
                Ok(cert) => {
                    let text = print_json(&json!({ "status": "Infeasible", "certificate": cert }))?;
                    write_out(out, "certificate.json", &text)?;
                    Ok(Outcome::Infeasible)
                }
                Err(fsor_core::Error::NotInfeasible) => {
                    print_json(&json!({ "status": "Feasible" }))?;
                    Ok(Outcome::Done)
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Loop { problem, readings } => {
            let p = load_problem(problem)?;
            let file = fs::File::open(readings).with_context(|| format!("reading {}", readings.display()))?;
            let mut stream =
                read_ndjson(BufReader::new(file)).with_context(|| format!("readings {}", readings.display()))?;
            stream.sort_by_key(|r| r.timestamp);
            let Some(first) = stream.first().map(|r| r.timestamp) else {
                bail!("readings {}: no readings", readings.display());
            };
            let last = stream.last().map_or(first, |r| r.timestamp);
            let mut lc = config.loop_config();
            lc.alerts_to_stderr = true;
            let mut control = ControlLoop::new(p.snapshot.clone(), p.workloads.clone(), lc)?;
            if let Some(dir) = out {
                fs::create_dir_all(dir)?;
                let log = fs::File::create(dir.join("loop.ndjson"))?;
                control = control.with_log(Box::new(std::io::BufWriter::new(log)));
            }
            let mut next = 0;
            let mut t = first;
            while t <= last {
                let start = next;
                while next < stream.len() && stream[next].timestamp <= t {
                    next += 1;
                }
                let rec = control.run_cycle(&stream[start..next], t)?;
                println!(
                    "cycle {:>5} t={} {:?} moves={} carbon_g={:.1} water_l={:.1} slo_violations={}",
                    rec.cycle,
                    rec.timestamp,
                    rec.outcome,
                    rec.moves,
                    rec.carbon_g + rec.migration_g,
                    rec.water_l,
                    rec.slo_violations.len()
                );
                t += config.cycle_secs;
            }
            Ok(Outcome::Done)
        }
        Command::Scenario {
            id,
            spec,
            horizon_days,
            seeds,
            threads,
            plot_data,
            check_certificates,
            export,
        } => {
            let mut s = match spec {
                Some(path) => {
                    let text = fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
                    let s: ScenarioSpec =
                        serde_json::from_str(&text).with_context(|| format!("scenario {}", path.display()))?;
                    if s.id != *id {
                        bail!("scenario {}: field `id` is {}, expected {id}", path.display(), s.id);
                    }
                    s
                }
                None => ScenarioSpec::default_for(*id),
            };
            if !config.seeds.is_empty() {
                s.seeds.clone_from(&config.seeds);
            }
            if let Some(n) = seeds {
                s.seeds.truncate(*n);
            }
            if let Some(d) = horizon_days {
                s.horizon_secs = (d * 86_400.0).round() as i64;
            }
            s.validate()?;
            if *export {
                return export_scenario(&s, cli.seed.unwrap_or_else(|| s.seeds.first().copied().unwrap_or(config.seed)), out);
            }
            let options = RunOptions {
                alpha: config.alpha,
                budget_secs: config.budget_secs,
                keep_trace: *plot_data,
                check_certificates: *check_certificates,
                threads: *threads,
                base: fsor_core::twin::LoopConfig {
                    alerts_to_stderr: false,
                    ..config.loop_config()
                },
                ..RunOptions::default()
            };
            let report = run_scenario(&s, &options)?;
            let csv = report.to_csv()?;
            print!("{csv}");
            print_orderings(&report);
            write_out(out, "report.csv", &csv)?;
            write_out(out, "report.json", &serde_json::to_string_pretty(&report)?)?;
            if *plot_data {
                write_out(out, "traces.csv", &traces_csv(&report)?)?;
            }
            Ok(Outcome::Done)
        }
        Command::Bench { scale, instances } => {
            let scales: Vec<Scale> = if scale.eq_ignore_ascii_case("all") {
                Scale::ALL.to_vec()
            } else {
                vec![scale.parse::<Scale>().map_err(|e| anyhow!(e))?]
            };
            let bc = BenchConfig {
                instances: *instances,
                seed: config.seed,
                budget_secs: config.budget_secs,
                hop_limit: config.hop_limit,
                alpha: config.alpha,
                ..BenchConfig::default()
            };
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["Scenario", "N", "M", "Binary", "Continuous", "Opt", "Min", "Median", "Mean", "Max"])?;
            let mut trials = Vec::new();
            for s in scales {
                let (row, t) = run_scale(s, &bc)?;
                w.write_record([
                    row.scenario.clone(),
                    row.n.to_string(),
                    row.m.to_string(),
                    row.binary.to_string(),
                    row.continuous.to_string(),
                    row.opt.clone(),
                    format!("{:.2}", row.min_s),
                    format!("{:.2}", row.median_s),
                    format!("{:.2}", row.mean_s),
                    format!("{:.2}", row.max_s),
                ])?;
                trials.push(json!({ "scale": s, "row": row, "trials": t }));
            }
            let text = String::from_utf8(w.into_inner()?)?;
            print!("{text}");
            write_out(out, "bench.csv", &text)?;
            write_out(out, "bench.json", &serde_json::to_string_pretty(&trials)?)?;
            Ok(Outcome::Done)
        }
        Command::ExportLp { problem } => {
            let p = load_problem(problem)?;
            let inst = build_instance(&p.snapshot, &p.workloads, &config.build_options())?;
            let text = write_lp(&inst);
            match out {
                Some(_) => {
                    write_out(out, "model.lp", &text)?;
                    println!(
                        "wrote model.lp: {} columns, {} binaries",
                        inst.num_columns(),
                        inst.counts.binaries
                    );
                }
                None => print!("{text}"),
            }
            Ok(Outcome::Done)
        }
        Command::Report { input } => {
            let text = fs::read_to_string(input).with_context(|| format!("reading report {}", input.display()))?;
            let report: ComparativeReport =
                serde_json::from_str(&text).with_context(|| format!("report {}", input.display()))?;
            // Re-derive impacts so a hand-edited file cannot disagree with its rows.
            let report = ComparativeReport::new(report.alpha, report.rows);
            print!("{}", report.to_csv()?);
            print_orderings(&report);
            Ok(Outcome::Done)
        }
    }
}

fn print_orderings(report: &ComparativeReport) {
    let checks = report.orderings();
    for c in &checks {
        println!(
            "{} {} seed {:<6} {:<42} {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.scenario,
            c.seed,
            c.name,
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    println!("{} of {} orderings hold", checks.len() - failed, checks.len());
}

fn traces_csv(report: &ComparativeReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scenario",
        "configuration",
        "seed",
        "cycle",
        "timestamp",
        "outcome",
        "in_stress",
        "carbon_g",
        "migration_g",
        "water_l",
        "slo_violations",
        "objective",
    ])?;
    for r in &report.rows {
        for t in &r.trace {
            w.write_record([
                r.scenario.to_string(),
                r.configuration.to_string(),
                r.seed.to_string(),
                t.cycle.to_string(),
                t.timestamp.to_string(),
                format!("{:?}", t.outcome),
                t.in_stress.to_string(),
                t.carbon_g.to_string(),
                t.migration_g.to_string(),
                t.water_l.to_string(),
                t.slo_violations.to_string(),
                t.objective.map_or(String::new(), |o| o.to_string()),
            ])?;
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn export_scenario(spec: &ScenarioSpec, seed: u64, out: Option<&Path>) -> Result<Outcome> {
    let Some(dir) = out else {
        bail!("--export needs --out <dir>");
    };
    let built = build_scenario(spec, seed)?;
    let problem = Problem {
        snapshot: built.template.clone(),
        workloads: built.workloads.clone(),
    };
    write_out(Some(dir), "problem.json", &serde_json::to_string_pretty(&problem)?)?;
    let readings = generate_stream(&built.stream, spec.start, spec.horizon_secs, spec.cycle_secs, seed);
    let mut buf = Vec::new();
    write_ndjson(&mut buf, &readings)?;
    write_out(Some(dir), "readings.ndjson", std::str::from_utf8(&buf)?)?;
    println!("wrote problem.json and {} readings", readings.len());
    if let Some(cycle) = peak_stress_cycle(spec) {
        let peak = snapshot_at(spec, &built, cycle)?;
        write_out(Some(dir), "peak.json", &serde_json::to_string_pretty(&peak)?)?;
        println!("wrote peak.json (cycle {cycle})");
    }
    std::io::stdout().flush()?;
    Ok(Outcome::Done)
}
