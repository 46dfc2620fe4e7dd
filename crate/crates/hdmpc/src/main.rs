use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hdmpc::qp_text::parse_qp;
use hdmpc::scenario_file::{load_scenario, serialize_scenario};
use hdmpc::trace_csv::{read_trace, write_trace};
use hdmpc::{format_metrics, Parallel};
use hdmpc_core::metrics::compute_metrics;
use hdmpc_core::negotiation::Sequential;
use hdmpc_core::opt::{solve_miqp, solve_qp, SolveOptions};
use hdmpc_core::scenario::{run_scenario, Mode};

#[derive(Parser)]
#[command(name = "hdmpc", version, about = "Hierarchical microgrid and building MPC simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trace.csv, metrics.txt and scenario.txt.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's mode: flex, fix or cen.
        #[arg(long)]
        mode: Option<String>,
        /// Overrides the scenario's noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for the building solves; sequential when omitted.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the indicators of a written trace.
    Metrics {
        #[arg(long)]
        trace: PathBuf,
        /// Scenario of the run; scenario.txt beside the trace when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Solve a QP or MIQP in text form and print the result.
    SolveDebug {
        #[arg(long)]
        qp: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            scenario,
            mode,
            seed,
            threads,
            out,
        } => {
            let mut loaded = load_scenario(&scenario).with_context(|| format!("loading {}", scenario.display()))?;
            if let Some(name) = mode {
                let Some(m) = Mode::from_name(&name) else {
                    bail!("unknown mode `{name}`; expected flex, fix or cen");
                };
                loaded.config.mode = m;
                loaded.spec.config.mode = m;
            }
            if let Some(s) = seed {
                loaded.config.seed = s;
                loaded.spec.config.seed = s;
            }
            let started = Instant::now();
            let output = match threads {
                Some(t) => run_scenario(&loaded.config, &Parallel::with_threads(t)?),
                None => run_scenario(&loaded.config, &Sequential),
            }?;
            let elapsed = started.elapsed();

            fs::create_dir_all(&out)?;
            let trace_file = fs::File::create(out.join("trace.csv"))?;
            write_trace(trace_file, &output.trace, loaded.res.origin)?;
            let metrics = format_metrics(&output.metrics, output.non_converged.len());
            fs::write(out.join("metrics.txt"), &metrics)?;
            let mut spec = loaded.spec.clone();
            spec.res_trace = fs::canonicalize(&loaded.res_path)?.display().to_string();
            fs::write(out.join("scenario.txt"), serialize_scenario(&spec))?;

            print!("{metrics}");
            println!("runtime_s = {:.3}", elapsed.as_secs_f64());
        }
        Command::Metrics { trace, scenario } => {
            let scenario = match scenario {
                Some(p) => p,
                None => trace.with_file_name("scenario.txt"),
            };
            let loaded = load_scenario(&scenario).with_context(|| format!("loading {}", scenario.display()))?;
            let file = fs::File::open(&trace).with_context(|| format!("opening {}", trace.display()))?;
            let records = read_trace(file, loaded.res.origin)?;
            if records.first().is_some_and(|r| r.buildings.len() != loaded.config.buildings.len()) {
                bail!("trace and scenario disagree on the number of buildings");
            }
            let report = compute_metrics(&records, &loaded.config);
            let non_converged = records
                .iter()
                .filter(|r| r.iterations >= loaded.config.consensus.max_iters)
                .count();
            print!("{}", format_metrics(&report, non_converged));
        }
        Command::SolveDebug { qp } => {
            let text = fs::read_to_string(&qp).with_context(|| format!("reading {}", qp.display()))?;
            let problem = parse_qp(&text)?;
            let opts = SolveOptions::default();
            let started = Instant::now();
            let result = if problem.binary_indices.is_empty() {
                solve_qp(&problem.base, &opts)?
            } else {
                solve_miqp(&problem, &opts)?
            };
            println!("status = {:?}", result.status);
            println!("objective = {}", result.objective);
            println!("iterations = {}", result.iterations);
            println!("max_violation = {:e}", problem.base.max_violation(&result.x));
            println!("solve_ms = {:.3}", started.elapsed().as_secs_f64() * 1e3);
            for (i, v) in result.x.iter().enumerate() {
                println!("x[{i}] = {v}");
            }
        }
    }
    Ok(())
}
