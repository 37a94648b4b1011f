use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use qic_core::baselines::{self, SearchBudget};
use qic_core::dnn_catalog::builtin_catalog;
use qic_core::dyngraph;
use qic_core::harness::{self, HarnessOptions, Sweep, SweepKind};
use qic_core::qcpo::{action_space, QcpoParams};
use qic_core::radio::write_trace_csv;
use qic_core::scenario::{load_scenario, presets, ScenarioConfig};

#[derive(Parser)]
#[command(name = "qic", version, about = "Orchestrate split multi-sensor inference and run the evaluation studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario or experiment JSON file; built-in preset when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (or file for single-file commands).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value = "qic,mctp,opt")]
    solvers: String,
    /// Number of slots to run; the whole trace when omitted.
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 10_000)]
    mctp_iterations: usize,
    /// Wall-clock limit per MCTP search in seconds.
    #[arg(long)]
    mctp_seconds: Option<f64>,
    #[arg(long, default_value_t = baselines::DEFAULT_CAP)]
    cap: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Write every trace of a scenario as CSV.
    GenerateTraces(Common),
    /// Print the DNN catalog as JSON.
    DumpCatalog(Common),
    /// Small-scale study over accuracy or latency targets.
    RunSmall {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        solvers: SolverArgs,
        #[arg(long, default_value = "accuracy")]
        sweep: String,
        /// Comma-separated sweep values.
        #[arg(long, default_value = "0.4,0.5,0.6")]
        values: String,
    },
    /// Large-scale study over the number of mobile nodes.
    RunLarge {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        solvers: SolverArgs,
        /// Comma-separated mobile-node counts; overrides the config.
        #[arg(long)]
        n_mobile: Option<String>,
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Recompute summary and plot data from a runs.csv.
    Summarize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        runs: PathBuf,
    },
    /// Graphviz dump of the graph a solver enacts at one slot.
    DumpGraph {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        t: usize,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LargeScaleSpec {
    n_mobile: Vec<usize>,
    #[serde(default = "default_duration")]
    duration_s: f64,
}

fn default_duration() -> f64 {
    presets::HORIZON_S
}

fn scenario(common: &Common) -> anyhow::Result<ScenarioConfig> {
    Ok(match &common.config {
        Some(p) => load_scenario(p)?,
        None => presets::small_scale(common.seed),
    })
}

fn out_dir(common: &Common) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> anyhow::Result<Vec<T>> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| x.trim().parse::<T>().map_err(|_| anyhow::anyhow!("invalid {what} value {x:?}")))
        .collect()
}

fn options(common: &Common, s: &SolverArgs) -> anyhow::Result<HarnessOptions> {
    Ok(HarnessOptions {
        solvers: harness::parse_solvers(&s.solvers)?,
        seed: common.seed,
        qcpo: QcpoParams { epochs: s.epochs, seed: common.seed, ..Default::default() },
        mctp: SearchBudget {
            max_iterations: s.mctp_iterations,
            max_wall_time: s.mctp_seconds.map(Duration::from_secs_f64),
            ..Default::default()
        },
        exhaustive_cap: s.cap,
        slots: s.slots,
    })
}

fn report(files: &[String], dir: &Path) {
    for f in files {
        println!("{}", dir.join(f).display());
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenerateTraces(common) => {
            let cfg = scenario(&common)?;
            let dir = out_dir(&common);
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            for id in cfg.traces.keys() {
                let samples = cfg.trace(id).expect("resolved trace");
                let path = dir.join(format!("{id}.csv"));
                write_trace_csv(&path, samples)?;
                println!("{}", path.display());
            }
        }
        Command::DumpCatalog(common) => {
            let catalog = match &common.config {
                Some(_) => scenario(&common)?.catalog().clone(),
                None => builtin_catalog(),
            };
            let text = serde_json::to_string_pretty(&catalog)?;
            match &common.out {
                Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
                None => println!("{text}"),
            }
        }
        Command::RunSmall { common, solvers, sweep, values } => {
            let cfg = scenario(&common)?;
            let opts = options(&common, &solvers)?;
            let sweep = Sweep { kind: sweep.parse::<SweepKind>()?, values: parse_list(&values, "sweep")? };
            if sweep.values.is_empty() {
                bail!("empty sweep");
            }
            let records = harness::run_small(&cfg, &sweep, &opts)?;
            let dir = out_dir(&common);
            report(&harness::emit(&records, Some(&cfg), &dir)?, &dir);
        }
        Command::RunLarge { common, solvers, n_mobile, duration } => {
            let spec = match &common.config {
                Some(p) => {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str::<LargeScaleSpec>(&text)?
                }
                None => LargeScaleSpec { n_mobile: vec![2, 4, 8, 12], duration_s: default_duration() },
            };
            let counts = match n_mobile {
                Some(s) => parse_list(&s, "n_mobile")?,
                None => spec.n_mobile,
            };
            let opts = options(&common, &solvers)?;
            let records = harness::run_large(&counts, duration.unwrap_or(spec.duration_s), &opts)?;
            let dir = out_dir(&common);
            report(&harness::emit(&records, None, &dir)?, &dir);
        }
        Command::Summarize { common, runs } => {
            let records = harness::read_runs(&runs)?;
            let cfg = match &common.config {
                Some(_) => Some(scenario(&common)?),
                None if records.iter().any(|r| r.sweep != "n_mobile") => Some(presets::small_scale(common.seed)),
                None => None,
            };
            let dir = out_dir(&common);
            report(&harness::emit(&records, cfg.as_ref(), &dir)?, &dir);
        }
        Command::DumpGraph { common, t } => {
            let cfg = scenario(&common)?;
            let state = cfg.snapshot_at(t)?;
            let sets = action_space::enumerate_all(&cfg, &state)?;
            let mut g = dyngraph::build_initial(&cfg, &state);
            if let Some(s) = baselines::exhaustive_on(&cfg, &state, &sets, baselines::DEFAULT_CAP)? {
                for (h, a) in s.configuration.apps.iter().enumerate() {
                    g = dyngraph::apply_action(&g, h, a, &cfg)?;
                }
            }
            let dot = g.to_dot(&cfg);
            match &common.out {
                Some(p) => fs::write(p, dot).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{dot}"),
            }
        }
    }
    Ok(())
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(e) = e.downcast_ref::<qic_core::Error>() {
        e.kind()
    } else if e.downcast_ref::<serde_json::Error>().is_some() {
        "json"
    } else if e.downcast_ref::<std::io::Error>().is_some() {
        "io"
    } else {
        "usage"
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "kind": error_kind(&e), "message": format!("{e:#}") });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
