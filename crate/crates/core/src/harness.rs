//! Experiment driver: per-slot solver runs over target and size sweeps,
//! metric summaries, and CSV plot data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{self, SearchBudget};
use crate::error::{Error, Result};
use crate::perf::{self, Configuration};
use crate::qcpo::action_space;
use crate::qcpo::{QcpoLearner, QcpoParams};
use crate::scenario::{presets, ScenarioConfig, SystemState};

pub const RUNS_HEADER: [&str; 11] = [
    "sweep", "x", "solver", "t", "app", "node", "energy_j", "latency_q_s", "accuracy_q", "feasible", "status",
];
pub const SUMMARY_HEADER: [&str; 8] =
    ["sweep", "x", "solver", "records", "avg_energy_j", "churn", "avg_latency_s", "avg_accuracy"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Qic,
    Mctp,
    Opt,
}

impl Solver {
    pub const ALL: [Solver; 3] = [Solver::Qic, Solver::Mctp, Solver::Opt];

    pub fn as_str(self) -> &'static str {
        match self {
            Solver::Qic => "qic",
            Solver::Mctp => "mctp",
            Solver::Opt => "opt",
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Solver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "qic" => Ok(Solver::Qic),
            "mctp" => Ok(Solver::Mctp),
            "opt" => Ok(Solver::Opt),
            other => Err(Error::UnknownId(format!("solver {other}"))),
        }
    }
}

/// Parses a comma-separated solver list such as `qic,mctp,opt`.
pub fn parse_solvers(s: &str) -> Result<Vec<Solver>> {
    let mut v: Vec<Solver> = s.split(',').filter(|x| !x.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    v.sort();
    v.dedup();
    if v.is_empty() {
        return Err(Error::InvalidParameter("no solvers selected".into()));
    }
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// The solver returned a configuration.
    Ok,
    /// The solver certified that no feasible configuration exists.
    Infeasible,
    /// The exhaustive search refused because of its size cap.
    Skipped,
}

/// One application in one slot under one solver. Values are empty when the
/// solver returned no configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub sweep: String,
    pub x: f64,
    pub solver: Solver,
    pub t: usize,
    pub app: String,
    /// Home mobile node of the application.
    pub node: String,
    pub energy_j: Option<f64>,
    pub latency_q_s: Option<f64>,
    pub accuracy_q: Option<f64>,
    /// Both targets met and the joint configuration within capacity.
    pub feasible: bool,
    pub status: RunStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub sweep: String,
    pub x: f64,
    pub solver: Solver,
    pub records: usize,
    pub avg_energy_j: Option<f64>,
    /// Share of mobile nodes whose application misses a target in some slot.
    pub churn: f64,
    pub avg_latency_s: Option<f64>,
    pub avg_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessOptions {
    pub solvers: Vec<Solver>,
    pub seed: u64,
    pub qcpo: QcpoParams,
    pub mctp: SearchBudget,
    pub exhaustive_cap: f64,
    /// Limits the number of slots; the full trace horizon otherwise.
    pub slots: Option<usize>,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        HarnessOptions {
            solvers: Solver::ALL.to_vec(),
            seed: 0,
            qcpo: QcpoParams::default(),
            mctp: SearchBudget::default(),
            exhaustive_cap: baselines::DEFAULT_CAP,
            slots: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Accuracy,
    Latency,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::Accuracy => "accuracy",
            SweepKind::Latency => "latency",
        }
    }
}

impl FromStr for SweepKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(SweepKind::Accuracy),
            "latency" => Ok(SweepKind::Latency),
            other => Err(Error::UnknownId(format!("sweep {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub kind: SweepKind,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn accuracy(values: &[f64]) -> Self {
        Sweep { kind: SweepKind::Accuracy, values: values.to_vec() }
    }

    pub fn latency(values: &[f64]) -> Self {
        Sweep { kind: SweepKind::Latency, values: values.to_vec() }
    }

    /// The scenario with every application's target set to `x`.
    pub fn apply(&self, cfg: &ScenarioConfig, x: f64) -> ScenarioConfig {
        match self.kind {
            SweepKind::Accuracy => cfg.with_targets(None, Some(x), None),
            SweepKind::Latency => cfg.with_targets(Some(x), None, None),
        }
    }
}

fn slot_count(cfg: &ScenarioConfig, opts: &HarnessOptions) -> Result<usize> {
    let h = cfg
        .horizon()
        .ok_or_else(|| Error::InvalidParameter("scenario has no trace horizon".into()))?;
    Ok(opts.slots.map_or(h, |s| s.min(h)))
}

fn home_of(cfg: &ScenarioConfig, app: usize) -> String {
    cfg.applications[app].home_mobile_node.clone()
}

/// Records of an enacted configuration, re-evaluated from scratch by the
/// performance model.
pub fn records_for(
    cfg: &ScenarioConfig,
    state: &SystemState,
    conf: &Configuration,
    sweep: &str,
    x: f64,
    solver: Solver,
) -> Result<Vec<RunRecord>> {
    let evals: Vec<perf::AppEval> = conf
        .apps
        .iter()
        .enumerate()
        .map(|(h, a)| perf::evaluate_app(a, h, cfg, state))
        .collect::<Result<_>>()?;
    let within_capacity = capacity_ok(&evals, state);
    Ok(evals
        .iter()
        .enumerate()
        .map(|(h, ev)| RunRecord {
            sweep: sweep.into(),
            x,
            solver,
            t: state.t,
            app: cfg.applications[h].id.clone(),
            node: home_of(cfg, h),
            energy_j: Some(ev.energy),
            latency_q_s: Some(ev.latency_q),
            accuracy_q: Some(ev.accuracy_q),
            feasible: within_capacity && ev.meets_targets(),
            status: RunStatus::Ok,
        })
        .collect())
}

fn capacity_ok(evals: &[perf::AppEval], state: &SystemState) -> bool {
    let n = state.nodes.len();
    let mut c = vec![0.0; n];
    let mut b = vec![0u64; n];
    for ev in evals {
        for &(k, x) in &ev.compute {
            c[k] += x;
        }
        for &(k, x) in &ev.blocks {
            b[k] += x as u64;
        }
    }
    (0..n).all(|k| c[k] <= state.nodes[k].compute && b[k] <= state.nodes[k].blocks as u64)
}

fn empty_records(cfg: &ScenarioConfig, t: usize, sweep: &str, x: f64, solver: Solver, status: RunStatus) -> Vec<RunRecord> {
    (0..cfg.applications.len())
        .map(|h| RunRecord {
            sweep: sweep.into(),
            x,
            solver,
            t,
            app: cfg.applications[h].id.clone(),
            node: home_of(cfg, h),
            energy_j: None,
            latency_q_s: None,
            accuracy_q: None,
            feasible: false,
            status,
        })
        .collect()
}

/// Runs every selected solver over every slot of one scenario.
pub fn run_scenario(cfg: &ScenarioConfig, sweep: &str, x: f64, opts: &HarnessOptions) -> Result<Vec<RunRecord>> {
    let slots = slot_count(cfg, opts)?;
    let mut learner = if opts.solvers.contains(&Solver::Qic) {
        Some(QcpoLearner::new(cfg, QcpoParams { seed: opts.seed, ..opts.qcpo.clone() })?)
    } else {
        None
    };
    let mut opt_skipped = false;
    let mut out = Vec::new();
    for t in 0..slots {
        let state = cfg.snapshot_at(t)?;
        let sets = action_space::enumerate_all(cfg, &state)?;
        for &solver in &opts.solvers {
            match solver {
                Solver::Qic => {
                    let l = learner.as_mut().expect("created for qic");
                    let d = l.orchestrate_on(cfg, &state, &sets)?;
                    out.extend(records_for(cfg, &state, &d.configuration, sweep, x, solver)?);
                }
                Solver::Mctp => {
                    let seed = opts.seed.wrapping_mul(1_000_003).wrapping_add(t as u64);
                    let r = baselines::mctp_on(cfg, &state, &sets, opts.mctp, seed)?;
                    out.extend(records_for(cfg, &state, &r.solution.configuration, sweep, x, solver)?);
                }
                Solver::Opt if opt_skipped => {
                    out.extend(empty_records(cfg, t, sweep, x, solver, RunStatus::Skipped));
                }
                Solver::Opt => match baselines::exhaustive_on(cfg, &state, &sets, opts.exhaustive_cap) {
                    Ok(Some(s)) => out.extend(records_for(cfg, &state, &s.configuration, sweep, x, solver)?),
                    Ok(None) => out.extend(empty_records(cfg, t, sweep, x, solver, RunStatus::Infeasible)),
                    Err(Error::CapExceeded { .. }) => {
                        opt_skipped = true;
                        out.extend(empty_records(cfg, t, sweep, x, solver, RunStatus::Skipped));
                    }
                    Err(e) => return Err(e),
                },
            }
        }
    }
    Ok(out)
}

/// Small-scale study: one scenario per sweep point.
pub fn run_small(cfg: &ScenarioConfig, sweep: &Sweep, opts: &HarnessOptions) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for &x in &sweep.values {
        let c = sweep.apply(cfg, x);
        out.extend(run_scenario(&c, sweep.kind.as_str(), x, opts)?);
    }
    Ok(out)
}

/// Large-scale study over mobile-node counts. The exhaustive solver is never
/// run here.
pub fn run_large(n_mobile: &[usize], duration_s: f64, opts: &HarnessOptions) -> Result<Vec<RunRecord>> {
    if n_mobile.iter().any(|n| *n == 0) {
        return Err(Error::InvalidParameter("mobile-node counts must be at least 1".into()));
    }
    let mut o = opts.clone();
    o.solvers.retain(|s| *s != Solver::Opt);
    let mut out = Vec::new();
    for &n in n_mobile {
        let cfg = presets::large_scale(n, opts.seed.wrapping_add(n as u64), duration_s);
        out.extend(run_scenario(&cfg, "n_mobile", n as f64, &o)?);
    }
    Ok(out)
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Averages per (sweep, x, solver) in first-appearance order.
pub fn summarize(records: &[RunRecord]) -> Result<Vec<MetricsSummary>> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("no records to summarize".into()));
    }
    let mut order: Vec<(String, u64, Solver)> = Vec::new();
    let mut groups: BTreeMap<(String, u64, Solver), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.sweep.clone(), r.x.to_bits(), r.solver);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let nodes: BTreeSet<&str> = rs.iter().map(|r| r.node.as_str()).collect();
            let failing: BTreeSet<&str> = rs.iter().filter(|r| !r.feasible).map(|r| r.node.as_str()).collect();
            MetricsSummary {
                sweep: key.0.clone(),
                x: f64::from_bits(key.1),
                solver: key.2,
                records: rs.len(),
                avg_energy_j: mean(rs.iter().filter_map(|r| r.energy_j)),
                churn: failing.len() as f64 / nodes.len() as f64,
                avg_latency_s: mean(rs.iter().filter_map(|r| r.latency_q_s)),
                avg_accuracy: mean(rs.iter().filter_map(|r| r.accuracy_q)),
            }
        })
        .collect())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn to_csv<T: Serialize>(header: &[&str], rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_runs(path: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    write_atomic(path.as_ref(), &to_csv(&RUNS_HEADER, records)?)
}

pub fn read_runs(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != RUNS_HEADER {
        return Err(Error::Parse(format!("unexpected runs header in {}", path.display())));
    }
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

pub fn write_summary(path: impl AsRef<Path>, rows: &[MetricsSummary]) -> Result<()> {
    write_atomic(path.as_ref(), &to_csv(&SUMMARY_HEADER, rows)?)
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<MetricsSummary>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Wide table: one row per x, one column per solver.
fn series_table(points: &BTreeMap<u64, BTreeMap<Solver, Option<f64>>>, solvers: &[Solver]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["x".to_string()];
    header.extend(solvers.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    let mut xs: Vec<f64> = points.keys().map(|b| f64::from_bits(*b)).collect();
    xs.sort_by(f64::total_cmp);
    for x in xs {
        let row = &points[&x.to_bits()];
        let mut rec = vec![x.to_string()];
        rec.extend(solvers.iter().map(|s| fmt_opt(row.get(s).copied().flatten())));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))
}

/// Writes `runs.csv`, `summary.csv` and the plot-data tables; returns the
/// file names written.
///
/// Small-scale sweeps give `fig4_<sweep>_<context>.csv` with average energy
/// of the applications whose home node is in that context. Mobile-count
/// sweeps give `fig5_<metric>.csv` for energy, churn, latency and accuracy.
pub fn emit(records: &[RunRecord], cfg: Option<&ScenarioConfig>, out_dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = vec!["runs.csv".to_string(), "summary.csv".to_string()];
    write_runs(dir.join("runs.csv"), records)?;
    let summary = if records.is_empty() { Vec::new() } else { summarize(records)? };
    write_summary(dir.join("summary.csv"), &summary)?;

    let solvers: Vec<Solver> = {
        let s: BTreeSet<Solver> = records.iter().map(|r| r.solver).collect();
        s.into_iter().collect()
    };
    let sweeps: BTreeSet<&str> = records.iter().map(|r| r.sweep.as_str()).collect();
    for sweep in sweeps {
        if sweep == "n_mobile" {
            let metrics: [(&str, fn(&MetricsSummary) -> Option<f64>); 4] = [
                ("energy", |m| m.avg_energy_j),
                ("churn", |m| Some(m.churn)),
                ("latency", |m| m.avg_latency_s),
                ("accuracy", |m| m.avg_accuracy),
            ];
            for (name, get) in metrics {
                let mut points: BTreeMap<u64, BTreeMap<Solver, Option<f64>>> = BTreeMap::new();
                for m in summary.iter().filter(|m| m.sweep == sweep) {
                    points.entry(m.x.to_bits()).or_default().insert(m.solver, get(m));
                }
                let f = format!("fig5_{name}.csv");
                write_atomic(&dir.join(&f), &series_table(&points, &solvers)?)?;
                files.push(f);
            }
        } else if let Some(cfg) = cfg {
            let mut by_ctx: BTreeMap<&str, BTreeMap<u64, BTreeMap<Solver, Vec<f64>>>> = BTreeMap::new();
            for r in records.iter().filter(|r| r.sweep == sweep) {
                let Some(h) = cfg.app_index(&r.app) else { continue };
                let ctx = cfg.app_context(h).name.as_str();
                let cell = by_ctx.entry(ctx).or_default().entry(r.x.to_bits()).or_default().entry(r.solver).or_default();
                cell.extend(r.energy_j);
            }
            for (ctx, pts) in by_ctx {
                let points = pts
                    .into_iter()
                    .map(|(x, m)| (x, m.into_iter().map(|(s, v)| (s, mean(v.into_iter()))).collect()))
                    .collect();
                let f = format!("fig4_{sweep}_{ctx}.csv");
                write_atomic(&dir.join(&f), &series_table(&points, &solvers)?)?;
                files.push(f);
            }
        }
    }
    Ok(files)
}
