//! Problem instance: nodes, applications, traces and calibration.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dnn_catalog::{builtin_catalog, Catalog, ConfigurationOption, Modality};
use crate::error::{Error, Result};
use crate::perf::AccuracyDistribution;
use crate::radio::{self, LinkDistribution, RadioParams, TraceKind, TraceSample};

pub mod presets;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Source,
    Mobile,
    Edge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextName {
    Sunny,
    Night,
    Motorway,
}

impl ContextName {
    pub const ALL: [ContextName; 3] = [ContextName::Sunny, ContextName::Night, ContextName::Motorway];

    pub fn as_str(self) -> &'static str {
        match self {
            ContextName::Sunny => "sunny",
            ContextName::Night => "night",
            ContextName::Motorway => "motorway",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextLabel {
    pub name: ContextName,
    pub accuracy_cap: f64,
}

impl ContextLabel {
    /// Sunny detections top out at 80%, night and motorway at 60%.
    pub fn with_default_cap(name: ContextName) -> Self {
        let accuracy_cap = match name {
            ContextName::Sunny => 0.8,
            ContextName::Night | ContextName::Motorway => 0.6,
        };
        ContextLabel { name, accuracy_cap }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<Modality>,
    /// Operations per second (mobile and edge nodes).
    #[serde(default)]
    pub compute_capacity: f64,
    /// Uplink resource blocks when not trace-driven.
    #[serde(default)]
    pub radio_blocks: u32,
    /// Joules per (operation/second) allocated, per slot.
    #[serde(default)]
    pub energy_per_compute: f64,
    /// Joules per allocated resource block, per slot.
    #[serde(default)]
    pub energy_per_block: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<ContextLabel>,
    /// Mobile node a data source is physically mounted on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colocated_with: Option<String>,
    /// Per-RB bit rate for nodes without a trace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_rb_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApplicationSpec {
    pub id: String,
    /// Seconds.
    pub latency_target: f64,
    pub accuracy_target: f64,
    pub quantile: f64,
    pub candidate_sources: Vec<String>,
    pub home_mobile_node: String,
    /// Bits per inference emitted by each candidate source.
    pub source_bits: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CatalogSource {
    /// The string `"builtin"`.
    Named(String),
    Custom(Catalog),
}

impl Default for CatalogSource {
    fn default() -> Self {
        CatalogSource::Named("builtin".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TraceSource {
    Synthetic { kind: TraceKind, duration_s: f64, seed: u64 },
    /// Path relative to the config file.
    Csv { path: String },
    Samples { samples: Vec<TraceSample> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub branch: String,
    pub context: ContextName,
    pub distribution: AccuracyDistribution,
}

fn default_slot() -> f64 {
    1.0
}

/// The full problem instance. Build with [`ScenarioConfig::from_json_str`],
/// [`load_scenario`] or [`ScenarioConfig::resolve`] on a literal.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub nodes: Vec<NodeSpec>,
    pub applications: Vec<ApplicationSpec>,
    #[serde(default)]
    pub catalog: CatalogSource,
    #[serde(default)]
    pub traces: BTreeMap<String, TraceSource>,
    #[serde(default)]
    pub calibration: Vec<CalibrationEntry>,
    #[serde(default = "default_slot")]
    pub slot_duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub radio: RadioParams,
    #[serde(skip)]
    resolved: Option<Arc<Resolved>>,
}

#[derive(Debug, PartialEq)]
struct Resolved {
    catalog: Catalog,
    traces: BTreeMap<String, Vec<TraceSample>>,
    node_index: HashMap<String, usize>,
    app_index: HashMap<String, usize>,
    calibration: HashMap<(String, ContextName), AccuracyDistribution>,
}

impl PartialEq for ScenarioConfig {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.applications == other.applications
            && self.catalog == other.catalog
            && self.traces == other.traces
            && self.calibration == other.calibration
            && self.slot_duration_s == other.slot_duration_s
            && self.seed == other.seed
            && self.radio == other.radio
            && self.resolved.as_deref() == other.resolved.as_deref()
    }
}

/// Per-node resource state at one slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub blocks: u32,
    pub compute: f64,
    pub rho: f64,
    /// Raw (ρ, B) samples over the slot, used for latency quantiles.
    pub link: LinkDistribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub t: usize,
    pub nodes: Vec<NodeState>,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    ScenarioConfig::from_json_str(&text, &base)
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        raw.resolve(base_dir)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()? + "\n").map_err(|e| Error::io(path, e))
    }

    /// Loads traces and the catalog, then validates every invariant.
    pub fn resolve(mut self, base_dir: &Path) -> Result<Self> {
        let mut problems = Vec::new();
        let catalog = match &self.catalog {
            CatalogSource::Named(n) if n == "builtin" => builtin_catalog(),
            CatalogSource::Named(n) => {
                problems.push(format!("unknown catalog {n:?}"));
                builtin_catalog()
            }
            CatalogSource::Custom(c) => c.clone(),
        };
        problems.extend(catalog.violations());

        let mut traces = BTreeMap::new();
        for (id, src) in &self.traces {
            match load_trace(src, base_dir) {
                Ok(s) if s.is_empty() => problems.push(format!("trace {id}: no samples")),
                Ok(s) => {
                    traces.insert(id.clone(), s);
                }
                Err(e) => problems.push(format!("trace {id}: {e}")),
            }
        }

        let mut node_index = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if node_index.insert(n.id.clone(), i).is_some() {
                problems.push(format!("duplicate node id {}", n.id));
            }
        }
        let mut app_index = HashMap::new();
        for (i, a) in self.applications.iter().enumerate() {
            if app_index.insert(a.id.clone(), i).is_some() {
                problems.push(format!("duplicate application id {}", a.id));
            }
        }
        let mut calibration = HashMap::new();
        for e in &self.calibration {
            if let Err(msg) = e.distribution.check() {
                problems.push(format!("calibration {}/{}: {msg}", e.branch, e.context.as_str()));
            }
            calibration.insert((e.branch.clone(), e.context), e.distribution.clone());
        }

        self.validate_into(&node_index, &traces, &mut problems);
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        self.resolved = Some(Arc::new(Resolved { catalog, traces, node_index, app_index, calibration }));
        Ok(self)
    }

    fn validate_into(
        &self,
        index: &HashMap<String, usize>,
        traces: &BTreeMap<String, Vec<TraceSample>>,
        problems: &mut Vec<String>,
    ) {
        let kind_of = |id: &str| index.get(id).map(|&i| self.nodes[i].kind);
        for n in &self.nodes {
            let nonneg = |v: f64| v.is_finite() && v >= 0.0;
            if matches!(n.kind, NodeKind::Mobile | NodeKind::Edge) && !(n.compute_capacity > 0.0) {
                problems.push(format!("node {}: compute_capacity must be positive", n.id));
            }
            if !nonneg(n.compute_capacity) {
                problems.push(format!("node {}: compute_capacity must be finite and non-negative", n.id));
            }
            if !nonneg(n.energy_per_compute) || !nonneg(n.energy_per_block) {
                problems.push(format!("node {}: energy coefficients must be non-negative", n.id));
            }
            match (n.kind, n.modality) {
                (NodeKind::Source, None) => problems.push(format!("source {} has no modality", n.id)),
                (NodeKind::Mobile | NodeKind::Edge, Some(_)) => {
                    problems.push(format!("node {}: only sources carry a modality", n.id))
                }
                _ => {}
            }
            if n.kind == NodeKind::Mobile {
                match n.context {
                    None => problems.push(format!("mobile {} has no context", n.id)),
                    Some(c) if !(c.accuracy_cap > 0.0 && c.accuracy_cap <= 1.0) => {
                        problems.push(format!("mobile {}: accuracy_cap must be in (0,1]", n.id))
                    }
                    _ => {}
                }
            }
            if let Some(host) = &n.colocated_with {
                if n.kind != NodeKind::Source {
                    problems.push(format!("node {}: only sources can be co-located", n.id));
                } else if kind_of(host) != Some(NodeKind::Mobile) {
                    problems.push(format!("source {}: co-location host {host} is not a mobile node", n.id));
                }
            }
            if n.kind == NodeKind::Edge && (n.trace_id.is_some() || n.radio_blocks > 0) {
                problems.push(format!("edge server {}: has no uplink resources", n.id));
            }
            match &n.trace_id {
                Some(t) if !traces.contains_key(t) && !self.traces.contains_key(t) => {
                    problems.push(format!("node {}: unknown trace {t}", n.id))
                }
                Some(_) => {}
                None => {
                    if n.radio_blocks > 0 && !(n.per_rb_rate.is_some_and(|r| r > 0.0)) {
                        problems.push(format!("node {}: radio_blocks > 0 needs a positive per_rb_rate", n.id));
                    }
                }
            }
        }
        if !self.nodes.iter().any(|n| n.kind == NodeKind::Edge) {
            problems.push("at least one edge server is required".into());
        }
        for a in &self.applications {
            if !(a.latency_target > 0.0) {
                problems.push(format!("application {}: latency_target must be positive", a.id));
            }
            if !(a.accuracy_target > 0.0 && a.accuracy_target < 1.0) {
                problems.push(format!("application {}: accuracy_target must be in (0,1)", a.id));
            }
            if !(a.quantile > 0.0 && a.quantile < 1.0) {
                problems.push(format!("application {}: quantile must be in (0,1)", a.id));
            }
            if a.candidate_sources.is_empty() {
                problems.push(format!("application {}: no candidate sources", a.id));
            }
            for s in &a.candidate_sources {
                match kind_of(s) {
                    None => problems.push(format!("application {}: unknown source {s}", a.id)),
                    Some(NodeKind::Source) => {}
                    Some(_) => problems.push(format!("application {}: {s} is not a data source", a.id)),
                }
                if !a.source_bits.get(s).is_some_and(|b| *b > 0.0) {
                    problems.push(format!("application {}: source_bits for {s} must be positive", a.id));
                }
            }
            match kind_of(&a.home_mobile_node) {
                Some(NodeKind::Mobile) => {}
                Some(_) => problems.push(format!("application {}: home node is not mobile", a.id)),
                None => problems.push(format!(
                    "application {}: unknown home node {}",
                    a.id, a.home_mobile_node
                )),
            }
        }
        let k = self.slot_duration_s / radio::SAMPLE_PERIOD_S;
        if !(self.slot_duration_s > 0.0) || (k - k.round()).abs() > 1e-9 {
            problems.push("slot_duration_s must be a positive multiple of 0.1 s".into());
        }
    }

    fn resolved(&self) -> &Resolved {
        self.resolved
            .as_deref()
            .expect("ScenarioConfig used before resolve(); construct it through load/resolve")
    }

    pub fn catalog(&self) -> &Catalog {
        &self.resolved().catalog
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.resolved().node_index.get(id).copied()
    }

    pub fn app_index(&self, id: &str) -> Option<usize> {
        self.resolved().app_index.get(id).copied()
    }

    pub fn trace(&self, id: &str) -> Option<&[TraceSample]> {
        self.resolved().traces.get(id).map(Vec::as_slice)
    }

    pub fn calibration_for(&self, branch_key: &str, ctx: ContextName) -> Option<&AccuracyDistribution> {
        self.resolved().calibration.get(&(branch_key.to_string(), ctx))
    }

    pub fn samples_per_slot(&self) -> usize {
        (self.slot_duration_s / radio::SAMPLE_PERIOD_S).round() as usize
    }

    /// Number of whole slots covered by every trace; `None` when nothing is
    /// trace-driven.
    pub fn horizon(&self) -> Option<usize> {
        let k = self.samples_per_slot();
        self.nodes
            .iter()
            .filter_map(|n| n.trace_id.as_deref())
            .filter_map(|id| self.trace(id))
            .map(|s| s.len() / k)
            .min()
    }

    pub fn nodes_of(&self, kind: NodeKind) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().enumerate().filter(move |(_, n)| n.kind == kind).map(|(i, _)| i)
    }

    /// Context of the application's home mobile node.
    pub fn app_context(&self, app: usize) -> ContextLabel {
        let home = self.node_index(&self.applications[app].home_mobile_node).expect("validated");
        self.nodes[home].context.expect("validated")
    }

    /// Candidate source node per modality for an application; the first listed
    /// source wins when two share a modality.
    pub fn app_sources(&self, app: usize) -> BTreeMap<Modality, usize> {
        let mut out = BTreeMap::new();
        for s in &self.applications[app].candidate_sources {
            let i = self.node_index(s).expect("validated");
            if let Some(m) = self.nodes[i].modality {
                out.entry(m).or_insert(i);
            }
        }
        out
    }

    pub fn enumerate_options(&self, app: usize) -> Vec<ConfigurationOption> {
        let mods: BTreeSet<Modality> = self.app_sources(app).keys().copied().collect();
        self.catalog().enumerate_options(&mods)
    }

    /// Copy with every application's targets replaced.
    pub fn with_targets(&self, latency: Option<f64>, accuracy: Option<f64>, quantile: Option<f64>) -> Self {
        let mut c = self.clone();
        for a in &mut c.applications {
            if let Some(l) = latency {
                a.latency_target = l;
            }
            if let Some(x) = accuracy {
                a.accuracy_target = x;
            }
            if let Some(w) = quantile {
                a.quantile = w;
            }
        }
        c
    }

    pub fn snapshot_at(&self, t: usize) -> Result<SystemState> {
        if let Some(h) = self.horizon() {
            if t >= h {
                return Err(Error::OutOfRange { t, horizon: h });
            }
        }
        let k = self.samples_per_slot();
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                let (blocks, rho, link) = match n.trace_id.as_deref().and_then(|id| self.trace(id)) {
                    Some(trace) => {
                        let first = radio::link_sample(&trace[t * k], &self.radio)?;
                        let link = radio::link_window(trace, t, 1, k, &self.radio)?;
                        (first.blocks, first.rho, link)
                    }
                    None => {
                        let rho = n.per_rb_rate.unwrap_or(0.0);
                        (n.radio_blocks, rho, LinkDistribution::constant(rho, n.radio_blocks))
                    }
                };
                Ok(NodeState { blocks, compute: n.compute_capacity, rho, link })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SystemState { t, nodes })
    }
}

pub fn snapshot_at(cfg: &ScenarioConfig, t: usize) -> Result<SystemState> {
    cfg.snapshot_at(t)
}

fn load_trace(src: &TraceSource, base_dir: &Path) -> Result<Vec<TraceSample>> {
    match src {
        TraceSource::Synthetic { kind, duration_s, seed } => {
            if !(*duration_s > 0.0) {
                return Err(Error::InvalidParameter("trace duration must be positive".into()));
            }
            Ok(radio::synth_trace(*kind, *duration_s, *seed))
        }
        TraceSource::Csv { path } => {
            let p = PathBuf::from(path);
            let p = if p.is_absolute() { p } else { base_dir.join(p) };
            radio::read_trace_csv(p)
        }
        TraceSource::Samples { samples } => {
            for s in samples {
                radio::spectral_efficiency(s.mcs_index)?;
            }
            Ok(samples.clone())
        }
    }
}
