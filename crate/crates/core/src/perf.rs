//! Energy, latency and accuracy of a configuration, and the per-edge
//! attribute vectors f1..f5.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::dnn_catalog::ConfigurationOption;
use crate::dyngraph::{self, VertexId};
use crate::error::{Error, Result};
use crate::scenario::{ContextLabel, NodeKind, ScenarioConfig, SystemState};

/// Additive gain of late fusion over the better of its two branches.
pub const LATE_FUSION_GAIN: f64 = 0.02;

/// Distribution of a branch's detection accuracy as a fraction of the
/// context's accuracy cap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AccuracyDistribution {
    Beta { alpha: f64, beta: f64 },
    Empirical { samples: Vec<f64> },
}

impl AccuracyDistribution {
    /// Beta with mean `m` and concentration `kappa`.
    pub fn beta_mean(m: f64, kappa: f64) -> Self {
        AccuracyDistribution::Beta { alpha: kappa * m, beta: kappa * (1.0 - m) }
    }

    pub fn check(&self) -> std::result::Result<(), String> {
        match self {
            AccuracyDistribution::Beta { alpha, beta } => {
                if alpha.is_finite() && beta.is_finite() && *alpha > 0.0 && *beta > 0.0 {
                    Ok(())
                } else {
                    Err(format!("beta shape parameters must be positive, got ({alpha}, {beta})"))
                }
            }
            AccuracyDistribution::Empirical { samples } => {
                if samples.is_empty() {
                    Err("empirical distribution has no samples".into())
                } else if samples.iter().any(|s| !(0.0..=1.0).contains(s)) {
                    Err("empirical samples must lie in [0,1]".into())
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            AccuracyDistribution::Beta { alpha, beta } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    Beta::new(*alpha, *beta).map(|d| d.cdf(x)).unwrap_or(f64::NAN)
                }
            }
            AccuracyDistribution::Empirical { samples } => {
                samples.iter().filter(|s| **s <= x).count() as f64 / samples.len() as f64
            }
        }
    }

    /// `inf{x : F(x) >= w}`.
    pub fn quantile(&self, w: f64) -> Result<f64> {
        match self {
            AccuracyDistribution::Beta { alpha, beta } => {
                let d = Beta::new(*alpha, *beta)
                    .map_err(|e| Error::InvalidParameter(format!("beta: {e}")))?;
                Ok(d.inverse_cdf(w.clamp(0.0, 1.0)))
            }
            AccuracyDistribution::Empirical { samples } => {
                let mut s = samples.clone();
                s.sort_by(f64::total_cmp);
                empirical_quantile(&s, w)
            }
        }
    }
}

/// `inf{x : F_n(x) >= w}` over sorted samples.
pub fn empirical_quantile(sorted: &[f64], w: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let n = sorted.len();
    let k = ((w * n as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[k.min(n) - 1])
}

/// What a node does for one application.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Role {
    #[serde(default)]
    pub data: bool,
    #[serde(default)]
    pub stems: Vec<String>,
    #[serde(default)]
    pub branches: Vec<String>,
}

impl Role {
    pub fn is_idle(&self) -> bool {
        !self.data && self.stems.is_empty() && self.branches.is_empty()
    }
}

/// Placement and allocation of one application. Maps are keyed by node index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppAssignment {
    pub option: ConfigurationOption,
    pub roles: BTreeMap<usize, Role>,
    pub compute: BTreeMap<usize, f64>,
    pub blocks: BTreeMap<usize, u32>,
}

/// One assignment per application, in scenario order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub apps: Vec<AppAssignment>,
}

/// Data movement implied by an assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct Flow {
    /// Operations executed per hosting node.
    pub ops: BTreeMap<usize, f64>,
    /// Bits sent over each transmitting node's uplink.
    pub bits: BTreeMap<usize, f64>,
    /// Path edges, ordered source side first.
    pub edges: Vec<(VertexId, VertexId)>,
}

impl AppAssignment {
    pub fn host_of_stem(&self, stem: &str) -> Option<usize> {
        self.roles.iter().find(|(_, r)| r.stems.iter().any(|s| s == stem)).map(|(n, _)| *n)
    }

    pub fn host_of_branch(&self, branch: &str) -> Option<usize> {
        self.roles.iter().find(|(_, r)| r.branches.iter().any(|s| s == branch)).map(|(n, _)| *n)
    }

    /// Derives hosts, transmissions and path edges and checks both the
    /// placement rules and the allocations.
    pub fn flow(&self, app: usize, cfg: &ScenarioConfig) -> Result<Flow> {
        let flow = self.structure(app, cfg)?;
        self.check_allocations(app, cfg, &flow)?;
        Ok(flow)
    }

    /// Placement-only part of [`AppAssignment::flow`]; allocations are ignored.
    pub fn structure(&self, app: usize, cfg: &ScenarioConfig) -> Result<Flow> {
        let spec = &cfg.applications[app];
        let cat = cfg.catalog();
        let bad = |m: String| Error::InvalidConfiguration(format!("{}: {m}", spec.id));
        cat.validate_option(&self.option)?;
        let home = cfg.node_index(&spec.home_mobile_node).expect("validated");
        let sources = cfg.app_sources(app);

        for (&n, r) in &self.roles {
            let node = cfg.nodes.get(n).ok_or_else(|| bad(format!("node index {n} out of range")))?;
            match node.kind {
                NodeKind::Source if !r.stems.is_empty() || !r.branches.is_empty() => {
                    return Err(bad(format!("source {} cannot host DNN sections", node.id)))
                }
                NodeKind::Mobile | NodeKind::Edge if r.data => {
                    return Err(bad(format!("{} is not a data source", node.id)))
                }
                NodeKind::Mobile if !r.branches.is_empty() && r.stems.is_empty() => {
                    return Err(bad(format!("mobile {} hosts branches without stems", node.id)))
                }
                NodeKind::Edge if !r.stems.is_empty() && r.branches.is_empty() => {
                    return Err(bad(format!("edge {} hosts stems without branches", node.id)))
                }
                _ => {}
            }
        }

        let mut ops: BTreeMap<usize, f64> = BTreeMap::new();
        let mut bits: BTreeMap<usize, f64> = BTreeMap::new();
        let mut edges: Vec<(VertexId, VertexId)> = Vec::new();
        let push = |e: (VertexId, VertexId), edges: &mut Vec<_>| {
            if !edges.contains(&e) {
                edges.push(e);
            }
        };
        let v = |n: usize| dyngraph::node_vertex(n);
        let sink = dyngraph::sink_vertex(cfg.nodes.len());

        let data_nodes: Vec<usize> =
            self.roles.iter().filter(|(_, r)| r.data).map(|(n, _)| *n).collect();
        for &m in &self.option.sources {
            let src = *sources.get(&m).ok_or_else(|| bad(format!("no candidate source for {}", m.as_str())))?;
            if !data_nodes.contains(&src) {
                return Err(bad(format!("source {} not marked as data", cfg.nodes[src].id)));
            }
        }
        for &n in &data_nodes {
            let m = cfg.nodes[n].modality.expect("validated");
            if sources.get(&m) != Some(&n) || !self.option.sources.contains(&m) {
                return Err(bad(format!("{} is not a selected source", cfg.nodes[n].id)));
            }
            let stem = cat.stem_for(m).expect("validated option");
            let k = self
                .host_of_stem(&stem.id)
                .ok_or_else(|| Error::Disconnected(format!("{}: stem {} unplaced", spec.id, stem.id)))?;
            push((dyngraph::SOURCE_VERTEX, v(n)), &mut edges);
            let colocated = cfg.nodes[n]
                .colocated_with
                .as_deref()
                .is_some_and(|h| cfg.node_index(h) == Some(k));
            if !colocated {
                *bits.entry(n).or_default() += spec.source_bits[&cfg.nodes[n].id];
            }
            push((v(n), v(k)), &mut edges);
        }

        for id in &self.option.stems {
            let k = self
                .host_of_stem(id)
                .ok_or_else(|| Error::Disconnected(format!("{}: stem {id} unplaced", spec.id)))?;
            let s = cat.stem(id).expect("validated option");
            *ops.entry(k).or_default() += s.flops();
            let mut consumers: Vec<usize> = Vec::new();
            for bu in self.option.branches() {
                if bu.inputs.contains(&s.modality) {
                    let j = self.host_of_branch(&bu.branch).ok_or_else(|| {
                        Error::Disconnected(format!("{}: branch {} unplaced", spec.id, bu.branch))
                    })?;
                    if j != k && !consumers.contains(&j) {
                        consumers.push(j);
                    }
                }
            }
            for j in consumers {
                *bits.entry(k).or_default() += s.output_bits as f64;
                push((v(k), v(j)), &mut edges);
            }
        }
        for bu in self.option.branches() {
            let j = self.host_of_branch(&bu.branch).expect("checked above");
            let b = cat.branch(&bu.branch).expect("validated option");
            *ops.entry(j).or_default() += b.flops();
            if cfg.nodes[j].kind == NodeKind::Mobile && j != home {
                *bits.entry(j).or_default() += b.output_bits as f64;
            }
            push((v(j), sink), &mut edges);
        }

        let placed: usize = self.roles.values().map(|r| r.stems.len() + r.branches.len()).sum();
        if placed != self.option.stems.len() + self.option.branches().count() {
            return Err(bad("sections placed that the option does not use, or placed twice".into()));
        }
        for (&n, r) in &self.roles {
            if !r.is_idle() && r.data != data_nodes.contains(&n) {
                return Err(bad("inconsistent data roles".into()));
            }
        }
        for e in &edges {
            if !dyngraph::is_admissible(cfg, *e) {
                return Err(bad(format!("hop {:?} is not admissible", e)));
            }
        }
        Ok(Flow { ops, bits, edges })
    }

    fn check_allocations(&self, app: usize, cfg: &ScenarioConfig, flow: &Flow) -> Result<()> {
        let spec = &cfg.applications[app];
        let bad = |m: String| Error::InvalidConfiguration(format!("{}: {m}", spec.id));
        let (ops, bits) = (&flow.ops, &flow.bits);
        for (&n, &c) in &self.compute {
            if c < 0.0 || !c.is_finite() {
                return Err(bad("negative compute allocation".into()));
            }
            if c > 0.0 && !ops.contains_key(&n) {
                return Err(bad(format!("compute allocated on idle node {}", cfg.nodes[n].id)));
            }
        }
        for (&n, &b) in &self.blocks {
            if b > 0 && !bits.contains_key(&n) {
                return Err(bad(format!("blocks allocated on non-transmitting node {}", cfg.nodes[n].id)));
            }
        }
        for &n in ops.keys() {
            if !(self.compute.get(&n).copied().unwrap_or(0.0) > 0.0) {
                return Err(Error::ZeroAllocation { app: spec.id.clone(), node: cfg.nodes[n].id.clone() });
            }
        }
        for &n in bits.keys() {
            if self.blocks.get(&n).copied().unwrap_or(0) == 0 {
                return Err(Error::ZeroAllocation { app: spec.id.clone(), node: cfg.nodes[n].id.clone() });
            }
        }
        Ok(())
    }

    pub fn energy(&self, cfg: &ScenarioConfig) -> f64 {
        let c: f64 = self.compute.iter().map(|(&n, &c)| cfg.nodes[n].energy_per_compute * c).sum();
        let b: f64 = self.blocks.iter().map(|(&n, &b)| cfg.nodes[n].energy_per_block * b as f64).sum();
        c + b
    }
}

pub fn energy(conf: &Configuration, cfg: &ScenarioConfig) -> f64 {
    conf.apps.iter().map(|a| a.energy(cfg)).sum()
}

pub fn compute_latency(a: &AppAssignment, app: usize, cfg: &ScenarioConfig) -> Result<f64> {
    let flow = a.flow(app, cfg)?;
    Ok(flow.ops.iter().map(|(n, o)| o / a.compute[n]).sum())
}

/// Network latency at the slot's nominal per-RB rate.
pub fn network_latency(a: &AppAssignment, app: usize, cfg: &ScenarioConfig, state: &SystemState) -> Result<f64> {
    let flow = a.flow(app, cfg)?;
    Ok(flow
        .bits
        .iter()
        .map(|(n, d)| d / (a.blocks[n] as f64 * state.nodes[*n].rho))
        .sum())
}

/// Per-sample end-to-end latencies over the slot's link window. Each sample
/// sends at `min(b, B_i) * rho_i`.
pub fn latency_samples(flow: &Flow, a: &AppAssignment, state: &SystemState) -> Vec<f64> {
    let compute: f64 = flow.ops.iter().map(|(n, o)| o / a.compute[n]).sum();
    let k = flow
        .bits
        .keys()
        .map(|n| state.nodes[*n].link.samples.len())
        .max()
        .unwrap_or(1)
        .max(1);
    (0..k)
        .map(|i| {
            let net: f64 = flow
                .bits
                .iter()
                .map(|(n, d)| {
                    let link = &state.nodes[*n].link.samples;
                    let s = link[i.min(link.len() - 1)];
                    let rate = a.blocks[n].min(s.blocks) as f64 * s.rho;
                    if rate > 0.0 { d / rate } else { f64::INFINITY }
                })
                .sum();
            compute + net
        })
        .collect()
}

pub fn latency_quantile(a: &AppAssignment, app: usize, cfg: &ScenarioConfig, state: &SystemState) -> Result<f64> {
    let flow = a.flow(app, cfg)?;
    let mut s = latency_samples(&flow, a, state);
    s.sort_by(f64::total_cmp);
    empirical_quantile(&s, cfg.applications[app].quantile)
}

fn calibration<'a>(cfg: &'a ScenarioConfig, branch: &str, ctx: &ContextLabel) -> Result<&'a AccuracyDistribution> {
    let key = &cfg
        .catalog()
        .branch(branch)
        .ok_or_else(|| Error::UnknownId(format!("branch {branch}")))?
        .accuracy_key;
    cfg.calibration_for(key, ctx.name).ok_or_else(|| Error::MissingCalibration {
        branch: key.clone(),
        context: ctx.name.as_str().into(),
    })
}

/// ω-quantile of detection accuracy for an option in a context. Late fusion
/// takes the better branch plus a fixed gain, clipped at the cap.
pub fn accuracy_quantile(opt: &ConfigurationOption, ctx: &ContextLabel, w: f64, cfg: &ScenarioConfig) -> Result<f64> {
    let cap = ctx.accuracy_cap;
    let a = calibration(cfg, &opt.branch.branch, ctx)?;
    let Some(late) = &opt.late_fusion else {
        return Ok(cap * a.quantile(w)?);
    };
    let b = calibration(cfg, &late.branch, ctx)?;
    let x = match (a, b) {
        (AccuracyDistribution::Empirical { samples: sa }, AccuracyDistribution::Empirical { samples: sb }) => {
            let mut support: Vec<f64> = sa.iter().chain(sb).copied().collect();
            support.sort_by(f64::total_cmp);
            *support
                .iter()
                .find(|x| a.cdf(**x) * b.cdf(**x) >= w - 1e-12)
                .ok_or(Error::EmptyDistribution)?
        }
        _ => {
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if a.cdf(mid) * b.cdf(mid) >= w {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        }
    };
    Ok((cap * x + LATE_FUSION_GAIN).min(cap))
}

pub type AttributeVector = [f64; 5];
pub type AttributeMap = BTreeMap<(VertexId, VertexId), AttributeVector>;

/// Placement-level evaluation of one application's assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct AppEval {
    pub energy: f64,
    pub latency_q: f64,
    pub accuracy_q: f64,
    pub f2: f64,
    pub f3: f64,
    pub edges: Vec<(VertexId, VertexId)>,
    /// Energy attributed to each entry of `edges`.
    pub edge_energy: Vec<f64>,
    pub compute: Vec<(usize, f64)>,
    pub blocks: Vec<(usize, u32)>,
}

impl AppEval {
    pub fn meets_targets(&self) -> bool {
        self.f2 <= 1.0 && self.f3 <= 1.0
    }
}

pub fn evaluate_app(a: &AppAssignment, app: usize, cfg: &ScenarioConfig, state: &SystemState) -> Result<AppEval> {
    let spec = &cfg.applications[app];
    let flow = a.flow(app, cfg)?;
    let mut lat = latency_samples(&flow, a, state);
    lat.sort_by(f64::total_cmp);
    let latency_q = empirical_quantile(&lat, spec.quantile)?;
    let accuracy_q = accuracy_quantile(&a.option, &cfg.app_context(app), spec.quantile, cfg)?;
    let f2 = if accuracy_q > 0.0 { spec.accuracy_target / accuracy_q } else { f64::INFINITY };
    let f3 = latency_q / spec.latency_target;
    Ok(eval_from_parts(a, cfg, flow.edges, latency_q, accuracy_q, f2, f3))
}

pub(crate) fn eval_from_parts(
    a: &AppAssignment,
    cfg: &ScenarioConfig,
    edges: Vec<(VertexId, VertexId)>,
    latency_q: f64,
    accuracy_q: f64,
    f2: f64,
    f3: f64,
) -> AppEval {
    let mut edge_energy = vec![0.0; edges.len()];
    let mut attribute = |n: usize, e: f64| {
        let from = dyngraph::node_vertex(n);
        let idx = edges.iter().position(|(u, _)| *u == from).expect("flow checked allocations");
        edge_energy[idx] += e;
    };
    for (&n, &c) in &a.compute {
        attribute(n, cfg.nodes[n].energy_per_compute * c);
    }
    for (&n, &b) in &a.blocks {
        attribute(n, cfg.nodes[n].energy_per_block * b as f64);
    }
    AppEval {
        energy: a.energy(cfg),
        latency_q,
        accuracy_q,
        f2,
        f3,
        edges,
        edge_energy,
        compute: a.compute.iter().map(|(n, c)| (*n, *c)).collect(),
        blocks: a.blocks.iter().map(|(n, b)| (*n, *b)).collect(),
    }
}

/// Joins per-application evaluations into per-edge attributes over the
/// edges that carry at least one application.
pub fn aggregate<'a>(evals: impl IntoIterator<Item = &'a AppEval>, state: &SystemState) -> AttributeMap {
    let evals: Vec<&AppEval> = evals.into_iter().collect();
    let n = state.nodes.len();
    let mut used_c = vec![0.0; n];
    let mut used_b = vec![0u64; n];
    for ev in &evals {
        for &(k, c) in &ev.compute {
            used_c[k] += c;
        }
        for &(k, b) in &ev.blocks {
            used_b[k] += b as u64;
        }
    }
    let ratio = |used: f64, cap: f64| if used == 0.0 { 0.0 } else if cap > 0.0 { used / cap } else { f64::INFINITY };
    let mut out = AttributeMap::new();
    for ev in &evals {
        for (e, en) in ev.edges.iter().zip(&ev.edge_energy) {
            let f = out.entry(*e).or_insert_with(|| {
                match dyngraph::vertex_node(e.0, n) {
                    Some(k) => [
                        0.0,
                        0.0,
                        0.0,
                        ratio(used_c[k], state.nodes[k].compute),
                        ratio(used_b[k] as f64, state.nodes[k].blocks as f64),
                    ],
                    None => [0.0; 5],
                }
            });
            f[0] += en;
            f[1] = f[1].max(ev.f2);
            f[2] = f[2].max(ev.f3);
        }
    }
    out
}

pub fn attributes(conf: &Configuration, cfg: &ScenarioConfig, state: &SystemState) -> Result<AttributeMap> {
    let evals = conf
        .apps
        .iter()
        .enumerate()
        .map(|(h, a)| evaluate_app(a, h, cfg, state))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(&evals, state))
}

pub fn feasible(attrs: &AttributeMap) -> bool {
    attrs.values().all(|f| f[1..].iter().all(|x| *x <= 1.0))
}
