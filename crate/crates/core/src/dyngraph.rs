//! Time-evolving graph of placements. Snapshots are immutable; applying an
//! action returns a new snapshot.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::perf::{self, AppAssignment, AppEval, AttributeVector};
use crate::scenario::{NodeKind, ScenarioConfig, SystemState};

pub type VertexId = usize;

/// Virtual source `S_v`.
pub const SOURCE_VERTEX: VertexId = 0;

pub fn node_vertex(n: usize) -> VertexId {
    n + 1
}

/// Virtual destination `D_v` for a system of `n_nodes` physical nodes.
pub fn sink_vertex(n_nodes: usize) -> VertexId {
    n_nodes + 1
}

pub fn vertex_node(v: VertexId, n_nodes: usize) -> Option<usize> {
    (v >= 1 && v <= n_nodes).then(|| v - 1)
}

pub fn is_admissible(cfg: &ScenarioConfig, (u, v): (VertexId, VertexId)) -> bool {
    let n = cfg.nodes.len();
    let kind = |x: VertexId| vertex_node(x, n).map(|i| cfg.nodes[i].kind);
    let sink = sink_vertex(n);
    match (u, kind(u)) {
        (SOURCE_VERTEX, _) => kind(v) == Some(NodeKind::Source),
        (_, Some(NodeKind::Source)) => matches!(kind(v), Some(NodeKind::Mobile | NodeKind::Edge)),
        (_, Some(NodeKind::Mobile)) => v == sink || kind(v) == Some(NodeKind::Edge),
        (_, Some(NodeKind::Edge)) => v == sink,
        _ => false,
    }
}

/// Every admissible edge in a stable order.
pub fn admissible_edges(cfg: &ScenarioConfig) -> Vec<(VertexId, VertexId)> {
    let n = cfg.nodes.len();
    let all = (0..=sink_vertex(n)).flat_map(|u| (0..=sink_vertex(n)).map(move |v| (u, v)));
    all.filter(|e| is_admissible(cfg, *e)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub from: VertexId,
    pub to: VertexId,
    /// Compute of `from` attributed to this edge, summed over applications.
    pub compute: f64,
    pub blocks: u64,
    pub attrs: AttributeVector,
}

#[derive(Clone, Debug)]
pub struct GraphSnapshot {
    pub t: usize,
    pub epoch: usize,
    pub n_nodes: usize,
    edges: Arc<Vec<Edge>>,
    index: Arc<HashMap<(VertexId, VertexId), usize>>,
    apps: Arc<Vec<Option<AppEval>>>,
    state: Arc<SystemState>,
}

pub fn build_initial(cfg: &ScenarioConfig, state: &SystemState) -> GraphSnapshot {
    let edges: Vec<Edge> = admissible_edges(cfg)
        .into_iter()
        .map(|(from, to)| Edge { from, to, compute: 0.0, blocks: 0, attrs: [0.0; 5] })
        .collect();
    let index = edges.iter().enumerate().map(|(i, e)| ((e.from, e.to), i)).collect();
    GraphSnapshot {
        t: state.t,
        epoch: 0,
        n_nodes: cfg.nodes.len(),
        edges: Arc::new(edges),
        index: Arc::new(index),
        apps: Arc::new(vec![None; cfg.applications.len()]),
        state: Arc::new(state.clone()),
    }
}

/// Places application `app` by `action`, replacing its previous placement.
pub fn apply_action(
    g: &GraphSnapshot,
    app: usize,
    action: &AppAssignment,
    cfg: &ScenarioConfig,
) -> Result<GraphSnapshot> {
    let ev = perf::evaluate_app(action, app, cfg, &g.state)?;
    g.with_eval(app, ev)
}

impl GraphSnapshot {
    /// Same as [`apply_action`] with a precomputed evaluation.
    pub fn with_eval(&self, app: usize, ev: AppEval) -> Result<GraphSnapshot> {
        if app >= self.apps.len() {
            return Err(Error::UnknownId(format!("application index {app}")));
        }
        for e in &ev.edges {
            if !self.index.contains_key(e) {
                return Err(Error::InvalidConfiguration(format!("edge {e:?} is not admissible")));
            }
        }
        let mut apps = (*self.apps).clone();
        apps[app] = Some(ev);
        let attrs = perf::aggregate(apps.iter().flatten(), &self.state);
        let mut edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| Edge { compute: 0.0, blocks: 0, attrs: [0.0; 5], ..e.clone() })
            .collect();
        for (k, f) in attrs {
            edges[self.index[&k]].attrs = f;
        }
        for ev in apps.iter().flatten() {
            for &(n, c) in &ev.compute {
                let v = node_vertex(n);
                if let Some(e) = ev.edges.iter().find(|e| e.0 == v) {
                    edges[self.index[e]].compute += c;
                }
            }
            for &(n, b) in &ev.blocks {
                let v = node_vertex(n);
                if let Some(e) = ev.edges.iter().find(|e| e.0 == v) {
                    edges[self.index[e]].blocks += b as u64;
                }
            }
        }
        Ok(GraphSnapshot {
            t: self.t,
            epoch: self.epoch,
            n_nodes: self.n_nodes,
            edges: Arc::new(edges),
            index: self.index.clone(),
            apps: Arc::new(apps),
            state: self.state.clone(),
        })
    }

    pub fn at_epoch(&self, epoch: usize) -> GraphSnapshot {
        GraphSnapshot { epoch, ..self.clone() }
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, from: VertexId, to: VertexId) -> Option<&Edge> {
        self.index.get(&(from, to)).map(|&i| &self.edges[i])
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn app_eval(&self, app: usize) -> Option<&AppEval> {
        self.apps.get(app).and_then(Option::as_ref)
    }

    pub fn application_path(&self, app: usize) -> Option<&[(VertexId, VertexId)]> {
        self.app_eval(app).map(|e| e.edges.as_slice())
    }

    pub fn energy(&self) -> f64 {
        self.apps.iter().flatten().map(|e| e.energy).sum()
    }

    pub fn feasible(&self) -> bool {
        self.edges.iter().all(|e| e.attrs[1..].iter().all(|x| *x <= 1.0))
    }

    /// Graphviz rendering; edges on some application path are drawn solid.
    pub fn to_dot(&self, cfg: &ScenarioConfig) -> String {
        let name = |v: VertexId| match vertex_node(v, self.n_nodes) {
            Some(i) => cfg.nodes[i].id.clone(),
            None if v == SOURCE_VERTEX => "S_v".to_string(),
            None => "D_v".to_string(),
        };
        let mut s = format!("digraph qic_t{}_e{} {{\n  rankdir=LR;\n", self.t, self.epoch);
        for v in 0..=sink_vertex(self.n_nodes) {
            let shape = match vertex_node(v, self.n_nodes).map(|i| cfg.nodes[i].kind) {
                Some(NodeKind::Source) => "ellipse",
                Some(NodeKind::Mobile) => "box",
                Some(NodeKind::Edge) => "box3d",
                None => "point",
            };
            let _ = writeln!(s, "  \"{}\" [shape={shape}];", name(v));
        }
        for e in self.edges.iter() {
            let active = self.apps.iter().flatten().any(|a| a.edges.contains(&(e.from, e.to)));
            let style = if active { "solid" } else { "dotted" };
            let _ = writeln!(
                s,
                "  \"{}\" -> \"{}\" [style={style}, label=\"f1={:.3} f2={:.3} f3={:.3} f4={:.3} f5={:.3}\"];",
                name(e.from),
                name(e.to),
                e.attrs[0],
                e.attrs[1],
                e.attrs[2],
                e.attrs[3],
                e.attrs[4]
            );
        }
        s.push_str("}\n");
        s
    }
}
