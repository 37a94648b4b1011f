//! Discretized per-application action space and a fast evaluator of joint
//! rewards and costs over it.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dnn_catalog::{ConfigurationOption, Depth};
use crate::dyngraph::{self, VertexId};
use crate::error::{Error, Result};
use crate::perf::{self, AppAssignment, AppEval, Configuration, Role};
use crate::scenario::{NodeKind, ScenarioConfig, SystemState};

/// Allocation levels as fractions of a node's capacity.
pub const LEVELS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

/// Number of per-candidate features seen by the policy.
pub const ACTION_FEATURES: usize = 12;

/// Lexicographically ordered identifier of one application action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionId {
    pub option: usize,
    pub stem_host: usize,
    pub branch_host: usize,
    pub c_level: u8,
    pub b_level: u8,
}

#[derive(Clone, Debug)]
pub struct Candidate {
    pub id: ActionId,
    pub eval: AppEval,
    pub features: [f64; ACTION_FEATURES],
}

/// All actions of one application at one slot, sorted by [`ActionId`].
#[derive(Clone, Debug)]
pub struct AppCandidates {
    pub app: usize,
    pub options: Vec<ConfigurationOption>,
    pub candidates: Vec<Candidate>,
}

fn roles_for(
    cfg: &ScenarioConfig,
    app: usize,
    opt: &ConfigurationOption,
    stem_host: usize,
    branch_host: usize,
) -> BTreeMap<usize, Role> {
    let srcs = cfg.app_sources(app);
    let mut roles = BTreeMap::new();
    for m in &opt.sources {
        roles.insert(srcs[m], Role { data: true, ..Default::default() });
    }
    let branches: Vec<String> = opt.branches().map(|b| b.branch.clone()).collect();
    if stem_host == branch_host {
        roles.insert(stem_host, Role { data: false, stems: opt.stems.clone(), branches });
    } else {
        roles.insert(stem_host, Role { data: false, stems: opt.stems.clone(), branches: vec![] });
        roles.insert(branch_host, Role { data: false, stems: vec![], branches });
    }
    roles
}

/// Stem/branch host pairs: both on the home mobile, stems home and branch on
/// an edge server, or both on the same edge server.
pub fn placements(cfg: &ScenarioConfig, app: usize) -> Vec<(usize, usize)> {
    let home = cfg.node_index(&cfg.applications[app].home_mobile_node).expect("validated");
    let mut out = vec![(home, home)];
    for e in cfg.nodes_of(NodeKind::Edge) {
        out.push((home, e));
        out.push((e, e));
    }
    out.sort();
    out
}

impl AppCandidates {
    /// Enumerates option x placement x compute level x radio level. One
    /// compute level is shared by all hosts of the application and one radio
    /// level by all its transmitting nodes; actions that would leave a
    /// transmitting node with zero blocks are dropped.
    pub fn enumerate(cfg: &ScenarioConfig, state: &SystemState, app: usize) -> Result<AppCandidates> {
        let spec = &cfg.applications[app];
        let options = cfg.enumerate_options(app);
        let ctx = cfg.app_context(app);
        let home = cfg.node_index(&spec.home_mobile_node).expect("validated");
        let mut candidates = Vec::new();
        for (oi, opt) in options.iter().enumerate() {
            let accuracy_q = perf::accuracy_quantile(opt, &ctx, spec.quantile, cfg)?;
            let f2 = if accuracy_q > 0.0 { spec.accuracy_target / accuracy_q } else { f64::INFINITY };
            let depth = cfg.catalog().branch(&opt.branch.branch).map(|b| b.depth);
            for (sh, bh) in placements(cfg, app) {
                let roles = roles_for(cfg, app, opt, sh, bh);
                let base = AppAssignment {
                    option: opt.clone(),
                    roles,
                    compute: BTreeMap::new(),
                    blocks: BTreeMap::new(),
                };
                let flow = match base.structure(app, cfg) {
                    Ok(f) => f,
                    Err(Error::InvalidConfiguration(_)) => continue,
                    Err(e) => return Err(e),
                };
                let b_levels: &[u8] = if flow.bits.is_empty() { &[0] } else { &[0, 1, 2, 3] };
                for cl in 0..LEVELS.len() as u8 {
                    for &bl in b_levels {
                        let mut a = base.clone();
                        for &n in flow.ops.keys() {
                            a.compute.insert(n, LEVELS[cl as usize] * state.nodes[n].compute);
                        }
                        let mut zero = false;
                        for &n in flow.bits.keys() {
                            let b = (LEVELS[bl as usize] * state.nodes[n].blocks as f64).floor() as u32;
                            zero |= b == 0;
                            a.blocks.insert(n, b);
                        }
                        if zero || a.compute.values().any(|c| *c <= 0.0) {
                            continue;
                        }
                        let mut lat = perf::latency_samples(&flow, &a, state);
                        lat.sort_by(f64::total_cmp);
                        let latency_q = perf::empirical_quantile(&lat, spec.quantile)?;
                        let f3 = latency_q / spec.latency_target;
                        let eval = perf::eval_from_parts(&a, cfg, flow.edges.clone(), latency_q, accuracy_q, f2, f3);
                        let features = [
                            eval.energy / 100.0,
                            f2.min(3.0),
                            f3.min(3.0),
                            LEVELS[cl as usize],
                            if flow.bits.is_empty() { 0.0 } else { LEVELS[bl as usize] },
                            (sh != home) as u8 as f64,
                            (bh != home) as u8 as f64,
                            (depth == Some(Depth::D18)) as u8 as f64,
                            (depth == Some(Depth::D50)) as u8 as f64,
                            (depth == Some(Depth::D101)) as u8 as f64,
                            opt.late_fusion.is_some() as u8 as f64,
                            opt.sources.len() as f64 / 2.0,
                        ];
                        let id = ActionId { option: oi, stem_host: sh, branch_host: bh, c_level: cl, b_level: bl };
                        candidates.push(Candidate { id, eval, features });
                    }
                }
            }
        }
        if candidates.is_empty() {
            return Err(Error::EmptyActionSpace(spec.id.clone()));
        }
        candidates.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(AppCandidates { app, options, candidates })
    }

    /// Rebuilds the full assignment of a candidate.
    pub fn assignment(&self, cfg: &ScenarioConfig, idx: usize) -> AppAssignment {
        let c = &self.candidates[idx];
        let opt = self.options[c.id.option].clone();
        let roles = roles_for(cfg, self.app, &opt, c.id.stem_host, c.id.branch_host);
        let compute = c.eval.compute.iter().copied().collect();
        let blocks = c.eval.blocks.iter().copied().collect();
        AppAssignment { option: opt, roles, compute, blocks }
    }

    pub fn position(&self, id: &ActionId) -> Option<usize> {
        self.candidates.binary_search_by(|c| c.id.cmp(id)).ok()
    }
}

pub fn enumerate_all(cfg: &ScenarioConfig, state: &SystemState) -> Result<Vec<AppCandidates>> {
    (0..cfg.applications.len()).map(|h| AppCandidates::enumerate(cfg, state, h)).collect()
}

pub fn configuration_of(cfg: &ScenarioConfig, sets: &[AppCandidates], choice: &[usize]) -> Configuration {
    Configuration {
        apps: sets.iter().zip(choice).map(|(s, &i)| s.assignment(cfg, i)).collect(),
    }
}

/// Joint quantities of a set of placed applications.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub reward: f64,
    pub cost: f64,
    pub energy: f64,
    /// Edges with some f_j > 1, j = 2..5.
    pub violated_edges: usize,
    /// (edge, j) pairs with f_j > 1.
    pub violated_pairs: usize,
}

impl Score {
    pub fn feasible(&self) -> bool {
        self.violated_edges == 0
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct EdgeAgg {
    f1: f64,
    f2: f64,
    f3: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Contribution {
    reward: f64,
    cost: f64,
    violated: usize,
    pairs: usize,
}

/// Incremental joint evaluator equivalent to applying every placement to a
/// graph snapshot and computing reward and cost on it.
#[derive(Clone, Debug)]
pub struct JointEvaluator<'a> {
    state: &'a SystemState,
    mu: [f64; 4],
    n_nodes: usize,
    edges: HashMap<(VertexId, VertexId), EdgeAgg>,
    from: Vec<Vec<(VertexId, VertexId)>>,
    used_c: Vec<f64>,
    used_b: Vec<u64>,
    score: Score,
}

fn ratio(used: f64, cap: f64) -> f64 {
    if used == 0.0 {
        0.0
    } else if cap > 0.0 {
        used / cap
    } else {
        f64::INFINITY
    }
}

impl<'a> JointEvaluator<'a> {
    pub fn new(state: &'a SystemState, n_admissible_edges: usize, mu: [f64; 4]) -> Self {
        let n = state.nodes.len();
        JointEvaluator {
            state,
            mu,
            n_nodes: n,
            edges: HashMap::new(),
            from: vec![Vec::new(); n + 2],
            used_c: vec![0.0; n],
            used_b: vec![0; n],
            score: Score {
                reward: n_admissible_edges as f64,
                cost: 0.0,
                energy: 0.0,
                violated_edges: 0,
                violated_pairs: 0,
            },
        }
    }

    pub fn score(&self) -> Score {
        self.score
    }

    fn contribution(&self, u: VertexId, agg: &EdgeAgg, dc: f64, db: u64) -> Contribution {
        let (f4, f5) = match dyngraph::vertex_node(u, self.n_nodes) {
            Some(k) => (
                ratio(self.used_c[k] + dc, self.state.nodes[k].compute),
                ratio((self.used_b[k] + db) as f64, self.state.nodes[k].blocks as f64),
            ),
            None => (0.0, 0.0),
        };
        let f = [agg.f2, agg.f3, f4, f5];
        let pairs = f.iter().filter(|x| **x > 1.0).count();
        let psi = if pairs == 0 { 1.0 } else { -1.0 };
        let cost = f.iter().zip(&self.mu).map(|(x, m)| x * m).sum();
        Contribution { reward: psi / (1.0 + agg.f1), cost, violated: (pairs > 0) as usize, pairs }
    }

    fn idle() -> Contribution {
        Contribution { reward: 1.0, cost: 0.0, violated: 0, pairs: 0 }
    }

    fn usage_of(ev: &AppEval, k: usize) -> (f64, u64) {
        let c = ev.compute.iter().filter(|(n, _)| *n == k).map(|(_, c)| *c).sum();
        let b = ev.blocks.iter().filter(|(n, _)| *n == k).map(|(_, b)| *b as u64).sum();
        (c, b)
    }

    /// Edges whose attributes change when `ev` is added.
    fn affected(&self, ev: &AppEval) -> Vec<(VertexId, VertexId)> {
        let mut keys: Vec<(VertexId, VertexId)> = ev.edges.clone();
        let nodes = ev.compute.iter().map(|(k, _)| *k).chain(ev.blocks.iter().map(|(k, _)| *k));
        for k in nodes {
            for e in &self.from[dyngraph::node_vertex(k)] {
                if !keys.contains(e) {
                    keys.push(*e);
                }
            }
        }
        keys
    }

    fn new_agg(&self, ev: &AppEval, key: &(VertexId, VertexId)) -> EdgeAgg {
        let mut agg = self.edges.get(key).copied().unwrap_or_default();
        if let Some(i) = ev.edges.iter().position(|e| e == key) {
            agg.f1 += ev.edge_energy[i];
            agg.f2 = agg.f2.max(ev.f2);
            agg.f3 = agg.f3.max(ev.f3);
        }
        agg
    }

    /// Score after adding `ev`, without modifying the evaluator.
    pub fn with(&self, ev: &AppEval) -> Score {
        let mut s = self.score;
        for key in self.affected(ev) {
            let old = match self.edges.get(&key) {
                Some(agg) => self.contribution(key.0, agg, 0.0, 0),
                None => Self::idle(),
            };
            let (dc, db) = match dyngraph::vertex_node(key.0, self.n_nodes) {
                Some(k) => Self::usage_of(ev, k),
                None => (0.0, 0),
            };
            let new = self.contribution(key.0, &self.new_agg(ev, &key), dc, db);
            s.reward += new.reward - old.reward;
            s.cost += new.cost - old.cost;
            s.violated_edges = s.violated_edges + new.violated - old.violated;
            s.violated_pairs = s.violated_pairs + new.pairs - old.pairs;
        }
        s.energy += ev.energy;
        s
    }

    pub fn push(&mut self, ev: &AppEval) {
        let score = self.with(ev);
        for key in &ev.edges {
            let agg = self.new_agg(ev, key);
            if self.edges.insert(*key, agg).is_none() {
                self.from[key.0].push(*key);
            }
        }
        for &(k, c) in &ev.compute {
            self.used_c[k] += c;
        }
        for &(k, b) in &ev.blocks {
            self.used_b[k] += b as u64;
        }
        self.score = score;
    }

    /// Whether adding `ev` keeps every node within capacity.
    pub fn fits(&self, ev: &AppEval) -> bool {
        ev.compute.iter().all(|&(k, c)| self.used_c[k] + c <= self.state.nodes[k].compute)
            && ev.blocks.iter().all(|&(k, b)| self.used_b[k] + b as u64 <= self.state.nodes[k].blocks as u64)
    }
}

/// Scores a full choice of one candidate per application.
pub fn joint_score(sets: &[AppCandidates], choice: &[usize], state: &SystemState, n_edges: usize, mu: [f64; 4]) -> Score {
    let mut j = JointEvaluator::new(state, n_edges, mu);
    for (s, &i) in sets.iter().zip(choice) {
        j.push(&s.candidates[i].eval);
    }
    j.score()
}
