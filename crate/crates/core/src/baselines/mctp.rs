//! Monte Carlo tree search over the per-application decision tries
//! (option, stem host, branch host, compute level, block level), chained
//! across applications.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyngraph;
use crate::error::{Error, Result};
use crate::qcpo::action_space::{self, ActionId, AppCandidates, JointEvaluator};
use crate::scenario::{ScenarioConfig, SystemState};

use super::{Solution, SCORE_MU};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub max_iterations: usize,
    pub max_wall_time: Option<Duration>,
    /// UCT exploration constant.
    pub exploration: f64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget { max_iterations: 10_000, max_wall_time: None, exploration: std::f64::consts::SQRT_2 }
    }
}

impl SearchBudget {
    pub fn iterations(n: usize) -> Self {
        SearchBudget { max_iterations: n, ..Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MctpOutcome {
    /// Lowest-energy feasible leaf seen, otherwise the highest-value one.
    pub solution: Solution,
    pub iterations: usize,
    /// Iteration at which `solution` was first reached.
    pub found_at: usize,
}

impl MctpOutcome {
    pub fn feasible(&self) -> bool {
        self.solution.feasible()
    }
}

/// Decision trie of one application. Node 0 is the root; a node either has
/// children or is a leaf holding a candidate index.
#[derive(Debug)]
struct Trie {
    children: Vec<Vec<usize>>,
    leaf: Vec<Option<usize>>,
}

fn level_key(id: &ActionId, depth: usize) -> usize {
    match depth {
        0 => id.option,
        1 => id.stem_host,
        2 => id.branch_host,
        3 => id.c_level as usize,
        _ => id.b_level as usize,
    }
}

impl Trie {
    fn build(set: &AppCandidates) -> Trie {
        let mut t = Trie { children: vec![Vec::new()], leaf: vec![None] };
        let all: Vec<usize> = (0..set.candidates.len()).collect();
        t.grow(0, &all, 0, set);
        t
    }

    /// `idx` is sorted by id, so equal keys at `depth` are contiguous.
    fn grow(&mut self, node: usize, idx: &[usize], depth: usize, set: &AppCandidates) {
        if depth == 5 {
            self.leaf[node] = Some(idx[0]);
            return;
        }
        let mut start = 0;
        while start < idx.len() {
            let key = level_key(&set.candidates[idx[start]].id, depth);
            let mut end = start + 1;
            while end < idx.len() && level_key(&set.candidates[idx[end]].id, depth) == key {
                end += 1;
            }
            let child = self.children.len();
            self.children.push(Vec::new());
            self.leaf.push(None);
            self.children[node].push(child);
            self.grow(child, &idx[start..end], depth + 1, set);
            start = end;
        }
    }
}

const UNEXPANDED: u32 = u32::MAX;

/// Search-tree node: position `tnode` in the trie of application `app`.
/// `app == tries.len()` marks a complete configuration.
struct Node {
    app: usize,
    tnode: usize,
    /// Candidate fixed on entering this node, if it closed an application.
    picked: Option<usize>,
    children: Vec<u32>,
    expanded: usize,
    visits: f64,
    total: f64,
}

/// Runs MCTS at slot `t` with a seeded generator.
pub fn mctp_solve(cfg: &ScenarioConfig, t: usize, budget: SearchBudget, seed: u64) -> Result<MctpOutcome> {
    let state = cfg.snapshot_at(t)?;
    let sets = action_space::enumerate_all(cfg, &state)?;
    mctp_on(cfg, &state, &sets, budget, seed)
}

pub fn mctp_on(
    cfg: &ScenarioConfig,
    state: &SystemState,
    sets: &[AppCandidates],
    budget: SearchBudget,
    seed: u64,
) -> Result<MctpOutcome> {
    if budget.max_iterations == 0 {
        return Err(Error::InvalidParameter("search budget needs at least one iteration".into()));
    }
    if let Some(s) = sets.iter().find(|s| s.candidates.is_empty()) {
        return Err(Error::EmptyActionSpace(cfg.applications[s.app].id.clone()));
    }
    let n_edges = dyngraph::admissible_edges(cfg).len();
    let tries: Vec<Trie> = sets.iter().map(Trie::build).collect();
    let h_max = tries.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = vec![new_node(&tries, 0, 0, None)];
    let started = Instant::now();

    // (feasible, energy, value, choice, iteration)
    let mut best: Option<(bool, f64, f64, Vec<usize>, usize)> = None;
    let mut iterations = 0;
    let mut choice = Vec::with_capacity(h_max);
    let mut path = Vec::new();

    while iterations < budget.max_iterations {
        if iterations % 64 == 0 {
            if let Some(limit) = budget.max_wall_time {
                if iterations > 0 && started.elapsed() >= limit {
                    break;
                }
            }
        }
        iterations += 1;
        choice.clear();
        path.clear();
        let mut cur = 0usize;
        path.push(cur);

        // selection
        loop {
            let n = &nodes[cur];
            if n.app == h_max || n.expanded < n.children.len() {
                break;
            }
            let ln = n.visits.ln();
            let mut pick = 0;
            let mut best_u = f64::NEG_INFINITY;
            for &c in &n.children {
                let ch = &nodes[c as usize];
                let u = ch.total / ch.visits + budget.exploration * (ln / ch.visits).sqrt();
                if u > best_u {
                    best_u = u;
                    pick = c as usize;
                }
            }
            cur = pick;
            if let Some(c) = nodes[cur].picked {
                choice.push(c);
            }
            path.push(cur);
        }

        // expansion
        if nodes[cur].app < h_max {
            let n = &nodes[cur];
            let remaining: Vec<usize> = (0..n.children.len()).filter(|&k| n.children[k] == UNEXPANDED).collect();
            let k = remaining[rng.random_range(0..remaining.len())];
            let (app, tnode) = (n.app, n.tnode);
            let tchild = tries[app].children[tnode][k];
            let child = match tries[app].leaf[tchild] {
                Some(c) => new_node(&tries, app + 1, 0, Some(c)),
                None => new_node(&tries, app, tchild, None),
            };
            let id = nodes.len() as u32;
            nodes.push(child);
            nodes[cur].children[k] = id;
            nodes[cur].expanded += 1;
            cur = id as usize;
            if let Some(c) = nodes[cur].picked {
                choice.push(c);
            }
            path.push(cur);
        }

        // rollout
        let (mut app, mut tnode) = (nodes[cur].app, nodes[cur].tnode);
        while app < h_max {
            let tr = &tries[app];
            let mut t = tnode;
            while tr.leaf[t].is_none() {
                let ch = &tr.children[t];
                t = ch[rng.random_range(0..ch.len())];
            }
            choice.push(tr.leaf[t].unwrap());
            app += 1;
            tnode = 0;
        }

        let score = {
            let mut j = JointEvaluator::new(state, n_edges, SCORE_MU);
            for (s, &i) in sets.iter().zip(&choice) {
                j.push(&s.candidates[i].eval);
            }
            j.score()
        };
        let value = (score.reward - score.violated_pairs as f64) / n_edges as f64;
        let feasible = score.feasible();
        let improves = match &best {
            None => true,
            Some((bf, be, bv, _, _)) => match (feasible, *bf) {
                (true, false) => true,
                (false, true) => false,
                (true, true) => score.energy < *be || (score.energy == *be && value > *bv),
                (false, false) => value > *bv,
            },
        };
        if improves {
            best = Some((feasible, score.energy, value, choice.clone(), iterations));
        }

        for &p in &path {
            nodes[p].visits += 1.0;
            nodes[p].total += value;
        }
    }

    let (_, _, _, choice, found_at) = best.expect("at least one iteration ran");
    Ok(MctpOutcome { solution: Solution::new(cfg, state, sets, choice, n_edges), iterations, found_at })
}

fn new_node(tries: &[Trie], app: usize, tnode: usize, picked: Option<usize>) -> Node {
    let width = if app < tries.len() { tries[app].children[tnode].len() } else { 0 };
    Node { app, tnode, picked, children: vec![UNEXPANDED; width], expanded: 0, visits: 0.0, total: 0.0 }
}
