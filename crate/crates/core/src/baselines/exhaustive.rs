//! Exact minimum-energy search over the discretized joint action space.

use crate::dyngraph;
use crate::error::{Error, Result};
use crate::qcpo::action_space::{self, AppCandidates, Candidate};
use crate::scenario::{ScenarioConfig, SystemState};

use super::Solution;

pub const DEFAULT_CAP: f64 = 1e7;

/// Candidates that can be feasible in some joint configuration: they meet
/// their own accuracy and latency targets and fit the nodes' capacities on
/// their own. Returned sorted by (energy, id).
pub fn screen(set: &AppCandidates, state: &SystemState) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..set.candidates.len())
        .filter(|&i| {
            let ev = &set.candidates[i].eval;
            ev.meets_targets()
                && ev.compute.iter().all(|&(n, c)| c <= state.nodes[n].compute)
                && ev.blocks.iter().all(|&(n, b)| b <= state.nodes[n].blocks)
        })
        .collect();
    let key = |i: &usize| -> (f64, action_space::ActionId) {
        let c: &Candidate = &set.candidates[*i];
        (c.eval.energy, c.id)
    };
    idx.sort_by(|a, b| key(a).0.total_cmp(&key(b).0).then(key(a).1.cmp(&key(b).1)));
    idx
}

/// Minimum-energy feasible configuration at slot `t`, `None` when nothing is
/// feasible. Refuses when the screened joint space exceeds `cap`.
pub fn exhaustive_optimum(cfg: &ScenarioConfig, t: usize, cap: f64) -> Result<Option<Solution>> {
    let state = cfg.snapshot_at(t)?;
    let sets = action_space::enumerate_all(cfg, &state)?;
    exhaustive_on(cfg, &state, &sets, cap)
}

pub fn exhaustive_on(
    cfg: &ScenarioConfig,
    state: &SystemState,
    sets: &[AppCandidates],
    cap: f64,
) -> Result<Option<Solution>> {
    let lists: Vec<Vec<usize>> = sets.iter().map(|s| screen(s, state)).collect();
    let size: f64 = lists.iter().map(|l| l.len() as f64).product();
    if size > cap {
        return Err(Error::CapExceeded { size, cap });
    }
    if lists.iter().any(|l| l.is_empty()) {
        return Ok(None);
    }
    // min_rest[h] = lowest energy obtainable by apps h.. ignoring coupling
    let mut min_rest = vec![0.0; sets.len() + 1];
    for h in (0..sets.len()).rev() {
        min_rest[h] = min_rest[h + 1] + sets[h].candidates[lists[h][0]].eval.energy;
    }
    let mut search = Search {
        sets,
        lists: &lists,
        min_rest: &min_rest,
        used_c: vec![0.0; state.nodes.len()],
        used_b: vec![0; state.nodes.len()],
        state,
        choice: Vec::with_capacity(sets.len()),
        best: None,
    };
    search.dfs(0, 0.0);
    let Some((_, choice)) = search.best else { return Ok(None) };
    let n_edges = dyngraph::admissible_edges(cfg).len();
    Ok(Some(Solution::new(cfg, state, sets, choice, n_edges)))
}

struct Search<'a> {
    sets: &'a [AppCandidates],
    lists: &'a [Vec<usize>],
    min_rest: &'a [f64],
    state: &'a SystemState,
    used_c: Vec<f64>,
    used_b: Vec<u64>,
    choice: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl Search<'_> {
    fn better(&self, energy: f64) -> bool {
        match &self.best {
            None => true,
            Some((e, c)) => {
                energy < *e || (energy == *e && self.ids(&self.choice) < self.ids(c))
            }
        }
    }

    fn ids(&self, choice: &[usize]) -> Vec<action_space::ActionId> {
        choice.iter().enumerate().map(|(h, &i)| self.sets[h].candidates[i].id).collect()
    }

    fn dfs(&mut self, h: usize, energy: f64) {
        if h == self.sets.len() {
            if self.better(energy) {
                self.best = Some((energy, self.choice.clone()));
            }
            return;
        }
        for &i in &self.lists[h] {
            let ev = &self.sets[h].candidates[i].eval;
            let e = energy + ev.energy;
            if let Some((best, _)) = &self.best {
                // lists are energy-sorted, so nothing later in this list helps
                if e + self.min_rest[h + 1] > *best {
                    break;
                }
            }
            let fits = ev.compute.iter().all(|&(n, c)| self.used_c[n] + c <= self.state.nodes[n].compute)
                && ev.blocks.iter().all(|&(n, b)| self.used_b[n] + b as u64 <= self.state.nodes[n].blocks as u64);
            if !fits {
                continue;
            }
            for &(n, c) in &ev.compute {
                self.used_c[n] += c;
            }
            for &(n, b) in &ev.blocks {
                self.used_b[n] += b as u64;
            }
            self.choice.push(i);
            self.dfs(h + 1, e);
            self.choice.pop();
            for &(n, c) in &ev.compute {
                self.used_c[n] -= c;
            }
            for &(n, b) in &ev.blocks {
                self.used_b[n] -= b as u64;
            }
        }
    }
}
