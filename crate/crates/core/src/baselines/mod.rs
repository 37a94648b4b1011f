//! Reference solvers: exact exhaustive search and Monte Carlo tree search
//! over the same discretized action space the learner uses.

pub mod exhaustive;
pub mod mctp;

use serde::{Deserialize, Serialize};

use crate::perf::Configuration;
use crate::qcpo::action_space::{self, ActionId, AppCandidates, Score};
use crate::scenario::{ScenarioConfig, SystemState};

pub use exhaustive::{exhaustive_on, exhaustive_optimum, DEFAULT_CAP};
pub use mctp::{mctp_on, mctp_solve, MctpOutcome, SearchBudget};

/// Cost weights used when scoring baseline solutions.
pub const SCORE_MU: [f64; 4] = [0.25; 4];

/// One candidate per application, with its joint score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub choice: Vec<usize>,
    pub ids: Vec<ActionId>,
    pub configuration: Configuration,
    pub score: Score,
}

impl Solution {
    pub fn new(cfg: &ScenarioConfig, state: &SystemState, sets: &[AppCandidates], choice: Vec<usize>, n_edges: usize) -> Self {
        let ids = choice.iter().zip(sets).map(|(&i, s)| s.candidates[i].id).collect();
        let configuration = action_space::configuration_of(cfg, sets, &choice);
        let score = action_space::joint_score(sets, &choice, state, n_edges, SCORE_MU);
        Solution { choice, ids, configuration, score }
    }

    pub fn feasible(&self) -> bool {
        self.score.feasible()
    }
}
