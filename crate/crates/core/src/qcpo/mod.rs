//! Quantile-constrained policy optimization: reward and cost on graph
//! snapshots, cumulative-cost quantiles, and the per-slot learner.

pub mod action_space;
pub mod adam;
pub mod learner;
pub mod mlp;
pub mod tail;

use crate::dyngraph::GraphSnapshot;

pub use action_space::{ActionId, AppCandidates, JointEvaluator, Score};
pub use learner::{
    advantages, discounted_returns, policy_distribution, ppo_gradient, select_action, Experience, LogRow,
    QcpoLearner, QcpoParams, SlotDecision,
};
pub use tail::{cumulative_cost_quantile, WeibullTail};

/// `sum_e psi(e) / (1 + f1(e))` with `psi = +1` when every constraint
/// attribute of the edge is at most 1 and `-1` otherwise.
pub fn edge_reward(f: &[f64; 5]) -> f64 {
    let psi = if f[1..].iter().all(|x| *x <= 1.0) { 1.0 } else { -1.0 };
    psi / (1.0 + f[0])
}

pub fn reward(g: &GraphSnapshot) -> f64 {
    g.edges().iter().map(|e| edge_reward(&e.attrs)).sum()
}

/// `sum_e sum_{j=2..5} mu_j f_j(e)`.
pub fn cost(g: &GraphSnapshot, mu: [f64; 4]) -> f64 {
    g.edges()
        .iter()
        .map(|e| e.attrs[1..].iter().zip(&mu).map(|(f, m)| f * m).sum::<f64>())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_reward_cases() {
        assert_eq!(edge_reward(&[0.0, 0.0, 0.0, 0.0, 0.0]), 1.0);
        assert_eq!(edge_reward(&[1.0, 1.0, 0.5, 0.5, 0.5]), 0.5);
        assert_eq!(edge_reward(&[1.0, 1.2, 0.5, 0.5, 0.5]), -0.5);
        assert_eq!(edge_reward(&[0.0; 5]) + edge_reward(&[0.0, 0.0, 0.0, 0.0, 1.0 + 1e-9]), 0.0);
    }

    #[test]
    fn cost_on_graph() {
        use crate::dyngraph::build_initial;
        use crate::scenario::presets;
        let cfg = presets::small_scale(1);
        let st = cfg.snapshot_at(0).unwrap();
        let g = build_initial(&cfg, &st);
        assert_eq!(cost(&g, [0.25; 4]), 0.0);
        let a = presets::local_assignment(&cfg, 0, 0, &st);
        let g = crate::dyngraph::apply_action(&g, 0, &a, &cfg).unwrap();
        let c = cost(&g, [0.25; 4]);
        assert!(c > 0.0);
        assert!((cost(&g, [0.5; 4]) - 2.0 * c).abs() < 1e-12);
        let by_hand: f64 = g.edges().iter().map(|e| 0.25 * (e.attrs[1] + e.attrs[2] + e.attrs[3] + e.attrs[4])).sum();
        assert!((c - by_hand).abs() < 1e-12);
    }
}
