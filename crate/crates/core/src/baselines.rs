//! Tabular Q-learning and the uniform-random policy.

use nalgebra::DMatrix;
use rand::Rng;

use crate::core_model::argmax;
use crate::envs::{Environment, SimRng};
use crate::error::{arg, Result};
use crate::planner::{run_episode, Agent, EpisodeResult};

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub q: DMatrix<f64>,
    pub alpha_q: f64,
    pub gamma_q: f64,
    pub epsilon: f64,
}

impl QTable {
    pub fn new(n_s: usize, n_a: usize) -> Self {
        QTable { q: DMatrix::zeros(n_s, n_a), alpha_q: 0.1, gamma_q: 0.95, epsilon: 0.1 }
    }

    /// In-place form of [`q_update`].
    pub fn update(&mut self, s: usize, a: usize, r: f64, s_next: usize, terminal: bool) -> Result<()> {
        let (n_s, n_a) = self.q.shape();
        if s >= n_s || s_next >= n_s || a >= n_a {
            return arg(format!("Q update ({s}, {a}, {s_next}) out of range"));
        }
        let bootstrap = if terminal { 0.0 } else { self.gamma_q * self.q.row(s_next).max() };
        let cur = self.q[(s, a)];
        self.q[(s, a)] = cur + self.alpha_q * (r + bootstrap - cur);
        Ok(())
    }

    /// The same table acting greedily.
    pub fn greedy(&self) -> QTable {
        QTable { epsilon: 0.0, ..self.clone() }
    }
}

/// `q(s,a) += α(r + γ max q(s',·) − q(s,a))`, with no bootstrap at terminals.
pub fn q_update(qt: &QTable, s: usize, a: usize, r: f64, s_next: usize, terminal: bool) -> Result<QTable> {
    let mut next = qt.clone();
    next.update(s, a, r, s_next, terminal)?;
    Ok(next)
}

/// Uniform action with probability ε, otherwise the greedy action (lowest index on ties).
pub fn epsilon_greedy(qt: &QTable, s: usize, rng: &mut SimRng) -> usize {
    let n_a = qt.q.ncols();
    if qt.epsilon > 0.0 && rng.gen::<f64>() < qt.epsilon {
        return rng.gen_range(0..n_a);
    }
    let row: Vec<f64> = qt.q.row(s).iter().copied().collect();
    argmax(&row)
}

/// Linear ε decay from `start` to `end` over `episodes`.
pub fn decayed_epsilon(start: f64, end: f64, episode: usize, episodes: usize) -> f64 {
    if episodes <= 1 {
        return end;
    }
    let t = (episode as f64 / (episodes - 1) as f64).min(1.0);
    start + (end - start) * t
}

/// One ε-greedy training episode from the environment's current state,
/// updating the table after every step.
pub fn q_learning_episode(
    env: &mut dyn Environment,
    qt: &mut QTable,
    start: usize,
    step_cap: usize,
    rng: &mut SimRng,
) -> Result<(f64, bool)> {
    let mut s = start;
    let mut total = 0.0;
    for _ in 0..step_cap {
        let a = epsilon_greedy(qt, s, rng);
        let out = env.step(a, rng);
        qt.update(s, a, out.reward, out.state, out.done)?;
        total += out.reward;
        s = out.state;
        if out.done {
            return Ok((total, true));
        }
    }
    Ok((total, false))
}

/// Uniformly random actions from the task start until the goal or `step_cap`.
pub fn random_rollout(env: &mut dyn Environment, step_cap: usize, rng: &mut SimRng) -> Result<EpisodeResult> {
    run_episode(env, Agent::Random, step_cap, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn update_rules() {
        let qt = QTable { alpha_q: 0.5, ..QTable::new(2, 2) };
        let next = q_update(&qt, 0, 1, 100.0, 1, true).unwrap();
        assert_eq!(next.q[(0, 1)], 50.0);
        assert_eq!(next.q.row(1), qt.q.row(1));
        assert!(q_update(&qt, 2, 0, 0.0, 0, false).is_err());
    }

    #[test]
    fn greedy_ties_take_lowest() {
        let qt = QTable { epsilon: 0.0, ..QTable::new(1, 3) };
        let mut rng = SimRng::seed_from_u64(0);
        assert_eq!(epsilon_greedy(&qt, 0, &mut rng), 0);
    }

    #[test]
    fn two_state_chain_matches_value_iteration() {
        // State 0 -a1-> 1 (terminal, reward 1); a0 stays in 0 with reward 0.
        let mut qt = QTable { alpha_q: 0.5, gamma_q: 0.9, ..QTable::new(2, 2) };
        for _ in 0..200 {
            qt.update(0, 1, 1.0, 1, true).unwrap();
            qt.update(0, 0, 0.0, 0, false).unwrap();
        }
        assert!((qt.q[(0, 1)] - 1.0).abs() < 1e-6);
        assert!((qt.q[(0, 0)] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn epsilon_decays_linearly() {
        assert_eq!(decayed_epsilon(0.1, 0.01, 0, 10), 0.1);
        assert!((decayed_epsilon(0.1, 0.01, 9, 10) - 0.01).abs() < 1e-15);
    }
}
