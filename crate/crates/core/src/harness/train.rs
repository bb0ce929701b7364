//! Model learning from random exploration.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::abstraction::{decompose, DecomposeConfig, MacroDecomposition};
use crate::core_model::{
    argmax, normalize_counts, uniform, GenerativeModel, Trajectory, Transition, TransitionCounts,
};
use crate::envs::{Environment, SimRng};
use crate::error::Result;
use crate::successor::{analytic_sr, default_transition, SuccessorMatrix};

/// Pseudo-count behind the transition model used for filtering during exploration.
const FILTER_PRIOR: f64 = 0.01;

/// Accumulates transition counts, the successor matrix and the experience
/// used for macro discovery. Under observation noise every quantity is
/// learned from the most probable state of the filtered belief.
#[derive(Debug, Clone)]
pub struct Learner {
    pub counts: TransitionCounts,
    pub sr: SuccessorMatrix,
    pub likelihood: DMatrix<f64>,
    pub experience: Trajectory,
    observable: bool,
    filter_b: Vec<DMatrix<f64>>,
    /// Transition model given a priori; counts are still kept.
    known_b: Option<Vec<DMatrix<f64>>>,
}

impl Learner {
    pub fn new(env: &dyn Environment, gamma: f64, alpha: f64) -> Result<Self> {
        let likelihood = env.likelihood();
        let n = env.n_states();
        let observable = likelihood.is_square() && likelihood == DMatrix::identity(n, n);
        Ok(Learner {
            counts: TransitionCounts::zeros(n, env.n_actions()),
            sr: SuccessorMatrix::identity(n, gamma, alpha)?,
            likelihood,
            experience: Trajectory::new(),
            observable,
            filter_b: Vec::new(),
            known_b: None,
        })
    }

    /// Uses `b` for filtering and as the model's `B` instead of the counts.
    pub fn with_known_transitions(mut self, b: Vec<DMatrix<f64>>) -> Self {
        self.filter_b = b.clone();
        self.known_b = Some(b);
        self
    }

    pub fn n_states(&self) -> usize {
        self.sr.n()
    }

    pub fn observable(&self) -> bool {
        self.observable
    }

    fn refresh_filter(&mut self) {
        let n = self.n_states();
        self.filter_b = self
            .counts
            .counts
            .iter()
            .map(|c| {
                let mut b = DMatrix::zeros(n, n);
                for j in 0..n {
                    let total: u64 = c.column(j).iter().sum();
                    let denom = total as f64 + FILTER_PRIOR * n as f64;
                    for i in 0..n {
                        b[(i, j)] = (c[(i, j)] as f64 + FILTER_PRIOR) / denom;
                    }
                }
                b
            })
            .collect();
    }

    fn posterior(&self, prior: &DVector<f64>, obs: usize) -> DVector<f64> {
        let mut post = prior.component_mul(&self.likelihood.row(obs).transpose());
        let z = post.sum();
        if z > 0.0 {
            post /= z;
        } else {
            post = self.likelihood.row(obs).transpose() / self.likelihood.row(obs).sum();
        }
        post
    }

    /// One exploration episode from a uniformly random start. Each random
    /// action is held for `repeat` steps. The episode ends early only when the
    /// environment's goal is absorbing.
    pub fn explore(&mut self, env: &mut dyn Environment, steps: usize, repeat: usize, rng: &mut SimRng) -> Result<()> {
        let (_, obs) = env.reset_random(rng);
        if !self.observable && self.known_b.is_none() {
            self.refresh_filter();
        }
        let mut belief = if self.observable {
            None
        } else {
            Some(self.posterior(&uniform(self.n_states()), obs))
        };
        let mut s_hat = match &belief {
            Some(b) => argmax(b.as_slice()),
            None => obs,
        };
        let n_a = env.n_actions();
        let mut action = 0;
        for t in 0..steps {
            if t % repeat.max(1) == 0 {
                action = rng.gen_range(0..n_a);
            }
            let out = env.step(action, rng);
            let next_hat = match belief.as_mut() {
                Some(b) => {
                    let predicted = &self.filter_b[action] * &*b;
                    *b = self.posterior(&predicted, out.observation);
                    argmax(b.as_slice())
                }
                None => out.observation,
            };
            self.counts.record(s_hat, action, next_hat)?;
            self.sr.update(s_hat, next_hat)?;
            self.experience.push(Transition {
                state: s_hat,
                action,
                next_state: next_hat,
                observation: out.observation,
                reward: out.reward,
            });
            s_hat = next_hat;
            if out.done && env.goal_is_absorbing() {
                break;
            }
        }
        Ok(())
    }

    /// The learned generative model with the environment's likelihood and a
    /// uniform initial-state prior.
    pub fn model(&self, c: DVector<f64>) -> Result<GenerativeModel> {
        let n = self.n_states();
        let b = self.known_b.clone().unwrap_or_else(|| normalize_counts(&self.counts));
        GenerativeModel::new(self.likelihood.clone(), b, c, uniform(n))
    }

    pub fn decompose(&self, model: &GenerativeModel, goals: &[usize], cfg: &DecomposeConfig) -> Result<MacroDecomposition> {
        decompose(model, &self.sr, &self.experience, goals, cfg)
    }
}

/// Successor matrix of the uniform random policy under known dynamics.
pub fn reference_sr(dynamics: &[DMatrix<f64>], gamma: f64) -> Result<SuccessorMatrix> {
    analytic_sr(&default_transition(dynamics), gamma)
}

/// Stationary distribution of a row-stochastic matrix by power iteration,
/// started from uniform.
pub fn stationary(t: &DMatrix<f64>) -> DVector<f64> {
    let n = t.nrows();
    let mut p = uniform(n);
    for _ in 0..5000 {
        let next = t.tr_mul(&p);
        let next = (&next + &p) * 0.5;
        if (&next - &p).amax() < 1e-13 {
            return next;
        }
        p = next;
    }
    p
}

/// Macro successor matrix implied by the true dynamics: the cluster-to-cluster
/// flow of the stationary random walk, row-normalized, then inverted.
pub fn reference_macro_sr(dynamics: &[DMatrix<f64>], labels: &[usize], k: usize, gamma: f64) -> Result<SuccessorMatrix> {
    let t = default_transition(dynamics);
    let pi = stationary(&t);
    let mut flow = DMatrix::<f64>::zeros(k, k);
    for s in 0..t.nrows() {
        for s2 in 0..t.ncols() {
            let (i, j) = (labels[s], labels[s2]);
            if i != j {
                flow[(i, j)] += pi[s] * t[(s, s2)];
            }
        }
    }
    for i in 0..k {
        let total = flow.row(i).sum();
        if total > 0.0 {
            let row = flow.row(i) / total;
            flow.set_row(i, &row);
        } else {
            flow[(i, i)] = 1.0;
        }
    }
    analytic_sr(&flow, gamma)
}
