//! Benchmark environments and their discretizations.

pub mod grid;
pub mod layout;
pub mod mountain_car;
pub mod pointmaze;

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;

pub use grid::{grid_observe, grid_step, GridSpec, GridWorld};
pub use layout::{Cell, Layout};
pub use mountain_car::{mc_discretize, mountain_car_step, MountainCar, MountainCarSpec};
pub use pointmaze::{pm_discretize, pointmaze_step, PointMaze, PointMazeSpec, SmoothEvent};

/// Random stream used by every simulator.
pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: usize,
    pub observation: usize,
    pub reward: f64,
    pub done: bool,
}

/// A discrete-state view of an environment. Continuous simulators expose
/// their bin index as the state.
pub trait Environment {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn n_observations(&self) -> usize {
        self.n_states()
    }
    /// The likelihood matrix handed to the agent.
    fn likelihood(&self) -> DMatrix<f64>;
    fn goal_observations(&self) -> Vec<usize>;
    /// Task start; returns (state, observation).
    fn reset(&mut self, rng: &mut SimRng) -> (usize, usize);
    /// Start drawn uniformly over the state space, used for exploration.
    fn reset_random(&mut self, rng: &mut SimRng) -> (usize, usize);
    fn state(&self) -> usize;
    fn step(&mut self, action: usize, rng: &mut SimRng) -> StepOutcome;
    /// Whether reaching the goal physically ends an exploration episode.
    fn goal_is_absorbing(&self) -> bool {
        false
    }
    /// Normalized positions of every state, one row per state.
    fn coordinates(&self) -> DMatrix<f64>;
    /// Ground-truth transition tensor when the dynamics are tabular.
    fn known_dynamics(&self) -> Option<Vec<DMatrix<f64>>> {
        None
    }
}
