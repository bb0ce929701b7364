//! Mountain Car with the classic-control update and a uniform position ×
//! velocity grid as the discrete state.

use nalgebra::DMatrix;
use rand::Rng;

use super::{Environment, SimRng, StepOutcome};
use crate::error::{arg, Result};

pub const PUSH_LEFT: usize = 0;
pub const NO_PUSH: usize = 1;
pub const PUSH_RIGHT: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct MountainCarSpec {
    pub x_range: (f64, f64),
    pub v_range: (f64, f64),
    pub goal_x: f64,
    pub bins_x: usize,
    pub bins_v: usize,
    pub action_repeat: usize,
    pub step_cap: usize,
}

impl Default for MountainCarSpec {
    fn default() -> Self {
        MountainCarSpec {
            x_range: (-1.2, 0.6),
            v_range: (-0.07, 0.07),
            goal_x: 0.5,
            bins_x: 10,
            bins_v: 10,
            action_repeat: 5,
            step_cap: 200,
        }
    }
}

impl MountainCarSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bins_x < 2 || self.bins_v < 2 {
            return arg("mountain car needs at least two bins per dimension");
        }
        if !(self.x_range.0 < self.x_range.1 && self.v_range.0 < self.v_range.1) {
            return arg("mountain car ranges must be ordered");
        }
        if self.action_repeat == 0 {
            return arg("action repeat must be positive");
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.bins_x * self.bins_v
    }

    /// Centre of a bin, the inverse of [`mc_discretize`].
    pub fn bin_center(&self, state: usize) -> (f64, f64) {
        let (bx, bv) = (state / self.bins_v, state % self.bins_v);
        let wx = (self.x_range.1 - self.x_range.0) / self.bins_x as f64;
        let wv = (self.v_range.1 - self.v_range.0) / self.bins_v as f64;
        (self.x_range.0 + (bx as f64 + 0.5) * wx, self.v_range.0 + (bv as f64 + 0.5) * wv)
    }
}

/// `v' = clamp(v + 0.001(a − 1) − 0.0025 cos 3x)`, `x' = clamp(x + v')`,
/// with the velocity zeroed against the left wall.
pub fn mountain_car_step(spec: &MountainCarSpec, x: f64, v: f64, action: usize) -> (f64, f64, f64, bool) {
    let force = action.min(2) as f64 - 1.0;
    let mut v2 = (v + 0.001 * force - 0.0025 * (3.0 * x).cos()).clamp(spec.v_range.0, spec.v_range.1);
    let x2 = (x + v2).clamp(spec.x_range.0, spec.x_range.1);
    if x2 <= spec.x_range.0 {
        v2 = 0.0;
    }
    let done = x2 >= spec.goal_x;
    (x2, v2, if done { 0.0 } else { -1.0 }, done)
}

fn bin(value: f64, (lo, hi): (f64, f64), bins: usize) -> usize {
    let t = ((value - lo) / (hi - lo) * bins as f64).floor();
    (t.max(0.0) as usize).min(bins - 1)
}

/// Uniform binning; the upper edges fall into the last bin.
pub fn mc_discretize(spec: &MountainCarSpec, x: f64, v: f64) -> usize {
    bin(x, spec.x_range, spec.bins_x) * spec.bins_v + bin(v, spec.v_range, spec.bins_v)
}

#[derive(Debug, Clone)]
pub struct MountainCar {
    pub spec: MountainCarSpec,
    pub x: f64,
    pub v: f64,
}

impl MountainCar {
    pub fn new(spec: MountainCarSpec) -> Result<Self> {
        spec.validate()?;
        Ok(MountainCar { spec, x: -0.5, v: 0.0 })
    }

    pub fn set(&mut self, x: f64, v: f64) {
        self.x = x;
        self.v = v;
    }
}

impl Environment for MountainCar {
    fn n_states(&self) -> usize {
        self.spec.n_states()
    }

    fn n_actions(&self) -> usize {
        3
    }

    fn likelihood(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n_states(), self.n_states())
    }

    /// Every bin whose position range reaches the goal threshold.
    fn goal_observations(&self) -> Vec<usize> {
        let first = bin(self.spec.goal_x, self.spec.x_range, self.spec.bins_x);
        (first..self.spec.bins_x)
            .flat_map(|bx| (0..self.spec.bins_v).map(move |bv| (bx, bv)))
            .map(|(bx, bv)| bx * self.spec.bins_v + bv)
            .collect()
    }

    fn reset(&mut self, rng: &mut SimRng) -> (usize, usize) {
        self.set(rng.gen_range(-0.6..-0.4), 0.0);
        let s = self.state();
        (s, s)
    }

    fn reset_random(&mut self, rng: &mut SimRng) -> (usize, usize) {
        let (x0, _) = self.spec.x_range;
        self.set(rng.gen_range(x0..self.spec.goal_x), rng.gen_range(self.spec.v_range.0..self.spec.v_range.1));
        let s = self.state();
        (s, s)
    }

    fn state(&self) -> usize {
        mc_discretize(&self.spec, self.x, self.v)
    }

    fn step(&mut self, action: usize, _rng: &mut SimRng) -> StepOutcome {
        let (x, v, reward, done) = mountain_car_step(&self.spec, self.x, self.v, action);
        self.set(x, v);
        let s = self.state();
        StepOutcome { state: s, observation: s, reward, done }
    }

    fn goal_is_absorbing(&self) -> bool {
        true
    }

    fn coordinates(&self) -> DMatrix<f64> {
        let (bx, bv) = ((self.spec.bins_x - 1) as f64, (self.spec.bins_v - 1) as f64);
        DMatrix::from_fn(self.n_states(), 2, |s, d| match d {
            0 => (s / self.spec.bins_v) as f64 / bx,
            _ => (s % self.spec.bins_v) as f64 / bv,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_update() {
        let spec = MountainCarSpec::default();
        let (x, v, r, done) = mountain_car_step(&spec, -0.5, 0.0, PUSH_RIGHT);
        assert!((v - 0.000823157).abs() < 1e-8, "{v}");
        assert!((x + 0.499177).abs() < 1e-6, "{x}");
        assert_eq!((r, done), (-1.0, false));
    }

    #[test]
    fn left_wall_stops_the_car() {
        let spec = MountainCarSpec::default();
        let (x, v, _, _) = mountain_car_step(&spec, -1.19, -0.05, PUSH_LEFT);
        assert_eq!((x, v), (-1.2, 0.0));
    }

    #[test]
    fn goal_terminates_with_zero_reward() {
        let spec = MountainCarSpec::default();
        let (x, _, r, done) = mountain_car_step(&spec, 0.49, 0.05, PUSH_RIGHT);
        assert!(x >= 0.5);
        assert_eq!((r, done), (0.0, true));
    }

    #[test]
    fn discretization_edges() {
        let spec = MountainCarSpec::default();
        assert_eq!(mc_discretize(&spec, -1.2, -0.07), 0);
        assert_eq!(mc_discretize(&spec, 0.6, 0.07), 99);
        for s in 0..spec.n_states() {
            let (x, v) = spec.bin_center(s);
            assert_eq!(mc_discretize(&spec, x, v), s);
        }
    }
}
