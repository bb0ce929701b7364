//! Deterministic gridworlds with optional observation noise and a key.
//!
//! Locations are the open cells in row-major order. With a key cell the state
//! is `location + n · has_key` and a fifth action picks the key up.

use nalgebra::DMatrix;
use rand::Rng;

use super::layout::{Cell, Layout};
use super::{Environment, SimRng, StepOutcome};
use crate::error::{arg, Error, Result};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const UP: usize = 2;
pub const DOWN: usize = 3;
pub const PICKUP: usize = 4;

pub const GOAL_REWARD: f64 = 100.0;
pub const STEP_REWARD: f64 = -0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub layout: Layout,
    pub start: Cell,
    pub goal: Cell,
    pub noise_eta: f64,
    pub noisy_region: Option<(Vec<Cell>, f64)>,
    pub key_cell: Option<Cell>,
}

impl GridSpec {
    /// Uses the layout's markers; `N` cells form the noisy region with `region_eta`.
    pub fn from_layout(layout: Layout, noise_eta: f64, region_eta: Option<f64>) -> Result<Self> {
        let start = layout.start.ok_or_else(|| Error::Config("layout has no start cell".into()))?;
        let goal = layout.goal.ok_or_else(|| Error::Config("layout has no goal cell".into()))?;
        let noisy_region = match region_eta {
            Some(eta) if !layout.noisy.is_empty() => Some((layout.noisy.clone(), eta)),
            _ => None,
        };
        let key_cell = layout.key;
        let spec = GridSpec { layout, start, goal, noise_eta, noisy_region, key_cell };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.layout;
        let mut cells = vec![("start", self.start), ("goal", self.goal)];
        if let Some(k) = self.key_cell {
            cells.push(("key", k));
        }
        for (name, cell) in cells {
            if cell.0 >= l.rows || cell.1 >= l.cols || l.is_wall(cell) {
                return Err(Error::Config(format!("{name} cell {cell:?} is not an open cell")));
            }
        }
        let in_unit = |eta: f64| (0.0..1.0).contains(&eta);
        if !in_unit(self.noise_eta) || self.noisy_region.as_ref().is_some_and(|(_, e)| !in_unit(*e)) {
            return Err(Error::Config("noise levels must lie in [0, 1)".into()));
        }
        if l.distance(self.start, self.goal).is_none() {
            return Err(Error::Config("goal is unreachable from the start".into()));
        }
        if let Some(k) = self.key_cell {
            if l.distance(self.start, k).is_none() || l.distance(k, self.goal).is_none() {
                return Err(Error::Config("key is unreachable".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GridWorld {
    pub spec: GridSpec,
    cells: Vec<Cell>,
    index: Vec<Option<usize>>,
    state: usize,
}

impl GridWorld {
    pub fn new(spec: GridSpec) -> Self {
        let cells = spec.layout.open_cells();
        let mut index = vec![None; spec.layout.rows * spec.layout.cols];
        for (i, &(r, c)) in cells.iter().enumerate() {
            index[r * spec.layout.cols + c] = Some(i);
        }
        let mut world = GridWorld { spec, cells, index, state: 0 };
        world.state = world.start_state();
        world
    }

    pub fn n_locations(&self) -> usize {
        self.cells.len()
    }

    pub fn has_key_variant(&self) -> bool {
        self.spec.key_cell.is_some()
    }

    pub fn location_index(&self, cell: Cell) -> Option<usize> {
        let l = &self.spec.layout;
        if cell.0 >= l.rows || cell.1 >= l.cols {
            return None;
        }
        self.index[cell.0 * l.cols + cell.1]
    }

    /// (cell, has_key) of a state.
    pub fn decode(&self, state: usize) -> (Cell, bool) {
        let n = self.n_locations();
        (self.cells[state % n], state >= n)
    }

    pub fn encode(&self, cell: Cell, has_key: bool) -> Option<usize> {
        self.location_index(cell).map(|i| i + if has_key { self.n_locations() } else { 0 })
    }

    pub fn start_state(&self) -> usize {
        self.encode(self.spec.start, false).expect("validated start")
    }

    pub fn goal_state(&self) -> usize {
        self.encode(self.spec.goal, self.has_key_variant()).expect("validated goal")
    }

    pub fn key_state(&self) -> Option<usize> {
        self.spec.key_cell.map(|k| self.encode(k, false).expect("validated key"))
    }

    pub fn set_goal(&mut self, goal: Cell) -> Result<()> {
        let mut spec = self.spec.clone();
        spec.goal = goal;
        spec.validate()?;
        self.spec = spec;
        Ok(())
    }

    /// Moves the agent to `state` and samples an observation there.
    pub fn place(&mut self, state: usize, rng: &mut SimRng) -> Result<usize> {
        if state >= self.n_states() {
            return arg(format!("state {state} out of range"));
        }
        self.state = state;
        Ok(grid_observe(self, state, rng))
    }

    /// Observation noise at a location.
    pub fn eta_at(&self, cell: Cell) -> f64 {
        match &self.spec.noisy_region {
            Some((cells, eta)) if cells.contains(&cell) => *eta,
            _ => self.spec.noise_eta,
        }
    }

    pub fn set_region_eta(&mut self, eta: f64) -> Result<()> {
        if !(0.0..1.0).contains(&eta) {
            return arg(format!("noise level {eta} outside [0, 1)"));
        }
        let cells = self.spec.layout.noisy.clone();
        if cells.is_empty() {
            return arg("layout has no noisy region");
        }
        self.spec.noisy_region = Some((cells, eta));
        Ok(())
    }

    pub fn in_noisy_region(&self, state: usize) -> bool {
        self.spec.layout.noisy.contains(&self.decode(state).0)
    }

    /// Deterministic ground-truth transition tensor, column convention.
    pub fn true_transitions(&self) -> Vec<DMatrix<f64>> {
        let n = self.n_states();
        (0..self.n_actions())
            .map(|a| {
                let mut b = DMatrix::zeros(n, n);
                for s in 0..n {
                    let (next, _, _) = grid_step(self, s, a).expect("valid state");
                    b[(next, s)] = 1.0;
                }
                b
            })
            .collect()
    }

    /// Shortest number of moves from the start to the goal (including the
    /// pickup action in the key variant).
    pub fn optimal_path_length(&self) -> usize {
        self.shortest_steps(self.start_state(), self.goal_state()).expect("validated path")
    }

    /// Breadth-first search over states using the true dynamics.
    pub fn shortest_steps(&self, from: usize, to: usize) -> Option<usize> {
        let n = self.n_states();
        let mut dist = vec![usize::MAX; n];
        let mut queue = std::collections::VecDeque::from([from]);
        dist[from] = 0;
        while let Some(s) = queue.pop_front() {
            if s == to {
                return Some(dist[s]);
            }
            for a in 0..self.n_actions() {
                let (next, _, _) = grid_step(self, s, a).ok()?;
                if dist[next] == usize::MAX {
                    dist[next] = dist[s] + 1;
                    queue.push_back(next);
                }
            }
        }
        None
    }
}

/// One deterministic move. Walls and the boundary leave the agent in place.
pub fn grid_step(world: &GridWorld, state: usize, action: usize) -> Result<(usize, f64, bool)> {
    if state >= world.n_states() {
        return arg(format!("state {state} out of range"));
    }
    if action >= world.n_actions() {
        return arg(format!("action {action} out of range"));
    }
    let ((r, c), has_key) = world.decode(state);
    let (cell, has_key) = match action {
        PICKUP => ((r, c), has_key || world.spec.key_cell == Some((r, c))),
        _ => {
            let (dr, dc) = [(0isize, -1isize), (0, 1), (-1, 0), (1, 0)][action];
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            let layout = &world.spec.layout;
            let target = (nr as usize, nc as usize);
            if layout.in_bounds(nr, nc) && !layout.is_wall(target) {
                (target, has_key)
            } else {
                ((r, c), has_key)
            }
        }
    };
    let next = world.encode(cell, has_key).expect("open cell");
    let reached = cell == world.spec.goal && (has_key || !world.has_key_variant());
    let reward = if reached { GOAL_REWARD } else { STEP_REWARD };
    Ok((next, reward, reached))
}

/// Samples an observation: the true location with probability `1 − η`,
/// otherwise one of the open 4-neighbours uniformly.
pub fn grid_observe(world: &GridWorld, state: usize, rng: &mut SimRng) -> usize {
    let (cell, has_key) = world.decode(state);
    let neighbours = world.spec.layout.open_neighbours(cell);
    let eta = world.eta_at(cell);
    if neighbours.is_empty() || eta == 0.0 || rng.gen::<f64>() >= eta {
        return state;
    }
    let pick = neighbours[rng.gen_range(0..neighbours.len())];
    world.encode(pick, has_key).expect("open neighbour")
}

impl Environment for GridWorld {
    fn n_states(&self) -> usize {
        self.n_locations() * if self.has_key_variant() { 2 } else { 1 }
    }

    fn n_actions(&self) -> usize {
        if self.has_key_variant() {
            5
        } else {
            4
        }
    }

    fn likelihood(&self) -> DMatrix<f64> {
        let n = self.n_states();
        let mut a = DMatrix::zeros(n, n);
        for s in 0..n {
            let (cell, has_key) = self.decode(s);
            let neighbours = self.spec.layout.open_neighbours(cell);
            let eta = self.eta_at(cell);
            if neighbours.is_empty() || eta == 0.0 {
                a[(s, s)] = 1.0;
                continue;
            }
            a[(s, s)] = 1.0 - eta;
            let share = eta / neighbours.len() as f64;
            for nb in neighbours {
                a[(self.encode(nb, has_key).expect("open"), s)] = share;
            }
        }
        a
    }

    fn goal_observations(&self) -> Vec<usize> {
        vec![self.goal_state()]
    }

    fn reset(&mut self, rng: &mut SimRng) -> (usize, usize) {
        self.state = self.start_state();
        (self.state, grid_observe(self, self.state, rng))
    }

    fn reset_random(&mut self, rng: &mut SimRng) -> (usize, usize) {
        self.state = rng.gen_range(0..self.n_states());
        (self.state, grid_observe(self, self.state, rng))
    }

    fn state(&self) -> usize {
        self.state
    }

    fn step(&mut self, action: usize, rng: &mut SimRng) -> StepOutcome {
        let (next, reward, done) = grid_step(self, self.state, action).expect("agent emits valid actions");
        self.state = next;
        StepOutcome { state: next, observation: grid_observe(self, next, rng), reward, done }
    }

    fn known_dynamics(&self) -> Option<Vec<DMatrix<f64>>> {
        Some(self.true_transitions())
    }

    fn coordinates(&self) -> DMatrix<f64> {
        let l = &self.spec.layout;
        let (h, w) = ((l.rows.max(2) - 1) as f64, (l.cols.max(2) - 1) as f64);
        let n = self.n_states();
        let key_dim = self.has_key_variant();
        DMatrix::from_fn(n, if key_dim { 3 } else { 2 }, |s, d| {
            let ((r, c), k) = self.decode(s);
            match d {
                0 => r as f64 / h,
                1 => c as f64 / w,
                _ => k as u8 as f64,
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn world(name: &str) -> GridWorld {
        GridWorld::new(GridSpec::from_layout(Layout::builtin(name).unwrap(), 0.0, None).unwrap())
    }

    #[test]
    fn wall_bump_keeps_state() {
        let w = world("serpentine");
        let s = w.start_state();
        let (next, reward, done) = grid_step(&w, s, UP).unwrap();
        assert_eq!((next, reward, done), (s, STEP_REWARD, false));
        let (next, _, _) = grid_step(&w, s, DOWN).unwrap();
        assert_eq!(next, s, "row 1 below the start is a wall");
    }

    #[test]
    fn entering_goal_rewards_and_terminates() {
        let w = world("serpentine");
        let left_of_goal = w.encode((8, 1), false).unwrap();
        assert_eq!(grid_step(&w, left_of_goal, RIGHT).unwrap(), (w.goal_state(), GOAL_REWARD, true));
    }

    #[test]
    fn key_variant_rules() {
        let w = world("key_grid");
        assert_eq!(w.n_states(), 2 * w.n_locations());
        let s = w.start_state();
        assert_eq!(grid_step(&w, s, PICKUP).unwrap(), (s, STEP_REWARD, false));
        let key = w.key_state().unwrap();
        let (with_key, _, _) = grid_step(&w, key, PICKUP).unwrap();
        assert_eq!(with_key, key + w.n_locations());
        let goal_no_key = w.encode(w.spec.goal, false).unwrap();
        let above = w.encode((w.spec.goal.0 - 1, w.spec.goal.1), false).unwrap();
        assert_eq!(grid_step(&w, above, DOWN).unwrap(), (goal_no_key, STEP_REWARD, false));
        let (g, r, d) = grid_step(&w, above + w.n_locations(), DOWN).unwrap();
        assert_eq!((g, r, d), (w.goal_state(), GOAL_REWARD, true));
    }

    #[test]
    fn rejects_invalid_inputs() {
        let w = world("serpentine");
        assert!(grid_step(&w, w.n_states(), 0).is_err());
        assert!(grid_step(&w, 0, 4).is_err());
    }

    #[test]
    fn noiseless_observation_is_the_state() {
        let w = world("four_rooms");
        let mut rng = SimRng::seed_from_u64(1);
        for s in 0..w.n_states() {
            assert_eq!(grid_observe(&w, s, &mut rng), s);
        }
    }

    #[test]
    fn likelihood_splits_noise_over_open_neighbours() {
        let spec = GridSpec::from_layout(Layout::builtin("serpentine").unwrap(), 0.2, None).unwrap();
        let w = GridWorld::new(spec);
        let a = w.likelihood();
        // Corridor cell (0,3) has two open neighbours.
        let s = w.encode((0, 3), false).unwrap();
        assert!((a[(s, s)] - 0.8).abs() < 1e-15);
        assert!((a[(w.encode((0, 2), false).unwrap(), s)] - 0.1).abs() < 1e-15);
        assert!((a[(w.encode((0, 4), false).unwrap(), s)] - 0.1).abs() < 1e-15);
        for col in a.column_iter() {
            assert!((col.sum() - 1.0).abs() < 1e-12);
        }
    }
}
