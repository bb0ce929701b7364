//! Point-mass maze navigation with force-driven kinematics.
//!
//! The maze is a grid of unit cells centred on the origin, so
//! `x ∈ [−cols/2, cols/2]` and `y ∈ [−rows/2, rows/2]` with row 0 at the top.
//! The discrete state is the spatial bin `(i, j)` with flat index
//! `i · n_y + j`; agents work with the compact index over navigable bins.

use nalgebra::DMatrix;
use rand::Rng;

use super::layout::{Cell, Layout};
use super::{Environment, SimRng, StepOutcome};
use crate::error::{arg, Error, Result};

pub const GOAL_REWARD: f64 = 100.0;
pub const STEP_REWARD: f64 = -1.0;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// E, W, N, S, NE, NW, SE, SW as unit vectors.
pub const DIRECTIONS: [(f64, f64); 8] = [
    (1.0, 0.0),
    (-1.0, 0.0),
    (0.0, 1.0),
    (0.0, -1.0),
    (FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    (-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    (FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    (-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
];

#[derive(Debug, Clone, PartialEq)]
pub struct PointMazeSpec {
    pub layout: Layout,
    pub n_x: usize,
    pub n_y: usize,
    pub step_size: f64,
    pub goal_radius: f64,
    pub n_smooth_train: usize,
    pub n_smooth_test: usize,
}

impl PointMazeSpec {
    pub fn new(layout: Layout, n_x: usize, n_y: usize) -> Self {
        PointMazeSpec {
            layout,
            n_x,
            n_y,
            step_size: 0.0024,
            goal_radius: 0.35,
            n_smooth_train: 200,
            n_smooth_test: 100,
        }
    }

    /// Built-in variants with their bin grids.
    pub fn variant(name: &str) -> Result<Self> {
        let (file, nx, ny) = match name {
            "umaze" => ("umaze", 20, 20),
            "medium" => ("medium_maze", 32, 32),
            "large" => ("large_maze", 48, 36),
            other => return Err(Error::Config(format!("unknown maze variant {other:?}"))),
        };
        Ok(Self::new(Layout::builtin(file)?, nx, ny))
    }

    pub fn width(&self) -> f64 {
        self.layout.cols as f64
    }

    pub fn height(&self) -> f64 {
        self.layout.rows as f64
    }

    pub fn bin_width(&self) -> (f64, f64) {
        (self.width() / self.n_x as f64, self.height() / self.n_y as f64)
    }

    /// Grid cell containing a point, or `None` outside the maze.
    pub fn cell_at(&self, (x, y): (f64, f64)) -> Option<Cell> {
        let col = (x + self.width() / 2.0).floor();
        let row = (self.height() / 2.0 - y).floor();
        let (rows, cols) = (self.layout.rows as f64, self.layout.cols as f64);
        if !(x >= -self.width() / 2.0 && x <= self.width() / 2.0 && y >= -self.height() / 2.0 && y <= self.height() / 2.0) {
            return None;
        }
        Some((row.clamp(0.0, rows - 1.0) as usize, col.clamp(0.0, cols - 1.0) as usize))
    }

    pub fn is_free(&self, pos: (f64, f64)) -> bool {
        self.cell_at(pos).is_some_and(|c| !self.layout.is_wall(c))
    }

    pub fn cell_center(&self, (row, col): Cell) -> (f64, f64) {
        (col as f64 + 0.5 - self.width() / 2.0, self.height() / 2.0 - row as f64 - 0.5)
    }

    pub fn bin_center(&self, flat: usize) -> (f64, f64) {
        let (i, j) = (flat / self.n_y, flat % self.n_y);
        let (wx, wy) = self.bin_width();
        (-self.width() / 2.0 + (i as f64 + 0.5) * wx, -self.height() / 2.0 + (j as f64 + 0.5) * wy)
    }

    pub fn bin_navigable(&self, flat: usize) -> bool {
        self.is_free(self.bin_center(flat))
    }

    pub fn total_bins(&self) -> usize {
        self.n_x * self.n_y
    }
}

/// Flat bin index of a position and whether that bin is navigable.
pub fn pm_discretize(spec: &PointMazeSpec, (x, y): (f64, f64)) -> Result<(usize, bool)> {
    let (hw, hh) = (spec.width() / 2.0, spec.height() / 2.0);
    if !(x >= -hw && x <= hw && y >= -hh && y <= hh) {
        return arg(format!("position ({x}, {y}) lies outside the maze"));
    }
    let (wx, wy) = spec.bin_width();
    let i = (((x + hw) / wx).floor() as usize).min(spec.n_x - 1);
    let j = (((y + hh) / wy).floor() as usize).min(spec.n_y - 1);
    let flat = i * spec.n_y + j;
    Ok((flat, spec.bin_navigable(flat)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothEvent {
    BinChanged,
    Goal,
    Exhausted,
}

/// Repeats one direction for up to `n_smooth` sub-steps, stopping early when
/// the bin changes or the goal disc is entered.
pub fn pointmaze_step(
    spec: &PointMazeSpec,
    pos: (f64, f64),
    direction: usize,
    n_smooth: usize,
    goal: Option<(f64, f64)>,
) -> Result<((f64, f64), (f64, f64), usize, SmoothEvent)> {
    if direction >= DIRECTIONS.len() {
        return arg(format!("direction {direction} out of range"));
    }
    let (start_bin, _) = pm_discretize(spec, pos)?;
    let (ux, uy) = DIRECTIONS[direction];
    let (dx, dy) = (ux * spec.step_size, uy * spec.step_size);
    let (mut x, mut y) = pos;
    let mut vel = (0.0, 0.0);
    for used in 1..=n_smooth {
        let (x0, y0) = (x, y);
        if spec.is_free((x + dx, y)) {
            x += dx;
        }
        if spec.is_free((x, y + dy)) {
            y += dy;
        }
        vel = (x - x0, y - y0);
        if let Some((gx, gy)) = goal {
            if ((x - gx).powi(2) + (y - gy).powi(2)).sqrt() <= spec.goal_radius {
                return Ok(((x, y), vel, used, SmoothEvent::Goal));
            }
        }
        if pm_discretize(spec, (x, y))?.0 != start_bin {
            return Ok(((x, y), vel, used, SmoothEvent::BinChanged));
        }
    }
    Ok(((x, y), vel, n_smooth, SmoothEvent::Exhausted))
}

#[derive(Debug, Clone)]
pub struct PointMaze {
    pub spec: PointMazeSpec,
    pub pos: (f64, f64),
    pub goal_cell: Cell,
    pub start_cell: Cell,
    pub n_smooth: usize,
    /// Whether smooth stepping halts on entering the goal region.
    pub goal_stops: bool,
    compact: Vec<Option<usize>>,
    flat_of: Vec<usize>,
    goal_states: Vec<usize>,
}

impl PointMaze {
    pub fn new(spec: PointMazeSpec) -> Result<Self> {
        let start_cell = spec.layout.start.ok_or_else(|| Error::Config("maze has no start".into()))?;
        let goal_cell = spec.layout.goal.ok_or_else(|| Error::Config("maze has no goal".into()))?;
        let mut compact = vec![None; spec.total_bins()];
        let mut flat_of = Vec::new();
        for flat in 0..spec.total_bins() {
            if spec.bin_navigable(flat) {
                compact[flat] = Some(flat_of.len());
                flat_of.push(flat);
            }
        }
        let n_smooth = spec.n_smooth_train;
        let mut maze = PointMaze {
            pos: spec.cell_center(start_cell),
            spec,
            goal_cell,
            start_cell,
            n_smooth,
            goal_stops: false,
            compact,
            flat_of,
            goal_states: Vec::new(),
        };
        maze.set_goal(goal_cell)?;
        Ok(maze)
    }

    /// Training explores with long smooth steps that ignore the goal;
    /// testing uses short ones that stop at it.
    pub fn set_training(&mut self, training: bool) {
        self.n_smooth = if training { self.spec.n_smooth_train } else { self.spec.n_smooth_test };
        self.goal_stops = !training;
    }

    pub fn navigable_count(&self) -> usize {
        self.flat_of.len()
    }

    pub fn goal_position(&self) -> (f64, f64) {
        self.spec.cell_center(self.goal_cell)
    }

    pub fn set_goal(&mut self, cell: Cell) -> Result<()> {
        let l = &self.spec.layout;
        if cell.0 >= l.rows || cell.1 >= l.cols || l.is_wall(cell) {
            return Err(Error::Config(format!("goal cell {cell:?} is not open")));
        }
        self.goal_cell = cell;
        let (gx, gy) = self.goal_position();
        let mut goals: Vec<usize> = (0..self.flat_of.len())
            .filter(|&s| {
                let (x, y) = self.spec.bin_center(self.flat_of[s]);
                ((x - gx).powi(2) + (y - gy).powi(2)).sqrt() <= self.spec.goal_radius
            })
            .collect();
        if goals.is_empty() {
            let (flat, _) = pm_discretize(&self.spec, (gx, gy))?;
            goals.extend(self.compact[flat]);
        }
        self.goal_states = goals;
        Ok(())
    }

    pub fn compact_index(&self, flat: usize) -> Option<usize> {
        self.compact.get(flat).copied().flatten()
    }

    pub fn flat_index(&self, state: usize) -> usize {
        self.flat_of[state]
    }

    /// Cell of a compact state.
    pub fn cell_of(&self, state: usize) -> Cell {
        self.spec.cell_at(self.spec.bin_center(self.flat_of[state])).expect("inside maze")
    }

    pub fn reached_goal(&self) -> bool {
        let (gx, gy) = self.goal_position();
        ((self.pos.0 - gx).powi(2) + (self.pos.1 - gy).powi(2)).sqrt() <= self.spec.goal_radius
    }
}

impl Environment for PointMaze {
    fn n_states(&self) -> usize {
        self.flat_of.len()
    }

    fn n_actions(&self) -> usize {
        DIRECTIONS.len()
    }

    fn likelihood(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n_states(), self.n_states())
    }

    fn goal_observations(&self) -> Vec<usize> {
        self.goal_states.clone()
    }

    fn reset(&mut self, _rng: &mut SimRng) -> (usize, usize) {
        self.pos = self.spec.cell_center(self.start_cell);
        let s = self.state();
        (s, s)
    }

    fn reset_random(&mut self, rng: &mut SimRng) -> (usize, usize) {
        let s = rng.gen_range(0..self.n_states());
        let (cx, cy) = self.spec.bin_center(self.flat_of[s]);
        let (wx, wy) = self.spec.bin_width();
        self.pos = (cx + wx * rng.gen_range(-0.49..0.49), cy + wy * rng.gen_range(-0.49..0.49));
        let s = self.state();
        (s, s)
    }

    fn state(&self) -> usize {
        let (flat, _) = pm_discretize(&self.spec, self.pos).expect("agent stays inside the maze");
        self.compact[flat].expect("agent stays in open cells")
    }

    fn step(&mut self, action: usize, _rng: &mut SimRng) -> StepOutcome {
        let goal = self.goal_stops.then(|| self.goal_position());
        let (pos, _, _, event) =
            pointmaze_step(&self.spec, self.pos, action, self.n_smooth, goal).expect("valid direction");
        self.pos = pos;
        let s = self.state();
        let done = event == SmoothEvent::Goal || (self.goal_stops && self.reached_goal());
        StepOutcome { state: s, observation: s, reward: if done { GOAL_REWARD } else { STEP_REWARD }, done }
    }

    fn coordinates(&self) -> DMatrix<f64> {
        let (w, h) = (self.spec.width(), self.spec.height());
        DMatrix::from_fn(self.n_states(), 2, |s, d| {
            let (x, y) = self.spec.bin_center(self.flat_of[s]);
            match d {
                0 => (x + w / 2.0) / w,
                _ => (y + h / 2.0) / h,
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn navigable_counts_near_table_two() {
        for (name, paper) in [("umaze", 220.0), ("medium", 416.0), ("large", 736.0)] {
            let maze = PointMaze::new(PointMazeSpec::variant(name).unwrap()).unwrap();
            let n = maze.navigable_count() as f64;
            assert!((n - paper).abs() <= 0.1 * paper, "{name}: {n}");
        }
    }

    #[test]
    fn bin_zero_and_round_trip() {
        let spec = PointMazeSpec::variant("umaze").unwrap();
        let (flat, _) = pm_discretize(&spec, spec.bin_center(0)).unwrap();
        assert_eq!(flat, 0);
        for f in 0..spec.total_bins() {
            assert_eq!(pm_discretize(&spec, spec.bin_center(f)).unwrap().0, f);
        }
        assert!(pm_discretize(&spec, (10.0, 0.0)).is_err());
    }

    #[test]
    fn crossing_a_boundary_takes_one_substep() {
        let spec = PointMazeSpec::variant("umaze").unwrap();
        // Top-left cell spans x in [-2.5, -1.5]; the first bin boundary is at -2.25.
        let pos = (-2.251, 2.0);
        let (_, _, used, event) = pointmaze_step(&spec, pos, 0, 100, None).unwrap();
        assert_eq!((used, event), (1, SmoothEvent::BinChanged));
    }

    #[test]
    fn pushing_into_a_wall_exhausts() {
        let spec = PointMazeSpec::variant("umaze").unwrap();
        // Row 1 below the top-left cell is wall.
        let pos = (-2.4, 1.5 + 0.0005);
        let (p2, _, used, event) = pointmaze_step(&spec, pos, 3, 100, None).unwrap();
        assert_eq!((used, event), (100, SmoothEvent::Exhausted));
        assert_eq!(p2.1, pos.1);
    }

    #[test]
    fn open_bin_takes_about_104_substeps() {
        let spec = PointMazeSpec::variant("umaze").unwrap();
        let pos = (-2.25 + 1e-9, 2.0);
        let (_, _, used, event) = pointmaze_step(&spec, pos, 0, 200, None).unwrap();
        assert_eq!(event, SmoothEvent::BinChanged);
        assert!((103..=105).contains(&used), "{used}");
    }
}
