//! Experiment protocols and the seed-parallel runner.
//!
//! Seed `i` of an experiment runs with `seed_base + i`. Each seed draws from
//! separate ChaCha8 streams of that seed: 0 for exploration, 1 for
//! evaluation, 2 for Q-learning, 3 for the random baseline and 4 for the
//! evaluation panel, so adding an agent never shifts another agent's draws.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;

use crate::abstraction::{DecomposeConfig, MacroDecomposition};
use crate::baselines::{decayed_epsilon, q_learning_episode, QTable};
use crate::core_model::{goal_preference, GenerativeModel};
use crate::envs::{
    Cell, Environment, GridSpec, GridWorld, Layout, MountainCar, MountainCarSpec, PointMaze, PointMazeSpec, SimRng,
    StepOutcome,
};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Protocol};
use crate::harness::metrics::{r_stability, MetricRow, MetricSeries};
use crate::harness::train::{reference_macro_sr, reference_sr, Learner};
use crate::planner::{run_episode, run_from, Agent, AgentKind, EpisodeResult, Planner};
use crate::successor::{sr_distance, SuccessorMatrix, ValueScore};

pub const EXPLORE_STREAM: u64 = 0;
pub const EVAL_STREAM: u64 = 1;
pub const Q_STREAM: u64 = 2;
pub const RANDOM_STREAM: u64 = 3;
pub const PANEL_STREAM: u64 = 4;

pub fn seed_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Any of the benchmark environments.
#[derive(Debug, Clone)]
pub enum EnvBox {
    Grid(GridWorld),
    MountainCar(MountainCar),
    PointMaze(PointMaze),
}

macro_rules! each {
    ($self:expr, $e:ident => $body:expr) => {
        match $self {
            EnvBox::Grid($e) => $body,
            EnvBox::MountainCar($e) => $body,
            EnvBox::PointMaze($e) => $body,
        }
    };
}

impl EnvBox {
    /// The environment named by `cfg.env`. Every failure is a config error.
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let name = cfg.env.as_str();
        let built = if name == "mountain_car" {
            MountainCar::new(MountainCarSpec::default()).map(EnvBox::MountainCar)
        } else if let Some(variant) = name.strip_prefix("pointmaze_") {
            PointMazeSpec::variant(variant).and_then(|mut spec| {
                spec.n_smooth_train = cfg.n_smooth_train;
                spec.n_smooth_test = cfg.n_smooth_test;
                PointMaze::new(spec).map(EnvBox::PointMaze)
            })
        } else {
            Layout::resolve(name)
                .and_then(|l| GridSpec::from_layout(l, cfg.noise_eta, cfg.region_eta))
                .map(|spec| EnvBox::Grid(GridWorld::new(spec)))
        };
        built.map_err(|e| Error::Config(format!("environment {name:?}: {e}")))
    }

    pub fn grid(&self) -> Option<&GridWorld> {
        match self {
            EnvBox::Grid(g) => Some(g),
            _ => None,
        }
    }

    /// Exploration settings on (PointMaze smooth stepping ignores the goal) or off.
    pub fn set_training(&mut self, training: bool) {
        if let EnvBox::PointMaze(p) = self {
            p.set_training(training);
        }
    }

    /// Puts the agent in `state`; returns the observation there.
    pub fn place(&mut self, state: usize, rng: &mut SimRng) -> Result<usize> {
        match self {
            EnvBox::Grid(g) => g.place(state, rng),
            EnvBox::MountainCar(m) => {
                let (x, v) = m.spec.bin_center(state);
                m.set(x, v);
                Ok(m.state())
            }
            EnvBox::PointMaze(p) => {
                p.pos = p.spec.bin_center(p.flat_index(state));
                Ok(p.state())
            }
        }
    }

    pub fn set_goal(&mut self, cell: Cell) -> Result<()> {
        match self {
            EnvBox::Grid(g) => g.set_goal(cell).map_err(|e| Error::Config(format!("goal {cell:?}: {e}"))),
            EnvBox::PointMaze(p) => p.set_goal(cell),
            EnvBox::MountainCar(_) => Err(Error::Config("mountain car has a fixed goal".into())),
        }
    }

    pub fn set_region_eta(&mut self, eta: f64) -> Result<()> {
        match self {
            EnvBox::Grid(g) => g.set_region_eta(eta).map_err(|e| Error::Config(e.to_string())),
            _ => Err(Error::Config("only grid layouts have a noisy region".into())),
        }
    }

    /// A board for drawing states: `(rows, cols, position of each state)`.
    /// Key-grid layers sit side by side; Mountain Car puts velocity upward.
    pub fn board(&self) -> (usize, usize, Vec<usize>) {
        match self {
            EnvBox::Grid(g) => {
                let (rows, cols) = (g.spec.layout.rows, g.spec.layout.cols);
                let layers = if g.has_key_variant() { 2 } else { 1 };
                let pos = (0..g.n_states())
                    .map(|s| {
                        let ((r, c), key) = g.decode(s);
                        r * (layers * cols + layers - 1) + c + key as usize * (cols + 1)
                    })
                    .collect();
                (rows, layers * cols + layers - 1, pos)
            }
            EnvBox::MountainCar(m) => {
                let (bx, bv) = (m.spec.bins_x, m.spec.bins_v);
                (bv, bx, (0..m.n_states()).map(|s| (bv - 1 - s % bv) * bx + s / bv).collect())
            }
            EnvBox::PointMaze(p) => {
                let (nx, ny) = (p.spec.n_x, p.spec.n_y);
                let pos = (0..p.n_states())
                    .map(|s| {
                        let flat = p.flat_index(s);
                        (ny - 1 - flat % ny) * nx + flat / ny
                    })
                    .collect();
                (ny, nx, pos)
            }
        }
    }
}

impl Environment for EnvBox {
    fn n_states(&self) -> usize {
        each!(self, e => e.n_states())
    }
    fn n_actions(&self) -> usize {
        each!(self, e => e.n_actions())
    }
    fn n_observations(&self) -> usize {
        each!(self, e => e.n_observations())
    }
    fn likelihood(&self) -> DMatrix<f64> {
        each!(self, e => e.likelihood())
    }
    fn goal_observations(&self) -> Vec<usize> {
        each!(self, e => e.goal_observations())
    }
    fn reset(&mut self, rng: &mut SimRng) -> (usize, usize) {
        each!(self, e => e.reset(rng))
    }
    fn reset_random(&mut self, rng: &mut SimRng) -> (usize, usize) {
        each!(self, e => e.reset_random(rng))
    }
    fn state(&self) -> usize {
        each!(self, e => e.state())
    }
    fn step(&mut self, action: usize, rng: &mut SimRng) -> StepOutcome {
        each!(self, e => e.step(action, rng))
    }
    fn goal_is_absorbing(&self) -> bool {
        each!(self, e => e.goal_is_absorbing())
    }
    fn coordinates(&self) -> DMatrix<f64> {
        each!(self, e => e.coordinates())
    }
    fn known_dynamics(&self) -> Option<Vec<DMatrix<f64>>> {
        each!(self, e => e.known_dynamics())
    }
}

/// Exploration, model learning and macro discovery for one seed.
pub struct Trainer<'c> {
    cfg: &'c ExperimentConfig,
    pub seed: u64,
    pub env: EnvBox,
    pub learner: Learner,
    pub decomp: Option<MacroDecomposition>,
    pub episodes_done: usize,
    /// Decomposition attempts that failed, including periodic refreshes.
    pub failed_attempts: usize,
    last_failure: Option<String>,
    rng: SimRng,
}

impl<'c> Trainer<'c> {
    pub fn new(cfg: &'c ExperimentConfig, seed: u64, env: EnvBox) -> Result<Self> {
        let mut learner = Learner::new(&env, cfg.gamma, cfg.alpha)?;
        if cfg.known_transitions {
            let b = env
                .known_dynamics()
                .ok_or_else(|| Error::Config(format!("{} has no tabular dynamics to give the agent", cfg.env)))?;
            learner = learner.with_known_transitions(b);
        }
        Ok(Trainer { cfg, seed, env, learner, decomp: None,
            episodes_done: 0,
            failed_attempts: 0,
            last_failure: None,
            rng: seed_rng(seed, EXPLORE_STREAM),
        })
    }

    pub fn explore(&mut self) -> Result<()> {
        self.env.set_training(true);
        self.learner.explore(&mut self.env, self.cfg.episode_steps, self.cfg.action_repeat, &mut self.rng)?;
        self.episodes_done += 1;
        Ok(())
    }

    pub fn model(&self, goals: &[usize]) -> Result<GenerativeModel> {
        self.learner.model(goal_preference(self.env.n_observations(), goals)?)
    }

    pub fn decompose_config(&self) -> DecomposeConfig {
        DecomposeConfig {
            k: self.cfg.k,
            seed: self.seed,
            macro_gamma: self.cfg.macro_gamma,
            macro_alpha: self.cfg.macro_alpha,
            blend: self.cfg.blend.then(|| (self.env.coordinates(), self.cfg.blend_sigma, self.cfg.blend_alpha_max)),
            ambiguity_weight: self.cfg.ambiguity_weight,
            macro_target: self.cfg.macro_target,
        }
    }

    /// One decomposition attempt. On failure the previous decomposition, if
    /// any, stays in place.
    pub fn try_decompose(&mut self) -> bool {
        let goals = self.env.goal_observations();
        let attempt = self.model(&goals).and_then(|m| self.learner.decompose(&m, &goals, &self.decompose_config()));
        match attempt {
            Ok(d) => {
                self.decomp = Some(d);
                true
            }
            Err(e) => {
                self.failed_attempts += 1;
                self.last_failure = Some(e.to_string());
                false
            }
        }
    }

    /// Decomposes, exploring `eval_every` more episodes after each failure
    /// and giving up after `max_retries` attempts.
    pub fn decompose_with_retry(&mut self) -> Result<()> {
        for attempt in 1..=self.cfg.max_retries {
            if self.try_decompose() {
                return Ok(());
            }
            if attempt < self.cfg.max_retries {
                for _ in 0..self.cfg.eval_every {
                    self.explore()?;
                }
            }
        }
        Err(Error::Experiment(format!(
            "seed {}: macro discovery failed {} times (last after {} episodes): {}",
            self.seed,
            self.cfg.max_retries,
            self.episodes_done,
            self.last_failure.as_deref().unwrap_or("unknown")
        )))
    }

    /// A frozen planner for `goals` from everything learned so far.
    pub fn planner(&self, goals: &[usize]) -> Result<Planner> {
        let model = self.model(goals)?;
        let mut p = Planner::new(&model, &self.learner.sr, self.decomp.as_ref(), goals)?;
        if self.cfg.value_score != ValueScore::default() {
            p = p.with_score(self.cfg.value_score)?;
        }
        Ok(p.with_selection(self.cfg.selection()))
    }
}

pub fn agent_for<'a>(kind: AgentKind, planner: Option<&'a Planner>, q: Option<&'a QTable>) -> Agent<'a> {
    match (kind, planner, q) {
        (AgentKind::Hierarchical, Some(p), _) if p.decomp.is_some() => Agent::Hierarchical(p),
        (AgentKind::Hierarchical | AgentKind::Flat, Some(p), _) => Agent::Flat(p),
        (AgentKind::QLearning, _, Some(q)) => Agent::QLearning(q),
        _ => Agent::Random,
    }
}

pub fn evaluate(env: &mut EnvBox, agent: Agent, n: usize, cap: usize, rng: &mut SimRng) -> Result<Vec<EpisodeResult>> {
    env.set_training(false);
    (0..n).map(|_| run_episode(env, agent, cap, rng)).collect()
}

fn evaluate_from(env: &mut EnvBox, agent: Agent, starts: &[usize], cap: usize, rng: &mut SimRng) -> Result<Vec<EpisodeResult>> {
    env.set_training(false);
    starts
        .iter()
        .map(|&s| {
            let obs = env.place(s, rng)?;
            let s = env.state();
            run_from(env, agent, s, obs, cap, rng)
        })
        .collect()
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn mean_opt(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    Some(mean(xs)).filter(|m| !m.is_nan())
}

pub fn row(label: String, seed: u64, episode: usize, res: &[EpisodeResult], dist: (Option<f64>, Option<f64>)) -> MetricRow {
    MetricRow {
        experiment: label,
        seed,
        episode,
        reward: mean(res.iter().map(|r| r.total_reward)),
        steps: mean(res.iter().map(|r| r.steps as f64)),
        planning_decisions: mean(res.iter().map(|r| r.planning_decisions as f64)),
        success: mean(res.iter().map(|r| r.success as u8 as f64)),
        sr_dist_micro: dist.0,
        sr_dist_macro: dist.1,
    }
}

/// Final evaluation of one agent on one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSummary {
    pub agent: AgentKind,
    pub success_rate: f64,
    pub mean_reward: f64,
    pub mean_steps: f64,
    pub mean_decisions: f64,
    pub steps_on_success: Option<f64>,
    pub decisions_on_success: Option<f64>,
    /// R-stability of the panel returns over training.
    pub rs: Option<f64>,
    /// Fraction of episodes that pass the key cell and then reach the goal.
    pub key_first_rate: Option<f64>,
    /// Mean macro plan length of successful episodes, start cluster included.
    pub macro_plan_len: Option<f64>,
}

fn summarize(kind: AgentKind, res: &[EpisodeResult], env: &EnvBox, hierarchical: bool) -> AgentSummary {
    let ok: Vec<&EpisodeResult> = res.iter().filter(|r| r.success).collect();
    let key_first_rate = env.grid().and_then(|g| g.spec.key_cell.map(|k| (g, k))).map(|(g, key)| {
        mean(res.iter().map(|r| {
            let passes = r.trajectory.states().iter().any(|&s| g.decode(s).0 == key);
            (r.success && passes) as u8 as f64
        }))
    });
    AgentSummary {
        agent: kind,
        success_rate: mean(res.iter().map(|r| r.success as u8 as f64)),
        mean_reward: mean(res.iter().map(|r| r.total_reward)),
        mean_steps: mean(res.iter().map(|r| r.steps as f64)),
        mean_decisions: mean(res.iter().map(|r| r.planning_decisions as f64)),
        steps_on_success: mean_opt(ok.iter().map(|r| r.steps as f64)),
        decisions_on_success: mean_opt(ok.iter().map(|r| r.planning_decisions as f64)),
        rs: None,
        key_first_rate,
        macro_plan_len: if hierarchical { mean_opt(ok.iter().map(|r| r.macro_plan.len() as f64)) } else { None },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomRow {
    pub cap: usize,
    pub success_rate: f64,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRow {
    pub distance: usize,
    pub agent: AgentKind,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchRow {
    pub goal_index: usize,
    pub goal: Cell,
    pub agent: AgentKind,
    /// Rounds until the first successful evaluation; `None` if none succeeded.
    pub episodes_to_success: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalRow {
    pub goal: Cell,
    pub agent: AgentKind,
    pub success_rate: f64,
    pub mean_steps: f64,
    pub mean_decisions: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyRow {
    pub eta: f64,
    /// Mean entropy in nats of the observation distribution inside the noisy room.
    pub entropy: f64,
    pub agent: AgentKind,
    pub p_short: f64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Detail {
    None,
    Distance(Vec<DistanceRow>),
    Revaluation(Vec<SwitchRow>),
    Multigoal(Vec<GoalRow>),
    Entropy(Vec<EntropyRow>),
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub series: MetricSeries,
    pub summaries: Vec<AgentSummary>,
    /// The SR planner at the end of training.
    pub planner: Option<Planner>,
    pub detail: Detail,
    /// Macro discovery attempts that failed along the way.
    pub failed_decompositions: usize,
    /// Exploration episodes actually run, including any spent on retries.
    pub episodes_trained: usize,
}

impl SeedRun {
    pub fn summary(&self, kind: AgentKind) -> Option<&AgentSummary> {
        self.summaries.iter().find(|s| s.agent == kind)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub series: MetricSeries,
    pub runs: Vec<SeedRun>,
    pub random: Vec<RandomRow>,
}

/// Fixed random starts for one seed, never on a goal.
fn panel(env: &EnvBox, count: usize, seed: u64) -> Vec<usize> {
    let goals = env.goal_observations();
    let mut candidates: Vec<usize> = (0..env.n_states()).filter(|s| !goals.contains(s)).collect();
    let mut rng = seed_rng(seed, PANEL_STREAM);
    candidates.shuffle(&mut rng);
    candidates.truncate(count);
    candidates
}

fn label(cfg: &ExperimentConfig, kind: AgentKind, suffix: &str) -> String {
    if suffix.is_empty() {
        format!("{}:{}", cfg.experiment, kind.name())
    } else {
        format!("{}:{}:{suffix}", cfg.experiment, kind.name())
    }
}

fn new_qtable(cfg: &ExperimentConfig, env: &EnvBox) -> QTable {
    QTable {
        alpha_q: cfg.q_alpha,
        gamma_q: cfg.q_gamma,
        epsilon: cfg.q_epsilon_start,
        ..QTable::new(env.n_states(), env.n_actions())
    }
}

fn sr_distances(tr: &Trainer, reference: Option<&SuccessorMatrix>) -> Result<(Option<f64>, Option<f64>)> {
    let micro = reference.map(|r| sr_distance(&tr.learner.sr, r)).transpose()?;
    let macro_ = match (&tr.decomp, tr.env.known_dynamics()) {
        (Some(d), Some(b)) => {
            let reference = reference_macro_sr(&b, &d.labels, d.k, d.m_macro.gamma)?;
            Some(sr_distance(&d.m_macro, &reference)?)
        }
        _ => None,
    };
    Ok((micro, macro_))
}

fn run_comparison(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let mut tr = Trainer::new(cfg, seed, EnvBox::build(cfg)?)?;
    let mut eval_rng = seed_rng(seed, EVAL_STREAM);
    let mut q_rng = seed_rng(seed, Q_STREAM);
    let mut q_env = EnvBox::build(cfg)?;
    let mut qt = cfg.has_agent(AgentKind::QLearning).then(|| new_qtable(cfg, &q_env));
    let starts = panel(&tr.env, cfg.panel_starts, seed);
    let reference = match tr.env.known_dynamics() {
        Some(b) if cfg.uses_sr() => Some(reference_sr(&b, cfg.gamma)?),
        _ => None,
    };
    let warmup = ((cfg.warmup_fraction * cfg.episodes as f64).ceil() as usize).max(1);
    let needs_decomp = cfg.has_agent(AgentKind::Hierarchical);
    let mut retry_at = None;
    let mut series = MetricSeries::new();
    let mut last: BTreeMap<AgentKind, Vec<EpisodeResult>> = BTreeMap::new();
    let mut panel_returns: BTreeMap<AgentKind, Vec<f64>> = BTreeMap::new();
    let mut planner = None;
    for e in 1..=cfg.episodes {
        if cfg.uses_sr() {
            tr.explore()?;
        }
        if let Some(q) = qt.as_mut() {
            q.epsilon = decayed_epsilon(cfg.q_epsilon_start, cfg.q_epsilon_end, e - 1, cfg.episodes);
            q_env.set_training(true);
            let (s, _) = q_env.reset_random(&mut q_rng);
            q_learning_episode(&mut q_env, q, s, cfg.episode_steps, &mut q_rng)?;
        }
        if needs_decomp && e == cfg.episodes {
            tr.decompose_with_retry()?;
        } else if needs_decomp && e >= warmup {
            let due = e == warmup || (e - warmup) % cfg.refresh_every == 0 || retry_at == Some(e);
            if due {
                retry_at = if tr.try_decompose() { None } else { Some(e + cfg.eval_every) };
            }
        }
        if e % cfg.eval_every != 0 && e != cfg.episodes {
            continue;
        }
        let goals = tr.env.goal_observations();
        planner = if cfg.uses_sr() { Some(tr.planner(&goals)?) } else { None };
        let dist = sr_distances(&tr, reference.as_ref())?;
        let greedy_q = qt.as_ref().map(QTable::greedy);
        for &kind in &cfg.agents {
            let agent = agent_for(kind, planner.as_ref(), greedy_q.as_ref());
            let d = if kind.uses_sr() { dist } else { (None, None) };
            let (env, rng) = if kind == AgentKind::QLearning { (&mut q_env, &mut q_rng) } else { (&mut tr.env, &mut eval_rng) };
            let res = evaluate(env, agent, cfg.eval_episodes, cfg.step_cap, rng)?;
            series.push(row(label(cfg, kind, ""), seed, e, &res, d));
            if !starts.is_empty() {
                let from_panel = evaluate_from(env, agent, &starts, cfg.step_cap, rng)?;
                let r = row(label(cfg, kind, "panel"), seed, e, &from_panel, d);
                panel_returns.entry(kind).or_default().push(r.reward);
                series.push(r);
            }
            last.insert(kind, res);
        }
    }
    let hierarchical = planner.as_ref().is_some_and(|p| p.decomp.is_some());
    let mut summaries = Vec::new();
    for &kind in &cfg.agents {
        let env = if kind == AgentKind::QLearning { &q_env } else { &tr.env };
        let mut s = summarize(kind, &last[&kind], env, hierarchical && kind == AgentKind::Hierarchical);
        s.rs = panel_returns.get(&kind).map(|r| r_stability(r, cfg.rs_window)).transpose()?;
        summaries.push(s);
    }
    Ok(SeedRun {
        seed,
        series,
        summaries,
        planner,
        detail: Detail::None,
        failed_decompositions: tr.failed_attempts,
        episodes_trained: tr.episodes_done,
    })
}

/// Trains the SR agents for the configured budget and discovers macro states
/// if a hierarchical agent is listed.
pub fn train_fully<'c>(cfg: &'c ExperimentConfig, seed: u64, env: EnvBox) -> Result<Trainer<'c>> {
    let mut tr = Trainer::new(cfg, seed, env)?;
    for _ in 0..cfg.episodes {
        tr.explore()?;
    }
    if cfg.has_agent(AgentKind::Hierarchical) {
        tr.decompose_with_retry()?;
    }
    Ok(tr)
}

fn run_distance(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let mut tr = train_fully(cfg, seed, EnvBox::build(cfg)?)?;
    let mut rng = seed_rng(seed, EVAL_STREAM);
    let goals = tr.env.goal_observations();
    let planner = tr.planner(&goals)?;
    let grid = tr.env.grid().ok_or_else(|| Error::Config("the distance protocol needs a grid layout".into()))?;
    let goal = grid.goal_state();
    let mut starts = Vec::new();
    for &d in &cfg.distances {
        let s = (0..grid.n_states())
            .find(|&s| grid.shortest_steps(s, goal) == Some(d))
            .ok_or_else(|| Error::Config(format!("no state lies {d} steps from the goal")))?;
        starts.push((d, s));
    }
    let mut series = MetricSeries::new();
    let mut rows = Vec::new();
    for (d, s) in starts {
        for &kind in &cfg.agents {
            let agent = agent_for(kind, Some(&planner), None);
            let res = evaluate_from(&mut tr.env, agent, &vec![s; cfg.eval_episodes], cfg.step_cap, &mut rng)?;
            let r = row(label(cfg, kind, &format!("d{d}")), seed, tr.episodes_done, &res, (None, None));
            rows.push(DistanceRow { distance: d, agent: kind, success_rate: r.success });
            series.push(r);
        }
    }
    Ok(SeedRun { seed, series, summaries: Vec::new(), planner: Some(planner), detail: Detail::Distance(rows),
        failed_decompositions: tr.failed_attempts,
        episodes_trained: tr.episodes_done,
    })
}

fn run_revaluation(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let mut env = EnvBox::build(cfg)?;
    env.set_goal(cfg.goals[0])?;
    let mut q_env = env.clone();
    let mut q_rng = seed_rng(seed, Q_STREAM);
    let mut qt = cfg.has_agent(AgentKind::QLearning).then(|| new_qtable(cfg, &q_env));
    let mut tr = Trainer::new(cfg, seed, env)?;
    for e in 0..cfg.episodes {
        if cfg.uses_sr() {
            tr.explore()?;
        }
        if let Some(q) = qt.as_mut() {
            q.epsilon = decayed_epsilon(cfg.q_epsilon_start, cfg.q_epsilon_end, e, cfg.episodes);
            let (s, _) = q_env.reset_random(&mut q_rng);
            q_learning_episode(&mut q_env, q, s, cfg.episode_steps, &mut q_rng)?;
        }
    }
    if cfg.has_agent(AgentKind::Hierarchical) {
        tr.decompose_with_retry()?;
    }
    let mut rng = seed_rng(seed, EVAL_STREAM);
    let mut series = MetricSeries::new();
    let mut rows = Vec::new();
    let mut planner = None;
    let mut round_base = 0;
    for (gi, &goal) in cfg.goals.iter().enumerate() {
        tr.env.set_goal(goal)?;
        q_env.set_goal(goal)?;
        let goals = tr.env.goal_observations();
        let mut first: BTreeMap<AgentKind, Option<usize>> = cfg.agents.iter().map(|&k| (k, None)).collect();
        for r in 1..=cfg.switch_rounds {
            planner = if cfg.uses_sr() { Some(tr.planner(&goals)?) } else { None };
            for &kind in &cfg.agents {
                if first[&kind].is_some() {
                    continue;
                }
                let res = match kind {
                    AgentKind::QLearning => {
                        let q = qt.as_mut().expect("created for the Q-learning agent");
                        let greedy = q.greedy();
                        let res = run_episode(&mut q_env, Agent::QLearning(&greedy), cfg.step_cap, &mut q_rng)?;
                        if !res.success {
                            q.epsilon = cfg.q_epsilon_start;
                            let (s, _) = q_env.reset(&mut q_rng);
                            q_learning_episode(&mut q_env, q, s, cfg.step_cap, &mut q_rng)?;
                        }
                        res
                    }
                    _ => run_episode(&mut tr.env, agent_for(kind, planner.as_ref(), None), cfg.step_cap, &mut rng)?,
                };
                if res.success {
                    first.insert(kind, Some(r));
                }
                series.push(row(label(cfg, kind, &format!("goal{gi}")), seed, round_base + r, &[res], (None, None)));
            }
            if first.values().all(Option::is_some) {
                break;
            }
            if cfg.agents.iter().any(|k| k.uses_sr() && first[k].is_none()) {
                tr.explore()?;
            }
        }
        round_base += cfg.switch_rounds;
        for &kind in &cfg.agents {
            rows.push(SwitchRow { goal_index: gi, goal, agent: kind, episodes_to_success: first[&kind] });
        }
    }
    Ok(SeedRun { seed, series, summaries: Vec::new(), planner, detail: Detail::Revaluation(rows),
        failed_decompositions: tr.failed_attempts,
        episodes_trained: tr.episodes_done,
    })
}

fn run_multigoal(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let mut tr = train_fully(cfg, seed, EnvBox::build(cfg)?)?;
    let mut rng = seed_rng(seed, EVAL_STREAM);
    let mut series = MetricSeries::new();
    let mut rows = Vec::new();
    let mut planner = None;
    for (gi, &goal) in cfg.goals.iter().enumerate() {
        tr.env.set_goal(goal)?;
        let goals = tr.env.goal_observations();
        let p = tr.planner(&goals)?;
        for &kind in &cfg.agents {
            let res = evaluate(&mut tr.env, agent_for(kind, Some(&p), None), cfg.eval_episodes, cfg.step_cap, &mut rng)?;
            let r = row(label(cfg, kind, &format!("goal{gi}")), seed, tr.episodes_done, &res, (None, None));
            rows.push(GoalRow {
                goal,
                agent: kind,
                success_rate: r.success,
                mean_steps: r.steps,
                mean_decisions: r.planning_decisions,
            });
            series.push(r);
        }
        planner = Some(p);
    }
    Ok(SeedRun { seed, series, summaries: Vec::new(), planner, detail: Detail::Multigoal(rows),
        failed_decompositions: tr.failed_attempts,
        episodes_trained: tr.episodes_done,
    })
}

/// Mean entropy of the observation distribution over states of the noisy room.
fn room_entropy(env: &EnvBox) -> f64 {
    let Some(g) = env.grid() else { return 0.0 };
    let a = env.likelihood();
    mean((0..env.n_states()).filter(|&s| g.in_noisy_region(s)).map(|s| {
        -a.column(s).iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    }))
}

fn run_entropy(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let mut series = MetricSeries::new();
    let mut rows = Vec::new();
    let mut planner = None;
    let (mut failed, mut trained) = (0, 0);
    for &eta in &cfg.region_etas {
        let mut env = EnvBox::build(cfg)?;
        env.set_region_eta(eta)?;
        let entropy = room_entropy(&env);
        let mut tr = train_fully(cfg, seed, env)?;
        failed += tr.failed_attempts;
        trained += tr.episodes_done;
        let mut rng = seed_rng(seed, EVAL_STREAM);
        let goals = tr.env.goal_observations();
        let p = tr.planner(&goals)?;
        for &kind in &cfg.agents {
            let res = evaluate(&mut tr.env, agent_for(kind, Some(&p), None), cfg.eval_episodes, cfg.step_cap, &mut rng)?;
            let grid = tr.env.grid().expect("entropy sweeps run on grids");
            let p_short = mean(res.iter().map(|r| {
                r.trajectory.states().iter().any(|&s| grid.in_noisy_region(s)) as u8 as f64
            }));
            let r = row(label(cfg, kind, &format!("eta{eta}")), seed, tr.episodes_done, &res, (None, None));
            rows.push(EntropyRow { eta, entropy, agent: kind, p_short, success_rate: r.success });
            series.push(r);
        }
        planner = Some(p);
    }
    Ok(SeedRun {
        seed,
        series,
        summaries: Vec::new(),
        planner,
        detail: Detail::Entropy(rows),
        failed_decompositions: failed,
        episodes_trained: trained,
    })
}

/// Uniformly random actions from the task start, once per cap.
pub fn random_baseline(cfg: &ExperimentConfig) -> Result<Vec<RandomRow>> {
    let mut env = EnvBox::build(cfg)?;
    let mut rng = seed_rng(cfg.seed_base, RANDOM_STREAM);
    env.set_training(false);
    cfg.random_caps
        .iter()
        .map(|&cap| {
            let res = (0..cfg.random_episodes)
                .map(|_| run_episode(&mut env, Agent::Random, cap, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            Ok(RandomRow {
                cap,
                success_rate: mean(res.iter().map(|r| r.success as u8 as f64)),
                mean_reward: mean(res.iter().map(|r| r.total_reward)),
            })
        })
        .collect()
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    match cfg.protocol {
        Protocol::Comparison => run_comparison(cfg, seed),
        Protocol::Distance => run_distance(cfg, seed),
        Protocol::Revaluation => run_revaluation(cfg, seed),
        Protocol::Multigoal => run_multigoal(cfg, seed),
        Protocol::Entropy => run_entropy(cfg, seed),
    }
}

/// Worker count from `HAI_SR_THREADS`, if set.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("HAI_SR_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("HAI_SR_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

/// Validates the config and runs every seed, in parallel up to the thread cap.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Internal(e.to_string()))?;
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|i| cfg.seed_base + i).collect();
    let runs = pool.install(|| seeds.par_iter().map(|&s| run_seed(cfg, s)).collect::<Result<Vec<_>>>())?;
    let random = if cfg.random_caps.is_empty() { Vec::new() } else { random_baseline(cfg)? };
    let mut series = MetricSeries::new();
    for r in &runs {
        series.rows.extend(r.series.rows.iter().cloned());
    }
    Ok(ExperimentResult { config: cfg.clone(), series, runs, random })
}

impl ExperimentResult {
    pub fn summaries(&self, kind: AgentKind) -> Vec<&AgentSummary> {
        self.runs.iter().filter_map(|r| r.summary(kind)).collect()
    }

    /// Mean over seeds of a summary field.
    pub fn mean_of(&self, kind: AgentKind, f: impl Fn(&AgentSummary) -> Option<f64>) -> Option<f64> {
        mean_opt(self.summaries(kind).into_iter().filter_map(f))
    }

    /// Success rate per distance and agent, averaged over seeds.
    pub fn distance_table(&self) -> Vec<DistanceRow> {
        let mut acc: BTreeMap<(usize, AgentKind), Vec<f64>> = BTreeMap::new();
        for r in &self.runs {
            if let Detail::Distance(rows) = &r.detail {
                for d in rows {
                    acc.entry((d.distance, d.agent)).or_default().push(d.success_rate);
                }
            }
        }
        acc.into_iter().map(|((distance, agent), v)| DistanceRow { distance, agent, success_rate: mean(v) }).collect()
    }

    /// P(short path) and success per noise level, averaged over seeds.
    pub fn entropy_table(&self) -> Vec<EntropyRow> {
        let mut out: Vec<EntropyRow> = Vec::new();
        for &eta in &self.config.region_etas {
            for &agent in &self.config.agents {
                let rows: Vec<&EntropyRow> = self
                    .runs
                    .iter()
                    .filter_map(|r| match &r.detail {
                        Detail::Entropy(rows) => Some(rows),
                        _ => None,
                    })
                    .flatten()
                    .filter(|e| e.eta == eta && e.agent == agent)
                    .collect();
                if let Some(first) = rows.first() {
                    out.push(EntropyRow {
                        eta,
                        entropy: first.entropy,
                        agent,
                        p_short: mean(rows.iter().map(|e| e.p_short)),
                        success_rate: mean(rows.iter().map(|e| e.success_rate)),
                    });
                }
            }
        }
        out
    }

    pub fn switch_rows(&self) -> Vec<(u64, &SwitchRow)> {
        self.runs
            .iter()
            .flat_map(|r| match &r.detail {
                Detail::Revaluation(rows) => rows.iter().map(|x| (r.seed, x)).collect(),
                _ => Vec::new(),
            })
            .collect()
    }

    pub fn goal_rows(&self) -> Vec<(u64, &GoalRow)> {
        self.runs
            .iter()
            .flat_map(|r| match &r.detail {
                Detail::Multigoal(rows) => rows.iter().map(|x| (r.seed, x)).collect(),
                _ => Vec::new(),
            })
            .collect()
    }

    /// Human-readable digest of the run.
    pub fn report(&self) -> String {
        use std::fmt::Write as _;
        let cfg = &self.config;
        let mut out = format!(
            "experiment {} ({}, {}), {} seeds, {} episodes x {} steps\n",
            cfg.experiment,
            cfg.protocol.name(),
            cfg.env,
            cfg.seeds,
            cfg.episodes,
            cfg.episode_steps
        );
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
        let failed: usize = self.runs.iter().map(|r| r.failed_decompositions).sum();
        let trained: usize = self.runs.iter().map(|r| r.episodes_trained).max().unwrap_or(0);
        let _ = writeln!(out, "failed macro discoveries {failed}, most episodes trained by a seed {trained}");
        if cfg.protocol == Protocol::Comparison {
            let _ = writeln!(out, "agent         success  reward    steps     decisions  dec|success  RS");
            for &kind in &cfg.agents {
                let _ = writeln!(
                    out,
                    "{:<13} {:<8} {:<9} {:<9} {:<10} {:<12} {}",
                    kind.name(),
                    fmt(self.mean_of(kind, |s| Some(s.success_rate))),
                    fmt(self.mean_of(kind, |s| Some(s.mean_reward))),
                    fmt(self.mean_of(kind, |s| Some(s.mean_steps))),
                    fmt(self.mean_of(kind, |s| Some(s.mean_decisions))),
                    fmt(self.mean_of(kind, |s| s.decisions_on_success)),
                    fmt(self.mean_of(kind, |s| s.rs)),
                );
                if let Some(k) = self.mean_of(kind, |s| s.key_first_rate) {
                    let _ = writeln!(out, "  key before goal: {k:.3}");
                }
                if let Some(m) = self.mean_of(kind, |s| s.macro_plan_len) {
                    let _ = writeln!(out, "  macro plan length: {m:.3}");
                }
            }
        }
        for r in &self.random {
            let _ = writeln!(out, "random cap {:<5} success {:.4} reward {:.4}", r.cap, r.success_rate, r.mean_reward);
        }
        for d in self.distance_table() {
            let _ = writeln!(out, "distance {:<3} {:<13} success {:.3}", d.distance, d.agent.name(), d.success_rate);
        }
        for (seed, s) in self.switch_rows() {
            let n = s.episodes_to_success.map_or("never".to_string(), |n| n.to_string());
            let _ = writeln!(out, "seed {seed} goal {} {:?} {:<13} first success {n}", s.goal_index, s.goal, s.agent.name());
        }
        for (seed, g) in self.goal_rows() {
            let _ = writeln!(
                out,
                "seed {seed} goal {:?} {:<13} success {:.3} steps {:.1} decisions {:.1}",
                g.goal,
                g.agent.name(),
                g.success_rate,
                g.mean_steps,
                g.mean_decisions
            );
        }
        for e in self.entropy_table() {
            let _ = writeln!(
                out,
                "eta {:<5} entropy {:.4} {:<13} P(short) {:.3} success {:.3}",
                e.eta,
                e.entropy,
                e.agent.name(),
                e.p_short,
                e.success_rate
            );
        }
        out
    }
}
