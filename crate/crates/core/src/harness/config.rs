//! Experiment configuration.
//!
//! The file format is one `key = value` pair per line. `#` starts a comment,
//! lists are comma separated and grid cells are written `row:col`. Every key
//! is optional; a file naming an `experiment` starts from that preset.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::abstraction::MacroTarget;
use crate::envs::Cell;
use crate::error::{Error, Result};
use crate::planner::{AgentKind, Selection};
use crate::successor::ValueScore;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Periodic evaluation of every agent during training.
    Comparison,
    /// Success from starts at fixed BFS distances to the goal.
    Distance,
    /// A sequence of goals on one learned model.
    Revaluation,
    /// Several goals on one trained maze, no retraining in between.
    Multigoal,
    /// Short-path preference across noisy-room levels.
    Entropy,
}

impl Protocol {
    const ALL: [Protocol; 5] =
        [Protocol::Comparison, Protocol::Distance, Protocol::Revaluation, Protocol::Multigoal, Protocol::Entropy];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Comparison => "comparison",
            Protocol::Distance => "distance",
            Protocol::Revaluation => "revaluation",
            Protocol::Multigoal => "multigoal",
            Protocol::Entropy => "entropy",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub protocol: Protocol,
    /// `mountain_car`, `pointmaze_<variant>`, or a grid layout name or path.
    pub env: String,
    pub agents: Vec<AgentKind>,
    pub seeds: usize,
    pub seed_base: u64,
    pub episodes: usize,
    pub episode_steps: usize,
    pub action_repeat: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub k: usize,
    pub macro_gamma: f64,
    pub macro_alpha: f64,
    pub macro_target: MacroTarget,
    pub ambiguity_weight: f64,
    pub blend: bool,
    pub blend_sigma: f64,
    pub blend_alpha_max: f64,
    pub noise_eta: f64,
    pub region_eta: Option<f64>,
    pub region_etas: Vec<f64>,
    pub known_transitions: bool,
    pub n_smooth_train: usize,
    pub n_smooth_test: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub step_cap: usize,
    pub panel_starts: usize,
    pub warmup_fraction: f64,
    pub refresh_every: usize,
    pub max_retries: usize,
    pub rs_window: f64,
    pub q_alpha: f64,
    pub q_gamma: f64,
    pub q_epsilon_start: f64,
    pub q_epsilon_end: f64,
    pub goals: Vec<Cell>,
    pub switch_rounds: usize,
    pub distances: Vec<usize>,
    pub random_caps: Vec<usize>,
    pub random_episodes: usize,
    pub value_score: ValueScore,
    /// Sample micro actions from the policy posterior instead of acting greedily.
    pub sample_actions: bool,
    pub precision: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: "custom".into(),
            protocol: Protocol::Comparison,
            env: "serpentine".into(),
            agents: vec![AgentKind::Hierarchical, AgentKind::Flat],
            seeds: 10,
            seed_base: 0,
            episodes: 1200,
            episode_steps: 200,
            action_repeat: 1,
            gamma: 0.95,
            alpha: 0.1,
            k: 4,
            macro_gamma: 0.95,
            macro_alpha: 0.005,
            macro_target: MacroTarget::Cluster,
            ambiguity_weight: 1.0,
            blend: false,
            blend_sigma: 1.0,
            blend_alpha_max: 0.3,
            noise_eta: 0.0,
            region_eta: None,
            region_etas: Vec::new(),
            known_transitions: false,
            n_smooth_train: 200,
            n_smooth_test: 100,
            eval_every: 25,
            eval_episodes: 20,
            step_cap: 100,
            panel_starts: 0,
            warmup_fraction: 0.1,
            refresh_every: 100,
            max_retries: 3,
            rs_window: 0.25,
            q_alpha: 0.1,
            q_gamma: 0.95,
            q_epsilon_start: 0.1,
            q_epsilon_end: 0.01,
            goals: Vec::new(),
            switch_rounds: 100,
            distances: Vec::new(),
            random_caps: Vec::new(),
            random_episodes: 1000,
            value_score: ValueScore::Shifted,
            sample_actions: false,
            precision: 1.0,
        }
    }
}

/// Registered experiments: id and one-line description.
pub const EXPERIMENTS: [(&str, &str); 10] = [
    ("E1", "serpentine gridworld: hierarchical vs flat vs Q-learning, random baseline, R-stability"),
    ("E2", "serpentine gridworld: success against BFS distance to the goal"),
    ("E3", "four rooms: goal revaluation after each goal switch"),
    ("E4", "mountain car: planning decisions of hierarchical and flat agents"),
    ("E5", "PointMaze UMaze: single-goal comparison"),
    ("E6", "PointMaze UMaze: every goal on one trained model"),
    ("E6:medium", "PointMaze Medium: every goal on one trained model"),
    ("E6:large", "PointMaze Large: every goal on one trained model"),
    ("E7", "five rooms: short-path preference against noisy-room entropy"),
    ("E8", "gridworld with key: key before goal, macro plan length"),
];

impl ExperimentConfig {
    pub fn preset(id: &str) -> Result<Self> {
        let base = ExperimentConfig { experiment: id.to_string(), ..Default::default() };
        let cfg = match id {
            "E1" => ExperimentConfig {
                agents: vec![AgentKind::Hierarchical, AgentKind::Flat, AgentKind::QLearning],
                episode_steps: 5,
                panel_starts: 20,
                random_caps: vec![45, 100, 250, 500, 1000],
                ..base
            },
            "E2" => ExperimentConfig {
                protocol: Protocol::Distance,
                episode_steps: 5,
                distances: vec![5, 10, 15, 20, 25, 30, 35, 42],
                eval_episodes: 1,
                ..base
            },
            "E3" => ExperimentConfig {
                protocol: Protocol::Revaluation,
                env: "four_rooms".into(),
                agents: vec![AgentKind::Hierarchical, AgentKind::Flat, AgentKind::QLearning],
                episodes: 1000,
                episode_steps: 20,
                step_cap: 200,
                goals: vec![(8, 8), (0, 8), (8, 0), (6, 6)],
                ..base
            },
            "E4" => ExperimentConfig {
                env: "mountain_car".into(),
                gamma: 0.98,
                episodes: 1000,
                action_repeat: 5,
                k: 6,
                blend: true,
                blend_alpha_max: 0.3,
                ambiguity_weight: 10.0,
                step_cap: 200,
                eval_every: 100,
                ..base
            },
            "E5" => ExperimentConfig {
                env: "pointmaze_umaze".into(),
                seeds: 20,
                alpha: 0.05,
                episodes: 300,
                episode_steps: 100,
                blend: true,
                blend_alpha_max: 0.15,
                ambiguity_weight: 10.0,
                step_cap: 5000,
                eval_every: 50,
                eval_episodes: 1,
                ..base
            },
            "E6" | "E6:medium" | "E6:large" => {
                let (env, episodes, steps, k, cap, goals) = match id {
                    "E6" => ("pointmaze_umaze", 1500, 100, 4, 5000, vec![(3, 0), (3, 3), (2, 4), (0, 4), (0, 2)]),
                    "E6:medium" => {
                        ("pointmaze_medium", 5000, 100, 8, 10000, vec![(6, 6), (1, 6), (6, 1), (5, 4), (4, 6)])
                    }
                    _ => (
                        "pointmaze_large",
                        25000,
                        20,
                        12,
                        20000,
                        vec![(7, 10), (1, 10), (7, 1), (7, 5), (1, 6), (5, 9)],
                    ),
                };
                ExperimentConfig {
                    protocol: Protocol::Multigoal,
                    env: env.into(),
                    seeds: 3,
                    alpha: 0.05,
                    episodes,
                    episode_steps: steps,
                    k,
                    blend: true,
                    blend_alpha_max: 0.15,
                    ambiguity_weight: 10.0,
                    step_cap: cap,
                    eval_episodes: 1,
                    goals,
                    ..base
                }
            }
            "E7" => ExperimentConfig {
                protocol: Protocol::Entropy,
                env: "five_rooms".into(),
                agents: vec![AgentKind::Hierarchical],
                episode_steps: 20,
                k: 5,
                ambiguity_weight: 10.0,
                noise_eta: 0.1,
                region_etas: vec![0.1, 0.24, 0.38, 0.52, 0.66, 0.8],
                known_transitions: true,
                eval_episodes: 10,
                ..base
            },
            "E8" => ExperimentConfig {
                env: "key_grid".into(),
                episodes: 2000,
                episode_steps: 20,
                k: 5,
                ..base
            },
            other => return Err(Error::Config(format!("unknown experiment {other:?}"))),
        };
        Ok(cfg)
    }

    /// Reads a config file. Keys override the preset named by `experiment`
    /// (looked up first wherever it appears), or the defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let mut cfg = match pairs.iter().find(|(k, _)| k == "experiment") {
            Some((_, id)) => Self::preset(id).or_else(|_| {
                Ok::<_, Error>(ExperimentConfig { experiment: id.clone(), ..Default::default() })
            })?,
            None => ExperimentConfig::default(),
        };
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Applies a `KEY=VALUE` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not KEY=VALUE")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "experiment" => self.experiment = v.to_string(),
            "protocol" => {
                self.protocol = Protocol::parse(v).ok_or_else(|| bad(key, v))?;
            }
            "env" => self.env = v.to_string(),
            "agents" => {
                self.agents = list(v)
                    .map(|s| AgentKind::parse(s).ok_or_else(|| bad(key, s)))
                    .collect::<Result<_>>()?;
            }
            "seeds" => self.seeds = num(key, v)?,
            "seed_base" => self.seed_base = num(key, v)?,
            "episodes" => self.episodes = num(key, v)?,
            "episode_steps" => self.episode_steps = num(key, v)?,
            "action_repeat" => self.action_repeat = num(key, v)?,
            "gamma" => self.gamma = num(key, v)?,
            "alpha" => self.alpha = num(key, v)?,
            "k" => self.k = num(key, v)?,
            "macro_gamma" => self.macro_gamma = num(key, v)?,
            "macro_alpha" => self.macro_alpha = num(key, v)?,
            "macro_target" => {
                self.macro_target = match v {
                    "cluster" => MacroTarget::Cluster,
                    "bottleneck" => MacroTarget::Bottleneck,
                    _ => return Err(bad(key, v)),
                }
            }
            "ambiguity_weight" => self.ambiguity_weight = num(key, v)?,
            "blend" => self.blend = flag(key, v)?,
            "blend_sigma" | "sigma_rbf" => self.blend_sigma = num(key, v)?,
            "blend_alpha_max" | "alpha_max" => self.blend_alpha_max = num(key, v)?,
            "noise_eta" => self.noise_eta = num(key, v)?,
            "region_eta" => {
                self.region_eta = if v == "none" || v.is_empty() { None } else { Some(num(key, v)?) };
            }
            "region_etas" => self.region_etas = list(v).map(|s| num(key, s)).collect::<Result<_>>()?,
            "known_transitions" => self.known_transitions = flag(key, v)?,
            "n_smooth_train" => self.n_smooth_train = num(key, v)?,
            "n_smooth_test" => self.n_smooth_test = num(key, v)?,
            "eval_every" => self.eval_every = num(key, v)?,
            "eval_episodes" => self.eval_episodes = num(key, v)?,
            "step_cap" => self.step_cap = num(key, v)?,
            "panel_starts" => self.panel_starts = num(key, v)?,
            "warmup_fraction" => self.warmup_fraction = num(key, v)?,
            "refresh_every" => self.refresh_every = num(key, v)?,
            "max_retries" => self.max_retries = num(key, v)?,
            "rs_window" => self.rs_window = num(key, v)?,
            "q_alpha" => self.q_alpha = num(key, v)?,
            "q_gamma" => self.q_gamma = num(key, v)?,
            "q_epsilon_start" => self.q_epsilon_start = num(key, v)?,
            "q_epsilon_end" => self.q_epsilon_end = num(key, v)?,
            "goals" | "goal" => self.goals = list(v).map(|s| cell(key, s)).collect::<Result<_>>()?,
            "switch_rounds" => self.switch_rounds = num(key, v)?,
            "distances" => self.distances = list(v).map(|s| num(key, s)).collect::<Result<_>>()?,
            "random_caps" => self.random_caps = list(v).map(|s| num(key, s)).collect::<Result<_>>()?,
            "random_episodes" => self.random_episodes = num(key, v)?,
            "value_score" => {
                self.value_score = match v {
                    "shifted" => ValueScore::Shifted,
                    "raw" => ValueScore::Raw,
                    _ => return Err(bad(key, v)),
                }
            }
            "action_selection" => {
                self.sample_actions = match v {
                    "greedy" => false,
                    "sample" => true,
                    _ => return Err(bad(key, v)),
                }
            }
            "precision" => self.precision = num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn selection(&self) -> Selection {
        if self.sample_actions {
            Selection::Sample { precision: self.precision }
        } else {
            Selection::Greedy
        }
    }

    /// Checks ranges and cross-field consistency.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.seeds == 0 {
            return fail("seeds must be at least 1".into());
        }
        if self.agents.is_empty() {
            return fail("no agents".into());
        }
        if self.episodes == 0 || self.episode_steps == 0 || self.step_cap == 0 {
            return fail("episodes, episode_steps and step_cap must be positive".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) || !(self.macro_gamma > 0.0 && self.macro_gamma < 1.0) {
            return fail("discounts must lie in (0,1)".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) || !(self.macro_alpha > 0.0 && self.macro_alpha <= 1.0) {
            return fail("learning rates must lie in (0,1]".into());
        }
        if self.k < 2 {
            return fail("k must be at least 2".into());
        }
        if self.eval_every == 0 || self.eval_episodes == 0 || self.refresh_every == 0 {
            return fail("eval_every, eval_episodes and refresh_every must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return fail("warmup_fraction must lie in [0,1]".into());
        }
        if !(self.rs_window > 0.0 && self.rs_window <= 1.0) {
            return fail("rs_window must lie in (0,1]".into());
        }
        if self.max_retries == 0 {
            return fail("max_retries must be positive".into());
        }
        if self.blend && !(self.blend_sigma > 0.0 && (0.0..=1.0).contains(&self.blend_alpha_max)) {
            return fail("blend needs sigma > 0 and alpha_max in [0,1]".into());
        }
        for eta in std::iter::once(self.noise_eta).chain(self.region_eta).chain(self.region_etas.iter().copied()) {
            if !(0.0..1.0).contains(&eta) {
                return fail(format!("noise level {eta} outside [0,1)"));
            }
        }
        for (name, p) in [("q_epsilon_start", self.q_epsilon_start), ("q_epsilon_end", self.q_epsilon_end)] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} must lie in [0,1]"));
            }
        }
        if !(self.q_alpha > 0.0 && self.q_alpha <= 1.0) || !(self.q_gamma > 0.0 && self.q_gamma < 1.0) {
            return fail("Q-learning rates out of range".into());
        }
        if !(self.precision > 0.0 && self.precision.is_finite()) {
            return fail("precision must be positive".into());
        }
        match self.protocol {
            Protocol::Distance if self.distances.is_empty() => return fail("distance protocol needs distances".into()),
            Protocol::Revaluation if self.goals.len() < 2 => return fail("revaluation needs at least two goals".into()),
            Protocol::Multigoal if self.goals.is_empty() => return fail("multigoal protocol needs goals".into()),
            Protocol::Entropy if self.region_etas.is_empty() => return fail("entropy sweep needs region_etas".into()),
            _ => {}
        }
        if matches!(self.protocol, Protocol::Distance | Protocol::Multigoal | Protocol::Entropy)
            && self.agents.iter().any(|a| !a.uses_sr())
        {
            return fail(format!("the {} protocol runs only SR agents", self.protocol.name()));
        }
        crate::harness::experiments::EnvBox::build(self).map(|_| ())
    }

    /// Every key in a fixed order. Parsing this text gives back the same config.
    pub fn canonical(&self) -> String {
        let join = |xs: Vec<String>| xs.join(",");
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        put("experiment", self.experiment.clone());
        put("protocol", self.protocol.name().into());
        put("env", self.env.clone());
        put("agents", join(self.agents.iter().map(|a| a.name().to_string()).collect()));
        put("seeds", self.seeds.to_string());
        put("seed_base", self.seed_base.to_string());
        put("episodes", self.episodes.to_string());
        put("episode_steps", self.episode_steps.to_string());
        put("action_repeat", self.action_repeat.to_string());
        put("gamma", self.gamma.to_string());
        put("alpha", self.alpha.to_string());
        put("k", self.k.to_string());
        put("macro_gamma", self.macro_gamma.to_string());
        put("macro_alpha", self.macro_alpha.to_string());
        put(
            "macro_target",
            match self.macro_target {
                MacroTarget::Cluster => "cluster",
                MacroTarget::Bottleneck => "bottleneck",
            }
            .into(),
        );
        put("ambiguity_weight", self.ambiguity_weight.to_string());
        put("blend", self.blend.to_string());
        put("blend_sigma", self.blend_sigma.to_string());
        put("blend_alpha_max", self.blend_alpha_max.to_string());
        put("noise_eta", self.noise_eta.to_string());
        put("region_eta", self.region_eta.map_or("none".into(), |e| e.to_string()));
        put("region_etas", join(self.region_etas.iter().map(f64::to_string).collect()));
        put("known_transitions", self.known_transitions.to_string());
        put("n_smooth_train", self.n_smooth_train.to_string());
        put("n_smooth_test", self.n_smooth_test.to_string());
        put("eval_every", self.eval_every.to_string());
        put("eval_episodes", self.eval_episodes.to_string());
        put("step_cap", self.step_cap.to_string());
        put("panel_starts", self.panel_starts.to_string());
        put("warmup_fraction", self.warmup_fraction.to_string());
        put("refresh_every", self.refresh_every.to_string());
        put("max_retries", self.max_retries.to_string());
        put("rs_window", self.rs_window.to_string());
        put("q_alpha", self.q_alpha.to_string());
        put("q_gamma", self.q_gamma.to_string());
        put("q_epsilon_start", self.q_epsilon_start.to_string());
        put("q_epsilon_end", self.q_epsilon_end.to_string());
        put("goals", join(self.goals.iter().map(|(r, c)| format!("{r}:{c}")).collect()));
        put("switch_rounds", self.switch_rounds.to_string());
        put("distances", join(self.distances.iter().map(usize::to_string).collect()));
        put("random_caps", join(self.random_caps.iter().map(usize::to_string).collect()));
        put("random_episodes", self.random_episodes.to_string());
        put(
            "value_score",
            match self.value_score {
                ValueScore::Shifted => "shifted",
                ValueScore::Raw => "raw",
            }
            .into(),
        );
        put("action_selection", if self.sample_actions { "sample" } else { "greedy" }.into());
        put("precision", self.precision.to_string());
        out
    }

    /// Hex SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn uses_sr(&self) -> bool {
        self.agents.iter().any(|a| a.uses_sr())
    }

    pub fn has_agent(&self, kind: AgentKind) -> bool {
        self.agents.contains(&kind)
    }
}

fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, v)),
    }
}

fn cell(key: &str, v: &str) -> Result<Cell> {
    let (r, c) = v.split_once(':').ok_or_else(|| bad(key, v))?;
    Ok((num(key, r.trim())?, num(key, c.trim())?))
}

fn bad(key: &str, v: &str) -> Error {
    Error::Config(format!("bad value {v:?} for {key}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for (id, _) in EXPERIMENTS {
            let cfg = ExperimentConfig::preset(id).unwrap();
            cfg.validate().unwrap_or_else(|e| panic!("{id}: {e}"));
        }
        assert!(ExperimentConfig::preset("E9").is_err());
    }

    #[test]
    fn canonical_round_trip() {
        for (id, _) in EXPERIMENTS {
            let cfg = ExperimentConfig::preset(id).unwrap();
            let back = ExperimentConfig::from_text(&cfg.canonical()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.hash(), cfg.hash());
        }
    }

    #[test]
    fn file_and_overrides() {
        let text = "# comment\nexperiment = E2\nseeds = 3  # trailing\ngoals = 1:2, 3:4\n";
        let mut cfg = ExperimentConfig::from_text(text).unwrap();
        assert_eq!(cfg.protocol, Protocol::Distance);
        assert_eq!(cfg.seeds, 3);
        assert_eq!(cfg.goals, vec![(1, 2), (3, 4)]);
        cfg.apply_override("action_selection=sample").unwrap();
        cfg.apply_override("precision=4").unwrap();
        assert_eq!(cfg.selection(), Selection::Sample { precision: 4.0 });
        assert!(cfg.apply_override("nonsense=1").is_err());
        assert!(cfg.apply_override("gamma").is_err());
        assert!(ExperimentConfig::from_text("k = x").is_err());
        let mut broken = cfg.clone();
        broken.gamma = 1.5;
        assert!(broken.validate().is_err());
        assert_ne!(broken.hash(), cfg.hash());
    }
}
