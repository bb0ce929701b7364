//! Flat and hierarchical agents. Actions follow ν greedily or through a softmax at a set precision.

use nalgebra::DVector;
use rand::Rng;

use crate::abstraction::{MacroDecomposition, PolicyMap};
use crate::baselines::{epsilon_greedy, QTable};
use crate::core_model::{
    argmax, belief_update, efe_vector, goal_preference, policy_posterior, Belief, GenerativeModel, Trajectory,
    Transition,
};
use crate::envs::{Environment, SimRng};
use crate::error::{arg, Result};
use crate::successor::{action_values, greedy_action, nu_from_score, SuccessorMatrix, ValueScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentKind {
    Hierarchical,
    Flat,
    QLearning,
    Random,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [AgentKind::Hierarchical, AgentKind::Flat, AgentKind::QLearning, AgentKind::Random];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Hierarchical => "hierarchical",
            AgentKind::Flat => "flat",
            AgentKind::QLearning => "qlearning",
            AgentKind::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn uses_sr(self) -> bool {
        matches!(self, AgentKind::Hierarchical | AgentKind::Flat)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub belief: Belief,
    pub current_macro: Option<usize>,
    pub pending_policy: Option<PolicyMap>,
    pub steps_taken: usize,
    pub planning_decisions: usize,
    /// Set once a goal cluster is reached; from then on the agent acts on micro ν.
    pub final_approach: bool,
    /// Macro states of the plan in order: the starting cluster, then the
    /// destination of every macro decision.
    pub macro_plan: Vec<usize>,
    /// Clusters occupied so far. New macro actions prefer the others.
    pub visited: Vec<usize>,
}

impl AgentState {
    pub fn new(belief: Belief) -> Self {
        AgentState {
            belief,
            current_macro: None,
            pending_policy: None,
            steps_taken: 0,
            planning_decisions: 0,
            final_approach: false,
            macro_plan: Vec::new(),
            visited: Vec::new(),
        }
    }
}

/// Frozen planning quantities for one goal.
#[derive(Debug, Clone, PartialEq)]
pub struct Planner {
    pub model: GenerativeModel,
    pub sr: SuccessorMatrix,
    pub nu: DVector<f64>,
    pub decomp: Option<MacroDecomposition>,
    pub macro_nu: Option<DVector<f64>>,
    pub goal_clusters: Vec<usize>,
    pub goal_observations: Vec<usize>,
    pub score: ValueScore,
    /// ν inside the goal clusters, from the score with every other state zeroed.
    pub final_nu: DVector<f64>,
    pub selection: Selection,
}

/// How micro actions are picked from ν.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Selection {
    #[default]
    Greedy,
    /// Sample from `Q(a) = σ(−G_a)` with `G_a = −precision · value(a)`.
    Sample { precision: f64 },
}

impl Planner {
    /// Sets `C` (and `C_macro`) for the goal and caches both ν functions.
    pub fn new(
        model: &GenerativeModel,
        sr: &SuccessorMatrix,
        decomp: Option<&MacroDecomposition>,
        goal_observations: &[usize],
    ) -> Result<Self> {
        let model = model.with_preference(goal_preference(model.n_o(), goal_observations)?)?;
        let decomp = match decomp {
            Some(d) => {
                let mut d = d.clone();
                d.c_macro = d.macro_preference(&model, goal_observations)?;
                Some(d)
            }
            None => None,
        };
        Self::from_parts(model, sr.clone(), decomp, goal_observations, ValueScore::default())
    }

    /// Assembles a planner from an already goal-directed model and decomposition.
    pub fn from_parts(
        model: GenerativeModel,
        sr: SuccessorMatrix,
        decomp: Option<MacroDecomposition>,
        goal_observations: &[usize],
        score: ValueScore,
    ) -> Result<Self> {
        let per_state = score.score(&efe_vector(&model));
        let nu = nu_from_score(&sr, &per_state)?.nu;
        let macro_nu = decomp.as_ref().map(|d| d.macro_nu());
        let goal_clusters = decomp.as_ref().map_or_else(Vec::new, |d| d.goal_clusters(&model, goal_observations));
        let final_nu = match &decomp {
            Some(d) => {
                let inside = DVector::from_fn(per_state.len(), |s, _| {
                    if goal_clusters.contains(&d.labels[s]) { per_state[s] } else { 0.0 }
                });
                nu_from_score(&sr, &inside)?.nu
            }
            None => nu.clone(),
        };
        Ok(Planner {
            model,
            sr,
            nu,
            decomp,
            macro_nu,
            goal_clusters,
            goal_observations: goal_observations.to_vec(),
            score,
            final_nu,
            selection: Selection::Greedy,
        })
    }

    pub fn with_selection(mut self, selection: Selection) -> Self {
        self.selection = selection;
        self
    }

    /// The same planner with ν built from another per-state score.
    pub fn with_score(self, score: ValueScore) -> Result<Self> {
        let goals = self.goal_observations.clone();
        let selection = self.selection;
        Ok(Self::from_parts(self.model, self.sr, self.decomp, &goals, score)?.with_selection(selection))
    }

    /// The same planner aimed at a new goal.
    pub fn retarget(&self, goal_observations: &[usize]) -> Result<Self> {
        let (model, decomp) = replan_goal(&self.model, self.decomp.as_ref(), goal_observations)?;
        Ok(Self::from_parts(model, self.sr.clone(), decomp, goal_observations, self.score)?.with_selection(self.selection))
    }
}

/// Greedy ν action for the most probable state of the belief.
pub fn flat_step(model: &GenerativeModel, nu: &DVector<f64>, belief: &Belief) -> usize {
    greedy_action(&model.b, nu, belief.map_state())
}

/// Draws a micro action from the posterior over one-step policies. Actions
/// that never leave the state get no mass unless nothing else is left.
pub fn sample_step(model: &GenerativeModel, nu: &DVector<f64>, belief: &Belief, precision: f64, rng: &mut SimRng) -> Result<usize> {
    let values = action_values(&model.b, nu, belief.map_state());
    let moving: Vec<usize> = (0..values.len()).filter(|&a| values[a].is_finite()).collect();
    if moving.is_empty() {
        return Ok(flat_step(model, nu, belief));
    }
    let efe: Vec<f64> = moving.iter().map(|&a| -precision * values[a]).collect();
    let q = policy_posterior(&efe)?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in q.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(moving[i]);
        }
    }
    Ok(*moving.last().expect("non-empty"))
}

fn micro_action(planner: &Planner, nu: &DVector<f64>, belief: &Belief, rng: &mut SimRng) -> Result<usize> {
    match planner.selection {
        Selection::Greedy => Ok(flat_step(&planner.model, nu, belief)),
        Selection::Sample { precision } => sample_step(&planner.model, nu, belief, precision, rng),
    }
}

/// One hierarchical step. Elsewhere than a goal cluster the agent follows the
/// pending macro policy, choosing a new macro action by macro ν whenever none
/// applies. Once a goal cluster is reached it acts like the flat agent for the
/// rest of the episode. Each adopted policy, macro or final, is one decision.
pub fn hierarchical_step(planner: &Planner, mut agent: AgentState) -> Result<(usize, AgentState)> {
    let Some(decomp) = planner.decomp.as_ref() else {
        return arg("hierarchical step needs a macro decomposition");
    };
    let macro_nu = planner.macro_nu.as_ref().expect("set with the decomposition");
    let s = agent.belief.map_state();
    let here = decomp.labels[s];
    agent.current_macro = Some(here);
    if agent.macro_plan.is_empty() {
        agent.macro_plan.push(here);
    }
    if !agent.visited.contains(&here) {
        agent.visited.push(here);
    }
    if let Some(p) = &agent.pending_policy {
        if s == p.target_bottleneck || here == p.target_cluster || p.route(s).is_none() {
            agent.pending_policy = None;
        }
    }
    if agent.final_approach || planner.goal_clusters.contains(&here) {
        if !agent.final_approach {
            agent.final_approach = true;
            agent.pending_policy = None;
            agent.planning_decisions += 1;
        }
        return Ok((flat_step(&planner.model, &planner.final_nu, &agent.belief), agent));
    }
    if agent.pending_policy.is_none() {
        let options: Vec<usize> = decomp
            .neighbours(here)
            .into_iter()
            .filter(|&j| decomp.policy(here, j).is_some_and(|p| p.action(s).is_some()))
            .collect();
        if options.is_empty() {
            agent.planning_decisions += 1;
            return Ok((flat_step(&planner.model, &planner.nu, &agent.belief), agent));
        }
        let fresh: Vec<usize> = options.iter().copied().filter(|j| !agent.visited.contains(j)).collect();
        let options = if fresh.is_empty() { options } else { fresh };
        let scores: Vec<f64> = options.iter().map(|&j| macro_nu[j]).collect();
        let dest = options[argmax(&scores)];
        agent.pending_policy = decomp.policy(here, dest).cloned();
        agent.planning_decisions += 1;
        if agent.macro_plan.last() != Some(&dest) {
            agent.macro_plan.push(dest);
        }
    }
    let action = agent
        .pending_policy
        .as_ref()
        .and_then(|p| p.route(s))
        .unwrap_or_else(|| flat_step(&planner.model, &planner.nu, &agent.belief));
    Ok((action, agent))
}

/// Rebuilds `C` and `C_macro` for a new goal; everything learned is kept.
pub fn replan_goal(
    model: &GenerativeModel,
    decomp: Option<&MacroDecomposition>,
    new_goal_observations: &[usize],
) -> Result<(GenerativeModel, Option<MacroDecomposition>)> {
    let model = model.with_preference(goal_preference(model.n_o(), new_goal_observations)?)?;
    let decomp = match decomp {
        Some(d) => {
            let mut d = d.clone();
            d.c_macro = d.macro_preference(&model, new_goal_observations)?;
            Some(d)
        }
        None => None,
    };
    Ok((model, decomp))
}

/// How an episode chooses actions.
#[derive(Debug, Clone, Copy)]
pub enum Agent<'a> {
    Hierarchical(&'a Planner),
    Flat(&'a Planner),
    QLearning(&'a QTable),
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub total_reward: f64,
    pub steps: usize,
    pub planning_decisions: usize,
    pub success: bool,
    pub trajectory: Trajectory,
    pub macro_plan: Vec<usize>,
}

/// Resets the environment to its task start and runs one episode.
pub fn run_episode(env: &mut dyn Environment, agent: Agent, step_cap: usize, rng: &mut SimRng) -> Result<EpisodeResult> {
    let (state, obs) = env.reset(rng);
    run_from(env, agent, state, obs, step_cap, rng)
}

/// Runs from the environment's current state until the goal or `step_cap`.
pub fn run_from(
    env: &mut dyn Environment,
    agent: Agent,
    state: usize,
    obs: usize,
    step_cap: usize,
    rng: &mut SimRng,
) -> Result<EpisodeResult> {
    let model = match agent {
        Agent::Hierarchical(p) | Agent::Flat(p) => Some(&p.model),
        _ => None,
    };
    let belief = match model {
        Some(m) if m.a.nrows() == m.a.ncols() && is_identity_column(m, obs) => Belief::onehot(m.n_s(), obs),
        Some(m) => Belief::initial(m, obs)?,
        None => Belief::onehot(env.n_states(), state),
    };
    let mut st = AgentState::new(belief);
    let mut result = EpisodeResult {
        total_reward: 0.0,
        steps: 0,
        planning_decisions: 0,
        success: false,
        trajectory: Trajectory::new(),
        macro_plan: Vec::new(),
    };
    let mut state = state;
    while result.steps < step_cap {
        let action = match agent {
            Agent::Hierarchical(p) => {
                let (a, next) = hierarchical_step(p, st)?;
                st = next;
                if st.final_approach && p.selection != Selection::Greedy {
                    micro_action(p, &p.final_nu, &st.belief, rng)?
                } else {
                    a
                }
            }
            Agent::Flat(p) => {
                st.planning_decisions += 1;
                micro_action(p, &p.nu, &st.belief, rng)?
            }
            Agent::QLearning(q) => {
                st.planning_decisions += 1;
                epsilon_greedy(q, state, rng)
            }
            Agent::Random => {
                st.planning_decisions += 1;
                rng.gen_range(0..env.n_actions())
            }
        };
        let out = env.step(action, rng);
        st.steps_taken += 1;
        if let Some(m) = model {
            st.belief = belief_update(m, &st.belief, action, out.observation)?;
        }
        result.trajectory.push(Transition {
            state,
            action,
            next_state: out.state,
            observation: out.observation,
            reward: out.reward,
        });
        result.total_reward += out.reward;
        result.steps += 1;
        state = out.state;
        if out.done {
            result.success = true;
            break;
        }
    }
    result.planning_decisions = st.planning_decisions;
    result.macro_plan = st.macro_plan;
    Ok(result)
}

fn is_identity_column(model: &GenerativeModel, obs: usize) -> bool {
    obs < model.n_s() && model.a[(obs, obs)] == 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_model::uniform;
    use crate::successor::{analytic_sr, default_transition};
    use nalgebra::DMatrix;

    fn chain(n: usize) -> Vec<DMatrix<f64>> {
        let mut left = DMatrix::zeros(n, n);
        let mut right = DMatrix::zeros(n, n);
        for s in 0..n {
            left[(s.saturating_sub(1), s)] = 1.0;
            right[((s + 1).min(n - 1), s)] = 1.0;
        }
        vec![left, right]
    }

    #[test]
    fn flat_moves_toward_the_goal() {
        let b = chain(6);
        let sr = analytic_sr(&default_transition(&b), 0.95).unwrap();
        let model = GenerativeModel::mdp(b, uniform(6), uniform(6)).unwrap();
        let planner = Planner::new(&model, &sr, None, &[5]).unwrap();
        for s in 0..5 {
            assert_eq!(flat_step(&planner.model, &planner.nu, &Belief::onehot(6, s)), 1, "state {s}");
        }
        let back = planner.retarget(&[0]).unwrap();
        for s in 1..6 {
            assert_eq!(flat_step(&back.model, &back.nu, &Belief::onehot(6, s)), 0);
        }
    }

    #[test]
    fn replan_same_goal_is_identity() {
        let b = chain(4);
        let model = GenerativeModel::mdp(b, goal_preference(4, &[3]).unwrap(), uniform(4)).unwrap();
        let (again, _) = replan_goal(&model, None, &[3]).unwrap();
        assert_eq!(again, model);
        let (moved, _) = replan_goal(&model, None, &[0]).unwrap();
        assert_eq!(moved.b, model.b);
        assert_eq!(moved.a, model.a);
        assert_ne!(moved.c, model.c);
    }

    #[test]
    fn agent_kinds_round_trip() {
        for k in AgentKind::ALL {
            assert_eq!(AgentKind::parse(k.name()), Some(k));
        }
    }
}
