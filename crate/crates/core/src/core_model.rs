//! Discrete POMDP generative model: exact belief filtering, one-step expected
//! free energy and count-based transition learning.
//!
//! Conventions: `A` is `n_o × n_s` with one distribution per column, and every
//! `B[a]` maps a current-state column to a next-state distribution, so
//! `B[a][(next, cur)]` is `P(next | cur, a)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{arg, Result};

/// Floor applied before every logarithm.
pub const LOG_FLOOR: f64 = 1e-16;

/// Preference mass placed on goal observations; the rest is spread uniformly.
pub const GOAL_MASS: f64 = 0.99;

const STOCHASTIC_TOL: f64 = 1e-9;

#[inline]
pub fn ln_clamped(x: f64) -> f64 {
    x.max(LOG_FLOOR).ln()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeModel {
    pub a: DMatrix<f64>,
    pub b: Vec<DMatrix<f64>>,
    pub c: DVector<f64>,
    pub d: DVector<f64>,
}

impl GenerativeModel {
    pub fn new(a: DMatrix<f64>, b: Vec<DMatrix<f64>>, c: DVector<f64>, d: DVector<f64>) -> Result<Self> {
        let model = GenerativeModel { a, b, c, d };
        model.validate()?;
        Ok(model)
    }

    /// Fully observed model: `A` is the identity and `C` lives over states.
    pub fn mdp(b: Vec<DMatrix<f64>>, c: DVector<f64>, d: DVector<f64>) -> Result<Self> {
        let n = c.len();
        Self::new(DMatrix::identity(n, n), b, c, d)
    }

    pub fn n_s(&self) -> usize {
        self.a.ncols()
    }

    pub fn n_o(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_a(&self) -> usize {
        self.b.len()
    }

    pub fn with_preference(&self, c: DVector<f64>) -> Result<Self> {
        let mut next = self.clone();
        next.c = c;
        next.validate()?;
        Ok(next)
    }

    /// The observation a state most likely emits.
    pub fn observation_of(&self, state: usize) -> usize {
        let col: Vec<f64> = self.a.column(state).iter().copied().collect();
        argmax(&col)
    }

    /// States whose most likely observation is one of `observations`.
    pub fn states_emitting(&self, observations: &[usize]) -> Vec<usize> {
        (0..self.n_s())
            .filter(|&s| observations.contains(&self.observation_of(s)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let (n_o, n_s) = self.a.shape();
        if n_s == 0 || n_o == 0 {
            return arg("model must have at least one state and one observation");
        }
        if self.b.is_empty() {
            return arg("model needs at least one action");
        }
        check_columns("A", &self.a)?;
        for (i, b) in self.b.iter().enumerate() {
            if b.shape() != (n_s, n_s) {
                return arg(format!("B[{i}] is {:?}, expected {n_s}x{n_s}", b.shape()));
            }
            check_columns(&format!("B[{i}]"), b)?;
        }
        check_distribution("C", self.c.as_slice(), n_o)?;
        check_distribution("D", self.d.as_slice(), n_s)?;
        Ok(())
    }
}

fn check_columns(name: &str, m: &DMatrix<f64>) -> Result<()> {
    for (j, col) in m.column_iter().enumerate() {
        if col.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return arg(format!("{name} column {j} has a negative or non-finite entry"));
        }
        let total: f64 = col.sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return arg(format!("{name} column {j} sums to {total}"));
        }
    }
    Ok(())
}

fn check_distribution(name: &str, v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return arg(format!("{name} has length {}, expected {len}", v.len()));
    }
    if v.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return arg(format!("{name} must be strictly positive"));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return arg(format!("{name} sums to {total}"));
    }
    Ok(())
}

/// `GOAL_MASS` shared by the goal observations plus a uniform smear of the rest.
pub fn goal_preference(n_o: usize, goals: &[usize]) -> Result<DVector<f64>> {
    if goals.is_empty() {
        return arg("at least one goal observation is required");
    }
    if let Some(&g) = goals.iter().find(|&&g| g >= n_o) {
        return arg(format!("goal observation {g} out of range for {n_o} observations"));
    }
    let mut c = DVector::from_element(n_o, (1.0 - GOAL_MASS) / n_o as f64);
    let mut unique = goals.to_vec();
    unique.sort_unstable();
    unique.dedup();
    let share = GOAL_MASS / unique.len() as f64;
    for g in unique {
        c[g] += share;
    }
    Ok(c)
}

pub fn uniform(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0 / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    pub b: DVector<f64>,
    pub step: usize,
}

impl Belief {
    pub fn onehot(n: usize, state: usize) -> Self {
        let mut b = DVector::zeros(n);
        b[state] = 1.0;
        Belief { b, step: 0 }
    }

    /// Posterior after the first observation under the prior `D`.
    pub fn initial(model: &GenerativeModel, obs: usize) -> Result<Self> {
        if obs >= model.n_o() {
            return arg(format!("observation {obs} out of range"));
        }
        let logits: Vec<f64> = (0..model.n_s())
            .map(|s| ln_clamped(model.a[(obs, s)]) + ln_clamped(model.d[s]))
            .collect();
        Ok(Belief { b: DVector::from_vec(softmax(&logits)), step: 0 })
    }

    /// Most probable state; ties go to the lowest index.
    pub fn map_state(&self) -> usize {
        argmax(self.b.as_slice())
    }

    fn support_of_one(&self) -> Option<usize> {
        let s = self.map_state();
        (self.b[s] == 1.0).then_some(s)
    }
}

/// Exact Bayes filter: `σ(ln A[obs,:] + ln(B_a · b))`, evaluated in linear space.
pub fn belief_update(model: &GenerativeModel, prev: &Belief, action: usize, obs: usize) -> Result<Belief> {
    if action >= model.n_a() {
        return arg(format!("action {action} out of range for {} actions", model.n_a()));
    }
    if obs >= model.n_o() {
        return arg(format!("observation {obs} out of range for {} observations", model.n_o()));
    }
    if prev.b.len() != model.n_s() {
        return arg("belief length does not match the model");
    }
    let ba = &model.b[action];
    let predicted: DVector<f64> = match prev.support_of_one() {
        Some(s) => ba.column(s).into_owned(),
        None => ba * &prev.b,
    };
    let joint: Vec<f64> = (0..model.n_s()).map(|s| model.a[(obs, s)] * predicted[s]).collect();
    let evidence: f64 = joint.iter().sum();
    let b = if evidence > 0.0 {
        joint.iter().map(|p| p / evidence).collect()
    } else {
        // The prediction rules the observation out; trust the likelihood alone.
        let row: Vec<f64> = (0..model.n_s()).map(|s| ln_clamped(model.a[(obs, s)])).collect();
        softmax(&row)
    };
    Ok(Belief { b: DVector::from_vec(b), step: prev.step + 1 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfeVector {
    pub g: DVector<f64>,
    pub risk: DVector<f64>,
    pub ambiguity: DVector<f64>,
}

/// One-step expected free energy of every one-hot state.
pub fn efe_vector(model: &GenerativeModel) -> EfeVector {
    let n_s = model.n_s();
    let ln_c: Vec<f64> = model.c.iter().map(|&c| ln_clamped(c)).collect();
    let mut risk = DVector::zeros(n_s);
    let mut ambiguity = DVector::zeros(n_s);
    for s in 0..n_s {
        let mut r = 0.0;
        let mut h = 0.0;
        for (o, &p) in model.a.column(s).iter().enumerate() {
            if p > 0.0 {
                let lp = ln_clamped(p);
                r += p * (lp - ln_c[o]);
                h -= p * lp;
            }
        }
        risk[s] = r;
        ambiguity[s] = h;
    }
    let g = &risk + &ambiguity;
    EfeVector { g, risk, ambiguity }
}

/// `Q(π) = σ(−G_π)`.
pub fn policy_posterior(efe_totals: &[f64]) -> Result<Vec<f64>> {
    if efe_totals.is_empty() {
        return arg("policy posterior needs at least one candidate");
    }
    if efe_totals.iter().any(|g| !g.is_finite()) {
        return arg("policy EFE values must be finite");
    }
    let neg: Vec<f64> = efe_totals.iter().map(|g| -g).collect();
    Ok(softmax(&neg))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub observation: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn extend(&mut self, other: &Trajectory) {
        self.transitions.extend_from_slice(&other.transitions);
    }

    /// Visited states in order: the first state followed by every next state.
    pub fn states(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len() + 1);
        if let Some(first) = self.transitions.first() {
            out.push(first.state);
        }
        out.extend(self.transitions.iter().map(|t| t.next_state));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionCounts {
    pub counts: Vec<DMatrix<u64>>,
}

impl TransitionCounts {
    pub fn zeros(n_s: usize, n_a: usize) -> Self {
        TransitionCounts { counts: vec![DMatrix::zeros(n_s, n_s); n_a] }
    }

    pub fn n_s(&self) -> usize {
        self.counts.first().map_or(0, |m| m.nrows())
    }

    pub fn n_a(&self) -> usize {
        self.counts.len()
    }

    pub fn record(&mut self, state: usize, action: usize, next_state: usize) -> Result<()> {
        let n_s = self.n_s();
        if action >= self.n_a() || state >= n_s || next_state >= n_s {
            return arg(format!(
                "transition ({state}, {action}, {next_state}) out of range for {n_s} states and {} actions",
                self.n_a()
            ));
        }
        self.counts[action][(next_state, state)] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|m| m.iter().sum::<u64>()).sum()
    }
}

/// Returns a copy of `counts` incremented once per transition of `traj`.
pub fn learn_transitions(counts: &TransitionCounts, traj: &Trajectory) -> Result<TransitionCounts> {
    let mut next = counts.clone();
    for t in &traj.transitions {
        next.record(t.state, t.action, t.next_state)?;
    }
    Ok(next)
}

/// Column-normalizes every slice; unvisited columns become self-loops.
pub fn normalize_counts(counts: &TransitionCounts) -> Vec<DMatrix<f64>> {
    counts
        .counts
        .iter()
        .map(|m| {
            let n = m.nrows();
            let mut b = DMatrix::zeros(n, n);
            for j in 0..n {
                let total: u64 = m.column(j).iter().sum();
                if total == 0 {
                    b[(j, j)] = 1.0;
                } else {
                    let t = total as f64;
                    for i in 0..n {
                        b[(i, j)] = m[(i, j)] as f64 / t;
                    }
                }
            }
            b
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn deterministic_b(n: usize, map: &[usize]) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(n, n);
        for (cur, &next) in map.iter().enumerate() {
            b[(next, cur)] = 1.0;
        }
        b
    }

    #[test]
    fn identity_likelihood_pins_observed_state() {
        let n = 5;
        let b = deterministic_b(n, &[1, 2, 3, 4, 4]);
        let model = GenerativeModel::mdp(vec![b], uniform(n), uniform(n)).unwrap();
        let prev = Belief { b: DVector::from_vec(vec![0.1, 0.2, 0.3, 0.2, 0.2]), step: 0 };
        let post = belief_update(&model, &prev, 0, 2).unwrap();
        assert!(post.b[2] >= 1.0 - 1e-6);
        assert_eq!(post.step, 1);
    }

    #[test]
    fn uninformative_likelihood_keeps_prediction() {
        let n = 4;
        let a = DMatrix::from_element(n, n, 0.25);
        let b = deterministic_b(n, &[2, 0, 3, 1]);
        let model = GenerativeModel::new(a, vec![b], uniform(n), uniform(n)).unwrap();
        let post = belief_update(&model, &Belief::onehot(n, 0), 0, 3).unwrap();
        assert_relative_eq!(post.b[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn belief_update_rejects_bad_indices() {
        let model = GenerativeModel::mdp(vec![DMatrix::identity(2, 2)], uniform(2), uniform(2)).unwrap();
        assert!(belief_update(&model, &Belief::onehot(2, 0), 1, 0).is_err());
        assert!(belief_update(&model, &Belief::onehot(2, 0), 0, 2).is_err());
    }

    #[test]
    fn efe_identity_uniform_preference() {
        let n = 4;
        let model = GenerativeModel::mdp(vec![DMatrix::identity(n, n)], uniform(n), uniform(n)).unwrap();
        let efe = efe_vector(&model);
        for s in 0..n {
            assert_relative_eq!(efe.g[s], 4f64.ln(), epsilon = 1e-12);
            assert_eq!(efe.ambiguity[s], 0.0);
        }
    }

    #[test]
    fn efe_goal_risk_is_negative_log_preference() {
        let n = 6;
        let c = goal_preference(n, &[3]).unwrap();
        let model = GenerativeModel::mdp(vec![DMatrix::identity(n, n)], c.clone(), uniform(n)).unwrap();
        let efe = efe_vector(&model);
        assert_relative_eq!(efe.risk[3], -c[3].ln(), epsilon = 1e-12);
    }

    #[test]
    fn ambiguity_of_noisy_column() {
        let mut a = DMatrix::zeros(5, 5);
        a[(0, 0)] = 0.8;
        for o in 1..5 {
            a[(o, 0)] = 0.05;
        }
        for s in 1..5 {
            a[(s, s)] = 1.0;
        }
        let model = GenerativeModel::new(a, vec![DMatrix::identity(5, 5)], uniform(5), uniform(5)).unwrap();
        let efe = efe_vector(&model);
        let expected = -(0.8f64 * 0.8f64.ln() + 4.0 * 0.05 * 0.05f64.ln());
        assert_relative_eq!(efe.ambiguity[0], expected, epsilon = 1e-12);
        assert!((efe.ambiguity[0] - 0.7776).abs() < 1e-4);
    }

    #[test]
    fn counts_and_normalization() {
        let mut counts = TransitionCounts::zeros(6, 2);
        let mut traj = Trajectory::new();
        assert_eq!(learn_transitions(&counts, &traj).unwrap(), counts);
        traj.push(Transition { state: 2, action: 1, next_state: 3, observation: 3, reward: 0.0 });
        let learned = learn_transitions(&counts, &traj).unwrap();
        assert_eq!(learned.counts[1][(3, 2)], 1);
        assert_eq!(learned.total(), 1);
        assert_eq!(counts.total(), 0);

        counts.counts[0][(3, 2)] = 4;
        counts.counts[0][(5, 2)] = 1;
        let b = normalize_counts(&counts);
        assert_relative_eq!(b[0][(3, 2)], 0.8);
        assert_relative_eq!(b[0][(5, 2)], 0.2);
        assert_eq!(b[0][(0, 0)], 1.0);
        assert_eq!(b[1][(4, 4)], 1.0);
    }

    #[test]
    fn posterior_examples() {
        let p = policy_posterior(&[2.0, 2.0, 2.0]).unwrap();
        p.iter().for_each(|&x| assert_relative_eq!(x, 1.0 / 3.0, epsilon = 1e-15));
        let p = policy_posterior(&[0.0, 3f64.ln()]).unwrap();
        assert_relative_eq!(p[0], 0.75, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.25, epsilon = 1e-15);
        let q = policy_posterior(&[10.0, 10.0 + 3f64.ln()]).unwrap();
        assert_relative_eq!(q[0], p[0], epsilon = 1e-15);
        assert!(policy_posterior(&[]).is_err());
    }

    #[test]
    fn goal_preference_is_normalized() {
        let c = goal_preference(10, &[4]).unwrap();
        assert_relative_eq!(c.sum(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(c[4], 0.99 + 0.001, epsilon = 1e-15);
        let c2 = goal_preference(10, &[1, 2]).unwrap();
        assert_relative_eq!(c2[1], 0.495 + 0.001, epsilon = 1e-15);
        assert!(goal_preference(3, &[3]).is_err());
    }
}
