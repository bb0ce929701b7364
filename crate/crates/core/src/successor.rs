//! Successor matrices: TD learning, the closed form `(I − γT)^{-1}`, and the
//! value functions derived from them.

use nalgebra::{DMatrix, DVector};

use crate::core_model::{softmax, EfeVector};
use crate::error::{arg, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessorMatrix {
    pub m: DMatrix<f64>,
    pub gamma: f64,
    pub alpha: f64,
    pub update_count: u64,
}

impl SuccessorMatrix {
    /// TD starting point: the identity.
    pub fn identity(n: usize, gamma: f64, alpha: f64) -> Result<Self> {
        check_rates(gamma, alpha)?;
        Ok(SuccessorMatrix { m: DMatrix::identity(n, n), gamma, alpha, update_count: 0 })
    }

    pub fn zeros(n: usize, gamma: f64, alpha: f64) -> Result<Self> {
        check_rates(gamma, alpha)?;
        Ok(SuccessorMatrix { m: DMatrix::zeros(n, n), gamma, alpha, update_count: 0 })
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    /// In-place form of [`td_update`].
    pub fn update(&mut self, s: usize, s_next: usize) -> Result<()> {
        let n = self.n();
        if s >= n || s_next >= n {
            return arg(format!("transition {s} -> {s_next} out of range for {n} states"));
        }
        let (alpha, gamma) = (self.alpha, self.gamma);
        // Read the successor row first so a self-transition uses the pre-update values.
        let next_row: Vec<f64> = self.m.row(s_next).iter().copied().collect();
        for (j, &nj) in next_row.iter().enumerate() {
            let target = if j == s { 1.0 } else { 0.0 } + gamma * nj;
            let cur = self.m[(s, j)];
            self.m[(s, j)] = cur + alpha * (target - cur);
        }
        self.update_count += 1;
        Ok(())
    }

    pub fn row_sums(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.m.row_iter().map(|r| r.sum()))
    }
}

fn check_rates(gamma: f64, alpha: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return arg(format!("gamma must lie in (0,1), got {gamma}"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return arg(format!("alpha must lie in (0,1], got {alpha}"));
    }
    Ok(())
}

/// `M(s,:) += α(1_s + γM(s',:) − M(s,:))`, returning a new matrix. The
/// indicator of the current state makes `(I − γT)⁻¹` the fixed point.
pub fn td_update(sr: &SuccessorMatrix, s: usize, s_next: usize) -> Result<SuccessorMatrix> {
    let mut next = sr.clone();
    next.update(s, s_next)?;
    Ok(next)
}

/// Closed-form successor matrix of a row-stochastic `T`.
pub fn analytic_sr(t: &DMatrix<f64>, gamma: f64) -> Result<SuccessorMatrix> {
    check_rates(gamma, 1.0)?;
    let n = t.nrows();
    if t.ncols() != n {
        return arg("transition matrix must be square");
    }
    for (i, row) in t.row_iter().enumerate() {
        if (row.sum() - 1.0).abs() > 1e-9 || row.iter().any(|&x| x < 0.0) {
            return arg(format!("row {i} of T is not a distribution"));
        }
    }
    let system = DMatrix::<f64>::identity(n, n) - t * gamma;
    let m = system
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Internal("I - γT is singular".into()))?;
    Ok(SuccessorMatrix { m, gamma, alpha: 1.0, update_count: 0 })
}

/// Uniform-policy transition matrix in row convention: `((1/n_a) Σ_a B_a)ᵀ`.
pub fn default_transition(b: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = b[0].nrows();
    let mut mean = DMatrix::zeros(n, n);
    for ba in b {
        mean += ba;
    }
    (mean / b.len() as f64).transpose()
}

/// `v = M r`.
pub fn value_from_sr(sr: &SuccessorMatrix, r: &DVector<f64>) -> Result<DVector<f64>> {
    if r.len() != sr.n() {
        return arg(format!("reward length {} does not match {} states", r.len(), sr.n()));
    }
    Ok(&sr.m * r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfeValueFunction {
    pub nu: DVector<f64>,
}

/// Per-state goal-seeking score `σ(−G) − min σ(−G)`: zero at the worst
/// state, largest where the expected free energy is lowest. When `A` is the
/// identity this is `C` less its floor, so non-goal states score zero.
pub fn goal_score(g: &EfeVector) -> DVector<f64> {
    let neg: Vec<f64> = g.g.iter().map(|x| -x).collect();
    let p = DVector::from_vec(softmax(&neg));
    let floor = p.min();
    p.map(|x| x - floor)
}

/// `ν = M · σ(−G)`.
pub fn efe_value(sr: &SuccessorMatrix, g: &EfeVector) -> Result<EfeValueFunction> {
    nu_from_score(sr, &goal_score(g))
}

/// Per-state score behind a value function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueScore {
    /// [`goal_score`]: zero away from the goal.
    #[default]
    Shifted,
    /// `σ(−G)` itself, so every state keeps its share of the preference floor.
    Raw,
}

impl ValueScore {
    pub fn score(self, g: &EfeVector) -> DVector<f64> {
        match self {
            ValueScore::Shifted => goal_score(g),
            ValueScore::Raw => {
                let neg: Vec<f64> = g.g.iter().map(|x| -x).collect();
                DVector::from_vec(softmax(&neg))
            }
        }
    }
}

/// `ν = M · score` for an arbitrary per-state score.
pub fn nu_from_score(sr: &SuccessorMatrix, score: &DVector<f64>) -> Result<EfeValueFunction> {
    if score.len() != sr.n() {
        return arg(format!("score length {} does not match {} states", score.len(), sr.n()));
    }
    Ok(EfeValueFunction { nu: &sr.m * score })
}

/// Frobenius norm of the difference, divided by the state count.
pub fn sr_distance(a: &SuccessorMatrix, b: &SuccessorMatrix) -> Result<f64> {
    if a.m.shape() != b.m.shape() {
        return arg("successor matrices differ in shape");
    }
    Ok((&a.m - &b.m).norm() / a.n() as f64)
}

/// Expected ν of the state each action leads to, conditioned on leaving
/// `state`. Actions that never leave score `−∞`.
pub fn action_values(b: &[DMatrix<f64>], nu: &DVector<f64>, state: usize) -> Vec<f64> {
    b.iter()
        .map(|ba| {
            let stay = ba[(state, state)];
            if stay >= 1.0 - MOVE_EPS {
                f64::NEG_INFINITY
            } else {
                (ba.column(state).dot(nu) - stay * nu[state]) / (1.0 - stay)
            }
        })
        .collect()
}

const MOVE_EPS: f64 = 1e-9;

/// The action leading to the highest-ν next state; ties go to the lowest
/// action index. When no action leaves the state the first action is returned.
pub fn greedy_action(b: &[DMatrix<f64>], nu: &DVector<f64>, state: usize) -> usize {
    crate::core_model::argmax(&action_values(b, nu, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn td_from_zero() {
        let sr = SuccessorMatrix::zeros(6, 0.95, 0.1).unwrap();
        let next = td_update(&sr, 2, 5).unwrap();
        assert_relative_eq!(next.m[(2, 2)], 0.1);
        assert_relative_eq!(next.m.sum(), 0.1);
        assert_eq!(next.update_count, 1);
        let selfloop = td_update(&sr, 3, 3).unwrap();
        assert_relative_eq!(selfloop.m[(3, 3)], 0.1);
        assert!(td_update(&sr, 6, 0).is_err());
    }

    #[test]
    fn analytic_examples() {
        let m = analytic_sr(&DMatrix::identity(3, 3), 0.95).unwrap();
        assert_relative_eq!(m.m, DMatrix::identity(3, 3) * 20.0, epsilon = 1e-10);
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let m = analytic_sr(&swap, 0.5).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[4.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0]);
        assert_relative_eq!(m.m, expected, epsilon = 1e-12);
    }

    #[test]
    fn default_transition_single_action_is_transpose() {
        let b = DMatrix::from_row_slice(2, 2, &[0.3, 1.0, 0.7, 0.0]);
        let t = default_transition(&[b.clone()]);
        assert_eq!(t, b.transpose());
        let t2 = default_transition(&[b.clone(), b.transpose()]);
        assert_relative_eq!(t2.clone(), t2.transpose(), epsilon = 1e-15);
    }

    #[test]
    fn value_and_distance_basics() {
        let sr = SuccessorMatrix { m: DMatrix::identity(3, 3) * 20.0, gamma: 0.95, alpha: 0.1, update_count: 0 };
        let r = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(value_from_sr(&sr, &r).unwrap(), r.clone() * 20.0);
        assert_eq!(value_from_sr(&sr, &DVector::zeros(3)).unwrap(), DVector::zeros(3));
        assert!(value_from_sr(&sr, &DVector::zeros(2)).is_err());
        let mut other = sr.clone();
        assert_eq!(sr_distance(&sr, &other).unwrap(), 0.0);
        other.m[(1, 2)] += 0.6;
        assert_relative_eq!(sr_distance(&sr, &other).unwrap(), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn efe_value_with_identity_sr_is_the_score() {
        let g = EfeVector {
            g: DVector::from_vec(vec![1.0, 2.0, 0.5]),
            risk: DVector::from_vec(vec![1.0, 2.0, 0.5]),
            ambiguity: DVector::zeros(3),
        };
        let sr = SuccessorMatrix::identity(3, 0.9, 0.1).unwrap();
        let nu = efe_value(&sr, &g).unwrap();
        assert_relative_eq!(nu.nu, goal_score(&g), epsilon = 1e-15);
        assert_eq!(crate::core_model::argmax(nu.nu.as_slice()), 2);
    }
}
