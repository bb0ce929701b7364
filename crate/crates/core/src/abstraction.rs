//! Macro states and macro actions discovered from a learned successor matrix.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::core_model::{efe_vector, goal_preference, ln_clamped, EfeVector, GenerativeModel, Trajectory};
use crate::error::{arg, Error, Result};
use crate::successor::{greedy_action, nu_from_score, goal_score, SuccessorMatrix};

const KMEANS_RESTARTS: usize = 20;
const KMEANS_MAX_ITERS: usize = 300;

/// Symmetric non-negative affinity between states.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub w: DMatrix<f64>,
}

impl AffinityMatrix {
    pub fn n(&self) -> usize {
        self.w.nrows()
    }
}

/// `minmax(max(M, Mᵀ))`. A constant matrix maps to the identity.
pub fn sr_affinity(m: &DMatrix<f64>) -> Result<AffinityMatrix> {
    if !m.is_square() {
        return arg("successor matrix must be square");
    }
    let n = m.nrows();
    let sym = DMatrix::from_fn(n, n, |i, j| m[(i, j)].max(m[(j, i)]));
    let (lo, hi) = (sym.min(), sym.max());
    if hi - lo <= 0.0 {
        return Ok(AffinityMatrix { w: DMatrix::identity(n, n) });
    }
    Ok(AffinityMatrix { w: sym.map(|x| (x - lo) / (hi - lo)) })
}

/// Gaussian kernel `exp(−‖xᵢ − xⱼ‖² / 2σ²)` over row coordinates.
pub fn spatial_rbf(coords: &DMatrix<f64>, sigma: f64) -> Result<AffinityMatrix> {
    if !(sigma > 0.0) {
        return arg(format!("RBF bandwidth must be positive, got {sigma}"));
    }
    let n = coords.nrows();
    let denom = 2.0 * sigma * sigma;
    let w = DMatrix::from_fn(n, n, |i, j| {
        let d2 = (coords.row(i) - coords.row(j)).norm_squared();
        (-d2 / denom).exp()
    });
    Ok(AffinityMatrix { w })
}

/// Confidence-weighted blend: `α_ij = α_max (1 − min(ĉ_i, ĉ_j))` with
/// `ĉ_i = r_i / max r`.
pub fn adaptive_blend(
    sr_norm: &AffinityMatrix,
    kernel: &AffinityMatrix,
    row_sums: &DVector<f64>,
    alpha_max: f64,
) -> Result<AffinityMatrix> {
    let n = sr_norm.n();
    if kernel.n() != n || row_sums.len() != n {
        return arg("blend inputs differ in size");
    }
    if !(0.0..=1.0).contains(&alpha_max) {
        return arg(format!("alpha_max must lie in [0,1], got {alpha_max}"));
    }
    let top = row_sums.max();
    let conf: Vec<f64> = if top > 0.0 {
        row_sums.iter().map(|&r| (r / top).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; n]
    };
    let w = DMatrix::from_fn(n, n, |i, j| {
        let a = alpha_max * (1.0 - conf[i].min(conf[j]));
        (1.0 - a) * sr_norm.w[(i, j)] + a * kernel.w[(i, j)]
    });
    Ok(AffinityMatrix { w })
}

/// Normalized spectral clustering. Returns labels in `[0, k)`, numbered by
/// the lowest state of each cluster, and the row-normalized embedding.
pub fn spectral_cluster(w: &AffinityMatrix, k: usize, seed: u64) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let n = w.n();
    if k == 0 || k > n {
        return arg(format!("cannot form {k} clusters from {n} states"));
    }
    let scale: Vec<f64> = w
        .w
        .row_iter()
        .map(|r| {
            let d = r.sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let norm = DMatrix::from_fn(n, n, |i, j| scale[i] * w.w[(i, j)] * scale[j]);
    // Smallest eigenvalues of I − N are the largest of N.
    let eig = SymmetricEigen::new(norm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut embedding = DMatrix::zeros(n, k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        embedding.column_mut(c).copy_from(&(v * sign));
    }
    for mut row in embedding.row_iter_mut() {
        let len = row.norm();
        if len > 0.0 {
            row /= len;
        }
    }
    let labels = kmeans(&embedding, k, seed);
    Ok((canonical_labels(&labels), embedding))
}

/// For each cluster, whether its states form one component of the
/// undirected graph with an edge wherever `t` (row convention) is positive.
/// Empty clusters count as connected.
pub fn cluster_connectivity(labels: &[usize], t: &DMatrix<f64>) -> Result<Vec<bool>> {
    let n = labels.len();
    if t.nrows() != n || t.ncols() != n {
        return arg(format!("{} labels for a {}x{} transition matrix", n, t.nrows(), t.ncols()));
    }
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut out = vec![true; k];
    for (c, ok) in out.iter_mut().enumerate() {
        let members: Vec<usize> = (0..n).filter(|&s| labels[s] == c).collect();
        let Some(&first) = members.first() else { continue };
        let mut seen = vec![false; n];
        seen[first] = true;
        let mut stack = vec![first];
        let mut count = 1;
        while let Some(s) = stack.pop() {
            for &u in &members {
                if !seen[u] && (t[(s, u)] > 0.0 || t[(u, s)] > 0.0) {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        *ok = count == members.len();
    }
    Ok(out)
}

/// Relabels clusters in order of their lowest member.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

fn sq_dist(points: &DMatrix<f64>, i: usize, center: &[f64]) -> f64 {
    points.row(i).iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn nearest(points: &DMatrix<f64>, i: usize, centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(points, i, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ with restarts; the lowest-inertia run wins, earlier on ties.
fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let (inertia, labels) = kmeans_once(points, k, &mut rng);
        if best.as_ref().map_or(true, |(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    best.map(|(_, l)| l).unwrap_or_default()
}

fn kmeans_once(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<usize>) {
    let (n, dim) = points.shape();
    let row = |i: usize| -> Vec<f64> { points.row(i).iter().copied().collect() };
    let mut centers = vec![row(rng.gen_range(0..n))];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.push(row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, centers.last().expect("just pushed")));
        }
    }
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let (c, _) = nearest(points, i, &centers);
            if *label != c {
                *label = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(points.row(i).iter()) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                // Reseed an empty cluster at the point farthest from its centre.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(points, a, &centers[labels[a]]);
                        let db = sq_dist(points, b, &centers[labels[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("non-empty");
                centers[c] = row(far);
            }
        }
    }
    let inertia = (0..n).map(|i| sq_dist(points, i, &centers[labels[i]])).sum();
    (inertia, labels)
}

/// Entry state for each observed ordered cluster crossing, the most frequent
/// one when several exist (lowest index on ties).
pub fn find_bottlenecks(traj: &Trajectory, labels: &[usize]) -> Result<BTreeMap<(usize, usize), usize>> {
    let mut counts: BTreeMap<(usize, usize), BTreeMap<usize, usize>> = BTreeMap::new();
    for t in &traj.transitions {
        let (Some(&from), Some(&to)) = (labels.get(t.state), labels.get(t.next_state)) else {
            return arg(format!("transition {} -> {} has no label", t.state, t.next_state));
        };
        if from != to {
            *counts.entry((from, to)).or_default().entry(t.next_state).or_default() += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|(pair, entries)| {
            let best = entries
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&s, _)| s)
                .expect("non-empty");
            (pair, best)
        })
        .collect())
}

/// Micro-level policy driving any state of a source cluster to a bottleneck.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyMap {
    pub source_cluster: usize,
    pub action_of: BTreeMap<usize, usize>,
    pub target_bottleneck: usize,
    /// Source states from which the policy never reaches the bottleneck.
    pub unreachable: Vec<usize>,
    /// Source states with no path to the bottleneck at all. They get no action.
    pub stranded: Vec<usize>,
    /// Cluster that ends the macro action.
    pub target_cluster: usize,
    /// Greedy continuation for states outside the source cluster.
    pub detour: BTreeMap<usize, usize>,
}

impl PolicyMap {
    pub fn action(&self, state: usize) -> Option<usize> {
        self.action_of.get(&state).copied()
    }

    /// The action anywhere along the way: the policy inside the source
    /// cluster, the continuation outside it.
    pub fn route(&self, state: usize) -> Option<usize> {
        self.action(state).or_else(|| self.detour.get(&state).copied())
    }
}

/// States from which following `policy` reaches a target with non-zero probability.
fn policy_reaches(b: &[DMatrix<f64>], policy: &BTreeMap<usize, usize>, targets: &[usize]) -> Vec<bool> {
    let n = b[0].nrows();
    let mut reach = vec![false; n];
    for &t in targets {
        reach[t] = true;
    }
    let mut frontier = targets.to_vec();
    while let Some(t) = frontier.pop() {
        for (&s, &a) in policy {
            if !reach[s] && b[a][(t, s)] > 0.0 {
                reach[s] = true;
                frontier.push(s);
            }
        }
    }
    reach
}

/// States with a path of non-zero transitions to `target`.
fn can_reach(b: &[DMatrix<f64>], target: usize) -> Vec<bool> {
    let n = b[0].nrows();
    let mut reach = vec![false; n];
    reach[target] = true;
    let mut frontier = vec![target];
    while let Some(t) = frontier.pop() {
        for s in 0..n {
            if !reach[s] && b.iter().any(|ba| ba[(t, s)] > 0.0) {
                reach[s] = true;
                frontier.push(s);
            }
        }
    }
    reach
}

/// What a macro action steers toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacroTarget {
    /// The bottleneck state alone.
    Bottleneck,
    /// Every state of the bottleneck's cluster. Suits coarse discretizations
    /// of continuous dynamics, where a single bin is hard to hit.
    Cluster,
}

/// Plans from every state of `source_cluster` toward a temporary preference
/// on the target observations and keeps each state's first action.
pub fn learn_macro_policy(
    model: &GenerativeModel,
    sr: &SuccessorMatrix,
    labels: &[usize],
    source_cluster: usize,
    bottleneck: usize,
    target: MacroTarget,
) -> Result<PolicyMap> {
    if labels.len() != model.n_s() || sr.n() != model.n_s() {
        return arg("labels, successor matrix and model disagree on the state count");
    }
    if bottleneck >= model.n_s() {
        return arg(format!("bottleneck {bottleneck} out of range"));
    }
    let targets: Vec<usize> = match target {
        MacroTarget::Bottleneck => vec![bottleneck],
        MacroTarget::Cluster => (0..model.n_s()).filter(|&s| labels[s] == labels[bottleneck]).collect(),
    };
    let goal_obs: Vec<usize> = targets.iter().map(|&s| model.observation_of(s)).collect();
    let c = goal_preference(model.n_o(), &goal_obs)?;
    let g = efe_vector(&model.with_preference(c)?);
    let nu = nu_from_score(sr, &goal_score(&g))?.nu;
    let sources: Vec<usize> = (0..model.n_s()).filter(|&s| labels[s] == source_cluster && s != bottleneck).collect();
    let mut map = PolicyMap {
        source_cluster,
        action_of: BTreeMap::new(),
        target_bottleneck: bottleneck,
        unreachable: Vec::new(),
        stranded: Vec::new(),
        target_cluster: labels[bottleneck],
        detour: BTreeMap::new(),
    };
    let reach = can_reach(&model.b, bottleneck);
    let (sources, stranded): (Vec<usize>, Vec<usize>) = sources.into_iter().partition(|&s| reach[s]);
    map.stranded = stranded;
    for &s in &sources {
        map.action_of.insert(s, greedy_action(&model.b, &nu, s));
    }
    for s in (0..model.n_s()).filter(|&s| labels[s] != source_cluster && labels[s] != map.target_cluster) {
        map.detour.insert(s, greedy_action(&model.b, &nu, s));
    }
    let mut policy = map.action_of.clone();
    for s in (0..model.n_s()).filter(|&s| labels[s] != source_cluster) {
        policy.insert(s, greedy_action(&model.b, &nu, s));
    }
    let covered = policy_reaches(&model.b, &policy, &targets);
    map.unreachable = sources.iter().copied().filter(|&s| !covered[s]).collect();
    if map.unreachable.len() * 10 > sources.len() {
        return Err(Error::MacroPolicy {
            source_cluster,
            bottleneck,
            unreachable: map.unreachable.len(),
            total: sources.len(),
        });
    }
    Ok(map)
}

/// Label sequences of the contiguous runs in a trajectory with repeats collapsed.
pub fn macro_sequences(traj: &Trajectory, labels: &[usize]) -> Vec<Vec<usize>> {
    let mut runs: Vec<Vec<usize>> = Vec::new();
    let mut prev_next: Option<usize> = None;
    for t in &traj.transitions {
        if prev_next != Some(t.state) {
            runs.push(vec![labels[t.state]]);
        }
        let run = runs.last_mut().expect("run started");
        let l = labels[t.next_state];
        if run.last() != Some(&l) {
            run.push(l);
        }
        prev_next = Some(t.next_state);
    }
    runs.retain(|r| !r.is_empty());
    runs
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroModel {
    /// Row-stochastic, `[from, to]`.
    pub b_macro: DMatrix<f64>,
    pub m_macro: SuccessorMatrix,
    pub g_macro: DVector<f64>,
}

/// Macro transitions, the macro successor matrix learned by TD over the
/// collapsed label sequence, and the summed micro EFE per cluster.
pub fn build_macro_model(
    traj: &Trajectory,
    labels: &[usize],
    g_micro: &EfeVector,
    gamma: f64,
    alpha: f64,
) -> Result<MacroModel> {
    if labels.len() != g_micro.g.len() {
        return arg("labels and EFE vector differ in length");
    }
    if let Some(t) = traj.transitions.iter().find(|t| t.state >= labels.len() || t.next_state >= labels.len()) {
        return arg(format!("transition {} -> {} out of range", t.state, t.next_state));
    }
    let k = labels.iter().max().map_or(1, |m| m + 1);
    let mut counts = DMatrix::<f64>::zeros(k, k);
    let mut m_macro = SuccessorMatrix::identity(k, gamma, alpha)?;
    for run in macro_sequences(traj, labels) {
        for pair in run.windows(2) {
            counts[(pair[0], pair[1])] += 1.0;
            m_macro.update(pair[0], pair[1])?;
        }
    }
    let mut b_macro = DMatrix::zeros(k, k);
    for i in 0..k {
        let total = counts.row(i).sum();
        if total > 0.0 {
            b_macro.set_row(i, &(counts.row(i) / total));
        } else {
            b_macro[(i, i)] = 1.0;
        }
    }
    let mut g_macro = DVector::zeros(k);
    for (s, &l) in labels.iter().enumerate() {
        g_macro[l] += g_micro.g[s];
    }
    Ok(MacroModel { b_macro, m_macro, g_macro })
}

/// Everything the hierarchical planner needs above the micro level.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroDecomposition {
    pub k: usize,
    pub labels: Vec<usize>,
    pub embedding: DMatrix<f64>,
    pub bottlenecks: BTreeMap<(usize, usize), usize>,
    pub macro_policies: BTreeMap<(usize, usize), PolicyMap>,
    pub b_macro: DMatrix<f64>,
    pub m_macro: SuccessorMatrix,
    pub g_macro: DVector<f64>,
    /// Summed micro ambiguity per cluster.
    pub amb_macro: DVector<f64>,
    pub sizes: Vec<usize>,
    pub c_macro: DVector<f64>,
    /// Weight of the mean cluster ambiguity in the planning score.
    pub ambiguity_weight: f64,
}

/// Settings for [`decompose`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposeConfig {
    pub k: usize,
    pub seed: u64,
    pub macro_gamma: f64,
    pub macro_alpha: f64,
    /// Spatial blending, as `(coords, sigma, alpha_max)`.
    pub blend: Option<(DMatrix<f64>, f64, f64)>,
    pub ambiguity_weight: f64,
    pub macro_target: MacroTarget,
}

/// Clusters states, finds bottlenecks, learns every macro policy and builds
/// the macro model. Pairs whose policy cannot be learned are reported as an
/// error so the caller can gather more experience.
pub fn decompose(
    model: &GenerativeModel,
    sr: &SuccessorMatrix,
    traj: &Trajectory,
    goal_observations: &[usize],
    cfg: &DecomposeConfig,
) -> Result<MacroDecomposition> {
    let mut w = sr_affinity(&sr.m)?;
    if let Some((coords, sigma, alpha_max)) = &cfg.blend {
        let kernel = spatial_rbf(coords, *sigma)?;
        w = adaptive_blend(&w, &kernel, &sr.row_sums(), *alpha_max)?;
    }
    let (labels, embedding) = spectral_cluster(&w, cfg.k, cfg.seed)?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let bottlenecks = find_bottlenecks(traj, &labels)?;
    let mut macro_policies = BTreeMap::new();
    for (&(i, j), &b) in &bottlenecks {
        macro_policies.insert((i, j), learn_macro_policy(model, sr, &labels, i, b, cfg.macro_target)?);
    }
    let g = efe_vector(model);
    let mm = build_macro_model(traj, &labels, &g, cfg.macro_gamma, cfg.macro_alpha)?;
    let mut amb_macro = DVector::zeros(k);
    let mut sizes = vec![0; k];
    for (s, &l) in labels.iter().enumerate() {
        amb_macro[l] += g.ambiguity[s];
        sizes[l] += 1;
    }
    let mut decomp = MacroDecomposition {
        k,
        labels,
        embedding,
        bottlenecks,
        macro_policies,
        b_macro: mm.b_macro,
        m_macro: mm.m_macro,
        g_macro: mm.g_macro,
        amb_macro,
        sizes,
        c_macro: DVector::zeros(k),
        ambiguity_weight: cfg.ambiguity_weight,
    };
    decomp.c_macro = decomp.macro_preference(model, goal_observations)?;
    Ok(decomp)
}

impl MacroDecomposition {
    /// Clusters holding a state that emits one of the goal observations.
    pub fn goal_clusters(&self, model: &GenerativeModel, goal_observations: &[usize]) -> Vec<usize> {
        let set: BTreeSet<usize> =
            model.states_emitting(goal_observations).into_iter().map(|s| self.labels[s]).collect();
        set.into_iter().collect()
    }

    /// `C_macro`: goal mass on the goal clusters, smeared like the micro `C`.
    pub fn macro_preference(&self, model: &GenerativeModel, goal_observations: &[usize]) -> Result<DVector<f64>> {
        let goals = self.goal_clusters(model, goal_observations);
        goal_preference(self.k, &goals)
    }

    /// Per-cluster planning cost: preference risk plus weighted mean ambiguity.
    pub fn planning_efe(&self) -> DVector<f64> {
        DVector::from_fn(self.k, |j, _| {
            let mean_amb = if self.sizes[j] > 0 { self.amb_macro[j] / self.sizes[j] as f64 } else { 0.0 };
            -ln_clamped(self.c_macro[j]) + self.ambiguity_weight * mean_amb
        })
    }

    /// `ν_macro = M_macro · (max G − G)`.
    pub fn macro_nu(&self) -> DVector<f64> {
        let g = self.planning_efe();
        let top = g.max();
        let score = g.map(|x| top - x);
        &self.m_macro.m * score
    }

    /// Destination clusters reachable by a learned macro action from `cluster`.
    pub fn neighbours(&self, cluster: usize) -> Vec<usize> {
        self.macro_policies.keys().filter(|(i, _)| *i == cluster).map(|&(_, j)| j).collect()
    }

    pub fn policy(&self, from: usize, to: usize) -> Option<&PolicyMap> {
        self.macro_policies.get(&(from, to))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_model::Transition;
    use approx::assert_relative_eq;

    fn tr(s: usize, n: usize) -> Transition {
        Transition { state: s, action: 0, next_state: n, observation: n, reward: 0.0 }
    }

    #[test]
    fn affinity_takes_elementwise_max() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 3.0, 0.0, 5.0, 1.0]);
        let w = sr_affinity(&m).unwrap();
        assert_relative_eq!(w.w[(1, 2)], 1.0);
        assert_eq!(w.w[(1, 2)], w.w[(2, 1)]);
        assert_eq!(sr_affinity(&DMatrix::from_element(2, 2, 3.0)).unwrap().w, DMatrix::identity(2, 2));
    }

    #[test]
    fn connectivity_of_a_chain() {
        // 0 - 1 - 2 - 3 as a chain; cluster 1 = {1, 3} skips state 2.
        let mut t = DMatrix::zeros(4, 4);
        for s in 0..3 {
            t[(s, s + 1)] = 0.5;
        }
        assert_eq!(cluster_connectivity(&[0, 0, 1, 1], &t).unwrap(), vec![true, true]);
        assert_eq!(cluster_connectivity(&[0, 1, 0, 1], &t).unwrap(), vec![false, false]);
        assert_eq!(cluster_connectivity(&[0, 2, 2, 2], &t).unwrap(), vec![true, true, true]);
        assert!(cluster_connectivity(&[0, 0], &t).is_err());
    }

    #[test]
    fn rbf_closed_forms() {
        let sigma = 0.5;
        let coords = DMatrix::from_row_slice(3, 1, &[0.0, sigma, 2.0 * sigma]);
        let k = spatial_rbf(&coords, sigma).unwrap();
        assert_relative_eq!(k.w[(0, 0)], 1.0);
        assert_relative_eq!(k.w[(0, 2)], k.w[(0, 1)].powi(4), epsilon = 1e-14);
        let pair = DMatrix::from_row_slice(2, 1, &[0.0, sigma * 2f64.sqrt()]);
        assert_relative_eq!(spatial_rbf(&pair, sigma).unwrap().w[(0, 1)], (-1.0f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn blend_rules() {
        let sr = AffinityMatrix { w: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]) };
        let kern = AffinityMatrix { w: DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]) };
        let same = adaptive_blend(&sr, &kern, &DVector::from_vec(vec![3.0, 3.0]), 0.3).unwrap();
        assert_eq!(same, sr);
        let cold = adaptive_blend(&sr, &kern, &DVector::from_vec(vec![3.0, 0.0]), 0.3).unwrap();
        assert_relative_eq!(cold.w[(0, 1)], 0.7 * 0.2 + 0.3 * 0.8);
        let none = adaptive_blend(&sr, &kern, &DVector::zeros(2), 0.3).unwrap();
        assert_relative_eq!(none.w[(0, 0)], 1.0);
    }

    #[test]
    fn block_diagonal_splits() {
        let mut w = DMatrix::zeros(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                if (i < 3) == (j < 3) {
                    w[(i, j)] = 1.0;
                }
            }
        }
        let (labels, emb) = spectral_cluster(&AffinityMatrix { w }, 2, 7).unwrap();
        assert_eq!(labels, vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(emb.shape(), (6, 2));
        let (one, _) = spectral_cluster(&AffinityMatrix { w: DMatrix::identity(4, 4) }, 1, 0).unwrap();
        assert_eq!(one, vec![0; 4]);
        assert!(spectral_cluster(&AffinityMatrix { w: DMatrix::identity(2, 2) }, 3, 0).is_err());
    }

    #[test]
    fn bottleneck_rules() {
        let labels = [0, 0, 0, 0, 0, 1];
        let inside = Trajectory { transitions: vec![tr(0, 1), tr(1, 2)] };
        assert!(find_bottlenecks(&inside, &labels).unwrap().is_empty());
        let cross = Trajectory { transitions: vec![tr(4, 5)] };
        assert_eq!(find_bottlenecks(&cross, &labels).unwrap(), BTreeMap::from([((0, 1), 5)]));
    }

    #[test]
    fn macro_model_examples() {
        let g = EfeVector {
            g: DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]),
            risk: DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]),
            ambiguity: DVector::zeros(4),
        };
        let traj = Trajectory { transitions: vec![tr(0, 1), tr(1, 2), tr(2, 3), tr(3, 1), tr(1, 0)] };
        let mm = build_macro_model(&traj, &[0, 0, 1, 1], &g, 0.95, 0.1).unwrap();
        assert_eq!(mm.g_macro.as_slice(), &[3.0, 7.0]);
        assert_eq!(mm.b_macro, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let single = build_macro_model(&traj, &[0, 0, 0, 0], &g, 0.95, 0.1).unwrap();
        assert_eq!(single.b_macro, DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn sequences_break_between_episodes() {
        let traj = Trajectory { transitions: vec![tr(0, 3), tr(2, 1)] };
        assert_eq!(macro_sequences(&traj, &[0, 0, 1, 1]), vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn chain_policy_points_right() {
        // 3-state chain; action 0 moves left, action 1 moves right.
        let left = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let right = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let t = crate::successor::default_transition(&[left.clone(), right.clone()]);
        let sr = crate::successor::analytic_sr(&t, 0.95).unwrap();
        let model = GenerativeModel::mdp(
            vec![left, right],
            crate::core_model::uniform(3),
            crate::core_model::uniform(3),
        )
        .unwrap();
        let map = learn_macro_policy(&model, &sr, &[0, 0, 0], 0, 2, MacroTarget::Bottleneck).unwrap();
        assert_eq!(map.action_of, BTreeMap::from([(0, 1), (1, 1)]));
        let alone = learn_macro_policy(&model, &sr, &[0, 0, 1], 1, 2, MacroTarget::Bottleneck).unwrap();
        assert!(alone.action_of.is_empty());
        assert_eq!(alone.target_bottleneck, 2);
    }
}
