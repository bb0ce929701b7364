use hai_sr::core_model::{belief_update, policy_posterior, Belief, GenerativeModel};
use hai_sr::envs::grid::{GridSpec, GridWorld};
use hai_sr::envs::layout::Layout;
use hai_sr::envs::Environment;
use hai_sr::harness::config::ExperimentConfig;
use hai_sr::harness::metrics::r_stability;
use hai_sr::successor::{analytic_sr, default_transition, sr_distance, td_update, value_from_sr, SuccessorMatrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn row_stochastic(n: usize, raw: &[f64]) -> DMatrix<f64> {
    let mut t = DMatrix::from_row_slice(n, n, &raw[..n * n]);
    for mut r in t.row_iter_mut() {
        let s = r.sum();
        r /= s;
    }
    t
}

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, n)
}

proptest! {
    #[test]
    fn expected_td_step_contracts(raw in weights(16), noise in weights(16), gamma in 0.5f64..0.95, alpha in 0.05f64..0.5, s in 0usize..4) {
        let t = row_stochastic(4, &raw);
        let exact = analytic_sr(&t, gamma).unwrap();
        let mut start = exact.clone();
        for (x, e) in start.m.iter_mut().zip(&noise) {
            *x += e;
        }
        start.alpha = alpha;
        let before = (&start.m - &exact.m).amax();
        let mut expected = DVector::zeros(4);
        for s_next in 0..4 {
            let next = td_update(&start, s, s_next).unwrap();
            expected += next.m.row(s).transpose() * t[(s, s_next)];
        }
        let after = (expected - exact.m.row(s).transpose()).amax();
        prop_assert!(after <= (1.0 - alpha * (1.0 - gamma)) * before + 1e-9);
    }

    #[test]
    fn analytic_sr_is_a_fixed_point(raw in weights(9), gamma in 0.3f64..0.95) {
        let t = row_stochastic(3, &raw);
        let exact = analytic_sr(&t, gamma).unwrap();
        prop_assert!(exact.m.diagonal().iter().all(|&d| d >= 1.0 - 1e-12));
        for s in 0..3 {
            let mut sr = exact.clone();
            sr.alpha = 0.3;
            let mut expected = DVector::zeros(3);
            for s_next in 0..3 {
                expected += td_update(&sr, s, s_next).unwrap().m.row(s).transpose() * t[(s, s_next)];
            }
            prop_assert!((expected - exact.m.row(s).transpose()).amax() < 1e-9);
        }
    }

    #[test]
    fn belief_stays_normalized(a_raw in weights(9), b_raw in weights(18), prior in weights(3), action in 0usize..2, obs in 0usize..3) {
        let cols = |n: usize, raw: &[f64]| row_stochastic(n, raw).transpose();
        let a = cols(3, &a_raw);
        let b = vec![cols(3, &b_raw[..9]), cols(3, &b_raw[9..])];
        let model = GenerativeModel::new(a, b, DVector::from_element(3, 1.0 / 3.0), DVector::from_element(3, 1.0 / 3.0)).unwrap();
        let total: f64 = prior.iter().sum();
        let prev = Belief { b: DVector::from_iterator(3, prior.iter().map(|p| p / total)), step: 0 };
        let post = belief_update(&model, &prev, action, obs).unwrap();
        prop_assert!((post.b.sum() - 1.0).abs() < 1e-9);
        prop_assert!(post.b.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn policy_posterior_is_a_distribution(g in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let q = policy_posterior(&g).unwrap();
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let best = g.iter().cloned().fold(f64::INFINITY, f64::min);
        let i = g.iter().position(|&x| x == best).unwrap();
        prop_assert!(q.iter().all(|&p| p <= q[i] + 1e-12));
    }

    #[test]
    fn r_stability_is_bounded(series in prop::collection::vec(-100.0f64..100.0, 1..60), frac in 0.01f64..1.0) {
        let rs = r_stability(&series, frac).unwrap();
        prop_assert!((0.0..=1.0).contains(&rs));
    }

    #[test]
    fn config_round_trips(gamma in 0.5f64..0.99, alpha in 0.01f64..1.0, seeds in 1usize..8, id in 0usize..10) {
        let (name, _) = hai_sr::harness::config::EXPERIMENTS[id];
        let mut cfg = ExperimentConfig::preset(name).unwrap();
        cfg.set("gamma", &gamma.to_string()).unwrap();
        cfg.set("alpha", &alpha.to_string()).unwrap();
        cfg.set("seeds", &seeds.to_string()).unwrap();
        let text = cfg.canonical();
        let back = ExperimentConfig::from_text(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}

#[test]
fn td_converges_to_analytic_sr_on_a_ring() {
    let n = 5;
    let mut t = DMatrix::zeros(n, n);
    for s in 0..n {
        t[(s, (s + 1) % n)] = 0.5;
        t[(s, (s + n - 1) % n)] = 0.5;
    }
    let exact = analytic_sr(&t, 0.5).unwrap();
    let mut sr = SuccessorMatrix::identity(n, 0.5, 0.02).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut s = 0;
    for _ in 0..100_000 {
        let next = if rng.gen_bool(0.5) { (s + 1) % n } else { (s + n - 1) % n };
        sr.update(s, next).unwrap();
        s = next;
    }
    let d = sr_distance(&sr, &exact).unwrap();
    assert!(d < 0.05, "distance {d}");
}

#[test]
fn value_rises_toward_the_goal_on_a_chain() {
    let n = 6;
    let mut t = DMatrix::zeros(n, n);
    for s in 0..n {
        t[(s, s.saturating_sub(1))] += 0.5;
        t[(s, (s + 1).min(n - 1))] += 0.5;
    }
    let sr = analytic_sr(&t, 0.9).unwrap();
    let mut r = DVector::zeros(n);
    r[n - 1] = 1.0;
    let v = value_from_sr(&sr, &r).unwrap();
    assert!(v.as_slice().windows(2).all(|w| w[0] < w[1]), "{v}");
}

#[test]
fn default_transition_matches_open_neighbours() {
    let layout = Layout::builtin("serpentine").unwrap();
    let world = GridWorld::new(GridSpec::from_layout(layout.clone(), 0.0, None).unwrap());
    let t = default_transition(&world.true_transitions());
    let n_a = world.n_actions() as f64;
    for s in 0..world.n_states() {
        let (cell, _) = world.decode(s);
        let neighbours = layout.open_neighbours(cell);
        let stay = (n_a - neighbours.len() as f64) / n_a;
        assert!((t[(s, s)] - stay).abs() < 1e-12, "state {s}");
        for nb in neighbours {
            let j = world.encode(nb, false).unwrap();
            assert!((t[(s, j)] - 1.0 / n_a).abs() < 1e-12, "state {s} -> {j}");
        }
        assert!((t.row(s).sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn open_room_distances_are_manhattan() {
    let layout = Layout::parse("S....\n.....\n....G\n").unwrap();
    for cell in layout.open_cells() {
        assert_eq!(layout.distance((0, 0), cell), Some(cell.0 + cell.1));
    }
    assert_eq!(layout.bfs((0, 0)).iter().flatten().max().copied(), Some(6));
}

#[test]
fn serpentine_distances_follow_the_corridor() {
    let layout = Layout::builtin("serpentine").unwrap();
    assert_eq!(layout.distance((0, 0), (0, 8)), Some(8));
    assert_eq!(layout.distance((0, 0), (2, 0)), Some(18));
    assert_eq!(layout.distance((0, 0), (4, 8)), Some(28));
    assert!(layout.bfs((0, 0))[9].is_none());
}
