//! Tabular Q-learning on four rooms with a decaying exploration rate.

use hai_sr::baselines::{decayed_epsilon, q_learning_episode, QTable};
use hai_sr::envs::{Environment, GridSpec, GridWorld, Layout, SimRng};
use hai_sr::planner::{run_episode, Agent};
use rand::SeedableRng;

fn main() -> hai_sr::Result<()> {
    let spec = GridSpec::from_layout(Layout::builtin("four_rooms")?, 0.0, None)?;
    let mut env = GridWorld::new(spec);
    let mut rng = SimRng::seed_from_u64(1);
    let mut q = QTable::new(env.n_states(), env.n_actions());
    let episodes = 400;
    for e in 0..episodes {
        q.epsilon = decayed_epsilon(0.1, 0.01, e, episodes);
        let (start, _) = env.reset_random(&mut rng);
        q_learning_episode(&mut env, &mut q, start, 200, &mut rng)?;
        if (e + 1) % 100 == 0 {
            let greedy = q.greedy();
            let res = run_episode(&mut env, Agent::QLearning(&greedy), 200, &mut rng)?;
            println!("after {:>3} episodes: greedy return {:.1} in {} steps", e + 1, res.total_reward, res.steps);
        }
    }
    Ok(())
}
