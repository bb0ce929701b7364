//! Greedy vs sampled action selection on the same trained planner.

use hai_sr::envs::Environment;
use hai_sr::harness::config::ExperimentConfig;
use hai_sr::harness::experiments::{seed_rng, train_fully, EnvBox};
use hai_sr::planner::{run_episode, Agent, Selection};

fn main() -> hai_sr::Result<()> {
    let cfg = ExperimentConfig::preset("E3")?;
    let tr = train_fully(&cfg, 0, EnvBox::build(&cfg)?)?;
    let greedy = tr.planner(&tr.env.goal_observations())?;
    let mut env = EnvBox::build(&cfg)?;
    for precision in [f64::NAN, 5.0, 50.0, 500.0] {
        let planner = if precision.is_nan() {
            greedy.clone()
        } else {
            greedy.clone().with_selection(Selection::Sample { precision })
        };
        let mut rng = seed_rng(0, 1);
        let runs: Vec<_> = (0..50)
            .map(|_| run_episode(&mut env, Agent::Flat(&planner), cfg.step_cap, &mut rng))
            .collect::<hai_sr::Result<_>>()?;
        let success = runs.iter().filter(|r| r.success).count();
        let steps = runs.iter().map(|r| r.steps).sum::<usize>() as f64 / runs.len() as f64;
        let name = if precision.is_nan() { "greedy".to_string() } else { format!("precision {precision}") };
        println!("{name:<16} success {success}/50, mean steps {steps:.1}");
    }
    Ok(())
}
