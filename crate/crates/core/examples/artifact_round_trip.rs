//! Saves a trained planner, reloads it and checks the trajectory is unchanged.

use hai_sr::envs::Environment;
use hai_sr::harness::artifact::RunArtifact;
use hai_sr::harness::config::ExperimentConfig;
use hai_sr::harness::experiments::{seed_rng, train_fully, EnvBox};
use hai_sr::planner::{run_episode, Agent};

fn main() -> hai_sr::Result<()> {
    let cfg = ExperimentConfig::preset("E3")?;
    let tr = train_fully(&cfg, 0, EnvBox::build(&cfg)?)?;
    let planner = tr.planner(&tr.env.goal_observations())?;

    let dir = std::env::temp_dir().join("hai-sr-artifact-example");
    RunArtifact::from_planner(&planner, &cfg.hash(), 0).save(&dir)?;
    let reloaded = RunArtifact::load(&dir)?.to_planner()?;

    let mut env = EnvBox::build(&cfg)?;
    let before = run_episode(&mut env, Agent::Hierarchical(&planner), cfg.step_cap, &mut seed_rng(0, 1))?;
    let after = run_episode(&mut env, Agent::Hierarchical(&reloaded), cfg.step_cap, &mut seed_rng(0, 1))?;
    println!("saved to {}", dir.display());
    println!("identical planner: {}", planner == reloaded);
    println!("identical trajectory: {} ({} steps)", before.trajectory == after.trajectory, before.steps);
    Ok(())
}
