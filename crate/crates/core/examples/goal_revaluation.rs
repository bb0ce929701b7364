//! Four rooms with a moving goal: SR agents re-plan at once, Q-learning relearns.

use hai_sr::harness::config::ExperimentConfig;
use hai_sr::harness::experiments::run_experiment;

fn main() -> hai_sr::Result<()> {
    let mut cfg = ExperimentConfig::preset("E3")?;
    cfg.seeds = 2;
    let result = run_experiment(&cfg)?;
    for (seed, s) in result.switch_rows() {
        let n = s.episodes_to_success.map_or("never".into(), |n| n.to_string());
        println!("seed {seed} goal {:?} {:<13} first success after {n} episodes", s.goal, s.agent.name());
    }
    Ok(())
}
