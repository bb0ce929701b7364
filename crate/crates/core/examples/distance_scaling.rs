//! Success against BFS distance to the goal at a fixed training budget.

use hai_sr::harness::config::ExperimentConfig;
use hai_sr::harness::experiments::run_experiment;

fn main() -> hai_sr::Result<()> {
    let mut cfg = ExperimentConfig::preset("E2")?;
    cfg.seeds = 3;
    for row in run_experiment(&cfg)?.distance_table() {
        println!("distance {:>2} {:<13} success {:.2}", row.distance, row.agent.name(), row.success_rate);
    }
    Ok(())
}
