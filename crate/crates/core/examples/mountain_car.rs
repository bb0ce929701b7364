//! Mountain Car on a discretized state space: planning decisions per episode.

use hai_sr::harness::config::ExperimentConfig;
use hai_sr::harness::experiments::run_experiment;

fn main() -> hai_sr::Result<()> {
    let mut cfg = ExperimentConfig::preset("E4")?;
    cfg.seeds = 2;
    print!("{}", run_experiment(&cfg)?.report());
    Ok(())
}
