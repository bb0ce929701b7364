//! Serpentine comparison of hierarchical, flat and Q-learning agents,
//! plus the uniformly random baseline.

use hai_sr::harness::config::ExperimentConfig;
use hai_sr::harness::experiments::run_experiment;

fn main() -> hai_sr::Result<()> {
    let mut cfg = ExperimentConfig::preset("E1")?;
    cfg.seeds = 3;
    let result = run_experiment(&cfg)?;
    print!("{}", result.report());
    Ok(())
}
