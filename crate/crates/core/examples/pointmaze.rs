//! PointMaze UMaze with smooth stepping, then every UMaze goal on one model.

use hai_sr::harness::config::ExperimentConfig;
use hai_sr::harness::experiments::run_experiment;

fn main() -> hai_sr::Result<()> {
    let mut single = ExperimentConfig::preset("E5")?;
    single.seeds = 3;
    print!("{}", run_experiment(&single)?.report());

    let mut multi = ExperimentConfig::preset("E6")?;
    multi.seeds = 1;
    print!("{}", run_experiment(&multi)?.report());
    Ok(())
}
