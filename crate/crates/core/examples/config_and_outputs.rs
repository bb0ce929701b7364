//! A config file plus overrides, run and written out as CSV, SVG and artifacts.

use hai_sr::harness::config::ExperimentConfig;
use hai_sr::harness::experiments::run_experiment;
use hai_sr::harness::output::emit_outputs;

const CONFIG: &str = "
# Key grid, shorter run
experiment = E8
seeds = 2
episodes = 800
";

fn main() -> hai_sr::Result<()> {
    let mut cfg = ExperimentConfig::from_text(CONFIG)?;
    cfg.apply_override("eval_every=100")?;
    let result = run_experiment(&cfg)?;
    let out = std::env::temp_dir().join("hai-sr-outputs-example");
    emit_outputs(&result, &out)?;
    for entry in std::fs::read_dir(&out).map_err(|e| hai_sr::Error::Internal(e.to_string()))? {
        let entry = entry.map_err(|e| hai_sr::Error::Internal(e.to_string()))?;
        println!("{}", entry.path().display());
    }
    println!("config hash {}", cfg.hash());
    Ok(())
}
