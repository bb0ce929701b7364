//! Five rooms with a noisy shortcut room: the short path loses its appeal as
//! the room's observation entropy rises.

use hai_sr::harness::config::ExperimentConfig;
use hai_sr::harness::experiments::run_experiment;

fn main() -> hai_sr::Result<()> {
    let mut cfg = ExperimentConfig::preset("E7")?;
    cfg.seeds = 3;
    for e in run_experiment(&cfg)?.entropy_table() {
        println!("room eta {:<5} entropy {:.3}  P(short) {:.2}", e.eta, e.entropy, e.p_short);
    }
    Ok(())
}
