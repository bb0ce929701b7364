//! A door that needs a key: the macro plan goes through the key first.

use hai_sr::harness::config::ExperimentConfig;
use hai_sr::harness::experiments::{run_experiment, EnvBox};
use hai_sr::planner::{run_episode, Agent};

fn main() -> hai_sr::Result<()> {
    let mut cfg = ExperimentConfig::preset("E8")?;
    cfg.seeds = 1;
    let result = run_experiment(&cfg)?;
    print!("{}", result.report());

    let planner = result.runs[0].planner.as_ref().expect("planner");
    let mut env = EnvBox::build(&cfg)?;
    let mut rng = hai_sr::harness::experiments::seed_rng(0, 1);
    let res = run_episode(&mut env, Agent::Hierarchical(planner), cfg.step_cap, &mut rng)?;
    let grid = env.grid().expect("grid");
    let path: Vec<String> = res
        .trajectory
        .states()
        .iter()
        .map(|&s| {
            let ((r, c), key) = grid.decode(s);
            format!("{r}{c}{}", if key { "k" } else { "" })
        })
        .collect();
    println!("macro plan {:?}\npath {}", res.macro_plan, path.join(" "));
    Ok(())
}
