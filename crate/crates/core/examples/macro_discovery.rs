//! Explores the serpentine grid, clusters the learned successor matrix and
//! prints the macro states, bottlenecks and macro transition model.

use hai_sr::abstraction::cluster_connectivity;
use hai_sr::envs::Environment;
use hai_sr::harness::config::ExperimentConfig;
use hai_sr::harness::experiments::{train_fully, EnvBox};
use hai_sr::successor::default_transition;

fn main() -> hai_sr::Result<()> {
    let cfg = ExperimentConfig::preset("E1")?;
    let tr = train_fully(&cfg, 0, EnvBox::build(&cfg)?)?;
    let planner = tr.planner(&tr.env.goal_observations())?;
    let d = planner.decomp.as_ref().expect("decomposition");

    let (rows, cols, pos) = tr.env.board();
    let mut board = vec!['#'; rows * cols];
    for (s, &p) in pos.iter().enumerate() {
        board[p] = char::from(b'A' + d.labels[s] as u8);
    }
    for r in 0..rows {
        println!("{}", board[r * cols..(r + 1) * cols].iter().collect::<String>());
    }
    println!("sizes {:?}", d.sizes);
    for ((from, to), b) in &d.bottlenecks {
        println!("bottleneck {from} -> {to}: state {b}");
    }
    println!("B_macro:\n{:.2}", d.b_macro);
    let t = default_transition(&tr.env.known_dynamics().expect("tabular"));
    println!("clusters connected: {:?}", cluster_connectivity(&d.labels, &t)?);
    Ok(())
}
