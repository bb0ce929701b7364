//! A small POMDP: Bayes filtering and the risk/ambiguity split of expected free energy.

use hai_sr::core_model::{belief_update, efe_vector, goal_preference, policy_posterior, uniform, Belief, GenerativeModel};
use nalgebra::DMatrix;

fn main() -> hai_sr::Result<()> {
    // Three states in a row; the middle one is hard to see.
    let a = DMatrix::from_row_slice(3, 3, &[
        0.9, 0.3, 0.05,
        0.05, 0.4, 0.05,
        0.05, 0.3, 0.9,
    ]);
    let left = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    let right = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
    let model = GenerativeModel::new(a, vec![left, right], goal_preference(3, &[2])?, uniform(3))?;

    let mut belief = Belief::initial(&model, 0)?;
    println!("after seeing o=0: {:.3?}", belief.b.as_slice());
    for (action, obs) in [(1, 1), (1, 2)] {
        belief = belief_update(&model, &belief, action, obs)?;
        println!("after a={action}, o={obs}: {:.3?}", belief.b.as_slice());
    }

    let g = efe_vector(&model);
    for s in 0..3 {
        println!("state {s}: G {:.3} = risk {:.3} + ambiguity {:.3}", g.g[s], g.risk[s], g.ambiguity[s]);
    }
    println!("posterior over 'go to state s': {:.3?}", policy_posterior(g.g.as_slice())?);
    Ok(())
}
