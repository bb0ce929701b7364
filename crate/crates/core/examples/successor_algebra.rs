//! Closed-form vs TD-learned successor matrices on a five-state ring.

use hai_sr::successor::{analytic_sr, sr_distance, value_from_sr, SuccessorMatrix};
use nalgebra::{DMatrix, DVector};

fn main() -> hai_sr::Result<()> {
    let n = 5;
    let gamma = 0.9;
    // Step clockwise with probability 0.8, stay otherwise.
    let t = DMatrix::from_fn(n, n, |i, j| {
        if j == (i + 1) % n {
            0.8
        } else if i == j {
            0.2
        } else {
            0.0
        }
    });
    let exact = analytic_sr(&t, gamma)?;

    let mut learned = SuccessorMatrix::identity(n, gamma, 0.01)?;
    let mut s = 0;
    let mut x: u64 = 7;
    for step in 0..200_000 {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let moves = (x >> 33) % 10 < 8;
        let next = if moves { (s + 1) % n } else { s };
        learned.update(s, next)?;
        s = next;
        if step % 50_000 == 0 {
            println!("step {step:>6}: distance to closed form {:.5}", sr_distance(&learned, &exact)?);
        }
    }
    println!("final distance {:.5}", sr_distance(&learned, &exact)?);
    println!("row sums (1/(1-gamma) = {}): {:?}", 1.0 / (1.0 - gamma), exact.row_sums().as_slice());

    let reward = DVector::from_fn(n, |i, _| if i == 3 { 1.0 } else { 0.0 });
    println!("values for a reward at state 3: {:.3?}", value_from_sr(&exact, &reward)?.as_slice());
    Ok(())
}
