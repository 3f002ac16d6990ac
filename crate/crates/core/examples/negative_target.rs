//! A single chain cannot reach a negative target from identity and collapses
//! to zero; a double chain `w^L − z^L` gets there.

use reslab::scalar::{
    negative_lambda_bound, simulate_scalar, simulate_scalar_with, Mode, ScalarChain, ScalarProblem, SimOptions,
};
use reslab::Result;

pub fn run_example() -> Result<(f64, f64)> {
    let (depth, lambda) = (3, -1.0);
    let bound = negative_lambda_bound(lambda, 1.0)?;
    let start = ScalarChain::uniform(depth, 1.0)?;

    let prob = ScalarProblem::new(lambda, 1.0, depth, bound)?;
    let opts = SimOptions { max_iters: 100, mode: Mode::Single, snapshot_every: Some(100) };
    let single = simulate_scalar_with(&start, &prob, opts)?;
    let weights = &single.snapshots.last().expect("final snapshot").1;
    let largest = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    println!("single chain at step {bound}: weights {weights:?}, error {:.3}", single.final_error());

    let half = ScalarProblem::new(lambda, 1.0, depth, 0.5 * bound)?;
    let double = simulate_scalar(&start, &half, 100_000, Mode::Double)?;
    println!(
        "double chain at step {}: {:?} after {} iterations, error {:.3e}",
        0.5 * bound,
        double.outcome(),
        double.iterations_run,
        double.final_error()
    );
    Ok((largest, double.final_error().abs()))
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
