//! Deep linear chain from identity at the safe step: every layer converges
//! to the principal `L`-th root of a symmetric target.

use reslab::linear::{safe_step, simulate_matrix_run, MatrixChain, MatrixProblem, MatrixState};
use reslab::numerics::{matrix_lth_root, planted_spectrum, EigenBasis, SeededRng};
use reslab::scalar::Mode;
use reslab::Result;

pub fn run_example() -> Result<f64> {
    let depth = 4;
    let mut rng = SeededRng::new(3);
    let (target, spectrum) = planted_spectrum(&[1.8, 1.2, 0.7], EigenBasis::Orthogonal, &mut rng)?;
    let step = safe_step(depth, spectrum.spectral_radius());
    let prob = MatrixProblem::whitened(target.clone(), step)?;
    let run = simulate_matrix_run(&MatrixChain::identity(3, depth), &prob, 100_000, Mode::Single, None)?;
    let MatrixState::Single(chain) = run.state else { unreachable!() };
    let root = matrix_lth_root(&target, depth)?;
    let error = chain.layers().iter().map(|w| w.max_abs_diff(&root)).fold(0.0, f64::max);
    println!(
        "step {step:.4}: {:?} after {} iterations, loss {:.2e}, max |W_i - R^(1/L)| = {error:.2e}",
        run.trajectory.outcome(),
        run.trajectory.iterations_run,
        run.trajectory.final_error()
    );
    println!("R^(1/L) =\n{}", root.to_text());
    Ok(error)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
