//! Single against double network on a target with negative eigenvalues.

use reslab::lab::experiments::single_vs_double;
use reslab::numerics::{EigenBasis, SeededRng};
use reslab::Result;

pub fn run_example() -> Result<(f64, f64)> {
    let mut rng = SeededRng::new(11);
    let run = single_vs_double(5, 5, [-1.5, 1.5], EigenBasis::Gaussian, 5_000, None, 11, &mut rng)?;
    println!("eigenvalues {:?}", run.eigenvalues);
    println!("step {:.3e}", run.step);
    for k in [0, 100, 1_000, run.single.errors.len() - 1] {
        let double = run.double.errors.get(k).or(run.double.errors.last()).copied().unwrap_or(f64::NAN);
        println!("iter {k:>5}: single {:.4e} double {double:.4e}", run.single.errors[k]);
    }
    Ok((run.single.final_error(), run.double.final_error()))
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
