//! Identity-initialized scalar chains at the critical step stay inside the
//! geometric envelope `ρ^k |1 − λ^{1/L}|`.

use reslab::lab::experiments::scalar_sweep_case;
use reslab::Result;

pub fn run_example() -> Result<usize> {
    let mut violations = 0;
    for (depth, lambda) in [(2, 0.5), (5, 2.0), (20, 10.0)] {
        let case = scalar_sweep_case(depth, lambda, 1.0, 1.0, 100_000)?;
        println!(
            "L={depth} lambda={lambda}: step {:.4e}, rate {:.4}, {} iterations, {} envelope violations",
            case.step,
            case.rate.unwrap_or(f64::NAN),
            case.trajectory.iterations_run,
            case.envelope_violations
        );
        for k in (0..case.distances.len()).step_by(case.distances.len().div_ceil(5)) {
            println!("  k={k:>3} distance {:.3e} envelope {:.3e}", case.distances[k], case.envelope(k).unwrap_or(f64::NAN));
        }
        violations += case.envelope_violations;
    }
    Ok(violations)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
