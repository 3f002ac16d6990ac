//! Largest stable step around scalar-chain equilibria: the analytic bound
//! against a bisection on perturbed simulations.

use reslab::scalar::{delta_max, empirical_stability_boundary, stability_bound, ScalarChain};
use reslab::Result;

pub fn run_example() -> Result<Vec<(f64, f64)>> {
    let cases: [(usize, f64, Option<Vec<f64>>); 3] =
        [(2, 4.0, None), (5, 2.0, None), (2, 4.0, Some(vec![8.0, 0.5]))];
    let mut rows = Vec::new();
    for (depth, lambda, eq) in cases {
        let eq = match eq {
            Some(w) => w,
            None => ScalarChain::balanced(depth, lambda)?.weights().to_vec(),
        };
        let predicted = stability_bound(&eq, 1.0)?;
        let empirical = empirical_stability_boundary(depth, lambda, 1.0, &eq, 1e-3)?;
        println!(
            "L={depth} lambda={lambda} w={eq:?}: predicted {predicted:.6}, empirical {empirical:.6}, balanced max {:.6}",
            delta_max(depth, lambda, 1.0)
        );
        rows.push((predicted, empirical));
    }
    Ok(rows)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
