//! Ten-layer scalar convex–concave pair fit to the reference
//! piecewise-affine target with projected Nesterov descent.

use reslab::convex::{PiecewiseAffine1D, TrainConfig};
use reslab::lab::experiments::fit_1d;
use reslab::Result;

pub fn run_example() -> Result<(f64, f64)> {
    let target = PiecewiseAffine1D::reference();
    let cfg = TrainConfig { step: 1e-4, max_epochs: 3_000, bias_init_range: [0.0, 1.0], seed: 5, ..TrainConfig::default() };
    let run = fit_1d(&target, 101, 10, &cfg)?;
    let losses = &run.outcome.losses;
    for k in (0..losses.len()).step_by(500) {
        println!("epoch {k:>5}: loss {:.4e}", losses[k]);
    }
    println!(
        "final loss {:.4e}, Lipschitz constant {:.4} (target {})",
        run.outcome.final_loss(),
        run.lipschitz,
        target.max_abs_slope()
    );
    Ok((losses[0], run.outcome.final_loss()))
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
