//! Writing a sampled non-convex function as `r − s` with both parts convex.

use reslab::convex::{convex_concave_split, Grid};
use reslab::Result;

pub fn run_example() -> Result<(f64, f64)> {
    let grid = Grid::new(vec![(0.0, 1.0, 41), (0.0, 1.0, 41)])?;
    let f = |x: &[f64]| (3.0 * x[0]).sin() * x[1] - x[1] * x[1];
    let values: Vec<f64> = grid.points().iter().map(|x| f(x)).collect();
    let split = convex_concave_split(&grid, &values, &[0.1, 0.1])?;
    let gap = split
        .r
        .iter()
        .zip(&split.s)
        .zip(&values)
        .map(|((r, s), v)| (r - s - v).abs())
        .fold(0.0, f64::max);
    println!("alpha = {:.4}, max |r - s - f| = {gap:.2e}", split.alpha);
    Ok((split.alpha, gap))
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
