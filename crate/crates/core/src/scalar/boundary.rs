//! Empirical location of the largest stable step around an equilibrium.

use super::{delta_max, product, single_step, ScalarProblem};
use crate::dynamics::{run, Outcome, StopRule};
use crate::error::{Error, Result};

/// Probe settings for [`empirical_stability_boundary`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryProbe {
    /// Relative perturbation applied to every equilibrium weight.
    pub perturbation: f64,
    pub budget: usize,
    /// Window over which an undecided probe must show strictly shrinking error.
    pub monotone_window: usize,
    /// A trajectory that strays further than this multiple of its initial
    /// distance from the equilibrium is unstable even if it later settles.
    pub escape_factor: f64,
    pub stable_low: f64,
    pub unstable_high_factor: f64,
}

impl Default for BoundaryProbe {
    fn default() -> Self {
        BoundaryProbe {
            perturbation: 1e-3,
            budget: 100_000,
            monotone_window: 1_000,
            escape_factor: 2.0,
            stable_low: 1e-9,
            unstable_high_factor: 10.0,
        }
    }
}

struct ProbeState {
    weights: Vec<f64>,
    max_distance: f64,
}

impl BoundaryProbe {
    /// Whether the equilibrium `eq` is stable under step `delta`.
    pub fn is_stable(&self, eq: &[f64], lambda: f64, sigma: f64, delta: f64) -> bool {
        let prob = ScalarProblem {
            lambda,
            sigma,
            depth: eq.len(),
            step: delta,
        };
        match self.classify(eq, &prob, self.budget) {
            Some(stable) => stable,
            None => self.classify(eq, &prob, 2 * self.budget).unwrap_or(false),
        }
    }

    /// `Some(verdict)` when decided, `None` when the budget ran out without a
    /// monotone tail.
    fn classify(&self, eq: &[f64], prob: &ScalarProblem, budget: usize) -> Option<bool> {
        let start: Vec<f64> = eq.iter().map(|w| w * (1.0 + self.perturbation)).collect();
        let distance = |w: &[f64]| -> f64 {
            w.iter()
                .zip(eq)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let d0 = distance(&start);
        let state = ProbeState {
            max_distance: d0,
            weights: start,
        };
        let (end, t) = run(
            state,
            budget,
            StopRule::SCALAR,
            None,
            |s| product(&s.weights) - prob.lambda,
            |_| Vec::new(),
            |s| {
                let weights = single_step(&s.weights, prob);
                let d = distance(&weights);
                ProbeState {
                    max_distance: if d.is_finite() { s.max_distance.max(d) } else { f64::INFINITY },
                    weights,
                }
            },
        );
        if !(end.max_distance <= self.escape_factor * d0) {
            return Some(false);
        }
        match t.outcome() {
            Outcome::Converged => Some(true),
            Outcome::Diverged => Some(false),
            Outcome::Undecided => {
                let n = t.errors.len();
                let tail = &t.errors[n.saturating_sub(self.monotone_window + 1)..];
                let shrinking = tail.windows(2).all(|p| p[1].abs() < p[0].abs());
                shrinking.then_some(true)
            }
        }
    }
}

/// Bisects on the step size between a stable and an unstable probe until the
/// bracket width relative to its midpoint falls below `rel_tol`.
pub fn empirical_stability_boundary(
    depth: usize,
    lambda: f64,
    sigma: f64,
    equilibrium: &[f64],
    rel_tol: f64,
) -> Result<f64> {
    empirical_stability_boundary_with(depth, lambda, sigma, equilibrium, rel_tol, &BoundaryProbe::default())
}

pub fn empirical_stability_boundary_with(
    depth: usize,
    lambda: f64,
    sigma: f64,
    equilibrium: &[f64],
    rel_tol: f64,
    probe: &BoundaryProbe,
) -> Result<f64> {
    if equilibrium.len() != depth {
        return Err(Error::DimensionMismatch(format!(
            "equilibrium has {} weights for depth {depth}",
            equilibrium.len()
        )));
    }
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidArgument(format!("rel_tol must lie in (0, 1), got {rel_tol}")));
    }
    if (product(equilibrium) - lambda).abs() > 1e-12 * lambda.abs().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "weights multiply to {} rather than {lambda}",
            product(equilibrium)
        )));
    }
    let mut lo = probe.stable_low;
    let mut hi = probe.unstable_high_factor * delta_max(depth, lambda, sigma);
    if !probe.is_stable(equilibrium, lambda, sigma, lo) {
        return Err(Error::NoBracket(format!("step {lo:e} is already unstable")));
    }
    if probe.is_stable(equilibrium, lambda, sigma, hi) {
        return Err(Error::NoBracket(format!("step {hi:e} is still stable")));
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if (hi - lo) / mid < rel_tol {
            return Ok(mid);
        }
        if probe.is_stable(equilibrium, lambda, sigma, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}
