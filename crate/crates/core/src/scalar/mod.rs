//! Gradient descent on the scalar deep linear chain `f(x) = w_L ⋯ w_1 x`
//! and on the double chain `(∏w − ∏z) x`.
//!
//! With data second moment `σ` the loss is `σ/2 (∏w − λ)²`, so every
//! iteration is driven by the product error `e = ∏w − λ`.

use crate::dynamics::{run, StabilityVerdict, StopRule, Trajectory};
use crate::error::{Error, Result};

mod boundary;

pub use boundary::{empirical_stability_boundary, empirical_stability_boundary_with, BoundaryProbe};

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarChain {
    weights: Vec<f64>,
}

impl ScalarChain {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("chain needs at least one weight".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite weight {w}")));
        }
        Ok(ScalarChain { weights })
    }

    /// `depth` copies of `value`.
    pub fn uniform(depth: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; depth])
    }

    /// `w_i = λ^{1/L}` (with the sign of λ on the first weight when λ < 0).
    pub fn balanced(depth: usize, lambda: f64) -> Result<Self> {
        let root = lambda.abs().powf(1.0 / depth.max(1) as f64);
        let mut w = vec![root; depth];
        if lambda < 0.0 {
            if let Some(first) = w.first_mut() {
                *first = -root;
            }
        }
        Self::new(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn product(&self) -> f64 {
        product(&self.weights)
    }
}

fn product(w: &[f64]) -> f64 {
    w.iter().product()
}

/// `∏_{j≠i} w_j`, each multiplied in index order so that equal weights give
/// bit-identical results for every `i`.
fn leave_one_out(w: &[f64]) -> Vec<f64> {
    (0..w.len())
        .map(|i| {
            w.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, x)| x)
                .product()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarProblem {
    pub lambda: f64,
    pub sigma: f64,
    pub depth: usize,
    pub step: f64,
}

impl ScalarProblem {
    pub fn new(lambda: f64, sigma: f64, depth: usize, step: f64) -> Result<Self> {
        let mut bad = Vec::new();
        if !(lambda.is_finite() && lambda != 0.0) {
            bad.push(format!("lambda must be finite and nonzero, got {lambda}"));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            bad.push(format!("sigma must be positive, got {sigma}"));
        }
        if depth == 0 {
            bad.push("depth must be at least 1".to_string());
        }
        if !(step.is_finite() && step > 0.0) {
            bad.push(format!("step must be positive, got {step}"));
        }
        if bad.is_empty() {
            Ok(ScalarProblem { lambda, sigma, depth, step })
        } else {
            Err(Error::Validation(bad))
        }
    }

    pub fn with_step(self, step: f64) -> Result<Self> {
        Self::new(self.lambda, self.sigma, self.depth, step)
    }

    fn check(&self, chain: &ScalarChain) -> Result<()> {
        if chain.depth() != self.depth {
            return Err(Error::DimensionMismatch(format!(
                "chain depth {} but problem depth {}",
                chain.depth(),
                self.depth
            )));
        }
        Ok(())
    }
}

/// One simultaneous gradient step on every weight.
pub fn scalar_chain_step(chain: &ScalarChain, prob: &ScalarProblem) -> Result<ScalarChain> {
    prob.check(chain)?;
    Ok(ScalarChain {
        weights: single_step(&chain.weights, prob),
    })
}

fn single_step(w: &[f64], prob: &ScalarProblem) -> Vec<f64> {
    let g = prob.step * prob.sigma * (product(w) - prob.lambda);
    w.iter()
        .zip(leave_one_out(w))
        .map(|(wi, rest)| wi - g * rest)
        .collect()
}

/// Largest step for which the equilibrium `weights` can be stable:
/// `2 / (σ Σ_i ∏_{j≠i} w_j²)`.
pub fn stability_bound(weights: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let denom: f64 = leave_one_out(weights).iter().map(|p| p * p).sum();
    if denom == 0.0 {
        return Err(Error::DegenerateEquilibrium);
    }
    Ok(2.0 / (sigma * denom))
}

/// `|λ|^{2(L−1)/L}`, the squared leave-one-out product at a balanced point.
fn balanced_gain(depth: usize, lambda: f64) -> f64 {
    let l = depth as f64;
    lambda.abs().powf(2.0 * (l - 1.0) / l)
}

/// Stability bound at the balanced equilibrium, the largest over all
/// equilibria: `2 / (σ L |λ|^{2(L−1)/L})`.
pub fn delta_max(depth: usize, lambda: f64, sigma: f64) -> f64 {
    2.0 / (sigma * depth as f64 * balanced_gain(depth, lambda))
}

/// Largest step for which identity initialization converges monotonically.
pub fn critical_step(depth: usize, lambda: f64, sigma: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::RequiresPositiveLambda(lambda));
    }
    let l = depth as f64;
    Ok(if lambda >= 1.0 {
        1.0 / (l * sigma * balanced_gain(depth, lambda))
    } else {
        (1.0 - lambda.powf(1.0 / l)) / (sigma * (1.0 - lambda))
    })
}

/// Geometric rate `ρ(δ)` bounding `|w[k] − λ^{1/L}| ≤ ρ^k |w[0] − λ^{1/L}|`
/// from identity initialization.
pub fn convergence_rate(depth: usize, lambda: f64, sigma: f64, delta: f64) -> Result<f64> {
    let critical = critical_step(depth, lambda, sigma)?;
    if delta > critical {
        return Err(Error::StepExceedsCritical { step: delta, critical });
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {delta}")));
    }
    let l = depth as f64;
    Ok(if lambda > 1.0 {
        1.0 - delta * sigma * (lambda - 1.0) / (lambda.powf(1.0 / l) - 1.0)
    } else {
        1.0 - delta * sigma * l * balanced_gain(depth, lambda)
    })
}

/// Per-step contraction `μ(w) = 1 − δσ w^{L−1} Σ_j w^j λ^{(L−1−j)/L}` of the
/// symmetric recursion around `λ^{1/L}`.
pub fn contraction_factor(w: f64, depth: usize, lambda: f64, sigma: f64, delta: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::RequiresPositiveLambda(lambda));
    }
    let l = depth as f64;
    let sum: f64 = (0..depth)
        .map(|j| w.powi(j as i32) * lambda.powf((l - 1.0 - j as f64) / l))
        .sum();
    Ok(1.0 - delta * sigma * w.powi(depth as i32 - 1) * sum)
}

/// Above this step, identity-initialized chains with negative target may
/// fail to collapse to zero: `1 / (σ(1 − λ))`.
pub fn negative_lambda_bound(lambda: f64, sigma: f64) -> Result<f64> {
    if !(lambda < 0.0) {
        return Err(Error::RequiresNegativeLambda(lambda));
    }
    Ok(1.0 / (sigma * (1.0 - lambda)))
}

/// Representative step of a symmetric double chain, every `w_i = w` and
/// `z_i = z`.
pub fn double_scalar_step(w: f64, z: f64, prob: &ScalarProblem) -> (f64, f64) {
    let l = prob.depth as i32;
    let e = w.powi(l) - z.powi(l) - prob.lambda;
    let g = prob.step * prob.sigma * e;
    (w - g * w.powi(l - 1), z + g * z.powi(l - 1))
}

/// Two chains whose difference `∏w − ∏z` models the target.
#[derive(Clone, Debug, PartialEq)]
pub struct DoubleScalarChain {
    pub plus: ScalarChain,
    pub minus: ScalarChain,
}

impl DoubleScalarChain {
    pub fn new(plus: ScalarChain, minus: ScalarChain) -> Result<Self> {
        if plus.depth() != minus.depth() {
            return Err(Error::DimensionMismatch(format!(
                "double chain depths {} and {}",
                plus.depth(),
                minus.depth()
            )));
        }
        Ok(DoubleScalarChain { plus, minus })
    }

    pub fn error(&self, lambda: f64) -> f64 {
        self.plus.product() - self.minus.product() - lambda
    }
}

/// Simultaneous step on both chains of a double chain.
pub fn double_chain_step(chain: &DoubleScalarChain, prob: &ScalarProblem) -> Result<DoubleScalarChain> {
    prob.check(&chain.plus)?;
    prob.check(&chain.minus)?;
    let g = prob.step * prob.sigma * chain.error(prob.lambda);
    let update = |w: &[f64], sign: f64| -> Vec<f64> {
        w.iter()
            .zip(leave_one_out(w))
            .map(|(wi, rest)| wi - sign * g * rest)
            .collect()
    };
    Ok(DoubleScalarChain {
        plus: ScalarChain { weights: update(&chain.plus.weights, 1.0) },
        minus: ScalarChain { weights: update(&chain.minus.weights, -1.0) },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    Single,
    Double,
}

/// Simulation settings beyond the problem itself.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    pub max_iters: usize,
    pub mode: Mode,
    /// Record weights every this many iterations.
    pub snapshot_every: Option<usize>,
}

/// Runs gradient descent from `chain0`. In [`Mode::Double`] the minus chain
/// starts as a copy of `chain0` and snapshots list plus weights then minus
/// weights.
pub fn simulate_scalar(
    chain0: &ScalarChain,
    prob: &ScalarProblem,
    max_iters: usize,
    mode: Mode,
) -> Result<Trajectory> {
    simulate_scalar_with(
        chain0,
        prob,
        SimOptions { max_iters, mode, snapshot_every: None },
    )
}

pub fn simulate_scalar_with(
    chain0: &ScalarChain,
    prob: &ScalarProblem,
    opts: SimOptions,
) -> Result<Trajectory> {
    prob.check(chain0)?;
    if opts.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    let lambda = prob.lambda;
    let trajectory = match opts.mode {
        Mode::Single => {
            run(
                chain0.weights.clone(),
                opts.max_iters,
                StopRule::SCALAR,
                opts.snapshot_every,
                |w| product(w) - lambda,
                |w| w.clone(),
                |w| single_step(w, prob),
            )
            .1
        }
        Mode::Double => {
            let start = DoubleScalarChain::new(chain0.clone(), chain0.clone())?;
            run(
                start,
                opts.max_iters,
                StopRule::SCALAR,
                opts.snapshot_every,
                |c| c.error(lambda),
                |c| [c.plus.weights.as_slice(), c.minus.weights.as_slice()].concat(),
                |c| double_chain_step(c, prob).expect("depths checked"),
            )
            .1
        }
    };
    Ok(trajectory)
}

/// Convenience for callers that want a verdict with the analytic bound
/// attached.
pub fn verdict_with_bound(t: &Trajectory, bound: f64) -> StabilityVerdict {
    StabilityVerdict {
        predicted_bound: Some(bound),
        ..t.verdict.clone()
    }
}
