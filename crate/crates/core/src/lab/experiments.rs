//! Experiment bodies. Each returns plain results; rendering to files lives
//! in the runner.

use crate::convex::{
    lipschitz_1d, nesterov_train, nesterov_train_net, net_backprop, net_flatten, optimality_residuals, pair_forward,
    piecewise_target, ConvexConcavePair, ConvexResNet, Dataset, OptimalityResiduals, ParamKind, PiecewiseAffine1D,
    ResidualLayer, TrainConfig, TrainOutcome, VInit,
};
use crate::dynamics::{Outcome, Trajectory};
use crate::error::Result;
use crate::linear::{
    instability_threshold, matrix_chain_step, safe_step, simulate_matrix, simulate_matrix_run, MatrixChain,
    MatrixProblem, MatrixState,
};
use crate::numerics::matrix::nan_max;
use crate::numerics::{matrix_lth_root, random_with_basis, spectral_norm, EigenBasis, Matrix, SeededRng};
use crate::scalar::{
    convergence_rate, critical_step, empirical_stability_boundary, negative_lambda_bound, scalar_chain_step,
    simulate_scalar_with, stability_bound, Mode, ScalarChain, ScalarProblem, SimOptions,
};

/// Slack for floating-point rounding in the envelope comparison.
pub const ENVELOPE_SLACK: f64 = 1e-12;

/// Identity-initialized scalar chain and its distance to the attracting
/// point: `λ^{1/L}` for positive targets, the origin for negative ones.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCase {
    pub depth: usize,
    pub lambda: f64,
    pub step: f64,
    /// Envelope rate, for positive targets at or below the critical step.
    pub rate: Option<f64>,
    pub trajectory: Trajectory,
    /// Largest `|w_i − w*|` after each iteration, starting from the
    /// initial iterate.
    pub distances: Vec<f64>,
    /// Iterations at which the distance exceeded `ρ^k · distances[0]`.
    pub envelope_violations: usize,
}

impl SweepCase {
    pub fn envelope(&self, k: usize) -> Option<f64> {
        self.rate.map(|r| r.powi(k as i32) * self.distances[0])
    }
}

pub fn scalar_sweep_case(depth: usize, lambda: f64, sigma: f64, step_factor: f64, max_iters: usize) -> Result<SweepCase> {
    let (step, target) = if lambda > 0.0 {
        (step_factor * critical_step(depth, lambda, sigma)?, lambda.powf(1.0 / depth as f64))
    } else {
        (step_factor * negative_lambda_bound(lambda, sigma)?, 0.0)
    };
    let rate = if lambda > 0.0 && step_factor <= 1.0 {
        Some(convergence_rate(depth, lambda, sigma, step)?)
    } else {
        None
    };
    let prob = ScalarProblem::new(lambda, sigma, depth, step)?;
    let opts = SimOptions { max_iters, mode: Mode::Single, snapshot_every: Some(1) };
    let start = ScalarChain::uniform(depth, 1.0)?;
    let trajectory = simulate_scalar_with(&start, &prob, opts)?;
    let distance = |w: &[f64]| w.iter().map(|w| (w - target).abs()).fold(0.0, f64::max);
    let distances: Vec<f64> = trajectory.snapshots.iter().map(|(_, w)| distance(w)).collect();
    let envelope_violations = match rate {
        Some(r) => distances
            .iter()
            .enumerate()
            .filter(|&(k, d)| *d > r.powi(k as i32) * distances[0] + ENVELOPE_SLACK)
            .count(),
        None => 0,
    };
    Ok(SweepCase { depth, lambda, step, rate, trajectory, distances, envelope_violations })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryRow {
    pub depth: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub equilibrium: Vec<f64>,
    pub predicted: f64,
    pub empirical: f64,
}

impl BoundaryRow {
    pub fn relative_gap(&self) -> f64 {
        (self.empirical - self.predicted).abs() / self.predicted
    }
}

/// Balanced equilibrium unless `equilibrium` is given.
pub fn boundary_row(depth: usize, lambda: f64, sigma: f64, equilibrium: Option<&[f64]>, rel_tol: f64) -> Result<BoundaryRow> {
    let equilibrium = match equilibrium {
        Some(eq) => eq.to_vec(),
        None => ScalarChain::balanced(depth, lambda)?.weights().to_vec(),
    };
    let predicted = stability_bound(&equilibrium, sigma)?;
    let empirical = empirical_stability_boundary(depth, lambda, sigma, &equilibrium, rel_tol)?;
    Ok(BoundaryRow { depth, lambda, sigma, equilibrium, predicted, empirical })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedRun {
    pub seed: u64,
    pub step: f64,
    pub eigenvalues: Vec<f64>,
    pub single: Trajectory,
    pub double: Trajectory,
}

impl PairedRun {
    pub fn double_wins(&self) -> bool {
        self.double.final_error() < self.single.final_error()
    }
}

/// Identity-initialized single and double networks on one random target
/// drawn from `rng`. `step` defaults to the safe step at `‖R‖₂`.
#[allow(clippy::too_many_arguments)]
pub fn single_vs_double(
    width: usize,
    depth: usize,
    eigen_range: [f64; 2],
    basis: EigenBasis,
    iterations: usize,
    step: Option<f64>,
    seed: u64,
    rng: &mut SeededRng,
) -> Result<PairedRun> {
    let (r, spectrum) = random_with_basis(width, eigen_range[0], eigen_range[1], basis, rng)?;
    let step = step.unwrap_or_else(|| safe_step(depth, spectral_norm(&r)));
    let prob = MatrixProblem::whitened(r, step)?;
    let start = MatrixChain::identity(width, depth);
    let single = simulate_matrix(&start, &prob, iterations, Mode::Single)?;
    let double = simulate_matrix(&start, &prob, iterations, Mode::Double)?;
    Ok(PairedRun { seed, step, eigenvalues: spectrum.eigenvalues, single, double })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateCheck {
    pub seed: u64,
    pub eigenvalues: Vec<f64>,
    pub safe_step: f64,
    pub safe_outcome: Outcome,
    /// Largest max-abs gap between a final layer and `R^{1/L}`.
    pub root_error: f64,
    /// Largest gap between a layer's diagonal in the eigenbasis and the
    /// matching scalar chain.
    pub trajectory_gap: f64,
    pub threshold: f64,
    pub unstable_step: f64,
    pub unstable: Trajectory,
}

impl RateCheck {
    pub fn unstable_max_loss(&self) -> f64 {
        self.unstable.errors.iter().copied().fold(0.0, nan_max)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn rate_check(
    width: usize,
    depth: usize,
    eigen_range: [f64; 2],
    iterations: usize,
    trajectory_iters: usize,
    threshold_factor: f64,
    perturbation: f64,
    seed: u64,
    rng: &mut SeededRng,
) -> Result<RateCheck> {
    let (r, spectrum) = random_with_basis(width, eigen_range[0], eigen_range[1], EigenBasis::Orthogonal, rng)?;
    let rho = spectrum.spectral_radius();
    let root = matrix_lth_root(&r, depth)?;
    let step = safe_step(depth, rho);
    let prob = MatrixProblem::whitened(r.clone(), step)?;
    let identity = MatrixChain::identity(width, depth);

    let run = simulate_matrix_run(&identity, &prob, iterations, Mode::Single, None)?;
    let MatrixState::Single(end) = &run.state else { unreachable!("single mode") };
    let root_error = end.layers().iter().map(|w| w.max_abs_diff(&root)).fold(0.0, nan_max);

    let problems = spectrum
        .eigenvalues
        .iter()
        .map(|&l| ScalarProblem::new(l, 1.0, depth, step))
        .collect::<Result<Vec<_>>>()?;
    let mut scalars = vec![ScalarChain::uniform(depth, 1.0)?; width];
    let mut chain = identity;
    let mut trajectory_gap: f64 = 0.0;
    for _ in 0..trajectory_iters {
        chain = matrix_chain_step(&chain, &prob)?;
        for (c, p) in scalars.iter_mut().zip(&problems) {
            *c = scalar_chain_step(c, p)?;
        }
        for (li, w) in chain.layers().iter().enumerate() {
            let diag = spectrum.to_eigenbasis(w).diagonal();
            for (d, c) in diag.iter().zip(&scalars) {
                trajectory_gap = nan_max(trajectory_gap, (d - c.weights()[li]).abs());
            }
        }
    }

    let threshold = instability_threshold(depth, rho);
    let unstable_step = threshold_factor * threshold;
    let start = MatrixChain::repeated(&root, depth)?.scaled(1.0 + perturbation);
    let unstable = simulate_matrix(&start, &MatrixProblem::whitened(r, unstable_step)?, iterations, Mode::Single)?;
    Ok(RateCheck {
        seed,
        eigenvalues: spectrum.eigenvalues,
        safe_step: step,
        safe_outcome: run.trajectory.outcome(),
        root_error,
        trajectory_gap,
        threshold,
        unstable_step,
        unstable,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitRun {
    pub bias_range: [f64; 2],
    pub seed: u64,
    pub outcome: TrainOutcome<ConvexConcavePair>,
    pub lipschitz: f64,
    pub mean_abs_grad_w: f64,
    pub mean_abs_grad_b: f64,
}

/// Scalar-parameter pair (`n = 1`, unit widths, `V = 1` frozen) of the
/// given depth fit to `target` sampled on `grid_size` points.
pub fn fit_1d(target: &PiecewiseAffine1D, grid_size: usize, depth: usize, cfg: &TrainConfig) -> Result<FitRun> {
    let data = piecewise_target(target, grid_size)?;
    let mut rng = SeededRng::new(cfg.seed);
    let pair = cfg.init_pair(1, &vec![1; depth], &mut rng)?;
    let outcome = nesterov_train(&pair, &data, cfg)?;
    let lipschitz = lipschitz_1d(&outcome.model, (0.0, 1.0))?;
    let grad = crate::convex::backprop(&outcome.model, &data)?;
    let mean = |kind: ParamKind| {
        let mut values = Vec::new();
        for net in [&grad.plus, &grad.minus] {
            let (v, k) = net_flatten(net);
            values.extend(v.iter().zip(&k).filter(|(_, &kk)| kk == kind).map(|(v, _)| v.abs()));
        }
        values.iter().sum::<f64>() / values.len().max(1) as f64
    };
    Ok(FitRun {
        bias_range: cfg.bias_init_range,
        seed: cfg.seed,
        lipschitz,
        mean_abs_grad_w: mean(ParamKind::W),
        mean_abs_grad_b: mean(ParamKind::B),
        outcome,
    })
}

/// `x,target,estimate` on the training grid.
pub fn fit_curve_csv(target: &PiecewiseAffine1D, grid_size: usize, pair: &ConvexConcavePair) -> Result<String> {
    use std::fmt::Write as _;
    let data = piecewise_target(target, grid_size)?;
    let mut out = String::from("x,target,estimate\n");
    for (x, y) in data.points().iter().zip(data.labels()) {
        let _ = writeln!(out, "{:.16e},{y:.16e},{:.16e}", x[0], pair_forward(pair, x)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexityRow {
    pub input_dim: usize,
    pub depth: usize,
    /// Largest `f̂(mid) − (f̂(x) + f̂(y))/2`, floored at 0.
    pub max_violation: f64,
}

/// Random feasible network with uniform `V` and head entries in `[0.1, 2]`.
pub fn random_convex_net(input_dim: usize, widths: &[usize], rng: &mut SeededRng) -> Result<ConvexResNet> {
    let mut net = ConvexResNet::init(input_dim, widths, (0.0, 1.0), (0.0, 1.0), VInit::Uniform, rng)?;
    net.c = (0..input_dim).map(|_| rng.uniform(0.1, 2.0)).collect();
    net.d = rng.uniform(-1.0, 1.0);
    Ok(net)
}

pub fn convexity_row(max_input_dim: usize, max_depth: usize, max_width: usize, pairs: usize, rng: &mut SeededRng) -> Result<ConvexityRow> {
    let pick = |rng: &mut SeededRng, max: usize| 1 + (rng.uniform(0.0, max as f64) as usize).min(max - 1);
    let input_dim = pick(rng, max_input_dim);
    let depth = pick(rng, max_depth);
    let widths: Vec<usize> = (0..depth).map(|_| pick(rng, max_width)).collect();
    let net = random_convex_net(input_dim, &widths, rng)?;
    let mut max_violation: f64 = 0.0;
    for _ in 0..pairs {
        let x: Vec<f64> = (0..input_dim).map(|_| rng.uniform(0.0, 2.0)).collect();
        let y: Vec<f64> = (0..input_dim).map(|_| rng.uniform(0.0, 2.0)).collect();
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        let gap = net.value(&mid)? - 0.5 * (net.value(&x)? + net.value(&y)?);
        max_violation = max_violation.max(gap);
    }
    Ok(ConvexityRow { input_dim, depth, max_violation })
}

/// Two-dimensional bowl: `W = V = I`, `b = (2, 2)`, `c = (1, 1)`, `d = 0`.
pub fn bowl_net() -> ConvexResNet {
    let layer = ResidualLayer::new(Matrix::identity(2), Matrix::identity(2), vec![2.0, 2.0]).expect("valid bowl layer");
    ConvexResNet::new(vec![layer], vec![1.0, 1.0], 0.0).expect("valid bowl")
}

/// Probe points of the bowl with their hand-derived values.
pub const BOWL_PROBES: [([f64; 2], f64); 4] = [([1.0, 1.0], 2.0), ([3.0, 3.0], 8.0), ([3.0, 1.0], 5.0), ([0.0, 0.0], 0.0)];

#[derive(Clone, Debug, PartialEq)]
pub struct OptCondRun {
    pub seed: u64,
    pub outcome: TrainOutcome<ConvexResNet>,
    /// Unprojected gradient norm over the trained `W`, `b` and `c`.
    pub grad_norm: f64,
    pub residuals: OptimalityResiduals,
    /// `N · max|y|`, the scale the residuals are compared against.
    pub scale: f64,
}

/// Noisy convex increasing target `x + x² + noise·ε` on `[0, 1]`; it passes
/// near the origin, as any `d = 0` network must.
pub fn noisy_convex_target(grid_size: usize, noise: f64, rng: &mut SeededRng) -> Result<Dataset> {
    let xs: Vec<f64> = (0..grid_size).map(|i| i as f64 / (grid_size - 1) as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| x + x * x + noise * rng.standard_normal()).collect();
    Dataset::from_1d(&xs, &ys)
}

/// Trains a scalar `V = I`, `d = 0` network to projected-gradient norm
/// `stop_grad_norm` and evaluates the first-order residuals.
pub fn opt_cond_run(
    grid_size: usize,
    depth: usize,
    step: f64,
    max_epochs: usize,
    stop_grad_norm: f64,
    noise: f64,
    seed: u64,
) -> Result<OptCondRun> {
    let mut rng = SeededRng::new(seed);
    let data = noisy_convex_target(grid_size, noise, &mut rng)?;
    let cfg = TrainConfig {
        step,
        max_epochs,
        seed,
        bias_init_range: [0.0, 1.0],
        weight_init_range: [0.0, 0.5],
        stop_grad_norm: Some(stop_grad_norm),
        ..TrainConfig::default()
    };
    let mut net = cfg.init_net(1, &vec![1; depth], &mut rng)?;
    net.c = vec![1.0];
    let outcome = nesterov_train_net(&net, &data, &cfg)?;
    let grad = net_backprop(&outcome.model, &data)?;
    let (g, kinds) = net_flatten(&grad);
    let grad_norm = g
        .iter()
        .zip(&kinds)
        .filter(|(_, k)| matches!(k, ParamKind::W | ParamKind::B | ParamKind::C))
        .map(|(v, _)| v * v)
        .sum::<f64>()
        .sqrt();
    let residuals = optimality_residuals(&outcome.model, &data)?;
    let scale = data.len() as f64 * data.max_abs_label();
    Ok(OptCondRun { seed, outcome, grad_norm, residuals, scale })
}
