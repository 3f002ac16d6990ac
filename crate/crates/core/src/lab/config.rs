use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One experiment run: what to run, the base seed and where artifacts go.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub experiment: Experiment,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("reslab-out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    ScalarSweep(ScalarSweep),
    ScalarBoundary(ScalarBoundary),
    MatrixSingleVsDouble(MatrixSingleVsDouble),
    MatrixRateCheck(MatrixRateCheck),
    Fit1d(Fit1d),
    ConvexityAudit(ConvexityAudit),
    OptCondAudit(OptCondAudit),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::ScalarSweep(_) => "scalar_sweep",
            Experiment::ScalarBoundary(_) => "scalar_boundary",
            Experiment::MatrixSingleVsDouble(_) => "matrix_single_vs_double",
            Experiment::MatrixRateCheck(_) => "matrix_rate_check",
            Experiment::Fit1d(_) => "fit1d",
            Experiment::ConvexityAudit(_) => "convexity_audit",
            Experiment::OptCondAudit(_) => "opt_cond_audit",
        }
    }
}

fn one() -> f64 {
    1.0
}

/// Identity-initialized scalar chains over a depth × target grid, each at
/// `step_factor` times the critical step (or the collapse bound for
/// negative targets).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarSweep {
    pub depths: Vec<usize>,
    pub lambdas: Vec<f64>,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "one")]
    pub step_factor: f64,
    #[serde(default = "sweep_iters")]
    pub max_iters: usize,
}

fn sweep_iters() -> usize {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryCase {
    pub depth: usize,
    pub lambda: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    /// Defaults to the balanced equilibrium.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<Vec<f64>>,
}

/// Empirical step-size boundary of scalar equilibria against the analytic
/// bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarBoundary {
    pub cases: Vec<BoundaryCase>,
    #[serde(default = "boundary_tol")]
    pub rel_tol: f64,
}

fn boundary_tol() -> f64 {
    1e-3
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Gaussian,
    Orthogonal,
}

/// Single against double network on random diagonalizable targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSingleVsDouble {
    pub width: usize,
    pub depth: usize,
    pub eigen_range: [f64; 2],
    pub seeds: Vec<u64>,
    #[serde(default = "matrix_iters")]
    pub iterations: usize,
    /// Defaults to the safe step at the target's spectral norm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default = "gaussian")]
    pub basis: Basis,
}

fn matrix_iters() -> usize {
    10_000
}

fn gaussian() -> Basis {
    Basis::Gaussian
}

/// Convergence at the safe step, eigenvalue decoupling, and instability
/// above the threshold, on symmetric targets with positive spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixRateCheck {
    pub width: usize,
    pub depth: usize,
    pub eigen_range: [f64; 2],
    pub seeds: Vec<u64>,
    #[serde(default = "rate_iters")]
    pub iterations: usize,
    #[serde(default = "trajectory_iters")]
    pub trajectory_iters: usize,
    #[serde(default = "threshold_factor")]
    pub threshold_factor: f64,
    #[serde(default = "perturbation")]
    pub perturbation: f64,
}

fn rate_iters() -> usize {
    100_000
}

fn trajectory_iters() -> usize {
    1_000
}

fn threshold_factor() -> f64 {
    1.1
}

fn perturbation() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub breakpoints: Vec<f64>,
    pub slopes: Vec<f64>,
    #[serde(default)]
    pub intercept: f64,
}

/// Scalar-parameter convex–concave pairs fit to a piecewise-affine target,
/// one run per bias range and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fit1d {
    /// Defaults to the reference target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
    #[serde(default = "fit_grid")]
    pub grid_size: usize,
    pub depth: usize,
    pub bias_ranges: Vec<[f64; 2]>,
    pub seeds: Vec<u64>,
    pub step: f64,
    pub max_epochs: usize,
    #[serde(default = "weight_range")]
    pub weight_init_range: [f64; 2],
    #[serde(default = "yes")]
    pub projection: bool,
}

fn fit_grid() -> usize {
    101
}

fn weight_range() -> [f64; 2] {
    [0.0, 0.1]
}

fn yes() -> bool {
    true
}

/// Midpoint convexity of random feasible networks and the bowl values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvexityAudit {
    pub nets: usize,
    pub pairs_per_net: usize,
    #[serde(default = "audit_dim")]
    pub max_input_dim: usize,
    #[serde(default = "audit_depth")]
    pub max_depth: usize,
    #[serde(default = "audit_width")]
    pub max_width: usize,
}

fn audit_dim() -> usize {
    3
}

fn audit_depth() -> usize {
    4
}

fn audit_width() -> usize {
    4
}

/// Single `V = I` networks trained to stationarity on a noisy convex
/// target, with the first-order residuals at the end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptCondAudit {
    #[serde(default = "opt_grid")]
    pub grid_size: usize,
    pub depth: usize,
    pub seeds: Vec<u64>,
    pub step: f64,
    pub max_epochs: usize,
    #[serde(default = "stop_grad")]
    pub stop_grad_norm: f64,
    #[serde(default = "noise")]
    pub noise: f64,
}

fn opt_grid() -> usize {
    21
}

fn stop_grad() -> f64 {
    1e-8
}

fn noise() -> f64 {
    0.01
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(vec![format!("config: {e}")]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Field-level violations; empty iff the config would run.
pub fn validate(config: &ExperimentConfig) -> Vec<String> {
    let mut c = Checks::default();
    if config.output_dir.as_os_str().is_empty() {
        c.fail("output_dir", "must not be empty");
    } else if config.output_dir.is_file() {
        c.fail("output_dir", "exists and is not a directory");
    }
    match &config.experiment {
        Experiment::ScalarSweep(p) => {
            c.nonempty("depths", &p.depths);
            for (i, &d) in p.depths.iter().enumerate() {
                c.at_least(&format!("depths[{i}]"), d, 1);
            }
            c.nonempty("lambdas", &p.lambdas);
            for (i, &l) in p.lambdas.iter().enumerate() {
                c.nonzero_lambda(&format!("lambdas[{i}]"), l);
            }
            c.positive("sigma", p.sigma);
            c.positive("step_factor", p.step_factor);
            c.at_least("max_iters", p.max_iters, 1);
        }
        Experiment::ScalarBoundary(p) => {
            c.nonempty("cases", &p.cases);
            for (i, case) in p.cases.iter().enumerate() {
                let at = |f: &str| format!("cases[{i}].{f}");
                c.at_least(&at("depth"), case.depth, 1);
                c.nonzero_lambda(&at("lambda"), case.lambda);
                c.positive(&at("sigma"), case.sigma);
                if let Some(eq) = &case.equilibrium {
                    if eq.len() != case.depth {
                        c.fail(&at("equilibrium"), &format!("has {} weights for depth {}", eq.len(), case.depth));
                    } else if eq.iter().any(|w| !w.is_finite()) {
                        c.fail(&at("equilibrium"), "must be finite");
                    } else {
                        let product: f64 = eq.iter().product();
                        if (product - case.lambda).abs() > 1e-12 * case.lambda.abs().max(1.0) {
                            c.fail(&at("equilibrium"), &format!("product {product} is not lambda {}", case.lambda));
                        }
                    }
                }
            }
            c.open_unit("rel_tol", p.rel_tol);
        }
        Experiment::MatrixSingleVsDouble(p) => {
            c.at_least("width", p.width, 1);
            c.at_least("depth", p.depth, 1);
            c.range("eigen_range", p.eigen_range);
            c.nonempty("seeds", &p.seeds);
            c.at_least("iterations", p.iterations, 1);
            if let Some(step) = p.step {
                c.positive("step", step);
            }
        }
        Experiment::MatrixRateCheck(p) => {
            c.at_least("width", p.width, 1);
            c.at_least("depth", p.depth, 1);
            c.range("eigen_range", p.eigen_range);
            if !(p.eigen_range[0] > 0.0) {
                c.fail("eigen_range", "eigenvalues must be positive");
            }
            c.nonempty("seeds", &p.seeds);
            c.at_least("iterations", p.iterations, 1);
            c.at_least("trajectory_iters", p.trajectory_iters, 1);
            c.positive("threshold_factor", p.threshold_factor);
            c.positive("perturbation", p.perturbation);
        }
        Experiment::Fit1d(p) => {
            if let Some(t) = &p.target {
                if let Err(e) = crate::convex::PiecewiseAffine1D::new(t.breakpoints.clone(), t.slopes.clone(), t.intercept) {
                    c.fail("target", &e.to_string());
                }
            }
            c.at_least("grid_size", p.grid_size, 2);
            c.at_least("depth", p.depth, 1);
            c.nonempty("bias_ranges", &p.bias_ranges);
            for (i, &r) in p.bias_ranges.iter().enumerate() {
                c.nonnegative_range(&format!("bias_ranges[{i}]"), r);
            }
            c.nonempty("seeds", &p.seeds);
            c.positive("step", p.step);
            c.nonnegative_range("weight_init_range", p.weight_init_range);
        }
        Experiment::ConvexityAudit(p) => {
            c.at_least("nets", p.nets, 1);
            c.at_least("pairs_per_net", p.pairs_per_net, 1);
            c.at_least("max_input_dim", p.max_input_dim, 1);
            c.at_least("max_depth", p.max_depth, 1);
            c.at_least("max_width", p.max_width, 1);
        }
        Experiment::OptCondAudit(p) => {
            c.at_least("grid_size", p.grid_size, 2);
            c.at_least("depth", p.depth, 1);
            c.nonempty("seeds", &p.seeds);
            c.positive("step", p.step);
            c.positive("stop_grad_norm", p.stop_grad_norm);
            if !(p.noise.is_finite() && p.noise >= 0.0) {
                c.fail("noise", &format!("must be nonnegative, got {}", p.noise));
            }
        }
    }
    c.0
}

#[derive(Default)]
struct Checks(Vec<String>);

impl Checks {
    fn fail(&mut self, field: &str, message: &str) {
        self.0.push(format!("{field}: {message}"));
    }

    fn positive(&mut self, field: &str, v: f64) {
        if !(v.is_finite() && v > 0.0) {
            self.fail(field, &format!("must be positive, got {v}"));
        }
    }

    fn open_unit(&mut self, field: &str, v: f64) {
        if !(v > 0.0 && v < 1.0) {
            self.fail(field, &format!("must lie in (0, 1), got {v}"));
        }
    }

    fn at_least(&mut self, field: &str, v: usize, min: usize) {
        if v < min {
            self.fail(field, &format!("must be at least {min}, got {v}"));
        }
    }

    fn nonempty<T>(&mut self, field: &str, v: &[T]) {
        if v.is_empty() {
            self.fail(field, "must not be empty");
        }
    }

    fn nonzero_lambda(&mut self, field: &str, v: f64) {
        if v == 0.0 {
            self.fail(field, "lambda must be nonzero");
        } else if !v.is_finite() {
            self.fail(field, &format!("lambda must be finite, got {v}"));
        }
    }

    fn range(&mut self, field: &str, [lo, hi]: [f64; 2]) {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            self.fail(field, &format!("must satisfy low <= high, got [{lo}, {hi}]"));
        }
    }

    fn nonnegative_range(&mut self, field: &str, [lo, hi]: [f64; 2]) {
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            self.fail(field, &format!("must satisfy 0 <= low <= high, got [{lo}, {hi}]"));
        }
    }
}
