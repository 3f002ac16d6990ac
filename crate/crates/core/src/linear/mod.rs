//! Gradient descent on products of square matrices `W_L ⋯ W_1` fit to a
//! linear target `R` under input covariance `Σ`, and on the double network
//! `W_L ⋯ W_1 − Z_L ⋯ Z_1`.

use std::fmt::Write as _;

use crate::dynamics::{run, StopRule, Trajectory};
use crate::error::{Error, Result};
use crate::numerics::matrix::{mul, mul_nt, mul_tn, nan_max, Matrix};
use crate::numerics::spectrum::invert;
use crate::scalar::Mode;

/// Symmetry tolerance for Σ.
const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// Smallest eigenvalue accepted for Σ.
const PSD_TOLERANCE: f64 = -1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixChain {
    layers: Vec<Matrix>,
}

impl MatrixChain {
    pub fn new(layers: Vec<Matrix>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::InvalidArgument("chain needs at least one layer".into()));
        };
        let n = first.rows();
        for (i, w) in layers.iter().enumerate() {
            if w.rows() != n || w.cols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "layer {i} is {}x{}, expected {n}x{n}",
                    w.rows(),
                    w.cols()
                )));
            }
            if !w.is_finite() {
                return Err(Error::InvalidArgument(format!("layer {i} has non-finite entries")));
            }
        }
        Ok(MatrixChain { layers })
    }

    /// Every layer the `n×n` identity.
    pub fn identity(n: usize, depth: usize) -> Self {
        MatrixChain {
            layers: vec![Matrix::identity(n); depth],
        }
    }

    /// `depth` copies of `layer`.
    pub fn repeated(layer: &Matrix, depth: usize) -> Result<Self> {
        Self::new(vec![layer.clone(); depth])
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn width(&self) -> usize {
        self.layers[0].rows()
    }

    /// Every entry of every layer scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        MatrixChain {
            layers: self.layers.iter().map(|w| w.scale(factor)).collect(),
        }
    }

    /// `W_L ⋯ W_1`.
    pub fn product(&self) -> Matrix {
        let mut p = self.layers[0].clone();
        for w in &self.layers[1..] {
            p = mul(w, &p);
        }
        p
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Matrix::is_finite)
    }

    /// Partial products `P_i = W_i ⋯ W_1` for `i = 0..=L` (`P_0 = I`) and
    /// `S_i = W_L ⋯ W_{i+1}` (`S_L = I`).
    fn partial_products(&self) -> (Vec<Matrix>, Vec<Matrix>) {
        let l = self.depth();
        let n = self.width();
        let mut prefix = Vec::with_capacity(l + 1);
        prefix.push(Matrix::identity(n));
        for w in &self.layers {
            let next = mul(w, prefix.last().expect("non-empty"));
            prefix.push(next);
        }
        let mut suffix = vec![Matrix::identity(n); l + 1];
        for i in (0..l).rev() {
            suffix[i] = mul(&suffix[i + 1], &self.layers[i]);
        }
        (prefix, suffix)
    }

    /// `∂/∂W_i` of `½ tr(E Σ Eᵀ)` given the output-side factor `EΣ`.
    fn gradients(&self, prefix: &[Matrix], suffix: &[Matrix], e_sigma: &Matrix) -> Vec<Matrix> {
        (0..self.depth())
            .map(|i| mul_nt(&mul_tn(&suffix[i + 1], e_sigma), &prefix[i]))
            .collect()
    }

    fn descend(&self, grads: &[Matrix], step: f64) -> MatrixChain {
        MatrixChain {
            layers: self
                .layers
                .iter()
                .zip(grads)
                .map(|(w, g)| w.sub_scaled(step, g))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixProblem {
    target: Matrix,
    sigma: Matrix,
    step: f64,
    identity_sigma: bool,
}

impl MatrixProblem {
    pub fn new(target: Matrix, sigma: Matrix, step: f64) -> Result<Self> {
        let mut bad = Vec::new();
        let n = target.rows();
        if !target.is_square() || n == 0 {
            bad.push(format!("target must be square, got {}x{}", target.rows(), target.cols()));
        }
        if sigma.rows() != n || sigma.cols() != n {
            bad.push(format!("sigma must be {n}x{n}, got {}x{}", sigma.rows(), sigma.cols()));
        } else if sigma.max_abs_diff(&sigma.transpose()) > SYMMETRY_TOLERANCE {
            bad.push("sigma must be symmetric".to_string());
        } else {
            let min_eig = sigma
                .to_dmatrix()
                .symmetric_eigenvalues()
                .iter()
                .fold(f64::INFINITY, |m, &x| m.min(x));
            if !(min_eig >= PSD_TOLERANCE) {
                bad.push(format!("sigma must be positive semidefinite, smallest eigenvalue {min_eig:e}"));
            }
        }
        if !target.is_finite() || !sigma.is_finite() {
            bad.push("target and sigma must be finite".to_string());
        }
        if !(step.is_finite() && step > 0.0) {
            bad.push(format!("step must be positive, got {step}"));
        }
        if !bad.is_empty() {
            return Err(Error::Validation(bad));
        }
        let identity_sigma = sigma == Matrix::identity(n);
        Ok(MatrixProblem { target, sigma, step, identity_sigma })
    }

    /// Problem with `Σ = I`.
    pub fn whitened(target: Matrix, step: f64) -> Result<Self> {
        let n = target.rows();
        Self::new(target, Matrix::identity(n), step)
    }

    pub fn target(&self) -> &Matrix {
        &self.target
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn width(&self) -> usize {
        self.target.rows()
    }

    fn check(&self, chain: &MatrixChain) -> Result<()> {
        if chain.width() != self.width() {
            return Err(Error::DimensionMismatch(format!(
                "chain width {} but target is {}x{}",
                chain.width(),
                self.width(),
                self.width()
            )));
        }
        Ok(())
    }

    fn times_sigma(&self, e: &Matrix) -> Matrix {
        if self.identity_sigma {
            e.clone()
        } else {
            mul(e, &self.sigma)
        }
    }

    /// `½ tr(E Σ Eᵀ)`.
    fn loss_of_error(&self, e: &Matrix) -> f64 {
        let es = self.times_sigma(e);
        0.5 * es.as_slice().iter().zip(e.as_slice()).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// One gradient step on every layer, all factors from the current iterate.
pub fn matrix_chain_step(chain: &MatrixChain, prob: &MatrixProblem) -> Result<MatrixChain> {
    prob.check(chain)?;
    Ok(single_step(chain, prob))
}

fn single_step(chain: &MatrixChain, prob: &MatrixProblem) -> MatrixChain {
    let (prefix, suffix) = chain.partial_products();
    let e = prefix[chain.depth()].sub_scaled(1.0, &prob.target);
    let grads = chain.gradients(&prefix, &suffix, &prob.times_sigma(&e));
    chain.descend(&grads, prob.step)
}

/// Population squared error `½ tr((F̂ − R) Σ (F̂ − R)ᵀ)`.
pub fn chain_loss(chain: &MatrixChain, prob: &MatrixProblem) -> Result<f64> {
    prob.check(chain)?;
    let e = chain.product().sub_scaled(1.0, &prob.target);
    Ok(prob.loss_of_error(&e))
}

/// Above this step no equilibrium reproducing a target of spectral radius
/// `rho` is stable: `2 / (L ρ^{2(L−1)/L})`.
pub fn instability_threshold(depth: usize, rho: f64) -> f64 {
    let l = depth as f64;
    2.0 / (l * rho.powf(2.0 * (l - 1.0) / l))
}

/// Step for which identity initialization converges to `R^{1/L}`:
/// `(1/L) min(1, ρ^{−2(L−1)/L})`.
pub fn safe_step(depth: usize, rho: f64) -> f64 {
    let l = depth as f64;
    (1.0 / l) * (1.0f64).min(rho.powf(-2.0 * (l - 1.0) / l))
}

/// Plus chain `W` and minus chain `Z` of a double network.
#[derive(Clone, Debug, PartialEq)]
pub struct DoubleMatrixChain {
    pub plus: MatrixChain,
    pub minus: MatrixChain,
}

impl DoubleMatrixChain {
    pub fn new(plus: MatrixChain, minus: MatrixChain) -> Result<Self> {
        if plus.width() != minus.width() || plus.depth() != minus.depth() {
            return Err(Error::DimensionMismatch(format!(
                "plus chain {}x{} deep {}, minus chain {}x{} deep {}",
                plus.width(),
                plus.width(),
                plus.depth(),
                minus.width(),
                minus.width(),
                minus.depth()
            )));
        }
        Ok(DoubleMatrixChain { plus, minus })
    }

    pub fn identity(n: usize, depth: usize) -> Self {
        DoubleMatrixChain {
            plus: MatrixChain::identity(n, depth),
            minus: MatrixChain::identity(n, depth),
        }
    }

    /// `W_L ⋯ W_1 − Z_L ⋯ Z_1`.
    pub fn product(&self) -> Matrix {
        self.plus.product().sub_scaled(1.0, &self.minus.product())
    }
}

pub fn double_loss(chain: &DoubleMatrixChain, prob: &MatrixProblem) -> Result<f64> {
    prob.check(&chain.plus)?;
    let e = chain.product().sub_scaled(1.0, &prob.target);
    Ok(prob.loss_of_error(&e))
}

/// One gradient step on both chains of the double network.
pub fn double_matrix_step(chain: &DoubleMatrixChain, prob: &MatrixProblem) -> Result<DoubleMatrixChain> {
    prob.check(&chain.plus)?;
    prob.check(&chain.minus)?;
    Ok(double_step(chain, prob))
}

fn double_step(chain: &DoubleMatrixChain, prob: &MatrixProblem) -> DoubleMatrixChain {
    let l = chain.plus.depth();
    let (wp, ws) = chain.plus.partial_products();
    let (zp, zs) = chain.minus.partial_products();
    let e = wp[l].sub_scaled(1.0, &zp[l]).sub_scaled(1.0, &prob.target);
    let es = prob.times_sigma(&e);
    DoubleMatrixChain {
        plus: chain.plus.descend(&chain.plus.gradients(&wp, &ws, &es), prob.step),
        minus: chain.minus.descend(&chain.minus.gradients(&zp, &zs, &es), -prob.step),
    }
}

/// Final iterate of a simulation.
#[derive(Clone, Debug, PartialEq)]
pub enum MatrixState {
    Single(MatrixChain),
    Double(DoubleMatrixChain),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixRun {
    pub trajectory: Trajectory,
    pub state: MatrixState,
}

/// Runs gradient descent from `chain0`, recording the loss per iteration. In
/// [`Mode::Double`] both chains start as copies of `chain0`.
pub fn simulate_matrix(
    chain0: &MatrixChain,
    prob: &MatrixProblem,
    max_iters: usize,
    mode: Mode,
) -> Result<Trajectory> {
    Ok(simulate_matrix_run(chain0, prob, max_iters, mode, None)?.trajectory)
}

/// [`simulate_matrix`] that also returns the final iterate and, with
/// `snapshot_every`, flattened layers along the way.
pub fn simulate_matrix_run(
    chain0: &MatrixChain,
    prob: &MatrixProblem,
    max_iters: usize,
    mode: Mode,
    snapshot_every: Option<usize>,
) -> Result<MatrixRun> {
    prob.check(chain0)?;
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    let flatten = |c: &MatrixChain| -> Vec<f64> {
        c.layers.iter().flat_map(|w| w.as_slice().iter().copied()).collect()
    };
    Ok(match mode {
        Mode::Single => {
            let (end, trajectory) = run(
                chain0.clone(),
                max_iters,
                StopRule::MATRIX,
                snapshot_every,
                |c| {
                    let e = c.product().sub_scaled(1.0, &prob.target);
                    prob.loss_of_error(&e)
                },
                flatten,
                |c| single_step(c, prob),
            );
            MatrixRun { trajectory, state: MatrixState::Single(end) }
        }
        Mode::Double => {
            let start = DoubleMatrixChain::new(chain0.clone(), chain0.clone())?;
            let (end, trajectory) = run(
                start,
                max_iters,
                StopRule::MATRIX,
                snapshot_every,
                |c| prob.loss_of_error(&c.product().sub_scaled(1.0, &prob.target)),
                |c| [flatten(&c.plus), flatten(&c.minus)].concat(),
                |c| double_step(c, prob),
            );
            MatrixRun { trajectory, state: MatrixState::Double(end) }
        }
    })
}

/// Largest off-diagonal magnitude of `M⁻¹ W_i M` over all layers.
pub fn decoupling_check(chain: &MatrixChain, basis: &Matrix) -> Result<f64> {
    if basis.rows() != chain.width() || !basis.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "basis is {}x{} for width {}",
            basis.rows(),
            basis.cols(),
            chain.width()
        )));
    }
    let inv = invert(basis)?;
    Ok(chain
        .layers
        .iter()
        .map(|w| mul(&mul(&inv, w), basis).max_abs_off_diagonal())
        .fold(0.0, nan_max))
}

/// `iter,loss_single,loss_double`. A run that stopped early leaves its
/// later cells empty.
pub fn paired_loss_csv(single: &Trajectory, double: &Trajectory) -> String {
    let rows = single.errors.len().max(double.errors.len());
    let cell = |t: &Trajectory, k: usize| t.errors.get(k).map(|e| format!("{e:.16e}")).unwrap_or_default();
    let mut out = String::from("iter,loss_single,loss_double\n");
    for k in 0..rows {
        let _ = writeln!(out, "{k},{},{}", cell(single, k), cell(double, k));
    }
    out
}
