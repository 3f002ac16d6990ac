//! Eigendecomposition of diagonalizable matrices with real spectra.
//!
//! Eigenvalues come from nalgebra's real Schur form. Eigenvectors are the
//! right singular vectors of `A - λI` belonging to its smallest singular
//! values, one per unit of multiplicity, so repeated eigenvalues of a
//! diagonalizable matrix get a full eigenbasis.

use nalgebra::DMatrix;

use super::matrix::{mul, nan_max, Matrix};
use super::rng::SeededRng;
use crate::error::{Error, Result};

/// Relative imaginary part above which an eigenvalue counts as complex.
pub const IMAGINARY_TOLERANCE: f64 = 1e-8;
/// Eigenvector matrices worse conditioned than this are treated as defective.
pub const DECOMPOSE_CONDITION_LIMIT: f64 = 1e10;
/// Random eigenbases worse conditioned than this are redrawn.
pub const GENERATE_CONDITION_LIMIT: f64 = 1e6;
const GENERATE_MAX_TRIES: usize = 100;
/// Eigenvalues closer than this (relative to the spectral scale) form one
/// repeated eigenvalue.
const CLUSTER_TOLERANCE: f64 = 1e-9;
/// Singular values of `A - λI` below this (relative to `‖A‖₂`) span the eigenspace.
const NULL_TOLERANCE: f64 = 1e-6;

/// `A = M Λ M⁻¹` with eigenvalues sorted descending.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors.
    pub eigenvectors: Matrix,
    pub inverse_eigenvectors: Matrix,
}

impl Spectrum {
    /// Builds a spectrum from an explicit basis, sorting into canonical order.
    pub fn from_parts(eigenvalues: Vec<f64>, eigenvectors: Matrix) -> Result<Spectrum> {
        let n = eigenvalues.len();
        if eigenvectors.rows() != n || eigenvectors.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} eigenvalues with a {}x{} basis",
                eigenvectors.rows(),
                eigenvectors.cols()
            )));
        }
        let columns: Vec<Vec<f64>> = (0..n).map(|j| eigenvectors.col(j)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eigenvalues[b]
                .total_cmp(&eigenvalues[a])
                .then_with(|| lexicographic(&columns[a], &columns[b]))
        });
        let values: Vec<f64> = order.iter().map(|&k| eigenvalues[k]).collect();
        let mut basis = Matrix::zeros(n, n);
        for (j, &k) in order.iter().enumerate() {
            for i in 0..n {
                basis[(i, j)] = columns[k][i];
            }
        }
        let inverse = invert(&basis)?;
        Ok(Spectrum {
            eigenvalues: values,
            eigenvectors: basis,
            inverse_eigenvectors: inverse,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `M f(Λ) M⁻¹`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.dim();
        let mut scaled = self.eigenvectors.clone();
        for j in 0..n {
            let s = f(self.eigenvalues[j]);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        mul(&scaled, &self.inverse_eigenvectors)
    }

    pub fn reconstruct(&self) -> Matrix {
        self.map(|x| x)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, x| nan_max(m, x.abs()))
    }

    /// Expresses `a` in this eigenbasis: `M⁻¹ a M`.
    pub fn to_eigenbasis(&self, a: &Matrix) -> Matrix {
        mul(&mul(&self.inverse_eigenvectors, a), &self.eigenvectors)
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

pub fn invert(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch("inverse of a non-square matrix".into()));
    }
    a.to_dmatrix()
        .try_inverse()
        .filter(|m| m.iter().all(|x| x.is_finite()))
        .map(|m| Matrix::from_dmatrix(&m))
        .ok_or(Error::SingularMatrix)
}

fn singular_values(a: &Matrix) -> Vec<f64> {
    let mut s: Vec<f64> = a.to_dmatrix().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(a: &Matrix) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Largest singular value.
pub fn spectral_norm(a: &Matrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Eigendecomposition of a diagonalizable matrix with real eigenvalues.
pub fn decompose(a: &Matrix) -> Result<Spectrum> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "decompose needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let n = a.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }

    let dm = a.to_dmatrix();
    let complex = dm
        .clone()
        .try_schur(f64::EPSILON, 0)
        .ok_or_else(|| Error::ComplexOrDefective("Schur iteration did not converge".into()))?
        .complex_eigenvalues();
    let scale = complex.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let mut values = Vec::with_capacity(n);
    for z in complex.iter() {
        if z.im.abs() > IMAGINARY_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::ComplexOrDefective(format!(
                "eigenvalue {} {:+}i",
                z.re, z.im
            )));
        }
        values.push(z.re);
    }
    values.sort_by(|x, y| y.total_cmp(x));

    // Group repeated eigenvalues, then pull one null-space basis per group.
    let tol = CLUSTER_TOLERANCE * scale.max(1.0);
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for v in values {
        match groups.last_mut() {
            Some(g) if (g[g.len() - 1] - v).abs() <= tol => g.push(v),
            _ => groups.push(vec![v]),
        }
    }

    let norm = spectral_norm(a);
    let mut eigenvalues = Vec::with_capacity(n);
    let mut basis = Matrix::zeros(n, n);
    let mut col = 0;
    for group in &groups {
        let lambda = group.iter().sum::<f64>() / group.len() as f64;
        let shifted = &dm - DMatrix::<f64>::identity(n, n) * lambda;
        let svd = shifted.svd(false, true);
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::ComplexOrDefective("SVD failed".into()))?;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&p, &q| svd.singular_values[p].total_cmp(&svd.singular_values[q]));
        for &k in idx.iter().take(group.len()) {
            if svd.singular_values[k] > NULL_TOLERANCE * norm.max(1.0) {
                return Err(Error::ComplexOrDefective(format!(
                    "eigenvalue {lambda} has a deficient eigenspace"
                )));
            }
            let mut v: Vec<f64> = v_t.row(k).iter().copied().collect();
            canonical_sign(&mut v);
            for (i, x) in v.into_iter().enumerate() {
                basis[(i, col)] = x;
            }
            eigenvalues.push(lambda);
            col += 1;
        }
    }

    let cond = condition_number(&basis);
    if !(cond <= DECOMPOSE_CONDITION_LIMIT) {
        return Err(Error::ComplexOrDefective(format!(
            "eigenvector matrix condition estimate {cond:.3e}"
        )));
    }
    Spectrum::from_parts(eigenvalues, basis)
}

/// Unit norm, largest-magnitude entry positive.
fn canonical_sign(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let pivot = v
        .iter()
        .copied()
        .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    let s = if pivot < 0.0 { -1.0 / norm } else { 1.0 / norm };
    v.iter_mut().for_each(|x| *x *= s);
}

pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    Ok(decompose(a)?.spectral_radius())
}

/// Principal real L-th root `M Λ^{1/L} M⁻¹` of a matrix with positive spectrum.
pub fn matrix_lth_root(a: &Matrix, depth: usize) -> Result<Matrix> {
    if depth == 0 {
        return Err(Error::InvalidArgument("root order must be at least 1".into()));
    }
    let spectrum = decompose(a)?;
    if let Some(&bad) = spectrum.eigenvalues.iter().find(|&&x| x <= 0.0) {
        return Err(Error::NonpositiveEigenvalue(bad));
    }
    let inv = 1.0 / depth as f64;
    Ok(spectrum.map(|x| x.powf(inv)))
}

/// How eigenvectors of a planted spectrum are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EigenBasis {
    /// Entries i.i.d. standard normal.
    Gaussian,
    /// Orthonormal basis from the QR factor of a Gaussian matrix; the
    /// resulting target is symmetric.
    Orthogonal,
}

/// Random matrix with the given eigenvalues.
pub fn planted_spectrum(
    eigenvalues: &[f64],
    basis: EigenBasis,
    rng: &mut SeededRng,
) -> Result<(Matrix, Spectrum)> {
    let n = eigenvalues.len();
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one eigenvalue".into()));
    }
    for _ in 0..GENERATE_MAX_TRIES {
        let gaussian = Matrix::from_vec(n, n, (0..n * n).map(|_| rng.standard_normal()).collect())?;
        let m = match basis {
            EigenBasis::Gaussian => gaussian,
            EigenBasis::Orthogonal => {
                let q = gaussian.to_dmatrix().qr().q();
                Matrix::from_dmatrix(&q)
            }
        };
        if !(condition_number(&m) <= GENERATE_CONDITION_LIMIT) {
            continue;
        }
        let Ok(spectrum) = Spectrum::from_parts(eigenvalues.to_vec(), m) else {
            continue;
        };
        return Ok((spectrum.reconstruct(), spectrum));
    }
    Err(Error::DegenerateEigenvectorDraw)
}

/// `R = M Λ M⁻¹` with eigenvalues uniform on `[eig_low, eig_high]` and a
/// Gaussian eigenvector matrix, redrawn while badly conditioned.
pub fn random_diagonalizable(
    n: usize,
    eig_low: f64,
    eig_high: f64,
    rng: &mut SeededRng,
) -> Result<(Matrix, Spectrum)> {
    random_with_basis(n, eig_low, eig_high, EigenBasis::Gaussian, rng)
}

pub fn random_with_basis(
    n: usize,
    eig_low: f64,
    eig_high: f64,
    basis: EigenBasis,
    rng: &mut SeededRng,
) -> Result<(Matrix, Spectrum)> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(eig_low <= eig_high) {
        return Err(Error::InvalidArgument(format!(
            "empty eigenvalue range [{eig_low}, {eig_high}]"
        )));
    }
    let eigenvalues: Vec<f64> = (0..n).map(|_| rng.uniform(eig_low, eig_high)).collect();
    planted_spectrum(&eigenvalues, basis, rng)
}
