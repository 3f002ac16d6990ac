use nalgebra::DMatrix;

use super::grad::Dataset;
use super::net::{dot, ConvexConcavePair, ConvexResNet};
use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

/// Norms of the first-order optimality residuals of a `V = I` network.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimalityResiduals {
    /// `‖Σ_i c_l^i r_i (h_{l−1}(x_i) − b_l)_+ᵀ‖_F` for each layer `l`.
    pub layers: Vec<f64>,
    /// `‖Σ_i r_i h_L(x_i)‖`.
    pub head: f64,
}

impl OptimalityResiduals {
    pub fn max(&self) -> f64 {
        self.layers.iter().fold(self.head, |m, &x| m.max(x))
    }
}

fn check_identity_v(net: &ConvexResNet) -> Result<()> {
    for (i, l) in net.layers.iter().enumerate() {
        if !l.v.is_square() || l.v.max_abs_diff(&Matrix::identity(l.v.rows())) > 0.0 {
            return Err(Error::InvalidArgument(format!("layer {i} does not have V = I")));
        }
    }
    Ok(())
}

/// Per-sample quantities for a `V = I` network: residual, trunk states and
/// the output gradients `c_l = ∂f̂/∂h_l` for `l = 0..=L`.
struct SampleTrace {
    residual: f64,
    h: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
}

/// `c_{l−1}ᵀ = c_lᵀ (I + W_l diag(mask_l))` from `c_L = c`.
fn trace(net: &ConvexResNet, x: &[f64], y: f64) -> SampleTrace {
    let (value, act) = net.forward_unchecked(x);
    let depth = net.depth();
    let mut c = vec![Vec::new(); depth + 1];
    c[depth] = net.c.clone();
    for l in (0..depth).rev() {
        let w = &net.layers[l].w;
        let next = &c[l + 1];
        let mut cur = next.clone();
        for k in 0..w.cols() {
            if act.masks[l][k] {
                let s: f64 = (0..w.rows()).map(|r| next[r] * w[(r, k)]).sum();
                cur[k] += s;
            }
        }
        c[l] = cur;
    }
    SampleTrace { residual: value - y, h: act.h, c }
}

/// Residual norms of the stationarity conditions in `W_l` and `c`.
pub fn optimality_residuals(net: &ConvexResNet, data: &Dataset) -> Result<OptimalityResiduals> {
    check_identity_v(net)?;
    data.check(net.input_dim())?;
    let n = net.input_dim();
    let mut layer_sums: Vec<Matrix> = net.layers.iter().map(|_| Matrix::zeros(n, n)).collect();
    let mut head = vec![0.0; n];
    for (x, &y) in data.points().iter().zip(data.labels()) {
        let t = trace(net, x, y);
        for (l, sum) in layer_sums.iter_mut().enumerate() {
            let b = &net.layers[l].b;
            for r in 0..n {
                for k in 0..n {
                    sum[(r, k)] += t.c[l + 1][r] * t.residual * (t.h[l][k] - b[k]).max(0.0);
                }
            }
        }
        for (acc, h) in head.iter_mut().zip(&t.h[net.depth()]) {
            *acc += t.residual * h;
        }
    }
    Ok(OptimalityResiduals {
        layers: layer_sums.iter().map(Matrix::frobenius_norm).collect(),
        head: dot(&head, &head).sqrt(),
    })
}

/// `∂/∂b_l = −Σ_i diag(1{h_{l−1}(x_i) − b_l ≥ 0}) W_lᵀ c_l^i r_i` for a
/// `V = I` network.
pub fn bias_gradient_direct(net: &ConvexResNet, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    check_identity_v(net)?;
    data.check(net.input_dim())?;
    let n = net.input_dim();
    let mut grads = vec![vec![0.0; n]; net.depth()];
    for (x, &y) in data.points().iter().zip(data.labels()) {
        let t = trace(net, x, y);
        for (l, g) in grads.iter_mut().enumerate() {
            let layer = &net.layers[l];
            let wc = layer.w.matvec_t(&t.c[l + 1]);
            for k in 0..n {
                if t.h[l][k] - layer.b[k] >= 0.0 {
                    g[k] -= wc[k] * t.residual;
                }
            }
        }
    }
    Ok(grads)
}

/// Uniform tensor grid, last axis varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    /// `(low, high, points)` per axis.
    pub axes: Vec<(f64, f64, usize)>,
}

impl Grid {
    pub fn new(axes: Vec<(f64, f64, usize)>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidArgument("grid needs at least one axis".into()));
        }
        for (axis, &(lo, hi, points)) in axes.iter().enumerate() {
            if points < 3 {
                return Err(Error::GridTooCoarse { axis, points });
            }
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!("axis {axis} range [{lo}, {hi}] is empty")));
            }
        }
        Ok(Grid { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.2).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn spacing(&self, axis: usize) -> f64 {
        let (lo, hi, n) = self.axes[axis];
        (hi - lo) / (n - 1) as f64
    }

    fn index_of(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (&i, a)| acc * a.2 + i)
    }

    fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for (slot, a) in idx.iter_mut().zip(&self.axes).rev() {
            *slot = flat % a.2;
            flat /= a.2;
        }
        idx
    }

    /// Coordinates of grid point `flat`.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, &(lo, hi, n))| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }
}

/// `r = α/2 xᵀx + βᵀx + f` and `s = α/2 xᵀx + βᵀx` on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub alpha: f64,
    pub r: Vec<f64>,
    pub s: Vec<f64>,
}

/// Curvature added on top of the most negative Hessian eigenvalue.
pub const SPLIT_MARGIN: f64 = 1e-3;

/// Writes sampled `f` as a difference of two convex functions. `α` is the
/// most negative eigenvalue of the finite-difference Hessian over interior
/// grid points, negated and clipped at 0, plus [`SPLIT_MARGIN`].
pub fn convex_concave_split(grid: &Grid, values: &[f64], beta: &[f64]) -> Result<Split> {
    let dim = grid.dim();
    if values.len() != grid.len() || beta.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "{} samples and {} beta entries for a {}-point grid in {dim} dimensions",
            values.len(),
            beta.len(),
            grid.len()
        )));
    }
    if beta.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::InvalidArgument("beta entries must be positive".into()));
    }
    let mut min_eig = f64::INFINITY;
    for flat in 0..grid.len() {
        let idx = grid.multi_index(flat);
        if idx.iter().zip(&grid.axes).any(|(&i, a)| i == 0 || i + 1 == a.2) {
            continue;
        }
        let at = |offsets: &[(usize, isize)]| -> f64 {
            let mut j = idx.clone();
            for &(axis, d) in offsets {
                j[axis] = (j[axis] as isize + d) as usize;
            }
            values[grid.index_of(&j)]
        };
        let mut hess = DMatrix::<f64>::zeros(dim, dim);
        for a in 0..dim {
            let ha = grid.spacing(a);
            hess[(a, a)] = (at(&[(a, 1)]) - 2.0 * values[flat] + at(&[(a, -1)])) / (ha * ha);
            for b in a + 1..dim {
                let hb = grid.spacing(b);
                let mixed = (at(&[(a, 1), (b, 1)]) - at(&[(a, 1), (b, -1)]) - at(&[(a, -1), (b, 1)])
                    + at(&[(a, -1), (b, -1)]))
                    / (4.0 * ha * hb);
                hess[(a, b)] = mixed;
                hess[(b, a)] = mixed;
            }
        }
        let smallest = hess.symmetric_eigenvalues().iter().fold(f64::INFINITY, |m, &x| m.min(x));
        min_eig = min_eig.min(smallest);
    }
    let alpha = (-min_eig).max(0.0) + SPLIT_MARGIN;
    let s: Vec<f64> = (0..grid.len())
        .map(|k| {
            let x = grid.point(k);
            0.5 * alpha * dot(&x, &x) + dot(beta, &x)
        })
        .collect();
    let r = s.iter().zip(values).map(|(q, f)| q + f).collect();
    Ok(Split { alpha, r, s })
}

/// Affine piece `h = a + s x` of a scalar trunk on `[lo, hi]`.
#[derive(Clone, Copy, Debug)]
struct Piece {
    lo: f64,
    hi: f64,
    a: f64,
    s: f64,
}

/// Breakpoints closer than this are merged.
const BREAK_MERGE: f64 = 1e-12;

/// Affine pieces of `f̂` on `domain`, as `(lo, hi, slope)`.
fn pieces_1d(net: &ConvexResNet, domain: (f64, f64)) -> Vec<(f64, f64, f64)> {
    let mut pieces = vec![Piece { lo: domain.0, hi: domain.1, a: 0.0, s: 1.0 }];
    for layer in &net.layers {
        let m = layer.width();
        let mut next = Vec::with_capacity(pieces.len());
        for p in pieces {
            let mut cuts = vec![p.lo, p.hi];
            for k in 0..m {
                let v = layer.v[(0, k)];
                let slope = v * p.s;
                if slope != 0.0 {
                    let root = (layer.b[k] - v * p.a) / slope;
                    if root > p.lo + BREAK_MERGE && root < p.hi - BREAK_MERGE {
                        cuts.push(root);
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|x, y| (*x - *y).abs() <= BREAK_MERGE);
            for w in cuts.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                let mid = 0.5 * (lo + hi);
                let h_mid = p.a + p.s * mid;
                let (mut a, mut s) = (p.a, p.s);
                for k in 0..m {
                    let v = layer.v[(0, k)];
                    if v * h_mid - layer.b[k] > 0.0 {
                        let wk = layer.w[(0, k)];
                        a += wk * (v * p.a - layer.b[k]);
                        s += wk * v * p.s;
                    }
                }
                next.push(Piece { lo, hi, a, s });
            }
        }
        pieces = next;
    }
    pieces.iter().map(|p| (p.lo, p.hi, net.c[0] * p.s)).collect()
}

fn slope_at(pieces: &[(f64, f64, f64)], x: f64) -> f64 {
    pieces
        .iter()
        .find(|p| x >= p.0 && x <= p.1)
        .or(pieces.last())
        .map_or(0.0, |p| p.2)
}

/// Interior breakpoints of a scalar-input pair on `domain`, merged within
/// 1e-12.
pub fn breakpoints_1d(pair: &ConvexConcavePair, domain: (f64, f64)) -> Result<Vec<f64>> {
    if pair.input_dim() != 1 {
        return Err(Error::InvalidArgument(format!("input dimension {} is not 1", pair.input_dim())));
    }
    let mut cuts: Vec<f64> = [pieces_1d(&pair.plus, domain), pieces_1d(&pair.minus, domain)]
        .iter()
        .flat_map(|ps| ps.iter().skip(1).map(|p| p.0).collect::<Vec<_>>())
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() <= BREAK_MERGE);
    Ok(cuts)
}

/// Largest absolute slope of a scalar-input pair on `domain`, from exact
/// enumeration of its affine pieces.
pub fn lipschitz_1d(pair: &ConvexConcavePair, domain: (f64, f64)) -> Result<f64> {
    if !(domain.0 < domain.1) {
        return Err(Error::InvalidArgument(format!("empty domain [{}, {}]", domain.0, domain.1)));
    }
    let cuts = breakpoints_1d(pair, domain)?;
    let plus = pieces_1d(&pair.plus, domain);
    let minus = pieces_1d(&pair.minus, domain);
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(domain.0);
    edges.extend(cuts);
    edges.push(domain.1);
    Ok(edges
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (slope_at(&plus, mid) - slope_at(&minus, mid)).abs()
        })
        .fold(0.0, f64::max))
}
