use super::net::{dot, Activations, ConvexConcavePair, ConvexResNet, ResidualLayer, C_FLOOR};
use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

/// Labelled inputs, all of the same dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points with {} labels",
                points.len(),
                labels.len()
            )));
        }
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch("points differ in dimension".into()));
        }
        if points.iter().flatten().chain(&labels).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset has non-finite entries".into()));
        }
        Ok(Dataset { points, labels })
    }

    /// Scalar inputs.
    pub fn from_1d(xs: &[f64], ys: &[f64]) -> Result<Self> {
        Dataset::new(xs.iter().map(|&x| vec![x]).collect(), ys.to_vec())
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn max_abs_label(&self) -> f64 {
        self.labels.iter().fold(0.0, |m, y| m.max(y.abs()))
    }

    pub(crate) fn check(&self, input_dim: usize) -> Result<()> {
        if !self.is_empty() && self.dim() != input_dim {
            return Err(Error::DimensionMismatch(format!(
                "data dimension {} but network input dimension {input_dim}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// `½ Σ_i (f̂(x_i) − y_i)²`, without a `1/N` factor.
pub fn mse_loss(pair: &ConvexConcavePair, data: &Dataset) -> Result<f64> {
    data.check(pair.input_dim())?;
    Ok(pair_loss(pair, data))
}

pub(crate) fn pair_loss(pair: &ConvexConcavePair, data: &Dataset) -> f64 {
    data.points
        .iter()
        .zip(&data.labels)
        .map(|(x, y)| {
            let r = pair.plus.forward_unchecked(x).0 - pair.minus.forward_unchecked(x).0 + pair.offset - y;
            0.5 * r * r
        })
        .sum()
}

/// Single-network loss `½ Σ_i (f̂(x_i) − y_i)²`.
pub fn net_loss(net: &ConvexResNet, data: &Dataset) -> Result<f64> {
    data.check(net.input_dim())?;
    Ok(data
        .points
        .iter()
        .zip(&data.labels)
        .map(|(x, y)| 0.5 * (net.forward_unchecked(x).0 - y).powi(2))
        .sum())
}

/// Network-shaped zero record for accumulating partials.
fn zeros_like(net: &ConvexResNet) -> ConvexResNet {
    ConvexResNet {
        layers: net
            .layers
            .iter()
            .map(|l| ResidualLayer {
                w: Matrix::zeros(l.w.rows(), l.w.cols()),
                v: Matrix::zeros(l.v.rows(), l.v.cols()),
                b: vec![0.0; l.b.len()],
            })
            .collect(),
        c: vec![0.0; net.c.len()],
        d: 0.0,
    }
}

/// Adds `upstream · ∂f̂(x)/∂θ` into `grad` by reverse accumulation. ReLU
/// derivative is 1 for strictly positive preactivation, else 0.
fn accumulate(net: &ConvexResNet, act: &Activations, upstream: f64, grad: &mut ConvexResNet) {
    let depth = net.depth();
    for (g, h) in grad.c.iter_mut().zip(&act.h[depth]) {
        *g += upstream * h;
    }
    grad.d += upstream;
    let mut a: Vec<f64> = net.c.iter().map(|c| upstream * c).collect();
    for i in (0..depth).rev() {
        let layer = &net.layers[i];
        let g = &mut grad.layers[i];
        let (n, m) = (layer.w.rows(), layer.w.cols());
        let z = &act.pre[i];
        let h_prev = &act.h[i];
        let du = layer.w.matvec_t(&a);
        let dz: Vec<f64> = (0..m).map(|k| if act.masks[i][k] { du[k] } else { 0.0 }).collect();
        for r in 0..n {
            for k in 0..m {
                g.w[(r, k)] += a[r] * z[k].max(0.0);
                g.v[(r, k)] += h_prev[r] * dz[k];
            }
        }
        for (gb, d) in g.b.iter_mut().zip(&dz) {
            *gb -= d;
        }
        let back = layer.v.matvec(&dz);
        for (ar, br) in a.iter_mut().zip(back) {
            *ar += br;
        }
    }
}

/// Exact subgradient of [`mse_loss`], laid out like the pair itself.
pub fn backprop(pair: &ConvexConcavePair, data: &Dataset) -> Result<ConvexConcavePair> {
    data.check(pair.input_dim())?;
    Ok(pair_loss_and_grad(pair, data).1)
}

pub(crate) fn pair_loss_and_grad(pair: &ConvexConcavePair, data: &Dataset) -> (f64, ConvexConcavePair) {
    let mut plus = zeros_like(&pair.plus);
    let mut minus = zeros_like(&pair.minus);
    let mut offset = 0.0;
    let mut loss = 0.0;
    for (x, y) in data.points.iter().zip(&data.labels) {
        let (fp, ap) = pair.plus.forward_unchecked(x);
        let (fm, am) = pair.minus.forward_unchecked(x);
        let r = fp - fm + pair.offset - y;
        loss += 0.5 * r * r;
        accumulate(&pair.plus, &ap, r, &mut plus);
        accumulate(&pair.minus, &am, -r, &mut minus);
        offset += r;
    }
    (loss, ConvexConcavePair { plus, minus, offset })
}

/// Gradient of [`net_loss`].
pub fn net_backprop(net: &ConvexResNet, data: &Dataset) -> Result<ConvexResNet> {
    data.check(net.input_dim())?;
    Ok(net_loss_and_grad(net, data).1)
}

pub(crate) fn net_loss_and_grad(net: &ConvexResNet, data: &Dataset) -> (f64, ConvexResNet) {
    let mut grad = zeros_like(net);
    let mut loss = 0.0;
    for (x, y) in data.points.iter().zip(&data.labels) {
        let (f, act) = net.forward_unchecked(x);
        let r = f - y;
        loss += 0.5 * r * r;
        accumulate(net, &act, r, &mut grad);
    }
    (loss, grad)
}

/// Role of one entry of the flattened parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    W,
    V,
    B,
    C,
    D,
    Offset,
}

impl ParamKind {
    /// Feasibility lower bound.
    pub fn lower_bound(self) -> f64 {
        match self {
            ParamKind::W | ParamKind::V | ParamKind::B => 0.0,
            ParamKind::C => C_FLOOR,
            ParamKind::D | ParamKind::Offset => f64::NEG_INFINITY,
        }
    }
}

/// Flat parameter layout: per layer `W` then `V` (row-major) then `b`;
/// then `c`, then `d`.
pub fn net_flatten(net: &ConvexResNet) -> (Vec<f64>, Vec<ParamKind>) {
    let mut values = Vec::new();
    let mut kinds = Vec::new();
    for l in &net.layers {
        values.extend_from_slice(l.w.as_slice());
        kinds.extend(std::iter::repeat_n(ParamKind::W, l.w.as_slice().len()));
        values.extend_from_slice(l.v.as_slice());
        kinds.extend(std::iter::repeat_n(ParamKind::V, l.v.as_slice().len()));
        values.extend_from_slice(&l.b);
        kinds.extend(std::iter::repeat_n(ParamKind::B, l.b.len()));
    }
    values.extend_from_slice(&net.c);
    kinds.extend(std::iter::repeat_n(ParamKind::C, net.c.len()));
    values.push(net.d);
    kinds.push(ParamKind::D);
    (values, kinds)
}

/// Inverse of [`net_flatten`] using `template` for shapes; returns the
/// unconsumed tail.
pub fn net_unflatten<'a>(template: &ConvexResNet, mut flat: &'a [f64]) -> (ConvexResNet, &'a [f64]) {
    let mut take = |k: usize| -> Vec<f64> {
        let (head, tail) = flat.split_at(k);
        flat = tail;
        head.to_vec()
    };
    let layers = template
        .layers
        .iter()
        .map(|l| {
            let (n, m) = (l.w.rows(), l.w.cols());
            ResidualLayer {
                w: Matrix::from_vec(n, m, take(n * m)).expect("template shape"),
                v: Matrix::from_vec(n, m, take(n * m)).expect("template shape"),
                b: take(m),
            }
        })
        .collect();
    let c = take(template.c.len());
    let d = take(1)[0];
    (ConvexResNet { layers, c, d }, flat)
}

/// Plus net, minus net, then the offset.
pub fn pair_flatten(pair: &ConvexConcavePair) -> (Vec<f64>, Vec<ParamKind>) {
    let (mut values, mut kinds) = net_flatten(&pair.plus);
    let (v, k) = net_flatten(&pair.minus);
    values.extend(v);
    kinds.extend(k);
    values.push(pair.offset);
    kinds.push(ParamKind::Offset);
    (values, kinds)
}

pub fn pair_unflatten(template: &ConvexConcavePair, flat: &[f64]) -> ConvexConcavePair {
    let (plus, rest) = net_unflatten(&template.plus, flat);
    let (minus, rest) = net_unflatten(&template.minus, rest);
    ConvexConcavePair { plus, minus, offset: rest[0] }
}

/// Euclidean norm of a network-shaped gradient record.
pub fn grad_norm(g: &ConvexResNet) -> f64 {
    let (v, _) = net_flatten(g);
    dot(&v, &v).sqrt()
}
