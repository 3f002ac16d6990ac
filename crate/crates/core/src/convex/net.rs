use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::rng::SeededRng;

/// Lower bound enforced on every head entry `c`.
pub const C_FLOOR: f64 = 1e-6;

/// `h ← h + W relu(Vᵀh − b)` with `W, V` of shape `n×m`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualLayer {
    pub w: Matrix,
    pub v: Matrix,
    pub b: Vec<f64>,
}

impl ResidualLayer {
    pub fn new(w: Matrix, v: Matrix, b: Vec<f64>) -> Result<Self> {
        if w.rows() != v.rows() || w.cols() != v.cols() || b.len() != w.cols() {
            return Err(Error::DimensionMismatch(format!(
                "W {}x{}, V {}x{}, b {}",
                w.rows(),
                w.cols(),
                v.rows(),
                v.cols(),
                b.len()
            )));
        }
        Ok(ResidualLayer { w, v, b })
    }

    pub fn width(&self) -> usize {
        self.b.len()
    }

    fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.w.as_slice().iter().chain(self.v.as_slice()).chain(&self.b).copied()
    }
}

/// Forward-pass record: `h[0] = x`, `h[i]` after layer `i`, and per layer
/// the preactivations `Vᵀh − b` with their strictly-positive masks.
#[derive(Clone, Debug, PartialEq)]
pub struct Activations {
    pub h: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    pub masks: Vec<Vec<bool>>,
}

/// Scalar network `cᵀh_L + d` over a residual ReLU trunk. Convex in the
/// input whenever every `W, V, b` entry is nonnegative and `c > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexResNet {
    pub layers: Vec<ResidualLayer>,
    pub c: Vec<f64>,
    pub d: f64,
}

/// How `V` is initialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VInit {
    /// Ones on the diagonal, zeros elsewhere (`V = 1` for scalar layers).
    Identity,
    /// Same distribution as `W`.
    Uniform,
}

impl ConvexResNet {
    pub fn new(layers: Vec<ResidualLayer>, c: Vec<f64>, d: f64) -> Result<Self> {
        let n = c.len();
        if n == 0 {
            return Err(Error::InvalidArgument("input dimension must be at least 1".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.w.rows() != n {
                return Err(Error::DimensionMismatch(format!(
                    "layer {i} has {} rows for input dimension {n}",
                    layer.w.rows()
                )));
            }
        }
        Ok(ConvexResNet { layers, c, d })
    }

    /// `W` and `b` uniform on the given ranges, `c = 1`, `d = 0`.
    pub fn init(
        input_dim: usize,
        widths: &[usize],
        weight_range: (f64, f64),
        bias_range: (f64, f64),
        v_init: VInit,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len());
        for &m in widths {
            let mut draw = |count: usize, (lo, hi): (f64, f64)| -> Vec<f64> {
                (0..count).map(|_| rng.uniform(lo, hi)).collect()
            };
            let w = Matrix::from_vec(input_dim, m, draw(input_dim * m, weight_range))?;
            let v = match v_init {
                VInit::Identity => {
                    let mut v = Matrix::zeros(input_dim, m);
                    for k in 0..input_dim.min(m) {
                        v[(k, k)] = 1.0;
                    }
                    v
                }
                VInit::Uniform => Matrix::from_vec(input_dim, m, draw(input_dim * m, weight_range))?,
            };
            let b = draw(m, bias_range);
            layers.push(ResidualLayer::new(w, v, b)?);
        }
        ConvexResNet::new(layers, vec![1.0; input_dim], 0.0)
    }

    /// No residual layers: `cᵀx + d`.
    pub fn linear(c: Vec<f64>, d: f64) -> Result<Self> {
        ConvexResNet::new(Vec::new(), c, d)
    }

    pub fn input_dim(&self) -> usize {
        self.c.len()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn is_feasible(&self) -> bool {
        self.layers.iter().all(|l| l.entries().all(|x| x >= 0.0)) && self.c.iter().all(|&x| x >= C_FLOOR)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} coordinates, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<(f64, Activations)> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> (f64, Activations) {
        let mut h = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.depth());
        let mut masks = Vec::with_capacity(self.depth());
        for layer in &self.layers {
            let prev = h.last().expect("h[0] present");
            let z: Vec<f64> = layer.v.matvec_t(prev).iter().zip(&layer.b).map(|(a, b)| a - b).collect();
            let mask: Vec<bool> = z.iter().map(|&v| v > 0.0).collect();
            let u: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
            let next: Vec<f64> = prev.iter().zip(layer.w.matvec(&u)).map(|(a, b)| a + b).collect();
            pre.push(z);
            masks.push(mask);
            h.push(next);
        }
        let value = dot(&self.c, h.last().expect("h[0] present")) + self.d;
        (value, Activations { h, pre, masks })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?.0)
    }

    /// `∇ₓf̂` on the affine piece containing `x`.
    pub fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (_, act) = self.forward(x)?;
        let mut g = self.c.clone();
        for (layer, mask) in self.layers.iter().zip(&act.masks).rev() {
            let mut wg = layer.w.matvec_t(&g);
            for (v, &on) in wg.iter_mut().zip(mask) {
                if !on {
                    *v = 0.0;
                }
            }
            for (gi, di) in g.iter_mut().zip(layer.v.matvec(&wg)) {
                *gi += di;
            }
        }
        Ok(g)
    }

    /// Clamps `W, V, b` at 0 and `c` at [`C_FLOOR`].
    pub fn project_feasible(&self) -> ConvexResNet {
        let clamp = |m: &Matrix| Matrix::from_vec(m.rows(), m.cols(), m.as_slice().iter().map(|x| x.max(0.0)).collect()).expect("same shape");
        ConvexResNet {
            layers: self
                .layers
                .iter()
                .map(|l| ResidualLayer {
                    w: clamp(&l.w),
                    v: clamp(&l.v),
                    b: l.b.iter().map(|x| x.max(0.0)).collect(),
                })
                .collect(),
            c: self.c.iter().map(|x| x.max(C_FLOOR)).collect(),
            d: self.d,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `plus(x) − minus(x) + offset`, a difference of convex functions.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexConcavePair {
    pub plus: ConvexResNet,
    pub minus: ConvexResNet,
    pub offset: f64,
}

impl ConvexConcavePair {
    pub fn new(plus: ConvexResNet, minus: ConvexResNet, offset: f64) -> Result<Self> {
        if plus.input_dim() != minus.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "pair input dimensions {} and {}",
                plus.input_dim(),
                minus.input_dim()
            )));
        }
        Ok(ConvexConcavePair { plus, minus, offset })
    }

    pub fn input_dim(&self) -> usize {
        self.plus.input_dim()
    }

    pub fn is_feasible(&self) -> bool {
        self.plus.is_feasible() && self.minus.is_feasible()
    }

    pub fn project_feasible(&self) -> ConvexConcavePair {
        ConvexConcavePair {
            plus: self.plus.project_feasible(),
            minus: self.minus.project_feasible(),
            offset: self.offset,
        }
    }
}

pub fn pair_forward(pair: &ConvexConcavePair, x: &[f64]) -> Result<f64> {
    Ok(pair.plus.value(x)? - pair.minus.value(x)? + pair.offset)
}

pub fn project_feasible(pair: &ConvexConcavePair) -> ConvexConcavePair {
    pair.project_feasible()
}

/// JSON layout of a trained network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetRecord {
    pub input_dim: usize,
    pub depth: usize,
    pub layers: Vec<LayerRecord>,
    pub c: Vec<f64>,
    pub d: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub plus: NetRecord,
    pub minus: NetRecord,
    pub offset: f64,
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

impl From<&ConvexResNet> for NetRecord {
    fn from(net: &ConvexResNet) -> Self {
        NetRecord {
            input_dim: net.input_dim(),
            depth: net.depth(),
            layers: net
                .layers
                .iter()
                .map(|l| LayerRecord { w: rows_of(&l.w), v: rows_of(&l.v), b: l.b.clone() })
                .collect(),
            c: net.c.clone(),
            d: net.d,
        }
    }
}

impl TryFrom<NetRecord> for ConvexResNet {
    type Error = Error;

    fn try_from(r: NetRecord) -> Result<Self> {
        if r.depth != r.layers.len() || r.input_dim != r.c.len() {
            return Err(Error::Parse(format!(
                "depth {} with {} layers, input_dim {} with {} head entries",
                r.depth,
                r.layers.len(),
                r.input_dim,
                r.c.len()
            )));
        }
        let layers = r
            .layers
            .into_iter()
            .map(|l| ResidualLayer::new(Matrix::from_rows(&l.w)?, Matrix::from_rows(&l.v)?, l.b))
            .collect::<Result<Vec<_>>>()?;
        ConvexResNet::new(layers, r.c, r.d)
    }
}

impl From<&ConvexConcavePair> for PairRecord {
    fn from(p: &ConvexConcavePair) -> Self {
        PairRecord { plus: (&p.plus).into(), minus: (&p.minus).into(), offset: p.offset }
    }
}

impl TryFrom<PairRecord> for ConvexConcavePair {
    type Error = Error;

    fn try_from(r: PairRecord) -> Result<Self> {
        ConvexConcavePair::new(r.plus.try_into()?, r.minus.try_into()?, r.offset)
    }
}
