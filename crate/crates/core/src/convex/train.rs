use serde::{Deserialize, Serialize};

use super::grad::{
    mse_loss, net_flatten, net_loss, net_loss_and_grad, net_unflatten, pair_flatten, pair_loss, pair_loss_and_grad,
    pair_unflatten, Dataset, ParamKind,
};
use super::net::{ConvexConcavePair, ConvexResNet, VInit};
use crate::error::{Error, Result};
use crate::numerics::rng::SeededRng;

/// Loss above which training is declared diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub step: f64,
    pub max_epochs: usize,
    pub bias_init_range: [f64; 2],
    pub weight_init_range: [f64; 2],
    pub seed: u64,
    #[serde(default = "yes")]
    pub projection: bool,
    /// Train `V` as well; otherwise it stays at its initial value.
    #[serde(default)]
    pub train_v: bool,
    /// Train the per-network offsets `d`; a pair's `offset` is always trained.
    #[serde(default)]
    pub train_d: bool,
    #[serde(default = "identity_v")]
    pub v_init: VInit,
    /// Stop once the projected-gradient norm falls below this.
    #[serde(default)]
    pub stop_grad_norm: Option<f64>,
}

fn yes() -> bool {
    true
}

fn identity_v() -> VInit {
    VInit::Identity
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            step: 1e-4,
            max_epochs: 10_000,
            bias_init_range: [0.0, 1.0],
            weight_init_range: [0.0, 0.1],
            seed: 0,
            projection: true,
            train_v: false,
            train_d: false,
            v_init: VInit::Identity,
            stop_grad_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut bad = Vec::new();
        if !(self.step.is_finite() && self.step > 0.0) {
            bad.push(format!("step must be positive, got {}", self.step));
        }
        for (name, [lo, hi]) in [("bias_init_range", self.bias_init_range), ("weight_init_range", self.weight_init_range)] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                bad.push(format!("{name} must satisfy 0 <= low <= high, got [{lo}, {hi}]"));
            }
        }
        if let Some(g) = self.stop_grad_norm {
            if !(g > 0.0) {
                bad.push(format!("stop_grad_norm must be positive, got {g}"));
            }
        }
        bad
    }

    pub fn validate(&self) -> Result<()> {
        let bad = self.violations();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    fn weight_range(&self) -> (f64, f64) {
        (self.weight_init_range[0], self.weight_init_range[1])
    }

    fn bias_range(&self) -> (f64, f64) {
        (self.bias_init_range[0], self.bias_init_range[1])
    }

    fn trainable(&self, kind: ParamKind) -> bool {
        match kind {
            ParamKind::V => self.train_v,
            ParamKind::D => self.train_d,
            _ => true,
        }
    }

    /// Network with `W` and `b` drawn from the configured ranges.
    pub fn init_net(&self, input_dim: usize, widths: &[usize], rng: &mut SeededRng) -> Result<ConvexResNet> {
        ConvexResNet::init(input_dim, widths, self.weight_range(), self.bias_range(), self.v_init, rng)
    }

    /// Plus then minus network, both from `rng`, offset 0.
    pub fn init_pair(&self, input_dim: usize, widths: &[usize], rng: &mut SeededRng) -> Result<ConvexConcavePair> {
        let plus = self.init_net(input_dim, widths, rng)?;
        let minus = self.init_net(input_dim, widths, rng)?;
        ConvexConcavePair::new(plus, minus, 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome<M> {
    pub model: M,
    /// Loss of each epoch's iterate; `losses[0]` is the initial loss.
    pub losses: Vec<f64>,
    /// Projected-gradient norm at the final iterate.
    pub grad_norm: f64,
    pub epochs_run: usize,
}

impl<M> TrainOutcome<M> {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("initial loss recorded")
    }

    /// `epoch,loss` rows.
    pub fn loss_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("epoch,loss\n");
        for (k, l) in self.losses.iter().enumerate() {
            let _ = writeln!(out, "{k},{l:.16e}");
        }
        out
    }
}

struct Problem<'a, F> {
    lower: Vec<f64>,
    frozen: Vec<bool>,
    project: bool,
    eval: &'a mut F,
}

impl<F: FnMut(&[f64], bool) -> (f64, Vec<f64>)> Problem<'_, F> {
    fn project(&self, x: &mut [f64]) {
        if self.project {
            for (v, lo) in x.iter_mut().zip(&self.lower) {
                *v = v.max(*lo);
            }
        }
    }

    /// `‖(x − P(x − δ∇))/δ‖` over trainable entries.
    fn stationarity(&self, x: &[f64], grad: &[f64], step: f64) -> f64 {
        let mut sum = 0.0;
        for i in 0..x.len() {
            if self.frozen[i] {
                continue;
            }
            let mut moved = x[i] - step * grad[i];
            if self.project {
                moved = moved.max(self.lower[i]);
            }
            let g = (x[i] - moved) / step;
            sum += g * g;
        }
        sum.sqrt()
    }

    /// Projected accelerated descent with the FISTA momentum sequence.
    fn run(&mut self, x0: Vec<f64>, cfg: &TrainConfig) -> Result<(Vec<f64>, Vec<f64>, f64, usize)> {
        let step = cfg.step;
        let mut x = x0;
        self.project(&mut x);
        let mut x_prev = x.clone();
        let mut t = 1.0f64;
        let (loss0, grad0) = (self.eval)(&x, true);
        let mut losses = vec![loss0];
        let mut stationarity = self.stationarity(&x, &grad0, step);
        let mut epochs = 0;
        if !loss0.is_finite() || loss0 > DIVERGENCE_LOSS {
            return Err(Error::Diverged { epoch: 0, loss: loss0 });
        }
        while epochs < cfg.max_epochs {
            if cfg.stop_grad_norm.is_some_and(|tol| stationarity < tol) {
                break;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            let y: Vec<f64> = x
                .iter()
                .zip(&x_prev)
                .enumerate()
                .map(|(i, (a, b))| if self.frozen[i] { *a } else { a + beta * (a - b) })
                .collect();
            let (_, gy) = (self.eval)(&y, true);
            let mut next: Vec<f64> = y
                .iter()
                .zip(&gy)
                .enumerate()
                .map(|(i, (v, g))| if self.frozen[i] { *v } else { v - step * g })
                .collect();
            self.project(&mut next);
            x_prev = std::mem::replace(&mut x, next);
            t = t_next;
            epochs += 1;
            let want_grad = cfg.stop_grad_norm.is_some() || epochs == cfg.max_epochs;
            let (loss, gx) = (self.eval)(&x, want_grad);
            if !loss.is_finite() || loss > DIVERGENCE_LOSS {
                return Err(Error::Diverged { epoch: epochs, loss });
            }
            losses.push(loss);
            if want_grad {
                stationarity = self.stationarity(&x, &gx, step);
            }
        }
        Ok((x, losses, stationarity, epochs))
    }
}

fn optimize<M>(
    flat: (Vec<f64>, Vec<ParamKind>),
    cfg: &TrainConfig,
    mut eval: impl FnMut(&[f64], bool) -> (f64, Vec<f64>),
    rebuild: impl Fn(&[f64]) -> M,
) -> Result<TrainOutcome<M>> {
    cfg.validate()?;
    let (x0, kinds) = flat;
    let mut problem = Problem {
        lower: kinds.iter().map(|k| k.lower_bound()).collect(),
        frozen: kinds.iter().map(|&k| !cfg.trainable(k)).collect(),
        project: cfg.projection,
        eval: &mut eval,
    };
    let (x, losses, grad_norm, epochs_run) = problem.run(x0, cfg)?;
    Ok(TrainOutcome { model: rebuild(&x), losses, grad_norm, epochs_run })
}

/// Projected Nesterov descent on [`mse_loss`] of a convex–concave pair.
pub fn nesterov_train(
    pair: &ConvexConcavePair,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<ConvexConcavePair>> {
    mse_loss(pair, data)?;
    optimize(
        pair_flatten(pair),
        cfg,
        |x, want_grad| {
            let p = pair_unflatten(pair, x);
            if want_grad {
                let (loss, g) = pair_loss_and_grad(&p, data);
                (loss, pair_flatten(&g).0)
            } else {
                (pair_loss(&p, data), Vec::new())
            }
        },
        |x| pair_unflatten(pair, x),
    )
}

/// Projected Nesterov descent on a single network.
pub fn nesterov_train_net(net: &ConvexResNet, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome<ConvexResNet>> {
    net_loss(net, data)?;
    optimize(
        net_flatten(net),
        cfg,
        |x, want_grad| {
            let n = net_unflatten(net, x).0;
            if want_grad {
                let (loss, g) = net_loss_and_grad(&n, data);
                (loss, net_flatten(&g).0)
            } else {
                (net_loss(&n, data).expect("dimensions checked"), Vec::new())
            }
        },
        |x| net_unflatten(net, x).0,
    )
}
