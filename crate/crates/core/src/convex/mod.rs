//! Convex residual ReLU networks, differences of two such networks, and
//! their training and diagnostics.
//!
//! A network maps `h_0 = x` through `h_i = h_{i−1} + W_i relu(V_iᵀh_{i−1} − b_i)`
//! to `cᵀh_L + d`. Nonnegative `W, V, b` and positive `c` make it convex in
//! `x`; a pair `plus − minus + offset` can then represent non-convex targets.

mod diagnostics;
mod grad;
mod net;
mod target;
mod train;

pub use diagnostics::{
    bias_gradient_direct, breakpoints_1d, convex_concave_split, lipschitz_1d, optimality_residuals, Grid,
    OptimalityResiduals, Split, SPLIT_MARGIN,
};
pub use grad::{
    backprop, grad_norm, mse_loss, net_backprop, net_flatten, net_loss, net_unflatten, pair_flatten, pair_unflatten,
    Dataset, ParamKind,
};
pub use net::{
    pair_forward, project_feasible, Activations, ConvexConcavePair, ConvexResNet, LayerRecord, NetRecord, PairRecord,
    ResidualLayer, VInit, C_FLOOR,
};
pub use target::{piecewise_target, PiecewiseAffine1D};
pub use train::{nesterov_train, nesterov_train_net, TrainConfig, TrainOutcome, DIVERGENCE_LOSS};

#[cfg(test)]
mod tests;
