use super::*;
use crate::error::Error;
use crate::numerics::matrix::Matrix;
use crate::numerics::rng::SeededRng;
use proptest::prelude::*;

fn bowl() -> ConvexResNet {
    let layer = ResidualLayer::new(Matrix::identity(2), Matrix::identity(2), vec![2.0, 2.0]).unwrap();
    ConvexResNet::new(vec![layer], vec![1.0, 1.0], 0.0).unwrap()
}

fn scalar_layer(w: f64, v: f64, b: f64) -> ResidualLayer {
    ResidualLayer::new(Matrix::from_diag(&[w]), Matrix::from_diag(&[v]), vec![b]).unwrap()
}

fn scalar_net(layers: &[(f64, f64)], c: f64, d: f64) -> ConvexResNet {
    ConvexResNet::new(layers.iter().map(|&(w, b)| scalar_layer(w, 1.0, b)).collect(), vec![c], d).unwrap()
}

fn random_net(n: usize, widths: &[usize], rng: &mut SeededRng) -> ConvexResNet {
    let mut net = ConvexResNet::init(n, widths, (0.0, 0.6), (0.0, 0.5), VInit::Uniform, rng).unwrap();
    net.c = (0..n).map(|_| rng.uniform(0.2, 1.5)).collect();
    net.d = rng.uniform(-1.0, 1.0);
    net
}

fn random_pair(n: usize, depth: usize, rng: &mut SeededRng) -> ConvexConcavePair {
    let widths: Vec<usize> = (0..depth).map(|_| 1 + (rng.uniform(0.0, 2.99) as usize)).collect();
    let plus = random_net(n, &widths, rng);
    let minus = random_net(n, &widths, rng);
    ConvexConcavePair::new(plus, minus, rng.uniform(-0.5, 0.5)).unwrap()
}

#[test]
fn zero_weights_give_linear_map() {
    let mut net = bowl();
    net.layers[0].w = Matrix::zeros(2, 2);
    net.c = vec![0.5, 2.0];
    net.d = -1.0;
    assert_eq!(net.value(&[3.0, 4.0]).unwrap(), 0.5 * 3.0 + 2.0 * 4.0 - 1.0);
}

#[test]
fn bowl_values() {
    let net = bowl();
    assert_eq!(net.value(&[1.0, 1.0]).unwrap(), 2.0);
    let (v, act) = net.forward(&[3.0, 3.0]).unwrap();
    assert_eq!(act.h[1], vec![4.0, 4.0]);
    assert_eq!(v, 8.0);
    assert!(matches!(net.value(&[1.0]), Err(Error::DimensionMismatch(_))));
}

#[test]
fn stacked_scalar_layers_multiply_slopes() {
    let net = scalar_net(&[(1.0, 0.1), (1.0, 0.2)], 0.7, 0.0);
    let slope = net.value(&[11.0]).unwrap() - net.value(&[10.0]).unwrap();
    assert!((slope - 4.0 * 0.7).abs() < 1e-12);
    assert_eq!(net.input_gradient(&[10.0]).unwrap(), vec![4.0 * 0.7]);
}

#[test]
fn pair_examples() {
    let mut rng = SeededRng::new(1);
    let net = random_net(2, &[2, 3], &mut rng);
    let same = ConvexConcavePair::new(net.clone(), net, 0.0).unwrap();
    for x in [[0.1, 0.2], [1.0, 3.0]] {
        assert_eq!(pair_forward(&same, &x).unwrap(), 0.0);
    }

    let flat = ConvexResNet::new(
        vec![ResidualLayer::new(Matrix::zeros(2, 2), Matrix::identity(2), vec![2.0, 2.0]).unwrap()],
        vec![1.0, 1.0],
        0.0,
    )
    .unwrap();
    let pair = ConvexConcavePair::new(bowl(), flat, 0.0).unwrap();
    assert_eq!(pair_forward(&pair, &[1.0, 1.0]).unwrap(), 0.0);
    assert_eq!(pair_forward(&pair, &[3.0, 3.0]).unwrap(), 2.0);

    let p = random_pair(2, 3, &mut rng);
    let x = [0.4, 0.9];
    assert_eq!(
        pair_forward(&p, &x).unwrap(),
        p.plus.value(&x).unwrap() - p.minus.value(&x).unwrap() + p.offset
    );
}

#[test]
fn loss_examples() {
    let mut rng = SeededRng::new(2);
    let p = random_pair(1, 2, &mut rng);
    let xs = [0.1, 0.5, 0.9];
    let ys: Vec<f64> = xs.iter().map(|&x| pair_forward(&p, &[x]).unwrap()).collect();
    assert_eq!(mse_loss(&p, &Dataset::from_1d(&xs, &ys).unwrap()).unwrap(), 0.0);

    let constant = ConvexConcavePair::new(
        ConvexResNet::linear(vec![1.0], 3.0).unwrap(),
        ConvexResNet::linear(vec![1.0], 0.0).unwrap(),
        0.0,
    )
    .unwrap();
    assert_eq!(mse_loss(&constant, &Dataset::from_1d(&[0.5], &[1.0]).unwrap()).unwrap(), 2.0);
}

#[test]
fn zero_residual_zero_gradient() {
    let mut rng = SeededRng::new(3);
    let p = random_pair(2, 2, &mut rng);
    let xs: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| pair_forward(&p, x).unwrap()).collect();
    let g = backprop(&p, &Dataset::new(xs, ys).unwrap()).unwrap();
    assert!(pair_flatten(&g).0.iter().all(|&v| v.abs() < 1e-12));
}

/// Inputs whose every preactivation is at least `gap` away from zero.
fn kink_free_data(p: &ConvexConcavePair, count: usize, gap: f64, rng: &mut SeededRng) -> Dataset {
    let n = p.input_dim();
    let mut xs = Vec::new();
    while xs.len() < count {
        let x: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 2.0)).collect();
        let clear = [&p.plus, &p.minus]
            .iter()
            .all(|net| net.forward(&x).unwrap().1.pre.iter().flatten().all(|z| z.abs() > gap));
        if clear {
            xs.push(x);
        }
    }
    let ys = (0..count).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Dataset::new(xs, ys).unwrap()
}

#[test]
fn backprop_matches_finite_differences() {
    let mut rng = SeededRng::new(4);
    for _ in 0..100 {
        let n = 1 + (rng.uniform(0.0, 2.99) as usize);
        let depth = 1 + (rng.uniform(0.0, 2.99) as usize);
        let p = random_pair(n, depth, &mut rng);
        let data = kink_free_data(&p, 6, 1e-3, &mut rng);
        let g = pair_flatten(&backprop(&p, &data).unwrap()).0;
        let (x0, _) = pair_flatten(&p);
        let h = 1e-7;
        for i in 0..x0.len() {
            let mut a = x0.clone();
            let mut b = x0.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (mse_loss(&pair_unflatten(&p, &a), &data).unwrap() - mse_loss(&pair_unflatten(&p, &b), &data).unwrap())
                / (2.0 * h);
            assert!((g[i] - fd).abs() <= 1e-5 * fd.abs().max(1e-2), "param {i}: {} vs {fd}", g[i]);
        }
    }
}

#[test]
fn bias_gradient_matches_direct_formula() {
    let mut rng = SeededRng::new(5);
    for _ in 0..20 {
        let n = 1 + (rng.uniform(0.0, 2.99) as usize);
        let widths = vec![n; 3];
        let mut net = ConvexResNet::init(n, &widths, (0.0, 0.6), (0.0, 0.5), VInit::Identity, &mut rng).unwrap();
        net.c = (0..n).map(|_| rng.uniform(0.2, 1.5)).collect();
        let pair = ConvexConcavePair::new(net.clone(), net.clone(), 0.0).unwrap();
        let data = kink_free_data(&pair, 8, 1e-6, &mut rng);
        let g = net_backprop(&net, &data).unwrap();
        let direct = bias_gradient_direct(&net, &data).unwrap();
        for (layer, expected) in g.layers.iter().zip(&direct) {
            for (a, b) in layer.b.iter().zip(expected) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn projection_examples() {
    let mut rng = SeededRng::new(6);
    let p = random_pair(2, 2, &mut rng);
    assert!(p.is_feasible());
    assert_eq!(project_feasible(&p), p);

    let mut q = p.clone();
    q.plus.layers[0].w[(0, 0)] = -0.3;
    q.minus.c[1] = 0.0;
    let projected = project_feasible(&q);
    assert_eq!(projected.plus.layers[0].w[(0, 0)], 0.0);
    assert_eq!(projected.minus.c[1], C_FLOOR);
    assert_eq!(project_feasible(&projected), projected);
}

#[test]
fn zero_epochs_leave_loss_unchanged() {
    let mut rng = SeededRng::new(7);
    let p = random_pair(1, 2, &mut rng);
    let xs: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| pair_forward(&p, &[x]).unwrap()).collect();
    let data = Dataset::from_1d(&xs, &ys).unwrap();
    let cfg = TrainConfig { max_epochs: 0, ..TrainConfig::default() };
    let out = nesterov_train(&p, &data, &cfg).unwrap();
    assert_eq!(out.losses, vec![0.0]);
    assert_eq!(out.model, p);
}

#[test]
fn linear_target_is_fit() {
    let xs: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
    let data = Dataset::from_1d(&xs, &ys).unwrap();
    let cfg = TrainConfig { step: 1e-2, max_epochs: 10_000, seed: 3, ..TrainConfig::default() };
    let pair = cfg.init_pair(1, &[1], &mut SeededRng::new(cfg.seed)).unwrap();
    let out = nesterov_train(&pair, &data, &cfg).unwrap();
    assert!(out.final_loss() < 1e-6, "{}", out.final_loss());
    assert!(out.model.is_feasible());
}

#[test]
fn divergence_is_reported() {
    let xs: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
    let data = Dataset::from_1d(&xs, &ys).unwrap();
    let cfg = TrainConfig { step: 10.0, max_epochs: 1_000, ..TrainConfig::default() };
    let pair = cfg.init_pair(1, &[1, 1], &mut SeededRng::new(0)).unwrap();
    assert!(matches!(nesterov_train(&pair, &data, &cfg), Err(Error::Diverged { .. })));
}

#[test]
fn config_violations() {
    let cfg = TrainConfig {
        step: 0.0,
        bias_init_range: [-1.0, 1.0],
        weight_init_range: [0.5, 0.1],
        ..TrainConfig::default()
    };
    assert_eq!(cfg.violations().len(), 3);
}

#[test]
fn piecewise_target_examples() {
    let identity = PiecewiseAffine1D::new(vec![], vec![1.0], 0.0).unwrap();
    let data = piecewise_target(&identity, 11).unwrap();
    for (x, y) in data.points().iter().zip(data.labels()) {
        assert_eq!(x[0], *y);
    }

    let f = PiecewiseAffine1D::reference();
    for (x, y) in [(0.3, 0.3), (0.5, -0.1), (0.7, 0.1), (1.0, -0.2)] {
        assert!((f.eval(x) - y).abs() < 1e-15, "f({x}) = {}", f.eval(x));
    }
    let data = piecewise_target(&f, 101).unwrap();
    assert_eq!(data.len(), 101);
    assert!((data.points()[1][0] - 0.01).abs() < 1e-15);
    assert!(matches!(piecewise_target(&f, 1), Err(Error::GridTooCoarse { .. })));
    assert!(PiecewiseAffine1D::new(vec![0.5, 0.4], vec![1.0, 1.0, 1.0], 0.0).is_err());
}

#[test]
fn optimality_residual_examples() {
    let mut rng = SeededRng::new(8);
    let mut net = ConvexResNet::init(2, &[2, 2], (0.0, 0.5), (0.0, 0.5), VInit::Identity, &mut rng).unwrap();
    net.c = vec![0.8, 1.2];
    let xs: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)]).collect();
    let ys = xs.iter().map(|x| net.value(x).unwrap()).collect();
    let r = optimality_residuals(&net, &Dataset::new(xs, ys).unwrap()).unwrap();
    assert_eq!(r.max(), 0.0);

    // One layer, one point: f̂ = c(x + w(x − b)) = 0.5·(2 + 3·1) = 2.5 at x = 2.
    let net = ConvexResNet::new(vec![scalar_layer(3.0, 1.0, 1.0)], vec![0.5], 0.0).unwrap();
    let data = Dataset::from_1d(&[2.0], &[1.0]).unwrap();
    let r = optimality_residuals(&net, &data).unwrap();
    assert!((r.layers[0] - 0.5 * 1.5 * 1.0).abs() < 1e-15);
    assert!((r.head - 1.5 * 5.0).abs() < 1e-15);

    let mut skewed = net.clone();
    skewed.layers[0].v = Matrix::from_diag(&[2.0]);
    assert!(optimality_residuals(&skewed, &data).is_err());
}

#[test]
fn split_examples() {
    let grid = Grid::new(vec![(0.0, 1.0, 101)]).unwrap();
    let xs = grid.points();
    let convex: Vec<f64> = xs.iter().map(|x| x[0] * x[0]).collect();
    let split = convex_concave_split(&grid, &convex, &[1.0]).unwrap();
    assert!((split.alpha - SPLIT_MARGIN).abs() < 1e-12);

    let concave: Vec<f64> = xs.iter().map(|x| -x[0] * x[0]).collect();
    let split = convex_concave_split(&grid, &concave, &[1.0]).unwrap();
    assert!((split.alpha - (2.0 + SPLIT_MARGIN)).abs() < 1e-2);

    let grid2 = Grid::new(vec![(0.0, 1.0, 21), (0.0, 2.0, 31)]).unwrap();
    let saddle: Vec<f64> = grid2.points().iter().map(|x| x[0] * x[1] - 0.5 * x[1] * x[1] + x[0].sin()).collect();
    let split = convex_concave_split(&grid2, &saddle, &[0.5, 0.5]).unwrap();
    for ((r, s), f) in split.r.iter().zip(&split.s).zip(&saddle) {
        assert!((r - s - f).abs() < 1e-12);
    }
    assert!(split.alpha > 1.0);

    assert!(matches!(Grid::new(vec![(0.0, 1.0, 2)]), Err(Error::GridTooCoarse { .. })));
    assert!(convex_concave_split(&grid, &convex, &[0.0]).is_err());
}

/// Largest absolute finite-difference slope over `samples` equal cells.
fn dense_scan(p: &ConvexConcavePair, samples: usize) -> f64 {
    let f = |x: f64| pair_forward(p, &[x]).unwrap();
    (0..samples)
        .map(|i| {
            let (a, b) = (i as f64 / samples as f64, (i + 1) as f64 / samples as f64);
            ((f(b) - f(a)) / (b - a)).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn lipschitz_examples() {
    let zero = ConvexResNet::new(vec![scalar_layer(0.0, 1.0, 0.3)], vec![1.0], 0.0).unwrap();
    let flat = ConvexConcavePair::new(zero.clone(), zero.clone(), 0.0).unwrap();
    assert_eq!(lipschitz_1d(&flat, (0.0, 1.0)).unwrap(), 0.0);

    // Slope 1 below 0.5, 2 above.
    let kinked = ConvexResNet::new(vec![scalar_layer(1.0, 1.0, 0.5)], vec![1.0], 0.0).unwrap();
    let minus = ConvexResNet::new(vec![scalar_layer(0.0, 1.0, 0.0)], vec![C_FLOOR], 0.0).unwrap();
    let pair = ConvexConcavePair::new(kinked, minus, 0.0).unwrap();
    assert!((lipschitz_1d(&pair, (0.0, 1.0)).unwrap() - (2.0 - C_FLOOR)).abs() < 1e-12);
    let cuts = breakpoints_1d(&pair, (0.0, 1.0)).unwrap();
    assert_eq!(cuts.len(), 1);
    assert!((cuts[0] - 0.5).abs() < 1e-15);
}

#[test]
fn lipschitz_dominates_dense_scan() {
    let mut rng = SeededRng::new(9);
    for _ in 0..20 {
        let depth = 1 + (rng.uniform(0.0, 9.99) as usize);
        let p = random_pair(1, depth, &mut rng);
        let exact = lipschitz_1d(&p, (0.0, 1.0)).unwrap();
        let scan = dense_scan(&p, 10_000);
        assert!(exact >= scan - 1e-9, "{exact} < {scan}");
        assert!(exact - scan < 1e-9 || has_narrow_piece(&p), "{exact} vs {scan}");
    }
}

/// True when some affine piece is narrower than a scan cell, so the scan
/// may average its slope away.
fn has_narrow_piece(p: &ConvexConcavePair) -> bool {
    let mut edges = vec![0.0];
    edges.extend(breakpoints_1d(p, (0.0, 1.0)).unwrap());
    edges.push(1.0);
    edges.windows(2).any(|w| w[1] - w[0] < 2e-4)
}

#[test]
fn bowl_gradient_gains_increments() {
    let net = bowl();
    let probe = |x: [f64; 2]| net.input_gradient(&x).unwrap();
    assert_eq!(probe([1.0, 1.0]), vec![1.0, 1.0]);
    assert_eq!(probe([2.5, 1.0]), vec![2.0, 1.0]);
    assert_eq!(probe([1.0, 2.5]), vec![1.0, 2.0]);
    assert_eq!(probe([2.5, 2.5]), vec![2.0, 2.0]);
    assert_eq!(probe([1.99, 2.01]), vec![1.0, 2.0]);
}

#[test]
fn model_record_round_trip() {
    let mut rng = SeededRng::new(10);
    let p = random_pair(2, 3, &mut rng);
    let json = serde_json::to_string(&PairRecord::from(&p)).unwrap();
    let back: ConvexConcavePair = serde_json::from_str::<PairRecord>(&json).unwrap().try_into().unwrap();
    assert_eq!(back, p);
    assert!(json.contains("\"W\"") && json.contains("\"input_dim\""));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn midpoint_convexity(seed in any::<u64>(), n in 1usize..4, depth in 1usize..5) {
        let mut rng = SeededRng::new(seed);
        let widths: Vec<usize> = (0..depth).map(|_| 1 + (rng.uniform(0.0, 3.99) as usize)).collect();
        let net = random_net(n, &widths, &mut rng);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 2.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 2.0)).collect();
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            let lhs = net.value(&mid).unwrap();
            let rhs = 0.5 * (net.value(&x).unwrap() + net.value(&y).unwrap());
            prop_assert!(lhs <= rhs + 1e-9);
        }
    }

    #[test]
    fn trunk_is_monotone(seed in any::<u64>(), n in 1usize..4, depth in 1usize..6) {
        let mut rng = SeededRng::new(seed);
        let widths: Vec<usize> = (0..depth).map(|_| 1 + (rng.uniform(0.0, 3.99) as usize)).collect();
        let net = random_net(n, &widths, &mut rng);
        let x: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 3.0)).collect();
        let (_, act) = net.forward(&x).unwrap();
        for pair in act.h.windows(2) {
            prop_assert!(pair[0].iter().zip(&pair[1]).all(|(a, b)| a <= b));
        }
    }

    #[test]
    fn projection_is_idempotent(seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let mut p = random_pair(2, 3, &mut rng);
        let (mut flat, _) = pair_flatten(&p);
        for v in flat.iter_mut() {
            *v -= rng.uniform(0.0, 1.0);
        }
        p = pair_unflatten(&p, &flat);
        let once = project_feasible(&p);
        prop_assert!(once.is_feasible());
        prop_assert_eq!(project_feasible(&once), once);
    }
}
