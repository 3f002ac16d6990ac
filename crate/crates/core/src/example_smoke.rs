//! Runs every program under `examples/` and checks its headline numbers.

#[allow(dead_code)]
#[path = "../examples/scalar_stability.rs"]
mod scalar_stability;

#[allow(dead_code)]
#[path = "../examples/scalar_convergence.rs"]
mod scalar_convergence;

#[allow(dead_code)]
#[path = "../examples/negative_target.rs"]
mod negative_target;

#[allow(dead_code)]
#[path = "../examples/matrix_root.rs"]
mod matrix_root;

#[allow(dead_code)]
#[path = "../examples/single_vs_double.rs"]
mod single_vs_double;

#[allow(dead_code)]
#[path = "../examples/convex_bowl.rs"]
mod convex_bowl;

#[allow(dead_code)]
#[path = "../examples/piecewise_fit.rs"]
mod piecewise_fit;

#[allow(dead_code)]
#[path = "../examples/convex_concave_split.rs"]
mod convex_concave_split;

#[test]
fn scalar_stability_matches_bound() {
    for (predicted, empirical) in scalar_stability::run_example().unwrap() {
        assert!((empirical - predicted).abs() < 0.05 * predicted);
    }
}

#[test]
fn scalar_convergence_stays_in_envelope() {
    assert_eq!(scalar_convergence::run_example().unwrap(), 0);
}

#[test]
fn negative_target_collapses_and_double_recovers() {
    let (largest, error) = negative_target::run_example().unwrap();
    assert!(largest < 1e-6);
    assert!(error < 1e-8);
}

#[test]
fn matrix_root_is_reached() {
    assert!(matrix_root::run_example().unwrap() < 1e-6);
}

#[test]
fn double_network_wins() {
    let (single, double) = single_vs_double::run_example().unwrap();
    assert!(double < single);
}

#[test]
fn bowl_values() {
    assert_eq!(convex_bowl::run_example().unwrap(), vec![2.0, 8.0, 5.0, 0.0]);
}

#[test]
fn piecewise_fit_reduces_loss() {
    let (first, last) = piecewise_fit::run_example().unwrap();
    assert!(last < 1e-3 * first);
}

#[test]
fn split_reproduces_target() {
    let (alpha, gap) = convex_concave_split::run_example().unwrap();
    assert!(alpha > 0.0);
    assert!(gap < 1e-12);
}
