//! Trajectory records shared by the scalar and matrix simulators.

use std::fmt::Write as _;

/// Terminal state of a simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Outcome {
    Converged,
    Diverged,
    Undecided,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityVerdict {
    pub outcome: Outcome,
    pub final_error: f64,
    pub predicted_bound: Option<f64>,
    pub empirical_boundary: Option<f64>,
}

/// Stop thresholds on the magnitude of the recorded error series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopRule {
    pub converged_below: f64,
    pub diverged_above: f64,
}

impl StopRule {
    /// `|e| < 1e-10` converged, `|e| > 1e6` diverged.
    pub const SCALAR: StopRule = StopRule {
        converged_below: 1e-10,
        diverged_above: 1e6,
    };
    /// Loss `< 1e-12` converged, loss `> 1e9` diverged.
    pub const MATRIX: StopRule = StopRule {
        converged_below: 1e-12,
        diverged_above: 1e9,
    };

    pub fn classify(&self, error: f64) -> Option<Outcome> {
        let m = error.abs();
        if !m.is_finite() || m > self.diverged_above {
            Some(Outcome::Diverged)
        } else if m < self.converged_below {
            Some(Outcome::Converged)
        } else {
            None
        }
    }
}

/// Error series of one run. `errors[0]` is the initial error, so
/// `errors.len() == iterations_run + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub errors: Vec<f64>,
    /// `(iteration, parameters)` pairs, thinned by the caller's stride.
    pub snapshots: Vec<(usize, Vec<f64>)>,
    pub iterations_run: usize,
    pub verdict: StabilityVerdict,
}

impl Trajectory {
    pub fn final_error(&self) -> f64 {
        self.verdict.final_error
    }

    pub fn outcome(&self) -> Outcome {
        self.verdict.outcome
    }

    /// `iter,<column>` rows in 17-significant-digit scientific notation.
    pub fn to_csv(&self, column: &str) -> String {
        let mut out = format!("iter,{column}\n");
        for (k, e) in self.errors.iter().enumerate() {
            let _ = writeln!(out, "{k},{e:.16e}");
        }
        out
    }
}

/// Drives `step` until the stop rule fires or `max_iters` is spent.
/// `state` yields the error of the current iterate and, on request, its
/// flattened parameters for snapshots.
pub(crate) fn run<S>(
    mut state: S,
    max_iters: usize,
    rule: StopRule,
    snapshot_every: Option<usize>,
    error: impl Fn(&S) -> f64,
    params: impl Fn(&S) -> Vec<f64>,
    mut step: impl FnMut(&S) -> S,
) -> (S, Trajectory) {
    let mut errors = Vec::with_capacity(max_iters.min(1 << 20) + 1);
    let mut snapshots = Vec::new();
    let mut e = error(&state);
    errors.push(e);
    let snap = |k: usize, s: &S, out: &mut Vec<(usize, Vec<f64>)>| {
        if let Some(stride) = snapshot_every {
            if k.is_multiple_of(stride.max(1)) {
                out.push((k, params(s)));
            }
        }
    };
    snap(0, &state, &mut snapshots);
    let mut outcome = rule.classify(e);
    let mut k = 0;
    while outcome.is_none() && k < max_iters {
        state = step(&state);
        k += 1;
        e = error(&state);
        errors.push(e);
        snap(k, &state, &mut snapshots);
        outcome = rule.classify(e);
    }
    if let Some(stride) = snapshot_every {
        if k % stride.max(1) != 0 {
            snapshots.push((k, params(&state)));
        }
    }
    let trajectory = Trajectory {
        errors,
        snapshots,
        iterations_run: k,
        verdict: StabilityVerdict {
            outcome: outcome.unwrap_or(Outcome::Undecided),
            final_error: e,
            predicted_bound: None,
            empirical_boundary: None,
        },
    };
    (state, trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_thresholds() {
        let r = StopRule::SCALAR;
        assert_eq!(r.classify(0.0), Some(Outcome::Converged));
        assert_eq!(r.classify(-5e-11), Some(Outcome::Converged));
        assert_eq!(r.classify(1.0), None);
        assert_eq!(r.classify(-2e6), Some(Outcome::Diverged));
        assert_eq!(r.classify(f64::NAN), Some(Outcome::Diverged));
    }

    #[test]
    fn run_records_initial_error() {
        let (end, t) = run(
            1.0f64,
            10,
            StopRule::SCALAR,
            Some(3),
            |x| *x,
            |x| vec![*x],
            |x| x * 0.5,
        );
        assert_eq!(t.iterations_run, 10);
        assert_eq!(t.errors.len(), 11);
        assert_eq!(t.outcome(), Outcome::Undecided);
        assert_eq!(end, 0.5f64.powi(10));
        let iters: Vec<usize> = t.snapshots.iter().map(|s| s.0).collect();
        assert_eq!(iters, vec![0, 3, 6, 9, 10]);
    }

    #[test]
    fn csv_has_header_and_one_row_per_iterate() {
        let (_, t) = run(4.0f64, 2, StopRule::SCALAR, None, |x| *x, |_| vec![], |x| x - 1.0);
        let csv = t.to_csv("error");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "iter,error");
        assert_eq!(lines[1], "0,4.0000000000000000e0");
        assert_eq!(lines.len(), 4);
    }
}
