use super::grad::Dataset;
use crate::error::{Error, Result};

/// Continuous piecewise-affine function on `[0, 1]` given by its slopes
/// between interior breakpoints and its value at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseAffine1D {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    intercept: f64,
}

impl PiecewiseAffine1D {
    /// `slopes[k]` applies between `breakpoints[k-1]` and `breakpoints[k]`
    /// (with 0 and 1 at the ends), so there is one more slope than
    /// breakpoint.
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>, intercept: f64) -> Result<Self> {
        if slopes.len() != breakpoints.len() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} slopes for {} breakpoints",
                slopes.len(),
                breakpoints.len()
            )));
        }
        let inside = breakpoints.iter().all(|&b| b > 0.0 && b < 1.0);
        let increasing = breakpoints.windows(2).all(|p| p[0] < p[1]);
        if !inside || !increasing {
            return Err(Error::InvalidArgument(
                "breakpoints must be strictly increasing inside (0, 1)".into(),
            ));
        }
        if slopes.iter().any(|s| !s.is_finite()) || !intercept.is_finite() {
            return Err(Error::InvalidArgument("slopes and intercept must be finite".into()));
        }
        Ok(PiecewiseAffine1D { breakpoints, slopes, intercept })
    }

    /// Slope 1 on (0, 0.3) and (0.5, 0.7), −2 on (0.3, 0.5), −1 on (0.7, 1).
    pub fn reference() -> Self {
        PiecewiseAffine1D::new(vec![0.3, 0.5, 0.7], vec![1.0, -2.0, 1.0, -1.0], 0.0).expect("valid constants")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn max_abs_slope(&self) -> f64 {
        self.slopes.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// `intercept + ∫₀ˣ f′`.
    pub fn eval(&self, x: f64) -> f64 {
        let mut value = self.intercept;
        let mut left = 0.0;
        for (k, &slope) in self.slopes.iter().enumerate() {
            let right = self.breakpoints.get(k).copied().unwrap_or(f64::INFINITY);
            if x <= right {
                return value + slope * (x - left);
            }
            value += slope * (right - left);
            left = right;
        }
        value
    }
}

/// `grid_size` evenly spaced samples of `f` on `[0, 1]`.
pub fn piecewise_target(f: &PiecewiseAffine1D, grid_size: usize) -> Result<Dataset> {
    if grid_size < 2 {
        return Err(Error::GridTooCoarse { axis: 0, points: grid_size });
    }
    let xs: Vec<f64> = (0..grid_size).map(|i| i as f64 / (grid_size - 1) as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f.eval(x)).collect();
    Dataset::from_1d(&xs, &ys)
}
