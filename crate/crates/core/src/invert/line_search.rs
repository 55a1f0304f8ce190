use nalgebra::DVector;

use crate::error::Result;

/// Sufficient-decrease constant of the Armijo-Goldstein test.
pub const ARMIJO: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOptions {
    pub damped: bool,
    pub positivity: bool,
    /// Smallest admissible step length.
    pub alpha_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LineSearch {
    Accepted {
        alpha: f64,
        x: Vec<f64>,
        residual: DVector<f64>,
    },
    /// No dyadic step down to `alpha_min` was admissible.
    Stagnated,
}

/// Dyadic backtracking `alpha = 2^-j`, `j = 0, 1, ...`.
///
/// A trial is admissible when `x + alpha q > 0` (with positivity on) and,
/// in damped mode, when
///
/// ```text
/// ||r(x)||^2 - ||r(x + alpha q)||^2 >= ARMIJO * alpha * ||J q||^2
/// ```
///
/// `predicted` is `||J q||^2`. A residual evaluation that fails counts as a
/// rejected trial.
pub fn line_search<F>(
    x: &[f64],
    q: &[f64],
    current_norm2: f64,
    predicted: f64,
    mut residual: F,
    opts: LineSearchOptions,
) -> LineSearch
where
    F: FnMut(&[f64]) -> Result<DVector<f64>>,
{
    let mut alpha = 1.0;
    while alpha >= opts.alpha_min {
        let trial: Vec<f64> = x.iter().zip(q).map(|(a, b)| a + alpha * b).collect();
        let feasible = !opts.positivity || trial.iter().all(|v| *v > 0.0);
        if feasible {
            if let Ok(r) = residual(&trial) {
                let norm2 = r.norm_squared();
                let finite = norm2.is_finite();
                if finite && (!opts.damped || current_norm2 - norm2 >= ARMIJO * alpha * predicted) {
                    return LineSearch::Accepted {
                        alpha,
                        x: trial,
                        residual: r,
                    };
                }
            }
        }
        alpha *= 0.5;
    }
    LineSearch::Stagnated
}
