use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::control::{ProgressEvent, RunControl};
use super::line_search::{line_search, LineSearch, LineSearchOptions};
use super::options::MgsOptions;
use super::problem::Problem;
use crate::error::{Error, Result};
use crate::jacobian::broyden_update;
use crate::regularize::{gsvd, mgs_stabilizer, tgsvd_solve, RegMatrix};

/// Why a Gauss-Newton run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// `||x_k - x_{k-1}|| < tau ||x_k||`.
    Converged,
    /// `k > k_max`.
    MaxIterations,
    /// The line search found no admissible step above `alpha_min`.
    Stagnated,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max-iterations",
            Termination::Stagnated => "stagnated",
        })
    }
}

/// One accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub alpha: f64,
    /// Data residual norm after the step.
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussNewtonSettings {
    pub ell: usize,
    pub tau_stop: f64,
    pub k_max: usize,
    pub line: LineSearchOptions,
    pub mgs: Option<MgsOptions>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussNewtonRun {
    pub x: Vec<f64>,
    pub residual: DVector<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub history: Vec<Step>,
}

/// Regularization operator of the MGS-stabilized step with weights frozen
/// at the plain step `q`: `lambda D L`, `D = diag(sqrt(w_r) / |q_r|)`. It
/// takes the place of `L` in the factorization, so the truncated step
/// minimizes the reweighted seminorm instead of `||L q||`.
pub(crate) fn mgs_operator(x: &[f64], reg: &RegMatrix, mgs: MgsOptions) -> Result<DMatrix<f64>> {
    let term = mgs_stabilizer(x, reg, mgs.tau)?;
    let mut scaled = reg.matrix.clone();
    for (r, mut row) in scaled.row_iter_mut().enumerate() {
        row *= mgs.lambda * term.weights[r].sqrt() / term.scale[r];
    }
    Ok(scaled)
}

/// Damped, regularized Gauss-Newton iteration from `x0` at truncation
/// index `settings.ell` (clamped to the admissible range of each step).
pub fn gauss_newton<P: Problem + ?Sized>(
    problem: &P,
    x0: &[f64],
    reg: &RegMatrix,
    settings: &GaussNewtonSettings,
    control: &RunControl,
) -> Result<GaussNewtonRun> {
    let at = |iteration: usize| move |e: Error| Error::Iteration { iteration, source: Box::new(e) };
    let mut x = x0.to_vec();
    let (mut r, mut j) = problem.linearize(&x).map_err(at(0))?;
    let mut history = Vec::new();
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    for k in 1..=settings.k_max {
        control.check()?;
        iterations = k;
        let factors = gsvd(&j, &reg.matrix)?;
        let ell = settings.ell.min(factors.ell_max());
        let mut q = tgsvd_solve(&factors, &r, ell)?;
        if let Some(m) = settings.mgs {
            if q.iter().any(|v| *v != 0.0) {
                let weighted = gsvd(&j, &mgs_operator(q.as_slice(), reg, m)?)?;
                q = tgsvd_solve(&weighted, &r, ell.min(weighted.ell_max()))?;
            }
        }
        if q.iter().all(|v| *v == 0.0) {
            history.push(Step {
                alpha: 1.0,
                residual_norm: r.norm(),
            });
            termination = Termination::Converged;
            break;
        }
        let predicted = (&j * &q).norm_squared();
        let trial = |p: &[f64]| problem.residual(p);
        let (alpha, xn, rn) = match line_search(&x, q.as_slice(), r.norm_squared(), predicted, trial, settings.line) {
            LineSearch::Stagnated => {
                // At a stationary point the decrease test compares rounding
                // noise; a step that would pass the stopping test anyway
                // means the run has converged.
                let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                termination = if q.norm() < settings.tau_stop * xnorm {
                    Termination::Converged
                } else {
                    Termination::Stagnated
                };
                break;
            }
            LineSearch::Accepted { alpha, x, residual } => (alpha, x, residual),
        };
        history.push(Step {
            alpha,
            residual_norm: rn.norm(),
        });
        control.emit(ProgressEvent::Iteration {
            column: control.column,
            ell: settings.ell,
            iteration: k,
            residual_norm: rn.norm(),
        });

        let s = DVector::from_iterator(x.len(), xn.iter().zip(&x).map(|(a, b)| a - b));
        let xnorm = xn.iter().map(|v| v * v).sum::<f64>().sqrt();
        if s.norm() < settings.tau_stop * xnorm {
            x = xn;
            r = rn;
            termination = Termination::Converged;
            break;
        }
        match problem.broyden_interval() {
            Some(interval) if k % interval != 0 => {
                j = broyden_update(&j, &s, &(&rn - &r))?.matrix;
                r = rn;
            }
            _ => {
                (r, j) = problem.linearize(&xn).map_err(at(k))?;
            }
        }
        x = xn;
    }

    Ok(GaussNewtonRun {
        x,
        residual: r,
        iterations,
        termination,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invert::problem::LinearProblem;
    use crate::regularize::derivative_operator;

    fn settings(ell: usize) -> GaussNewtonSettings {
        GaussNewtonSettings {
            ell,
            tau_stop: 1e-3,
            k_max: 50,
            line: LineSearchOptions {
                damped: true,
                positivity: true,
                alpha_min: 2f64.powi(-30),
            },
            mgs: None,
        }
    }

    #[test]
    fn exact_start_stops_at_first_iteration() {
        let a = DMatrix::from_fn(6, 4, |r, c| 1.0 / (1.0 + r as f64 + c as f64));
        let x0 = [0.5, 0.4, 0.3, 0.2];
        let b = &a * DVector::from_column_slice(&x0);
        let p = LinearProblem { a, b };
        let reg = derivative_operator(1, 4).unwrap();
        let run = gauss_newton(&p, &x0, &reg, &settings(3), &RunControl::default()).unwrap();
        assert_eq!(run.iterations, 1);
        assert_eq!(run.termination, Termination::Converged);
        assert!(run.residual.norm() <= 1e-14);
        assert_eq!(run.x, x0.to_vec());
    }

    #[test]
    fn linear_problem_converges_after_one_full_step() {
        let a = DMatrix::from_fn(8, 5, |r, c| ((r * 5 + c) as f64 * 0.37).sin() + if r == c { 2.0 } else { 0.0 });
        let truth = DVector::from_vec(vec![1.0, 2.0, 1.5, 0.7, 1.2]);
        let b = &a * &truth;
        let p = LinearProblem { a: a.clone(), b: b.clone() };
        let reg = derivative_operator(2, 5).unwrap();
        let x0 = [1.0; 5];
        let run = gauss_newton(&p, &x0, &reg, &settings(3), &RunControl::default()).unwrap();
        // one step lands on the regularized solution, the next one is zero-length
        assert_eq!(run.history[0].alpha, 1.0);
        assert!(run.iterations <= 2);
        assert_eq!(run.termination, Termination::Converged);
        let f = gsvd(&(-&a), &reg.matrix).unwrap();
        let r0 = &b - &a * DVector::from_column_slice(&x0);
        let want = DVector::from_column_slice(&x0) + tgsvd_solve(&f, &r0, 3).unwrap();
        assert!((DVector::from_column_slice(&run.x) - want).norm() <= 1e-10);
    }

    #[test]
    fn cancellation_is_observed() {
        let a = DMatrix::<f64>::identity(3, 3);
        let p = LinearProblem {
            a,
            b: DVector::from_vec(vec![1.0, 2.0, 3.0]),
        };
        let reg = derivative_operator(0, 3).unwrap();
        let control = RunControl::default();
        control.cancel.cancel();
        let err = gauss_newton(&p, &[1.0; 3], &reg, &settings(3), &control).unwrap_err();
        assert_eq!(err, Error::Cancelled);
    }
}
