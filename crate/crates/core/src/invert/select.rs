use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::control::{ProgressEvent, RunControl};
use super::gauss_newton::{gauss_newton, GaussNewtonSettings, Step, Termination};
use super::line_search::LineSearchOptions;
use super::options::{InversionOptions, ParamMethod};
use super::problem::Problem;
use crate::error::{Error, Result};
use crate::model::Quantity;
use crate::par;
use crate::regularize::{derivative_operator, gsvd};

/// Converged Gauss-Newton run at one truncation index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllRun {
    pub ell: usize,
    pub profile: Vec<f64>,
    pub residual_norm: f64,
    /// `||L x||` with the sweep's regularization operator.
    pub seminorm: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub history: Vec<Step>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub requested: ParamMethod,
    /// Rule actually applied; differs from `requested` when the discrepancy
    /// principle falls back to the corner for lack of a noise estimate.
    pub applied: ParamMethod,
    /// False when the discrepancy threshold was met by no index.
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub unknown: Quantity,
    pub initial_residual_norm: f64,
    pub ell_max: usize,
    /// One entry per `ell = 1..=ell_max`, in order.
    pub runs: Vec<EllRun>,
    pub selected_ell: usize,
    pub selection: Selection,
    /// `tau_discr * noise_std * sqrt(rows)` when a noise level was given.
    pub discrepancy_threshold: Option<f64>,
}

impl InversionResult {
    pub fn selected(&self) -> &EllRun {
        &self.runs[self.selected_ell - 1]
    }

    pub fn run(&self, ell: usize) -> Option<&EllRun> {
        ell.checked_sub(1).and_then(|i| self.runs.get(i))
    }
}

/// Zero-based index of the first residual at or below `threshold`; the last
/// index and `false` when there is none.
pub fn discrepancy_index(residuals: &[f64], threshold: f64) -> (usize, bool) {
    match residuals.iter().position(|r| *r <= threshold) {
        Some(i) => (i, true),
        None => (residuals.len().saturating_sub(1), false),
    }
}

/// Corner of the discrete L-curve `(log ||r||, log ||L x||)` by the triangle
/// method; points are ordered by increasing truncation index.
///
/// For every triangle `(P_j, P_k, P_N)`, `j < k < N`, that turns clockwise at
/// `P_k`, the angle at `P_k` is measured; the sharpest one marks the corner.
/// Returns a zero-based index.
pub fn corner_index(residuals: &[f64], seminorms: &[f64]) -> usize {
    let n = residuals.len().min(seminorms.len());
    // Only points that do not raise the residual over every earlier point
    // form the curve; runs that stalled short of their predecessors would
    // otherwise fold it back on itself.
    let mut kept = Vec::with_capacity(n);
    let mut floor = f64::INFINITY;
    for (i, r) in residuals.iter().take(n).enumerate() {
        if *r <= floor {
            floor = *r;
            kept.push(i);
        }
    }
    if kept.len() < 3 {
        return kept.last().copied().unwrap_or(0);
    }
    let pts: Vec<(f64, f64)> = kept
        .iter()
        .map(|&i| (residuals[i].max(f64::MIN_POSITIVE).ln(), seminorms[i].max(f64::MIN_POSITIVE).ln()))
        .collect();
    let m = pts.len();
    let last = pts[m - 1];
    let mut best: Option<(f64, usize)> = None;
    for j in 0..m - 2 {
        for k in j + 1..m - 1 {
            let (pj, pk) = (pts[j], pts[k]);
            let a = (pk.0 - pj.0, pk.1 - pj.1);
            let b = (last.0 - pk.0, last.1 - pk.1);
            let cross = a.0 * b.1 - a.1 * b.0;
            let (na, nb) = (a.0.hypot(a.1), b.0.hypot(b.1));
            if cross >= 0.0 || na == 0.0 || nb == 0.0 {
                continue;
            }
            // angle at P_k between P_j and P_N
            let cos = -(a.0 * b.0 + a.1 * b.1) / (na * nb);
            let angle = cos.clamp(-1.0, 1.0).acos();
            if best.is_none_or(|(b, _)| angle < b) {
                best = Some((angle, k));
            }
        }
    }
    kept[best.map_or(m - 1, |(_, k)| k)]
}

/// Zero-based `argmin_i ||x_{i+1} - x_i||`.
pub fn quasi_optimal_index(profiles: &[Vec<f64>]) -> usize {
    if profiles.len() < 2 {
        return 0;
    }
    let mut best = (f64::INFINITY, 0);
    for i in 0..profiles.len() - 1 {
        let d = profiles[i + 1]
            .iter()
            .zip(&profiles[i])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Gauss-Newton at every admissible truncation index from the same start,
/// then choose one of them.
pub fn sweep_and_select<P: Problem + ?Sized>(
    problem: &P,
    opts: &InversionOptions,
    control: &RunControl,
) -> Result<InversionResult> {
    opts.validate()?;
    let n = problem.unknowns();
    let reg = derivative_operator(opts.reg_order, n)?;
    let x0 = opts.init_profile(n)?;
    if opts.positivity && x0.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("inversion.x_init", "must be positive when positivity is enforced"));
    }
    control.check()?;

    let (r0, j0) = problem
        .linearize(&x0)
        .map_err(|e| Error::Iteration { iteration: 0, source: Box::new(e) })?;
    let ell_max = gsvd(&j0, &reg.matrix)?.ell_max();
    if ell_max == 0 {
        return Err(Error::TruncationOutOfRange { ell: 1, max: 0 });
    }
    if let ParamMethod::Fixed(ell) = opts.param_method {
        if ell > ell_max {
            return Err(Error::TruncationOutOfRange { ell, max: ell_max });
        }
    }

    let line = LineSearchOptions {
        damped: opts.damped,
        positivity: opts.positivity,
        alpha_min: opts.alpha_min,
    };
    let done = AtomicUsize::new(0);
    let ells: Vec<usize> = (1..=ell_max).collect();
    let outcomes = par::map(opts.execution, ells, |ell| {
        let settings = GaussNewtonSettings {
            ell,
            tau_stop: opts.tau_stop,
            k_max: opts.k_max,
            line,
            mgs: opts.mgs,
        };
        let run = gauss_newton(problem, &x0, &reg, &settings, control)?;
        let seminorm = (&reg.matrix * DVector::from_column_slice(&run.x)).norm();
        control.emit(ProgressEvent::EllFinished {
            column: control.column,
            ell,
            completed: done.fetch_add(1, Ordering::SeqCst) + 1,
            total: ell_max,
        });
        Ok(EllRun {
            ell,
            residual_norm: run.residual.norm(),
            profile: run.x,
            seminorm,
            iterations: run.iterations,
            termination: run.termination,
            history: run.history,
        })
    });
    if outcomes.iter().any(|o| matches!(o, Err(Error::Cancelled))) {
        return Err(Error::Cancelled);
    }
    let runs = outcomes.into_iter().collect::<Result<Vec<EllRun>>>()?;
    if runs.iter().all(|r| r.termination == Termination::Stagnated) {
        return Err(Error::AllStagnated);
    }

    let residuals: Vec<f64> = runs.iter().map(|r| r.residual_norm).collect();
    let threshold = opts.noise_std.map(|ds| opts.tau_discr * ds * (r0.len() as f64).sqrt());
    let requested = opts.param_method;
    let (applied, index, satisfied) = match (requested, threshold) {
        (ParamMethod::Fixed(ell), _) => (requested, ell - 1, true),
        (ParamMethod::Discrepancy, Some(t)) => {
            let (i, ok) = discrepancy_index(&residuals, t);
            (requested, i, ok)
        }
        (ParamMethod::QuasiOptimality, _) => {
            let profiles: Vec<Vec<f64>> = runs.iter().map(|r| r.profile.clone()).collect();
            (requested, quasi_optimal_index(&profiles), true)
        }
        (ParamMethod::Corner, _) | (ParamMethod::Discrepancy, None) => {
            let seminorms: Vec<f64> = runs.iter().map(|r| r.seminorm).collect();
            (ParamMethod::Corner, corner_index(&residuals, &seminorms), true)
        }
    };

    Ok(InversionResult {
        unknown: opts.unknown,
        initial_residual_norm: r0.norm(),
        ell_max,
        selected_ell: runs[index].ell,
        runs,
        selection: Selection {
            requested,
            applied,
            satisfied,
        },
        discrepancy_threshold: threshold,
    })
}
