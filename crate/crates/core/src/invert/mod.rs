//! Regularized, damped Gauss-Newton inversion of one sounding, a sweep over
//! truncation indices with parameter selection, and column-wise processing
//! of sections.

mod control;
mod gauss_newton;
mod line_search;
mod noise;
mod options;
mod problem;
mod select;

pub use control::{CancelToken, ProgressEvent, ProgressFn, RunControl};
pub use gauss_newton::{gauss_newton, GaussNewtonRun, GaussNewtonSettings, Step, Termination};
pub use line_search::{line_search, LineSearch, LineSearchOptions, ARMIJO};
pub use noise::add_noise;
pub use options::{InversionOptions, MgsOptions, ParamMethod};
pub use problem::{FdemProblem, LinearProblem, Problem};
pub use select::{
    corner_index, discrepancy_index, quasi_optimal_index, sweep_and_select, EllRun, InversionResult, Selection,
};

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DataVector, DeviceConfig, Discretization};
use crate::par;

/// Invert one sounding for the quantity named in `opts.unknown`.
pub fn invert_profile(
    data: &DataVector,
    device: &DeviceConfig,
    discretization: &Discretization,
    opts: &InversionOptions,
    control: &RunControl,
) -> Result<InversionResult> {
    opts.validate()?;
    let problem = FdemProblem::new(
        data,
        device,
        discretization,
        opts.unknown,
        opts.fixed(discretization.layers())?,
        opts.jacobian,
        opts.yrows.clone(),
    )?;
    sweep_and_select(&problem, opts, control)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ColumnOutcome {
    Ok { result: Box<InversionResult> },
    Failed { error: String },
}

impl ColumnOutcome {
    pub fn result(&self) -> Option<&InversionResult> {
        match self {
            ColumnOutcome::Ok { result } => Some(result),
            ColumnOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionResult {
    pub columns: Vec<ColumnOutcome>,
}

impl SectionResult {
    /// Selected profiles as an `n x columns` matrix; failed columns are NaN.
    pub fn profiles(&self, layers: usize) -> DMatrix<f64> {
        let mut out = DMatrix::from_element(layers, self.columns.len(), f64::NAN);
        for (c, col) in self.columns.iter().enumerate() {
            if let Some(r) = col.result() {
                for (k, v) in r.selected().profile.iter().enumerate().take(layers) {
                    out[(k, c)] = *v;
                }
            }
        }
        out
    }

    pub fn failed(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.result().is_none())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Independent inversion of every column. A failing column is recorded and
/// the others are still returned; cancellation aborts the whole section.
pub fn invert_section(
    columns: &[DataVector],
    device: &DeviceConfig,
    discretization: &Discretization,
    opts: &InversionOptions,
    control: &RunControl,
) -> Result<SectionResult> {
    opts.validate()?;
    if columns.is_empty() {
        return Err(Error::Dimension("section has no columns".into()));
    }
    let done = AtomicUsize::new(0);
    let total = columns.len();
    let items: Vec<(usize, &DataVector)> = columns.iter().enumerate().collect();
    let outcomes = par::map(opts.execution, items, |(c, data)| {
        let ctl = control.for_column(c);
        let out = invert_profile(data, device, discretization, opts, &ctl);
        control.emit(ProgressEvent::ColumnFinished {
            column: c,
            completed: done.fetch_add(1, Ordering::SeqCst) + 1,
            total,
            ok: out.is_ok(),
        });
        out
    });
    let mut result = Vec::with_capacity(total);
    for out in outcomes {
        match out {
            Err(Error::Cancelled) => return Err(Error::Cancelled),
            Err(e) => result.push(ColumnOutcome::Failed { error: e.to_string() }),
            Ok(r) => result.push(ColumnOutcome::Ok { result: Box::new(r) }),
        }
    }
    Ok(SectionResult { columns: result })
}
