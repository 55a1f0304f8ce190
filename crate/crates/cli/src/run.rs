//! Synthesis of data, inversion of one sounding or a section, and the
//! serializable record of a run that tables and figures are drawn from.

use std::collections::BTreeMap;

use fdem_core::forward::{hratio, signal_component};
use fdem_core::invert::{add_noise, invert_section, ColumnOutcome, FdemProblem, Termination};
use fdem_core::{DataVector, DeviceConfig, Discretization, IndexTuple, InversionResult, Quantity, RunControl};
use serde::{Deserialize, Serialize};

use crate::config::{DeviceSection, RunConfig};
use crate::dataset::Dataset;
use crate::error::{CliError, Result};

/// Synthetic soundings and the profiles they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub truth: Vec<Vec<f64>>,
}

/// Forward-model every truth column of `config` and add noise of relative
/// level `inversion.noise_delta`, seeded per column.
pub fn simulate(config: &RunConfig) -> Result<Synthetic> {
    let opts = &config.inversion;
    let disc = config.soil.discretization()?;
    let device = config.device.device()?;
    let truth = config.truth.profiles(&disc, opts.unknown)?;
    let fixed = opts.fixed(disc.layers())?;
    let delta = opts.noise_delta;

    let mut columns = Vec::with_capacity(truth.len());
    let mut std_sum = 0.0;
    for (c, profile) in truth.iter().enumerate() {
        let soil = match opts.unknown {
            Quantity::Sigma => disc.soil(profile.clone(), fixed.clone())?,
            Quantity::Mu => disc.soil(fixed.clone(), profile.clone())?,
        };
        let clean = signal_component(&hratio(&soil, &device)?, device.component, &device)?;
        let stacked = clean.stacked(1.0);
        std_sum += delta * stacked.norm() / (stacked.len() as f64).sqrt();
        columns.push(add_noise(&clean, delta, config.seed + c as u64)?);
    }

    let mut dataset = Dataset::from_columns(&device, &config.device.freq_hz, columns).map_err(|source| {
        CliError::Config(format!("synthetic data: {source}"))
    })?;
    dataset.meta.insert("seed".into(), config.seed.to_string());
    dataset.meta.insert("noise_delta".into(), delta.to_string());
    if delta > 0.0 {
        dataset.meta.insert("noise_std".into(), (std_sum / truth.len() as f64).to_string());
    }
    Ok(Synthetic { dataset, truth })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Profile,
    Section,
}

/// One row of the stacked real data vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    /// `re` or `im` for complex data, `value` for a real component.
    pub part: Part,
    pub reading: IndexTuple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Re,
    Im,
    Value,
}

impl std::fmt::Display for Part {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Part::Re => "re",
            Part::Im => "im",
            Part::Value => "value",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnReport {
    pub outcome: ColumnOutcome,
    /// Stacked observations of the fitted rows.
    pub observed: Vec<f64>,
    /// Stacked predictions of every truncation index, `ell = 1..`.
    pub predicted: Vec<Vec<f64>>,
}

impl ColumnReport {
    pub fn result(&self) -> Option<&InversionResult> {
        self.outcome.result()
    }

    pub fn selected_prediction(&self) -> Option<&[f64]> {
        let r = self.result()?;
        self.predicted.get(r.selected_ell - 1).map(Vec::as_slice)
    }

    /// Completed, and the selected run converged.
    pub fn converged(&self) -> bool {
        self.result()
            .is_some_and(|r| r.selected().termination == Termination::Converged)
    }
}

/// Everything a run produced; written as `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub kind: RunKind,
    /// Configuration in effect, with the device of the dataset.
    pub config: RunConfig,
    pub tops: Vec<f64>,
    pub midpoints: Vec<f64>,
    /// Dataset header entries other than the grid.
    pub meta: BTreeMap<String, String>,
    pub rows: Vec<FitRow>,
    pub truth: Option<Vec<Vec<f64>>>,
    pub columns: Vec<ColumnReport>,
}

impl Payload {
    pub fn unknown(&self) -> Quantity {
        self.config.inversion.unknown
    }

    pub fn layers(&self) -> usize {
        self.midpoints.len()
    }

    pub fn complete(&self) -> bool {
        self.columns.iter().all(ColumnReport::converged)
    }

    /// `||x - x_true|| / ||x_true||` for column `c` at truncation index `ell`.
    pub fn relative_error(&self, c: usize, ell: usize) -> Option<f64> {
        let truth = self.truth.as_ref()?.get(c)?;
        let x = &self.columns.get(c)?.result()?.run(ell)?.profile;
        Some(relative_error(x, truth))
    }
}

pub fn relative_error(x: &[f64], truth: &[f64]) -> f64 {
    let diff: f64 = x.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    let norm: f64 = truth.iter().map(|b| b * b).sum();
    (diff / norm).sqrt()
}

fn fit_rows(data: &DataVector, rows: Option<&[usize]>) -> Vec<FitRow> {
    let readings: Vec<IndexTuple> = match rows {
        Some(r) => r.iter().map(|&k| data.index_map[k]).collect(),
        None => data.index_map.clone(),
    };
    let row = |part| move |reading: &IndexTuple| FitRow { part, reading: *reading };
    if data.component.is_complex() {
        readings.iter().map(row(Part::Re)).chain(readings.iter().map(row(Part::Im))).collect()
    } else {
        readings.iter().map(row(Part::Value)).collect()
    }
}

/// Invert every column of `dataset`. `truth`, when known, is carried into
/// the payload for error reporting and figures.
pub fn invert(
    config: &RunConfig,
    dataset: &Dataset,
    truth: Option<Vec<Vec<f64>>>,
    kind: RunKind,
    control: &RunControl,
) -> Result<Payload> {
    let mut config = config.clone();
    config.device = DeviceSection {
        rho: dataset.rho.clone(),
        h: dataset.height.clone(),
        freq_hz: dataset.freq_hz.clone(),
        orientation: dataset.orientation,
        component: dataset.component,
        beta: dataset.beta,
    };
    if config.inversion.noise_std.is_none() {
        if let Some(v) = dataset.meta.get("noise_std") {
            let std = v
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("dataset noise_std `{v}` is not a number")))?;
            config.inversion.noise_std = Some(std);
        }
    }
    if kind == RunKind::Profile && dataset.columns.len() != 1 {
        return Err(CliError::Config(format!(
            "dataset holds {} columns; invert a section with `invert2d`",
            dataset.columns.len()
        )));
    }
    let device = config.device.device()?;
    let disc = config.soil.discretization()?;
    if let Some(t) = &truth {
        if t.len() != dataset.columns.len() || t.iter().any(|p| p.len() != disc.layers()) {
            return Err(CliError::Config(format!(
                "truth must hold {} columns of {} layers",
                dataset.columns.len(),
                disc.layers()
            )));
        }
    }

    let opts = &config.inversion;
    let section = invert_section(&dataset.columns, &device, &disc, opts, control)?;
    let columns = section
        .columns
        .into_iter()
        .zip(&dataset.columns)
        .map(|(outcome, data)| report(outcome, data, &device, &disc, &config))
        .collect::<Result<Vec<_>>>()?;

    Ok(Payload {
        kind,
        tops: disc.tops(),
        midpoints: disc.midpoints(),
        meta: dataset.meta.clone(),
        rows: fit_rows(&dataset.columns[0], opts.yrows.as_deref()),
        truth,
        columns,
        config,
    })
}

fn report(
    outcome: ColumnOutcome,
    data: &DataVector,
    device: &DeviceConfig,
    disc: &Discretization,
    config: &RunConfig,
) -> Result<ColumnReport> {
    let opts = &config.inversion;
    let problem = FdemProblem::new(
        data,
        device,
        disc,
        opts.unknown,
        opts.fixed(disc.layers())?,
        opts.jacobian,
        opts.yrows.clone(),
    )?;
    let predicted = match outcome.result() {
        Some(r) => r
            .runs
            .iter()
            .map(|run| Ok(problem.predict(&run.profile)?.as_slice().to_vec()))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    Ok(ColumnReport {
        observed: problem.observed().as_slice().to_vec(),
        predicted,
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut c = RunConfig::default();
        c.soil.layers = 8;
        c.soil.depth = 2.0;
        c.device.freq_hz = vec![2000.0, 24000.0, 96000.0];
        c.inversion.noise_delta = 0.01;
        c.inversion.k_max = 15;
        c
    }

    #[test]
    fn simulate_records_noise_and_seed() {
        let s = simulate(&small()).unwrap();
        assert_eq!(s.dataset.columns.len(), 1);
        assert_eq!(s.dataset.meta["seed"], "0");
        assert!(s.dataset.meta["noise_std"].parse::<f64>().unwrap() > 0.0);
        assert_eq!(s.truth[0].len(), 8);
        assert_eq!(simulate(&small()).unwrap(), s);
    }

    #[test]
    fn payload_carries_predictions_per_ell() {
        let config = small();
        let s = simulate(&config).unwrap();
        let p = invert(&config, &s.dataset, Some(s.truth.clone()), RunKind::Profile, &RunControl::default()).unwrap();
        let col = &p.columns[0];
        let r = col.result().unwrap();
        assert_eq!(col.predicted.len(), r.ell_max);
        assert_eq!(col.observed.len(), 12);
        assert_eq!(p.rows.len(), 12);
        assert_eq!(p.rows[6].part, Part::Im);
        assert_eq!(p.config.inversion.noise_std, s.dataset.meta["noise_std"].parse().ok());
        assert!(p.relative_error(0, r.selected_ell).unwrap().is_finite());
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<Payload>(&json).unwrap(), p);
    }

    #[test]
    fn profile_runs_reject_sections() {
        let mut config = small();
        config.truth.columns = 2;
        let s = simulate(&config).unwrap();
        let e = invert(&config, &s.dataset, None, RunKind::Profile, &RunControl::default()).unwrap_err();
        assert!(e.to_string().contains("invert2d"));
    }
}
