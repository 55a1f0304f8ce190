//! CSV tables and `result.json`.

use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};
use crate::run::{relative_error, Payload, RunKind};

fn table(head: Vec<String>, rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&head).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

fn depth_columns(p: &Payload, k: usize) -> Vec<String> {
    vec![k.to_string(), num(p.tops[k]), num(p.midpoints[k])]
}

fn depth_head() -> Vec<String> {
    ["layer", "top_m", "mid_m"].map(String::from).to_vec()
}

/// Profiles of every truncation index of column `c`, plus the truth.
pub fn profiles_csv(p: &Payload, c: usize) -> String {
    let Some(r) = p.columns[c].result() else {
        return table(depth_head(), Vec::new());
    };
    let truth = p.truth.as_ref().map(|t| &t[c]);
    let mut head = depth_head();
    head.extend(r.runs.iter().map(|run| format!("ell_{}", run.ell)));
    if truth.is_some() {
        head.push("truth".into());
    }
    let rows = (0..p.layers())
        .map(|k| {
            let mut row = depth_columns(p, k);
            row.extend(r.runs.iter().map(|run| num(run.profile[k])));
            row.extend(truth.map(|t| num(t[k])));
            row
        })
        .collect();
    table(head, rows)
}

/// One line per truncation index of column `c`.
pub fn sweep_csv(p: &Payload, c: usize) -> String {
    let mut head: Vec<String> = ["ell", "residual_norm", "seminorm", "iterations", "termination", "selected"]
        .map(String::from)
        .to_vec();
    if p.truth.is_some() {
        head.push("rel_error".into());
    }
    let Some(r) = p.columns[c].result() else {
        return table(head, Vec::new());
    };
    let rows = r
        .runs
        .iter()
        .map(|run| {
            let mut row = vec![
                run.ell.to_string(),
                num(run.residual_norm),
                num(run.seminorm),
                run.iterations.to_string(),
                run.termination.to_string(),
                (run.ell == r.selected_ell).to_string(),
            ];
            row.extend(p.relative_error(c, run.ell).map(num));
            row
        })
        .collect();
    table(head, rows)
}

/// The selected profile of column `c`.
pub fn selected_csv(p: &Payload, c: usize) -> String {
    let truth = p.truth.as_ref().map(|t| &t[c]);
    let mut head = depth_head();
    head.push(p.unknown().to_string());
    if truth.is_some() {
        head.push("truth".into());
    }
    let Some(r) = p.columns[c].result() else {
        return table(head, Vec::new());
    };
    let rows = (0..p.layers())
        .map(|k| {
            let mut row = depth_columns(p, k);
            row.push(num(r.selected().profile[k]));
            row.extend(truth.map(|t| num(t[k])));
            row
        })
        .collect();
    table(head, rows)
}

/// Observed and predicted stacked data of column `c` at the selected index.
pub fn fit_csv(p: &Payload, c: usize) -> String {
    let head = ["row", "part", "coil", "rho_index", "h_index", "freq_index", "observed", "predicted"]
        .map(String::from)
        .to_vec();
    let col = &p.columns[c];
    let predicted = col.selected_prediction();
    let rows = p
        .rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            vec![
                k.to_string(),
                row.part.to_string(),
                row.reading.coil.letter().to_string(),
                row.reading.t.to_string(),
                row.reading.i.to_string(),
                row.reading.j.to_string(),
                num(col.observed[k]),
                predicted.map_or(String::new(), |v| num(v[k])),
            ]
        })
        .collect();
    table(head, rows)
}

/// Selected profiles of a section, one column per sounding; failed columns
/// are left empty.
pub fn section_csv(p: &Payload) -> String {
    let mut head = depth_head();
    head.extend((0..p.columns.len()).map(|c| format!("col_{c}")));
    let rows = (0..p.layers())
        .map(|k| {
            let mut row = depth_columns(p, k);
            row.extend(
                p.columns
                    .iter()
                    .map(|col| col.result().map_or(String::new(), |r| num(r.selected().profile[k]))),
            );
            row
        })
        .collect();
    table(head, rows)
}

/// Outcome of every sounding of a section.
pub fn columns_csv(p: &Payload) -> String {
    let mut head: Vec<String> = ["column", "status", "selected_ell", "ell_max", "residual_norm", "termination"]
        .map(String::from)
        .to_vec();
    if p.truth.is_some() {
        head.push("rel_error".into());
    }
    head.push("error".into());
    let rows = p
        .columns
        .iter()
        .enumerate()
        .map(|(c, col)| {
            let mut row = vec![c.to_string()];
            match col.result() {
                Some(r) => {
                    let s = r.selected();
                    row.extend([
                        "ok".into(),
                        r.selected_ell.to_string(),
                        r.ell_max.to_string(),
                        num(s.residual_norm),
                        s.termination.to_string(),
                    ]);
                    if let Some(t) = &p.truth {
                        row.push(num(relative_error(&s.profile, &t[c])));
                    }
                    row.push(String::new());
                }
                None => {
                    row.extend(["failed".into(), String::new(), String::new(), String::new(), String::new()]);
                    if p.truth.is_some() {
                        row.push(String::new());
                    }
                    row.push(match &col.outcome {
                        fdem_core::invert::ColumnOutcome::Failed { error } => error.clone(),
                        _ => String::new(),
                    });
                }
            }
            row
        })
        .collect();
    table(head, rows)
}

/// Truth profiles as written by `simulate`: depth columns and one value
/// column per sounding.
pub fn truth_csv(tops: &[f64], midpoints: &[f64], truth: &[Vec<f64>]) -> String {
    let mut head = depth_head();
    head.extend((0..truth.len()).map(|c| format!("col_{c}")));
    let rows = (0..midpoints.len())
        .map(|k| {
            let mut row = vec![k.to_string(), num(tops[k]), num(midpoints[k])];
            row.extend(truth.iter().map(|t| num(t[k])));
            row
        })
        .collect();
    table(head, rows)
}

pub fn read_truth(path: &Path) -> Result<Vec<Vec<f64>>> {
    let bad = |message: String| CliError::Result {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => bad(format!("{other:?}")),
    })?;
    let columns = reader.headers().map_err(|e| bad(e.to_string()))?.len().saturating_sub(3);
    if columns == 0 {
        return Err(bad("no profile columns".into()));
    }
    let mut truth = vec![Vec::new(); columns];
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        for (c, t) in truth.iter_mut().enumerate() {
            let v = record[3 + c]
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("line {line}: `{}` is not a number", &record[3 + c])))?;
            t.push(v);
        }
    }
    Ok(truth)
}

pub fn result_json(p: &Payload) -> String {
    let mut s = serde_json::to_string_pretty(p).expect("payload serializes");
    s.push('\n');
    s
}

pub fn read_payload(path: &Path) -> Result<Payload> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Result {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Write the tables of `p` into `dir`; returns the paths written.
pub fn write_tables(p: &Payload, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(&str, String)> = match p.kind {
        RunKind::Profile => vec![
            ("profiles.csv", profiles_csv(p, 0)),
            ("sweep.csv", sweep_csv(p, 0)),
            ("selected.csv", selected_csv(p, 0)),
            ("fit.csv", fit_csv(p, 0)),
        ],
        RunKind::Section => vec![("section.csv", section_csv(p)), ("columns.csv", columns_csv(p))],
    };
    files.push(("result.json", result_json(p)));
    files.into_iter().map(|(name, text)| write_file(dir, name, &text)).collect()
}

pub fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}
