//! Dataset files: a `# key = value` header describing the acquisition grid,
//! then one CSV row per reading with a real and an imaginary column per
//! sounding.
//!
//! ```text
//! # fdem dataset
//! # rho_m = 4
//! # h_m = 0.1
//! # freq_hz = 500, 2000, 8000
//! # orientation = both
//! # component = complex
//! # beta = 1
//! # columns = 2
//! coil,rho_index,h_index,freq_index,re_0,im_0,re_1,im_1
//! V,0,0,0,1.5e-5,3.1e-4,1.4e-5,2.9e-4
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use fdem_core::model::{pack_data_vector, Coil, Component, DataVector, DeviceConfig, IndexTuple, Orientation};
use num_complex::Complex64;
use thiserror::Error;

use crate::error::{CliError, Result};

const FIXED_COLUMNS: [&str; 4] = ["coil", "rho_index", "h_index", "freq_index"];
const RESERVED: [&str; 7] = ["rho_m", "h_m", "freq_hz", "orientation", "component", "beta", "columns"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Header { line: usize, message: String },

    #[error("line {line}, column {column}: {message}")]
    Cell { line: usize, column: usize, message: String },

    #[error("{0}")]
    Grid(String),

    #[error("invalid device: {0}")]
    Device(String),
}

/// One or more soundings acquired on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rho: Vec<f64>,
    pub height: Vec<f64>,
    /// Frequencies as written in the file, Hz.
    pub freq_hz: Vec<f64>,
    pub orientation: Orientation,
    pub component: Component,
    pub beta: f64,
    /// Soundings in canonical grid order.
    pub columns: Vec<DataVector>,
    /// Extra header entries (e.g. the generating seed), written in key order.
    pub meta: BTreeMap<String, String>,
}

impl Dataset {
    /// Wrap soundings predicted for `device`, whose frequencies are `freq_hz`.
    pub fn from_columns(device: &DeviceConfig, freq_hz: &[f64], columns: Vec<DataVector>) -> Result<Self, DatasetError> {
        let dataset = Dataset {
            rho: device.rho.clone(),
            height: device.height.clone(),
            freq_hz: freq_hz.to_vec(),
            orientation: device.orientation,
            component: device.component,
            beta: device.beta,
            columns,
            meta: BTreeMap::new(),
        };
        dataset.check()?;
        Ok(dataset)
    }

    pub fn device(&self) -> Result<DeviceConfig, DatasetError> {
        DeviceConfig::from_hz(self.rho.clone(), self.height.clone(), &self.freq_hz, self.orientation)
            .and_then(|d| d.with_component(self.component).with_beta(self.beta))
            .map_err(|e| DatasetError::Device(e.to_string()))
    }

    fn check(&self) -> Result<(), DatasetError> {
        let tuples = self.device()?.grid().tuples();
        if self.columns.is_empty() {
            return Err(DatasetError::Grid("dataset has no columns".into()));
        }
        for (c, col) in self.columns.iter().enumerate() {
            if col.index_map != tuples {
                return Err(DatasetError::Grid(format!("column {c} is not in canonical grid order")));
            }
            if col.component != self.component {
                return Err(DatasetError::Grid(format!("column {c} carries {} readings", col.component)));
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|source| CliError::Dataset {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| CliError::io(path, e))
    }

    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut out = String::from("# fdem dataset\n");
        let mut entry = |k: &str, v: String| out.push_str(&format!("# {k} = {v}\n"));
        entry("rho_m", list(&self.rho));
        entry("h_m", list(&self.height));
        entry("freq_hz", list(&self.freq_hz));
        entry("orientation", self.orientation.to_string());
        entry("component", self.component.to_string());
        entry("beta", self.beta.to_string());
        entry("columns", self.columns.len().to_string());
        for (k, v) in &self.meta {
            entry(k, v.clone());
        }

        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
        for c in 0..self.columns.len() {
            head.push(format!("re_{c}"));
            head.push(format!("im_{c}"));
        }
        w.write_record(&head).expect("in-memory write");
        for (k, t) in self.columns[0].index_map.iter().enumerate() {
            let mut rec = vec![t.coil.letter().to_string(), t.t.to_string(), t.i.to_string(), t.j.to_string()];
            for col in &self.columns {
                rec.push(format!("{:e}", col.values[k].re));
                rec.push(format!("{:e}", col.values[k].im));
            }
            w.write_record(&rec).expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output"));
        out
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut header: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut table_line = None;
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((key, value)) = rest.split_once('=') {
                    let key = key.trim().to_string();
                    if header.insert(key.clone(), (k + 1, value.trim().to_string())).is_some() {
                        return Err(DatasetError::Header {
                            line: k + 1,
                            message: format!("duplicate key `{key}`"),
                        });
                    }
                }
            } else if !line.is_empty() && table_line.is_none() {
                table_line = Some(k + 1);
            }
        }
        let end = text.lines().count() + 1;
        let get = |key: &str| {
            header.get(key).cloned().ok_or_else(|| DatasetError::Header {
                line: table_line.unwrap_or(end),
                message: format!("missing header key `{key}`"),
            })
        };
        let floats = |key: &str| -> Result<Vec<f64>, DatasetError> {
            let (line, value) = get(key)?;
            value
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| DatasetError::Header {
                        line,
                        message: format!("`{key}`: `{}` is not a number", s.trim()),
                    })
                })
                .collect()
        };
        let parsed = |key: &str| -> Result<(usize, String), DatasetError> { get(key) };
        let header_err = |line: usize, message: String| DatasetError::Header { line, message };

        let rho = floats("rho_m")?;
        let height = floats("h_m")?;
        let freq_hz = floats("freq_hz")?;
        let (line, v) = parsed("orientation")?;
        let orientation: Orientation = v.parse().map_err(|e: fdem_core::Error| header_err(line, e.to_string()))?;
        let (line, v) = parsed("component")?;
        let component: Component = v.parse().map_err(|e: fdem_core::Error| header_err(line, e.to_string()))?;
        let beta = match header.get("beta") {
            Some((line, v)) => v
                .parse::<f64>()
                .map_err(|_| header_err(*line, format!("`beta`: `{v}` is not a number")))?,
            None => 1.0,
        };
        let (line, v) = parsed("columns")?;
        let ncols: usize = v
            .parse()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| header_err(line, format!("`columns` must be a positive integer, got `{v}`")))?;
        let meta = header
            .iter()
            .filter(|(k, _)| !RESERVED.contains(&k.as_str()))
            .map(|(k, (_, v))| (k.clone(), v.clone()))
            .collect();

        let device = DeviceConfig::from_hz(rho.clone(), height.clone(), &freq_hz, orientation)
            .and_then(|d| d.with_component(component).with_beta(beta))
            .map_err(|e| DatasetError::Device(e.to_string()))?;
        let grid = device.grid();

        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let table_line = table_line.unwrap_or(end);
        let names = reader.headers().map_err(|e| header_err(table_line, e.to_string()))?.clone();
        let mut expected: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
        for c in 0..ncols {
            expected.push(format!("re_{c}"));
            expected.push(format!("im_{c}"));
        }
        if names.iter().collect::<Vec<_>>() != expected {
            return Err(header_err(
                table_line,
                format!("expected columns `{}`, got `{}`", expected.join(","), names.iter().collect::<Vec<_>>().join(",")),
            ));
        }

        let mut raw: Vec<Vec<(IndexTuple, Complex64)>> = vec![Vec::new(); ncols];
        for record in reader.records() {
            let record = record.map_err(|e| DatasetError::Grid(e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != expected.len() {
                return Err(DatasetError::Cell {
                    line,
                    column: record.len().min(expected.len()) + 1,
                    message: format!("expected {} fields, got {}", expected.len(), record.len()),
                });
            }
            let cell = |column: usize, message: String| DatasetError::Cell {
                line,
                column: column + 1,
                message,
            };
            let coil = match &record[0] {
                "V" | "v" => Coil::Vertical,
                "H" | "h" => Coil::Horizontal,
                other => return Err(cell(0, format!("coil must be V or H, got `{other}`"))),
            };
            let index = |c: usize| {
                record[c]
                    .parse::<usize>()
                    .map_err(|_| cell(c, format!("`{}` is not an index", &record[c])))
            };
            let tuple = IndexTuple {
                coil,
                t: index(1)?,
                i: index(2)?,
                j: index(3)?,
            };
            for (c, readings) in raw.iter_mut().enumerate() {
                let value = |k: usize| {
                    record[k]
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| cell(k, format!("`{}` is not a finite number", &record[k])))
                };
                let (re, im) = (value(4 + 2 * c)?, value(5 + 2 * c)?);
                if !component.is_complex() && im != 0.0 {
                    return Err(cell(5 + 2 * c, format!("{component} readings have no imaginary part")));
                }
                readings.push((tuple, Complex64::new(re, im)));
            }
        }
        let columns = raw
            .iter()
            .map(|r| pack_data_vector(r, &grid, component).map_err(|e| DatasetError::Grid(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;

        Ok(Dataset {
            rho,
            height,
            freq_hz,
            orientation,
            component,
            beta,
            columns,
            meta,
        })
    }
}
