//! TOML run configuration. Every section is optional; missing keys take the
//! defaults of the synthetic instrument and column.

use std::path::Path;

use fdem_core::synthetic::{
    blocky_profile, bump_profile, conductor_depths, conductor_profile, DRIVER_DEPTH, DRIVER_FREQUENCIES,
    DRIVER_HEIGHT, DRIVER_LAYERS, DRIVER_RHO,
};
use fdem_core::{Component, DeviceConfig, Discretization, InversionOptions, Orientation, Quantity, MU0};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed of the noise added to synthetic data; column `c` uses `seed + c`.
    pub seed: u64,
    pub soil: SoilConfig,
    pub device: DeviceSection,
    pub truth: TruthConfig,
    pub inversion: InversionOptions,
    pub output: OutputConfig,
}

/// Depth discretization: `layers` equal layers down to `depth`, or explicit
/// thicknesses `d` (one fewer than the layers; the last layer is unbounded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoilConfig {
    pub layers: usize,
    pub depth: f64,
    pub d: Option<Vec<f64>>,
}

impl Default for SoilConfig {
    fn default() -> Self {
        Self {
            layers: DRIVER_LAYERS,
            depth: DRIVER_DEPTH,
            d: None,
        }
    }
}

impl SoilConfig {
    pub fn discretization(&self) -> Result<Discretization> {
        match &self.d {
            Some(d) => Ok(Discretization::from_thickness(d.clone())?),
            None => Ok(Discretization::equal(self.layers, self.depth)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    /// Inter-coil distances, m.
    pub rho: Vec<f64>,
    /// Heights, m.
    pub h: Vec<f64>,
    pub freq_hz: Vec<f64>,
    pub orientation: Orientation,
    pub component: Component,
    pub beta: f64,
}

impl Default for DeviceSection {
    fn default() -> Self {
        Self {
            rho: vec![DRIVER_RHO],
            h: vec![DRIVER_HEIGHT],
            freq_hz: DRIVER_FREQUENCIES.to_vec(),
            orientation: Orientation::Both,
            component: Component::Complex,
            beta: 1.0,
        }
    }
}

impl DeviceSection {
    pub fn device(&self) -> Result<DeviceConfig> {
        Ok(DeviceConfig::from_hz(self.rho.clone(), self.h.clone(), &self.freq_hz, self.orientation)?
            .with_component(self.component)
            .with_beta(self.beta)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthKind {
    /// Smooth conductive bump centred at 1.2 m.
    Bump,
    /// Slab of `slab` between `top` and `bottom` in a `background`.
    Blocky,
    /// Gaussian conductor whose depth runs from `depth_from` to `depth_to`
    /// across the columns.
    Conductor,
    /// Explicit per-layer `values` (one value means a constant profile).
    Values,
}

/// Model used to synthesize data. Shapes are conductivities in S/m; when
/// inverting for permeability the same shape `s` gives `mu = MU0 (1 + s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthConfig {
    pub kind: TruthKind,
    pub columns: usize,
    pub background: f64,
    pub slab: f64,
    pub top: f64,
    pub bottom: f64,
    pub depth_from: f64,
    pub depth_to: f64,
    pub values: Option<Vec<f64>>,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            kind: TruthKind::Bump,
            columns: 1,
            background: 0.05,
            slab: 0.2,
            top: 0.8,
            bottom: 1.6,
            depth_from: 0.6,
            depth_to: 1.6,
            values: None,
        }
    }
}

impl TruthConfig {
    /// One profile of the unknown quantity per column.
    pub fn profiles(&self, disc: &Discretization, unknown: Quantity) -> Result<Vec<Vec<f64>>> {
        if self.columns == 0 {
            return Err(invalid("truth.columns", "must be >= 1"));
        }
        let n = disc.layers();
        let shapes: Vec<Vec<f64>> = match self.kind {
            TruthKind::Bump => vec![bump_profile(disc); self.columns],
            TruthKind::Blocky => {
                if !(self.top < self.bottom) {
                    return Err(invalid("truth.bottom", "must lie below truth.top"));
                }
                vec![blocky_profile(disc, self.background, self.slab, self.top, self.bottom); self.columns]
            }
            TruthKind::Conductor => conductor_depths(self.columns, self.depth_from, self.depth_to)
                .into_iter()
                .map(|z| conductor_profile(disc, z))
                .collect(),
            TruthKind::Values => {
                let v = self
                    .values
                    .as_ref()
                    .ok_or_else(|| invalid("truth.values", "required when truth.kind = \"values\""))?;
                let profile = match v.len() {
                    1 => vec![v[0]; n],
                    len if len == n => v.clone(),
                    len => return Err(invalid("truth.values", format!("has {len} entries, expected 1 or {n}"))),
                };
                vec![profile; self.columns]
            }
        };
        Ok(match unknown {
            Quantity::Sigma => shapes,
            Quantity::Mu => shapes
                .into_iter()
                .map(|s| s.into_iter().map(|v| MU0 * (1.0 + v)).collect())
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write SVG figures next to the tables.
    pub plots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { plots: true }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Config(format!("`{field}`: {}", reason.into()))
}

impl RunConfig {
    /// Read `path` (or start from the defaults) and apply `key=value`
    /// overrides, e.g. `inversion.reg_order=1` or `device.freq_hz=[1000,5000]`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.soil.discretization()?;
        self.device.device()?;
        self.inversion.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{item}` is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override `{item}` has an empty key")));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = path.split_last().expect("non-empty key");
    let mut node = table;
    for (depth, part) in parents.iter().enumerate() {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{}` is not a table", path[..=depth].join("."))))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
