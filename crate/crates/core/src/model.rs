//! Domain types shared by the forward model and the inversion: the layered
//! soil, the instrument configuration, the ordered data vector and the
//! real stacking of complex residual systems.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnetic permeability of free space, H/m.
pub const MU0: f64 = 4.0e-7 * PI;

/// Layered half-space: `n` layers, the deepest one unbounded below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoilModel {
    sigma: Vec<f64>,
    mu: Vec<f64>,
    thickness: Vec<f64>,
}

impl SoilModel {
    /// `sigma` in S/m, `mu` in H/m (absolute), `thickness` in m with one
    /// entry fewer than the number of layers.
    pub fn new(sigma: Vec<f64>, mu: Vec<f64>, thickness: Vec<f64>) -> Result<Self> {
        let n = sigma.len();
        if n == 0 {
            return Err(Error::invalid("soil.sigma", "at least one layer is required"));
        }
        if mu.len() != n {
            return Err(Error::Dimension(format!(
                "{} conductivities but {} permeabilities",
                n,
                mu.len()
            )));
        }
        if thickness.len() + 1 != n {
            return Err(Error::Dimension(format!(
                "{n} layers need {} thicknesses, got {}",
                n - 1,
                thickness.len()
            )));
        }
        if let Some(k) = sigma.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid(
                format!("soil.sigma[{k}]"),
                format!("conductivity must be finite and >= 0, got {}", sigma[k]),
            ));
        }
        if let Some(k) = mu.iter().position(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::invalid(
                format!("soil.mu[{k}]"),
                format!("permeability must be finite and > 0, got {}", mu[k]),
            ));
        }
        if let Some(k) = thickness.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::invalid(
                format!("soil.d[{k}]"),
                format!("thickness must be finite and > 0, got {}", thickness[k]),
            ));
        }
        Ok(Self { sigma, mu, thickness })
    }

    /// Homogeneous half-space.
    pub fn half_space(sigma: f64, mu: f64) -> Result<Self> {
        Self::new(vec![sigma], vec![mu], Vec::new())
    }

    pub fn layers(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn thickness(&self) -> &[f64] {
        &self.thickness
    }
}

/// Layer thicknesses of the depth discretization used by the inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    thickness: Vec<f64>,
}

impl Discretization {
    /// `n` layers of equal thickness `depth / n`; the last one extends to
    /// infinity, so only the first `n - 1` thicknesses are stored.
    pub fn equal(n: usize, depth: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("soil.layers", "must be >= 1"));
        }
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::invalid("soil.depth", format!("must be > 0, got {depth}")));
        }
        Ok(Self {
            thickness: vec![depth / n as f64; n - 1],
        })
    }

    pub fn from_thickness(thickness: Vec<f64>) -> Result<Self> {
        if let Some(k) = thickness.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::invalid(
                format!("soil.d[{k}]"),
                format!("thickness must be > 0, got {}", thickness[k]),
            ));
        }
        Ok(Self { thickness })
    }

    pub fn layers(&self) -> usize {
        self.thickness.len() + 1
    }

    pub fn thickness(&self) -> &[f64] {
        &self.thickness
    }

    /// Depth of the top of every layer.
    pub fn tops(&self) -> Vec<f64> {
        let mut tops = Vec::with_capacity(self.layers());
        let mut z = 0.0;
        tops.push(z);
        for d in &self.thickness {
            z += d;
            tops.push(z);
        }
        tops
    }

    /// Representative depth of every layer. The unbounded last layer is
    /// given the thickness of the layer above it (or 1 m for a half-space).
    pub fn midpoints(&self) -> Vec<f64> {
        let tops = self.tops();
        let last = self.thickness.last().copied().unwrap_or(1.0);
        tops.iter()
            .enumerate()
            .map(|(k, top)| top + 0.5 * self.thickness.get(k).copied().unwrap_or(last))
            .collect()
    }

    /// Combine with per-layer properties into a soil model.
    pub fn soil(&self, sigma: Vec<f64>, mu: Vec<f64>) -> Result<SoilModel> {
        SoilModel::new(sigma, mu, self.thickness.clone())
    }
}

/// Physical quantity that is differentiated or inverted for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Sigma,
    Mu,
}

impl std::str::FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sigma" => Ok(Quantity::Sigma),
            "mu" => Ok(Quantity::Mu),
            other => Err(Error::invalid("inversion.unknown", format!("expected sigma or mu, got `{other}`"))),
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantity::Sigma => "sigma",
            Quantity::Mu => "mu",
        })
    }
}

/// Coil orientation of a single reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coil {
    Vertical,
    Horizontal,
}

impl Coil {
    pub fn letter(self) -> char {
        match self {
            Coil::Vertical => 'V',
            Coil::Horizontal => 'H',
        }
    }
}

/// Orientations acquired by the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Vertical,
    Horizontal,
    Both,
}

impl Orientation {
    pub fn coils(self) -> &'static [Coil] {
        match self {
            Orientation::Vertical => &[Coil::Vertical],
            Orientation::Horizontal => &[Coil::Horizontal],
            Orientation::Both => &[Coil::Vertical, Coil::Horizontal],
        }
    }
}

impl std::str::FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vertical" | "v" => Ok(Orientation::Vertical),
            "horizontal" | "h" => Ok(Orientation::Horizontal),
            "both" => Ok(Orientation::Both),
            other => Err(Error::invalid(
                "device.orientation",
                format!("expected vertical, horizontal or both, got `{other}`"),
            )),
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Vertical => "vertical",
            Orientation::Horizontal => "horizontal",
            Orientation::Both => "both",
        })
    }
}

/// Which part of the field ratio a reading carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Component {
    Complex,
    InPhase,
    Quadrature,
    ApparentConductivity,
}

impl Component {
    pub fn is_complex(self) -> bool {
        matches!(self, Component::Complex)
    }
}

impl std::str::FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "complex" => Ok(Component::Complex),
            "inphase" | "in-phase" => Ok(Component::InPhase),
            "quadrature" => Ok(Component::Quadrature),
            "apparent-conductivity" | "aconduct" => Ok(Component::ApparentConductivity),
            other => Err(Error::invalid(
                "device.component",
                format!("unknown component `{other}`"),
            )),
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Component::Complex => "complex",
            Component::InPhase => "inphase",
            Component::Quadrature => "quadrature",
            Component::ApparentConductivity => "apparent-conductivity",
        })
    }
}

/// Instrument geometry and excitation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    /// Inter-coil distances, m.
    pub rho: Vec<f64>,
    /// Heights above ground, m.
    pub height: Vec<f64>,
    /// Angular frequencies, rad/s.
    pub omega: Vec<f64>,
    pub orientation: Orientation,
    pub component: Component,
    /// Weight of the in-phase rows in the stacked real system.
    pub beta: f64,
}

impl DeviceConfig {
    pub fn new(rho: Vec<f64>, height: Vec<f64>, omega: Vec<f64>, orientation: Orientation) -> Result<Self> {
        let device = Self {
            rho,
            height,
            omega,
            orientation,
            component: Component::Complex,
            beta: 1.0,
        };
        device.validate()?;
        Ok(device)
    }

    /// Build from frequencies in Hz.
    pub fn from_hz(rho: Vec<f64>, height: Vec<f64>, freq_hz: &[f64], orientation: Orientation) -> Result<Self> {
        Self::new(rho, height, freq_hz.iter().map(|f| 2.0 * PI * f).collect(), orientation)
    }

    pub fn with_component(mut self, component: Component) -> Self {
        self.component = component;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        self.beta = beta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        fn check(field: &str, values: &[f64], ok: impl Fn(f64) -> bool, what: &str) -> Result<()> {
            if values.is_empty() {
                return Err(Error::invalid(field, "at least one value is required"));
            }
            match values.iter().find(|v| !(v.is_finite() && ok(**v))) {
                Some(v) => Err(Error::invalid(field, format!("{what}, got {v}"))),
                None => Ok(()),
            }
        }
        check("device.rho", &self.rho, |v| v > 0.0, "distances must be > 0")?;
        check("device.h", &self.height, |v| v >= 0.0, "heights must be >= 0")?;
        check("device.omega", &self.omega, |v| v > 0.0, "frequencies must be > 0")?;
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::invalid("device.beta", format!("must be > 0, got {}", self.beta)));
        }
        Ok(())
    }

    pub fn grid(&self) -> DataGrid {
        DataGrid {
            coils: self.orientation.coils().to_vec(),
            m_rho: self.rho.len(),
            m_h: self.height.len(),
            m_omega: self.omega.len(),
        }
    }

    /// Number of complex readings.
    pub fn readings(&self) -> usize {
        self.grid().len()
    }
}

/// Position of one reading in the acquisition grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexTuple {
    pub coil: Coil,
    /// Inter-coil distance index.
    pub t: usize,
    /// Height index.
    pub i: usize,
    /// Frequency index.
    pub j: usize,
}

impl fmt::Display for IndexTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, rho #{}, h #{}, freq #{})", self.coil.letter(), self.t, self.i, self.j)
    }
}

/// Shape of the acquisition grid. Readings are ordered with the
/// orientation slowest, then distance, then height, then frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataGrid {
    pub coils: Vec<Coil>,
    pub m_rho: usize,
    pub m_h: usize,
    pub m_omega: usize,
}

impl DataGrid {
    pub fn len(&self) -> usize {
        self.coils.len() * self.m_rho * self.m_h * self.m_omega
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear position of a tuple, or `None` when it lies outside the grid.
    pub fn position(&self, tuple: IndexTuple) -> Option<usize> {
        let nu = self.coils.iter().position(|c| *c == tuple.coil)?;
        if tuple.t >= self.m_rho || tuple.i >= self.m_h || tuple.j >= self.m_omega {
            return None;
        }
        Some(((nu * self.m_rho + tuple.t) * self.m_h + tuple.i) * self.m_omega + tuple.j)
    }

    /// All tuples in storage order.
    pub fn tuples(&self) -> Vec<IndexTuple> {
        let mut out = Vec::with_capacity(self.len());
        for &coil in &self.coils {
            for t in 0..self.m_rho {
                for i in 0..self.m_h {
                    for j in 0..self.m_omega {
                        out.push(IndexTuple { coil, t, i, j });
                    }
                }
            }
        }
        out
    }
}

/// Ordered measurement (or prediction) vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataVector {
    pub values: Vec<Complex64>,
    pub index_map: Vec<IndexTuple>,
    /// What the values represent; for real-valued components the imaginary
    /// parts are zero.
    pub component: Component,
}

impl DataVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Inverse of [`pack_data_vector`].
    pub fn unpack(&self) -> Vec<(IndexTuple, Complex64)> {
        self.index_map.iter().copied().zip(self.values.iter().copied()).collect()
    }

    /// Keep only the listed rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| **r >= self.len()) {
            return Err(Error::invalid("inversion.yrows", format!("row {r} out of range 0..{}", self.len())));
        }
        Ok(Self {
            values: rows.iter().map(|&r| self.values[r]).collect(),
            index_map: rows.iter().map(|&r| self.index_map[r]).collect(),
            component: self.component,
        })
    }

    /// Real observation vector: `[beta Re; Im]` for complex data, the real
    /// parts alone otherwise.
    pub fn stacked(&self, beta: f64) -> DVector<f64> {
        if self.component.is_complex() {
            stack_vector(&self.values, beta)
        } else {
            DVector::from_iterator(self.len(), self.values.iter().map(|v| v.re))
        }
    }
}

/// Arrange raw readings in the canonical order of `grid`.
pub fn pack_data_vector(raw: &[(IndexTuple, Complex64)], grid: &DataGrid, component: Component) -> Result<DataVector> {
    let mut slots: Vec<Option<Complex64>> = vec![None; grid.len()];
    for &(tuple, value) in raw {
        let k = grid
            .position(tuple)
            .ok_or_else(|| Error::GridIncomplete(format!("reading {tuple} lies outside the acquisition grid")))?;
        if slots[k].replace(value).is_some() {
            return Err(Error::GridIncomplete(format!("duplicate reading for {tuple}")));
        }
    }
    let tuples = grid.tuples();
    let values = slots
        .into_iter()
        .zip(&tuples)
        .map(|(v, t)| v.ok_or_else(|| Error::missing_tuple(*t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DataVector {
        values,
        index_map: tuples,
        component,
    })
}

/// Lookup table from tuple to linear position.
pub fn index_lookup(data: &DataVector) -> HashMap<IndexTuple, usize> {
    data.index_map.iter().enumerate().map(|(k, t)| (*t, k)).collect()
}

/// Real form of a complex residual system.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSystem {
    pub r_tilde: DVector<f64>,
    pub j_tilde: DMatrix<f64>,
}

/// `[beta Re(r); Im(r)]`.
pub fn stack_vector(r: &[Complex64], beta: f64) -> DVector<f64> {
    let m = r.len();
    DVector::from_fn(2 * m, |k, _| if k < m { beta * r[k].re } else { r[k - m].im })
}

/// `[beta Re(J); Im(J)]`.
pub fn stack_matrix(j: &DMatrix<Complex64>, beta: f64) -> DMatrix<f64> {
    let m = j.nrows();
    DMatrix::from_fn(2 * m, j.ncols(), |r, c| if r < m { beta * j[(r, c)].re } else { j[(r - m, c)].im })
}

pub fn stack_real(r: &[Complex64], j: &DMatrix<Complex64>, beta: f64) -> Result<StackedSystem> {
    if j.nrows() != r.len() {
        return Err(Error::Dimension(format!(
            "residual has {} rows but Jacobian has {}",
            r.len(),
            j.nrows()
        )));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::invalid("device.beta", format!("must be > 0, got {beta}")));
    }
    Ok(StackedSystem {
        r_tilde: stack_vector(r, beta),
        j_tilde: stack_matrix(j, beta),
    })
}
