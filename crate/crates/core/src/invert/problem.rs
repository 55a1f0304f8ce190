use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forward::{self, component_weights};
use crate::jacobian::{jacobian_fd, JacobianMethod, JacobianRequest};
use crate::model::{stack_matrix, stack_vector, DataVector, DeviceConfig, Discretization, Quantity, SoilModel};

/// Real least-squares problem `min ||r(x)||`, `r = b - M(x)` in stacked form.
pub trait Problem: Sync {
    fn unknowns(&self) -> usize;

    fn residual(&self, x: &[f64]) -> Result<DVector<f64>>;

    /// Residual and its Jacobian `dr/dx` at `x`.
    fn linearize(&self, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)>;

    /// Exact refresh period when the Jacobian is carried by Broyden updates.
    fn broyden_interval(&self) -> Option<usize> {
        None
    }
}

/// `r(x) = b - A x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProblem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Problem for LinearProblem {
    fn unknowns(&self) -> usize {
        self.a.ncols()
    }

    fn residual(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.a.ncols() {
            return Err(Error::Dimension(format!("{} unknowns, matrix has {} columns", x.len(), self.a.ncols())));
        }
        Ok(&self.b - &self.a * DVector::from_column_slice(x))
    }

    fn linearize(&self, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        Ok((self.residual(x)?, -&self.a))
    }
}

/// Field-ratio misfit for one sounding, one quantity inverted and the other
/// held fixed.
#[derive(Debug, Clone)]
pub struct FdemProblem {
    device: DeviceConfig,
    thickness: Vec<f64>,
    fixed: Vec<f64>,
    wrt: Quantity,
    jacobian: JacobianRequest,
    rows: Option<Vec<usize>>,
    data: DataVector,
    observed: DVector<f64>,
}

impl FdemProblem {
    /// `data` must hold every reading of `device` in canonical order; `rows`
    /// restricts the fit to a subset of them.
    pub fn new(
        data: &DataVector,
        device: &DeviceConfig,
        discretization: &Discretization,
        wrt: Quantity,
        fixed: Vec<f64>,
        jacobian: JacobianRequest,
        rows: Option<Vec<usize>>,
    ) -> Result<Self> {
        device.validate()?;
        jacobian.validate()?;
        let grid = device.grid();
        if data.len() != grid.len() || data.index_map != grid.tuples() {
            return Err(Error::Dimension(format!(
                "data has {} readings, device acquires {}",
                data.len(),
                grid.len()
            )));
        }
        if fixed.len() != discretization.layers() {
            return Err(Error::Dimension(format!(
                "fixed profile has {} entries for {} layers",
                fixed.len(),
                discretization.layers()
            )));
        }
        let data = match &rows {
            Some(r) => {
                if r.is_empty() {
                    return Err(Error::invalid("inversion.yrows", "selects no rows"));
                }
                data.select(r)?
            }
            None => data.clone(),
        };
        if data.values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::invalid("data", "contains non-finite readings"));
        }
        let observed = data.stacked(device.beta);
        Ok(Self {
            device: device.clone(),
            thickness: discretization.thickness().to_vec(),
            fixed,
            wrt,
            jacobian,
            rows,
            data,
            observed,
        })
    }

    pub fn soil(&self, x: &[f64]) -> Result<SoilModel> {
        match self.wrt {
            Quantity::Sigma => SoilModel::new(x.to_vec(), self.fixed.clone(), self.thickness.clone()),
            Quantity::Mu => SoilModel::new(self.fixed.clone(), x.to_vec(), self.thickness.clone()),
        }
    }

    pub fn observed(&self) -> &DVector<f64> {
        &self.observed
    }

    /// Rows `rows` of `v`, or all of them.
    fn pick<T: Copy>(&self, v: &[T]) -> Vec<T> {
        match &self.rows {
            Some(r) => r.iter().map(|&k| v[k]).collect(),
            None => v.to_vec(),
        }
    }

    /// Stacked model prediction for the fitted rows.
    pub fn predict(&self, x: &[f64]) -> Result<DVector<f64>> {
        let m = forward::hratio(&self.soil(x)?, &self.device)?;
        Ok(self.stack_prediction(&self.pick(&m.values)))
    }

    fn stack_prediction(&self, m: &[Complex64]) -> DVector<f64> {
        match self.real_weights() {
            None => stack_vector(m, self.device.beta),
            Some(w) => DVector::from_iterator(m.len(), m.iter().zip(&w).map(|(v, (a, b))| a * v.re + b * v.im)),
        }
    }

    fn real_weights(&self) -> Option<Vec<(f64, f64)>> {
        if self.data.component.is_complex() {
            return None;
        }
        Some(
            self.data
                .index_map
                .iter()
                .map(|t| {
                    component_weights(self.data.component, self.device.rho[t.t], self.device.omega[t.j])
                        .expect("real component")
                })
                .collect(),
        )
    }

    fn exact(&self, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (m, j) = forward::hratio_with_jacobian(&self.soil(x)?, &self.device, self.wrt)?;
        let values = self.pick(&m.values);
        let j = match &self.rows {
            Some(r) => j.select_rows(r.iter()),
            None => j,
        };
        let jm = match self.real_weights() {
            None => stack_matrix(&j, self.device.beta),
            Some(w) => DMatrix::from_fn(j.nrows(), j.ncols(), |r, c| w[r].0 * j[(r, c)].re + w[r].1 * j[(r, c)].im),
        };
        Ok((&self.observed - self.stack_prediction(&values), -jm))
    }
}

impl Problem for FdemProblem {
    fn unknowns(&self) -> usize {
        self.thickness.len() + 1
    }

    fn residual(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(&self.observed - self.predict(x)?)
    }

    fn linearize(&self, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        match self.jacobian.method {
            JacobianMethod::Exact | JacobianMethod::Broyden => self.exact(x),
            JacobianMethod::FiniteDifference => {
                let r = self.residual(x)?;
                let j = jacobian_fd(|p: &[f64]| Ok(self.residual(p)?.as_slice().to_vec()), x, self.jacobian.fd_step)?;
                Ok((r, j))
            }
        }
    }

    fn broyden_interval(&self) -> Option<usize> {
        (self.jacobian.method == JacobianMethod::Broyden).then_some(self.jacobian.broyden_interval)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Component, Orientation, MU0};

    fn setup(component: Component) -> (FdemProblem, Vec<f64>) {
        let disc = Discretization::equal(6, 1.5).unwrap();
        let device = DeviceConfig::from_hz(vec![1.0], vec![0.3], &[5e3, 2e4], Orientation::Both)
            .unwrap()
            .with_component(component);
        let truth = vec![0.1, 0.3, 0.2, 0.05, 0.05, 0.1];
        let soil = disc.soil(truth.clone(), vec![MU0; 6]).unwrap();
        let m = forward::hratio(&soil, &device).unwrap();
        let data = forward::signal_component(&m, component, &device).unwrap();
        let p = FdemProblem::new(
            &data,
            &device,
            &disc,
            Quantity::Sigma,
            vec![MU0; 6],
            JacobianRequest::default(),
            None,
        )
        .unwrap();
        (p, truth)
    }

    #[test]
    fn residual_vanishes_at_truth() {
        for c in [Component::Complex, Component::Quadrature, Component::ApparentConductivity] {
            let (p, truth) = setup(c);
            assert_eq!(p.residual(&truth).unwrap().amax(), 0.0, "{c}");
        }
    }

    #[test]
    fn residual_jacobian_is_negated_stacked_sensitivity() {
        let (p, truth) = setup(Component::Complex);
        let soil = p.soil(&truth).unwrap();
        let (_, jm) = forward::hratio_with_jacobian(&soil, &p.device, Quantity::Sigma).unwrap();
        let (_, jr) = p.linearize(&truth).unwrap();
        assert_eq!(jr, -stack_matrix(&jm, 1.0));
    }

    #[test]
    fn real_component_jacobian_matches_differences() {
        let (p, truth) = setup(Component::ApparentConductivity);
        let x: Vec<f64> = truth.iter().map(|v| v * 1.3).collect();
        let (_, j) = p.linearize(&x).unwrap();
        let fd = jacobian_fd(|q: &[f64]| Ok(p.residual(q).unwrap().as_slice().to_vec()), &x, 1e-6).unwrap();
        assert!((&j - &fd).amax() <= 1e-4 * j.amax());
    }
}
