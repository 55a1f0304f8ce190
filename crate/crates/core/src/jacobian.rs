//! Sensitivities of the field ratios with respect to the layer conductivities
//! or permeabilities: exact (differentiated recursion), forward differences,
//! and rank-one Broyden updates between exact refreshes.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward;
use crate::model::{DeviceConfig, Quantity, SoilModel};

/// Smallest magnitude used to scale a forward-difference step.
pub const FD_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianMethod {
    Exact,
    FiniteDifference,
    Broyden,
}

impl std::str::FromStr for JacobianMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" | "analytic" => Ok(JacobianMethod::Exact),
            "fd" | "finite-difference" => Ok(JacobianMethod::FiniteDifference),
            "broyden" => Ok(JacobianMethod::Broyden),
            other => Err(Error::invalid("inversion.jacobian", format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacobianRequest {
    pub wrt: Quantity,
    pub method: JacobianMethod,
    /// Relative forward-difference step.
    pub fd_step: f64,
    /// Exact refresh period, in iterations, when `method` is Broyden.
    pub broyden_interval: usize,
}

impl Default for JacobianRequest {
    fn default() -> Self {
        Self {
            wrt: Quantity::Sigma,
            method: JacobianMethod::Exact,
            fd_step: 1e-6,
            broyden_interval: 5,
        }
    }
}

impl JacobianRequest {
    pub fn validate(&self) -> Result<()> {
        if !(self.fd_step.is_finite() && self.fd_step > 0.0) {
            return Err(Error::invalid("inversion.fd_step", format!("must be > 0, got {}", self.fd_step)));
        }
        if self.broyden_interval == 0 {
            return Err(Error::invalid("inversion.broyden_interval", "must be >= 1"));
        }
        Ok(())
    }
}

/// `dM_i / dx_k` for every reading `i` and layer `k`, exact to rounding.
pub fn jacobian_exact(soil: &SoilModel, device: &DeviceConfig, wrt: Quantity) -> Result<DMatrix<Complex64>> {
    forward::hratio_with_jacobian(soil, device, wrt).map(|(_, j)| j)
}

/// Forward-difference Jacobian of `f` at `x`:
/// column `k` is `(f(x + h_k e_k) - f(x)) / h_k`, `h_k = step * max(|x_k|, FD_FLOOR)`.
pub fn jacobian_fd<T, F>(f: F, x: &[f64], step: f64) -> Result<DMatrix<T>>
where
    T: nalgebra::Scalar + Copy + std::ops::Sub<Output = T> + std::ops::Div<f64, Output = T>,
    F: Fn(&[f64]) -> Result<Vec<T>>,
{
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::invalid("inversion.fd_step", format!("must be > 0, got {step}")));
    }
    let f0 = f(x)?;
    let mut columns = Vec::with_capacity(x.len() * f0.len());
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        let h = step * x[k].abs().max(FD_FLOOR);
        xp[k] = x[k] + h;
        let fk = f(&xp).map_err(|e| Error::PerturbedColumn {
            column: k,
            source: Box::new(e),
        })?;
        if fk.len() != f0.len() {
            return Err(Error::Dimension(format!(
                "model returned {} values at column {k}, expected {}",
                fk.len(),
                f0.len()
            )));
        }
        // divide by the step actually taken
        let taken = xp[k] - x[k];
        columns.extend(fk.iter().zip(&f0).map(|(a, b)| (*a - *b) / taken));
        xp[k] = x[k];
    }
    Ok(DMatrix::from_column_slice(f0.len(), x.len(), &columns))
}

/// Result of a Broyden rank-one update.
#[derive(Debug, Clone, PartialEq)]
pub struct BroydenUpdate {
    pub matrix: DMatrix<f64>,
    /// The step was zero and the matrix was returned unchanged.
    pub skipped: bool,
}

/// `J + (y - J s) s^T / (s^T s)`.
pub fn broyden_update(j: &DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) -> Result<BroydenUpdate> {
    if j.ncols() != s.len() || j.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "Jacobian is {}x{}, step {} and residual change {}",
            j.nrows(),
            j.ncols(),
            s.len(),
            y.len()
        )));
    }
    let ss = s.norm_squared();
    if ss == 0.0 {
        return Ok(BroydenUpdate {
            matrix: j.clone(),
            skipped: true,
        });
    }
    let defect = y - j * s;
    Ok(BroydenUpdate {
        matrix: j + defect * s.transpose() / ss,
        skipped: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Orientation, MU0};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn device() -> DeviceConfig {
        DeviceConfig::from_hz(vec![1.0, 1.66], vec![0.0, 0.5], &[2e3, 3e4], Orientation::Both).unwrap()
    }

    fn model_fn<'a>(
        fixed: &'a SoilModel,
        device: &'a DeviceConfig,
        wrt: Quantity,
    ) -> impl Fn(&[f64]) -> Result<Vec<Complex64>> + 'a {
        move |x: &[f64]| {
            let soil = match wrt {
                Quantity::Sigma => SoilModel::new(x.to_vec(), fixed.mu().to_vec(), fixed.thickness().to_vec())?,
                Quantity::Mu => SoilModel::new(fixed.sigma().to_vec(), x.to_vec(), fixed.thickness().to_vec())?,
            };
            Ok(forward::hratio(&soil, device)?.values)
        }
    }

    #[test]
    fn zero_contrast_mu_columns_are_finite() {
        let soil = SoilModel::new(vec![0.0; 3], vec![MU0; 3], vec![0.4, 0.4]).unwrap();
        let j = jacobian_exact(&soil, &device(), Quantity::Mu).unwrap();
        assert!(j.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        assert!(j.iter().any(|z| z.norm() > 0.0));
    }

    #[test]
    fn fd_of_linear_map_is_exact() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.25, -1.0]);
        let f = |x: &[f64]| Ok((&a * DVector::from_column_slice(x)).as_slice().to_vec());
        let j = jacobian_fd(f, &[0.5, 1.0, 2.0], 1e-6).unwrap();
        assert!((j - &a).abs().max() < 1e-9);
    }

    #[test]
    fn fd_of_square() {
        let j = jacobian_fd(|x: &[f64]| Ok(vec![x[0] * x[0]]), &[2.0], 1e-6).unwrap();
        assert!((j[(0, 0)] - 4.0).abs() < 1e-5);
    }

    #[test]
    fn fd_reports_failing_column() {
        let err = jacobian_fd(
            |x: &[f64]| {
                if x[1] > 1.0 {
                    Err(Error::Dimension("boom".into()))
                } else {
                    Ok(vec![x[0]])
                }
            },
            &[1.0, 1.0],
            1e-6,
        )
        .unwrap_err();
        assert!(matches!(err, Error::PerturbedColumn { column: 1, .. }));
    }

    #[test]
    fn fd_agrees_with_exact_on_five_layers() {
        let soil = SoilModel::new(vec![0.05, 0.2, 0.4, 0.1, 0.03], vec![MU0; 5], vec![0.2, 0.3, 0.3, 0.5]).unwrap();
        let dev = device();
        let exact = jacobian_exact(&soil, &dev, Quantity::Sigma).unwrap();
        let fd = jacobian_fd(model_fn(&soil, &dev, Quantity::Sigma), soil.sigma(), 1e-6).unwrap();
        for k in 0..5 {
            let col = exact.column(k);
            let scale = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
            for i in 0..col.len() {
                let rel = (exact[(i, k)] - fd[(i, k)]).norm() / scale;
                assert!(rel <= 1e-4, "entry ({i},{k}) rel {rel}");
            }
        }
    }

    #[test]
    fn split_layer_columns_sum_to_original() {
        let base = SoilModel::new(vec![0.1, 0.3, 0.05], vec![MU0, 1.02 * MU0, MU0], vec![0.5, 0.8]).unwrap();
        let split = SoilModel::new(
            vec![0.1, 0.3, 0.3, 0.05],
            vec![MU0, 1.02 * MU0, 1.02 * MU0, MU0],
            vec![0.5, 0.4, 0.4],
        )
        .unwrap();
        let dev = device();
        for wrt in [Quantity::Sigma, Quantity::Mu] {
            let a = jacobian_exact(&base, &dev, wrt).unwrap();
            let b = jacobian_exact(&split, &dev, wrt).unwrap();
            for i in 0..a.nrows() {
                let sum = b[(i, 1)] + b[(i, 2)];
                assert!((sum - a[(i, 1)]).norm() <= 1e-8 * a[(i, 1)].norm(), "{wrt} row {i}");
                assert!((b[(i, 0)] - a[(i, 0)]).norm() <= 1e-8 * a[(i, 0)].norm());
            }
        }
    }

    #[test]
    fn random_profile_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10;
        let dev = device();
        for _ in 0..3 {
            let sigma: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.5)).collect();
            let mu: Vec<f64> = (0..n).map(|_| MU0 * rng.random_range(1.0..1.1)).collect();
            let soil = SoilModel::new(sigma, mu, vec![0.15; n - 1]).unwrap();
            // mu is stepped in units of MU0
            for (wrt, unit) in [(Quantity::Sigma, 1.0), (Quantity::Mu, MU0)] {
                let exact = jacobian_exact(&soil, &dev, wrt).unwrap();
                let f = model_fn(&soil, &dev, wrt);
                let x = match wrt {
                    Quantity::Sigma => soil.sigma(),
                    Quantity::Mu => soil.mu(),
                };
                for k in 0..n {
                    let h = 1e-6 * (unit + x[k].abs());
                    let mut xp = x.to_vec();
                    let mut xm = x.to_vec();
                    xp[k] += h;
                    xm[k] -= h;
                    let (fp, fm) = (f(&xp).unwrap(), f(&xm).unwrap());
                    let floor = 1e-12 * exact.column(k).norm();
                    for i in 0..fp.len() {
                        if exact[(i, k)].norm() <= floor {
                            continue;
                        }
                        let central = (fp[i] - fm[i]) / (xp[k] - xm[k]);
                        let rel = (central - exact[(i, k)]).norm() / exact[(i, k)].norm();
                        assert!(rel <= 1e-5, "{wrt} entry ({i},{k}) rel {rel} exact {} central {central} x {x:?}", exact[(i, k)]);
                    }
                }
            }
        }
    }

    #[test]
    fn broyden_examples() {
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let s = DVector::from_vec(vec![0.5, -1.0]);
        let y = &j * &s;
        let u = broyden_update(&j, &s, &y).unwrap();
        assert!(!u.skipped);
        assert!((u.matrix - &j).abs().max() < 1e-15);

        let z = DMatrix::zeros(2, 2);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let u = broyden_update(&z, &e1, &e1).unwrap();
        assert_eq!(u.matrix, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));

        let u = broyden_update(&j, &DVector::zeros(2), &e1).unwrap();
        assert!(u.skipped);
        assert_eq!(u.matrix, j);
    }

    #[test]
    fn broyden_secant_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let j = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0));
            let s = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let y = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let u = broyden_update(&j, &s, &y).unwrap();
            assert!((&u.matrix * &s - &y).amax() <= 1e-12);
        }
    }
}
