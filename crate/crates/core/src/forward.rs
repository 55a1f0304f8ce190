//! Layered-earth forward model: admittance recursion, reflection factor and
//! the secondary-to-primary field ratios of the two coil orientations.
//!
//! Time dependence is `exp(i omega t)`; the propagation constant of layer
//! `k` is `u_k = sqrt(lambda^2 + i sigma_k mu_k omega)` on the principal
//! branch.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hankel::{HankelFilter, Order};
use crate::model::{Coil, Component, DataVector, DeviceConfig, Quantity, SoilModel, MU0};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Above this value of `Re(d u)` the hyperbolic tangent is taken as 1.
const TANH_CLAMP: f64 = 20.0;

/// Per-layer quantities of the admittance recursion at one `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPropagation {
    pub u: Vec<Complex64>,
    pub n: Vec<Complex64>,
    pub y: Vec<Complex64>,
}

/// `1 - tanh(z)`, zero where the tangent is clamped.
fn tanh_complement(z: Complex64) -> Complex64 {
    if z.re > TANH_CLAMP {
        Complex64::new(0.0, 0.0)
    } else {
        let e = (-2.0 * z).exp();
        e * 2.0 / (e + 1.0)
    }
}

/// Layer constants: `u`, `N`, and `N - N0` formed without cancellation.
#[inline]
fn layer_constants(sigma: f64, mu: f64, omega: f64, lambda: f64) -> (Complex64, Complex64, Complex64) {
    let u = (Complex64::new(lambda * lambda, 0.0) + I * (sigma * mu * omega)).sqrt();
    let n = u / (I * (mu * omega));
    // u - lambda = i sigma mu omega / (u + lambda)
    let excess = sigma / (u + lambda) + lambda * (MU0 - mu) / (mu * MU0) / (I * omega);
    (u, n, excess)
}

/// One step of the backward recursion written on excesses over `N0`:
/// given `Y_{k+1} - N0`, returns `Y_k - N_k`, so that `Y_k - N0 = a + step`.
///
/// Uses `Y_k - N_k = N_k (Y_{k+1} - N_k)(1 - t) / (N_k + Y_{k+1} t)`, which
/// keeps the small contrast at large `lambda` accurate to rounding.
#[inline]
fn excess_step(n0: Complex64, n: Complex64, a: Complex64, t: Complex64, omt: Complex64, e_below: Complex64) -> Complex64 {
    let diff = e_below - a;
    if diff == Complex64::new(0.0, 0.0) || omt == Complex64::new(0.0, 0.0) {
        return Complex64::new(0.0, 0.0);
    }
    n * diff * omt / (n + (n0 + e_below) * t)
}

pub fn layer_propagation(soil: &SoilModel, omega: f64, lambda: f64) -> Result<LayerPropagation> {
    check_point(omega, lambda)?;
    let nl = soil.layers();
    let n0 = free_space_admittance(omega, lambda);
    let mut u = Vec::with_capacity(nl);
    let mut n = Vec::with_capacity(nl);
    let mut a = Vec::with_capacity(nl);
    for (s, m) in soil.sigma().iter().zip(soil.mu()) {
        let (uk, nk, ak) = layer_constants(*s, *m, omega, lambda);
        u.push(uk);
        n.push(nk);
        a.push(ak);
    }
    let mut e = a[nl - 1];
    let mut y = vec![Complex64::new(0.0, 0.0); nl];
    y[nl - 1] = n[nl - 1];
    for k in (0..nl - 1).rev() {
        let arg = u[k] * soil.thickness()[k];
        let omt = tanh_complement(arg);
        let t = Complex64::new(1.0, 0.0) - omt;
        e = a[k] + excess_step(n0, n[k], a[k], t, omt, e);
        y[k] = n0 + e;
    }
    Ok(LayerPropagation { u, n, y })
}

/// Surface state at one `lambda`: `Y_1 - N0` and `Y_1 - N_1`.
fn surface_excess(soil: &SoilModel, omega: f64, lambda: f64) -> Result<(Complex64, Complex64)> {
    check_point(omega, lambda)?;
    let nl = soil.layers();
    let (sigma, mu, d) = (soil.sigma(), soil.mu(), soil.thickness());
    let n0 = free_space_admittance(omega, lambda);
    let mut e = layer_constants(sigma[nl - 1], mu[nl - 1], omega, lambda).2;
    let mut delta = Complex64::new(0.0, 0.0);
    for k in (0..nl - 1).rev() {
        let (u, n, a) = layer_constants(sigma[k], mu[k], omega, lambda);
        let omt = tanh_complement(u * d[k]);
        delta = excess_step(n0, n, a, Complex64::new(1.0, 0.0) - omt, omt, e);
        e = a + delta;
    }
    Ok((e, delta))
}

fn check_point(omega: f64, lambda: f64) -> Result<()> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::invalid("device.omega", format!("must be > 0, got {omega}")));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid("lambda", format!("must be > 0, got {lambda}")));
    }
    Ok(())
}

/// Surface admittance `Y_1` at the top of the first layer.
pub fn surface_admittance(soil: &SoilModel, omega: f64, lambda: f64) -> Result<Complex64> {
    Ok(free_space_admittance(omega, lambda) + surface_excess(soil, omega, lambda)?.0)
}

/// Large-`lambda` limit of the reflection factor, `(mu_1 - mu0)/(mu_1 + mu0)`.
pub fn reflection_limit(soil: &SoilModel) -> f64 {
    let mu1 = soil.mu()[0];
    (mu1 - MU0) / (mu1 + MU0)
}

/// `R - R_inf` from the surface state, without cancellation.
///
/// With `E = Y_1 - N0` and `E_inf` its limit, `R - R_inf = -2 N0 (E - E_inf) /
/// ((2 N0 + E)(2 N0 + E_inf))`, and `E - E_inf = sigma_1/(u_1 + lambda) + (Y_1 - N_1)`.
fn reflection_remainder(
    soil: &SoilModel,
    omega: f64,
    lambda: f64,
    excess: Complex64,
    delta: Complex64,
) -> Result<Complex64> {
    let n0 = free_space_admittance(omega, lambda);
    let (sigma1, mu1) = (soil.sigma()[0], soil.mu()[0]);
    let u1 = (Complex64::new(lambda * lambda, 0.0) + I * (sigma1 * mu1 * omega)).sqrt();
    let e_inf = lambda * (MU0 - mu1) / (mu1 * MU0) / (I * omega);
    let (d1, d2) = (n0 * 2.0 + excess, n0 * 2.0 + e_inf);
    let tiny = f64::MIN_POSITIVE * n0.norm().max(1.0);
    if d1.norm() <= tiny || d2.norm() <= tiny {
        return Err(Error::SingularConfiguration { lambda });
    }
    Ok(-(n0 * 2.0) * (sigma1 / (u1 + lambda) + delta) / d1 / d2)
}

/// Reflection factor `R = (N0 - Y1) / (N0 + Y1)` with `N0 = lambda / (i mu0 omega)`.
pub fn reflection_factor(soil: &SoilModel, omega: f64, lambda: f64) -> Result<Complex64> {
    let (e, delta) = surface_excess(soil, omega, lambda)?;
    Ok(reflection_remainder(soil, omega, lambda, e, delta)? + reflection_limit(soil))
}

fn free_space_admittance(omega: f64, lambda: f64) -> Complex64 {
    Complex64::new(lambda, 0.0) / (I * (MU0 * omega))
}

/// `R - R_inf` together with its derivative with respect to every layer's
/// `wrt` parameter, written into `grad`.
///
/// The derivative of `Y_1` with respect to layer `j` is the local partial of
/// step `j` carried up through the product of `dY_k/dY_{k+1}`, `k < j`.
pub(crate) fn reflection_with_gradient(
    soil: &SoilModel,
    omega: f64,
    lambda: f64,
    wrt: Quantity,
    grad: &mut [Complex64],
) -> Result<Complex64> {
    check_point(omega, lambda)?;
    let nl = soil.layers();
    debug_assert_eq!(grad.len(), nl);
    let sigma = soil.sigma();
    let mu = soil.mu();
    let d = soil.thickness();
    let one = Complex64::new(1.0, 0.0);
    let n0 = free_space_admittance(omega, lambda);

    // local partials of each recursion step w.r.t. its own layer parameter,
    // and w.r.t. the admittance coming from below
    let mut local = vec![Complex64::new(0.0, 0.0); nl];
    let mut chain = vec![Complex64::new(0.0, 0.0); nl];

    let layer = |k: usize| {
        let (u, n, a) = layer_constants(sigma[k], mu[k], omega, lambda);
        let (du, dn) = match wrt {
            Quantity::Sigma => (I * (mu[k] * omega) / (u * 2.0), (u * 2.0).inv()),
            Quantity::Mu => {
                let du = I * (sigma[k] * omega) / (u * 2.0);
                (du, du / (I * (mu[k] * omega)) - n / mu[k])
            }
        };
        (u, n, a, du, dn)
    };

    let (_, _, a_last, _, dn_last) = layer(nl - 1);
    let mut e = a_last;
    let mut delta = Complex64::new(0.0, 0.0);
    local[nl - 1] = dn_last;
    for k in (0..nl - 1).rev() {
        let (u, n, a, du, dn) = layer(k);
        let arg = u * d[k];
        let omt = tanh_complement(arg);
        let t = one - omt;
        let dt = if arg.re > TANH_CLAMP {
            Complex64::new(0.0, 0.0)
        } else {
            omt * (one + t) * du * d[k]
        };
        let y = n0 + e;
        let den = n + y * t;
        let den2 = den * den;
        let g_y = n * n * omt * (one + t) / den2;
        let g_n = t * (y * y + n * n + n * y * t * 2.0) / den2;
        // N^2 - Y^2 = (N - Y)(N + Y), N - Y = a - e
        let g_t = n * (a - e) * (n + y) / den2;
        local[k] = g_n * dn + g_t * dt;
        chain[k] = g_y;
        delta = excess_step(n0, n, a, t, omt, e);
        e = a + delta;
    }

    let r = reflection_remainder(soil, omega, lambda, e, delta)?;
    let y = n0 + e;
    let dr_dy = -(n0 * 2.0) / ((n0 + y) * (n0 + y));
    let mut carry = dr_dy;
    for k in 0..nl {
        grad[k] = carry * local[k];
        carry *= chain[k];
    }
    if wrt == Quantity::Mu {
        grad[0] -= reflection_limit_derivative(soil);
    }
    Ok(r)
}

/// `d R_inf / d mu_1`.
fn reflection_limit_derivative(soil: &SoilModel) -> f64 {
    let mu1 = soil.mu()[0];
    2.0 * MU0 / ((mu1 + MU0) * (mu1 + MU0))
}

/// Kernel samples for one (distance, frequency) pair at the shared filter nodes.
/// Samples of `R - R_inf`; the constant part is transformed in closed form.
struct KernelSamples {
    nodes: Vec<f64>,
    r: Vec<Complex64>,
    /// `grad[i * n + k]` is `d(R - R_inf)(lambda_i) / dx_k`.
    grad: Vec<Complex64>,
}

fn sample_kernel(
    soil: &SoilModel,
    rho: f64,
    omega: f64,
    wrt: Option<Quantity>,
    t: usize,
    j: usize,
) -> Result<KernelSamples> {
    // J0 and J1 filters share their abscissae
    let nodes = HankelFilter::default_for(Order::Zero).nodes(rho)?;
    let nl = soil.layers();
    let mut r = Vec::with_capacity(nodes.len());
    let mut grad = if wrt.is_some() {
        vec![Complex64::new(0.0, 0.0); nodes.len() * nl]
    } else {
        Vec::new()
    };
    let attach = |e: Error, lambda: f64| match e {
        Error::NonFiniteKernel { .. } | Error::SingularConfiguration { .. } => {
            Error::NonFiniteReading { lambda, t, i: 0, j }
        }
        other => other,
    };
    for (idx, &lambda) in nodes.iter().enumerate() {
        let value = match wrt {
            Some(q) => reflection_with_gradient(soil, omega, lambda, q, &mut grad[idx * nl..(idx + 1) * nl]),
            None => surface_excess(soil, omega, lambda)
                .and_then(|(e, delta)| reflection_remainder(soil, omega, lambda, e, delta)),
        }
        .map_err(|e| attach(e, lambda))?;
        let finite = value.re.is_finite()
            && value.im.is_finite()
            && grad
                .get(idx * nl..(idx + 1) * nl)
                .is_none_or(|g| g.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        if !finite {
            return Err(Error::NonFiniteReading { lambda, t, i: 0, j });
        }
        r.push(value);
    }
    Ok(KernelSamples { nodes, r, grad })
}

fn reading_factors(coil: Coil, rho: f64, h: f64, nodes: &[f64]) -> (Order, f64, Vec<f64>) {
    match coil {
        // M^V = -rho^3 H0[lambda e^{-2 h lambda} R]
        Coil::Vertical => (
            Order::Zero,
            -rho.powi(3),
            nodes.iter().map(|l| l * (-2.0 * h * l).exp()).collect(),
        ),
        // M^H = -rho^2 H1[e^{-2 h lambda} R]
        Coil::Horizontal => (
            Order::One,
            -rho * rho,
            nodes.iter().map(|l| (-2.0 * h * l).exp()).collect(),
        ),
    }
}

/// Reading produced by a constant reflection factor `R = 1`:
/// `-rho^3 (2a^2 - rho^2)/(a^2 + rho^2)^{5/2}` (vertical) and
/// `-rho^3/(a^2 + rho^2)^{3/2}` (horizontal), `a = 2h`.
fn unit_reflection_reading(coil: Coil, rho: f64, h: f64) -> f64 {
    let a = 2.0 * h;
    let q = a * a + rho * rho;
    match coil {
        Coil::Vertical => -rho.powi(3) * (2.0 * a * a - rho * rho) / q.powf(2.5),
        Coil::Horizontal => -rho.powi(3) / q.powf(1.5),
    }
}

fn evaluate(
    soil: &SoilModel,
    device: &DeviceConfig,
    wrt: Option<Quantity>,
) -> Result<(DataVector, Option<DMatrix<Complex64>>)> {
    device.validate()?;
    let grid = device.grid();
    let tuples = grid.tuples();
    let nl = soil.layers();

    let mut kernels = Vec::with_capacity(grid.m_rho * grid.m_omega);
    for (t, &rho) in device.rho.iter().enumerate() {
        for (j, &omega) in device.omega.iter().enumerate() {
            kernels.push(sample_kernel(soil, rho, omega, wrt, t, j)?);
        }
    }

    let mut values = Vec::with_capacity(tuples.len());
    let mut jac = wrt.map(|_| DMatrix::<Complex64>::zeros(tuples.len(), nl));
    for (row, tuple) in tuples.iter().enumerate() {
        let rho = device.rho[tuple.t];
        let h = device.height[tuple.i];
        let ks = &kernels[tuple.t * grid.m_omega + tuple.j];
        let (order, scale, factors) = reading_factors(tuple.coil, rho, h, &ks.nodes);
        let filter = HankelFilter::default_for(order);
        let samples: Vec<Complex64> = ks.r.iter().zip(&factors).map(|(r, f)| r * f).collect();
        let unit = unit_reflection_reading(tuple.coil, rho, h);
        let value = filter.apply(&samples, rho) * scale + reflection_limit(soil) * unit;
        if !(value.re.is_finite() && value.im.is_finite()) {
            return Err(Error::NonFiniteReading {
                lambda: f64::NAN,
                t: tuple.t,
                i: tuple.i,
                j: tuple.j,
            });
        }
        values.push(value);
        if let Some(jac) = jac.as_mut() {
            let mut column = vec![Complex64::new(0.0, 0.0); ks.nodes.len()];
            for k in 0..nl {
                for (idx, c) in column.iter_mut().enumerate() {
                    *c = ks.grad[idx * nl + k] * factors[idx];
                }
                jac[(row, k)] = filter.apply(&column, rho) * scale;
            }
            if wrt == Some(Quantity::Mu) {
                jac[(row, 0)] += reflection_limit_derivative(soil) * unit;
            }
        }
    }
    let data = DataVector {
        values,
        index_map: tuples,
        component: Component::Complex,
    };
    Ok((data, jac))
}

/// Predicted field ratios `M` for every reading of `device`, in canonical order.
pub fn hratio(soil: &SoilModel, device: &DeviceConfig) -> Result<DataVector> {
    evaluate(soil, device, None).map(|(data, _)| data)
}

/// Field ratios together with `dM_i / dx_k`, `x` being `sigma` or `mu`.
pub fn hratio_with_jacobian(
    soil: &SoilModel,
    device: &DeviceConfig,
    wrt: Quantity,
) -> Result<(DataVector, DMatrix<Complex64>)> {
    let (data, jac) = evaluate(soil, device, Some(wrt))?;
    Ok((data, jac.expect("jacobian requested")))
}

/// Factors `(a, b)` such that a reading of `component` equals
/// `a Re(M) + b Im(M)`. `None` for the complex signal.
pub fn component_weights(component: Component, rho: f64, omega: f64) -> Option<(f64, f64)> {
    match component {
        Component::Complex => None,
        Component::InPhase => Some((1.0, 0.0)),
        Component::Quadrature => Some((0.0, 1.0)),
        Component::ApparentConductivity => Some((0.0, apparent_conductivity_scale(rho, omega))),
    }
}

/// `4 / (omega mu0 rho^2)`: maps the quadrature component of a weakly
/// conducting half-space onto its conductivity.
pub fn apparent_conductivity_scale(rho: f64, omega: f64) -> f64 {
    4.0 / (omega * MU0 * rho * rho)
}

/// Derived real signal (in-phase, quadrature or apparent conductivity).
/// The complex component returns the input unchanged.
pub fn signal_component(m: &DataVector, component: Component, device: &DeviceConfig) -> Result<DataVector> {
    if !m.component.is_complex() {
        return Err(Error::invalid(
            "component",
            format!("input already holds the {} component", m.component),
        ));
    }
    let mut values = Vec::with_capacity(m.len());
    for (value, tuple) in m.values.iter().zip(&m.index_map) {
        let rho = *device
            .rho
            .get(tuple.t)
            .ok_or_else(|| Error::Dimension(format!("distance index {} out of range", tuple.t)))?;
        let omega = *device
            .omega
            .get(tuple.j)
            .ok_or_else(|| Error::Dimension(format!("frequency index {} out of range", tuple.j)))?;
        values.push(match component_weights(component, rho, omega) {
            None => *value,
            Some((a, b)) => Complex64::new(a * value.re + b * value.im, 0.0),
        });
    }
    Ok(DataVector {
        values,
        index_map: m.index_map.clone(),
        component,
    })
}
