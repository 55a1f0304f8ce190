//! Regularization algebra: discrete derivative operators, truncated SVD and
//! GSVD expansions, and the minimum-gradient-support stabilizer.

mod gsvd;
mod svd;

pub use gsvd::{gsvd, tgsvd_solve, GsvdFactors};
pub use svd::{tsvd_solve, SvdFactors};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative tolerance for numerical rank: singular values above
/// `EPSILON * max(rows, cols) * sigma_max` count.
pub fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    f64::EPSILON * rows.max(cols) as f64 * sigma_max
}

/// Discrete derivative operator of order 0, 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct RegMatrix {
    pub order: usize,
    pub matrix: DMatrix<f64>,
}

impl RegMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// `(n - order) x n` banded stencil; the identity for order 0.
pub fn derivative_operator(order: usize, n: usize) -> Result<RegMatrix> {
    let stencil: &[f64] = match order {
        0 => &[1.0],
        1 => &[-1.0, 1.0],
        2 => &[1.0, -2.0, 1.0],
        _ => return Err(Error::invalid("inversion.reg_order", format!("must be 0, 1 or 2, got {order}"))),
    };
    if n < order + 1 {
        return Err(Error::invalid(
            "inversion.reg_order",
            format!("order {order} needs at least {} layers, got {n}", order + 1),
        ));
    }
    let p = n - order;
    let mut matrix = DMatrix::zeros(p, n);
    for r in 0..p {
        for (c, w) in stencil.iter().enumerate() {
            matrix[(r, r + c)] = *w;
        }
    }
    Ok(RegMatrix { order, matrix })
}

/// Value of the MGS stabilizer and its per-row reweighting factors.
#[derive(Debug, Clone, PartialEq)]
pub struct MgsTerm {
    pub value: f64,
    pub weights: Vec<f64>,
    /// `(Lq)_r / q_r` with the guarded denominator.
    pub ratios: Vec<f64>,
    /// Guarded `|q_r|` used as denominator.
    pub scale: Vec<f64>,
}

/// Denominator floor relative to `||q||_inf`.
pub const MGS_FLOOR: f64 = 1e-12;

/// `S_tau(q) = sum_r t_r^2 / (t_r^2 + tau^2)`, `t_r = (Lq)_r / q_r`, and
/// weights `1 / (t_r^2 + tau^2)`.
pub fn mgs_stabilizer(q: &[f64], l: &RegMatrix, tau: f64) -> Result<MgsTerm> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid("inversion.mgs.tau", format!("must be > 0, got {tau}")));
    }
    if q.len() != l.cols() {
        return Err(Error::Dimension(format!(
            "profile has {} entries, operator has {} columns",
            q.len(),
            l.cols()
        )));
    }
    let qv = nalgebra::DVector::from_column_slice(q);
    let lq = &l.matrix * &qv;
    let floor = MGS_FLOOR * qv.amax();
    let tau2 = tau * tau;
    let mut term = MgsTerm {
        value: 0.0,
        weights: Vec::with_capacity(lq.len()),
        ratios: Vec::with_capacity(lq.len()),
        scale: Vec::with_capacity(lq.len()),
    };
    for (r, num) in lq.iter().enumerate() {
        let den = q[r].abs().max(floor);
        let ratio = if *num == 0.0 { 0.0 } else { num / den };
        let t2 = ratio * ratio;
        term.value += t2 / (t2 + tau2);
        term.weights.push(1.0 / (t2 + tau2));
        term.ratios.push(ratio);
        term.scale.push(den);
    }
    Ok(term)
}
