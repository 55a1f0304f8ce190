use nalgebra::{DMatrix, DVector};

use super::rank_tolerance;
use crate::error::{Error, Result};

/// Generalized SVD of a pair `(A, L)`, `A` being `m x n` and `L` `p x n`:
///
/// ```text
/// A = U diag(c) Z^{-1},    L = V [diag(s) 0] Z^{-1}
/// ```
///
/// Indices run over `0..n`; the first `p` carry `c` nondecreasing with
/// `c_i^2 + s_i^2 = 1`, the last `n - p` span the null space of `L`
/// (`s = 0`, `c = 1`). Columns of `U` whose `c` is below the rank tolerance
/// are left zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GsvdFactors {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub z_inv: DMatrix<f64>,
    pub c: Vec<f64>,
    pub s: Vec<f64>,
    /// Rows of `L`.
    pub p: usize,
    /// Numerical rank of `A`.
    pub rank: usize,
    c_tol: f64,
}

impl GsvdFactors {
    pub fn n(&self) -> usize {
        self.z.ncols()
    }

    /// Largest admissible truncation index, `rank + p - n`.
    pub fn ell_max(&self) -> usize {
        (self.rank + self.p).saturating_sub(self.n())
    }

    /// Indices kept by the truncated expansion at `ell`.
    pub fn retained(&self, ell: usize) -> Result<std::ops::Range<usize>> {
        let max = self.ell_max();
        if ell == 0 || ell > max {
            return Err(Error::TruncationOutOfRange { ell, max });
        }
        Ok(self.p - ell..self.n())
    }

    /// Generalized singular values `c_i / s_i` of the first `p` indices.
    pub fn gamma(&self) -> Vec<f64> {
        self.c[..self.p].iter().zip(&self.s).map(|(c, s)| c / s).collect()
    }
}

/// GSVD through the QR factorization of `[A; L]` and an SVD of the `L`
/// block of its orthogonal factor.
pub fn gsvd(a: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<GsvdFactors> {
    let (m, n) = a.shape();
    let p = l.nrows();
    if l.ncols() != n {
        return Err(Error::Dimension(format!("A has {n} columns, L has {}", l.ncols())));
    }
    if p > n {
        return Err(Error::Dimension(format!("L has {p} rows, more than its {n} columns")));
    }
    if m + p < n {
        return Err(Error::NullSpaceIntersection);
    }

    let mut stacked = DMatrix::zeros(m + p, n);
    stacked.rows_mut(0, m).copy_from(a);
    stacked.rows_mut(m, p).copy_from(l);
    let qr = stacked.qr();
    let q = qr.q();
    let r = qr.r();

    let r_sv = r.singular_values();
    let r_max = r_sv.max();
    if r_sv.min() <= rank_tolerance(m + p, n, r_max) {
        return Err(Error::NullSpaceIntersection);
    }

    let q1 = q.rows(0, m).into_owned();
    let mut q2 = DMatrix::zeros(n, n);
    q2.rows_mut(0, p).copy_from(&q.rows(m, p));
    let svd = q2.svd(true, true);
    let (vfull, wt) = (svd.u.expect("requested U"), svd.v_t.expect("requested V^T"));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let w = DMatrix::from_fn(n, n, |row, col| wt[(order[col], row)]);
    let s: Vec<f64> = order[..p].iter().map(|&i| svd.singular_values[i].min(1.0)).collect();
    let v = DMatrix::from_fn(p, p, |row, col| vfull[(row, order[col])]);

    let q1w = &q1 * &w;
    let c: Vec<f64> = (0..n).map(|i| q1w.column(i).norm()).collect();
    let c_tol = rank_tolerance(m + p, n, 1.0);
    let mut u = DMatrix::zeros(m, n);
    for i in 0..n {
        if c[i] > c_tol {
            u.set_column(i, &(q1w.column(i) / c[i]));
        }
    }

    let z = r.solve_upper_triangular(&w).ok_or(Error::NullSpaceIntersection)?;
    let z_inv = w.transpose() * &r;

    let a_sv = a.singular_values();
    let a_tol = rank_tolerance(m, n, a_sv.max());
    let rank = a_sv.iter().filter(|x| **x > a_tol).count();

    Ok(GsvdFactors {
        u,
        v,
        z,
        z_inv,
        c,
        s,
        p,
        rank,
        c_tol,
    })
}

/// Truncated GSVD step
///
/// ```text
/// q = - sum_{i in retained(ell)} (u_i^T rhs / c_i) z_i
/// ```
///
/// which minimizes `|| rhs + A q ||` over the retained subspace.
pub fn tgsvd_solve(f: &GsvdFactors, rhs: &DVector<f64>, ell: usize) -> Result<DVector<f64>> {
    if rhs.len() != f.u.nrows() {
        return Err(Error::Dimension(format!(
            "right-hand side has {} entries, A has {} rows",
            rhs.len(),
            f.u.nrows()
        )));
    }
    let mut q = DVector::zeros(f.n());
    for i in f.retained(ell)? {
        if f.c[i] <= f.c_tol {
            return Err(Error::DegenerateGeneralizedValue { value: f.c[i] });
        }
        let coef = f.u.column(i).dot(rhs) / f.c[i];
        q.axpy(-coef, &f.z.column(i), 1.0);
    }
    Ok(q)
}
