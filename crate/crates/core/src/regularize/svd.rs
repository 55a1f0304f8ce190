use nalgebra::{DMatrix, DVector};

use super::rank_tolerance;
use crate::error::{Error, Result};

/// Singular triplets sorted by decreasing singular value, with the numerical
/// rank.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
    pub rank: usize,
}

impl SvdFactors {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let svd = a.clone().svd(true, true);
        let u = svd.u.expect("requested U");
        let v = svd.v_t.expect("requested V^T").transpose();
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
        let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
        let v = DMatrix::from_fn(v.nrows(), order.len(), |r, c| v[(r, order[c])]);
        let tol = rank_tolerance(a.nrows(), a.ncols(), sigma.first().copied().unwrap_or(0.0));
        let rank = sigma.iter().take_while(|s| **s > tol).count();
        Self { u, sigma, v, rank }
    }

    /// `sum_{i < ell} (u_i^T rhs / sigma_i) v_i`.
    pub fn solve(&self, rhs: &DVector<f64>, ell: usize) -> Result<DVector<f64>> {
        if ell == 0 || ell > self.rank {
            return Err(Error::TruncationOutOfRange { ell, max: self.rank });
        }
        if rhs.len() != self.u.nrows() {
            return Err(Error::Dimension(format!(
                "right-hand side has {} entries, matrix has {} rows",
                rhs.len(),
                self.u.nrows()
            )));
        }
        let mut x = DVector::zeros(self.v.nrows());
        for i in 0..ell {
            let coef = self.u.column(i).dot(rhs) / self.sigma[i];
            x.axpy(coef, &self.v.column(i), 1.0);
        }
        Ok(x)
    }
}

/// Minimum-norm least-squares solution of the rank-`ell` truncated system.
pub fn tsvd_solve(a: &DMatrix<f64>, rhs: &DVector<f64>, ell: usize) -> Result<DVector<f64>> {
    SvdFactors::new(a).solve(rhs, ell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn orthogonal_matrix_solves_with_transpose() {
        let q = gaussian(6, 6, 1).qr().q();
        let rhs = DVector::from_fn(6, |i, _| i as f64 - 2.5);
        let x = tsvd_solve(&q, &rhs, 6).unwrap();
        assert!((x - q.transpose() * &rhs).amax() < 1e-12);
    }

    #[test]
    fn keeps_dominant_direction() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let x = tsvd_solve(&a, &DVector::from_vec(vec![2.0, 1.0]), 1).unwrap();
        assert!((x - DVector::from_vec(vec![1.0, 0.0])).amax() < 1e-15);
    }

    #[test]
    fn full_rank_truncation_is_pseudoinverse() {
        // wide full-row-rank matrix: A^+ = A^T (A A^T)^{-1}
        let a = gaussian(12, 35, 2);
        let rhs = DVector::from_fn(12, |i, _| (i as f64).sin());
        let f = SvdFactors::new(&a);
        assert_eq!(f.rank, 12);
        let x = f.solve(&rhs, 12).unwrap();
        let aat = &a * a.transpose();
        let want = a.transpose() * aat.lu().solve(&rhs).unwrap();
        assert!((&x - &want).norm() <= 1e-10 * want.norm());
    }

    #[test]
    fn rejects_out_of_range_truncation() {
        let a = gaussian(4, 3, 3);
        let rhs = DVector::zeros(4);
        assert!(matches!(tsvd_solve(&a, &rhs, 0), Err(Error::TruncationOutOfRange { .. })));
        assert!(matches!(tsvd_solve(&a, &rhs, 4), Err(Error::TruncationOutOfRange { ell: 4, max: 3 })));
    }

    #[test]
    fn rank_deficiency_is_detected() {
        let b = gaussian(8, 3, 4);
        let a = &b * gaussian(3, 6, 5);
        assert_eq!(SvdFactors::new(&a).rank, 3);
    }
}
