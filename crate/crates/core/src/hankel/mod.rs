//! Hankel transforms of order 0 and 1 by an exponentially spaced digital
//! filter:
//!
//! ```text
//! H_v[f](rho) = int_0^inf f(lambda) J_v(rho lambda) lambda dlambda
//!             ~ (1/rho) sum_i w_i f(lambda_i) lambda_i,   lambda_i = exp(a_i) / rho
//! ```
//!
//! Both orders share the same abscissae, so a kernel sampled once at the
//! nodes can feed the J0 and the J1 sums.

mod key201;

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    Zero,
    One,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HankelFilter {
    order: Order,
    log_spacing: f64,
    offsets: Vec<f64>,
    base: Vec<f64>,
    weights: &'static [f64],
}

impl HankelFilter {
    /// The shipped 201-point filter for the given order.
    pub fn default_for(order: Order) -> &'static HankelFilter {
        static J0: OnceLock<HankelFilter> = OnceLock::new();
        static J1: OnceLock<HankelFilter> = OnceLock::new();
        let (cell, weights) = match order {
            Order::Zero => (&J0, &key201::J0_WEIGHTS),
            Order::One => (&J1, &key201::J1_WEIGHTS),
        };
        cell.get_or_init(|| {
            let offsets: Vec<f64> = (0..weights.len())
                .map(|i| key201::FIRST_OFFSET + i as f64 * key201::LOG_SPACING)
                .collect();
            HankelFilter {
                order,
                log_spacing: key201::LOG_SPACING,
                base: offsets.iter().map(|a| a.exp()).collect(),
                offsets,
                weights: weights.as_slice(),
            }
        })
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn log_spacing(&self) -> f64 {
        self.log_spacing
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn weights(&self) -> &[f64] {
        self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Abscissae for argument `rho`, strictly increasing.
    pub fn nodes(&self, rho: f64) -> Result<Vec<f64>> {
        check_rho(rho)?;
        Ok(self.base.iter().map(|b| b / rho).collect())
    }

    /// Combine kernel samples taken at `self.nodes(rho)`.
    pub fn apply(&self, samples: &[Complex64], rho: f64) -> Complex64 {
        debug_assert_eq!(samples.len(), self.len());
        let sum: Complex64 = samples
            .iter()
            .zip(self.weights)
            .zip(&self.base)
            .map(|((f, w), b)| f * (w * b / rho))
            .sum();
        sum / rho
    }

    pub fn transform<F>(&self, f: F, rho: f64) -> Result<Complex64>
    where
        F: Fn(f64) -> Complex64,
    {
        let nodes = self.nodes(rho)?;
        let samples = nodes
            .iter()
            .map(|&lambda| {
                let v = f(lambda);
                if v.re.is_finite() && v.im.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFiniteKernel { lambda })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.apply(&samples, rho))
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && rho > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("device.rho", format!("must be > 0, got {rho}")))
    }
}

/// Quadrature nodes of the default filter.
pub fn filter_nodes(rho: f64, order: Order) -> Result<Vec<f64>> {
    HankelFilter::default_for(order).nodes(rho)
}

/// `H_order[f](rho)` with the default filter.
pub fn hankel_transform<F>(f: F, rho: f64, order: Order) -> Result<Complex64>
where
    F: Fn(f64) -> Complex64,
{
    HankelFilter::default_for(order).transform(f, rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exp_kernel(a: f64) -> impl Fn(f64) -> Complex64 {
        move |l| Complex64::new((-a * l).exp(), 0.0)
    }

    #[test]
    fn unit_rho_nodes_are_exp_offsets() {
        let f = HankelFilter::default_for(Order::Zero);
        let nodes = filter_nodes(1.0, Order::Zero).unwrap();
        assert_eq!(nodes.len(), f.len());
        assert!(f.len() >= 100);
        for (n, a) in nodes.iter().zip(f.offsets()) {
            assert_eq!(*n, a.exp());
        }
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn nodes_scale_inversely_with_rho() {
        let one = filter_nodes(1.0, Order::One).unwrap();
        let two = filter_nodes(2.0, Order::One).unwrap();
        for (a, b) in one.iter().zip(&two) {
            assert!((a / 2.0 - b).abs() <= 1e-15 * a);
        }
        assert!(filter_nodes(0.0, Order::Zero).is_err());
        assert!(filter_nodes(-1.0, Order::Zero).is_err());
    }

    #[test]
    fn lipschitz_hankel_pairs() {
        let h0 = hankel_transform(exp_kernel(1.0), 1.0, Order::Zero).unwrap();
        let want0 = 2f64.powf(-1.5);
        assert!((h0.re / want0 - 1.0).abs() <= 1e-6, "{h0}");
        let h1 = hankel_transform(exp_kernel(2.0), 1.0, Order::One).unwrap();
        let want1 = 5f64.powf(-1.5);
        assert!((h1.re / want1 - 1.0).abs() <= 1e-6, "{h1}");
        assert_eq!(h1.im, 0.0);
    }

    #[test]
    fn zero_kernel_gives_zero() {
        let z = hankel_transform(|_| Complex64::new(0.0, 0.0), 1.3, Order::Zero).unwrap();
        assert_eq!(z, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn non_finite_kernel_reports_lambda() {
        let err = hankel_transform(
            |l| if l > 1.0 { Complex64::new(f64::NAN, 0.0) } else { Complex64::new(1.0, 0.0) },
            1.0,
            Order::Zero,
        )
        .unwrap_err();
        match err {
            Error::NonFiniteKernel { lambda } => assert!(lambda > 1.0),
            other => panic!("unexpected {other}"),
        }
    }

    proptest! {
        #[test]
        fn linear_in_kernel(alpha in -5.0f64..5.0, a in 0.5f64..5.0, b in 0.5f64..5.0, rho in 0.5f64..4.0) {
            for order in [Order::Zero, Order::One] {
                let f = hankel_transform(exp_kernel(a), rho, order).unwrap();
                let g = hankel_transform(|l| Complex64::new(0.0, l * (-b * l).exp()), rho, order).unwrap();
                let combo = hankel_transform(
                    |l| Complex64::new(alpha * (-a * l).exp(), l * (-b * l).exp()),
                    rho,
                    order,
                ).unwrap();
                let want = f * alpha + g;
                prop_assert!((combo - want).norm() <= 1e-14 * (1.0 + want.norm()));
            }
        }

        #[test]
        fn conjugate_kernel_gives_conjugate(a in 0.5f64..5.0, rho in 0.5f64..4.0) {
            let k = |l: f64| Complex64::new((-a * l).exp(), (l * 0.3).sin() * (-l).exp());
            for order in [Order::Zero, Order::One] {
                let f = hankel_transform(k, rho, order).unwrap();
                let g = hankel_transform(|l| k(l).conj(), rho, order).unwrap();
                prop_assert_eq!(g, f.conj());
            }
        }

        #[test]
        fn exponential_family_within_band(a in 0.5f64..5.0, rho in 0.5f64..4.0) {
            let denom = (a * a + rho * rho).powf(1.5);
            let h0 = hankel_transform(exp_kernel(a), rho, Order::Zero).unwrap().re;
            let h1 = hankel_transform(exp_kernel(a), rho, Order::One).unwrap().re;
            prop_assert!((h0 * denom / a - 1.0).abs() <= 1e-6);
            prop_assert!((h1 * denom / rho - 1.0).abs() <= 1e-6);
        }
    }
}
