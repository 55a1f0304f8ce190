use fdem_core::forward::hratio;
use fdem_core::hankel::{hankel_transform, Order};
use fdem_core::invert::{sweep_and_select, FdemProblem, LinearProblem, Problem};
use fdem_core::jacobian::{broyden_update, jacobian_exact, JacobianRequest};
use fdem_core::model::{pack_data_vector, stack_matrix};
use fdem_core::regularize::{derivative_operator, gsvd, tgsvd_solve};
use fdem_core::{
    Component, DeviceConfig, Discretization, Execution, InversionOptions, Orientation, ParamMethod, Quantity,
    RunControl, SoilModel, MU0,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

fn device(freq_hz: &[f64]) -> DeviceConfig {
    DeviceConfig::from_hz(vec![1.0, 3.0], vec![0.0, 0.5], freq_hz, Orientation::Both).unwrap()
}

/// Largest entry difference relative to the largest entry.
fn rel_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    diff / scale
}

fn soil_strategy(max_layers: usize) -> impl Strategy<Value = SoilModel> {
    (1..=max_layers).prop_flat_map(|n| {
        (
            prop::collection::vec(0.001f64..2.0, n),
            prop::collection::vec(1.0f64..1.5, n),
            prop::collection::vec(0.1f64..1.5, n - 1),
        )
            .prop_map(|(s, m, d)| SoilModel::new(s, m.iter().map(|r| r * MU0).collect(), d).unwrap())
    })
}

/// `soil` with layer `k` cut into two at fraction `f` of its thickness (the
/// bottom half-space gains a finite top part of thickness `f`).
fn split(soil: &SoilModel, k: usize, f: f64) -> SoilModel {
    let mut sigma = soil.sigma().to_vec();
    let mut mu = soil.mu().to_vec();
    let mut d = soil.thickness().to_vec();
    sigma.insert(k, sigma[k]);
    mu.insert(k, mu[k]);
    if k < d.len() {
        let t = d[k];
        d[k] = f * t;
        d.insert(k + 1, (1.0 - f) * t);
    } else {
        d.push(f);
    }
    SoilModel::new(sigma, mu, d).unwrap()
}

fn random_matrix(rows: usize, cols: usize, seed: &[f64]) -> DMatrix<f64> {
    DMatrix::from_iterator(rows, cols, seed.iter().copied().cycle().take(rows * cols))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pack_then_unpack_is_identity(vals in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 24), rot in 0usize..24) {
        let dev = device(&[1000.0, 8000.0, 30000.0]);
        let grid = dev.grid();
        let canonical: Vec<_> = grid.tuples().into_iter().zip(vals.iter().map(|&(r, i)| Complex64::new(r, i))).collect();
        let mut shuffled = canonical.clone();
        shuffled.rotate_left(rot);
        shuffled.reverse();
        let packed = pack_data_vector(&shuffled, &grid, Component::Complex).unwrap();
        prop_assert_eq!(packed.unpack(), canonical);
        let complex_norm = packed.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!((packed.stacked(1.0).norm() - complex_norm).abs() <= 1e-12 * complex_norm);
    }

    #[test]
    fn exponential_kernels_match_closed_forms(a in 0.5f64..5.0, rho in 0.5f64..4.0) {
        let r = (a * a + rho * rho).powf(1.5);
        let h0 = hankel_transform(|l| Complex64::new((-a * l).exp(), 0.0), rho, Order::Zero).unwrap();
        let h1 = hankel_transform(|l| Complex64::new((-a * l).exp(), 0.0), rho, Order::One).unwrap();
        prop_assert!(((h0.re - a / r) / (a / r)).abs() <= 1e-6);
        prop_assert!(((h1.re - rho / r) / (rho / r)).abs() <= 1e-6);
    }

    #[test]
    fn transform_commutes_with_conjugation(re in -3.0f64..3.0, im in -3.0f64..3.0, a in 0.5f64..5.0, rho in 0.5f64..4.0) {
        let c = Complex64::new(re, im);
        for order in [Order::Zero, Order::One] {
            let f = hankel_transform(|l| c * (-a * l).exp(), rho, order).unwrap();
            let g = hankel_transform(|l| c.conj() * (-a * l).exp(), rho, order).unwrap();
            prop_assert_eq!(g, f.conj());
        }
    }

    #[test]
    fn subdividing_a_layer_leaves_the_response(soil in soil_strategy(4), k in 0usize..4, f in 0.1f64..0.9) {
        let k = k % soil.layers();
        let dev = device(&[1000.0, 30000.0]);
        let base = hratio(&soil, &dev).unwrap();
        let finer = hratio(&split(&soil, k, f), &dev).unwrap();
        prop_assert!(rel_diff(&base.values, &finer.values) <= 1e-10, "{}", rel_diff(&base.values, &finer.values));
    }

    #[test]
    fn free_space_gives_zero(d in prop::collection::vec(0.1f64..2.0, 0..4)) {
        let n = d.len() + 1;
        let soil = SoilModel::new(vec![0.0; n], vec![MU0; n], d).unwrap();
        let m = hratio(&soil, &device(&[500.0, 50000.0])).unwrap();
        prop_assert!(m.values.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn small_conductivity_changes_move_the_response_little(soil in soil_strategy(3), k in 0usize..3) {
        let k = k % soil.layers();
        let dev = device(&[2000.0]);
        let mut sigma = soil.sigma().to_vec();
        sigma[k] += 1e-8;
        let moved = SoilModel::new(sigma, soil.mu().to_vec(), soil.thickness().to_vec()).unwrap();
        let a = hratio(&soil, &dev).unwrap();
        let b = hratio(&moved, &dev).unwrap();
        prop_assert!(rel_diff(&a.values, &b.values) <= 1e-6);
    }

    #[test]
    fn frequencies_are_evaluated_independently(soil in soil_strategy(3), f1 in 200.0f64..5e4, f2 in 200.0f64..5e4) {
        let both = hratio(&soil, &device(&[f1, f2])).unwrap();
        for (j, f) in [f1, f2].into_iter().enumerate() {
            let single = hratio(&soil, &device(&[f])).unwrap();
            let picked: Vec<Complex64> = both
                .unpack()
                .into_iter()
                .filter(|(t, _)| t.j == j)
                .map(|(_, v)| v)
                .collect();
            prop_assert_eq!(&picked, &single.values);
        }
    }

    #[test]
    fn residual_jacobian_is_minus_stacked_sensitivity(
        sigma in prop::collection::vec(0.01f64..1.0, 4),
        beta in 0.2f64..3.0,
    ) {
        let disc = Discretization::equal(4, 2.0).unwrap();
        let dev = device(&[1000.0, 20000.0]).with_beta(beta).unwrap();
        let soil = disc.soil(sigma.clone(), vec![MU0; 4]).unwrap();
        let data = hratio(&soil, &dev).unwrap();
        let problem = FdemProblem::new(&data, &dev, &disc, Quantity::Sigma, vec![MU0; 4], JacobianRequest::default(), None).unwrap();
        let (r, j) = problem.linearize(&sigma).unwrap();
        let expected = -stack_matrix(&jacobian_exact(&soil, &dev, Quantity::Sigma).unwrap(), beta);
        prop_assert!(r.norm() <= 1e-12 * data.stacked(beta).norm());
        prop_assert!((&j - &expected).norm() <= 1e-12 * expected.norm());
    }

    #[test]
    fn halves_of_a_layer_share_its_sensitivity(soil in soil_strategy(3), k in 0usize..2) {
        prop_assume!(soil.layers() >= 2);
        let k = k % (soil.layers() - 1);
        let dev = device(&[3000.0, 40000.0]);
        let coarse = jacobian_exact(&soil, &dev, Quantity::Sigma).unwrap();
        let fine = jacobian_exact(&split(&soil, k, 0.5), &dev, Quantity::Sigma).unwrap();
        let merged: Vec<Complex64> = fine.column(k).iter().zip(fine.column(k + 1).iter()).map(|(a, b)| a + b).collect();
        let original: Vec<Complex64> = coarse.column(k).iter().copied().collect();
        prop_assert!(rel_diff(&original, &merged) <= 1e-8);
    }

    #[test]
    fn broyden_update_satisfies_the_secant_equation(
        j in prop::collection::vec(-2.0f64..2.0, 12),
        s in prop::collection::vec(-1.0f64..1.0, 3),
        y in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let s = DVector::from_vec(s);
        prop_assume!(s.norm() > 1e-3);
        let y = DVector::from_vec(y);
        let update = broyden_update(&DMatrix::from_vec(4, 3, j), &s, &y).unwrap();
        prop_assert!((&update.matrix * &s - &y).norm() <= 1e-12 * (1.0 + y.norm()));
    }

    #[test]
    fn tgsvd_step_is_linear_in_the_rhs(
        a in prop::collection::vec(-1.0f64..1.0, 64),
        r1 in prop::collection::vec(-1.0f64..1.0, 10),
        r2 in prop::collection::vec(-1.0f64..1.0, 10),
        scale in -3.0f64..3.0,
        order in 0usize..3,
    ) {
        let a = random_matrix(10, 6, &a);
        let f = gsvd(&a, &derivative_operator(order, 6).unwrap().matrix).unwrap();
        let (r1, r2) = (DVector::from_vec(r1), DVector::from_vec(r2));
        for ell in 1..=f.ell_max() {
            let q1 = tgsvd_solve(&f, &r1, ell).unwrap();
            let q2 = tgsvd_solve(&f, &r2, ell).unwrap();
            let q = tgsvd_solve(&f, &(&r1 * scale + &r2), ell).unwrap();
            let expected = q1 * scale + q2;
            prop_assert!((&q - &expected).norm() <= 1e-9 * (1.0 + expected.norm()));
        }
    }

    #[test]
    fn truncated_subspaces_are_nested(
        a in prop::collection::vec(-1.0f64..1.0, 64),
        r in prop::collection::vec(-1.0f64..1.0, 10),
        order in 0usize..3,
    ) {
        let a = random_matrix(10, 6, &a);
        let f = gsvd(&a, &derivative_operator(order, 6).unwrap().matrix).unwrap();
        prop_assume!(f.rank == 6);
        let r = DVector::from_vec(r);
        for ell in 1..=f.ell_max() {
            let q = tgsvd_solve(&f, &r, ell).unwrap();
            // A step already in the larger subspace is reproduced exactly there.
            for wider in ell..=f.ell_max() {
                let again = tgsvd_solve(&f, &(-(&a * &q)), wider).unwrap();
                prop_assert!((&again - &q).norm() <= 1e-8 * (1.0 + q.norm()), "ell {} in {}", ell, wider);
            }
        }
    }
}

fn linear_case(entries: &[f64], truth: &[f64], noise: &[f64]) -> LinearProblem {
    let n = truth.len();
    let mut a = random_matrix(12, n, entries);
    for k in 0..n {
        a[(k, k)] += 2.0;
    }
    let b = &a * DVector::from_column_slice(truth) + DVector::from_column_slice(noise);
    LinearProblem { a, b }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sweep_is_monotone_positive_and_deterministic(
        entries in prop::collection::vec(-1.0f64..1.0, 60),
        truth in prop::collection::vec(0.2f64..2.0, 5),
        noise in prop::collection::vec(-0.05f64..0.05, 12),
        order in 0usize..3,
    ) {
        let problem = linear_case(&entries, &truth, &noise);
        let opts = InversionOptions {
            reg_order: order,
            x_init: Some(vec![1.0]),
            execution: Execution::Sequential,
            ..Default::default()
        };
        let result = sweep_and_select(&problem, &opts, &RunControl::default()).unwrap();
        for run in &result.runs {
            let mut last = result.initial_residual_norm;
            for step in &run.history {
                prop_assert!(step.residual_norm <= last * (1.0 + 1e-12));
                last = step.residual_norm;
            }
            prop_assert!(run.profile.iter().all(|v| *v > 0.0));
        }
        prop_assert_eq!(&sweep_and_select(&problem, &opts, &RunControl::default()).unwrap(), &result);
        let parallel = InversionOptions { execution: Execution::Parallel, ..opts.clone() };
        prop_assert_eq!(&sweep_and_select(&problem, &parallel, &RunControl::default()).unwrap(), &result);
    }

    #[test]
    fn discrepancy_picks_the_first_index_under_the_threshold(
        entries in prop::collection::vec(-1.0f64..1.0, 60),
        truth in prop::collection::vec(0.2f64..2.0, 5),
        noise in prop::collection::vec(-0.05f64..0.05, 12),
        tau in 1.0f64..2.0,
    ) {
        let problem = linear_case(&entries, &truth, &noise);
        let std = (noise.iter().map(|e| e * e).sum::<f64>() / 12.0).sqrt();
        let opts = InversionOptions {
            reg_order: 1,
            x_init: Some(vec![1.0]),
            param_method: ParamMethod::Discrepancy,
            noise_std: Some(std),
            tau_discr: tau,
            ..Default::default()
        };
        let result = sweep_and_select(&problem, &opts, &RunControl::default()).unwrap();
        let threshold = result.discrepancy_threshold.unwrap();
        let first = result.runs.iter().find(|r| r.residual_norm <= threshold);
        match first {
            Some(run) => {
                prop_assert!(result.selection.satisfied);
                prop_assert_eq!(result.selected_ell, run.ell);
            }
            None => prop_assert!(!result.selection.satisfied),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn field_inversion_keeps_monotone_positive_iterates(
        sigma in prop::collection::vec(0.02f64..0.5, 6),
        order in 1usize..3,
    ) {
        let disc = Discretization::equal(6, 2.0).unwrap();
        let dev = device(&[1000.0, 10000.0, 50000.0]);
        let data = hratio(&disc.soil(sigma, vec![MU0; 6]).unwrap(), &dev).unwrap();
        let opts = InversionOptions { reg_order: order, k_max: 15, ..Default::default() };
        let result = fdem_core::invert_profile(&data, &dev, &disc, &opts, &RunControl::default()).unwrap();
        for run in &result.runs {
            let mut last = result.initial_residual_norm;
            for step in &run.history {
                prop_assert!(step.residual_norm <= last * (1.0 + 1e-12));
                last = step.residual_norm;
            }
            prop_assert!(run.profile.iter().all(|v| *v > 0.0));
        }
    }
}

