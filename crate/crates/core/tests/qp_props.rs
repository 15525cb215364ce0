mod common;

use common::{enumerate_qp, random_qp};
use liquid_core::qp_solver::{solve_qp_with, QpOptions, WarmStart};
use liquid_core::{solve_qp, QpError, QuadraticProgram};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn problem(seed: u64) -> QuadraticProgram {
    random_qp(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn permute_rows(qp: &QuadraticProgram, order: &[usize]) -> QuadraticProgram {
    let a = DMatrix::from_fn(order.len(), qp.dim(), |r, c| qp.a_ineq[(order[r], c)]);
    let b = DVector::from_fn(order.len(), |r, _| qp.b_ineq[order[r]]);
    qp.clone().with_inequalities(a, b)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_exhaustive_enumeration(seed in any::<u64>()) {
        let qp = problem(seed);
        let sol = solve_qp(&qp).unwrap();
        let (x_ref, obj_ref) = enumerate_qp(&qp).unwrap();
        prop_assert!((sol.objective - obj_ref).abs() <= 1e-8 * (1.0 + obj_ref.abs()));
        prop_assert!(max_abs_diff(&sol.x, x_ref.as_slice()) < 1e-6);
    }

    #[test]
    fn kkt_conditions_hold(seed in any::<u64>()) {
        let qp = problem(seed);
        let sol = solve_qp(&qp).unwrap();
        let x = DVector::from_column_slice(&sol.x);
        prop_assert!(sol.stationarity_residual(&qp) < 1e-8);
        prop_assert!((&qp.a_eq * &x - &qp.b_eq).amax() < 1e-9);
        let slack = &qp.a_ineq * &x - &qp.b_ineq;
        for i in 0..qp.a_ineq.nrows() {
            prop_assert!(slack[i] > -1e-9);
            prop_assert!(sol.multipliers_ineq[i] > -1e-9);
            prop_assert!((slack[i] * sol.multipliers_ineq[i]).abs() < 1e-8);
        }
        for &i in &sol.active_set {
            prop_assert!(slack[i].abs() < 1e-9);
        }
    }

    #[test]
    fn objective_never_increases(seed in any::<u64>()) {
        let sol = solve_qp(&problem(seed)).unwrap();
        for w in sol.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs()));
        }
    }

    #[test]
    fn inequality_order_does_not_matter(seed in any::<u64>()) {
        let qp = problem(seed);
        let mut order: Vec<usize> = (0..qp.a_ineq.nrows()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xabcd));
        let a = solve_qp(&qp).unwrap();
        let b = solve_qp(&permute_rows(&qp, &order)).unwrap();
        prop_assert!(max_abs_diff(&a.x, &b.x) < 1e-8);
    }

    #[test]
    fn duplicated_inequalities_do_not_matter(seed in any::<u64>()) {
        let qp = problem(seed);
        let n = qp.a_ineq.nrows();
        let order: Vec<usize> = (0..n).chain(0..n).collect();
        let a = solve_qp(&qp).unwrap();
        let b = solve_qp(&permute_rows(&qp, &order)).unwrap();
        prop_assert!(max_abs_diff(&a.x, &b.x) < 1e-8);
        prop_assert!((a.objective - b.objective).abs() < 1e-9 * (1.0 + a.objective.abs()));
    }

    #[test]
    fn warm_start_from_the_optimum_returns_it(seed in any::<u64>()) {
        let qp = problem(seed);
        let cold = solve_qp(&qp).unwrap();
        let options = QpOptions {
            warm_start: Some(WarmStart { x: cold.x.clone(), active: cold.active_set.clone() }),
            ..QpOptions::default()
        };
        let warm = solve_qp_with(&qp, &options).unwrap();
        prop_assert!(max_abs_diff(&cold.x, &warm.x) < 1e-8);
        prop_assert!(warm.iterations <= cold.iterations);
    }
}

#[test]
fn unconstrained_minimum() {
    let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
    let qp = QuadraticProgram::new(h).with_linear(DVector::from_vec(vec![-2.0, -4.0]));
    let sol = solve_qp(&qp).unwrap();
    assert!(max_abs_diff(&sol.x, &[1.0, 1.0]) < 1e-12);
    assert!((sol.objective + 3.0).abs() < 1e-12);
}

#[test]
fn bound_becomes_active() {
    let h = DMatrix::identity(2, 2);
    let qp = QuadraticProgram::new(h)
        .with_linear(DVector::from_vec(vec![1.0, -1.0]))
        .with_inequalities(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DVector::from_vec(vec![0.0]));
    let sol = solve_qp(&qp).unwrap();
    assert!(max_abs_diff(&sol.x, &[0.0, 1.0]) < 1e-12);
    assert_eq!(sol.active_set, vec![0]);
    assert!((sol.multipliers_ineq[0] - 1.0).abs() < 1e-12);
}

#[test]
fn contradictory_constraints_are_infeasible() {
    let qp = QuadraticProgram::new(DMatrix::identity(1, 1)).with_inequalities(
        DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
        DVector::from_vec(vec![1.0, 0.0]),
    );
    assert!(matches!(solve_qp(&qp), Err(QpError::Infeasible(_))));
}

#[test]
fn flat_descent_direction_is_unbounded() {
    let qp = QuadraticProgram::new(DMatrix::zeros(2, 2)).with_linear(DVector::from_vec(vec![-1.0, 0.0]));
    assert_eq!(solve_qp(&qp), Err(QpError::Unbounded));
}

#[test]
fn flat_direction_blocked_by_a_bound() {
    let qp = QuadraticProgram::new(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]))
        .with_linear(DVector::from_vec(vec![-1.0, 0.0]))
        .with_inequalities(DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]), DVector::from_vec(vec![-3.0]));
    let sol = solve_qp(&qp).unwrap();
    assert!(max_abs_diff(&sol.x, &[3.0, 0.0]) < 1e-12);
}

#[test]
fn malformed_problems_are_rejected() {
    let asym = QuadraticProgram::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]));
    assert!(matches!(solve_qp(&asym), Err(QpError::InvalidProblem(_))));
    let indefinite = QuadraticProgram::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
    assert!(matches!(solve_qp(&indefinite), Err(QpError::InvalidProblem(_))));
    let nan = QuadraticProgram::new(DMatrix::identity(1, 1)).with_linear(DVector::from_vec(vec![f64::NAN]));
    assert!(matches!(solve_qp(&nan), Err(QpError::InvalidProblem(_))));
    let shape = QuadraticProgram::new(DMatrix::identity(2, 2)).with_linear(DVector::zeros(3));
    assert!(matches!(solve_qp(&shape), Err(QpError::InvalidProblem(_))));
}
