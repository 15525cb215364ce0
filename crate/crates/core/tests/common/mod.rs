#![allow(dead_code)]

use liquid_core::curves::{least_squares_line, CurveSample};
use liquid_core::dataset::Dataset;
use liquid_core::scorecard_model::{Attribute, CharacteristicSpec, ModelSpec};
use liquid_core::synth::{SynthCharacteristic, SynthSpec, TrueCurve, ValueDistribution};
use liquid_core::{KnotConfig, QuadraticProgram};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub const CHAR965: [f64; 10] = [
    -2950.0, -950.0, -750.0, -550.0, -400.0, -300.0, -200.0, -100.0, 80.0, 1425.0,
];

pub fn char965_knots() -> KnotConfig {
    KnotConfig::new(CHAR965.to_vec()).unwrap()
}

/// Char965 knots with two extra knots inside every interval.
pub fn tripled_char965_knots() -> KnotConfig {
    let mut k = Vec::new();
    for w in CHAR965.windows(2) {
        let step = (w[1] - w[0]) / 3.0;
        k.extend([w[0], w[0] + step, w[0] + 2.0 * step]);
    }
    k.push(*CHAR965.last().unwrap());
    KnotConfig::new(k).unwrap()
}

pub fn char965_characteristic(name: &str, knots: KnotConfig) -> CharacteristicSpec {
    CharacteristicSpec::liquid(
        name,
        knots,
        vec![],
        vec![Attribute::interval("[1425 Inf)", Some(1425.0), None, false, false)],
    )
}

pub fn char965_model(knots: KnotConfig) -> ModelSpec {
    ModelSpec::new(vec![char965_characteristic("char965", knots)])
}

/// Monotone log-odds on the Char965 scale.
pub fn char965_truth() -> TrueCurve {
    TrueCurve::Logistic {
        location: -500.0,
        scale: 250.0,
        low: -1.0,
        high: 1.0,
    }
}

pub fn char965_synth(rows: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        schema_version: 1,
        rows,
        seed,
        intercept: 0.5,
        characteristics: vec![SynthCharacteristic::new(
            "char965",
            ValueDistribution::Normal { mean: -400.0, sd: 700.0 },
            char965_truth(),
        )
        .with_clip(-2950.0, 2000.0)],
    }
}

/// Strictly increasing knots: `n` points with random gaps in `[0.1, 3)`
/// starting at a random offset.
pub fn random_knots<R: Rng>(rng: &mut R, n: usize) -> KnotConfig {
    let mut x = rng.random_range(-50.0..50.0);
    let mut k = Vec::with_capacity(n);
    for _ in 0..n {
        k.push(x);
        x += rng.random_range(0.1..3.0);
    }
    KnotConfig::new(k).unwrap()
}

/// RMS distance from the truth after the best affine map of the fitted
/// curve onto it.
pub fn aligned_rms(curve: &CurveSample, truth: &TrueCurve) -> f64 {
    let t: Vec<f64> = curve.xs.iter().map(|&x| truth.eval(x)).collect();
    let (a, b) = least_squares_line(&curve.cs, &t);
    let ss: f64 = curve
        .cs
        .iter()
        .zip(&t)
        .map(|(y, tv)| (a + b * y - tv).powi(2))
        .sum();
    (ss / t.len() as f64).sqrt()
}

pub fn max_rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(b.amax());
    if scale == 0.0 {
        return (a - b).amax();
    }
    (a - b).amax() / scale
}

/// Minimum over all working sets of the equality-constrained KKT solutions
/// that are feasible. Exact for strictly convex problems.
pub fn enumerate_qp(qp: &QuadraticProgram) -> Option<(DVector<f64>, f64)> {
    let p = qp.dim();
    let n_eq = qp.a_eq.nrows();
    let n_in = qp.a_ineq.nrows();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << n_in) {
        let active: Vec<usize> = (0..n_in).filter(|i| mask & (1 << i) != 0).collect();
        let k = n_eq + active.len();
        if k > p {
            continue;
        }
        let mut kkt = DMatrix::zeros(p + k, p + k);
        let mut rhs = DVector::zeros(p + k);
        kkt.view_mut((0, 0), (p, p)).copy_from(&qp.h);
        for i in 0..p {
            rhs[i] = -qp.linear[i];
        }
        for (r, (row, b)) in (0..n_eq)
            .map(|i| (qp.a_eq.row(i).into_owned(), qp.b_eq[i]))
            .chain(active.iter().map(|&i| (qp.a_ineq.row(i).into_owned(), qp.b_ineq[i])))
            .enumerate()
        {
            for j in 0..p {
                kkt[(p + r, j)] = row[j];
                kkt[(j, p + r)] = row[j];
            }
            rhs[p + r] = b;
        }
        let Some(sol) = kkt.full_piv_lu().solve(&rhs) else {
            continue;
        };
        let x = sol.rows(0, p).into_owned();
        let feasible_eq = (0..n_eq).all(|i| (qp.a_eq.row(i).dot(&x.transpose()) - qp.b_eq[i]).abs() < 1e-7);
        let feasible_in = (0..n_in).all(|i| qp.a_ineq.row(i).dot(&x.transpose()) >= qp.b_ineq[i] - 1e-9);
        if !(feasible_eq && feasible_in) {
            continue;
        }
        let obj = qp.objective(&x);
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((x, obj));
        }
    }
    best
}

/// Strictly convex problem with up to one equality and up to six
/// inequalities, feasible by construction.
pub fn random_qp<R: Rng>(rng: &mut R) -> QuadraticProgram {
    let p = rng.random_range(2..=6);
    let m = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    let mut h = m.transpose() * &m;
    for i in 0..p {
        h[(i, i)] += 0.1;
    }
    let h = (&h + h.transpose()) * 0.5;
    let c = DVector::from_fn(p, |_, _| rng.random_range(-2.0..2.0));
    let x0 = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
    let n_eq = usize::from(rng.random_bool(0.5)).min(p - 1);
    let n_in = rng.random_range(0..=6);
    let a_eq = DMatrix::from_fn(n_eq, p, |_, _| rng.random_range(-1.0..1.0));
    let b_eq = &a_eq * &x0;
    let a_in = DMatrix::from_fn(n_in, p, |_, _| rng.random_range(-1.0..1.0));
    let slack = DVector::from_fn(n_in, |_, _| rng.random_range(0.0..0.5));
    let b_in = &a_in * &x0 - slack;
    QuadraticProgram::new(h)
        .with_linear(c)
        .with_equalities(a_eq, b_eq)
        .with_inequalities(a_in, b_in)
}

/// Class means and covariances by explicit centered sums over dense rows.
pub struct TwoPassMoments {
    pub mean_good: DVector<f64>,
    pub mean_bad: DVector<f64>,
    pub cov_good: DMatrix<f64>,
    pub cov_bad: DMatrix<f64>,
}

pub fn two_pass_moments(spec: &ModelSpec, data: &Dataset) -> TwoPassMoments {
    let p = spec.dim();
    let columns: Vec<&[f64]> = spec
        .characteristics
        .iter()
        .map(|c| data.column(c.column_name()).unwrap())
        .collect();
    let rows: Vec<DVector<f64>> = (0..data.len())
        .map(|r| {
            let values: Vec<f64> = columns.iter().map(|c| c[r]).collect();
            DVector::from_vec(spec.expand_values(&values).unwrap())
        })
        .collect();
    let class = |good: bool| {
        let idx: Vec<usize> = (0..data.len()).filter(|&r| data.is_good(r) == good).collect();
        let w: f64 = idx.iter().map(|&r| data.weights()[r]).sum();
        let mut mean = DVector::zeros(p);
        for &r in &idx {
            mean += &rows[r] * data.weights()[r];
        }
        mean /= w;
        let mut cov = DMatrix::zeros(p, p);
        for &r in &idx {
            let d = &rows[r] - &mean;
            cov += &d * d.transpose() * data.weights()[r];
        }
        cov /= w;
        (mean, cov)
    };
    let (mean_good, cov_good) = class(true);
    let (mean_bad, cov_bad) = class(false);
    TwoPassMoments {
        mean_good,
        mean_bad,
        cov_good,
        cov_bad,
    }
}
