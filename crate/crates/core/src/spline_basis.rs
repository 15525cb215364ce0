//! Cubic B-spline basis on a padded knot sequence.
//!
//! Indices are 0-based throughout: basis function `i` of order `j` is the
//! function supported on `[t[i], t[i + j]]`. For `m` knots the padded sequence
//! has `m + 6` entries, there are `m + 5` order-1 indicators (the first three
//! and last three are degenerate) and `m + 2` cubic functions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest supported spline order (cubic).
pub const CUBIC: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("at least two knots are required, got {0}")]
    TooFewKnots(usize),
    #[error("knot {index} is not finite ({value})")]
    NonFiniteKnot { index: usize, value: f64 },
    #[error("knots must be strictly increasing, but k[{index}] = {prev} and k[{}] = {next}", index + 1)]
    NotIncreasing { index: usize, prev: f64, next: f64 },
    #[error("spline order {0} is not supported (expected 1..=4)")]
    UnsupportedOrder(usize),
    #[error("basis index {index} is out of range for order {order} (expected < {limit})")]
    IndexOutOfRange {
        index: usize,
        order: usize,
        limit: usize,
    },
    #[error("the derivative of an order-1 basis function is not defined")]
    DerivativeOfIndicator,
}

/// Strictly increasing, finite knots `k[0] < k[1] < … < k[m-1]`, `m >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct KnotConfig {
    knots: Vec<f64>,
}

impl KnotConfig {
    pub fn new(knots: Vec<f64>) -> Result<Self, SplineError> {
        if knots.len() < 2 {
            return Err(SplineError::TooFewKnots(knots.len()));
        }
        if let Some((index, &value)) = knots.iter().enumerate().find(|(_, k)| !k.is_finite()) {
            return Err(SplineError::NonFiniteKnot { index, value });
        }
        if let Some(index) = knots.windows(2).position(|w| w[0] >= w[1]) {
            return Err(SplineError::NotIncreasing {
                index,
                prev: knots[index],
                next: knots[index + 1],
            });
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of knots `m`.
    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> f64 {
        self.knots[0]
    }

    pub fn last(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Closed liquid range membership, `k[0] <= x <= k[m-1]`.
    pub fn contains(&self, x: f64) -> bool {
        x >= self.first() && x <= self.last()
    }

    /// Number of cubic coefficients, `m + 2`.
    pub fn num_cubic_coefficients(&self) -> usize {
        self.knots.len() + 2
    }

    /// Knots multiplied by a positive factor.
    pub fn scaled(&self, factor: f64) -> Result<Self, SplineError> {
        Self::new(self.knots.iter().map(|k| k * factor).collect())
    }
}

impl TryFrom<Vec<f64>> for KnotConfig {
    type Error = SplineError;

    fn try_from(knots: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(knots)
    }
}

impl From<KnotConfig> for Vec<f64> {
    fn from(k: KnotConfig) -> Self {
        k.knots
    }
}

/// The padded sequence: four copies of the first knot, the interior knots,
/// four copies of the last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct TVector {
    t: Vec<f64>,
}

pub fn build_t_vector(knots: &KnotConfig) -> TVector {
    let k = knots.knots();
    let m = k.len();
    let mut t = Vec::with_capacity(m + 6);
    t.extend(std::iter::repeat_n(k[0], 4));
    t.extend_from_slice(&k[1..m - 1]);
    t.extend(std::iter::repeat_n(k[m - 1], 4));
    TVector { t }
}

impl TVector {
    pub fn from_knots(knots: &KnotConfig) -> Self {
        build_t_vector(knots)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.t
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Number of knots `m` the sequence was built from.
    pub fn num_knots(&self) -> usize {
        self.t.len() - 6
    }

    /// `m + 2`, the cubic basis dimension.
    pub fn num_cubic(&self) -> usize {
        self.t.len() - 4
    }

    /// Number of order-`order` functions the sequence supports, `m + 6 - order`.
    pub fn num_functions(&self, order: usize) -> usize {
        self.t.len() - order
    }

    /// Number of order-1 intervals `[t[s], t[s+1]]`, `m + 5`.
    pub fn num_intervals(&self) -> usize {
        self.t.len() - 1
    }

    pub fn lower(&self) -> f64 {
        self.t[0]
    }

    pub fn upper(&self) -> f64 {
        self.t[self.t.len() - 1]
    }

    /// Order-1 indicator `B(x | k, 1)`. Degenerate intervals are identically
    /// zero; the last non-degenerate interval `[t[m+1], t[m+2]]` is closed on
    /// the right so the basis covers `x = k[m-1]`.
    pub fn indicator(&self, k: usize, x: f64) -> f64 {
        let (lo, hi) = (self.t[k], self.t[k + 1]);
        if hi <= lo {
            return 0.0;
        }
        let closed_right = k + 1 == self.num_cubic();
        let inside = x >= lo && (x < hi || (closed_right && x == hi));
        if inside {
            1.0
        } else {
            0.0
        }
    }

    /// Every order-`order` basis function at `x`, indices `0..m+6-order`.
    pub fn eval_all(&self, order: usize, x: f64) -> Result<Vec<f64>, SplineError> {
        check_order(order)?;
        let t = &self.t;
        let mut values: Vec<f64> = (0..self.num_intervals())
            .map(|k| self.indicator(k, x))
            .collect();
        for j in 2..=order {
            let next: Vec<f64> = (0..self.num_functions(j))
                .map(|i| {
                    let left = t[i + j - 1] - t[i];
                    let right = t[i + j] - t[i + 1];
                    let t1 = if left > 0.0 {
                        (x - t[i]) / left * values[i]
                    } else {
                        0.0
                    };
                    let t2 = if right > 0.0 {
                        (t[i + j] - x) / right * values[i + 1]
                    } else {
                        0.0
                    };
                    t1 + t2
                })
                .collect();
            values = next;
        }
        Ok(values)
    }
}

fn check_order(order: usize) -> Result<(), SplineError> {
    if (1..=CUBIC).contains(&order) {
        Ok(())
    } else {
        Err(SplineError::UnsupportedOrder(order))
    }
}

fn check_index(t: &TVector, i: usize, order: usize) -> Result<(), SplineError> {
    let limit = t.num_functions(order);
    if i < limit {
        Ok(())
    } else {
        Err(SplineError::IndexOutOfRange {
            index: i,
            order,
            limit,
        })
    }
}

/// `B(x | i, j)` by the two-term recursion.
pub fn basis_eval(t: &TVector, i: usize, order: usize, x: f64) -> Result<f64, SplineError> {
    check_order(order)?;
    check_index(t, i, order)?;
    Ok(eval_recursive(t.as_slice(), t, i, order, x))
}

fn eval_recursive(ts: &[f64], t: &TVector, i: usize, j: usize, x: f64) -> f64 {
    if j == 1 {
        return t.indicator(i, x);
    }
    let left = ts[i + j - 1] - ts[i];
    let right = ts[i + j] - ts[i + 1];
    let mut value = 0.0;
    if left > 0.0 {
        value += (x - ts[i]) / left * eval_recursive(ts, t, i, j - 1, x);
    }
    if right > 0.0 {
        value += (ts[i + j] - x) / right * eval_recursive(ts, t, i + 1, j - 1, x);
    }
    value
}

/// Row `r` holds `B(xs[r] | i, order)` for `i in 0..m+2`; vacuous
/// low-order columns are present and zero.
pub fn basis_matrix(t: &TVector, order: usize, xs: &[f64]) -> Result<Vec<Vec<f64>>, SplineError> {
    check_order(order)?;
    let cols = t.num_cubic();
    xs.iter()
        .map(|&x| {
            let mut row = t.eval_all(order, x)?;
            row.resize(cols, 0.0);
            Ok(row)
        })
        .collect()
}

/// `B'(x | i, j) = (j-1)·[B(x|i,j-1)/(t[i+j-1]-t[i]) - B(x|i+1,j-1)/(t[i+j]-t[i+1])]`,
/// dropping terms with a zero denominator.
pub fn basis_derivative(t: &TVector, i: usize, order: usize, x: f64) -> Result<f64, SplineError> {
    check_order(order)?;
    if order == 1 {
        return Err(SplineError::DerivativeOfIndicator);
    }
    check_index(t, i, order)?;
    let ts = t.as_slice();
    let lower = order - 1;
    let left = ts[i + order - 1] - ts[i];
    let right = ts[i + order] - ts[i + 1];
    let mut value = 0.0;
    if left > 0.0 {
        value += eval_recursive(ts, t, i, lower, x) / left;
    }
    if right > 0.0 {
        value -= eval_recursive(ts, t, i + 1, lower, x) / right;
    }
    Ok(lower as f64 * value)
}

/// Greville abscissae `(t[i+1] + t[i+2] + t[i+3]) / 3` of the cubic basis.
/// Coefficients equal to these reproduce `CS(x) = x`.
pub fn greville_abscissae(t: &TVector) -> Vec<f64> {
    let ts = t.as_slice();
    (0..t.num_cubic())
        .map(|i| (ts[i + 1] + ts[i + 2] + ts[i + 3]) / 3.0)
        .collect()
}

fn ratio_or_zero(numerator: f64, a: f64, b: f64) -> f64 {
    let denominator = a * b;
    if a > 0.0 && b > 0.0 {
        numerator / denominator
    } else {
        0.0
    }
}

/// Decomposition of `B''(x | i, 4)` into ramps on the order-1 intervals:
/// `B''(x|i,4) = Σ_k [a(i,k)·P(x|k) + b(i,k)·N(x|k)]·B(x|k,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondDerivCoeffs {
    t: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub f: Vec<f64>,
}

pub fn second_deriv_coeffs(t: &TVector) -> SecondDerivCoeffs {
    let ts = t.as_slice();
    let n = t.num_cubic();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut f = vec![0.0; n];
    for i in 0..n {
        c[i] = ratio_or_zero(6.0, ts[i + 3] - ts[i], ts[i + 2] - ts[i]);
        d[i] = ratio_or_zero(-6.0, ts[i + 3] - ts[i], ts[i + 3] - ts[i + 1]);
        e[i] = ratio_or_zero(-6.0, ts[i + 4] - ts[i + 1], ts[i + 3] - ts[i + 1]);
        f[i] = ratio_or_zero(6.0, ts[i + 4] - ts[i + 1], ts[i + 4] - ts[i + 2]);
    }
    SecondDerivCoeffs {
        t: ts.to_vec(),
        c,
        d,
        e,
        f,
    }
}

impl SecondDerivCoeffs {
    pub fn num_cubic(&self) -> usize {
        self.c.len()
    }

    pub fn num_intervals(&self) -> usize {
        self.t.len() - 1
    }

    /// Weight of the rising ramp `P(x|k)` for function `i`; nonzero only for
    /// `k ∈ {i, i+1, i+2}`.
    pub fn a(&self, i: usize, k: usize) -> f64 {
        match k.checked_sub(i) {
            Some(0) => self.c[i],
            Some(1) => self.d[i] + self.e[i],
            Some(2) => self.f[i],
            _ => 0.0,
        }
    }

    /// Weight of the falling ramp `N(x|k)` for function `i`; nonzero only for
    /// `k ∈ {i+1, i+2, i+3}`.
    pub fn b(&self, i: usize, k: usize) -> f64 {
        match k.checked_sub(i) {
            Some(1) => self.c[i],
            Some(2) => self.d[i] + self.e[i],
            Some(3) => self.f[i],
            _ => 0.0,
        }
    }

    /// `(x - t[k]) / (t[k+1] - t[k])`, zero on degenerate intervals.
    pub fn rising_ramp(&self, k: usize, x: f64) -> f64 {
        let width = self.t[k + 1] - self.t[k];
        if width > 0.0 {
            (x - self.t[k]) / width
        } else {
            0.0
        }
    }

    /// `(t[k+1] - x) / (t[k+1] - t[k])`, zero on degenerate intervals.
    pub fn falling_ramp(&self, k: usize, x: f64) -> f64 {
        let width = self.t[k + 1] - self.t[k];
        if width > 0.0 {
            (self.t[k + 1] - x) / width
        } else {
            0.0
        }
    }

    /// Linear piece of `B''(· | i, 4)` on interval `k`.
    pub fn piece(&self, i: usize, k: usize, x: f64) -> f64 {
        self.a(i, k) * self.rising_ramp(k, x) + self.b(i, k) * self.falling_ramp(k, x)
    }

    /// `B''(x | i, 4)` reassembled from the interval pieces.
    pub fn second_derivative(&self, t: &TVector, i: usize, x: f64) -> f64 {
        (0..self.num_intervals())
            .filter(|&k| self.t[k + 1] > self.t[k])
            .map(|k| self.piece(i, k, x) * t.indicator(k, x))
            .sum()
    }
}
