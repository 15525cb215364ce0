//! Exact roughness penalty `∫ CS''(x)² dx = βᵀRβ` for cubic B-spline scores.
//!
//! `B''(·|i,4)` is linear on every knot interval, so each entry of `R` is a
//! sum over intervals of integrals of products of two ramps. Those integrals
//! are `Δ/3` (same ramp twice) and `Δ/6` (rising times falling).

use nalgebra::DMatrix;
use thiserror::Error;

use crate::quadrature::gauss_legendre;
use crate::scorecard_model::CharacteristicSpec;
use crate::spline_basis::{
    basis_derivative, build_t_vector, second_deriv_coeffs, KnotConfig, SplineError, TVector,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoughnessError {
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error("characteristic '{name}' declares {declared} coefficients but its penalty block has {built}")]
    DimensionMismatch {
        name: String,
        declared: usize,
        built: usize,
    },
    #[error("expected one smoothness parameter per characteristic ({expected}), got {got}")]
    Lambda2Count { expected: usize, got: usize },
}

/// Symmetric positive semidefinite penalty matrix. Units are
/// (score units)² / (characteristic units)³.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughnessMatrix {
    matrix: DMatrix<f64>,
}

impl RoughnessMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// `βᵀRβ`.
    pub fn penalty(&self, beta: &[f64]) -> f64 {
        let n = self.dim();
        assert_eq!(beta.len(), n, "coefficient vector has the wrong length");
        let mut total = 0.0;
        for j in 0..n {
            let column: f64 = (0..n).map(|i| self.matrix[(i, j)] * beta[i]).sum();
            total += column * beta[j];
        }
        total
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.matrix.amax()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.norm()
    }
}

/// `∫ P²`, `∫ P·N` and `∫ N²` over an interval of the given width.
pub fn ramp_integrals(width: f64) -> (f64, f64, f64) {
    (width / 3.0, width / 6.0, width / 3.0)
}

/// `(m+2)×(m+2)` penalty for the liquid coefficients alone.
pub fn liquid_roughness(knots: &KnotConfig) -> DMatrix<f64> {
    let t = build_t_vector(knots);
    let ts = t.as_slice();
    let coeffs = second_deriv_coeffs(&t);
    let n = t.num_cubic();
    let mut r = DMatrix::<f64>::zeros(n, n);
    for s in 0..t.num_intervals() {
        let width = ts[s + 1] - ts[s];
        if width <= 0.0 {
            continue;
        }
        let (pp, pn, nn) = ramp_integrals(width);
        // only functions s-3..=s have a nonzero piece on interval s
        let first = s.saturating_sub(3);
        let last = s.min(n - 1);
        for i in first..=last {
            let (ai, bi) = (coeffs.a(i, s), coeffs.b(i, s));
            for j in i..=last {
                let (aj, bj) = (coeffs.a(j, s), coeffs.b(j, s));
                r[(i, j)] += ai * aj * pp + (ai * bj + bi * aj) * pn + bi * bj * nn;
            }
        }
    }
    mirror_upper(&mut r);
    r
}

fn mirror_upper(r: &mut DMatrix<f64>) {
    let n = r.nrows();
    for i in 0..n {
        for j in 0..i {
            r[(i, j)] = r[(j, i)];
        }
    }
}

/// Penalty block of one characteristic: the liquid `R` surrounded by zero
/// rows and columns for the discrete attributes before and after it.
pub fn char_roughness_matrix(
    knots: &KnotConfig,
    n_leading_discrete: usize,
    n_trailing_discrete: usize,
) -> RoughnessMatrix {
    let inner = liquid_roughness(knots);
    let n = inner.nrows();
    let dim = n_leading_discrete + n + n_trailing_discrete;
    let mut matrix = DMatrix::zeros(dim, dim);
    matrix
        .view_mut((n_leading_discrete, n_leading_discrete), (n, n))
        .copy_from(&inner);
    RoughnessMatrix { matrix }
}

/// `∫ B''(x|i,4)·B''(x|j,4) dx` by Gauss-Legendre quadrature on every knot
/// interval, with `B''` taken from the derivative recursion applied twice.
pub fn roughness_quadrature_oracle(knots: &KnotConfig) -> RoughnessMatrix {
    let t = build_t_vector(knots);
    let ts = t.as_slice();
    let n = t.num_cubic();
    let (nodes, weights) = gauss_legendre(3);
    let mut matrix = DMatrix::<f64>::zeros(n, n);
    for s in 0..t.num_intervals() {
        let (lo, hi) = (ts[s], ts[s + 1]);
        if hi <= lo {
            continue;
        }
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (node, weight) in nodes.iter().zip(&weights) {
            let x = mid + half * node;
            let second: Vec<f64> = (0..n).map(|i| recursion_second_derivative(&t, i, x)).collect();
            for i in 0..n {
                for j in 0..n {
                    matrix[(i, j)] += weight * half * second[i] * second[j];
                }
            }
        }
    }
    RoughnessMatrix { matrix }
}

/// `B''(x|i,4) = 3·[B'(x|i,3)/(t[i+3]-t[i]) - B'(x|i+1,3)/(t[i+4]-t[i+1])]`.
fn recursion_second_derivative(t: &TVector, i: usize, x: f64) -> f64 {
    let ts = t.as_slice();
    let left = ts[i + 3] - ts[i];
    let right = ts[i + 4] - ts[i + 1];
    let mut value = 0.0;
    if left > 0.0 {
        value += basis_derivative(t, i, 3, x).expect("order-3 index in range") / left;
    }
    if right > 0.0 {
        value -= basis_derivative(t, i + 1, 3, x).expect("order-3 index in range") / right;
    }
    3.0 * value
}

/// Block-diagonal penalty for a whole model, unit smoothness parameters.
pub fn model_roughness_matrix(chars: &[CharacteristicSpec]) -> Result<RoughnessMatrix, RoughnessError> {
    weighted_model_roughness_matrix(chars, &vec![1.0; chars.len()])
}

/// Block-diagonal penalty with characteristic `k`'s block scaled by `lambda2[k]`.
pub fn weighted_model_roughness_matrix(
    chars: &[CharacteristicSpec],
    lambda2: &[f64],
) -> Result<RoughnessMatrix, RoughnessError> {
    if lambda2.len() != chars.len() {
        return Err(RoughnessError::Lambda2Count {
            expected: chars.len(),
            got: lambda2.len(),
        });
    }
    let blocks = chars
        .iter()
        .map(characteristic_block)
        .collect::<Result<Vec<_>, _>>()?;
    let dim = blocks.iter().map(|b| b.dim()).sum();
    let mut matrix = DMatrix::zeros(dim, dim);
    let mut offset = 0;
    for (block, &weight) in blocks.iter().zip(lambda2) {
        let n = block.dim();
        if weight != 0.0 {
            matrix
                .view_mut((offset, offset), (n, n))
                .copy_from(&(block.as_matrix() * weight));
        }
        offset += n;
    }
    Ok(RoughnessMatrix { matrix })
}

/// Penalty block for one characteristic; all zeros when it has no liquid range.
pub fn characteristic_block(spec: &CharacteristicSpec) -> Result<RoughnessMatrix, RoughnessError> {
    let declared = spec.coefficient_count();
    let block = match &spec.liquid_knots {
        Some(knots) => char_roughness_matrix(
            knots,
            spec.leading_discrete.len(),
            spec.trailing_discrete.len(),
        ),
        None => RoughnessMatrix::zeros(spec.leading_discrete.len() + spec.trailing_discrete.len()),
    };
    if block.dim() != declared {
        return Err(RoughnessError::DimensionMismatch {
            name: spec.name.clone(),
            declared,
            built: block.dim(),
        });
    }
    Ok(block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorecard_model::{Attribute, CharacteristicSpec};
    use crate::spline_basis::greville_abscissae;

    const CHAR965: [f64; 10] = [
        -2950.0, -950.0, -750.0, -550.0, -400.0, -300.0, -200.0, -100.0, 80.0, 1425.0,
    ];

    fn knots(k: &[f64]) -> KnotConfig {
        KnotConfig::new(k.to_vec()).unwrap()
    }

    #[test]
    fn bernstein_entries() {
        // B''(x|1,4) = 6(1-x), B''(x|4,4) = 6x on [0,1]
        let r = char_roughness_matrix(&knots(&[0.0, 1.0]), 0, 0);
        assert_eq!(r.dim(), 4);
        assert!((r.get(0, 0) - 12.0).abs() < 1e-12);
        assert!((r.get(3, 3) - 12.0).abs() < 1e-12);
        assert!((r.get(0, 3) - 6.0).abs() < 1e-12);
        assert_eq!(r.get(0, 3), r.get(3, 0));
    }

    #[test]
    fn char965_padding() {
        let r = char_roughness_matrix(&knots(&CHAR965), 0, 1);
        assert_eq!(r.dim(), 13);
        for k in 0..13 {
            assert_eq!(r.get(12, k), 0.0);
            assert_eq!(r.get(k, 12), 0.0);
        }
        assert!(r.get(0, 0) > 0.0);
    }

    #[test]
    fn constants_and_lines_have_zero_penalty() {
        let k = knots(&CHAR965);
        let r = char_roughness_matrix(&k, 0, 0);
        let scale = r.frobenius_norm();
        assert!(r.penalty(&[1.0; 12]).abs() < 1e-12 * scale);
        let g = greville_abscissae(&build_t_vector(&k));
        let rg = r.as_matrix() * nalgebra::DVector::from_vec(g);
        assert!(rg.amax() < 1e-9 * scale);
    }

    #[test]
    fn banded_and_symmetric() {
        let r = char_roughness_matrix(&knots(&CHAR965), 0, 0);
        for i in 0..r.dim() {
            for j in 0..r.dim() {
                assert_eq!(r.get(i, j), r.get(j, i));
                if i.abs_diff(j) > 3 {
                    assert_eq!(r.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn oracle_agrees_on_bernstein_case() {
        let k = knots(&[0.0, 1.0]);
        let closed = char_roughness_matrix(&k, 0, 0);
        let oracle = roughness_quadrature_oracle(&k);
        let diff = (closed.as_matrix() - oracle.as_matrix()).amax();
        assert!(diff < 1e-10 * closed.max_abs());
    }

    fn interval(label: &str, lower: Option<f64>, upper: Option<f64>) -> Attribute {
        Attribute::interval(label, lower, upper, false, false)
    }

    #[test]
    fn worked_expansion_example() {
        // two leading attributes, five liquid attributes (six knots), one trailing
        let spec = CharacteristicSpec::liquid(
            "c",
            knots(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]),
            vec![
                Attribute::values("missing", vec![-2.0]),
                Attribute::values("unknown", vec![-1.0]),
            ],
            vec![interval("high", Some(5.0), None)],
        );
        let r = model_roughness_matrix(std::slice::from_ref(&spec)).unwrap();
        assert_eq!(r.dim(), 11);
        let inner = liquid_roughness(&knots(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]));
        assert_eq!(inner.nrows(), 8);
        assert_eq!(r.as_matrix().view((2, 2), (8, 8)), inner);
        for k in 0..11 {
            for border in [0, 1, 10] {
                assert_eq!(r.get(border, k), 0.0);
                assert_eq!(r.get(k, border), 0.0);
            }
        }
    }

    #[test]
    fn discrete_only_blocks_are_zero() {
        let a = CharacteristicSpec::discrete(
            "a",
            (0..3)
                .map(|i| Attribute::values(&format!("v{i}"), vec![i as f64]))
                .collect(),
        );
        let b = CharacteristicSpec::discrete(
            "b",
            (0..4)
                .map(|i| Attribute::values(&format!("v{i}"), vec![i as f64]))
                .collect(),
        );
        let r = model_roughness_matrix(&[a, b]).unwrap();
        assert_eq!(r.dim(), 7);
        assert_eq!(r.max_abs(), 0.0);
    }

    #[test]
    fn single_block_equals_characteristic_matrix() {
        let spec = CharacteristicSpec::liquid(
            "char965",
            knots(&CHAR965),
            vec![],
            vec![interval("[1425 Inf)", Some(1425.0), None)],
        );
        let r = model_roughness_matrix(std::slice::from_ref(&spec)).unwrap();
        assert_eq!(r, char_roughness_matrix(&knots(&CHAR965), 0, 1));
    }

    #[test]
    fn weighted_blocks_scale_independently() {
        let a = CharacteristicSpec::liquid("a", knots(&[0.0, 1.0, 3.0]), vec![], vec![]);
        let b = CharacteristicSpec::liquid("b", knots(&[0.0, 2.0, 3.0, 4.0]), vec![], vec![]);
        let chars = [a, b];
        let unit = model_roughness_matrix(&chars).unwrap();
        let weighted = weighted_model_roughness_matrix(&chars, &[1.0, 2.0]).unwrap();
        for i in 0..unit.dim() {
            for j in 0..unit.dim() {
                let factor = if i >= 5 && j >= 5 { 2.0 } else { 1.0 };
                assert_eq!(weighted.get(i, j), factor * unit.get(i, j));
            }
        }
        assert!(matches!(
            weighted_model_roughness_matrix(&chars, &[1.0]),
            Err(RoughnessError::Lambda2Count { expected: 2, got: 1 })
        ));
    }
}
