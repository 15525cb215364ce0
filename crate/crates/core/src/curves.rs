//! Characteristic score curves sampled over the liquid range.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::scorecard_model::{FittedModel, ModelError, XScale};

pub const CURVE_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub name: String,
    pub xs: Vec<f64>,
    /// `ln(1 + x)`, present when the characteristic is plotted on a log scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log1p_xs: Option<Vec<f64>>,
    pub cs: Vec<f64>,
    pub lambda2: f64,
    pub dev_divergence: f64,
    pub val_divergence: Option<f64>,
}

/// `points` uniform samples over `[lo, hi]`, both ends included.
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (points - 1) as f64;
            (0..points)
                .map(|i| if i + 1 == points { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

/// Samples the liquid part of `name`. Returns `Ok(None)` for a characteristic
/// without a liquid range.
pub fn sample_curve(fitted: &FittedModel, name: &str, points: usize) -> Result<Option<CurveSample>, ModelError> {
    let k = fitted.spec.index_of(name)?;
    let spec = &fitted.spec.characteristics[k];
    let Some(knots) = &spec.liquid_knots else {
        return Ok(None);
    };
    let segment = fitted.segment(name)?;
    let xs = uniform_grid(knots.first(), knots.last(), points);
    let cs = xs
        .iter()
        .map(|&x| spec.score(segment, x))
        .collect::<Result<Vec<_>, _>>()?;
    let log1p_xs = match spec.xscale {
        XScale::Natural => None,
        XScale::Log1p => Some(xs.iter().map(|x| x.ln_1p()).collect()),
    };
    Ok(Some(CurveSample {
        name: name.to_string(),
        xs,
        log1p_xs,
        cs,
        lambda2: fitted.lambda2[k],
        dev_divergence: fitted.dev_divergence,
        val_divergence: fitted.val_divergence,
    }))
}

/// Curves of every liquid characteristic, in spec order.
pub fn sample_all(fitted: &FittedModel, points: usize) -> Result<Vec<CurveSample>, ModelError> {
    let mut out = Vec::new();
    for c in &fitted.spec.characteristics {
        if let Some(curve) = sample_curve(fitted, &c.name, points)? {
            out.push(curve);
        }
    }
    Ok(out)
}

impl CurveSample {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        match &self.log1p_xs {
            Some(logs) => {
                w.write_record(["x", "log1p_x", "cs"])?;
                for ((x, l), y) in self.xs.iter().zip(logs).zip(&self.cs) {
                    w.write_record([fmt(*x), fmt(*l), fmt(*y)])?;
                }
            }
            None => {
                w.write_record(["x", "cs"])?;
                for (x, y) in self.xs.iter().zip(&self.cs) {
                    w.write_record([fmt(*x), fmt(*y)])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn range(&self) -> f64 {
        value_range(&self.cs)
    }

    /// Max deviation from the least-squares line, relative to the curve range.
    pub fn relative_linearity_deviation(&self) -> f64 {
        relative_linearity_deviation(&self.xs, &self.cs)
    }
}

fn fmt(v: f64) -> String {
    // shortest round-trip representation
    format!("{v:?}")
}

pub fn value_range(ys: &[f64]) -> f64 {
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if ys.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Intercept and slope of the ordinary least-squares line through the points.
pub fn least_squares_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

pub fn max_linearity_deviation(xs: &[f64], ys: &[f64]) -> f64 {
    let (a, b) = least_squares_line(xs, ys);
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (y - (a + b * x)).abs())
        .fold(0.0, f64::max)
}

/// [`max_linearity_deviation`] divided by the range of `ys`; 0 for a flat curve.
pub fn relative_linearity_deviation(xs: &[f64], ys: &[f64]) -> f64 {
    let range = value_range(ys);
    if range == 0.0 {
        return 0.0;
    }
    max_linearity_deviation(xs, ys) / range
}

/// Coefficient of determination of the least-squares line.
pub fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let (a, b) = least_squares_line(xs, ys);
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// True when consecutive values never decrease (or never increase) by more
/// than `tol`.
pub fn is_monotone(ys: &[f64], tol: f64) -> bool {
    let up = ys.windows(2).all(|w| w[1] - w[0] >= -tol);
    let down = ys.windows(2).all(|w| w[1] - w[0] <= tol);
    up || down
}
