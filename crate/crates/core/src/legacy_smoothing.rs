//! Smoothing a traditional step-function scorecard.
//!
//! Each characteristic is refitted as a liquid characteristic with knots at
//! its finite bin boundaries. Value-set bins (sentinel codes) and bins with an
//! infinite end become discrete attributes. The fitted score is put on the
//! weight-of-evidence scale and each bin's new weight is the sample-weighted
//! average of the fitted score over the development records in that bin.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DataError, Dataset};
use crate::divergence_fit::{woe_rescale, FitContext, FitError, FitParams};
use crate::scorecard_model::{Attribute, CharacteristicSpec, ModelError, ModelSpec, Pattern, Predicate};
use crate::spline_basis::{KnotConfig, SplineError};
use crate::summation::Compensated;

pub const STEP_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SmoothError {
    #[error("development data is empty")]
    EmptyData,
    #[error("characteristic '{name}': bin '{label}' is not numeric ({reason})")]
    NonNumericBin { name: String, label: String, reason: String },
    #[error("characteristic '{name}': sentinel bin '{label}' lies inside the binned range")]
    SentinelInsideRange { name: String, label: String },
    #[error("characteristic '{name}': {source}")]
    Fit { name: String, source: FitError },
    #[error("characteristic '{name}': {source}")]
    Knots { name: String, source: SplineError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepBin {
    pub label: String,
    #[serde(flatten)]
    pub predicate: Predicate,
    pub weight: f64,
    /// Set when no development weight fell in the bin and the weight was kept.
    #[serde(default)]
    pub flagged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_weight: Option<f64>,
}

impl StepBin {
    pub fn interval(label: &str, lower: Option<f64>, upper: Option<f64>, lower_closed: bool, upper_closed: bool, weight: f64) -> Self {
        Self {
            label: label.to_string(),
            predicate: Predicate::Interval {
                lower,
                upper,
                lower_closed,
                upper_closed,
            },
            weight,
            flagged: false,
            original_weight: None,
        }
    }

    pub fn values(label: &str, values: Vec<f64>, weight: f64) -> Self {
        Self {
            label: label.to_string(),
            predicate: Predicate::Values { values },
            weight,
            flagged: false,
            original_weight: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingInfo {
    pub lambda2: f64,
    pub pattern: Pattern,
    pub knots: Vec<f64>,
    pub dev_divergence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCharacteristic {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    pub bins: Vec<StepBin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<SmoothingInfo>,
}

impl StepCharacteristic {
    pub fn column_name(&self) -> &str {
        self.column.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepScorecard {
    pub schema_version: u32,
    pub characteristics: Vec<StepCharacteristic>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SmoothOptions {
    /// Smoothness per characteristic; missing names use 0.
    pub lambda2: BTreeMap<String, f64>,
    /// Opt-in pattern per characteristic; missing names are unconstrained.
    pub patterns: BTreeMap<String, Pattern>,
}

fn check_bin(name: &str, bin: &StepBin) -> Result<(), SmoothError> {
    let bad = |reason: &str| SmoothError::NonNumericBin {
        name: name.to_string(),
        label: bin.label.clone(),
        reason: reason.to_string(),
    };
    if !bin.weight.is_finite() {
        return Err(bad("weight is not finite"));
    }
    match &bin.predicate {
        Predicate::Values { values } => {
            if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return Err(bad("value set must be nonempty and finite"));
            }
        }
        Predicate::Interval { lower, upper, .. } => {
            if lower.is_some_and(|l| !l.is_finite()) || upper.is_some_and(|u| !u.is_finite()) {
                return Err(bad("interval bounds must be finite or absent"));
            }
            if let (Some(l), Some(u)) = (lower, upper) {
                if l > u {
                    return Err(bad("lower bound exceeds upper bound"));
                }
            }
        }
    }
    Ok(())
}

/// The liquid characteristic a step characteristic is refitted as.
pub fn liquid_spec(card: &StepCharacteristic, lambda2: f64, pattern: Pattern) -> Result<CharacteristicSpec, SmoothError> {
    let name = &card.name;
    for bin in &card.bins {
        check_bin(name, bin)?;
    }
    let mut bounds: Vec<f64> = card
        .bins
        .iter()
        .filter_map(|b| match b.predicate {
            Predicate::Interval { lower, upper, .. } => Some([lower, upper]),
            Predicate::Values { .. } => None,
        })
        .flatten()
        .flatten()
        .collect();
    bounds.sort_by(f64::total_cmp);
    bounds.dedup();

    let attribute = |b: &StepBin, predicate: Predicate| Attribute {
        label: b.label.clone(),
        predicate,
    };

    let mut spec = if bounds.len() < 2 {
        let attrs = card.bins.iter().map(|b| attribute(b, b.predicate.clone())).collect();
        CharacteristicSpec::discrete(name, attrs)
    } else {
        let knots = KnotConfig::new(bounds.clone()).map_err(|source| SmoothError::Knots {
            name: name.clone(),
            source,
        })?;
        let (lo, hi) = (knots.first(), knots.last());
        let mut leading = Vec::new();
        let mut trailing = Vec::new();
        for b in &card.bins {
            match &b.predicate {
                Predicate::Values { values } => {
                    if values.iter().all(|v| *v < lo) {
                        leading.push(attribute(b, b.predicate.clone()));
                    } else if values.iter().all(|v| *v > hi) {
                        trailing.push(attribute(b, b.predicate.clone()));
                    } else {
                        return Err(SmoothError::SentinelInsideRange {
                            name: name.clone(),
                            label: b.label.clone(),
                        });
                    }
                }
                Predicate::Interval { lower: None, upper, .. } => {
                    // the liquid range owns its closed end point
                    leading.push(attribute(
                        b,
                        Predicate::Interval {
                            lower: None,
                            upper: *upper,
                            lower_closed: false,
                            upper_closed: false,
                        },
                    ));
                }
                Predicate::Interval { upper: None, lower, .. } => {
                    trailing.push(attribute(
                        b,
                        Predicate::Interval {
                            lower: *lower,
                            upper: None,
                            lower_closed: false,
                            upper_closed: false,
                        },
                    ));
                }
                Predicate::Interval { .. } => {}
            }
        }
        CharacteristicSpec::liquid(name, knots, leading, trailing)
    };
    spec = spec.with_column(card.column_name()).with_lambda2(lambda2);
    if spec.has_liquid() {
        spec = spec.with_pattern(pattern);
    }
    Ok(spec)
}

/// Sample-weighted averages of `cs` over the records in each bin. `None`
/// where the bin holds no weight.
pub fn bin_averages(bins: &[StepBin], xs: &[f64], weights: &[f64], cs: &[f64]) -> Vec<Option<f64>> {
    bins.par_iter()
        .map(|bin| {
            let mut w = Compensated::default();
            let mut s = Compensated::default();
            for ((x, wt), c) in xs.iter().zip(weights).zip(cs) {
                if *wt != 0.0 && bin.predicate.matches(*x) {
                    w.add(*wt);
                    s.add(wt * c);
                }
            }
            let total = w.value();
            (total > 0.0).then(|| s.value() / total)
        })
        .collect()
}

/// Replaces bin weights with the averages; empty bins keep their weight and
/// are flagged.
pub fn rediscretize(card: &StepCharacteristic, averages: &[Option<f64>]) -> StepCharacteristic {
    let mut out = card.clone();
    for (bin, avg) in out.bins.iter_mut().zip(averages) {
        bin.original_weight = Some(bin.weight);
        match avg {
            Some(v) => {
                bin.weight = *v;
                bin.flagged = false;
            }
            None => bin.flagged = true,
        }
    }
    out
}

fn smooth_one(card: &StepCharacteristic, data: &Dataset, options: &SmoothOptions) -> Result<StepCharacteristic, SmoothError> {
    let lambda2 = options.lambda2.get(&card.name).copied().unwrap_or(0.0);
    let pattern = options.patterns.get(&card.name).copied().unwrap_or_default();
    let spec = liquid_spec(card, lambda2, pattern)?;
    let model = ModelSpec::new(vec![spec]);
    let wrap = |source| SmoothError::Fit {
        name: card.name.clone(),
        source,
    };
    let ctx = FitContext::new(&model, data, None).map_err(wrap)?;
    let fitted = ctx.fit(&FitParams::from_spec(&model)).map_err(wrap)?;
    let fitted = woe_rescale(&fitted).map_err(wrap)?;
    let xs = data.require_column(card.column_name())?;
    let cs = xs
        .iter()
        .map(|&x| fitted.characteristic_score(&card.name, x))
        .collect::<Result<Vec<_>, _>>()?;
    let averages = bin_averages(&card.bins, xs, data.weights(), &cs);
    let mut out = rediscretize(card, &averages);
    out.smoothing = Some(SmoothingInfo {
        lambda2,
        pattern: model.characteristics[0].pattern,
        knots: model.characteristics[0]
            .liquid_knots
            .as_ref()
            .map(|k| k.knots().to_vec())
            .unwrap_or_default(),
        dev_divergence: fitted.dev_divergence,
    });
    Ok(out)
}

pub fn smooth_step_scorecard(card: &StepScorecard, data: &Dataset, options: &SmoothOptions) -> Result<StepScorecard, SmoothError> {
    if data.is_empty() {
        return Err(SmoothError::EmptyData);
    }
    for name in options.lambda2.keys().chain(options.patterns.keys()) {
        if !card.characteristics.iter().any(|c| &c.name == name) {
            return Err(ModelError::UnknownCharacteristic(name.clone()).into());
        }
    }
    let characteristics = card
        .characteristics
        .par_iter()
        .map(|c| smooth_one(c, data, options))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StepScorecard {
        schema_version: STEP_SCHEMA_VERSION,
        characteristics,
    })
}
