//! Greedy per-characteristic smoothness search against validation divergence.
//!
//! Characteristics are ordered by leave-one-out marginal contribution: the
//! validation divergence of the full model minus that of the model refitted
//! without the characteristic. Each liquid characteristic in turn is swept
//! over the grid with the others held at their current values, the best
//! value is frozen, and the search moves on.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::divergence_fit::{FitContext, FitError, FitParams};
use crate::scorecard_model::ModelSpec;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fit failed: {0}")]
    Fit(#[from] FitError),
    #[error("fit without '{name}' failed: {source}")]
    WithoutCharacteristic { name: String, source: FitError },
    #[error("step {step} ('{name}') at smoothness {lambda2}: {source}")]
    Step {
        step: usize,
        name: String,
        lambda2: f64,
        source: FitError,
    },
    #[error("fit produced no validation divergence")]
    MissingValidation,
}

/// `{0} ∪ {10^(k/2) : k = 0..=20}`.
pub fn default_grid() -> Vec<f64> {
    let mut grid = vec![0.0];
    for k in 0..=20 {
        let v = if k % 2 == 0 {
            10f64.powi(k / 2)
        } else {
            10f64.powf(k as f64 / 2.0)
        };
        grid.push(v);
    }
    grid
}

pub fn validate_grid(grid: &[f64]) -> Result<(), TuneError> {
    if grid.is_empty() {
        return Err(TuneError::InvalidGrid("grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(TuneError::InvalidGrid(format!("values must be finite and >= 0, got {bad}")));
    }
    if !grid.contains(&0.0) {
        return Err(TuneError::InvalidGrid("grid must contain 0".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub name: String,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub lambda2: f64,
    pub val_divergence: f64,
    pub dev_divergence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneStep {
    pub characteristic: String,
    /// Smoothness of every characteristic when the step started.
    pub lambda2_before: BTreeMap<String, f64>,
    pub rows: Vec<TraceRow>,
    pub chosen_lambda2: f64,
    pub val_divergence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub schema_version: u32,
    pub grid: Vec<f64>,
    /// Characteristic names by contribution, largest first.
    pub ordering: Vec<String>,
    pub contributions: Vec<Contribution>,
    /// `None` for characteristics without a liquid range.
    pub chosen_lambda2: BTreeMap<String, Option<f64>>,
    pub trace: Vec<TuneStep>,
    pub baseline_val_divergence: f64,
    pub final_val_divergence: f64,
}

impl TuneReport {
    /// Fit parameters that replay the chosen smoothness map.
    pub fn fit_params(&self, spec: &ModelSpec) -> FitParams {
        let mut params = FitParams::from_spec(spec);
        for (k, c) in spec.characteristics.iter().enumerate() {
            if let Some(Some(v)) = self.chosen_lambda2.get(&c.name) {
                params.lambda2[k] = *v;
            }
        }
        params
    }
}

fn val_divergence(ctx: &FitContext, params: &FitParams) -> Result<(f64, f64), FitError> {
    let fitted = ctx.fit(params)?;
    Ok((fitted.val_divergence.unwrap_or(f64::NAN), fitted.dev_divergence))
}

/// Leave-one-out contributions at the spec's smoothness values, largest
/// first. Ties keep spec order. Removing the only characteristic leaves a
/// constant score with divergence 0.
pub fn marginal_contributions(spec: &ModelSpec, dev: &Dataset, val: &Dataset) -> Result<Vec<Contribution>, TuneError> {
    let ctx = FitContext::new(spec, dev, Some(val))?;
    let full = ctx.fit(&FitParams::from_spec(spec))?;
    let full_val = full.val_divergence.ok_or(TuneError::MissingValidation)?;
    let mut out = spec
        .characteristics
        .par_iter()
        .map(|c| {
            let reduced = spec.without(&c.name).map_err(FitError::from)?;
            if reduced.characteristics.is_empty() {
                return Ok(Contribution {
                    name: c.name.clone(),
                    contribution: full_val,
                });
            }
            let wrap = |source| TuneError::WithoutCharacteristic {
                name: c.name.clone(),
                source,
            };
            let sub = FitContext::new(&reduced, dev, Some(val)).map_err(wrap)?;
            let fitted = sub.fit(&FitParams::from_spec(&reduced)).map_err(wrap)?;
            Ok(Contribution {
                name: c.name.clone(),
                contribution: full_val - fitted.val_divergence.ok_or(TuneError::MissingValidation)?,
            })
        })
        .collect::<Result<Vec<_>, TuneError>>()?;
    out.sort_by(|a, b| b.contribution.total_cmp(&a.contribution));
    Ok(out)
}

/// Picks the grid value with the largest validation divergence; exact ties
/// go to the larger value.
pub fn best_row(rows: &[TraceRow]) -> Option<&TraceRow> {
    rows.iter().fold(None, |best: Option<&TraceRow>, row| match best {
        None => Some(row),
        Some(b) => {
            let better = row.val_divergence > b.val_divergence
                || (row.val_divergence == b.val_divergence && row.lambda2 > b.lambda2);
            Some(if better { row } else { b })
        }
    })
}

/// Sweeps characteristic `k` over `grid` with the other values in `params`
/// held fixed.
pub fn sweep(ctx: &FitContext, params: &FitParams, k: usize, grid: &[f64]) -> Result<Vec<TraceRow>, (f64, FitError)> {
    grid.par_iter()
        .map(|&g| {
            let mut p = params.clone();
            p.lambda2[k] = g;
            val_divergence(ctx, &p)
                .map(|(val, dev)| TraceRow {
                    lambda2: g,
                    val_divergence: val,
                    dev_divergence: dev,
                })
                .map_err(|e| (g, e))
        })
        .collect()
}

pub fn greedy_tune(spec: &ModelSpec, dev: &Dataset, val: &Dataset, grid: &[f64]) -> Result<TuneReport, TuneError> {
    validate_grid(grid)?;
    let contributions = marginal_contributions(spec, dev, val)?;
    let ctx = FitContext::new(spec, dev, Some(val))?;
    let mut params = FitParams::from_spec(spec);
    let (baseline, _) = val_divergence(&ctx, &params)?;
    let mut final_val = baseline;
    let mut trace = Vec::new();

    for contribution in &contributions {
        let k = spec.index_of(&contribution.name).map_err(FitError::from)?;
        if !spec.characteristics[k].has_liquid() {
            continue;
        }
        let step = trace.len() + 1;
        let lambda2_before = spec
            .characteristics
            .iter()
            .zip(&params.lambda2)
            .map(|(c, l)| (c.name.clone(), *l))
            .collect();
        let rows = sweep(&ctx, &params, k, grid).map_err(|(lambda2, source)| TuneError::Step {
            step,
            name: contribution.name.clone(),
            lambda2,
            source,
        })?;
        let best = best_row(&rows).cloned().ok_or_else(|| TuneError::InvalidGrid("grid is empty".into()))?;
        params.lambda2[k] = best.lambda2;
        final_val = best.val_divergence;
        trace.push(TuneStep {
            characteristic: contribution.name.clone(),
            lambda2_before,
            rows,
            chosen_lambda2: best.lambda2,
            val_divergence: best.val_divergence,
        });
    }

    let chosen_lambda2 = spec
        .characteristics
        .iter()
        .zip(&params.lambda2)
        .map(|(c, l)| (c.name.clone(), c.has_liquid().then_some(*l)))
        .collect();
    Ok(TuneReport {
        schema_version: REPORT_SCHEMA_VERSION,
        grid: grid.to_vec(),
        ordering: contributions.iter().map(|c| c.name.clone()).collect(),
        contributions,
        chosen_lambda2,
        trace,
        baseline_val_divergence: baseline,
        final_val_divergence: final_val,
    })
}
