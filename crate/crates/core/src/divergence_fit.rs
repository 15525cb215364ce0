//! Penalized max-divergence fitting.
//!
//! With good/bad class means `μ_G`, `μ_B` and covariances `Σ_G`, `Σ_B` of the
//! design vectors, the divergence of the score `xᵀβ` is
//! `(dᵀβ)² / βᵀCβ` where `d = μ_G − μ_B` and `C = (Σ_G + Σ_B)/2`. Fixing
//! `dᵀβ = δ` and minimizing
//!
//! ```text
//!     βᵀCβ + (2λ/n)βᵀβ + Σ_k λ₂ₖ βᵀR_kβ
//! ```
//!
//! subject to the pattern rows therefore maximizes penalized divergence. The
//! QP Hessian is `H = 2(C + (2λ/n)I + Σ_k λ₂ₖ R_k)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{DataError, Dataset};
use crate::qp_solver::{solve_qp_with, QpError, QpOptions, QuadraticProgram, WarmStart};
use crate::roughness_penalty::{characteristic_block, RoughnessError};
use crate::scorecard_model::{ModelError, ModelSpec, Pattern};
use crate::summation::Compensated;

pub use crate::scorecard_model::FittedModel;

const CHUNK_ROWS: usize = 4096;

#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Roughness(#[from] RoughnessError),
    #[error("record {row}: {source}")]
    Record { row: usize, source: ModelError },
    #[error("degenerate classes: {0}")]
    DegenerateClasses(String),
    #[error("total sample weight is zero")]
    ZeroWeight,
    #[error("class means coincide in design space; no direction separates good from bad")]
    DegenerateDirection,
    #[error("pooled score variance is zero")]
    ZeroVariance,
    #[error("divergence is zero; the weight-of-evidence scale is undefined")]
    ZeroDivergence,
    #[error("model has no characteristics")]
    NoCharacteristics,
    #[error("invalid override: {0}")]
    InvalidOverride(String),
    #[error("quadratic program failed: {0}")]
    Qp(#[from] QpError),
}

/// Sparse design rows plus outcomes and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    dim: usize,
    row_start: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    good: Vec<bool>,
    weight: Vec<f64>,
}

impl DesignMatrix {
    pub fn build(spec: &ModelSpec, data: &Dataset) -> Result<Self, FitError> {
        let columns = spec
            .characteristics
            .iter()
            .map(|c| data.require_column(c.column_name()))
            .collect::<Result<Vec<_>, _>>()?;
        let tvectors: Vec<_> = spec.characteristics.iter().map(|c| c.t_vector()).collect();
        let offsets = spec.offsets();
        let mut row_start = Vec::with_capacity(data.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut scratch = Vec::with_capacity(8);
        row_start.push(0);
        for row in 0..data.len() {
            for (k, c) in spec.characteristics.iter().enumerate() {
                scratch.clear();
                c.expand_sparse(columns[k][row], tvectors[k].as_ref(), &mut scratch)
                    .map_err(|source| FitError::Record { row, source })?;
                for &(i, v) in &scratch {
                    indices.push(offsets[k] + i);
                    values.push(v);
                }
            }
            row_start.push(indices.len());
        }
        Ok(Self {
            dim: spec.dim(),
            row_start,
            indices,
            values,
            good: data.outcomes().to_vec(),
            weight: data.weights().to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.good.len()
    }

    pub fn is_empty(&self) -> bool {
        self.good.is_empty()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_start[i]..self.row_start[i + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for (j, x) in self.row(i) {
            v[j] = x;
        }
        v
    }

    pub fn is_good(&self, i: usize) -> bool {
        self.good[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weight[i]
    }

    pub fn scores(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.row(i).map(|(j, x)| beta[j] * x).sum())
            .collect()
    }

    /// Weighted good and bad scores as `(score, weight)` pairs.
    pub fn class_scores(&self, beta: &[f64]) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
        let scores = self.scores(beta);
        let mut good = Vec::new();
        let mut bad = Vec::new();
        for (i, s) in scores.into_iter().enumerate() {
            let entry = (s, self.weight[i]);
            if self.good[i] {
                good.push(entry);
            } else {
                bad.push(entry);
            }
        }
        (good, bad)
    }

    pub fn divergence(&self, beta: &[f64]) -> Result<f64, FitError> {
        let (good, bad) = self.class_scores(beta);
        score_divergence(&good, &bad)
    }
}

/// Weighted class moments of the design vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMoments {
    pub mean_good: DVector<f64>,
    pub mean_bad: DVector<f64>,
    pub cov_good: DMatrix<f64>,
    pub cov_bad: DMatrix<f64>,
    pub weight_good: f64,
    pub weight_bad: f64,
    /// Total sample weight.
    pub n: f64,
    /// `(Σ_G + Σ_B) / 2`.
    pub pooled: DMatrix<f64>,
    /// `μ_G − μ_B`.
    pub diff: DVector<f64>,
}

struct ClassSums {
    weight: Compensated,
    first: Vec<Compensated>,
    /// Upper triangle of `Σ w x xᵀ`, row-major `p×p`.
    second: Vec<Compensated>,
}

impl ClassSums {
    fn new(p: usize) -> Self {
        Self {
            weight: Compensated::default(),
            first: vec![Compensated::default(); p],
            second: vec![Compensated::default(); p * p],
        }
    }

    fn merge(&mut self, other: &ClassSums) {
        self.weight.merge(&other.weight);
        for (a, b) in self.first.iter_mut().zip(&other.first) {
            a.merge(b);
        }
        for (a, b) in self.second.iter_mut().zip(&other.second) {
            a.merge(b);
        }
    }

    fn moments(&self, p: usize) -> (f64, DVector<f64>, DMatrix<f64>) {
        let w = self.weight.value();
        let mean = DVector::from_iterator(p, self.first.iter().map(|s| s.value() / w));
        let mut cov = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let v = self.second[i * p + j].value() / w - mean[i] * mean[j];
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        (w, mean, cov)
    }
}

pub fn compute_moments(spec: &ModelSpec, data: &Dataset) -> Result<ClassMoments, FitError> {
    moments_from_design(&DesignMatrix::build(spec, data)?)
}

/// Moments from fixed-size row chunks, reduced in chunk order so the result
/// does not depend on thread scheduling.
pub fn moments_from_design(design: &DesignMatrix) -> Result<ClassMoments, FitError> {
    let p = design.dim();
    let chunks: Vec<(usize, usize)> = (0..design.len())
        .step_by(CHUNK_ROWS)
        .map(|start| (start, (start + CHUNK_ROWS).min(design.len())))
        .collect();
    let partials: Vec<(ClassSums, ClassSums)> = chunks
        .par_iter()
        .map(|&(start, end)| {
            let mut good = ClassSums::new(p);
            let mut bad = ClassSums::new(p);
            let mut entries: Vec<(usize, f64)> = Vec::with_capacity(16);
            for i in start..end {
                let w = design.weight(i);
                if w == 0.0 {
                    continue;
                }
                let sums = if design.is_good(i) { &mut good } else { &mut bad };
                sums.weight.add(w);
                entries.clear();
                entries.extend(design.row(i));
                entries.sort_unstable_by_key(|e| e.0);
                for (a, &(ja, xa)) in entries.iter().enumerate() {
                    sums.first[ja].add(w * xa);
                    for &(jb, xb) in &entries[a..] {
                        sums.second[ja * p + jb].add(w * xa * xb);
                    }
                }
            }
            (good, bad)
        })
        .collect();
    let mut good = ClassSums::new(p);
    let mut bad = ClassSums::new(p);
    for (g, b) in &partials {
        good.merge(g);
        bad.merge(b);
    }
    let (wg, wb) = (good.weight.value(), bad.weight.value());
    if wg + wb <= 0.0 {
        return Err(FitError::ZeroWeight);
    }
    if wg <= 0.0 {
        return Err(FitError::DegenerateClasses("no good records with positive weight".into()));
    }
    if wb <= 0.0 {
        return Err(FitError::DegenerateClasses("no bad records with positive weight".into()));
    }
    let (_, mean_good, cov_good) = good.moments(p);
    let (_, mean_bad, cov_bad) = bad.moments(p);
    let pooled = (&cov_good + &cov_bad) * 0.5;
    let diff = &mean_good - &mean_bad;
    Ok(ClassMoments {
        mean_good,
        mean_bad,
        cov_good,
        cov_bad,
        weight_good: wg,
        weight_bad: wb,
        n: wg + wb,
        pooled,
        diff,
    })
}

/// `(μ_G − μ_B)² / ((σ²_G + σ²_B)/2)` over weighted `(score, weight)` pairs.
pub fn score_divergence(good: &[(f64, f64)], bad: &[(f64, f64)]) -> Result<f64, FitError> {
    let (mg, vg) = weighted_mean_var(good).ok_or_else(|| FitError::DegenerateClasses("no good scores".into()))?;
    let (mb, vb) = weighted_mean_var(bad).ok_or_else(|| FitError::DegenerateClasses("no bad scores".into()))?;
    let pooled = 0.5 * (vg + vb);
    if !(pooled > 0.0) {
        return Err(FitError::ZeroVariance);
    }
    Ok((mg - mb).powi(2) / pooled)
}

fn weighted_mean_var(sample: &[(f64, f64)]) -> Option<(f64, f64)> {
    let mut w = Compensated::default();
    let mut sum = Compensated::default();
    for &(x, wt) in sample {
        w.add(wt);
        sum.add(wt * x);
    }
    let total = w.value();
    if !(total > 0.0) {
        return None;
    }
    let mean = sum.value() / total;
    let mut ss = Compensated::default();
    for &(x, wt) in sample {
        ss.add(wt * (x - mean) * (x - mean));
    }
    Some((mean, ss.value() / total))
}

/// Per-characteristic smoothness parameters and patterns for one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitParams {
    pub lambda2: Vec<f64>,
    pub patterns: Vec<Pattern>,
}

impl FitParams {
    /// The values configured in the spec.
    pub fn from_spec(spec: &ModelSpec) -> Self {
        Self {
            lambda2: spec.lambda2s(),
            patterns: spec.patterns(),
        }
    }

    /// Spec values with named overrides applied.
    pub fn with_overrides(
        spec: &ModelSpec,
        lambda2: &BTreeMap<String, f64>,
        patterns: &BTreeMap<String, Pattern>,
    ) -> Result<Self, FitError> {
        let mut params = Self::from_spec(spec);
        for (name, &value) in lambda2 {
            let k = spec.index_of(name)?;
            if !(value.is_finite() && value >= 0.0) {
                return Err(FitError::InvalidOverride(format!(
                    "smoothness parameter for '{name}' must be finite and >= 0, got {value}"
                )));
            }
            params.lambda2[k] = value;
        }
        for (name, &pattern) in patterns {
            let k = spec.index_of(name)?;
            if pattern != Pattern::None && !spec.characteristics[k].has_liquid() {
                return Err(ModelError::PatternWithoutLiquid(name.clone()).into());
            }
            params.patterns[k] = pattern;
        }
        Ok(params)
    }
}

/// Precomputed design, moments and penalty blocks for repeated fits of one
/// spec on one development/validation split.
#[derive(Debug, Clone)]
pub struct FitContext {
    spec: ModelSpec,
    dev: DesignMatrix,
    val: Option<DesignMatrix>,
    moments: ClassMoments,
    blocks: Vec<DMatrix<f64>>,
}

impl FitContext {
    pub fn new(spec: &ModelSpec, dev: &Dataset, val: Option<&Dataset>) -> Result<Self, FitError> {
        spec.validate()?;
        if spec.characteristics.is_empty() {
            return Err(FitError::NoCharacteristics);
        }
        let dev = DesignMatrix::build(spec, dev)?;
        let val = val.map(|v| DesignMatrix::build(spec, v)).transpose()?;
        let moments = moments_from_design(&dev)?;
        let blocks = spec
            .characteristics
            .iter()
            .map(|c| characteristic_block(c).map(|b| b.into_matrix()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            spec: spec.clone(),
            dev,
            val,
            moments,
            blocks,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn moments(&self) -> &ClassMoments {
        &self.moments
    }

    pub fn dev_design(&self) -> &DesignMatrix {
        &self.dev
    }

    pub fn val_design(&self) -> Option<&DesignMatrix> {
        self.val.as_ref()
    }

    /// Unit-λ₂ penalty block of characteristic `k`.
    pub fn block(&self, k: usize) -> &DMatrix<f64> {
        &self.blocks[k]
    }

    /// `Σ_k λ₂ₖ R_k` as one block-diagonal matrix.
    pub fn weighted_roughness(&self, lambda2: &[f64]) -> DMatrix<f64> {
        let p = self.spec.dim();
        let mut r = DMatrix::zeros(p, p);
        for ((block, offset), &weight) in self.blocks.iter().zip(self.spec.offsets()).zip(lambda2) {
            let n = block.nrows();
            if weight != 0.0 && n > 0 {
                r.view_mut((offset, offset), (n, n)).copy_from(&(block * weight));
            }
        }
        r
    }

    /// Unweighted roughness `βᵀRβ` of characteristic `k` alone.
    pub fn roughness_of(&self, k: usize, beta: &[f64]) -> f64 {
        let offset = self.spec.offsets()[k];
        let block = &self.blocks[k];
        let n = block.nrows();
        let b = DVector::from_column_slice(&beta[offset..offset + n]);
        b.dot(&(block * &b))
    }

    /// `βᵀCβ`, the pooled development score variance.
    pub fn pooled_variance(&self, beta: &[f64]) -> f64 {
        let b = DVector::from_column_slice(beta);
        b.dot(&(&self.moments.pooled * &b))
    }

    pub fn build_qp(&self, params: &FitParams) -> Result<QuadraticProgram, FitError> {
        build_fit_qp_from(self, params)
    }

    pub fn fit(&self, params: &FitParams) -> Result<FittedModel, FitError> {
        self.fit_warm(params, None)
    }

    /// Fits, starting from `warm` when it was produced with the same patterns.
    pub fn fit_warm(&self, params: &FitParams, warm: Option<&FittedModel>) -> Result<FittedModel, FitError> {
        let qp = self.build_qp(params)?;
        let warm_start = warm
            .filter(|w| w.patterns == params.patterns && w.beta.len() == self.spec.dim())
            .map(|w| WarmStart {
                x: w.beta.clone(),
                active: w.active_set.clone(),
            });
        let options = QpOptions {
            max_iterations: None,
            warm_start,
        };
        let solution = solve_qp_with(&qp, &options)?;
        let beta = solution.x;
        let dev_divergence = self.dev.divergence(&beta)?;
        let val_divergence = self.val.as_ref().map(|v| v.divergence(&beta)).transpose()?;
        Ok(FittedModel {
            spec: self.spec.clone(),
            beta,
            lambda2: params.lambda2.clone(),
            patterns: params.patterns.clone(),
            dev_divergence,
            val_divergence,
            active_set: solution.active_set,
        })
    }
}

/// `H = 2(C + (2λ/n)I + Σ λ₂ₖ R_k)`, `dᵀβ = δ`, pattern rows `≥ 0`.
pub fn build_fit_qp(req: &FitRequest<'_>) -> Result<QuadraticProgram, FitError> {
    let ctx = FitContext::new(req.spec, req.dev, None)?;
    let params = FitParams::with_overrides(req.spec, &req.lambda2, &req.patterns)?;
    ctx.build_qp(&params)
}

fn build_fit_qp_from(ctx: &FitContext, params: &FitParams) -> Result<QuadraticProgram, FitError> {
    let spec = &ctx.spec;
    let p = spec.dim();
    let k = spec.characteristics.len();
    if params.lambda2.len() != k || params.patterns.len() != k {
        return Err(FitError::InvalidOverride(format!(
            "expected {k} smoothness parameters and patterns, got {} and {}",
            params.lambda2.len(),
            params.patterns.len()
        )));
    }
    if let Some(bad) = params.lambda2.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(FitError::InvalidOverride(format!(
            "smoothness parameters must be finite and >= 0, got {bad}"
        )));
    }
    let m = &ctx.moments;
    if m.diff.amax() == 0.0 {
        return Err(FitError::DegenerateDirection);
    }
    let ridge = 2.0 * spec.lambda / m.n;
    let mut h = &m.pooled + ctx.weighted_roughness(&params.lambda2);
    for i in 0..p {
        h[(i, i)] += ridge;
    }
    h *= 2.0;
    // exact symmetry for the solver's check
    let h = (&h + h.transpose()) * 0.5;

    let a_eq = DMatrix::from_row_slice(1, p, m.diff.as_slice());
    let b_eq = DVector::from_element(1, spec.delta);
    let rows = spec.pattern_constraints(&params.patterns)?;
    let a_ineq = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let b_ineq = DVector::zeros(rows.len());
    Ok(QuadraticProgram::new(h)
        .with_equalities(a_eq, b_eq)
        .with_inequalities(a_ineq, b_ineq))
}

/// One-shot fit request: spec defaults overridden by name.
#[derive(Debug, Clone)]
pub struct FitRequest<'a> {
    pub spec: &'a ModelSpec,
    pub dev: &'a Dataset,
    pub val: Option<&'a Dataset>,
    pub lambda2: BTreeMap<String, f64>,
    pub patterns: BTreeMap<String, Pattern>,
}

impl<'a> FitRequest<'a> {
    pub fn new(spec: &'a ModelSpec, dev: &'a Dataset) -> Self {
        Self {
            spec,
            dev,
            val: None,
            lambda2: BTreeMap::new(),
            patterns: BTreeMap::new(),
        }
    }

    pub fn with_validation(mut self, val: &'a Dataset) -> Self {
        self.val = Some(val);
        self
    }

    pub fn with_lambda2(mut self, name: &str, value: f64) -> Self {
        self.lambda2.insert(name.to_string(), value);
        self
    }

    pub fn with_pattern(mut self, name: &str, pattern: Pattern) -> Self {
        self.patterns.insert(name.to_string(), pattern);
        self
    }
}

pub fn fit(req: &FitRequest<'_>) -> Result<FittedModel, FitError> {
    let ctx = FitContext::new(req.spec, req.dev, req.val)?;
    let params = FitParams::with_overrides(req.spec, &req.lambda2, &req.patterns)?;
    ctx.fit(&params)
}

/// Scales `β` by `D/δ` so the class-mean score difference equals the
/// development divergence. Divergence and patterns are unchanged.
pub fn woe_rescale(fitted: &FittedModel) -> Result<FittedModel, FitError> {
    if !(fitted.dev_divergence > 0.0) {
        return Err(FitError::ZeroDivergence);
    }
    let factor = fitted.dev_divergence / fitted.spec.delta;
    let mut scaled = fitted.clone();
    scaled.beta.iter_mut().for_each(|b| *b *= factor);
    Ok(scaled)
}
