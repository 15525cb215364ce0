use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use liquid_core::curves::{sample_all, CurveSample, CURVE_POINTS};
use liquid_core::smoothness_tuning::{
    marginal_contributions, validate_grid, Contribution, TraceRow, TuneReport, TuneStep, REPORT_SCHEMA_VERSION,
};
use liquid_core::{Dataset, FitContext, FitError, FitParams, ModelSpec, Pattern};
use serde::{Deserialize, Serialize};
use serde_json::json;
use uuid::Uuid;

use crate::error::ApiError;

const CACHE_CAPACITY: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Divergences {
    pub dev_divergence: f64,
    pub val_divergence: f64,
}

/// One fit as returned by refit and stored in the session cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub lambda2: BTreeMap<String, f64>,
    pub patterns: BTreeMap<String, Pattern>,
    pub dev_divergence: f64,
    pub val_divergence: f64,
    pub curves: Vec<CurveSample>,
}

impl FitSummary {
    pub fn divergences(&self) -> Divergences {
        Divergences {
            dev_divergence: self.dev_divergence,
            val_divergence: self.val_divergence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockedCharacteristic {
    pub characteristic: String,
    pub lambda2: f64,
}

/// Returned once every liquid characteristic is locked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSummary {
    pub baseline_val_divergence: f64,
    pub final_dev_divergence: f64,
    pub final_val_divergence: f64,
    /// Spec carrying the chosen smoothness values and patterns.
    pub spec: ModelSpec,
    pub report: TuneReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub spec: ModelSpec,
    pub grid: Vec<f64>,
    pub dev_rows: usize,
    pub val_rows: usize,
    pub lambda2: BTreeMap<String, f64>,
    pub patterns: BTreeMap<String, Pattern>,
    pub locked: Vec<LockedCharacteristic>,
    pub next: Option<String>,
    pub contributions: Vec<Contribution>,
    pub baseline: Divergences,
    pub current: Divergences,
    pub trace: Vec<TuneStep>,
    pub cache_entries: usize,
    #[serde(rename = "final")]
    pub final_summary: Option<FinalSummary>,
}

type CacheKey = Vec<(u64, u8)>;

fn cache_key(params: &FitParams) -> CacheKey {
    params
        .lambda2
        .iter()
        .zip(&params.patterns)
        .map(|(l, p)| {
            let tag = match p {
                Pattern::None => 0,
                Pattern::Ascending => 1,
                Pattern::Descending => 2,
            };
            (l.to_bits(), tag)
        })
        .collect()
}

/// A fit request resolved against the session: full maps plus the params.
#[derive(Debug, Clone)]
pub struct PlannedFit {
    pub lambda2: BTreeMap<String, f64>,
    pub patterns: BTreeMap<String, Pattern>,
    pub params: FitParams,
    key: CacheKey,
}

pub struct Session {
    id: Uuid,
    spec: ModelSpec,
    ctx: Arc<FitContext>,
    grid: Vec<f64>,
    dev_rows: usize,
    val_rows: usize,
    lambda2: BTreeMap<String, f64>,
    patterns: BTreeMap<String, Pattern>,
    locked: Vec<LockedCharacteristic>,
    trace: Vec<TuneStep>,
    contributions: Vec<Contribution>,
    baseline: Divergences,
    current: Divergences,
    cache: HashMap<CacheKey, Arc<FitSummary>>,
}

impl Session {
    /// Splits the data, fits the all-zero baseline and ranks characteristics.
    /// Blocking.
    pub fn create(
        id: Uuid,
        spec: &ModelSpec,
        data: &Dataset,
        val_fraction: f64,
        seed: u64,
        grid: Vec<f64>,
    ) -> Result<Self, ApiError> {
        validate_grid(&grid)?;
        spec.validate()?;
        for c in &spec.characteristics {
            data.require_column(c.column_name())?;
        }
        let (dev, val) = data.split(val_fraction, seed)?;
        let mut base = spec.clone();
        for c in &mut base.characteristics {
            c.lambda2 = 0.0;
        }
        let ctx = Arc::new(FitContext::new(&base, &dev, Some(&val))?);
        let lambda2: BTreeMap<String, f64> = base
            .characteristics
            .iter()
            .filter(|c| c.has_liquid())
            .map(|c| (c.name.clone(), 0.0))
            .collect();
        let patterns: BTreeMap<String, Pattern> = base
            .characteristics
            .iter()
            .filter(|c| c.has_liquid())
            .map(|c| (c.name.clone(), c.pattern))
            .collect();
        let mut session = Self {
            id,
            spec: base,
            ctx,
            grid,
            dev_rows: dev.len(),
            val_rows: val.len(),
            lambda2,
            patterns,
            locked: Vec::new(),
            trace: Vec::new(),
            contributions: Vec::new(),
            baseline: Divergences {
                dev_divergence: 0.0,
                val_divergence: 0.0,
            },
            current: Divergences {
                dev_divergence: 0.0,
                val_divergence: 0.0,
            },
            cache: HashMap::new(),
        };
        let plan = session.plan(&BTreeMap::new(), &BTreeMap::new())?;
        let summary = compute(&session.ctx, &plan)?;
        session.baseline = summary.divergences();
        session.commit(&plan, Arc::new(summary));
        session.contributions = marginal_contributions(&session.spec, &dev, &val)?;
        Ok(session)
    }

    pub fn id(&self) -> Uuid {
        self.id
    }

    pub fn context(&self) -> Arc<FitContext> {
        self.ctx.clone()
    }

    pub fn baseline(&self) -> Divergences {
        self.baseline
    }

    pub fn contributions(&self) -> &[Contribution] {
        &self.contributions
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    fn is_locked(&self, name: &str) -> bool {
        self.locked.iter().any(|l| l.characteristic == name)
    }

    fn check_liquid(&self, name: &str) -> Result<(), ApiError> {
        let c = self
            .spec
            .characteristic(name)
            .map_err(|_| ApiError::unknown_characteristic(name))?;
        if !c.has_liquid() {
            return Err(ApiError::bad_request(
                "NOT_LIQUID",
                format!("characteristic '{name}' has no liquid range"),
            )
            .with_detail(json!({ "characteristic": name })));
        }
        Ok(())
    }

    /// Merges overrides into the current maps without touching the session.
    pub fn plan(
        &self,
        lambda2: &BTreeMap<String, f64>,
        patterns: &BTreeMap<String, Pattern>,
    ) -> Result<PlannedFit, ApiError> {
        for name in lambda2.keys().chain(patterns.keys()) {
            self.check_liquid(name)?;
            if self.is_locked(name) {
                return Err(ApiError::new(
                    axum::http::StatusCode::CONFLICT,
                    "LOCKED",
                    format!("characteristic '{name}' is locked"),
                )
                .with_detail(json!({ "characteristic": name })));
            }
        }
        let mut merged_lambda2 = self.lambda2.clone();
        merged_lambda2.extend(lambda2.iter().map(|(k, v)| (k.clone(), *v)));
        let mut merged_patterns = self.patterns.clone();
        merged_patterns.extend(patterns.iter().map(|(k, v)| (k.clone(), *v)));
        self.plan_exact(merged_lambda2, merged_patterns)
    }

    fn plan_exact(
        &self,
        lambda2: BTreeMap<String, f64>,
        patterns: BTreeMap<String, Pattern>,
    ) -> Result<PlannedFit, ApiError> {
        let params = FitParams::with_overrides(&self.spec, &lambda2, &patterns)?;
        let key = cache_key(&params);
        Ok(PlannedFit {
            lambda2,
            patterns,
            params,
            key,
        })
    }

    pub fn cached(&self, plan: &PlannedFit) -> Option<Arc<FitSummary>> {
        self.cache.get(&plan.key).cloned()
    }

    /// Makes `plan` the current state and remembers its result.
    pub fn commit(&mut self, plan: &PlannedFit, summary: Arc<FitSummary>) {
        self.lambda2 = plan.lambda2.clone();
        self.patterns = plan.patterns.clone();
        self.current = summary.divergences();
        if !self.cache.contains_key(&plan.key) {
            if self.cache.len() >= CACHE_CAPACITY {
                self.cache.clear();
            }
            self.cache.insert(plan.key.clone(), summary);
        }
    }

    /// Validates a lock and returns the plan that fits the locked state.
    pub fn plan_lock(&self, name: &str, lambda2: Option<f64>) -> Result<(PlannedFit, f64), ApiError> {
        self.check_liquid(name)?;
        if self.is_locked(name) {
            return Err(ApiError::new(
                axum::http::StatusCode::CONFLICT,
                "ALREADY_LOCKED",
                format!("characteristic '{name}' is already locked"),
            )
            .with_detail(json!({ "characteristic": name })));
        }
        let value = lambda2.unwrap_or(self.lambda2[name]);
        let mut merged = self.lambda2.clone();
        merged.insert(name.to_string(), value);
        Ok((self.plan_exact(merged, self.patterns.clone())?, value))
    }

    /// Freezes `name` at `value`; `plan` must come from [`Session::plan_lock`].
    pub fn commit_lock(&mut self, name: &str, value: f64, plan: &PlannedFit, summary: Arc<FitSummary>) {
        let lambda2_before: BTreeMap<String, f64> = self
            .spec
            .characteristics
            .iter()
            .map(|c| (c.name.clone(), self.lambda2.get(&c.name).copied().unwrap_or(0.0)))
            .collect();
        self.commit(plan, summary.clone());
        let mut rows: Vec<TraceRow> = self
            .cache
            .values()
            .filter(|s| {
                s.patterns == self.patterns
                    && s.lambda2.iter().all(|(k, v)| k == name || lambda2_before.get(k) == Some(v))
            })
            .map(|s| TraceRow {
                lambda2: s.lambda2[name],
                val_divergence: s.val_divergence,
                dev_divergence: s.dev_divergence,
            })
            .collect();
        rows.sort_by(|a, b| a.lambda2.total_cmp(&b.lambda2));
        self.trace.push(TuneStep {
            characteristic: name.to_string(),
            lambda2_before,
            rows,
            chosen_lambda2: value,
            val_divergence: summary.val_divergence,
        });
        self.locked.push(LockedCharacteristic {
            characteristic: name.to_string(),
            lambda2: value,
        });
    }

    /// Highest-contribution liquid characteristic that is still unlocked.
    pub fn next(&self) -> Option<String> {
        self.contributions
            .iter()
            .map(|c| c.name.as_str())
            .find(|n| !self.is_locked(n) && self.spec.characteristic(n).is_ok_and(|c| c.has_liquid()))
            .map(str::to_string)
    }

    /// Spec with the current smoothness values and patterns written in.
    pub fn effective_spec(&self) -> ModelSpec {
        let mut spec = self.spec.clone();
        for c in &mut spec.characteristics {
            if let Some(v) = self.lambda2.get(&c.name) {
                c.lambda2 = *v;
            }
            if let Some(p) = self.patterns.get(&c.name) {
                c.pattern = *p;
            }
        }
        spec
    }

    pub fn final_summary(&self) -> Option<FinalSummary> {
        if self.next().is_some() {
            return None;
        }
        let chosen_lambda2 = self
            .spec
            .characteristics
            .iter()
            .map(|c| (c.name.clone(), self.lambda2.get(&c.name).copied()))
            .collect();
        Some(FinalSummary {
            baseline_val_divergence: self.baseline.val_divergence,
            final_dev_divergence: self.current.dev_divergence,
            final_val_divergence: self.current.val_divergence,
            spec: self.effective_spec(),
            report: TuneReport {
                schema_version: REPORT_SCHEMA_VERSION,
                grid: self.grid.clone(),
                ordering: self.contributions.iter().map(|c| c.name.clone()).collect(),
                contributions: self.contributions.clone(),
                chosen_lambda2,
                trace: self.trace.clone(),
                baseline_val_divergence: self.baseline.val_divergence,
                final_val_divergence: self.current.val_divergence,
            },
        })
    }

    pub fn state(&self) -> SessionState {
        SessionState {
            session_id: self.id.to_string(),
            spec: self.effective_spec(),
            grid: self.grid.clone(),
            dev_rows: self.dev_rows,
            val_rows: self.val_rows,
            lambda2: self.lambda2.clone(),
            patterns: self.patterns.clone(),
            locked: self.locked.clone(),
            next: self.next(),
            contributions: self.contributions.clone(),
            baseline: self.baseline,
            current: self.current,
            trace: self.trace.clone(),
            cache_entries: self.cache.len(),
            final_summary: self.final_summary(),
        }
    }
}

/// Runs one fit and samples its curves. Blocking.
pub fn compute(ctx: &FitContext, plan: &PlannedFit) -> Result<FitSummary, ApiError> {
    let fitted = ctx.fit(&plan.params)?;
    let val_divergence = fitted
        .val_divergence
        .ok_or_else(|| ApiError::internal("fit produced no validation divergence"))?;
    let curves = sample_all(&fitted, CURVE_POINTS).map_err(FitError::from)?;
    Ok(FitSummary {
        lambda2: plan.lambda2.clone(),
        patterns: plan.patterns.clone(),
        dev_divergence: fitted.dev_divergence,
        val_divergence,
        curves,
    })
}
