//! Characteristics, design expansion and characteristic scores.
//!
//! A characteristic maps a numeric value either to one of its discrete
//! attributes (one-hot) or, inside the closed liquid range `[k[0], k[m-1]]`,
//! to the `m + 2` cubic basis values. Coefficients are laid out as
//! `leading discrete | liquid | trailing discrete`, and characteristics are
//! concatenated in spec order.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spline_basis::{build_t_vector, KnotConfig, TVector, CUBIC};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("characteristic '{name}': value {value} matches no attribute and lies outside the liquid range")]
    Unmatched { name: String, value: f64 },
    #[error("characteristic '{name}': value {value} matches more than one attribute ({first} and {second})")]
    Ambiguous {
        name: String,
        value: f64,
        first: String,
        second: String,
    },
    #[error("characteristic '{name}': value is not a number")]
    NotANumber { name: String },
    #[error("unknown characteristic '{0}'")]
    UnknownCharacteristic(String),
    #[error("duplicate characteristic name '{0}'")]
    DuplicateName(String),
    #[error("characteristic '{0}' has a pattern but no liquid range")]
    PatternWithoutLiquid(String),
    #[error("characteristic '{0}' has no attributes and no liquid range")]
    EmptyCharacteristic(String),
    #[error("characteristic '{name}': {reason}")]
    InvalidAttribute { name: String, reason: String },
    #[error("characteristic '{name}': smoothness parameter must be finite and >= 0, got {value}")]
    InvalidLambda2 { name: String, value: f64 },
    #[error("ridge penalty must be finite and >= 0, got {0}")]
    InvalidLambda(f64),
    #[error("normalization delta must be finite and > 0, got {0}")]
    InvalidDelta(f64),
    #[error("record has {got} values but the model has {expected} characteristics")]
    RecordLength { expected: usize, got: usize },
    #[error("record is missing column '{0}'")]
    MissingColumn(String),
    #[error("coefficient vector has length {got}, expected {expected}")]
    CoefficientLength { expected: usize, got: usize },
}

/// Shape constraint over the liquid range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Ascending,
    Descending,
    #[default]
    None,
}

/// Plotting coordinate for curves; never used by fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XScale {
    #[default]
    Natural,
    Log1p,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    /// Exact codes, e.g. sentinels such as `-9999999`.
    Values { values: Vec<f64> },
    /// Interval with optional (infinite) bounds.
    Interval {
        #[serde(default)]
        lower: Option<f64>,
        #[serde(default)]
        upper: Option<f64>,
        #[serde(default)]
        lower_closed: bool,
        #[serde(default)]
        upper_closed: bool,
    },
}

impl Predicate {
    pub fn matches(&self, x: f64) -> bool {
        match self {
            Predicate::Values { values } => values.contains(&x),
            Predicate::Interval {
                lower,
                upper,
                lower_closed,
                upper_closed,
            } => {
                let above = match lower {
                    None => true,
                    Some(l) => x > *l || (*lower_closed && x == *l),
                };
                let below = match upper {
                    None => true,
                    Some(u) => x < *u || (*upper_closed && x == *u),
                };
                above && below
            }
        }
    }

    /// True when every value the predicate accepts is strictly below `bound`
    /// (or equal to it only through an open end).
    fn entirely_below(&self, bound: f64) -> bool {
        match self {
            Predicate::Values { values } => values.iter().all(|v| *v < bound),
            Predicate::Interval {
                upper,
                upper_closed,
                ..
            } => match upper {
                None => false,
                Some(u) => *u < bound || (*u == bound && !upper_closed),
            },
        }
    }

    fn entirely_above(&self, bound: f64) -> bool {
        match self {
            Predicate::Values { values } => values.iter().all(|v| *v > bound),
            Predicate::Interval {
                lower,
                lower_closed,
                ..
            } => match lower {
                None => false,
                Some(l) => *l > bound || (*l == bound && !lower_closed),
            },
        }
    }
}

/// A discrete attribute: one score coefficient, selected by its predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub label: String,
    #[serde(flatten)]
    pub predicate: Predicate,
}

impl Attribute {
    pub fn values(label: &str, values: Vec<f64>) -> Self {
        Self {
            label: label.to_string(),
            predicate: Predicate::Values { values },
        }
    }

    pub fn interval(
        label: &str,
        lower: Option<f64>,
        upper: Option<f64>,
        lower_closed: bool,
        upper_closed: bool,
    ) -> Self {
        Self {
            label: label.to_string(),
            predicate: Predicate::Interval {
                lower,
                upper,
                lower_closed,
                upper_closed,
            },
        }
    }

    pub fn matches(&self, x: f64) -> bool {
        self.predicate.matches(x)
    }
}

fn default_delta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicSpec {
    pub name: String,
    /// Dataset column; defaults to the name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    #[serde(default)]
    pub leading_discrete: Vec<Attribute>,
    #[serde(default)]
    pub liquid_knots: Option<KnotConfig>,
    #[serde(default)]
    pub trailing_discrete: Vec<Attribute>,
    #[serde(default)]
    pub pattern: Pattern,
    #[serde(default)]
    pub lambda2: f64,
    #[serde(default)]
    pub xscale: XScale,
}

/// Where a value lands inside one characteristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    /// Coefficient index within the characteristic.
    Discrete(usize),
    Liquid,
}

impl CharacteristicSpec {
    pub fn liquid(
        name: &str,
        knots: KnotConfig,
        leading_discrete: Vec<Attribute>,
        trailing_discrete: Vec<Attribute>,
    ) -> Self {
        Self {
            name: name.to_string(),
            column: None,
            leading_discrete,
            liquid_knots: Some(knots),
            trailing_discrete,
            pattern: Pattern::None,
            lambda2: 0.0,
            xscale: XScale::Natural,
        }
    }

    pub fn discrete(name: &str, attributes: Vec<Attribute>) -> Self {
        Self {
            name: name.to_string(),
            column: None,
            leading_discrete: attributes,
            liquid_knots: None,
            trailing_discrete: Vec::new(),
            pattern: Pattern::None,
            lambda2: 0.0,
            xscale: XScale::Natural,
        }
    }

    pub fn with_pattern(mut self, pattern: Pattern) -> Self {
        self.pattern = pattern;
        self
    }

    pub fn with_lambda2(mut self, lambda2: f64) -> Self {
        self.lambda2 = lambda2;
        self
    }

    pub fn with_column(mut self, column: &str) -> Self {
        self.column = Some(column.to_string());
        self
    }

    pub fn column_name(&self) -> &str {
        self.column.as_deref().unwrap_or(&self.name)
    }

    pub fn has_liquid(&self) -> bool {
        self.liquid_knots.is_some()
    }

    pub fn num_liquid(&self) -> usize {
        self.liquid_knots
            .as_ref()
            .map_or(0, KnotConfig::num_cubic_coefficients)
    }

    pub fn coefficient_count(&self) -> usize {
        self.leading_discrete.len() + self.num_liquid() + self.trailing_discrete.len()
    }

    /// Index of the first liquid coefficient within the characteristic.
    pub fn liquid_offset(&self) -> usize {
        self.leading_discrete.len()
    }

    pub fn t_vector(&self) -> Option<TVector> {
        self.liquid_knots.as_ref().map(build_t_vector)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let name = &self.name;
        if !(self.lambda2.is_finite() && self.lambda2 >= 0.0) {
            return Err(ModelError::InvalidLambda2 {
                name: name.clone(),
                value: self.lambda2,
            });
        }
        if self.coefficient_count() == 0 {
            return Err(ModelError::EmptyCharacteristic(name.clone()));
        }
        if self.pattern != Pattern::None && !self.has_liquid() {
            return Err(ModelError::PatternWithoutLiquid(name.clone()));
        }
        let mut labels = HashSet::new();
        for attr in self.attributes() {
            if !labels.insert(attr.label.as_str()) {
                return Err(self.invalid(format!("duplicate attribute label '{}'", attr.label)));
            }
            if let Predicate::Values { values } = &attr.predicate {
                if values.is_empty() || values.iter().any(|v| v.is_nan()) {
                    return Err(self.invalid(format!("attribute '{}' has no usable values", attr.label)));
                }
            }
        }
        if let Some(knots) = &self.liquid_knots {
            for attr in &self.leading_discrete {
                if !attr.predicate.entirely_below(knots.first()) {
                    return Err(self.invalid(format!(
                        "leading attribute '{}' overlaps or follows the liquid range",
                        attr.label
                    )));
                }
            }
            for attr in &self.trailing_discrete {
                if !attr.predicate.entirely_above(knots.last()) {
                    return Err(self.invalid(format!(
                        "trailing attribute '{}' overlaps or precedes the liquid range",
                        attr.label
                    )));
                }
            }
        }
        Ok(())
    }

    fn invalid(&self, reason: String) -> ModelError {
        ModelError::InvalidAttribute {
            name: self.name.clone(),
            reason,
        }
    }

    fn attributes(&self) -> impl Iterator<Item = &Attribute> {
        self.leading_discrete.iter().chain(&self.trailing_discrete)
    }

    fn segment_label(&self, segment: Segment) -> String {
        match segment {
            Segment::Liquid => "liquid range".to_string(),
            Segment::Discrete(k) => {
                let lead = self.leading_discrete.len();
                let attr = if k < lead {
                    &self.leading_discrete[k]
                } else {
                    &self.trailing_discrete[k - lead - self.num_liquid()]
                };
                format!("'{}'", attr.label)
            }
        }
    }

    /// The single attribute or liquid segment that owns `x`.
    pub fn locate(&self, x: f64) -> Result<Segment, ModelError> {
        if x.is_nan() {
            return Err(ModelError::NotANumber {
                name: self.name.clone(),
            });
        }
        let lead = self.leading_discrete.len();
        let trail_offset = lead + self.num_liquid();
        let mut found: Option<Segment> = None;
        let candidates = self
            .leading_discrete
            .iter()
            .enumerate()
            .filter(|(_, a)| a.matches(x))
            .map(|(k, _)| Segment::Discrete(k))
            .chain(
                self.liquid_knots
                    .as_ref()
                    .filter(|k| k.contains(x))
                    .map(|_| Segment::Liquid),
            )
            .chain(
                self.trailing_discrete
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| a.matches(x))
                    .map(|(k, _)| Segment::Discrete(trail_offset + k)),
            );
        for segment in candidates {
            if let Some(first) = found {
                return Err(ModelError::Ambiguous {
                    name: self.name.clone(),
                    value: x,
                    first: self.segment_label(first),
                    second: self.segment_label(segment),
                });
            }
            found = Some(segment);
        }
        found.ok_or_else(|| ModelError::Unmatched {
            name: self.name.clone(),
            value: x,
        })
    }

    /// Nonzero design entries `(index within characteristic, value)`.
    pub fn expand_sparse(&self, x: f64, t: Option<&TVector>, out: &mut Vec<(usize, f64)>) -> Result<(), ModelError> {
        match self.locate(x)? {
            Segment::Discrete(k) => out.push((k, 1.0)),
            Segment::Liquid => {
                let owned;
                let t = match t {
                    Some(t) => t,
                    None => {
                        owned = self.t_vector().expect("liquid segment implies knots");
                        &owned
                    }
                };
                let values = t.eval_all(CUBIC, x).expect("cubic order is supported");
                let offset = self.liquid_offset();
                out.extend(
                    values
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(i, v)| (offset + i, *v)),
                );
            }
        }
        Ok(())
    }

    /// Dense design segment of length `coefficient_count()`.
    pub fn expand(&self, x: f64) -> Result<Vec<f64>, ModelError> {
        let mut sparse = Vec::with_capacity(CUBIC);
        self.expand_sparse(x, None, &mut sparse)?;
        let mut dense = vec![0.0; self.coefficient_count()];
        for (i, v) in sparse {
            dense[i] = v;
        }
        Ok(dense)
    }

    /// `CS(x)` for this characteristic's coefficient segment.
    pub fn score(&self, beta: &[f64], x: f64) -> Result<f64, ModelError> {
        if beta.len() != self.coefficient_count() {
            return Err(ModelError::CoefficientLength {
                expected: self.coefficient_count(),
                got: beta.len(),
            });
        }
        let mut sparse = Vec::with_capacity(CUBIC);
        self.expand_sparse(x, None, &mut sparse)?;
        Ok(sparse.iter().map(|(i, v)| beta[*i] * v).sum())
    }
}

/// Rows `a` of `a·β >= 0` forcing consecutive liquid coefficients of `spec`
/// to be nondecreasing (ascending) or nonincreasing (descending). `offset` is
/// the characteristic's first coefficient in a model of dimension `dim`.
pub fn pattern_constraints(
    spec: &CharacteristicSpec,
    pattern: Pattern,
    offset: usize,
    dim: usize,
) -> Result<Vec<Vec<f64>>, ModelError> {
    if pattern == Pattern::None {
        return Ok(Vec::new());
    }
    if !spec.has_liquid() {
        return Err(ModelError::PatternWithoutLiquid(spec.name.clone()));
    }
    let sign = if pattern == Pattern::Ascending { 1.0 } else { -1.0 };
    let start = offset + spec.liquid_offset();
    Ok((0..spec.num_liquid() - 1)
        .map(|k| {
            let mut row = vec![0.0; dim];
            row[start + k + 1] = sign;
            row[start + k] = -sign;
            row
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub characteristics: Vec<CharacteristicSpec>,
    /// Ridge penalty λ on `βᵀβ`.
    #[serde(default)]
    pub lambda: f64,
    /// Mean-difference normalization δ.
    #[serde(default = "default_delta")]
    pub delta: f64,
}

impl ModelSpec {
    pub fn new(characteristics: Vec<CharacteristicSpec>) -> Self {
        Self {
            characteristics,
            lambda: 0.0,
            delta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(ModelError::InvalidLambda(self.lambda));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(ModelError::InvalidDelta(self.delta));
        }
        let mut names = HashSet::new();
        for c in &self.characteristics {
            if !names.insert(c.name.as_str()) {
                return Err(ModelError::DuplicateName(c.name.clone()));
            }
            c.validate()?;
        }
        Ok(())
    }

    /// Total coefficient dimension `p`.
    pub fn dim(&self) -> usize {
        self.characteristics.iter().map(|c| c.coefficient_count()).sum()
    }

    /// First coefficient index of each characteristic.
    pub fn offsets(&self) -> Vec<usize> {
        self.characteristics
            .iter()
            .scan(0, |acc, c| {
                let start = *acc;
                *acc += c.coefficient_count();
                Some(start)
            })
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize, ModelError> {
        self.characteristics
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| ModelError::UnknownCharacteristic(name.to_string()))
    }

    pub fn characteristic(&self, name: &str) -> Result<&CharacteristicSpec, ModelError> {
        self.index_of(name).map(|k| &self.characteristics[k])
    }

    /// The same model without characteristic `name`.
    pub fn without(&self, name: &str) -> Result<ModelSpec, ModelError> {
        let k = self.index_of(name)?;
        let mut reduced = self.clone();
        reduced.characteristics.remove(k);
        Ok(reduced)
    }

    /// Design vector for values aligned with `characteristics`.
    pub fn expand_values(&self, values: &[f64]) -> Result<Vec<f64>, ModelError> {
        if values.len() != self.characteristics.len() {
            return Err(ModelError::RecordLength {
                expected: self.characteristics.len(),
                got: values.len(),
            });
        }
        let mut design = Vec::with_capacity(self.dim());
        for (c, &x) in self.characteristics.iter().zip(values) {
            design.extend(c.expand(x)?);
        }
        Ok(design)
    }

    /// Design vector for a record keyed by column name.
    pub fn expand_design(&self, record: &BTreeMap<String, f64>) -> Result<Vec<f64>, ModelError> {
        let values = self
            .characteristics
            .iter()
            .map(|c| {
                record
                    .get(c.column_name())
                    .copied()
                    .ok_or_else(|| ModelError::MissingColumn(c.column_name().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.expand_values(&values)
    }

    /// All pattern rows of the model, with optional per-characteristic overrides.
    pub fn pattern_constraints(&self, patterns: &[Pattern]) -> Result<Vec<Vec<f64>>, ModelError> {
        let dim = self.dim();
        let mut rows = Vec::new();
        for ((c, offset), pattern) in self.characteristics.iter().zip(self.offsets()).zip(patterns) {
            rows.extend(pattern_constraints(c, *pattern, offset, dim)?);
        }
        Ok(rows)
    }

    pub fn patterns(&self) -> Vec<Pattern> {
        self.characteristics.iter().map(|c| c.pattern).collect()
    }

    pub fn lambda2s(&self) -> Vec<f64> {
        self.characteristics.iter().map(|c| c.lambda2).collect()
    }
}

/// Fitted coefficients with their divergence statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub beta: Vec<f64>,
    /// Smoothness parameter each characteristic was fitted with.
    pub lambda2: Vec<f64>,
    /// Pattern each characteristic was fitted with.
    pub patterns: Vec<Pattern>,
    pub dev_divergence: f64,
    pub val_divergence: Option<f64>,
    /// Binding pattern rows at the optimum (indices into the model's rows).
    #[serde(default)]
    pub active_set: Vec<usize>,
}

impl FittedModel {
    /// Coefficients belonging to characteristic `name`.
    pub fn segment(&self, name: &str) -> Result<&[f64], ModelError> {
        let k = self.spec.index_of(name)?;
        let start = self.spec.offsets()[k];
        let len = self.spec.characteristics[k].coefficient_count();
        Ok(&self.beta[start..start + len])
    }

    /// `CS(x)` of one characteristic.
    pub fn characteristic_score(&self, name: &str, x: f64) -> Result<f64, ModelError> {
        let spec = self.spec.characteristic(name)?;
        spec.score(self.segment(name)?, x)
    }

    /// Total score `Σ_k CS_k(x_k)` for values aligned with the characteristics.
    pub fn score_values(&self, values: &[f64]) -> Result<f64, ModelError> {
        let design = self.spec.expand_values(values)?;
        Ok(design.iter().zip(&self.beta).map(|(x, b)| x * b).sum())
    }

    pub fn lambda2_of(&self, name: &str) -> Result<f64, ModelError> {
        self.spec.index_of(name).map(|k| self.lambda2[k])
    }
}

/// `CS(x)` of characteristic `name` under `fitted`.
pub fn characteristic_score(fitted: &FittedModel, name: &str, x: f64) -> Result<f64, ModelError> {
    fitted.characteristic_score(name, x)
}
