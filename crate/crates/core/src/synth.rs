//! Seeded synthetic scorecard data with known log-odds curves.
//!
//! Each record draws every characteristic independently (optionally replaced
//! by a sentinel code), then a good outcome with probability
//! `σ(intercept + Σ_k f_k(x_k))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp, LogNormal, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::{uniform_grid, CURVE_POINTS};
use crate::dataset::{DataError, Dataset};

pub const SYNTH_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueDistribution {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrueCurve {
    /// No effect on the outcome.
    Zero,
    Linear { slope: f64, intercept: f64 },
    /// Linear interpolation through the points, constant beyond them.
    PiecewiseLinear { xs: Vec<f64>, ys: Vec<f64> },
    /// `low + (high − low) σ((x − location)/scale)`.
    Logistic { location: f64, scale: f64, low: f64, high: f64 },
}

impl TrueCurve {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TrueCurve::Zero => 0.0,
            TrueCurve::Linear { slope, intercept } => intercept + slope * x,
            TrueCurve::PiecewiseLinear { xs, ys } => {
                if x <= xs[0] {
                    return ys[0];
                }
                let last = xs.len() - 1;
                if x >= xs[last] {
                    return ys[last];
                }
                let k = xs.partition_point(|v| *v <= x) - 1;
                let w = (x - xs[k]) / (xs[k + 1] - xs[k]);
                ys[k] + w * (ys[k + 1] - ys[k])
            }
            TrueCurve::Logistic { location, scale, low, high } => low + (high - low) * sigmoid((x - location) / scale),
        }
    }

    fn validate(&self, name: &str) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(format!("characteristic '{name}': {m}")));
        match self {
            TrueCurve::Zero => Ok(()),
            TrueCurve::Linear { slope, intercept } => {
                if slope.is_finite() && intercept.is_finite() {
                    Ok(())
                } else {
                    bad("linear curve needs finite slope and intercept")
                }
            }
            TrueCurve::PiecewiseLinear { xs, ys } => {
                if xs.is_empty() || xs.len() != ys.len() {
                    return bad("piecewise-linear curve needs equal, nonempty xs and ys");
                }
                if xs.iter().chain(ys).any(|v| !v.is_finite()) || xs.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("piecewise-linear xs must be finite and strictly increasing");
                }
                Ok(())
            }
            TrueCurve::Logistic { location, scale, low, high } => {
                if [location, scale, low, high].iter().all(|v| v.is_finite()) && *scale > 0.0 {
                    Ok(())
                } else {
                    bad("logistic curve needs finite parameters and scale > 0")
                }
            }
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentinel {
    pub value: f64,
    pub probability: f64,
    /// Log-odds contribution of a sentinel record.
    #[serde(default)]
    pub log_odds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCharacteristic {
    pub name: String,
    pub distribution: ValueDistribution,
    /// Draws are clamped into `[lo, hi]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<[f64; 2]>,
    pub curve: TrueCurve,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentinel: Option<Sentinel>,
}

impl SynthCharacteristic {
    pub fn new(name: &str, distribution: ValueDistribution, curve: TrueCurve) -> Self {
        Self {
            name: name.to_string(),
            distribution,
            clip: None,
            curve,
            sentinel: None,
        }
    }

    pub fn with_clip(mut self, lo: f64, hi: f64) -> Self {
        self.clip = Some([lo, hi]);
        self
    }

    pub fn with_sentinel(mut self, value: f64, probability: f64, log_odds: f64) -> Self {
        self.sentinel = Some(Sentinel {
            value,
            probability,
            log_odds,
        });
        self
    }

    /// Log-odds contribution of value `x`.
    pub fn true_log_odds(&self, x: f64) -> f64 {
        match &self.sentinel {
            Some(s) if s.value == x => s.log_odds,
            _ => self.curve.eval(x),
        }
    }

    /// Range the curve is reported over: the clip range, or the support of a
    /// uniform distribution.
    pub fn reporting_range(&self) -> Option<(f64, f64)> {
        match (self.clip, &self.distribution) {
            (Some([lo, hi]), _) => Some((lo, hi)),
            (None, ValueDistribution::Uniform { low, high }) => Some((*low, *high)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub rows: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub intercept: f64,
    pub characteristics: Vec<SynthCharacteristic>,
}

fn default_schema() -> u32 {
    SYNTH_SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCurve {
    pub name: String,
    pub xs: Vec<f64>,
    pub log_odds: Vec<f64>,
}

enum Sampler {
    Uniform(Uniform<f64>),
    Normal(Normal<f64>),
    LogNormal(LogNormal<f64>),
    Exponential(Exp<f64>),
}

impl Sampler {
    fn new(name: &str, d: &ValueDistribution) -> Result<Self, SynthError> {
        let bad = |e: String| SynthError::InvalidSpec(format!("characteristic '{name}': {e}"));
        let positive = match *d {
            ValueDistribution::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            ValueDistribution::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            ValueDistribution::LogNormal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma > 0.0,
            ValueDistribution::Exponential { rate } => rate.is_finite() && rate > 0.0,
        };
        if !positive {
            return Err(bad("distribution parameters must be finite with a positive spread".into()));
        }
        Ok(match *d {
            ValueDistribution::Uniform { low, high } => {
                Sampler::Uniform(Uniform::new_inclusive(low, high).map_err(|e| bad(e.to_string()))?)
            }
            ValueDistribution::Normal { mean, sd } => Sampler::Normal(Normal::new(mean, sd).map_err(|e| bad(e.to_string()))?),
            ValueDistribution::LogNormal { mu, sigma } => {
                Sampler::LogNormal(LogNormal::new(mu, sigma).map_err(|e| bad(e.to_string()))?)
            }
            ValueDistribution::Exponential { rate } => Sampler::Exponential(Exp::new(rate).map_err(|e| bad(e.to_string()))?),
        })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Uniform(d) => d.sample(rng),
            Sampler::Normal(d) => d.sample(rng),
            Sampler::LogNormal(d) => d.sample(rng),
            Sampler::Exponential(d) => d.sample(rng),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.rows == 0 {
            return Err(SynthError::InvalidSpec("rows must be positive".into()));
        }
        if !self.intercept.is_finite() {
            return Err(SynthError::InvalidSpec("intercept must be finite".into()));
        }
        let mut names = std::collections::HashSet::new();
        for c in &self.characteristics {
            if !names.insert(c.name.as_str()) {
                return Err(SynthError::InvalidSpec(format!("duplicate characteristic '{}'", c.name)));
            }
            if matches!(c.name.as_str(), crate::dataset::OUTCOME_COLUMN | crate::dataset::WEIGHT_COLUMN) {
                return Err(SynthError::InvalidSpec(format!("reserved column name '{}'", c.name)));
            }
            c.curve.validate(&c.name)?;
            Sampler::new(&c.name, &c.distribution)?;
            if let Some([lo, hi]) = c.clip {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(SynthError::InvalidSpec(format!("characteristic '{}': clip needs lo < hi", c.name)));
                }
            }
            if let Some(s) = &c.sentinel {
                if !(s.value.is_finite() && s.log_odds.is_finite() && (0.0..1.0).contains(&s.probability)) {
                    return Err(SynthError::InvalidSpec(format!(
                        "characteristic '{}': sentinel needs finite value and probability in [0, 1)",
                        c.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<Dataset, SynthError> {
        self.validate()?;
        let samplers = self
            .characteristics
            .iter()
            .map(|c| Sampler::new(&c.name, &c.distribution))
            .collect::<Result<Vec<_>, _>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(self.rows); self.characteristics.len()];
        let mut good = Vec::with_capacity(self.rows);
        for _ in 0..self.rows {
            let mut eta = self.intercept;
            for (k, c) in self.characteristics.iter().enumerate() {
                let u: f64 = rng.random();
                let x = match &c.sentinel {
                    Some(s) if u < s.probability => s.value,
                    _ => {
                        let raw = samplers[k].sample(&mut rng);
                        match c.clip {
                            Some([lo, hi]) => raw.clamp(lo, hi),
                            None => raw,
                        }
                    }
                };
                eta += c.true_log_odds(x);
                columns[k].push(x);
            }
            let u: f64 = rng.random();
            good.push(u < sigmoid(eta));
        }
        let named = self
            .characteristics
            .iter()
            .map(|c| c.name.clone())
            .zip(columns)
            .collect();
        Ok(Dataset::new(named, good, None)?)
    }

    /// True curves sampled uniformly over each reporting range.
    pub fn truth_curves(&self) -> Vec<TruthCurve> {
        self.characteristics
            .iter()
            .filter_map(|c| {
                let (lo, hi) = c.reporting_range()?;
                let xs = uniform_grid(lo, hi, CURVE_POINTS);
                let log_odds = xs.iter().map(|&x| c.curve.eval(x)).collect();
                Some(TruthCurve {
                    name: c.name.clone(),
                    xs,
                    log_odds,
                })
            })
            .collect()
    }

    pub fn characteristic(&self, name: &str) -> Option<&SynthCharacteristic> {
        self.characteristics.iter().find(|c| c.name == name)
    }
}
