//! Distribution specifications carried by trace entries.

use std::f64::consts::PI;
use std::fmt;

use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use super::rng::CounterRng;
use crate::error::{Error, Result};

/// `-0.5 * ln(2π)`
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Tolerance on the sum of categorical probabilities.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// A sampled or observed value: a real number or a category index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Index(usize),
    Real(f64),
}

impl Value {
    pub fn as_f64(self) -> f64 {
        match self {
            Value::Index(k) => k as f64,
            Value::Real(x) => x,
        }
    }

    /// Category index, accepting reals that are exact nonnegative integers.
    pub fn as_index(self) -> Option<usize> {
        match self {
            Value::Index(k) => Some(k),
            Value::Real(x) if x >= 0.0 && x.fract() == 0.0 && x < 1e15 => Some(x as usize),
            Value::Real(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Index(k) => write!(f, "{k}"),
            Value::Real(x) => write!(f, "{x}"),
        }
    }
}

/// Coarse family tag, used for embeddings and registry bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    Normal,
    Uniform,
    Categorical,
}

impl DistKind {
    pub const COUNT: usize = 3;

    pub fn one_hot_index(self) -> usize {
        match self {
            DistKind::Normal => 0,
            DistKind::Uniform => 1,
            DistKind::Categorical => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DistKind::Normal => "normal",
            DistKind::Uniform => "uniform",
            DistKind::Categorical => "categorical",
        }
    }
}

/// A distribution passed to a `sample` or `observe` statement.
///
/// `SquashedNormal` is the surrogate's family for bounded sites:
/// `x = low + (high - low) * sigmoid(z)` with `z ~ Normal(loc, scale)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Distribution {
    Normal { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
    Categorical { probs: Vec<f64> },
    SquashedNormal { loc: f64, scale: f64, low: f64, high: f64 },
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Normal { mean, std } => write!(f, "Normal({mean}, {std})"),
            Distribution::Uniform { low, high } => write!(f, "Uniform({low}, {high})"),
            Distribution::Categorical { probs } => write!(f, "Categorical({probs:?})"),
            Distribution::SquashedNormal { loc, scale, low, high } => {
                write!(f, "SquashedNormal({loc}, {scale}; {low}, {high})")
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Log density of `Normal(mean, std)` at `x`.
#[inline]
pub fn normal_log_density(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - LN_SQRT_2PI
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// `log softmax(logits)[index]`.
pub fn log_softmax_at(logits: &[f64], index: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&l| (l - m).exp()).sum();
    logits[index] - m - sum.ln()
}

impl Distribution {
    pub fn normal(mean: f64, std: f64) -> Self {
        Distribution::Normal { mean, std }
    }

    pub fn uniform(low: f64, high: f64) -> Self {
        Distribution::Uniform { low, high }
    }

    pub fn categorical(probs: Vec<f64>) -> Self {
        Distribution::Categorical { probs }
    }

    pub fn kind(&self) -> DistKind {
        match self {
            Distribution::Normal { .. } => DistKind::Normal,
            Distribution::Uniform { .. } | Distribution::SquashedNormal { .. } => DistKind::Uniform,
            Distribution::Categorical { .. } => DistKind::Categorical,
        }
    }

    /// Support bounds of bounded continuous families.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            Distribution::Uniform { low, high } | Distribution::SquashedNormal { low, high, .. } => {
                Some((low, high))
            }
            _ => None,
        }
    }

    pub fn num_categories(&self) -> Option<usize> {
        match self {
            Distribution::Categorical { probs } => Some(probs.len()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDistribution(msg));
        match self {
            Distribution::Normal { mean, std } => {
                if !mean.is_finite() || !std.is_finite() {
                    return bad(format!("non-finite parameter in {self}"));
                }
                if *std <= 0.0 {
                    return bad(format!("stddev must be positive in {self}"));
                }
            }
            Distribution::Uniform { low, high } => {
                if !low.is_finite() || !high.is_finite() {
                    return bad(format!("non-finite parameter in {self}"));
                }
                if low >= high {
                    return bad(format!("low must be below high in {self}"));
                }
            }
            Distribution::Categorical { probs } => {
                if probs.is_empty() {
                    return bad("categorical needs at least one category".into());
                }
                if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return bad(format!("probabilities must be finite and nonnegative in {self}"));
                }
                let s: f64 = probs.iter().sum();
                if (s - 1.0).abs() > PROB_SUM_TOL {
                    return bad(format!("probabilities sum to {s}, not 1"));
                }
            }
            Distribution::SquashedNormal { loc, scale, low, high } => {
                if ![*loc, *scale, *low, *high].iter().all(|v| v.is_finite()) {
                    return bad(format!("non-finite parameter in {self}"));
                }
                if *scale <= 0.0 || low >= high {
                    return bad(format!("invalid parameters in {self}"));
                }
            }
        }
        Ok(())
    }

    fn support_error(&self, x: Value) -> Error {
        Error::Support {
            value: x.to_string(),
            dist: self.to_string(),
        }
    }

    /// Exact log density (continuous) or log mass (categorical).
    ///
    /// Values outside a bounded support, or category indices out of range,
    /// are reported as [`Error::Support`] rather than `-inf`. A category with
    /// zero probability is in range and scores `-inf`.
    pub fn log_prob(&self, x: Value) -> Result<f64> {
        match self {
            Distribution::Normal { mean, std } => Ok(normal_log_density(x.as_f64(), *mean, *std)),
            Distribution::Uniform { low, high } => {
                let v = x.as_f64();
                if !(v >= *low && v <= *high) {
                    return Err(self.support_error(x));
                }
                Ok(-(high - low).ln())
            }
            Distribution::Categorical { probs } => match x.as_index() {
                Some(k) if k < probs.len() => Ok(probs[k].ln()),
                _ => Err(self.support_error(x)),
            },
            Distribution::SquashedNormal { loc, scale, low, high } => {
                let v = x.as_f64();
                if !(v > *low && v < *high) {
                    return Err(self.support_error(x));
                }
                let width = high - low;
                let s = (v - low) / width;
                let z = logit(s);
                Ok(normal_log_density(z, *loc, *scale) - width.ln() - s.ln() - (1.0 - s).ln())
            }
        }
    }

    pub fn sample(&self, rng: &mut CounterRng) -> Value {
        match self {
            Distribution::Normal { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                Value::Real(mean + std * z)
            }
            Distribution::Uniform { low, high } => Value::Real(low + (high - low) * rng.next_f64()),
            Distribution::Categorical { probs } => {
                let u = rng.next_f64();
                let mut acc = 0.0;
                let mut last_positive = 0;
                for (k, p) in probs.iter().enumerate() {
                    if *p > 0.0 {
                        last_positive = k;
                    }
                    acc += p;
                    if u < acc && *p > 0.0 {
                        return Value::Index(k);
                    }
                }
                // Rounding left u above the cumulative sum.
                Value::Index(last_positive)
            }
            Distribution::SquashedNormal { loc, scale, low, high } => {
                let z: f64 = StandardNormal.sample(rng);
                let s = sigmoid(loc + scale * z);
                // Keep the draw strictly inside the open interval.
                let s = s.clamp(f64::EPSILON, 1.0 - f64::EPSILON);
                Value::Real(low + (high - low) * s)
            }
        }
    }

    /// Mean and standard deviation of a continuous distribution, used as the
    /// reference scale for proposals. Squashed normals report their
    /// underlying location and scale.
    pub fn location_scale(&self) -> Option<(f64, f64)> {
        match *self {
            Distribution::Normal { mean, std } => Some((mean, std)),
            Distribution::Uniform { low, high } => Some((0.5 * (low + high), (high - low) / 12f64.sqrt())),
            Distribution::SquashedNormal { loc, scale, .. } => Some((loc, scale)),
            Distribution::Categorical { .. } => None,
        }
    }

    /// Differential entropy (nats) of the families with a closed form.
    pub fn entropy(&self) -> Option<f64> {
        match self {
            Distribution::Normal { std, .. } => Some(0.5 * (2.0 * PI * std * std).ln() + 0.5),
            Distribution::Uniform { low, high } => Some((high - low).ln()),
            Distribution::Categorical { probs } => Some(
                -probs
                    .iter()
                    .filter(|p| **p > 0.0)
                    .map(|p| p * p.ln())
                    .sum::<f64>(),
            ),
            Distribution::SquashedNormal { .. } => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct DistributionRepr {
    kind: String,
    params: Vec<f64>,
}

impl Serialize for Distribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (kind, params) = match self {
            Distribution::Normal { mean, std } => ("normal", vec![*mean, *std]),
            Distribution::Uniform { low, high } => ("uniform", vec![*low, *high]),
            Distribution::Categorical { probs } => ("categorical", probs.clone()),
            Distribution::SquashedNormal { loc, scale, low, high } => {
                ("squashed_normal", vec![*loc, *scale, *low, *high])
            }
        };
        DistributionRepr {
            kind: kind.to_string(),
            params,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Distribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = DistributionRepr::deserialize(d)?;
        let need = |n: usize| {
            if r.params.len() == n {
                Ok(())
            } else {
                Err(D::Error::custom(format!(
                    "{} expects {n} params, got {}",
                    r.kind,
                    r.params.len()
                )))
            }
        };
        match r.kind.as_str() {
            "normal" => {
                need(2)?;
                Ok(Distribution::Normal {
                    mean: r.params[0],
                    std: r.params[1],
                })
            }
            "uniform" => {
                need(2)?;
                Ok(Distribution::Uniform {
                    low: r.params[0],
                    high: r.params[1],
                })
            }
            "categorical" => Ok(Distribution::Categorical { probs: r.params }),
            "squashed_normal" => {
                need(4)?;
                Ok(Distribution::SquashedNormal {
                    loc: r.params[0],
                    scale: r.params[1],
                    low: r.params[2],
                    high: r.params[3],
                })
            }
            other => Err(D::Error::custom(format!("unknown distribution kind {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn log_prob_examples() {
        let n = Distribution::normal(0.0, 1.0);
        assert!(close(n.log_prob(Value::Real(0.0)).unwrap(), -0.918_938_5, 1e-7));
        let u = Distribution::uniform(2.0, 4.0);
        assert!(close(u.log_prob(Value::Real(3.0)).unwrap(), -0.693_147_2, 1e-7));
        let c = Distribution::categorical(vec![0.25, 0.75]);
        assert!(close(c.log_prob(Value::Index(1)).unwrap(), -0.287_682_1, 1e-7));
    }

    #[test]
    fn support_errors() {
        let u = Distribution::uniform(2.0, 4.0);
        assert!(matches!(u.log_prob(Value::Real(5.0)), Err(Error::Support { .. })));
        let c = Distribution::categorical(vec![0.5, 0.5]);
        assert!(matches!(c.log_prob(Value::Index(2)), Err(Error::Support { .. })));
        assert!(matches!(c.log_prob(Value::Real(0.5)), Err(Error::Support { .. })));
        // zero-probability category is in range
        let z = Distribution::categorical(vec![0.0, 1.0]);
        assert_eq!(z.log_prob(Value::Index(0)).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn validation() {
        assert!(Distribution::normal(0.0, 0.0).validate().is_err());
        assert!(Distribution::normal(f64::NAN, 1.0).validate().is_err());
        assert!(Distribution::uniform(1.0, 1.0).validate().is_err());
        assert!(Distribution::categorical(vec![]).validate().is_err());
        assert!(Distribution::categorical(vec![0.5, 0.4]).validate().is_err());
        assert!(Distribution::categorical(vec![-0.5, 1.5]).validate().is_err());
        assert!(Distribution::categorical(vec![0.5, 0.5 + 1e-12]).validate().is_ok());
    }

    #[test]
    fn degenerate_categorical_always_zero() {
        let c = Distribution::categorical(vec![1.0]);
        let mut rng = CounterRng::new(0, 0);
        for _ in 0..1000 {
            assert_eq!(c.sample(&mut rng), Value::Index(0));
        }
    }

    #[test]
    fn narrow_uniform_contains_draws() {
        let a = 3.25;
        let eps = 1e-6;
        let u = Distribution::uniform(a, a + eps);
        let mut rng = CounterRng::new(1, 0);
        for _ in 0..10_000 {
            let x = u.sample(&mut rng).as_f64();
            assert!(x >= a && x < a + eps);
        }
    }

    #[test]
    fn standard_normal_moments() {
        let n = Distribution::normal(0.0, 1.0);
        let mut rng = CounterRng::new(2024, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| n.sample(&mut rng).as_f64()).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn categorical_mass_sums_to_one() {
        let c = Distribution::categorical(vec![0.1, 0.2, 0.3, 0.4]);
        let s: f64 = (0..4).map(|k| c.log_prob(Value::Index(k)).unwrap().exp()).sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn log_prob_matches_entropy() {
        // Mean log density under own samples ≈ -entropy, within 3 standard errors.
        for d in [Distribution::normal(1.5, 0.7), Distribution::uniform(-2.0, 5.0)] {
            let mut rng = CounterRng::new(99, 1);
            let n = 100_000;
            let lps: Vec<f64> = (0..n).map(|_| d.log_prob(d.sample(&mut rng)).unwrap()).collect();
            let mean = lps.iter().sum::<f64>() / n as f64;
            let var = lps.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let se = (var / n as f64).sqrt();
            let target = -d.entropy().unwrap();
            assert!((mean - target).abs() <= 3.0 * se + 1e-9, "{d}: {mean} vs {target}");
        }
    }

    #[test]
    fn squashed_normal_density_integrates() {
        let d = Distribution::SquashedNormal {
            loc: 0.3,
            scale: 1.2,
            low: -3.0,
            high: -1.0,
        };
        let n = 200_000;
        let h = 2.0 / n as f64;
        let total: f64 = (0..n)
            .map(|i| {
                let x = -3.0 + (i as f64 + 0.5) * h;
                d.log_prob(Value::Real(x)).unwrap().exp() * h
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn softmax_basics() {
        let p = softmax(&[0.0; 5]);
        assert!(p.iter().all(|x| (x - 0.2).abs() < 1e-15));
        let a = softmax(&[1.0, 2.0, 3.0]);
        let e: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|x| x.exp()).collect();
        let s: f64 = e.iter().sum();
        for (x, y) in a.iter().zip(e.iter()) {
            assert!((x - y / s).abs() < 1e-15);
        }
    }

    #[test]
    fn serde_round_trip() {
        let d = Distribution::SquashedNormal {
            loc: 0.1,
            scale: 2.0,
            low: 0.0,
            high: 1.0,
        };
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"kind":"squashed_normal","params":[0.1,2.0,0.0,1.0]}"#);
        let back: Distribution = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<Distribution>(r#"{"kind":"normal","params":[1.0]}"#).is_err());
    }
}
