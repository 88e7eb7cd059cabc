//! Self-normalized estimators over log weights.

use crate::error::{Error, Result};
use crate::numerics::CounterRng;

fn max_finite(log_w: &[f64]) -> Result<f64> {
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(Error::Degenerate("no particle has positive weight".into()));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite {
            what: "log weight".into(),
            location: "estimator input".into(),
        });
    }
    Ok(m)
}

/// Weights scaled so that the largest is 1.
fn relative(log_w: &[f64]) -> Result<Vec<f64>> {
    let m = max_finite(log_w)?;
    Ok(log_w.iter().map(|l| (l - m).exp()).collect())
}

pub fn normalized_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let w = relative(log_w)?;
    let s: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / s).collect())
}

/// `Σ w f / Σ w`, with weights shifted by their maximum in log space.
pub fn posterior_expectation(log_w: &[f64], values: &[f64]) -> Result<f64> {
    if log_w.len() != values.len() {
        return Err(Error::Config("weights and values differ in length".into()));
    }
    let w = relative(log_w)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (wi, f) in w.iter().zip(values) {
        if *wi > 0.0 {
            num += wi * f;
            den += wi;
        }
    }
    Ok(num / den)
}

/// Effective sample size `(Σw)² / Σw²`, in `[1, K]`.
pub fn ess(log_w: &[f64]) -> Result<f64> {
    let w = relative(log_w)?;
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    Ok((s * s / s2).clamp(1.0, log_w.len() as f64))
}

/// Standard deviation of the self-normalized estimate over `resamples`
/// bootstrap replicates of the particle set.
pub fn bootstrap_se(log_w: &[f64], values: &[f64], resamples: usize, seed: u64) -> Result<f64> {
    if log_w.len() != values.len() {
        return Err(Error::Config("weights and values differ in length".into()));
    }
    let w = relative(log_w)?;
    let k = w.len();
    if k < 2 || resamples < 2 {
        return Ok(0.0);
    }
    let mut rng = CounterRng::new(seed, crate::numerics::rng::stream_id("bootstrap"));
    let mut est = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let (mut num, mut den) = (0.0, 0.0);
        for _ in 0..k {
            let i = ((rng.next_f64() * k as f64) as usize).min(k - 1);
            num += w[i] * values[i];
            den += w[i];
        }
        if den > 0.0 {
            est.push(num / den);
        }
    }
    if est.len() < 2 {
        return Ok(0.0);
    }
    let n = est.len() as f64;
    let mean = est.iter().sum::<f64>() / n;
    Ok((est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub bootstrap_se: f64,
    pub ess: f64,
    pub particles: usize,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

pub fn estimate(log_w: &[f64], values: &[f64], seed: u64) -> Result<Estimate> {
    Ok(Estimate {
        mean: posterior_expectation(log_w, values)?,
        bootstrap_se: bootstrap_se(log_w, values, BOOTSTRAP_RESAMPLES, seed)?,
        ess: ess(log_w)?,
        particles: log_w.len(),
    })
}
