//! Power law between hysteretic damping and real stiffness.
//!
//! Across co-contraction levels the identified pairs `(K_h, H_h)` follow
//! `H_h = 10^beta0 * K_h^beta1`, fitted as an ordinary least-squares line in
//! `(log10 K_h, log10 H_h)`. With the law in hand the loss factor becomes a
//! function of stiffness alone, which reduces M2 to a 1-parameter model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    /// Intercept of the log10 regression.
    pub beta0: f64,
    /// Slope of the log10 regression.
    pub beta1: f64,
    /// Coefficient of determination of the log10 regression.
    pub r2: f64,
}

impl PowerLaw {
    /// A law with known coefficients and no regression behind it (`r2 = 1`).
    pub fn new(beta0: f64, beta1: f64) -> Self {
        PowerLaw { beta0, beta1, r2: 1.0 }
    }

    /// `H_h = 10^beta0 * K_h^beta1`.
    pub fn predict_h(&self, k_h: f64) -> f64 {
        10f64.powf(self.beta0) * k_h.powf(self.beta1)
    }

    /// Loss factor `c_h = H_h / K_h = 10^beta0 * K_h^(beta1 - 1)`.
    pub fn loss_factor(&self, k_h: f64) -> f64 {
        10f64.powf(self.beta0) * k_h.powf(self.beta1 - 1.0)
    }

    /// Stiffness in `[k_low, k_high]` with the smallest loss factor.
    ///
    /// For `beta1 < 1` the loss factor decreases with stiffness, so the
    /// minimum sits at the upper bound; otherwise at the lower bound.
    pub fn least_damped_stiffness(&self, k_low: f64, k_high: f64) -> f64 {
        if self.beta1 < 1.0 {
            k_high
        } else {
            k_low
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta0.is_finite() && self.beta1.is_finite()) {
            return Err(Error::domain("power law coefficients must be finite"));
        }
        if self.r2.is_nan() || self.r2 > 1.0 + 1e-12 {
            return Err(Error::domain(format!("power law r2 = {} outside (-inf, 1]", self.r2)));
        }
        Ok(())
    }
}

/// Relation used to attach hysteretic damping to a stiffness value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DampingLaw {
    Power(PowerLaw),
    /// Stiffness-independent loss factor; `c_h = 0` removes hysteretic damping.
    LossFactor { c_h: f64 },
}

impl DampingLaw {
    pub fn predict_h(&self, k_h: f64) -> f64 {
        match self {
            DampingLaw::Power(law) => law.predict_h(k_h),
            DampingLaw::LossFactor { c_h } => c_h * k_h,
        }
    }

    pub fn loss_factor(&self, k_h: f64) -> f64 {
        match self {
            DampingLaw::Power(law) => law.loss_factor(k_h),
            DampingLaw::LossFactor { c_h } => *c_h,
        }
    }

    pub fn least_damped_stiffness(&self, k_low: f64, k_high: f64) -> f64 {
        match self {
            DampingLaw::Power(law) => law.least_damped_stiffness(k_low, k_high),
            DampingLaw::LossFactor { .. } => k_low,
        }
    }
}

impl From<PowerLaw> for DampingLaw {
    fn from(law: PowerLaw) -> Self {
        DampingLaw::Power(law)
    }
}

/// Ordinary least squares of `log10 H` on `log10 K`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLaw> {
    if points.len() < 2 {
        return Err(Error::domain(format!(
            "power law fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    if let Some((k, h)) = points.iter().find(|(k, h)| !(*k > 0.0 && *h > 0.0)) {
        return Err(Error::domain(format!(
            "power law points must be strictly positive, got (K_h = {k}, H_h = {h})"
        )));
    }

    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(k, _)| k.log10()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, h)| h.log10()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;

    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    if sxx <= f64::EPSILON * n * x_mean.abs().max(1.0) {
        return Err(Error::domain("power law fit needs at least two distinct stiffness values"));
    }

    let beta1 = sxy / sxx;
    let beta0 = y_mean - beta1 * x_mean;

    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (beta0 + beta1 * x)).powi(2))
        .sum();
    let tss: f64 = ys.iter().map(|y| (y - y_mean).powi(2)).sum();
    let r2 = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };

    Ok(PowerLaw { beta0, beta1, r2 })
}

/// `10^(mean of log10 values)`.
pub fn geometric_average(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::domain("geometric average of an empty set"));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::domain(format!("geometric average needs positive values, got {v}")));
    }
    let mean_log = values.iter().map(|v| v.log10()).sum::<f64>() / values.len() as f64;
    Ok(10f64.powf(mean_log))
}

/// Where a fitted law came from, carried next to it in JSON outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// "subject" or "cohort".
    pub level: String,
    /// Model whose fits supplied the points (always "M2").
    pub model: String,
    pub subjects: Vec<String>,
    pub experiments: Vec<u32>,
    /// The `(K_h, H_h)` points the law was fitted to.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawRecord {
    pub law: PowerLaw,
    pub provenance: Provenance,
}
