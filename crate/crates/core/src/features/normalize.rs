use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Min-max range of one feature, fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    /// Fits over finite values. Fewer than two distinct values is a config error.
    pub fn fit(name: &str, values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            if !v.is_finite() {
                return Err(Error::config(format!(
                    "feature {name} has a non-finite training value"
                )));
            }
            min = min.min(v);
            max = max.max(v);
        }
        if !(max > min) {
            return Err(Error::config(format!(
                "feature {name} is constant on the training split"
            )));
        }
        Ok(Self {
            name: name.to_string(),
            min,
            max,
        })
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn transform(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn inverse(&self, x: f64) -> f64 {
        x * (self.max - self.min) + self.min
    }
}

/// Frozen per-feature ranges. Features not listed pass through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub ranges: Vec<FeatureRange>,
}

impl NormalizationSpec {
    pub fn get(&self, name: &str) -> Option<&FeatureRange> {
        self.ranges.iter().find(|r| r.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.ranges {
            if !(r.max > r.min) || !r.min.is_finite() || !r.max.is_finite() {
                return Err(Error::config(format!(
                    "normalization range for {} is degenerate",
                    r.name
                )));
            }
        }
        Ok(())
    }
}

/// Fits a range on `series` (or reuses `spec`) and returns the transformed
/// values with the range used.
pub fn minmax_fit_transform(
    name: &str,
    series: &[f64],
    spec: Option<&FeatureRange>,
) -> Result<(Vec<f64>, FeatureRange)> {
    let range = match spec {
        Some(r) => r.clone(),
        None => FeatureRange::fit(name, series.iter().copied())?,
    };
    Ok((series.iter().map(|&x| range.transform(x)).collect(), range))
}
