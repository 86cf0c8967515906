use serde::{Deserialize, Serialize};

use super::{FeatureVector, FEATURE_COUNT};
use crate::error::{Error, Result};

/// Spreads at or below this are floored; the feature then normalizes to 0.
pub const NORM_FLOOR: f64 = 1e-12;

/// What the centred value is divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Divisor {
    #[default]
    StdDev,
    Variance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    #[serde(default)]
    pub divisor: Divisor,
}

pub fn fit_norm(features: &[FeatureVector]) -> Result<NormStats> {
    fit_norm_with(features, Divisor::StdDev)
}

pub fn fit_norm_with(features: &[FeatureVector], divisor: Divisor) -> Result<NormStats> {
    if features.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "normalization needs at least 2 vectors, got {}",
            features.len()
        )));
    }
    let n = features.len() as f64;
    let mut mean = vec![0.0; FEATURE_COUNT];
    let mut scale = vec![0.0; FEATURE_COUNT];
    for j in 0..FEATURE_COUNT {
        let m = features.iter().map(|f| f.values[j]).sum::<f64>() / n;
        let var = features
            .iter()
            .map(|f| (f.values[j] - m).powi(2))
            .sum::<f64>()
            / n;
        let spread = match divisor {
            Divisor::StdDev => var.sqrt(),
            Divisor::Variance => var,
        };
        mean[j] = m;
        scale[j] = if spread > NORM_FLOOR { spread } else { NORM_FLOOR };
    }
    Ok(NormStats {
        mean,
        scale,
        divisor,
    })
}

pub fn apply_norm(v: &FeatureVector, stats: &NormStats) -> FeatureVector {
    let mut out = *v;
    for j in 0..FEATURE_COUNT {
        out.values[j] = if stats.scale[j] <= NORM_FLOOR {
            0.0
        } else {
            (v.values[j] - stats.mean[j]) / stats.scale[j]
        };
    }
    out
}
