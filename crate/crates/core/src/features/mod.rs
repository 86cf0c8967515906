//! The 26 heart-rhythm features, in canonical order, plus z-score
//! normalization.
//!
//! Undefined features (zero denominators, no entropy matches, too few beats) are
//! set to zero and flagged rather than rejecting the record. Standard
//! deviations are population deviations throughout.

mod complexity;
mod norm;
mod spectral;
mod time_domain;

pub use complexity::{
    approximate_entropy, coarse_grain, complexity_features, sample_entropy, shannon_entropy,
    turning_point_ratio,
};
pub use norm::{apply_norm, fit_norm, Divisor, NormStats, NORM_FLOOR};
pub use spectral::spectral_features;
pub use time_domain::{poincare_features, rr_features};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beats::RrSeries;
use crate::error::Result;

pub const FEATURE_COUNT: usize = 26;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "minHR",
    "meanHR",
    "medianHR",
    "skRR",
    "SDRR",
    "CVRR",
    "pNN50",
    "RMSSD",
    "SDRMSSD",
    "SDratio",
    "SDSD",
    "CVSD",
    "HF",
    "HFn",
    "LnHF",
    "TP",
    "SD1",
    "SD2",
    "SD1SD2",
    "S",
    "Difference",
    "SampEn",
    "ShanEn",
    "ApEn",
    "MSE",
    "TPR",
];

/// Offsets of each feature group inside the canonical vector.
const RR_OFFSET: usize = 0;
const SPECTRAL_OFFSET: usize = 12;
const POINCARE_OFFSET: usize = 16;
const COMPLEXITY_OFFSET: usize = 20;

/// Index of a feature by canonical name.
pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

/// 16 hex digits of SHA-256 over the comma-joined canonical names.
pub fn feature_fingerprint() -> String {
    let digest = Sha256::digest(FEATURE_NAMES.join(",").as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// A group of feature values with per-value validity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partial<const N: usize> {
    pub values: [f64; N],
    pub invalid: [bool; N],
}

impl<const N: usize> Default for Partial<N> {
    fn default() -> Self {
        Self {
            values: [0.0; N],
            invalid: [false; N],
        }
    }
}

impl<const N: usize> Partial<N> {
    fn set(&mut self, i: usize, v: f64) {
        if v.is_finite() {
            self.values[i] = v;
        } else {
            self.flag(i);
        }
    }

    fn set_opt(&mut self, i: usize, v: Option<f64>) {
        match v {
            Some(v) => self.set(i, v),
            None => self.flag(i),
        }
    }

    fn flag(&mut self, i: usize) {
        self.values[i] = 0.0;
        self.invalid[i] = true;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_COUNT],
    /// Bit `i` set when feature `i` was undefined and zeroed.
    pub flags: u32,
}

impl FeatureVector {
    pub fn new(values: [f64; FEATURE_COUNT]) -> Self {
        Self { values, flags: 0 }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.values[i])
    }

    pub fn is_flagged(&self, index: usize) -> bool {
        self.flags & (1 << index) != 0
    }

    pub fn flags_hex(&self) -> String {
        format!("{:07x}", self.flags)
    }

    pub fn parse_flags(s: &str) -> Option<u32> {
        let v = u32::from_str_radix(s.trim_start_matches("0x"), 16).ok()?;
        (v >> FEATURE_COUNT == 0).then_some(v)
    }

    fn merge<const N: usize>(&mut self, offset: usize, part: &Partial<N>) {
        for i in 0..N {
            self.values[offset + i] = part.values[i];
            if part.invalid[i] {
                self.flags |= 1 << (offset + i);
            }
        }
    }

    fn flag_group(&mut self, offset: usize, len: usize) {
        for i in offset..offset + len {
            self.values[i] = 0.0;
            self.flags |= 1 << i;
        }
    }
}

/// All 26 features of an RR series. Needs at least three intervals; the
/// spectral group is flagged below eight and the entropies below ten.
pub fn compute_features(rr: &RrSeries) -> Result<FeatureVector> {
    let x = &rr.rr_ms;
    let mut fv = FeatureVector::new([0.0; FEATURE_COUNT]);
    fv.merge(RR_OFFSET, &rr_features(x)?);
    match spectral_features(x) {
        Ok(p) => fv.merge(SPECTRAL_OFFSET, &p),
        Err(e) if e.is_insufficient_data() => fv.flag_group(SPECTRAL_OFFSET, 4),
        Err(e) => return Err(e),
    }
    fv.merge(POINCARE_OFFSET, &poincare_features(x)?);
    fv.merge(COMPLEXITY_OFFSET, &complexity_features(x)?);
    Ok(fv)
}
