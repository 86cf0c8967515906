use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Ground-truth class of a recording. AF is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "AF")]
    Af,
    #[serde(rename = "NSR")]
    Nsr,
    #[serde(rename = "unlabeled")]
    Unlabeled,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Af => "AF",
            Label::Nsr => "NSR",
            Label::Unlabeled => "unlabeled",
        }
    }

    /// +1 for AF, -1 for NSR, `None` when unlabeled.
    pub fn sign(self) -> Option<f64> {
        match self {
            Label::Af => Some(1.0),
            Label::Nsr => Some(-1.0),
            Label::Unlabeled => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "AF" => Ok(Label::Af),
            "NSR" => Ok(Label::Nsr),
            "unlabeled" | "" => Ok(Label::Unlabeled),
            other => Err(Error::InvalidInput(format!("unknown label {other:?}"))),
        }
    }
}

/// A mono acoustic recording with capture metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioRecording {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub subject_id: String,
    pub label: Label,
    pub scenario: String,
    /// Probe carrier used at capture time, when known.
    pub carrier_hz: Option<f64>,
}

impl AudioRecording {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Self {
        Self {
            samples,
            sample_rate_hz,
            subject_id: String::new(),
            label: Label::Unlabeled,
            scenario: "quiet".to_string(),
            carrier_hz: None,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
            subject_id: self.subject_id.clone(),
            label: self.label,
            scenario: self.scenario.clone(),
            carrier_hz: self.carrier_hz,
        }
    }
}
