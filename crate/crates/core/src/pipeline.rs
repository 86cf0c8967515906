//! End-to-end composition: recording → CPR → peaks → RR → features, and the
//! synthetic cohort used for training and evaluation.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beats::{detect_peaks, to_rr_within, PeakList, RrSeries};
use crate::cpr::{extract_cpr, CprConfig, CprSeries, CPR_RATE_HZ};
use crate::error::{Error, Result};
use crate::features::{compute_features, FeatureVector};
use crate::recording::{AudioRecording, Label};
use crate::signal::{
    synth_recording_with, BeatModel, ChannelParams, ChannelTruth, NoiseSpec, ProbeConfig,
    Rhythm, Scenario, MAX_RR_MS, MIN_RR_MS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub carrier_hz: f64,
    pub input_rate_hz: f64,
    pub cpr_rate_hz: f64,
    pub bandpass_halfwidth_hz: f64,
    pub min_rr_ms: f64,
    pub max_rr_ms: f64,
    pub c: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 18_000.0,
            input_rate_hz: 48_000.0,
            cpr_rate_hz: CPR_RATE_HZ,
            bandpass_halfwidth_hz: 50.0,
            min_rr_ms: MIN_RR_MS,
            max_rr_ms: MAX_RR_MS,
            c: 1.0,
            seed: 42,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cpr_rate_hz != CPR_RATE_HZ {
            return Err(Error::Config(format!(
                "CPR rate is fixed at {CPR_RATE_HZ} Hz, got {}",
                self.cpr_rate_hz
            )));
        }
        if !(self.min_rr_ms > 0.0 && self.min_rr_ms < self.max_rr_ms) {
            return Err(Error::Config(format!(
                "RR bounds {}..{} ms are not increasing and positive",
                self.min_rr_ms, self.max_rr_ms
            )));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        Ok(())
    }

    pub fn cpr(&self) -> CprConfig {
        CprConfig {
            carrier_hz: self.carrier_hz,
            bandpass_halfwidth_hz: self.bandpass_halfwidth_hz,
            ..CprConfig::default()
        }
    }
}

/// Every intermediate of one recording.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub cpr: CprSeries,
    pub peaks: PeakList,
    pub rr: RrSeries,
    pub features: FeatureVector,
}

impl Analysis {
    /// Mean heart rate in beats per minute.
    pub fn mean_hr_bpm(&self) -> f64 {
        60_000.0 / crate::dsp::mean(&self.rr.rr_ms)
    }
}

pub fn analyze(rec: &AudioRecording, cfg: &PipelineConfig) -> Result<Analysis> {
    cfg.validate()?;
    if (rec.sample_rate_hz - cfg.input_rate_hz).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "recording rate {} Hz differs from configured {} Hz",
            rec.sample_rate_hz, cfg.input_rate_hz
        )));
    }
    let cpr = extract_cpr(rec, &cfg.cpr())?;
    let peaks = detect_peaks(&cpr)?;
    let rr = to_rr_within(&peaks, cfg.min_rr_ms, cfg.max_rr_ms)?;
    let features = compute_features(&rr)?;
    Ok(Analysis {
        cpr,
        peaks,
        rr,
        features,
    })
}

/// Shape of a synthetic cohort. The first `n_af` subjects are AF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_subjects: usize,
    pub n_af: usize,
    pub records_per_subject: usize,
    pub duration_s: f64,
    pub seed: u64,
    pub scenario: Scenario,
    /// Broadband noise level; `None` is noise-free.
    pub snr_db: Option<f64>,
    pub carrier_hz: f64,
    pub sample_rate_hz: f64,
    /// Prefix for subject ids, e.g. `S` gives `S01`, `S02`, ...
    pub subject_prefix: String,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_subjects: 20,
            n_af: 6,
            records_per_subject: 40,
            duration_s: 30.0,
            seed: 42,
            scenario: Scenario::Quiet,
            snr_db: Some(30.0),
            carrier_hz: 18_000.0,
            sample_rate_hz: 48_000.0,
            subject_prefix: "S".into(),
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.records_per_subject == 0 {
            return Err(Error::Config("cohort needs subjects and records".into()));
        }
        if self.n_af > self.n_subjects {
            return Err(Error::Config(format!(
                "{} AF subjects out of {}",
                self.n_af, self.n_subjects
            )));
        }
        if self.subject_prefix.contains([',', '"', '\n', '/', '\\']) {
            return Err(Error::Config(format!(
                "subject prefix {:?} has reserved characters",
                self.subject_prefix
            )));
        }
        ProbeConfig {
            carrier_frequency_hz: self.carrier_hz,
            gain: RECORD_GAIN,
            sample_rate_hz: self.sample_rate_hz,
            duration_s: self.duration_s,
        }
        .validate()
    }
}

/// Probe amplitude of cohort recordings, leaving headroom for noise.
const RECORD_GAIN: f64 = 0.3;

/// Everything needed to synthesize one cohort recording.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordPlan {
    pub subject_id: String,
    pub record_index: usize,
    pub label: Label,
    pub scenario: Scenario,
    pub seed: u64,
    pub probe: ProbeConfig,
    pub model: BeatModel,
    pub channel: ChannelParams,
    pub noise: NoiseSpec,
}

impl RecordPlan {
    /// File stem such as `S03_r07`.
    pub fn stem(&self) -> String {
        format!("{}_r{:02}", self.subject_id, self.record_index)
    }

    pub fn synthesize(&self) -> Result<(AudioRecording, ChannelTruth)> {
        let (mut rec, truth) =
            synth_recording_with(&self.probe, &self.model, &self.channel, &self.noise)?;
        rec.subject_id = self.subject_id.clone();
        Ok((rec, truth))
    }
}

/// Per-subject physiology, drawn once from the subject's seed.
struct SubjectTraits {
    rhythm: Rhythm,
    mean_rr_ms: f64,
    variability: f64,
    resp_depth: f64,
    resp_freq_hz: f64,
    modulation_depth_rad: f64,
}

impl SubjectTraits {
    fn draw(rhythm: Rhythm, rng: &mut ChaCha8Rng) -> Self {
        let (mean_rr_ms, variability) = match rhythm {
            Rhythm::Nsr => (rng.random_range(650.0..1050.0), rng.random_range(15.0..35.0)),
            // Relative spread for AF.
            Rhythm::Af => (rng.random_range(550.0..950.0), rng.random_range(0.10..0.20)),
        };
        Self {
            rhythm,
            mean_rr_ms,
            variability,
            resp_depth: rng.random_range(0.02..0.05),
            resp_freq_hz: rng.random_range(0.2..0.33),
            modulation_depth_rad: rng.random_range(0.2..0.4),
        }
    }
}

/// Deterministic list of recordings for `spec`, subject-major.
pub fn cohort_plan(spec: &CohortSpec) -> Result<Vec<RecordPlan>> {
    spec.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.n_subjects.to_string().len().max(2);
    let mut plans = Vec::with_capacity(spec.n_subjects * spec.records_per_subject);
    for s in 0..spec.n_subjects {
        let subject_seed: u64 = master.random();
        let mut rng = ChaCha8Rng::seed_from_u64(subject_seed);
        let rhythm = if s < spec.n_af { Rhythm::Af } else { Rhythm::Nsr };
        let traits = SubjectTraits::draw(rhythm, &mut rng);
        let subject_id = format!("{}{:0width$}", spec.subject_prefix, s + 1);
        for r in 0..spec.records_per_subject {
            let seed: u64 = rng.random();
            let mean = (traits.mean_rr_ms * rng.random_range(0.95..1.05)).clamp(MIN_RR_MS, MAX_RR_MS);
            let model = match traits.rhythm {
                Rhythm::Nsr => BeatModel {
                    rr_sd_ms: traits.variability,
                    respiratory_mod_depth: traits.resp_depth,
                    respiratory_freq_hz: traits.resp_freq_hz,
                    ..BeatModel::nsr(mean, seed)
                },
                Rhythm::Af => BeatModel {
                    rr_sd_ms: traits.variability * mean,
                    ..BeatModel::af(mean, seed)
                },
            };
            let channel = ChannelParams {
                modulation_depth_rad: traits.modulation_depth_rad,
                static_offset_rad: rng.random_range(-PI..PI),
                ..ChannelParams::default()
            };
            let noise = match spec.snr_db {
                Some(snr) => NoiseSpec::scenario(spec.scenario, snr),
                None => NoiseSpec {
                    scenario: spec.scenario,
                    ..NoiseSpec::none()
                },
            };
            plans.push(RecordPlan {
                subject_id: subject_id.clone(),
                record_index: r + 1,
                label: rhythm.label(),
                scenario: spec.scenario,
                seed,
                probe: ProbeConfig {
                    carrier_frequency_hz: spec.carrier_hz,
                    gain: RECORD_GAIN,
                    sample_rate_hz: spec.sample_rate_hz,
                    duration_s: spec.duration_s,
                },
                model,
                channel,
                noise,
            });
        }
    }
    Ok(plans)
}
