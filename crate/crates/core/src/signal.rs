//! Synthetic probe signals and a wrist channel whose phase response is known
//! exactly, used as ground truth for every downstream stage.
//!
//! The received waveform is `A(t) cos(2π f t − θc(t) − θp)`. `θc` is a train of
//! two-lobe pulses (systolic peak plus a smaller dicrotic lobe) centred on
//! beat instants drawn from a rhythm model; `θp` is a constant hardware
//! offset.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::{Band, CarrierPhase, Sos};
use crate::error::{Error, Result};
use crate::recording::{AudioRecording, Label};

/// Sample rate of the stored ground-truth phase trace.
pub const TRUTH_RATE_HZ: f64 = 150.0;

pub const MIN_RR_MS: f64 = 300.0;
pub const MAX_RR_MS: f64 = 2000.0;

/// Fractions of the following RR interval.
const SYSTOLIC_WIDTH: f64 = 0.08;
const DICROTIC_DELAY: f64 = 0.25;
const DICROTIC_AMPLITUDE: f64 = 0.4;
/// Systolic peak position relative to beat onset.
const SYSTOLIC_POSITION: f64 = 0.3;

const NSR_AR_COEFFICIENT: f64 = 0.9;

const NOISE_SALT: u64 = 0x5eed_0f_a1_c0ffee;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub carrier_frequency_hz: f64,
    pub gain: f64,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            carrier_frequency_hz: 18_000.0,
            gain: 1.0,
            sample_rate_hz: 48_000.0,
            duration_s: 30.0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate_hz / 2.0;
        if !(self.carrier_frequency_hz > 0.0 && self.carrier_frequency_hz < nyquist) {
            return Err(Error::Config(format!(
                "carrier {} Hz must lie in (0, {nyquist}) Hz",
                self.carrier_frequency_hz
            )));
        }
        if !(self.gain > 0.0 && self.gain <= 1.0) {
            return Err(Error::Config(format!("gain {} not in (0, 1]", self.gain)));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Config(format!(
                "duration {} s must be positive",
                self.duration_s
            )));
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    fn carrier(&self) -> CarrierPhase {
        CarrierPhase::new(self.carrier_frequency_hz, self.sample_rate_hz)
    }
}

/// `gain · cos(2π f n / rate)`.
pub fn synth_probe(cfg: &ProbeConfig) -> Result<AudioRecording> {
    cfg.validate()?;
    let carrier = cfg.carrier();
    let samples = (0..cfg.sample_count())
        .map(|n| cfg.gain * carrier.at(n).cos())
        .collect();
    let mut rec = AudioRecording::new(samples, cfg.sample_rate_hz);
    rec.carrier_hz = Some(cfg.carrier_frequency_hz);
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rhythm {
    #[serde(rename = "NSR")]
    Nsr,
    #[serde(rename = "AF")]
    Af,
}

impl Rhythm {
    pub fn label(self) -> Label {
        match self {
            Rhythm::Nsr => Label::Nsr,
            Rhythm::Af => Label::Af,
        }
    }
}

/// Beat-interval generator.
///
/// NSR intervals follow a stationary AR(1) process around a respiratory
/// sinusoid; AF intervals are independent draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatModel {
    pub rhythm: Rhythm,
    pub mean_rr_ms: f64,
    pub rr_sd_ms: f64,
    /// Relative amplitude of the respiratory modulation (NSR only).
    pub respiratory_mod_depth: f64,
    pub respiratory_freq_hz: f64,
    pub seed: u64,
}

impl BeatModel {
    pub fn nsr(mean_rr_ms: f64, seed: u64) -> Self {
        Self {
            rhythm: Rhythm::Nsr,
            mean_rr_ms,
            rr_sd_ms: 25.0,
            respiratory_mod_depth: 0.03,
            respiratory_freq_hz: 0.25,
            seed,
        }
    }

    /// AF with spread at 15 % of the mean.
    pub fn af(mean_rr_ms: f64, seed: u64) -> Self {
        Self {
            rhythm: Rhythm::Af,
            mean_rr_ms,
            rr_sd_ms: 0.15 * mean_rr_ms,
            respiratory_mod_depth: 0.0,
            respiratory_freq_hz: 0.25,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_RR_MS..=MAX_RR_MS).contains(&self.mean_rr_ms) {
            return Err(Error::Model(format!(
                "mean RR {} ms outside [{MIN_RR_MS}, {MAX_RR_MS}] ms",
                self.mean_rr_ms
            )));
        }
        if !(self.rr_sd_ms >= 0.0 && self.rr_sd_ms.is_finite()) {
            return Err(Error::Model(format!("RR spread {} ms", self.rr_sd_ms)));
        }
        if !(0.0..1.0).contains(&self.respiratory_mod_depth) {
            return Err(Error::Model(format!(
                "respiratory depth {} not in [0, 1)",
                self.respiratory_mod_depth
            )));
        }
        Ok(())
    }
}

/// Draws RR intervals (ms) until their sum reaches `duration_s`.
pub fn synth_rr(model: &BeatModel, duration_s: f64) -> Result<Vec<f64>> {
    model.validate()?;
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::Config(format!("duration {duration_s} s must be positive")));
    }
    let target_ms = duration_s * 1000.0;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let mut rr = Vec::new();
    let mut total = 0.0;
    let clip = |v: f64| v.clamp(MIN_RR_MS, MAX_RR_MS);
    match model.rhythm {
        Rhythm::Af => {
            while total < target_ms {
                let z: f64 = rng.sample(StandardNormal);
                let v = clip(model.mean_rr_ms + model.rr_sd_ms * z);
                total += v;
                rr.push(v);
            }
        }
        Rhythm::Nsr => {
            let innovation = model.rr_sd_ms * (1.0 - NSR_AR_COEFFICIENT.powi(2)).sqrt();
            let resp_phase = rng.random::<f64>() * 2.0 * PI;
            let z: f64 = rng.sample(StandardNormal);
            let mut ar = model.rr_sd_ms * z;
            while total < target_ms {
                let t = total / 1000.0;
                let resp = model.respiratory_mod_depth
                    * (2.0 * PI * model.respiratory_freq_hz * t + resp_phase).sin();
                let v = clip(model.mean_rr_ms * (1.0 + resp) + ar);
                total += v;
                rr.push(v);
                let z: f64 = rng.sample(StandardNormal);
                ar = NSR_AR_COEFFICIENT * ar + innovation * z;
            }
        }
    }
    Ok(rr)
}

/// Wrist channel parameters that are not part of the rhythm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Peak systolic phase excursion, rad.
    pub modulation_depth_rad: f64,
    /// Constant hardware phase offset θp, rad.
    pub static_offset_rad: f64,
    /// Relative amplitude modulation riding on the pulse.
    pub amplitude_mod_depth: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            modulation_depth_rad: 0.3,
            static_offset_rad: 0.0,
            amplitude_mod_depth: 0.02,
        }
    }
}

/// Unit-height pulse train centred on systolic instants.
#[derive(Debug, Clone)]
pub struct PulseTrain {
    centres: Vec<f64>,
    periods: Vec<f64>,
}

impl PulseTrain {
    /// First systolic peak sits 30 % into the first interval; subsequent
    /// peaks are spaced by the given intervals.
    pub fn from_rr(rr_ms: &[f64]) -> Self {
        let mut centres = Vec::with_capacity(rr_ms.len() + 1);
        let mut periods = Vec::with_capacity(rr_ms.len() + 1);
        let Some(&first) = rr_ms.first() else {
            return Self { centres, periods };
        };
        let mut t = SYSTOLIC_POSITION * first / 1000.0;
        for &r in rr_ms {
            centres.push(t);
            periods.push(r / 1000.0);
            t += r / 1000.0;
        }
        centres.push(t);
        periods.push(rr_ms[rr_ms.len() - 1] / 1000.0);
        Self { centres, periods }
    }

    pub fn centres(&self) -> &[f64] {
        &self.centres
    }

    fn beat_value(&self, b: usize, t: f64) -> f64 {
        let u = (t - self.centres[b]) / self.periods[b];
        let z1 = u / SYSTOLIC_WIDTH;
        let z2 = (u - DICROTIC_DELAY) / SYSTOLIC_WIDTH;
        let mut v = 0.0;
        if z1.abs() < 9.0 {
            v += (-0.5 * z1 * z1).exp();
        }
        if z2.abs() < 9.0 {
            v += DICROTIC_AMPLITUDE * (-0.5 * z2 * z2).exp();
        }
        v
    }

    pub fn eval(&self, t: f64) -> f64 {
        if self.centres.is_empty() {
            return 0.0;
        }
        let idx = self.centres.partition_point(|&c| c <= t);
        self.eval_near(idx, t)
    }

    /// Sum over the beats that can reach `t`, given the count of centres at
    /// or before it.
    fn eval_near(&self, idx: usize, t: f64) -> f64 {
        let lo = idx.saturating_sub(2);
        let hi = (idx + 1).min(self.centres.len());
        (lo..hi).map(|b| self.beat_value(b, t)).sum()
    }

    /// `eval` on the grid `n / rate`, `n < count`, in one sweep.
    pub fn sample(&self, rate_hz: f64, count: usize) -> Vec<f64> {
        if self.centres.is_empty() {
            return vec![0.0; count];
        }
        let mut idx = 0;
        (0..count)
            .map(|n| {
                let t = n as f64 / rate_hz;
                while idx < self.centres.len() && self.centres[idx] <= t {
                    idx += 1;
                }
                self.eval_near(idx, t)
            })
            .collect()
    }

    /// Exact location of the maximum near beat `b`, by golden-section search.
    fn refine_peak(&self, b: usize) -> f64 {
        let half = 0.1 * self.periods[b];
        let (mut lo, mut hi) = (self.centres[b] - half, self.centres[b] + half);
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - ratio * (hi - lo);
        let mut x2 = lo + ratio * (hi - lo);
        let (mut f1, mut f2) = (self.eval(x1), self.eval(x2));
        while hi - lo > 1e-12 {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + ratio * (hi - lo);
                f2 = self.eval(x2);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - ratio * (hi - lo);
                f1 = self.eval(x1);
            }
        }
        0.5 * (lo + hi)
    }
}

/// Exact channel that produced a synthetic recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTruth {
    pub rate_hz: f64,
    pub amplitude_envelope: Vec<f64>,
    /// θc sampled at `rate_hz`, starting at t = 0.
    pub phase_response: Vec<f64>,
    pub static_offset_rad: f64,
    /// Systolic maxima of θc inside the record.
    pub peak_times_s: Vec<f64>,
    pub rr_truth_ms: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Quiet,
    Conversation,
    Entertainment,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Quiet => "quiet",
            Scenario::Conversation => "conversation",
            Scenario::Entertainment => "entertainment",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "quiet" => Ok(Scenario::Quiet),
            "conversation" => Ok(Scenario::Conversation),
            "entertainment" => Ok(Scenario::Entertainment),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }

    /// Upper edge and RMS (relative to the clean signal) of the ambient
    /// band-limited noise.
    fn ambient(self) -> Option<(f64, f64)> {
        match self {
            Scenario::Quiet => None,
            Scenario::Conversation => Some((4_000.0, 0.5)),
            Scenario::Entertainment => Some((8_000.0, 0.4)),
        }
    }
}

/// A narrowband interferer; `level` is its amplitude relative to the probe
/// gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interference {
    pub freq_hz: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// White-noise floor relative to the clean signal power. `None` means no
    /// noise of any kind.
    pub snr_db: Option<f64>,
    pub interference: Vec<Interference>,
    pub scenario: Scenario,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            snr_db: None,
            interference: Vec::new(),
            scenario: Scenario::Quiet,
        }
    }

    pub fn quiet(snr_db: f64) -> Self {
        Self {
            snr_db: Some(snr_db),
            interference: Vec::new(),
            scenario: Scenario::Quiet,
        }
    }

    /// Scenario preset: ambient noise below 8 kHz plus, for entertainment,
    /// a handful of musical tones.
    pub fn scenario(scenario: Scenario, snr_db: f64) -> Self {
        let interference = match scenario {
            Scenario::Entertainment => [220.0, 440.0, 660.0, 1_320.0]
                .into_iter()
                .map(|freq_hz| Interference {
                    freq_hz,
                    level: 0.1,
                })
                .collect(),
            _ => Vec::new(),
        };
        Self {
            snr_db: Some(snr_db),
            interference,
            scenario,
        }
    }
}

fn add_noise(
    samples: &mut [f64],
    cfg: &ProbeConfig,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<()> {
    let Some(snr_db) = noise.snr_db else {
        return Ok(());
    };
    let n = samples.len();
    if n == 0 {
        return Ok(());
    }
    let power = samples.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let clean_rms = power.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NOISE_SALT);

    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let white = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    for s in samples.iter_mut() {
        *s += white.sample(&mut rng);
    }

    if let Some((edge_hz, rel_rms)) = noise.scenario.ambient() {
        let raw: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let lp = Sos::butterworth(4, Band::Lowpass(edge_hz), cfg.sample_rate_hz)?;
        let mut band = lp.filter(&raw);
        if noise.scenario == Scenario::Conversation {
            // Syllabic envelope around 4 Hz.
            let phase = rng.random::<f64>() * 2.0 * PI;
            for (i, v) in band.iter_mut().enumerate() {
                let t = i as f64 / cfg.sample_rate_hz;
                *v *= 1.0 + 0.8 * (2.0 * PI * 4.0 * t + phase).sin();
            }
        }
        let band_rms = crate::dsp::rms(&band);
        if band_rms > 0.0 {
            let k = rel_rms * clean_rms / band_rms;
            for (s, v) in samples.iter_mut().zip(&band) {
                *s += k * v;
            }
        }
    }

    for tone in &noise.interference {
        let phase = rng.random::<f64>() * 2.0 * PI;
        let amp = tone.level * cfg.gain;
        let w = 2.0 * PI * tone.freq_hz / cfg.sample_rate_hz;
        for (i, s) in samples.iter_mut().enumerate() {
            *s += amp * (w * i as f64 + phase).sin();
        }
    }
    Ok(())
}

/// `amplitude(t) · cos(2π f t − phase(t) − static_offset)` plus noise.
///
/// `amplitude` is relative; the probe gain multiplies it.
pub fn synth_modulated(
    cfg: &ProbeConfig,
    phase: impl Fn(f64) -> f64,
    amplitude: impl Fn(f64) -> f64,
    static_offset: f64,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let carrier = cfg.carrier();
    let mut samples: Vec<f64> = (0..cfg.sample_count())
        .map(|n| {
            let t = n as f64 / cfg.sample_rate_hz;
            cfg.gain * amplitude(t) * (carrier.at(n) - phase(t) - static_offset).cos()
        })
        .collect();
    add_noise(&mut samples, cfg, noise, seed)?;
    Ok(samples)
}

/// Pulse-driven modulation: phase `depth·p(t)`, amplitude `1 + am·p(t)`.
/// Same waveform as [`synth_modulated`] with one shape evaluation per sample.
fn synth_pulse_modulated(
    cfg: &ProbeConfig,
    train: &PulseTrain,
    channel: &ChannelParams,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Vec<f64>> {
    let carrier = cfg.carrier();
    let shape = train.sample(cfg.sample_rate_hz, cfg.sample_count());
    let (depth, am) = (channel.modulation_depth_rad, channel.amplitude_mod_depth);
    let mut samples: Vec<f64> = shape
        .iter()
        .enumerate()
        .map(|(n, &p)| {
            let arg = carrier.at(n) - depth * p - channel.static_offset_rad;
            cfg.gain * (1.0 + am * p) * arg.cos()
        })
        .collect();
    add_noise(&mut samples, cfg, noise, seed)?;
    Ok(samples)
}

pub fn synth_recording(
    cfg: &ProbeConfig,
    model: &BeatModel,
    noise: &NoiseSpec,
) -> Result<(AudioRecording, ChannelTruth)> {
    synth_recording_with(cfg, model, &ChannelParams::default(), noise)
}

pub fn synth_recording_with(
    cfg: &ProbeConfig,
    model: &BeatModel,
    channel: &ChannelParams,
    noise: &NoiseSpec,
) -> Result<(AudioRecording, ChannelTruth)> {
    cfg.validate()?;
    let depth = channel.modulation_depth_rad;
    if !(0.0..PI).contains(&depth) {
        return Err(Error::Config(format!(
            "modulation depth {depth} rad must lie in [0, π)"
        )));
    }
    if !channel.static_offset_rad.is_finite() {
        return Err(Error::Config("static phase offset must be finite".into()));
    }
    if !(0.0..1.0).contains(&channel.amplitude_mod_depth) {
        return Err(Error::Config(format!(
            "amplitude modulation {} not in [0, 1)",
            channel.amplitude_mod_depth
        )));
    }

    let rr = synth_rr(model, cfg.duration_s)?;
    let train = PulseTrain::from_rr(&rr);

    let peaks: Vec<f64> = (0..train.centres().len())
        .map(|b| train.refine_peak(b))
        .filter(|&t| t >= 0.0 && t < cfg.duration_s)
        .collect();
    let max_phase = peaks
        .iter()
        .map(|&t| depth * train.eval(t))
        .fold(0.0, f64::max);
    if max_phase >= PI {
        return Err(Error::Config(format!(
            "phase excursion {max_phase} rad reaches π"
        )));
    }

    let am = channel.amplitude_mod_depth;
    let samples = synth_pulse_modulated(cfg, &train, channel, noise, model.seed)?;

    let truth_len = (cfg.duration_s * TRUTH_RATE_HZ).round() as usize;
    let (mut envelope, mut phase) = (Vec::with_capacity(truth_len), Vec::with_capacity(truth_len));
    for shape in train.sample(TRUTH_RATE_HZ, truth_len) {
        envelope.push(cfg.gain * (1.0 + am * shape));
        phase.push(depth * shape);
    }
    let rr_truth_ms = peaks.windows(2).map(|w| (w[1] - w[0]) * 1000.0).collect();

    let mut rec = AudioRecording::new(samples, cfg.sample_rate_hz);
    rec.label = model.rhythm.label();
    rec.scenario = noise.scenario.as_str().to_string();
    rec.carrier_hz = Some(cfg.carrier_frequency_hz);

    let truth = ChannelTruth {
        rate_hz: TRUTH_RATE_HZ,
        amplitude_envelope: envelope,
        phase_response: phase,
        static_offset_rad: channel.static_offset_rad,
        peak_times_s: peaks,
        rr_truth_ms,
    };
    Ok((rec, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_starts_at_gain_and_repeats_every_eight_samples() {
        let cfg = ProbeConfig {
            duration_s: 0.01,
            ..Default::default()
        };
        let rec = synth_probe(&cfg).unwrap();
        assert_eq!(rec.samples.len(), 480);
        assert_eq!(rec.samples[0], 1.0);
        for n in 0..rec.samples.len() - 8 {
            assert_eq!(rec.samples[n], rec.samples[n + 8]);
        }
        // 3/8 cycle per sample.
        let expect = (2.0 * PI * 3.0 / 8.0).cos();
        assert!((rec.samples[1] - expect).abs() < 1e-15);
    }

    #[test]
    fn probe_rejects_bad_config() {
        let bad = [
            ProbeConfig {
                carrier_frequency_hz: 24_000.0,
                ..Default::default()
            },
            ProbeConfig {
                gain: 0.0,
                ..Default::default()
            },
            ProbeConfig {
                duration_s: 0.0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(synth_probe(&cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn zero_spread_gives_constant_intervals() {
        let mut af = BeatModel::af(800.0, 1);
        af.rr_sd_ms = 0.0;
        assert_eq!(synth_rr(&af, 4.0).unwrap(), vec![800.0; 5]);
        let mut nsr = BeatModel::nsr(800.0, 1);
        nsr.rr_sd_ms = 0.0;
        nsr.respiratory_mod_depth = 0.0;
        assert_eq!(synth_rr(&nsr, 4.0).unwrap(), vec![800.0; 5]);
    }

    #[test]
    fn rr_model_range_checked() {
        assert!(matches!(
            synth_rr(&BeatModel::af(250.0, 0), 10.0),
            Err(Error::Model(_))
        ));
        assert!(matches!(
            synth_rr(&BeatModel::nsr(2100.0, 0), 10.0),
            Err(Error::Model(_))
        ));
        assert!(synth_rr(&BeatModel::nsr(800.0, 0), 0.0).is_err());
    }

    #[test]
    fn rr_covers_duration_and_stays_in_range() {
        for seed in 0..5 {
            for model in [BeatModel::af(450.0, seed), BeatModel::nsr(1200.0, seed)] {
                let rr = synth_rr(&model, 30.0).unwrap();
                let total: f64 = rr.iter().sum();
                assert!(total >= 30_000.0);
                assert!(total - rr.last().unwrap() < 30_000.0);
                assert!(rr.iter().all(|v| (MIN_RR_MS..=MAX_RR_MS).contains(v)));
            }
        }
    }

    #[test]
    fn degenerate_channel_reproduces_probe() {
        let cfg = ProbeConfig {
            duration_s: 2.0,
            ..Default::default()
        };
        let channel = ChannelParams {
            modulation_depth_rad: 0.0,
            static_offset_rad: 0.0,
            amplitude_mod_depth: 0.0,
        };
        let (rec, truth) = synth_recording_with(
            &cfg,
            &BeatModel::nsr(800.0, 3),
            &channel,
            &NoiseSpec::none(),
        )
        .unwrap();
        assert_eq!(rec.samples, synth_probe(&cfg).unwrap().samples);
        assert!(truth.phase_response.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn truth_intervals_match_peak_differences() {
        let cfg = ProbeConfig {
            duration_s: 10.0,
            ..Default::default()
        };
        let (_, truth) =
            synth_recording(&cfg, &BeatModel::af(700.0, 9), &NoiseSpec::none()).unwrap();
        assert_eq!(truth.rr_truth_ms.len() + 1, truth.peak_times_s.len());
        for (j, rr) in truth.rr_truth_ms.iter().enumerate() {
            let d = (truth.peak_times_s[j + 1] - truth.peak_times_s[j]) * 1000.0;
            assert!((rr - d).abs() < 1e-9);
        }
        assert_eq!(truth.phase_response.len(), 1500);
    }

    #[test]
    fn refined_peak_is_a_maximum() {
        let train = PulseTrain::from_rr(&[800.0, 650.0, 900.0]);
        for b in 0..3 {
            let t = train.refine_peak(b);
            assert!((t - train.centres()[b]).abs() < 0.005);
            let v = train.eval(t);
            assert!(v >= train.eval(t - 1e-4));
            assert!(v >= train.eval(t + 1e-4));
        }
    }

    #[test]
    fn modulation_depth_at_or_above_pi_rejected() {
        let cfg = ProbeConfig {
            duration_s: 1.0,
            ..Default::default()
        };
        let channel = ChannelParams {
            modulation_depth_rad: PI,
            ..Default::default()
        };
        let r = synth_recording_with(&cfg, &BeatModel::nsr(800.0, 0), &channel, &NoiseSpec::none());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn no_snr_means_no_noise_even_with_scenario() {
        let cfg = ProbeConfig {
            duration_s: 0.5,
            ..Default::default()
        };
        let mut noise = NoiseSpec::scenario(Scenario::Entertainment, 20.0);
        noise.snr_db = None;
        let a = synth_modulated(&cfg, |_| 0.0, |_| 1.0, 0.0, &noise, 1).unwrap();
        assert_eq!(a, synth_probe(&cfg).unwrap().samples);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let cfg = ProbeConfig {
            duration_s: 3.0,
            gain: 0.4,
            ..Default::default()
        };
        let noise = NoiseSpec::scenario(Scenario::Conversation, 25.0);
        let model = BeatModel::af(750.0, 77);
        let (a, ta) = synth_recording(&cfg, &model, &noise).unwrap();
        let (b, tb) = synth_recording(&cfg, &model, &noise).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }
}
