//! Pulse-wave recovery: band-pass around the carrier, I/Q demodulation,
//! low-pass and decimation to 150 Hz, then phase estimation and conditioning.

use std::f64::consts::PI;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::beats;
use crate::dsp::{self, Band, CarrierPhase, Sos};
use crate::error::{Error, Result};
use crate::recording::AudioRecording;

pub const CPR_RATE_HZ: f64 = 150.0;

/// Zero-phase gain allowed at the passband edges.
const PASSBAND_EDGE_DB: f64 = -1.0;
const BANDPASS_ORDER: usize = 4;
const LOWPASS_ORDER: usize = 4;
const DETREND_ORDER: usize = 4;
/// Relative prominence lead `-phi` needs before the series is negated;
/// near-symmetric waveforms keep the demodulated sign.
const ORIENTATION_MARGIN: f64 = 0.01;
/// `|I| + |Q|` below this counts as carrier absent.
const MAGNITUDE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CprConfig {
    pub carrier_hz: f64,
    pub bandpass_halfwidth_hz: f64,
    pub lowpass_hz: f64,
    pub detrend_hz: f64,
    pub transient_skip_s: f64,
}

impl Default for CprConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 18_000.0,
            bandpass_halfwidth_hz: 50.0,
            lowpass_hz: 20.0,
            detrend_hz: 0.4,
            transient_skip_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqSeries {
    pub i: Vec<f64>,
    pub q: Vec<f64>,
    pub rate_hz: f64,
}

/// Estimated channel phase response, the recovered pulse wave.
#[derive(Debug, Clone, PartialEq)]
pub struct CprSeries {
    pub phi: Vec<f64>,
    pub rate_hz: f64,
    /// Settling margin excluded from analysis at each end of the series.
    pub transient_skip_s: f64,
}

impl CprSeries {
    pub fn new(phi: Vec<f64>, rate_hz: f64, transient_skip_s: f64) -> Self {
        Self {
            phi,
            rate_hz,
            transient_skip_s,
        }
    }

    /// Sample range used for analysis.
    pub fn analysis_range(&self) -> Range<usize> {
        let skip = (self.transient_skip_s * self.rate_hz).round() as usize;
        let n = self.phi.len();
        if 2 * skip >= n {
            return 0..0;
        }
        skip..n - skip
    }

    pub fn time_of(&self, index: usize) -> f64 {
        index as f64 / self.rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.phi.len() as f64 / self.rate_hz
    }
}

/// Butterworth band-pass whose zero-phase response is within 1 dB over
/// `carrier ± halfwidth`.
pub fn bandpass_design(carrier_hz: f64, halfwidth_hz: f64, rate_hz: f64) -> Result<Sos> {
    let (lo, hi) = (carrier_hz - halfwidth_hz, carrier_hz + halfwidth_hz);
    if !(halfwidth_hz > 0.0 && lo > 0.0 && hi < rate_hz / 2.0) {
        return Err(Error::Config(format!(
            "passband {lo}..{hi} Hz outside (0, {}) Hz",
            rate_hz / 2.0
        )));
    }
    // Prototype frequency at which the squared response sits at the edge gain.
    let order = BANDPASS_ORDER as f64;
    let omega_edge = (10f64.powf(-PASSBAND_EDGE_DB / 20.0) - 1.0).powf(1.0 / (2.0 * order));
    let fs2 = 2.0 * rate_hz;
    let warp = |f: f64| fs2 * (PI * f / rate_hz).tan();
    let unwarp = |w: f64| rate_hz / PI * (w / fs2).atan();
    let (w1, w2) = (warp(lo), warp(hi));
    let centre_sq = w1 * w2;
    let bw = (w2 - w1) / omega_edge;
    let c1 = (-bw + (bw * bw + 4.0 * centre_sq).sqrt()) / 2.0;
    let c2 = c1 + bw;
    Sos::butterworth(BANDPASS_ORDER, Band::Bandpass(unwarp(c1), unwarp(c2)), rate_hz)
}

fn check_carrier(rec: &AudioRecording, carrier_hz: f64) -> Result<()> {
    if let Some(meta) = rec.carrier_hz {
        if (meta - carrier_hz).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "recording carrier {meta} Hz does not match requested {carrier_hz} Hz"
            )));
        }
    }
    if !(carrier_hz > 0.0 && carrier_hz < rec.sample_rate_hz / 2.0) {
        return Err(Error::Config(format!(
            "carrier {carrier_hz} Hz outside (0, {}) Hz",
            rec.sample_rate_hz / 2.0
        )));
    }
    Ok(())
}

pub fn bandpass(rec: &AudioRecording, carrier_hz: f64) -> Result<AudioRecording> {
    bandpass_with(rec, carrier_hz, CprConfig::default().bandpass_halfwidth_hz)
}

pub fn bandpass_with(
    rec: &AudioRecording,
    carrier_hz: f64,
    halfwidth_hz: f64,
) -> Result<AudioRecording> {
    check_carrier(rec, carrier_hz)?;
    let sos = bandpass_design(carrier_hz, halfwidth_hz, rec.sample_rate_hz)?;
    let settling = sos.settling_samples();
    if rec.samples.len() < 6 * settling {
        return Err(Error::TooShort(format!(
            "{} samples, band-pass needs at least {} (6 x settling)",
            rec.samples.len(),
            6 * settling
        )));
    }
    let Some(period) = CarrierPhase::new(carrier_hz, rec.sample_rate_hz).period() else {
        return Ok(rec.with_samples(sos.filtfilt(&rec.samples)?));
    };
    // Extend by whole carrier periods so both passes settle on a continuation
    // of the carrier rather than on an odd reflection of it.
    let pad = (2 * settling).div_ceil(period) * period;
    let x = &rec.samples;
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend(x[..period].iter().cycle().take(pad));
    ext.extend_from_slice(x);
    ext.extend(x[n - period..].iter().cycle().take(pad));
    let y = sos.filtfilt(&ext)?;
    Ok(rec.with_samples(y[pad..pad + n].to_vec()))
}

fn decimation_factor(rate_hz: f64) -> Result<usize> {
    let ratio = rate_hz / CPR_RATE_HZ;
    let factor = ratio.round();
    if factor < 1.0 || (ratio - factor).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "input rate {rate_hz} Hz is not an integer multiple of {CPR_RATE_HZ} Hz"
        )));
    }
    Ok(factor as usize)
}

pub fn iq_demodulate(rec: &AudioRecording, carrier_hz: f64) -> Result<IqSeries> {
    iq_demodulate_with(rec, carrier_hz, CprConfig::default().lowpass_hz)
}

pub fn iq_demodulate_with(
    rec: &AudioRecording,
    carrier_hz: f64,
    lowpass_hz: f64,
) -> Result<IqSeries> {
    check_carrier(rec, carrier_hz)?;
    let factor = decimation_factor(rec.sample_rate_hz)?;
    let rate = rec.sample_rate_hz;
    let n = rec.samples.len();
    if n < 2 {
        return Err(Error::TooShort(format!("{n} samples to demodulate")));
    }
    let carrier = CarrierPhase::new(carrier_hz, rate);
    let mut i_mix = Vec::with_capacity(n);
    let mut q_mix = Vec::with_capacity(n);
    if let Some(period) = carrier.period() {
        let refs: Vec<(f64, f64)> = (0..period).map(|k| carrier.at(k).sin_cos()).collect();
        for (x, &(s, c)) in rec.samples.iter().zip(refs.iter().cycle()) {
            i_mix.push(x * c);
            q_mix.push(x * s);
        }
    } else {
        for (k, &x) in rec.samples.iter().enumerate() {
            let (s, c) = carrier.at(k).sin_cos();
            i_mix.push(x * c);
            q_mix.push(x * s);
        }
    }
    let lp = Sos::butterworth(LOWPASS_ORDER, Band::Lowpass(lowpass_hz), rate)?;
    let span = pivot_span(carrier_hz, rate);
    let padlen = lp.settling_samples().max(lp.default_padlen()).min(n - 1);
    let smooth = |mix: &[f64]| {
        let (head, tail) = edge_levels(mix, span);
        lp.filtfilt_anchored(mix, padlen, head, tail)
    };
    let i_full = smooth(&i_mix)?;
    let q_full = smooth(&q_mix)?;
    Ok(IqSeries {
        i: i_full.iter().step_by(factor).copied().collect(),
        q: q_full.iter().step_by(factor).copied().collect(),
        rate_hz: rate / factor as f64,
    })
}

/// Number of samples spanning a whole number of periods of the 2f mixing
/// product, or about 1 ms when no short exact span exists.
fn pivot_span(carrier_hz: f64, rate_hz: f64) -> usize {
    let fallback = (rate_hz / 1000.0).round().max(1.0) as usize;
    (1..=fallback)
        .find(|&m| {
            let periods = 2.0 * carrier_hz * m as f64 / rate_hz;
            (periods - periods.round()).abs() < 1e-9
        })
        .unwrap_or(fallback)
}

/// Baseband level at each end of a mixer output, averaging the 2f term away.
fn edge_levels(mix: &[f64], span: usize) -> (f64, f64) {
    let span = span.clamp(1, mix.len().max(1));
    let avg = |s: &[f64]| s.iter().sum::<f64>() / s.len().max(1) as f64;
    (avg(&mix[..span]), avg(&mix[mix.len() - span..]))
}

/// Zero-phase high-pass that removes the static offset and slow drift.
pub fn detrend_phase(phi: &[f64], rate_hz: f64, cutoff_hz: f64) -> Result<Vec<f64>> {
    let hp = Sos::butterworth(DETREND_ORDER, Band::Highpass(cutoff_hz), rate_hz)?;
    if phi.len() < 2 {
        return hp.filtfilt(phi);
    }
    let padlen = hp.settling_samples().max(hp.default_padlen()).min(phi.len() - 1);
    hp.filtfilt_padded(phi, padlen)
}

pub fn estimate_cpr(iq: &IqSeries) -> Result<CprSeries> {
    let cfg = CprConfig::default();
    estimate_cpr_with(iq, cfg.detrend_hz, cfg.transient_skip_s)
}

pub fn estimate_cpr_with(iq: &IqSeries, detrend_hz: f64, transient_skip_s: f64) -> Result<CprSeries> {
    if iq.i.is_empty() || iq.i.len() != iq.q.len() {
        return Err(Error::InvalidInput(format!(
            "I/Q lengths {} and {}",
            iq.i.len(),
            iq.q.len()
        )));
    }
    let n = iq.i.len();
    let strong = iq
        .i
        .iter()
        .zip(&iq.q)
        .filter(|(i, q)| i.abs() + q.abs() > MAGNITUDE_FLOOR)
        .count();
    if (strong as f64) < 0.99 * n as f64 {
        return Err(Error::NoCarrier(format!(
            "only {strong} of {n} samples above the magnitude floor"
        )));
    }
    let raw: Vec<f64> = iq.i.iter().zip(&iq.q).map(|(i, q)| q.atan2(*i)).collect();
    let unwrapped = dsp::unwrap_phase(&raw);
    let phi = detrend_phase(&unwrapped, iq.rate_hz, detrend_hz)?;
    let mut cpr = CprSeries::new(phi, iq.rate_hz, transient_skip_s);
    if should_flip(&cpr) {
        cpr.phi.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(cpr)
}

/// True when the beat-level peaks of `-phi` are more prominent than those of
/// `phi`. Prominence is measured within one minimum beat spacing either side
/// so that sharp systolic maxima beat broad troughs.
fn should_flip(cpr: &CprSeries) -> bool {
    let range = cpr.analysis_range();
    if range.len() < 3 {
        return false;
    }
    let window = &cpr.phi[range];
    let half = (beats::MIN_PEAK_SEPARATION_S * cpr.rate_hz).round() as usize;
    let score = |x: &[f64]| -> Option<f64> {
        let peaks = beats::ampd_candidates(x, cpr.rate_hz);
        let mut prom: Vec<f64> = peaks
            .iter()
            .map(|&p| beats::windowed_prominence(x, p, half))
            .collect();
        if prom.is_empty() {
            return None;
        }
        prom.sort_by(f64::total_cmp);
        let m = prom.len();
        Some(if m % 2 == 1 {
            prom[m / 2]
        } else {
            0.5 * (prom[m / 2 - 1] + prom[m / 2])
        })
    };
    let negated: Vec<f64> = window.iter().map(|v| -v).collect();
    match (score(window), score(&negated)) {
        (Some(pos), Some(neg)) => neg > pos * (1.0 + ORIENTATION_MARGIN),
        (None, Some(_)) => true,
        _ => false,
    }
}

/// Full chain: band-pass, demodulate, estimate.
pub fn extract_cpr(rec: &AudioRecording, cfg: &CprConfig) -> Result<CprSeries> {
    let filtered = bandpass_with(rec, cfg.carrier_hz, cfg.bandpass_halfwidth_hz)?;
    let iq = iq_demodulate_with(&filtered, cfg.carrier_hz, cfg.lowpass_hz)?;
    estimate_cpr_with(&iq, cfg.detrend_hz, cfg.transient_skip_s)
}
