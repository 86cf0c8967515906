//! Systolic peak detection on the recovered pulse wave and RR derivation.
//!
//! Peaks come from a multiscale local-maxima count restricted to
//! physiological scales: a sample is marked at scale `k` when it exceeds both
//! samples `k` away. The scale with the most marks bounds the search; peaks are
//! the local maxima marked at every scale up to it, thinned to at least
//! 0.33 s apart.

use serde::{Deserialize, Serialize};

use crate::cpr::CprSeries;
use crate::dsp;
use crate::error::{Error, Result};
use crate::signal::{MAX_RR_MS, MIN_RR_MS};

pub const MIN_PEAK_SEPARATION_S: f64 = 0.33;
pub const MAX_BEAT_PERIOD_S: f64 = 2.0;
pub const MIN_ANALYSIS_S: f64 = 5.0;
pub const MIN_PEAKS: usize = 4;
pub const MIN_INTERVALS: usize = 3;

const DYNAMIC_RANGE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakList {
    pub indices: Vec<usize>,
    pub times_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrSeries {
    pub rr_ms: Vec<f64>,
    /// Intervals dropped for falling outside the physiological range.
    pub discarded: usize,
}

impl RrSeries {
    pub fn new(rr_ms: Vec<f64>) -> Self {
        Self { rr_ms, discarded: 0 }
    }

    pub fn len(&self) -> usize {
        self.rr_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rr_ms.is_empty()
    }
}

/// `(k_min, k_max)` in samples.
pub fn scale_bounds(rate_hz: f64) -> (usize, usize) {
    let k_min = (MIN_PEAK_SEPARATION_S * rate_hz).round() as usize;
    let k_max = (MAX_BEAT_PERIOD_S * rate_hz).round() as usize / 2;
    (k_min.max(1), k_max)
}

fn marked(x: &[f64], i: usize, k: usize) -> bool {
    x[i] > x[i - k] && x[i] > x[i + k]
}

/// Peak indices into `x`, before any range or count checks.
///
/// λ is the scale with the most marks among scales that still leave some
/// sample marked at every smaller scale; when the unrestricted maximum
/// yields any peak the two choices coincide. Local-maximum and separation
/// checks use the raw series.
pub fn ampd_candidates(raw: &[f64], rate_hz: f64) -> Vec<usize> {
    let n = raw.len();
    let (k_min, k_max) = scale_bounds(rate_hz);
    if n < 3 {
        return Vec::new();
    }
    let k_max = k_max.min((n - 1) / 2);
    if k_max < k_min {
        return Vec::new();
    }
    let x = dsp::linear_detrend(raw);

    let mut alive: Vec<bool> = (0..n).map(|i| i >= k_min && i + k_min < n).collect();
    let mut best = (0usize, k_min);
    for k in k_min..=k_max {
        let mut count = 0;
        let mut any_alive = false;
        for i in k..n - k {
            let m = marked(&x, i, k);
            count += usize::from(m);
            alive[i] &= m;
            any_alive |= alive[i];
        }
        alive[..k].fill(false);
        alive[n - k..].fill(false);
        if !any_alive {
            break;
        }
        if count > best.0 {
            best = (count, k);
        }
    }
    if best.0 == 0 {
        return Vec::new();
    }
    let lambda = best.1;

    let mut peaks: Vec<usize> = (lambda..n - lambda)
        .filter(|&i| raw[i] > raw[i - 1] && raw[i] >= raw[i + 1])
        .filter(|&i| (k_min..=lambda).all(|k| marked(&x, i, k)))
        .collect();
    enforce_separation(raw, &mut peaks, rate_hz);
    peaks
}

/// Greedy thinning: keep the higher peak, then the earlier one.
fn enforce_separation(x: &[f64], peaks: &mut Vec<usize>, rate_hz: f64) {
    let mut order = peaks.clone();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let min_gap = MIN_PEAK_SEPARATION_S * rate_hz - 1e-9;
    let mut kept: Vec<usize> = Vec::with_capacity(order.len());
    for p in order {
        if kept.iter().all(|&q| (p.abs_diff(q) as f64) >= min_gap) {
            kept.push(p);
        }
    }
    kept.sort_unstable();
    *peaks = kept;
}

/// Height of `x[p]` above the higher of the two bases found within `half`
/// samples on each side.
pub fn windowed_prominence(x: &[f64], p: usize, half: usize) -> f64 {
    let peak = x[p];
    let lo = p.saturating_sub(half);
    let hi = (p + half).min(x.len() - 1);
    let mut left = peak;
    for &v in x[lo..p].iter().rev() {
        if v > peak {
            break;
        }
        left = left.min(v);
    }
    let mut right = peak;
    for &v in &x[p + 1..=hi] {
        if v > peak {
            break;
        }
        right = right.min(v);
    }
    peak - left.max(right)
}

pub fn detect_peaks(cpr: &CprSeries) -> Result<PeakList> {
    let range = cpr.analysis_range();
    let span = range.len() as f64 / cpr.rate_hz;
    if span < MIN_ANALYSIS_S - 1e-9 {
        return Err(Error::InsufficientData(format!(
            "{span:.2} s of pulse wave after transient removal, need {MIN_ANALYSIS_S} s"
        )));
    }
    let window = &cpr.phi[range.clone()];
    let (lo, hi) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi - lo > DYNAMIC_RANGE_FLOOR) {
        return Err(Error::NoPeaks(format!(
            "dynamic range {:.3e} below floor",
            hi - lo
        )));
    }
    // Marking may look into the settling margins; only peaks inside the
    // analysis window are reported.
    let indices: Vec<usize> = ampd_candidates(&cpr.phi, cpr.rate_hz)
        .into_iter()
        .filter(|i| range.contains(i))
        .collect();
    if indices.is_empty() {
        return Err(Error::NoPeaks("no local maxima at physiological scales".into()));
    }
    if indices.len() < MIN_PEAKS {
        return Err(Error::InsufficientBeats {
            found: indices.len(),
            needed: MIN_PEAKS,
        });
    }
    let times_s = indices.iter().map(|&i| cpr.time_of(i)).collect();
    Ok(PeakList { indices, times_s })
}

/// Successive intervals in ms, minus those outside [300, 2000] ms; also
/// returns how many were dropped.
pub fn rr_intervals(times_s: &[f64]) -> (Vec<f64>, usize) {
    rr_intervals_within(times_s, MIN_RR_MS, MAX_RR_MS)
}

pub fn rr_intervals_within(times_s: &[f64], min_ms: f64, max_ms: f64) -> (Vec<f64>, usize) {
    let mut kept = Vec::with_capacity(times_s.len().saturating_sub(1));
    let mut dropped = 0;
    for w in times_s.windows(2) {
        let rr = (w[1] - w[0]) * 1000.0;
        if (min_ms..=max_ms).contains(&rr) {
            kept.push(rr);
        } else {
            dropped += 1;
        }
    }
    (kept, dropped)
}

pub fn to_rr(peaks: &PeakList) -> Result<RrSeries> {
    to_rr_within(peaks, MIN_RR_MS, MAX_RR_MS)
}

/// [`to_rr`] with custom interval bounds in ms.
pub fn to_rr_within(peaks: &PeakList, min_ms: f64, max_ms: f64) -> Result<RrSeries> {
    if peaks.times_s.len() < 2 {
        return Err(Error::InsufficientBeats {
            found: peaks.times_s.len(),
            needed: 2,
        });
    }
    let (rr_ms, discarded) = rr_intervals_within(&peaks.times_s, min_ms, max_ms);
    if rr_ms.len() < MIN_INTERVALS {
        return Err(Error::InsufficientBeats {
            found: rr_ms.len(),
            needed: MIN_INTERVALS,
        });
    }
    Ok(RrSeries { rr_ms, discarded })
}
