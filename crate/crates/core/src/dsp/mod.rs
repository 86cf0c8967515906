//! Signal-processing building blocks shared by the pipeline stages.

mod filter;
mod spectrum;

pub use filter::{Band, Biquad, Sos};
pub use spectrum::{band_power, magnitude_spectrum, welch_psd, Psd};

use std::f64::consts::PI;

/// Removes ±π jumps between consecutive samples.
pub fn unwrap_phase(phase: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phase.len());
    let mut offset = 0.0;
    let mut prev = match phase.first() {
        Some(&p) => p,
        None => return out,
    };
    out.push(prev);
    for &p in &phase[1..] {
        let d = p - prev;
        if d.abs() >= PI {
            let mut dd = (d + PI).rem_euclid(2.0 * PI) - PI;
            if dd == -PI && d > 0.0 {
                dd = PI;
            }
            offset += dd - d;
        }
        out.push(p + offset);
        prev = p;
    }
    out
}

/// Least-squares line removal over the sample index.
pub fn linear_detrend(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let nf = n as f64;
    let t_mean = (nf - 1.0) / 2.0;
    let x_mean = x.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        let dt = i as f64 - t_mean;
        sxy += dt * (v - x_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    x.iter()
        .enumerate()
        .map(|(i, &v)| v - x_mean - slope * (i as f64 - t_mean))
        .collect()
}

/// Piecewise-linear resampling of `(t, y)` onto `start + k / rate` for all grid
/// points inside `[t[0], t[last]]`. `t` must be strictly increasing.
pub fn interpolate_uniform(t: &[f64], y: &[f64], rate: f64) -> Vec<f64> {
    debug_assert_eq!(t.len(), y.len());
    if t.len() < 2 {
        return y.to_vec();
    }
    let start = t[0];
    let end = t[t.len() - 1];
    let count = ((end - start) * rate).floor() as usize + 1;
    let mut out = Vec::with_capacity(count);
    let mut j = 0;
    for k in 0..count {
        let tk = start + k as f64 / rate;
        while j + 2 < t.len() && t[j + 1] < tk {
            j += 1;
        }
        let frac = ((tk - t[j]) / (t[j + 1] - t[j])).clamp(0.0, 1.0);
        out.push(y[j] + frac * (y[j + 1] - y[j]));
    }
    out
}

/// Longest carrier period, in samples, worth tabulating.
const MAX_TABLE_PERIOD: usize = 4096;

/// Phase `2π·frac(f·n/rate)` of a sampled carrier.
///
/// When `f/rate` is a ratio with a short period the phases are tabulated once
/// and reused, which also makes every period bit-identical.
#[derive(Debug, Clone)]
pub struct CarrierPhase {
    freq_hz: f64,
    rate_hz: f64,
    table: Option<Vec<f64>>,
}

impl CarrierPhase {
    pub fn new(freq_hz: f64, rate_hz: f64) -> Self {
        let direct = |n: usize| {
            let cycles = freq_hz * n as f64 / rate_hz;
            2.0 * PI * (cycles - cycles.floor())
        };
        let period = (1..=MAX_TABLE_PERIOD).find(|&p| {
            let cycles = freq_hz * p as f64 / rate_hz;
            (cycles - cycles.round()).abs() < 1e-9
        });
        Self {
            freq_hz,
            rate_hz,
            table: period.map(|p| (0..p).map(direct).collect()),
        }
    }

    pub fn period(&self) -> Option<usize> {
        self.table.as_ref().map(Vec::len)
    }

    pub fn at(&self, n: usize) -> f64 {
        match &self.table {
            Some(t) => t[n % t.len()],
            None => {
                let cycles = self.freq_hz * n as f64 / self.rate_hz;
                2.0 * PI * (cycles - cycles.floor())
            }
        }
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub fn std_pop(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}
