use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// One-sided power spectral density.
#[derive(Debug, Clone)]
pub struct Psd {
    pub freqs: Vec<f64>,
    pub density: Vec<f64>,
    pub resolution: f64,
}

fn fft_real(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// `|X[k]|` for `k = 0..=n/2`.
pub fn magnitude_spectrum(x: &[f64]) -> Vec<f64> {
    let spec = fft_real(x);
    spec[..x.len() / 2 + 1].iter().map(|c| c.norm()).collect()
}

/// Averaged periodogram with a periodic Hann window, 50 % overlap and
/// per-segment mean removal. Segments are `segment_len` samples, or the whole
/// input when it is shorter.
pub fn welch_psd(x: &[f64], rate: f64, segment_len: usize) -> Psd {
    let n = x.len();
    let seg = segment_len.min(n).max(1);
    let step = (seg / 2).max(1);
    let window: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos())
        .collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let bins = seg / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut count = 0usize;
    let mut start = 0;
    while start + seg <= n {
        let part = &x[start..start + seg];
        let m = part.iter().sum::<f64>() / seg as f64;
        let tapered: Vec<f64> = part
            .iter()
            .zip(&window)
            .map(|(v, w)| (v - m) * w)
            .collect();
        let spec = fft_real(&tapered);
        for (a, c) in acc.iter_mut().zip(&spec[..bins]) {
            *a += c.norm_sqr();
        }
        count += 1;
        start += step;
    }
    let scale = 1.0 / (rate * win_power * count.max(1) as f64);
    let density: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let one_sided = if k == 0 || (seg % 2 == 0 && k == seg / 2) {
                1.0
            } else {
                2.0
            };
            p * scale * one_sided
        })
        .collect();
    let resolution = rate / seg as f64;
    let freqs = (0..bins).map(|k| k as f64 * resolution).collect();
    Psd {
        freqs,
        density,
        resolution,
    }
}

/// Integrated power over bins whose centre lies in `[lo, hi]`.
pub fn band_power(psd: &Psd, lo: f64, hi: f64) -> f64 {
    psd.freqs
        .iter()
        .zip(&psd.density)
        .filter(|(f, _)| **f >= lo && **f <= hi)
        .map(|(_, p)| p * psd.resolution)
        .sum()
}
