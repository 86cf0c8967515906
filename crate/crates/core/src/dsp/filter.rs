//! Butterworth design as cascaded second-order sections, plus causal and
//! zero-phase (forward-backward) application.
//!
//! Design follows the classic analog-prototype route: Butterworth poles on
//! the unit circle, frequency transformation in the s-plane on prewarped
//! edges, then the bilinear transform. Every section is normalized to unit
//! gain at the filter's reference frequency (DC, Nyquist, or band centre), so
//! the cascade gain is one there by construction.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

/// One biquad, `b0 + b1 z^-1 + b2 z^-2` over `1 + a1 z^-1 + a2 z^-2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        let num = self.b[0] + z_inv * self.b[1] + z2 * self.b[2];
        let den = 1.0 + z_inv * self.a[0] + z2 * self.a[1];
        num / den
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// State of the transposed direct form II after an infinitely long
    /// unit-step input.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * g;
        let z1 = self.b[1] - self.a[0] * g + z2;
        [z1, z2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Band {
    Lowpass(f64),
    Highpass(f64),
    /// Lower and upper -3 dB edges.
    Bandpass(f64, f64),
}

/// A cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    sections: Vec<Biquad>,
    sample_rate: f64,
}

impl Sos {
    /// Butterworth filter of prototype order `order`. A band-pass design has
    /// `2 * order` poles.
    pub fn butterworth(order: usize, band: Band, sample_rate: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("filter order must be positive".into()));
        }
        let nyquist = sample_rate / 2.0;
        let check = |f: f64| {
            if f > 0.0 && f < nyquist && f.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "filter edge {f} Hz outside (0, {nyquist}) Hz"
                )))
            }
        };
        let fs2 = 2.0 * sample_rate;
        let warp = |f: f64| fs2 * (PI * f / sample_rate).tan();
        let prototype: Vec<Complex64> = (0..order)
            .map(|k| {
                let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
                Complex64::from_polar(1.0, theta)
            })
            .collect();

        let bilinear = |s: Complex64| (fs2 + s) / (fs2 - s);

        let (poles, numerator, reference): (Vec<Complex64>, [f64; 3], f64) = match band {
            Band::Lowpass(fc) => {
                check(fc)?;
                let wc = warp(fc);
                let poles = prototype.iter().map(|&p| bilinear(p * wc)).collect();
                (poles, [1.0, 2.0, 1.0], 0.0)
            }
            Band::Highpass(fc) => {
                check(fc)?;
                let wc = warp(fc);
                let poles = prototype.iter().map(|&p| bilinear(wc / p)).collect();
                (poles, [1.0, -2.0, 1.0], PI)
            }
            Band::Bandpass(lo, hi) => {
                check(lo)?;
                check(hi)?;
                if lo >= hi {
                    return Err(Error::Config(format!(
                        "band-pass edges must be increasing, got {lo}..{hi}"
                    )));
                }
                let (w1, w2) = (warp(lo), warp(hi));
                let w0 = (w1 * w2).sqrt();
                let bw = w2 - w1;
                let mut poles = Vec::with_capacity(2 * order);
                for &p in &prototype {
                    let pb = p * bw;
                    let disc = (pb * pb - 4.0 * w0 * w0).sqrt();
                    poles.push(bilinear((pb + disc) / 2.0));
                    poles.push(bilinear((pb - disc) / 2.0));
                }
                let centre = 2.0 * (w0 / fs2).atan();
                (poles, [1.0, 0.0, -1.0], centre)
            }
        };

        let mut sections = Vec::new();
        let mut real_poles = Vec::new();
        for z in &poles {
            if z.im.abs() < 1e-14 {
                real_poles.push(z.re);
            } else if z.im > 0.0 {
                sections.push(Biquad {
                    b: numerator,
                    a: [-2.0 * z.re, z.norm_sqr()],
                });
            }
        }
        // Odd low/high-pass orders leave one real pole.
        for r in real_poles {
            let b = match band {
                Band::Lowpass(_) => [1.0, 1.0, 0.0],
                Band::Highpass(_) => [1.0, -1.0, 0.0],
                Band::Bandpass(..) => {
                    return Err(Error::Config("unexpected real band-pass pole".into()))
                }
            };
            sections.push(Biquad { b, a: [-r, 0.0] });
        }

        let z_inv = Complex64::from_polar(1.0, -reference);
        for s in &mut sections {
            let g = s.response(z_inv).norm();
            for b in &mut s.b {
                *b /= g;
            }
        }
        Ok(Self {
            sections,
            sample_rate,
        })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / self.sample_rate);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    /// Magnitude response in dB of the forward-backward (squared) filter.
    pub fn zero_phase_gain_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.response(freq_hz).norm_sqr().log10()
    }

    /// Largest pole radius.
    pub fn max_pole_radius(&self) -> f64 {
        self.sections
            .iter()
            .map(|s| {
                let (a1, a2) = (s.a[0], s.a[1]);
                let disc = a1 * a1 - 4.0 * a2;
                if disc < 0.0 {
                    a2.sqrt()
                } else {
                    let r = disc.sqrt();
                    ((-a1 + r) / 2.0).abs().max(((-a1 - r) / 2.0).abs())
                }
            })
            .fold(0.0, f64::max)
    }

    /// Samples until the slowest mode decays by 60 dB.
    pub fn settling_samples(&self) -> usize {
        let r = self.max_pole_radius();
        if r <= 0.0 {
            return 1;
        }
        ((1e-3f64).ln() / r.ln()).ceil() as usize
    }

    fn initial_state(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let st = s.step_state();
                let out = [st[0] * scale, st[1] * scale];
                scale *= s.dc_gain();
                out
            })
            .collect()
    }

    /// Causal filtering in place, starting from `state`.
    fn run(&self, data: &mut [f64], state: &mut [[f64; 2]]) {
        // Sections in pairs, sample-major, so the two recurrences overlap.
        let mut k = 0;
        while k + 1 < self.sections.len() {
            let (s1, s2) = (&self.sections[k], &self.sections[k + 1]);
            let [mut u1, mut u2] = state[k];
            let [mut v1, mut v2] = state[k + 1];
            for x in data.iter_mut() {
                let xin = *x;
                let y = s1.b[0] * xin + u1;
                u1 = s1.b[1] * xin - s1.a[0] * y + u2;
                u2 = s1.b[2] * xin - s1.a[1] * y;
                let w = s2.b[0] * y + v1;
                v1 = s2.b[1] * y - s2.a[0] * w + v2;
                v2 = s2.b[2] * y - s2.a[1] * w;
                *x = w;
            }
            state[k] = [u1, u2];
            state[k + 1] = [v1, v2];
            k += 2;
        }
        if let Some(s) = self.sections.get(k) {
            let [mut z1, mut z2] = state[k];
            for x in data.iter_mut() {
                let xin = *x;
                let y = s.b[0] * xin + z1;
                z1 = s.b[1] * xin - s.a[0] * y + z2;
                z2 = s.b[2] * xin - s.a[1] * y;
                *x = y;
            }
            state[k] = [z1, z2];
        }
    }

    /// Causal filtering from rest.
    pub fn filter(&self, input: &[f64]) -> Vec<f64> {
        let mut out = input.to_vec();
        let mut state = vec![[0.0; 2]; self.sections.len()];
        self.run(&mut out, &mut state);
        out
    }

    /// Default odd-extension length used by [`Sos::filtfilt`].
    pub fn default_padlen(&self) -> usize {
        let zero_b2 = self.sections.iter().filter(|s| s.b[2] == 0.0).count();
        let zero_a2 = self.sections.iter().filter(|s| s.a[1] == 0.0).count();
        3 * (2 * self.sections.len() + 1 - zero_b2.min(zero_a2))
    }

    /// Zero-phase filtering: odd extension at both ends, forward pass and
    /// backward pass each started from the steady state of the first sample.
    pub fn filtfilt(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.filtfilt_padded(input, self.default_padlen())
    }

    pub fn filtfilt_padded(&self, input: &[f64], padlen: usize) -> Result<Vec<f64>> {
        let (first, last) = match (input.first(), input.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => (0.0, 0.0),
        };
        self.filtfilt_anchored(input, padlen, first, last)
    }

    /// As [`Sos::filtfilt_padded`], but the odd extension pivots on the given
    /// edge levels instead of the end samples. Useful when the end samples
    /// carry a component the filter is meant to remove.
    pub fn filtfilt_anchored(
        &self,
        input: &[f64],
        padlen: usize,
        first: f64,
        last: f64,
    ) -> Result<Vec<f64>> {
        let n = input.len();
        if n <= padlen {
            return Err(Error::TooShort(format!(
                "{n} samples, zero-phase filtering needs more than {padlen}"
            )));
        }
        let mut ext = Vec::with_capacity(n + 2 * padlen);
        ext.extend((1..=padlen).rev().map(|i| 2.0 * first - input[i]));
        ext.extend_from_slice(input);
        ext.extend((1..=padlen).map(|i| 2.0 * last - input[n - 1 - i]));

        let zi = self.initial_state();
        let scaled = |x0: f64| -> Vec<[f64; 2]> {
            zi.iter().map(|z| [z[0] * x0, z[1] * x0]).collect()
        };

        let mut state = scaled(ext[0]);
        self.run(&mut ext, &mut state);
        ext.reverse();
        let mut state = scaled(ext[0]);
        self.run(&mut ext, &mut state);
        ext.reverse();
        ext.truncate(padlen + n);
        ext.drain(..padlen);
        Ok(ext)
    }
}
