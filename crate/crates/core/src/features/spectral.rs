use crate::dsp::{band_power, interpolate_uniform, welch_psd};
use crate::error::Result;

use super::time_domain::require;
use super::Partial;

pub const TACHOGRAM_RATE_HZ: f64 = 4.0;
pub const HF_BAND_HZ: (f64, f64) = (0.15, 0.40);
pub const TOTAL_BAND_HZ: (f64, f64) = (0.0033, 0.40);
/// Welch segment, 64 s of tachogram.
const SEGMENT_LEN: usize = 256;
const POWER_FLOOR: f64 = 1e-10;
const LOG_FLOOR: f64 = 1e-12;

/// HF, HFn, LnHF, TP from the RR tachogram resampled at 4 Hz against beat
/// time. Powers are in ms².
pub fn spectral_features(rr: &[f64]) -> Result<Partial<4>> {
    require(rr, 8)?;
    let mut t = Vec::with_capacity(rr.len());
    let mut acc = 0.0;
    for &r in rr {
        acc += r / 1000.0;
        t.push(acc);
    }
    let tachogram = interpolate_uniform(&t, rr, TACHOGRAM_RATE_HZ);
    let psd = welch_psd(&tachogram, TACHOGRAM_RATE_HZ, SEGMENT_LEN);
    let hf = band_power(&psd, HF_BAND_HZ.0, HF_BAND_HZ.1);
    let tp = band_power(&psd, TOTAL_BAND_HZ.0, TOTAL_BAND_HZ.1);

    let mut out = Partial::default();
    out.set(0, hf);
    out.set_opt(1, (tp > POWER_FLOOR).then(|| hf / tp));
    out.set(2, hf.max(LOG_FLOOR).ln());
    out.set(3, tp);
    Ok(out)
}
