use crate::dsp::{mean, std_pop};
use crate::error::{Error, Result};

use super::Partial;

pub(super) fn require(rr: &[f64], n: usize) -> Result<()> {
    if rr.len() < n {
        return Err(Error::InsufficientData(format!(
            "{} RR intervals, need at least {n}",
            rr.len()
        )));
    }
    if rr.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite RR interval".into()));
    }
    Ok(())
}

pub(super) fn successive_differences(rr: &[f64]) -> Vec<f64> {
    rr.windows(2).map(|w| w[1] - w[0]).collect()
}

fn median(rr: &[f64]) -> f64 {
    let mut s = rr.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Moment skewness `m3 / m2^1.5`, no bias correction.
fn skewness(rr: &[f64]) -> Option<f64> {
    let m = mean(rr);
    let n = rr.len() as f64;
    let m2 = rr.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = rr.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    (m2 > 0.0).then(|| m3 / m2.powf(1.5))
}

/// minHR, meanHR, medianHR, skRR, SDRR, CVRR, pNN50, RMSSD, SDRMSSD,
/// SDratio, SDSD, CVSD. The "HR" names carry RR values in ms.
pub fn rr_features(rr: &[f64]) -> Result<Partial<12>> {
    require(rr, 3)?;
    let mut out = Partial::default();
    let diffs = successive_differences(rr);

    let min = rr.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_rr = mean(rr);
    let sdrr = std_pop(rr);
    let rmssd = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt();
    let pnn50 = diffs.iter().filter(|d| d.abs() > 50.0).count() as f64 / diffs.len() as f64;

    out.set(0, min);
    out.set(1, mean_rr);
    out.set(2, median(rr));
    out.set_opt(3, skewness(rr));
    out.set(4, sdrr);
    out.set(5, sdrr / mean_rr);
    out.set(6, pnn50);
    out.set(7, rmssd);
    out.set_opt(8, (rmssd > 0.0).then(|| sdrr / rmssd));
    let radicand = 2.0 * sdrr * sdrr - 0.5 * rmssd * rmssd;
    out.set_opt(
        9,
        (radicand > 0.0).then(|| (0.5 * rmssd * rmssd).sqrt() / radicand.sqrt()),
    );
    out.set(10, std_pop(&diffs));
    out.set(11, rmssd / mean_rr);
    Ok(out)
}

/// SD1, SD2, SD1/SD2, ellipse area S.
pub fn poincare_features(rr: &[f64]) -> Result<Partial<4>> {
    require(rr, 3)?;
    let mut out = Partial::default();
    let sdrr = std_pop(rr);
    let sdsd = std_pop(&successive_differences(rr));
    let sd1 = sdsd / 2f64.sqrt();
    let radicand = 2.0 * sdrr * sdrr - 0.5 * sdsd * sdsd;
    let sd2 = if radicand < 0.0 {
        out.flag(1);
        0.0
    } else {
        out.set(1, radicand.sqrt());
        radicand.sqrt()
    };
    out.set(0, sd1);
    out.set_opt(2, (sd2 > 0.0).then(|| sd1 / sd2));
    out.set(3, std::f64::consts::PI * sd1 * sd2);
    Ok(out)
}
