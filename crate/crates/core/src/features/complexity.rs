use crate::dsp::std_pop;
use crate::error::Result;

use super::time_domain::{require, successive_differences};
use super::Partial;

pub const EMBEDDING_DIM: usize = 2;
pub const TOLERANCE_FACTOR: f64 = 0.2;
pub const MSE_SCALES: [usize; 3] = [1, 2, 3];
pub const SHANNON_BINS: usize = 10;
/// Entropy estimates need at least this many intervals.
pub const MIN_ENTROPY_LEN: usize = 10;
const DIFFERENCE_FLOOR: f64 = 1e-12;

fn chebyshev_within(x: &[f64], i: usize, j: usize, len: usize, r: f64) -> bool {
    (0..len).all(|k| (x[i + k] - x[j + k]).abs() <= r)
}

/// Sample entropy `-ln(A/B)`; `None` when either match count is zero.
pub fn sample_entropy(x: &[f64], m: usize, r: f64) -> Option<f64> {
    let n = x.len();
    if n < m + 2 {
        return None;
    }
    let templates = n - m;
    let (mut b, mut a) = (0u64, 0u64);
    for i in 0..templates {
        for j in i + 1..templates {
            if chebyshev_within(x, i, j, m, r) {
                b += 1;
                if (x[i + m] - x[j + m]).abs() <= r {
                    a += 1;
                }
            }
        }
    }
    (a > 0 && b > 0).then(|| -(a as f64 / b as f64).ln())
}

/// Approximate entropy `Φm − Φm+1`, self-matches included.
pub fn approximate_entropy(x: &[f64], m: usize, r: f64) -> Option<f64> {
    let n = x.len();
    if n < m + 2 {
        return None;
    }
    let phi = |len: usize| {
        let count = n - len + 1;
        (0..count)
            .map(|i| {
                let c = (0..count)
                    .filter(|&j| chebyshev_within(x, i, j, len, r))
                    .count();
                (c as f64 / count as f64).ln()
            })
            .sum::<f64>()
            / count as f64
    };
    Some(phi(m) - phi(m + 1))
}

/// Shannon entropy in bits over an equal-width histogram spanning the data.
pub fn shannon_entropy(x: &[f64], bins: usize) -> f64 {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![0usize; bins];
    let width = hi - lo;
    for &v in x {
        let b = if width > 0.0 {
            (((v - lo) / width * bins as f64) as usize).min(bins - 1)
        } else {
            0
        };
        counts[b] += 1;
    }
    let n = x.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Non-overlapping means over windows of `scale` samples.
pub fn coarse_grain(x: &[f64], scale: usize) -> Vec<f64> {
    x.chunks_exact(scale)
        .map(|c| c.iter().sum::<f64>() / scale as f64)
        .collect()
}

pub fn turning_point_ratio(x: &[f64]) -> f64 {
    let turns = x
        .windows(3)
        .filter(|w| (w[1] > w[0] && w[1] > w[2]) || (w[1] < w[0] && w[1] < w[2]))
        .count();
    turns as f64 / x.len() as f64
}

/// Difference, SampEn, ShanEn, ApEn, MSE, TPR.
pub fn complexity_features(rr: &[f64]) -> Result<Partial<6>> {
    require(rr, 3)?;
    let mut out = Partial::default();

    let d1 = successive_differences(rr);
    let d2 = successive_differences(&d1);
    let num: f64 = d1.iter().map(|v| v.abs()).sum();
    let den: f64 = d2.iter().map(|v| v.abs()).sum();
    out.set_opt(0, (den >= DIFFERENCE_FLOOR).then(|| num / den));
    out.set(5, turning_point_ratio(rr));

    if rr.len() < MIN_ENTROPY_LEN {
        for i in 1..5 {
            out.flag(i);
        }
        return Ok(out);
    }
    let r = TOLERANCE_FACTOR * std_pop(rr);
    out.set_opt(1, sample_entropy(rr, EMBEDDING_DIM, r));
    out.set(2, shannon_entropy(rr, SHANNON_BINS));
    out.set_opt(3, approximate_entropy(rr, EMBEDDING_DIM, r));

    let per_scale: Vec<Option<f64>> = MSE_SCALES
        .iter()
        .map(|&s| sample_entropy(&coarse_grain(rr, s), EMBEDDING_DIM, r))
        .collect();
    let mse = per_scale
        .iter()
        .copied()
        .sum::<Option<f64>>()
        .map(|total| total / MSE_SCALES.len() as f64);
    out.set_opt(4, mse);
    Ok(out)
}
