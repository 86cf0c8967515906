//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rayon::prelude::*;

use wristsonar::beats::{detect_peaks, RrSeries};
use wristsonar::classifier::Sample;
use wristsonar::cpr::{detrend_phase, extract_cpr, CprConfig};
use wristsonar::eval::{loso_eval, metrics, noise_eval, pr_curve, ConfusionMatrix, LinearTrainer};
use wristsonar::features::{compute_features, feature_index, FEATURE_NAMES};
use wristsonar::pipeline::{analyze, cohort_plan, CohortSpec, PipelineConfig};
use wristsonar::signal::{
    synth_recording_with, BeatModel, ChannelParams, NoiseSpec, ProbeConfig, Scenario,
};
use wristsonar::Label;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    // Criteria 5 and 6 share the quiet cohort, so one runner reports both.
    let criteria: Vec<(&[&str], fn() -> Vec<Outcome>)> = vec![
        (&["1 phase recovery"], || vec![phase_recovery()]),
        (&["2 beat recovery"], || vec![beat_recovery()]),
        (&["3 feature oracle"], || vec![feature_oracle()]),
        (&["4 metric formulas"], || vec![metric_formulas()]),
        (
            &["5 end-to-end classification", "6 noise-mode protocol"],
            classification,
        ),
        (&["7 determinism"], || vec![determinism()]),
    ];
    let mut failed = 0;
    for (names, run) in criteria {
        let t = Instant::now();
        let results = match std::panic::catch_unwind(run) {
            Ok(o) => o,
            Err(_) => names.iter().map(|_| outcome(false, "panicked".into())).collect(),
        };
        let secs = t.elapsed().as_secs_f64();
        for (name, result) in names.iter().zip(&results) {
            for line in result.detail.lines() {
                println!("{line}");
            }
            let verdict = if result.pass { "PASS" } else { "FAIL" };
            println!("{verdict} criterion {name} ({secs:.1} s)");
            if !result.pass {
                failed += 1;
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn seeded_record(
    i: u64,
    noise: NoiseSpec,
) -> (wristsonar::AudioRecording, wristsonar::signal::ChannelTruth) {
    let model = if i % 2 == 0 {
        BeatModel::nsr(700.0 + 25.0 * i as f64, 1000 + i)
    } else {
        BeatModel::af(650.0 + 20.0 * i as f64, 1000 + i)
    };
    let channel = ChannelParams {
        static_offset_rad: -PI + 0.6 * i as f64,
        ..ChannelParams::default()
    };
    let noise = NoiseSpec {
        scenario: Scenario::Quiet,
        ..noise
    };
    synth_recording_with(&ProbeConfig::default(), &model, &channel, &noise).unwrap()
}

/// RMS of recovered minus injected phase, both passed through the same
/// detrending high-pass, over the analysis window.
fn phase_rms(snr_db: Option<f64>, i: u64) -> f64 {
    let noise = match snr_db {
        Some(s) => NoiseSpec::quiet(s),
        None => NoiseSpec::none(),
    };
    let (rec, truth) = seeded_record(i, noise);
    let cpr = extract_cpr(&rec, &CprConfig::default()).unwrap();
    let want = detrend_phase(&truth.phase_response, truth.rate_hz, 0.4).unwrap();
    let r = cpr.analysis_range();
    let ss: f64 = r.clone().map(|k| (cpr.phi[k] - want[k]).powi(2)).sum();
    (ss / r.len() as f64).sqrt()
}

fn phase_recovery() -> Outcome {
    let t = Instant::now();
    let clean: Vec<f64> = (0..10).map(|i| phase_rms(None, i)).collect();
    let noisy: Vec<f64> = (0..10).map(|i| phase_rms(Some(20.0), i)).collect();
    let secs = t.elapsed().as_secs_f64();
    let worst = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let (wc, wn) = (worst(&clean), worst(&noisy));
    outcome(
        wc <= 1e-3 && wn <= 0.05 && secs < 30.0,
        format!(
            "  worst RMS noise-free {wc:.3e} rad (<= 1e-3), 20 dB {wn:.3e} rad (<= 0.05), {secs:.1} s (< 30)"
        ),
    )
}

fn beat_recovery() -> Outcome {
    const TOL_S: f64 = 0.040;
    let (mut beats, mut hit, mut intervals, mut rr_hit) = (0, 0, 0, 0);
    for i in 0..20 {
        let (rec, truth) = seeded_record(i, NoiseSpec::none());
        let cpr = extract_cpr(&rec, &CprConfig::default()).unwrap();
        let peaks = detect_peaks(&cpr).unwrap();
        let r = cpr.analysis_range();
        let (lo, hi) = (cpr.time_of(r.start), cpr.time_of(r.end - 1));
        let nearest = |t: f64| -> Option<usize> {
            peaks
                .times_s
                .iter()
                .enumerate()
                .filter(|(_, &p)| (p - t).abs() <= TOL_S)
                .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
                .map(|(j, _)| j)
        };
        let inside: Vec<f64> = truth
            .peak_times_s
            .iter()
            .copied()
            .filter(|&t| t >= lo && t <= hi)
            .collect();
        let matched: Vec<Option<usize>> = inside.iter().map(|&t| nearest(t)).collect();
        beats += inside.len();
        hit += matched.iter().flatten().count();
        for w in 0..inside.len().saturating_sub(1) {
            intervals += 1;
            let truth_rr = (inside[w + 1] - inside[w]) * 1000.0;
            if let (Some(a), Some(b)) = (matched[w], matched[w + 1]) {
                let got = (peaks.times_s[b] - peaks.times_s[a]) * 1000.0;
                if b == a + 1 && (got - truth_rr).abs() <= TOL_S * 1000.0 {
                    rr_hit += 1;
                }
            }
        }
    }
    let beat_frac = hit as f64 / beats as f64;
    let rr_frac = rr_hit as f64 / intervals as f64;
    outcome(
        beat_frac >= 0.95 && rr_frac >= 0.90,
        format!(
            "  beats within 40 ms: {hit}/{beats} = {beat_frac:.4} (>= 0.95); RR within 40 ms: {rr_hit}/{intervals} = {rr_frac:.4} (>= 0.90)"
        ),
    )
}

// ---------------------------------------------------------------------------
// Independent feature oracle: plain loops, no library helpers.

fn o_mean(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in x {
        s += v;
    }
    s / x.len() as f64
}

fn o_sd(x: &[f64]) -> f64 {
    let m = o_mean(x);
    let mut s = 0.0;
    for v in x {
        s += (v - m) * (v - m);
    }
    (s / x.len() as f64).sqrt()
}

fn o_diff(x: &[f64]) -> Vec<f64> {
    let mut d = Vec::new();
    for i in 1..x.len() {
        d.push(x[i] - x[i - 1]);
    }
    d
}

fn o_sampen(x: &[f64], m: usize, r: f64) -> Option<f64> {
    let n = x.len();
    let close = |i: usize, j: usize, len: usize| {
        let mut worst: f64 = 0.0;
        for k in 0..len {
            worst = worst.max((x[i + k] - x[j + k]).abs());
        }
        worst <= r
    };
    let (mut b, mut a) = (0.0f64, 0.0f64);
    for i in 0..n - m {
        for j in 0..n - m {
            if i != j {
                if close(i, j, m) {
                    b += 1.0;
                }
                if close(i, j, m + 1) {
                    a += 1.0;
                }
            }
        }
    }
    if a == 0.0 || b == 0.0 {
        None
    } else {
        Some((b / a).ln())
    }
}

fn o_apen(x: &[f64], m: usize, r: f64) -> f64 {
    let n = x.len();
    let phi = |len: usize| {
        let count = n - len + 1;
        let mut total = 0.0;
        for i in 0..count {
            let mut c = 0.0;
            for j in 0..count {
                let mut ok = true;
                for k in 0..len {
                    if (x[i + k] - x[j + k]).abs() > r {
                        ok = false;
                    }
                }
                if ok {
                    c += 1.0;
                }
            }
            total += (c / count as f64).ln();
        }
        total / count as f64
    };
    phi(m) - phi(m + 1)
}

fn o_shannon(x: &[f64]) -> f64 {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = [0.0; 10];
    for &v in x {
        let mut b = if hi > lo {
            ((v - lo) / (hi - lo) * 10.0).floor() as usize
        } else {
            0
        };
        if b > 9 {
            b = 9;
        }
        counts[b] += 1.0;
    }
    let mut h = 0.0;
    for c in counts {
        if c > 0.0 {
            let p = c / x.len() as f64;
            h -= p * p.ln() / 2f64.ln();
        }
    }
    h
}

/// Tachogram band powers by direct DFT of the Hann-windowed, mean-removed
/// 4 Hz resampling, averaged over half-overlapping 256-sample segments.
fn o_band_powers(rr: &[f64]) -> (f64, f64) {
    let mut t = Vec::new();
    let mut acc = 0.0;
    for &r in rr {
        acc += r / 1000.0;
        t.push(acc);
    }
    let fs = 4.0;
    let count = ((t[t.len() - 1] - t[0]) * fs).floor() as usize + 1;
    let mut y = Vec::new();
    for k in 0..count {
        let tk = t[0] + k as f64 / fs;
        let mut j = 0;
        while j + 2 < t.len() && t[j + 1] < tk {
            j += 1;
        }
        let mut f = (tk - t[j]) / (t[j + 1] - t[j]);
        f = f.clamp(0.0, 1.0);
        y.push(rr[j] + f * (rr[j + 1] - rr[j]));
    }
    let seg = y.len().min(256);
    let mut psd = vec![0.0; seg / 2 + 1];
    let mut segments = 0.0;
    let mut start = 0;
    let w: Vec<f64> = (0..seg)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / seg as f64).cos()))
        .collect();
    let wp: f64 = w.iter().map(|v| v * v).sum();
    while start + seg <= y.len() {
        let part = &y[start..start + seg];
        let m = o_mean(part);
        for (k, p) in psd.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in part.iter().enumerate() {
                let a = -2.0 * PI * (k * i) as f64 / seg as f64;
                re += (v - m) * w[i] * a.cos();
                im += (v - m) * w[i] * a.sin();
            }
            *p += re * re + im * im;
        }
        segments += 1.0;
        start += (seg / 2).max(1);
    }
    let df = fs / seg as f64;
    let (mut hf, mut tp) = (0.0, 0.0);
    for (k, p) in psd.iter().enumerate() {
        let edge = k == 0 || (seg % 2 == 0 && k == seg / 2);
        let d = p / (fs * wp * segments) * if edge { 1.0 } else { 2.0 };
        let f = k as f64 * df;
        if (0.15..=0.40).contains(&f) {
            hf += d * df;
        }
        if (0.0033..=0.40).contains(&f) {
            tp += d * df;
        }
    }
    (hf, tp)
}

/// `(value, defined)` for each of the 26 features.
fn oracle(rr: &[f64]) -> Vec<(f64, bool)> {
    let n = rr.len();
    let mean = o_mean(rr);
    let sd = o_sd(rr);
    let d = o_diff(rr);
    let mut sorted = rr.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let m2 = rr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let m3 = rr.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n as f64;
    let rmssd = (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt();
    let pnn50 = d.iter().filter(|v| v.abs() > 50.0).count() as f64 / d.len() as f64;
    let sdsd = o_sd(&d);
    let ratio_rad = 2.0 * sd * sd - 0.5 * rmssd * rmssd;
    let sd1 = sdsd / 2f64.sqrt();
    let sd2_rad = 2.0 * sd * sd - 0.5 * sdsd * sdsd;
    let sd2 = sd2_rad.max(0.0).sqrt();
    let (hf, tp) = if n >= 8 { o_band_powers(rr) } else { (0.0, 0.0) };
    let dd = o_diff(&d);
    let num: f64 = d.iter().map(|v| v.abs()).sum();
    let den: f64 = dd.iter().map(|v| v.abs()).sum();
    let r = 0.2 * sd;
    let entropy_ok = n >= 10;
    let sampen = if entropy_ok { o_sampen(rr, 2, r) } else { None };
    let mse: Option<f64> = if entropy_ok {
        let mut vals = Vec::new();
        for s in 1..=3 {
            let cg: Vec<f64> = rr.chunks_exact(s).map(|c| c.iter().sum::<f64>() / s as f64).collect();
            vals.push(if cg.len() >= 4 { o_sampen(&cg, 2, r) } else { None });
        }
        if vals.iter().all(|v| v.is_some()) {
            Some(vals.iter().flatten().sum::<f64>() / 3.0)
        } else {
            None
        }
    } else {
        None
    };
    let mut turns = 0.0;
    for i in 1..n - 1 {
        if (rr[i] > rr[i - 1] && rr[i] > rr[i + 1]) || (rr[i] < rr[i - 1] && rr[i] < rr[i + 1]) {
            turns += 1.0;
        }
    }
    let def = |v: f64| (v, true);
    let opt = |v: Option<f64>| v.map_or((0.0, false), |x| (x, true));
    vec![
        def(sorted[0]),
        def(mean),
        def(median),
        opt((m2 > 0.0).then(|| m3 / m2.powf(1.5))),
        def(sd),
        def(sd / mean),
        def(pnn50),
        def(rmssd),
        opt((rmssd > 0.0).then(|| sd / rmssd)),
        opt((ratio_rad > 0.0).then(|| (0.5 * rmssd * rmssd).sqrt() / ratio_rad.sqrt())),
        def(sdsd),
        def(rmssd / mean),
        if n >= 8 { def(hf) } else { (0.0, false) },
        if n >= 8 { opt((tp > 1e-10).then(|| hf / tp)) } else { (0.0, false) },
        if n >= 8 { def(hf.max(1e-12).ln()) } else { (0.0, false) },
        if n >= 8 { def(tp) } else { (0.0, false) },
        def(sd1),
        if sd2_rad < 0.0 { (0.0, false) } else { def(sd2) },
        opt((sd2 > 0.0).then(|| sd1 / sd2)),
        def(PI * sd1 * sd2),
        opt((den >= 1e-12).then(|| num / den)),
        opt(sampen),
        if entropy_ok { def(o_shannon(rr)) } else { (0.0, false) },
        if entropy_ok { def(o_apen(rr, 2, r)) } else { (0.0, false) },
        opt(mse),
        def(turns / n as f64),
    ]
}

fn lcg_list(n: usize, seed: u64, base: f64, spread: f64) -> Vec<f64> {
    let mut s = seed;
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = (s >> 11) as f64 / (1u64 << 53) as f64;
            (base + spread * (u - 0.5)).round()
        })
        .collect()
}

fn feature_oracle() -> Outcome {
    let lists: Vec<Vec<f64>> = vec![
        vec![800.0, 800.0, 800.0],
        vec![700.0, 800.0, 700.0],
        vec![810.0, 790.0, 840.0, 760.0, 800.0, 850.0, 800.0, 780.0, 830.0, 790.0, 805.0, 815.0],
        lcg_list(40, 7, 750.0, 500.0),
        (0..24).map(|i| 800.0 + 50.0 * ((i % 4) as f64) + 10.0 * (i as f64 * 0.9).sin()).collect(),
    ];
    let mut lines = String::new();
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for (li, rr) in lists.iter().enumerate() {
        let fv = compute_features(&RrSeries::new(rr.clone())).unwrap();
        let want = oracle(rr);
        for (j, (&got, &(exp, defined))) in fv.values.iter().zip(&want).enumerate() {
            let rel = if exp == 0.0 && got == 0.0 {
                0.0
            } else {
                (got - exp).abs() / exp.abs().max(got.abs())
            };
            let flag_ok = fv.is_flagged(j) != defined;
            // Values that are zero in exact arithmetic may carry rounding noise.
            let tiny = exp.abs() < 1e-9 && got.abs() < 1e-9;
            if !(flag_ok && (rel <= 1e-9 || tiny)) {
                pass = false;
                lines.push_str(&format!(
                    "  list {li} {}: got {got} (flagged {}), oracle {exp} (defined {defined})\n",
                    FEATURE_NAMES[j],
                    fv.is_flagged(j)
                ));
            }
            if !tiny {
                worst = worst.max(rel);
            }
        }
        let g = |name: &str| fv.values[feature_index(name).unwrap()];
        if g("S") != PI * g("SD1") * g("SD2") || g("CVSD") != g("RMSSD") / g("meanHR") {
            pass = false;
            lines.push_str(&format!("  list {li}: definitional identity broken\n"));
        }
    }
    lines.push_str(&format!(
        "  5 lists x 26 features, worst relative error {worst:.2e} (<= 1e-9); identities exact"
    ));
    outcome(pass, lines)
}

/// AP by enumerating every threshold and recounting from scratch.
fn exhaustive_ap(scores: &[(f64, Label)]) -> f64 {
    let mut thresholds: Vec<f64> = scores.iter().map(|s| s.0).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let positives = scores.iter().filter(|s| s.1 == Label::Af).count() as f64;
    let (mut ap, mut prev) = (0.0, 0.0);
    for th in thresholds {
        let tp = scores.iter().filter(|s| s.0 >= th && s.1 == Label::Af).count() as f64;
        let called = scores.iter().filter(|s| s.0 >= th).count() as f64;
        let recall = tp / positives;
        ap += (recall - prev) * (tp / called);
        prev = recall;
    }
    ap
}

fn metric_formulas() -> Outcome {
    let m = metrics(&ConfusionMatrix {
        tp: 87,
        fp: 13,
        fn_: 13,
        tn: 187,
    });
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let metric_ok = close(m.accuracy, 274.0 / 300.0)
        && close(m.precision, 0.87)
        && close(m.recall, 0.87)
        && close(m.f1, 0.87);
    let toy = [
        (0.9, Label::Af),
        (0.8, Label::Nsr),
        (0.7, Label::Af),
        (0.1, Label::Nsr),
    ];
    let ap = pr_curve(&toy).unwrap().ap;
    let want = exhaustive_ap(&toy);
    outcome(
        metric_ok && ap == want,
        format!(
            "  accuracy {:.15} precision {:.15} recall {:.15} f1 {:.15}\n  toy AP {ap} vs exhaustive {want}",
            m.accuracy, m.precision, m.recall, m.f1
        ),
    )
}

fn cohort_samples(spec: &CohortSpec) -> (Vec<Sample>, usize) {
    let plans = cohort_plan(spec).unwrap();
    let cfg = PipelineConfig::default();
    let rows: Vec<Option<Sample>> = plans
        .par_iter()
        .map(|p| {
            let (rec, _) = p.synthesize().ok()?;
            let a = analyze(&rec, &cfg).ok()?;
            Some(Sample::new(a.features, p.label, p.subject_id.clone()))
        })
        .collect();
    let skipped = rows.iter().filter(|r| r.is_none()).count();
    (rows.into_iter().flatten().collect(), skipped)
}

fn classification() -> Vec<Outcome> {
    let t = Instant::now();
    let spec = CohortSpec::default();
    let (quiet, skipped) = cohort_samples(&spec);
    let report = loso_eval(&quiet, &LinearTrainer::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let c5 = report.accuracy >= 0.90 && report.f1 >= 0.85 && secs < 300.0;
    let c5_detail = format!(
        "  {} records ({skipped} skipped), accuracy {:.4} (>= 0.90), F1 {:.4} (>= 0.85), precision {:.4}, recall {:.4}, AP {:.4}, {secs:.1} s (< 300)",
        quiet.len(),
        report.accuracy,
        report.f1,
        report.precision,
        report.recall,
        report.ap
    );

    let mut noisy = Vec::new();
    for (scenario, prefix) in [(Scenario::Conversation, "C"), (Scenario::Entertainment, "E")] {
        let test_spec = CohortSpec {
            n_subjects: 10,
            n_af: 3,
            records_per_subject: 6,
            seed: 4242,
            scenario,
            snr_db: Some(20.0),
            subject_prefix: prefix.into(),
            ..CohortSpec::default()
        };
        noisy.extend(cohort_samples(&test_spec).0);
    }
    let nr = noise_eval(&quiet, &noisy, &LinearTrainer::default()).unwrap();
    let c6 = nr.precision >= nr.recall;
    let c6_detail = format!(
        "  {} noisy records, precision {:.4} >= recall {:.4}, accuracy {:.4}",
        noisy.len(),
        nr.precision,
        nr.recall,
        nr.accuracy
    );
    vec![outcome(c5, c5_detail), outcome(c6, c6_detail)]
}

fn run_cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_wristsonar"))
        .args(args)
        .output()
        .expect("spawn wristsonar");
    assert!(
        out.status.success(),
        "wristsonar {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn pipeline_run(dir: &Path) {
    let d = |p: &str| dir.join(p).to_string_lossy().into_owned();
    run_cli(&[
        "synth", "--out", &d("cohort"), "--subjects", "4", "--af-subjects", "2", "--records", "2",
        "--seed", "42",
    ]);
    run_cli(&["extract", "--manifest", &d("cohort/manifest.jsonl"), "--out", &d("cpr")]);
    run_cli(&["features", "--manifest", &d("cohort/manifest.jsonl"), "--out", &d("features.csv")]);
    run_cli(&["train", "--features", &d("features.csv"), "--out", &d("model.json"), "--seed", "42"]);
    run_cli(&["eval", "--features", &d("features.csv"), "--out", &d("report.json"), "--seed", "42"]);
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline_run(a.path());
    pipeline_run(b.path());
    let mut lines = String::new();
    let mut pass = true;
    for f in [
        "cohort/manifest.jsonl",
        "cohort/wav/S01_r01.wav",
        "features.csv",
        "model.json",
        "report.json",
        "report.pr.csv",
    ] {
        let x = std::fs::read(a.path().join(f));
        let y = std::fs::read(b.path().join(f));
        let same = matches!((&x, &y), (Ok(x), Ok(y)) if x == y);
        pass &= same;
        lines.push_str(&format!(
            "  {f}: {}\n",
            if same { "identical" } else { "DIFFERENT or missing" }
        ));
    }
    let rows = std::fs::read_to_string(a.path().join("features.csv"))
        .map(|s| s.lines().count().saturating_sub(1))
        .unwrap_or(0);
    lines.push_str(&format!("  {rows} feature rows per run"));
    outcome(pass && rows > 0, lines)
}
