//! File formats: WAV plus JSON sidecar, CSV exports, feature tables and the
//! line-oriented dataset manifest. Every writer is atomic.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::beats::{PeakList, RrSeries};
use crate::classifier::Sample;
use crate::cpr::CprSeries;
use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
use crate::recording::{AudioRecording, Label};
use crate::signal::ChannelTruth;

/// Writes to a temporary file in the target directory, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// 16-bit PCM mono; samples are clipped to [-1, 1].
pub fn wav_bytes(rec: &AudioRecording) -> Result<Vec<u8>> {
    let rate = rec.sample_rate_hz;
    if !(rate > 0.0 && rate.fract() == 0.0 && rate <= u32::MAX as f64) {
        return Err(Error::InvalidInput(format!(
            "sample rate {rate} Hz is not a positive integer"
        )));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut buf = std::io::Cursor::new(Vec::with_capacity(44 + 2 * rec.samples.len()));
    {
        let mut w = hound::WavWriter::new(&mut buf, spec)
            .map_err(|e| Error::InvalidInput(format!("wav header: {e}")))?;
        let mut w16 = w.get_i16_writer(rec.samples.len() as u32);
        for &s in &rec.samples {
            w16.write_sample((s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16);
        }
        w16.flush()
            .map_err(|e| Error::InvalidInput(format!("wav data: {e}")))?;
        w.finalize()
            .map_err(|e| Error::InvalidInput(format!("wav finalize: {e}")))?;
    }
    Ok(buf.into_inner())
}

pub fn write_wav(path: &Path, rec: &AudioRecording) -> Result<()> {
    write_atomic(path, &wav_bytes(rec)?)
}

/// Reads mono 16-bit PCM or 32-bit float WAV. Metadata fields are left at
/// their defaults; see [`load_recording`].
pub fn read_wav(path: &Path) -> Result<AudioRecording> {
    let fmt_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    };
    let mut reader = hound::WavReader::open(path).map_err(fmt_err)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::format(
            path,
            format!("expected mono audio, found {} channels", spec.channels),
        ));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / i16::MAX as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(fmt_err)?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(fmt_err)?,
        (f, b) => {
            return Err(Error::format(
                path,
                format!("unsupported sample format {f:?} with {b} bits"),
            ))
        }
    };
    Ok(AudioRecording::new(samples, spec.sample_rate as f64))
}

/// Metadata stored next to each WAV as `<name>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub subject_id: String,
    pub label: Label,
    pub scenario: String,
    pub seed: Option<u64>,
    pub truth_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carrier_hz: Option<f64>,
}

pub fn sidecar_path(wav: &Path) -> PathBuf {
    wav.with_extension("json")
}

pub fn write_sidecar(wav: &Path, meta: &Sidecar) -> Result<()> {
    let mut text = serde_json::to_string_pretty(meta)
        .map_err(|e| Error::InvalidInput(format!("sidecar: {e}")))?;
    text.push('\n');
    write_atomic(&sidecar_path(wav), text.as_bytes())
}

pub fn read_sidecar(wav: &Path) -> Result<Option<Sidecar>> {
    let path = sidecar_path(wav);
    if !path.exists() {
        return Ok(None);
    }
    let text = read_text(&path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Error::format(&path, e.to_string()))
}

/// WAV plus whatever the sidecar knows.
pub fn load_recording(wav: &Path) -> Result<AudioRecording> {
    let mut rec = read_wav(wav)?;
    if let Some(meta) = read_sidecar(wav)? {
        rec.subject_id = meta.subject_id;
        rec.label = meta.label;
        rec.scenario = meta.scenario;
        rec.carrier_hz = meta.carrier_hz;
    }
    Ok(rec)
}

/// Ground-truth beat list stored beside the truth CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthBeats {
    pub static_offset_rad: f64,
    pub peak_times_s: Vec<f64>,
    pub rr_truth_ms: Vec<f64>,
}

pub fn truth_csv(truth: &ChannelTruth) -> String {
    let mut out = String::from("time_s,theta_c_rad\n");
    for (m, v) in truth.phase_response.iter().enumerate() {
        out.push_str(&format!("{},{}\n", m as f64 / truth.rate_hz, v));
    }
    out
}

/// Writes `<stem>.csv` and `<stem>.beats.json`.
pub fn write_truth(csv_path: &Path, truth: &ChannelTruth) -> Result<()> {
    write_atomic(csv_path, truth_csv(truth).as_bytes())?;
    let beats = TruthBeats {
        static_offset_rad: truth.static_offset_rad,
        peak_times_s: truth.peak_times_s.clone(),
        rr_truth_ms: truth.rr_truth_ms.clone(),
    };
    let mut text = serde_json::to_string_pretty(&beats)
        .map_err(|e| Error::InvalidInput(format!("truth beats: {e}")))?;
    text.push('\n');
    write_atomic(&truth_beats_path(csv_path), text.as_bytes())
}

pub fn truth_beats_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("beats.json")
}

pub fn read_truth_beats(csv_path: &Path) -> Result<TruthBeats> {
    let path = truth_beats_path(csv_path);
    let text = read_text(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
}

pub fn cpr_csv(cpr: &CprSeries) -> String {
    let mut out = String::from("time_s,phi_rad\n");
    for (k, v) in cpr.phi.iter().enumerate() {
        out.push_str(&format!("{},{}\n", cpr.time_of(k), v));
    }
    out
}

pub fn peaks_csv(cpr: &CprSeries, peaks: &PeakList) -> String {
    let mut out = String::from("index,time_s,phi_rad\n");
    for (&i, &t) in peaks.indices.iter().zip(&peaks.times_s) {
        out.push_str(&format!("{i},{t},{}\n", cpr.phi[i]));
    }
    out
}

pub fn rr_csv(rr: &RrSeries) -> String {
    let mut out = String::from("rr_ms\n");
    for v in &rr.rr_ms {
        out.push_str(&format!("{v}\n"));
    }
    out
}

fn feature_header() -> String {
    let mut cols: Vec<&str> = FEATURE_NAMES.to_vec();
    cols.extend(["subject_id", "label", "flags"]);
    cols.join(",")
}

fn check_field(s: &str) -> Result<()> {
    if s.is_empty() || s.contains([',', '\n', '\r', '"']) {
        return Err(Error::InvalidInput(format!(
            "subject id {s:?} must be nonempty and free of commas, quotes and newlines"
        )));
    }
    Ok(())
}

/// Header of the 26 names then `subject_id,label,flags`; values are written
/// in shortest round-trip form.
pub fn feature_csv(rows: &[Sample]) -> Result<String> {
    let mut out = feature_header();
    out.push('\n');
    for r in rows {
        check_field(&r.subject_id)?;
        for v in &r.features.values {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!(
            "{},{},{}\n",
            r.subject_id,
            r.label,
            r.features.flags_hex()
        ));
    }
    Ok(out)
}

pub fn parse_feature_csv(text: &str, origin: &Path) -> Result<Vec<Sample>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(origin, "empty feature table"))?;
    if header.trim_end() != feature_header() {
        return Err(Error::Incompatible(format!(
            "{}: feature columns differ from the expected order",
            origin.display()
        )));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| Error::format(origin, format!("line {}: {m}", n + 2));
        let cols: Vec<&str> = line.trim_end().split(',').collect();
        if cols.len() != FEATURE_COUNT + 3 {
            return Err(bad(format!(
                "expected {} columns, found {}",
                FEATURE_COUNT + 3,
                cols.len()
            )));
        }
        let mut values = [0.0; FEATURE_COUNT];
        for (j, c) in cols[..FEATURE_COUNT].iter().enumerate() {
            values[j] = c
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("bad value {c:?} for {}", FEATURE_NAMES[j])))?;
        }
        let subject = cols[FEATURE_COUNT];
        if subject.is_empty() {
            return Err(bad("empty subject_id".into()));
        }
        let label: Label = cols[FEATURE_COUNT + 1]
            .parse()
            .map_err(|e: Error| bad(e.to_string()))?;
        let flags = FeatureVector::parse_flags(cols[FEATURE_COUNT + 2])
            .ok_or_else(|| bad(format!("bad flags {:?}", cols[FEATURE_COUNT + 2])))?;
        rows.push(Sample::new(FeatureVector { values, flags }, label, subject));
    }
    Ok(rows)
}

pub fn read_feature_csv(path: &Path) -> Result<Vec<Sample>> {
    parse_feature_csv(&read_text(path)?, path)
}

/// One manifest line. Paths are relative to the manifest's directory unless
/// absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub wav_path: String,
    pub subject_id: String,
    pub label: Label,
    pub scenario: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_path: Option<String>,
}

impl ManifestEntry {
    pub fn resolve(&self, base: &Path) -> PathBuf {
        base.join(&self.wav_path)
    }
}

pub fn manifest_text(entries: &[ManifestEntry]) -> Result<String> {
    let mut out = String::new();
    for e in entries {
        let line = serde_json::to_string(e)
            .map_err(|err| Error::InvalidInput(format!("manifest entry: {err}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    write_atomic(path, manifest_text(entries)?.as_bytes())
}

/// Parses and validates a manifest: labels must be known, subject ids
/// nonempty and WAV files present. Returns the entries and the directory
/// their paths are relative to.
pub fn read_manifest(path: &Path) -> Result<(Vec<ManifestEntry>, PathBuf)> {
    let text = read_text(path)?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: ManifestEntry = serde_json::from_str(line)
            .map_err(|err| Error::format(path, format!("line {}: {err}", n + 1)))?;
        if e.subject_id.is_empty() {
            return Err(Error::format(path, format!("line {}: empty subject_id", n + 1)));
        }
        if !e.resolve(&base).exists() {
            return Err(Error::format(
                path,
                format!("line {}: {} does not exist", n + 1, e.wav_path),
            ));
        }
        entries.push(e);
    }
    Ok((entries, base))
}
