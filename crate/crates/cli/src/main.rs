use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;

use wristsonar::classifier::{train_linear, Classifier, Hyperparams, ModelArtifact, Sample};
use wristsonar::eval::{loso_eval, noise_eval, KnnTrainer, LinearTrainer, Trainer};
use wristsonar::io::{self, ManifestEntry, Sidecar};
use wristsonar::pipeline::{analyze, cohort_plan, Analysis, CohortSpec, PipelineConfig};
use wristsonar::signal::Scenario;
use wristsonar::Error;

const EXIT_HELP: &str = "\
Exit status:
  0  success
  2  bad command line
  3  I/O failure (missing, unreadable or unwritable file)
  4  validation failure (bad config, corrupt file, incompatible model, training error)
  5  insufficient data (too short, no peaks, too few beats)
  6  no carrier found in the recording";

const EXIT_IO: u8 = 3;
const EXIT_VALIDATION: u8 = 4;
const EXIT_INSUFFICIENT: u8 = 5;
const EXIT_NO_CARRIER: u8 = 6;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::NoCarrier(_) => EXIT_NO_CARRIER,
        e if e.is_insufficient_data() => EXIT_INSUFFICIENT,
        _ => EXIT_VALIDATION,
    }
}

/// Acoustic AF screening: synthesize probe recordings, recover the pulse
/// wave, extract rhythm features, train and evaluate a linear classifier.
#[derive(Parser)]
#[command(name = "wristsonar", version, after_help = EXIT_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic cohort: WAVs, sidecars, truth files and a manifest.
    Synth(SynthArgs),
    /// Write CPR, peak and RR CSVs for every manifest entry.
    Extract(ExtractArgs),
    /// Compute the feature table for every manifest entry.
    Features(ExtractArgs),
    /// Fit the linear model on a feature table.
    Train(TrainArgs),
    /// Leave-one-subject-out evaluation, or train/test on disjoint cohorts.
    Eval(EvalArgs),
    /// Classify one recording.
    Predict(PredictArgs),
}

#[derive(Args, Clone)]
struct SignalArgs {
    /// Probe carrier frequency.
    #[arg(long = "carrier-hz", default_value_t = 18_000.0)]
    carrier_hz: f64,
}

impl SignalArgs {
    fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            carrier_hz: self.carrier_hz,
            ..PipelineConfig::default()
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    subjects: usize,
    /// How many of the subjects have AF.
    #[arg(long = "af-subjects", default_value_t = 6)]
    af_subjects: usize,
    #[arg(long = "records", default_value_t = 40)]
    records_per_subject: usize,
    #[arg(long = "duration-s", default_value_t = 30.0)]
    duration_s: f64,
    /// quiet, conversation or entertainment.
    #[arg(long, default_value = "quiet")]
    scenario: String,
    /// Broadband noise floor relative to the probe.
    #[arg(long = "snr-db", default_value_t = 30.0, conflicts_with = "noise_free")]
    snr_db: f64,
    /// Write clean recordings with no noise at all.
    #[arg(long = "noise-free")]
    noise_free: bool,
    /// Subject id prefix.
    #[arg(long, default_value = "S")]
    prefix: String,
    #[command(flatten)]
    signal: SignalArgs,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory (extract) or feature CSV path (features).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    signal: SignalArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// Feature CSV produced by `features`.
    #[arg(long)]
    features: PathBuf,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "c", default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    /// Reweight classes to equal total influence.
    #[arg(long)]
    balanced: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Feature CSV produced by `features`.
    #[arg(long)]
    features: PathBuf,
    /// Report JSON to write; the PR curve goes next to it as `.pr.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Train on `--features` and test on this table instead of LOSO.
    #[arg(long = "test-features")]
    test_features: Option<PathBuf>,
    /// Use the k-nearest-neighbour baseline instead of the linear model.
    #[arg(long)]
    knn: Option<usize>,
    #[arg(long = "c", default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long)]
    balanced: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Recording to classify.
    #[arg(long)]
    wav: PathBuf,
    #[command(flatten)]
    signal: SignalArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Extract(a) => cmd_extract(&a),
        Command::Features(a) => cmd_features(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Predict(a) => cmd_predict(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn create_dir(path: &Path) -> wristsonar::Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_synth(a: &SynthArgs) -> wristsonar::Result<()> {
    let spec = CohortSpec {
        n_subjects: a.subjects,
        n_af: a.af_subjects,
        records_per_subject: a.records_per_subject,
        duration_s: a.duration_s,
        seed: a.seed,
        scenario: Scenario::parse(&a.scenario)?,
        snr_db: (!a.noise_free).then_some(a.snr_db),
        carrier_hz: a.signal.carrier_hz,
        subject_prefix: a.prefix.clone(),
        ..CohortSpec::default()
    };
    let plans = cohort_plan(&spec)?;
    create_dir(&a.out.join("wav"))?;
    create_dir(&a.out.join("truth"))?;
    let entries = plans
        .par_iter()
        .map(|plan| -> wristsonar::Result<ManifestEntry> {
            let (rec, truth) = plan.synthesize()?;
            let stem = plan.stem();
            let wav_rel = format!("wav/{stem}.wav");
            let truth_rel = format!("truth/{stem}.csv");
            let wav = a.out.join(&wav_rel);
            io::write_wav(&wav, &rec)?;
            io::write_sidecar(
                &wav,
                &Sidecar {
                    subject_id: plan.subject_id.clone(),
                    label: plan.label,
                    scenario: plan.scenario.as_str().to_string(),
                    seed: Some(plan.seed),
                    truth_path: Some(format!("../{truth_rel}")),
                    carrier_hz: Some(spec.carrier_hz),
                },
            )?;
            io::write_truth(&a.out.join(&truth_rel), &truth)?;
            Ok(ManifestEntry {
                wav_path: wav_rel,
                subject_id: plan.subject_id.clone(),
                label: plan.label,
                scenario: plan.scenario.as_str().to_string(),
                truth_path: Some(truth_rel),
            })
        })
        .collect::<wristsonar::Result<Vec<_>>>()?;
    let manifest = a.out.join("manifest.jsonl");
    io::write_manifest(&manifest, &entries)?;
    println!("wrote {} recordings, manifest {}", entries.len(), manifest.display());
    Ok(())
}

struct Processed {
    entry: ManifestEntry,
    stem: String,
    outcome: wristsonar::Result<Analysis>,
}

/// Runs the pipeline over every manifest entry. Failures are kept per record.
fn process_manifest(manifest: &Path, cfg: &PipelineConfig) -> wristsonar::Result<Vec<Processed>> {
    let (entries, base) = io::read_manifest(manifest)?;
    Ok(entries
        .into_par_iter()
        .map(|entry| {
            let wav = entry.resolve(&base);
            let stem = wav
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| entry.wav_path.clone());
            let outcome = io::load_recording(&wav).and_then(|mut rec| {
                // The manifest is authoritative for labels.
                rec.subject_id = entry.subject_id.clone();
                rec.label = entry.label;
                analyze(&rec, cfg)
            });
            Processed {
                entry,
                stem,
                outcome,
            }
        })
        .collect())
}

/// Prints one status line per record; errors if nothing succeeded.
fn report_status(results: &[Processed]) -> wristsonar::Result<()> {
    let mut ok = 0;
    for r in results {
        match &r.outcome {
            Ok(a) => {
                ok += 1;
                info!("{}: ok, {} beats", r.stem, a.peaks.indices.len());
            }
            Err(e) => warn!("{}: skipped: {e}", r.stem),
        }
    }
    let skipped = results.len() - ok;
    eprintln!("{ok} of {} records processed, {skipped} skipped", results.len());
    if ok == 0 && !results.is_empty() {
        return Err(Error::InsufficientData(
            "no record in the manifest could be processed".into(),
        ));
    }
    Ok(())
}

fn cmd_extract(a: &ExtractArgs) -> wristsonar::Result<()> {
    let results = process_manifest(&a.manifest, &a.signal.pipeline())?;
    create_dir(&a.out)?;
    for r in &results {
        if let Ok(an) = &r.outcome {
            let dir = &a.out;
            io::write_atomic(&dir.join(format!("{}.cpr.csv", r.stem)), io::cpr_csv(&an.cpr).as_bytes())?;
            io::write_atomic(
                &dir.join(format!("{}.peaks.csv", r.stem)),
                io::peaks_csv(&an.cpr, &an.peaks).as_bytes(),
            )?;
            io::write_atomic(&dir.join(format!("{}.rr.csv", r.stem)), io::rr_csv(&an.rr).as_bytes())?;
        }
    }
    report_status(&results)
}

fn cmd_features(a: &ExtractArgs) -> wristsonar::Result<()> {
    let results = process_manifest(&a.manifest, &a.signal.pipeline())?;
    let rows: Vec<Sample> = results
        .iter()
        .filter_map(|r| {
            r.outcome
                .as_ref()
                .ok()
                .map(|an| Sample::new(an.features, r.entry.label, r.entry.subject_id.clone()))
        })
        .collect();
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    io::write_atomic(&a.out, io::feature_csv(&rows)?.as_bytes())?;
    report_status(&results)
}

fn hyperparams(c: f64, seed: u64, epochs: usize, balanced: bool) -> Hyperparams {
    Hyperparams {
        c,
        epochs,
        seed,
        balanced,
    }
}

fn cmd_train(a: &TrainArgs) -> wristsonar::Result<()> {
    let data = io::read_feature_csv(&a.features)?;
    let model = train_linear(&data, &hyperparams(a.c, a.seed, a.epochs, a.balanced))?;
    model.save(&a.out)?;
    println!("trained on {} records, model {}", data.len(), a.out.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> wristsonar::Result<()> {
    let data = io::read_feature_csv(&a.features)?;
    let linear = LinearTrainer {
        hyperparams: hyperparams(a.c, a.seed, a.epochs, a.balanced),
    };
    let knn;
    let trainer: &dyn Trainer = match a.knn {
        Some(k) => {
            knn = KnnTrainer { k };
            &knn
        }
        None => &linear,
    };
    let report = match &a.test_features {
        Some(test) => noise_eval(&data, &io::read_feature_csv(test)?, trainer)?,
        None => loso_eval(&data, trainer)?,
    };
    io::write_atomic(&a.out, report.to_json()?.as_bytes())?;
    io::write_atomic(&a.out.with_extension("pr.csv"), report.pr_csv().as_bytes())?;
    println!(
        "accuracy={:.4} precision={:.4} recall={:.4} f1={:.4} ap={:.4} skipped_folds={}",
        report.accuracy, report.precision, report.recall, report.f1, report.ap, report.skipped_folds
    );
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> wristsonar::Result<()> {
    let model = ModelArtifact::load(&a.model)?;
    let mut rec = io::load_recording(&a.wav)?;
    if rec.carrier_hz.is_none() {
        rec.carrier_hz = Some(a.signal.carrier_hz);
    }
    let analysis = analyze(&rec, &a.signal.pipeline())?;
    let p = model.predict(&analysis.features)?;
    println!(
        "label={} score={} beats={} mean_hr_bpm={:.1}",
        p.label,
        p.score,
        analysis.peaks.indices.len(),
        analysis.mean_hr_bpm()
    );
    Ok(())
}
