//! Leave-one-subject-out evaluation, confusion counts and PR analysis.
//!
//! AF is the positive class throughout.

use std::collections::BTreeSet;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{train_linear, Classifier, Hyperparams, KnnModel, Sample};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::recording::Label;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Counts one decision; unlabelled truths are ignored.
    pub fn record(&mut self, truth: Label, predicted: Label) {
        let p = predicted == Label::Af;
        match truth {
            Label::Af if p => self.tp += 1,
            Label::Af => self.fn_ += 1,
            Label::Nsr if p => self.fp += 1,
            Label::Nsr => self.tn += 1,
            Label::Unlabeled => {}
        }
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            tn: self.tn + other.tn,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when the corresponding denominator was zero and 0 was substituted.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn metrics(c: &ConfusionMatrix) -> Metrics {
    let (accuracy, _) = ratio(c.tp + c.tn, c.total());
    let (precision, precision_undefined) = ratio(c.tp, c.tp + c.fp);
    let (recall, recall_undefined) = ratio(c.tp, c.tp + c.fn_);
    let f1_undefined = precision + recall == 0.0;
    let f1 = if f1_undefined {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics {
        accuracy,
        precision,
        recall,
        f1,
        precision_undefined,
        recall_undefined,
        f1_undefined,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub ap: f64,
}

/// One point per distinct score, thresholds descending, predicting AF for
/// `score >= threshold`. AP is the step sum `Σ (R_k − R_{k−1})·P_k`.
pub fn pr_curve(scores: &[(f64, Label)]) -> Result<PrCurve> {
    if scores.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::InvalidInput("non-finite decision score".into()));
    }
    let labelled: Vec<(f64, bool)> = scores
        .iter()
        .filter(|(_, l)| *l != Label::Unlabeled)
        .map(|&(s, l)| (s, l == Label::Af))
        .collect();
    let positives = labelled.iter().filter(|(_, p)| *p).count();
    if positives == 0 || positives == labelled.len() {
        return Err(Error::InsufficientData(
            "PR curve needs both AF and NSR examples".into(),
        ));
    }
    let mut sorted = labelled;
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push(PrPoint {
            threshold,
            recall,
            precision,
        });
    }
    Ok(PrCurve { points, ap })
}

/// Builds a classifier from training samples; one call per fold.
pub trait Trainer: Sync {
    fn train(&self, data: &[Sample]) -> Result<Box<dyn Classifier>>;

    /// Folds whose training part lacks a class are skipped when true.
    fn needs_both_classes(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Default)]
pub struct LinearTrainer {
    pub hyperparams: Hyperparams,
}

impl Trainer for LinearTrainer {
    fn train(&self, data: &[Sample]) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(train_linear(data, &self.hyperparams)?))
    }
}

#[derive(Debug, Clone)]
pub struct KnnTrainer {
    pub k: usize,
}

impl Trainer for KnnTrainer {
    fn train(&self, data: &[Sample]) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(KnnModel::fit(data, self.k)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub subject_id: String,
    pub records: usize,
    pub confusion: ConfusionMatrix,
    pub skipped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub subject_id: String,
    pub label: Label,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    /// False when the pooled scores hold a single class.
    pub ap_defined: bool,
    pub pr_points: Vec<(f64, f64)>,
    pub per_subject: Vec<FoldReport>,
    pub skipped_folds: usize,
    pub scores: Vec<ScoredRecord>,
}

impl EvalReport {
    fn assemble(mode: &str, folds: Vec<FoldReport>, scores: Vec<ScoredRecord>) -> Self {
        let confusion = folds
            .iter()
            .fold(ConfusionMatrix::default(), |acc, f| acc.merge(&f.confusion));
        let m = metrics(&confusion);
        let pooled: Vec<(f64, Label)> = scores.iter().map(|s| (s.score, s.label)).collect();
        let (ap, ap_defined, pr_points) = match pr_curve(&pooled) {
            Ok(c) => (
                c.ap,
                true,
                c.points.iter().map(|p| (p.recall, p.precision)).collect(),
            ),
            Err(_) => (0.0, false, Vec::new()),
        };
        Self {
            mode: mode.to_string(),
            confusion,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            ap,
            precision_undefined: m.precision_undefined,
            recall_undefined: m.recall_undefined,
            ap_defined,
            pr_points,
            skipped_folds: folds.iter().filter(|f| f.skipped).count(),
            per_subject: folds,
            scores,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidInput(format!("serialize report: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    /// `recall,precision` rows for plotting.
    pub fn pr_csv(&self) -> String {
        let mut out = String::from("recall,precision\n");
        for (r, p) in &self.pr_points {
            out.push_str(&format!("{r},{p}\n"));
        }
        out
    }
}

fn subjects(data: &[Sample]) -> Vec<String> {
    data.iter()
        .map(|s| s.subject_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn has_both_classes(data: &[Sample]) -> bool {
    data.iter().any(|s| s.label == Label::Af) && data.iter().any(|s| s.label == Label::Nsr)
}

fn score_all(
    model: &dyn Classifier,
    test: &[&Sample],
) -> Result<(ConfusionMatrix, Vec<ScoredRecord>)> {
    let mut confusion = ConfusionMatrix::default();
    let mut scores = Vec::with_capacity(test.len());
    for s in test {
        let p = model.predict(&s.features)?;
        confusion.record(s.label, p.label);
        scores.push(ScoredRecord {
            subject_id: s.subject_id.clone(),
            label: s.label,
            score: p.score,
        });
    }
    Ok((confusion, scores))
}

/// One fold per subject, in subject-id order. Folds whose training part
/// holds a single class are skipped and reported.
pub fn loso_eval(dataset: &[Sample], trainer: &dyn Trainer) -> Result<EvalReport> {
    let ids = subjects(dataset);
    if ids.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "leave-one-subject-out needs at least 2 subjects, got {}",
            ids.len()
        )));
    }
    if !has_both_classes(dataset) {
        return Err(Error::Training("dataset holds a single class".into()));
    }
    let folds: Vec<(FoldReport, Vec<ScoredRecord>)> = ids
        .par_iter()
        .map(|id| -> Result<_> {
            let train: Vec<Sample> = dataset
                .iter()
                .filter(|s| &s.subject_id != id)
                .cloned()
                .collect();
            let test: Vec<&Sample> = dataset.iter().filter(|s| &s.subject_id == id).collect();
            let mut fold = FoldReport {
                subject_id: id.clone(),
                records: test.len(),
                confusion: ConfusionMatrix::default(),
                skipped: false,
                skip_reason: None,
            };
            if trainer.needs_both_classes() && !has_both_classes(&train) {
                warn!("fold {id}: training subjects hold a single class, skipped");
                fold.skipped = true;
                fold.skip_reason = Some("single-class training set".into());
                return Ok((fold, Vec::new()));
            }
            let model = trainer.train(&train)?;
            let (confusion, scores) = score_all(model.as_ref(), &test)?;
            fold.confusion = confusion;
            Ok((fold, scores))
        })
        .collect::<Result<_>>()?;
    if folds.iter().all(|(f, _)| f.skipped) {
        return Err(Error::Training("every fold was skipped".into()));
    }
    let (reports, scores): (Vec<_>, Vec<_>) = folds.into_iter().unzip();
    Ok(EvalReport::assemble(
        "loso",
        reports,
        scores.into_iter().flatten().collect(),
    ))
}

/// Train once on `train`, test on `test`; the two must share no subject.
pub fn noise_eval(train: &[Sample], test: &[Sample], trainer: &dyn Trainer) -> Result<EvalReport> {
    let train_ids: BTreeSet<String> = subjects(train).into_iter().collect();
    if let Some(shared) = subjects(test).iter().find(|id| train_ids.contains(*id)) {
        return Err(Error::InvalidInput(format!(
            "subject {shared} appears in both training and test sets"
        )));
    }
    if test.is_empty() {
        return Err(Error::InsufficientData("empty test set".into()));
    }
    if trainer.needs_both_classes() && !has_both_classes(train) {
        return Err(Error::Training("training set holds a single class".into()));
    }
    let model = trainer.train(train)?;
    let mut folds = Vec::new();
    let mut all_scores = Vec::new();
    for id in subjects(test) {
        let part: Vec<&Sample> = test.iter().filter(|s| s.subject_id == id).collect();
        let (confusion, scores) = score_all(model.as_ref(), &part)?;
        folds.push(FoldReport {
            subject_id: id,
            records: part.len(),
            confusion,
            skipped: false,
            skip_reason: None,
        });
        all_scores.extend(scores);
    }
    Ok(EvalReport::assemble("noise", folds, all_scores))
}

/// Convenience for callers holding bare vectors.
pub fn samples_from(
    features: &[FeatureVector],
    labels: &[Label],
    subjects: &[String],
) -> Vec<Sample> {
    features
        .iter()
        .zip(labels)
        .zip(subjects)
        .map(|((f, l), s)| Sample::new(*f, *l, s.clone()))
        .collect()
}
