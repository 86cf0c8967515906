//! Linear max-margin AF classifier and a kNN baseline.
//!
//! The linear model minimizes `λ/2·|w|² + mean hinge loss` with Pegasos-style
//! subgradient steps, `λ = 1/(C·n)`. The bias is learned as the weight of a
//! constant unit input, so it is regularized like the other weights.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    apply_norm, feature_fingerprint, fit_norm, FeatureVector, NormStats, FEATURE_COUNT, NORM_FLOOR,
};
use crate::recording::Label;

pub const FORMAT_VERSION: u32 = 1;

/// One labelled feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: FeatureVector,
    pub label: Label,
    pub subject_id: String,
}

impl Sample {
    pub fn new(features: FeatureVector, label: Label, subject_id: impl Into<String>) -> Self {
        Self {
            features,
            label,
            subject_id: subject_id.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    #[serde(rename = "C")]
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Weight each class's hinge terms by `n / (2·n_class)`.
    #[serde(default)]
    pub balanced: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 200,
            seed: 42,
            balanced: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    /// Signed distance to the decision boundary (linear) or vote margin (kNN).
    pub score: f64,
}

impl Prediction {
    /// Positive scores are AF; zero goes to NSR.
    pub fn from_score(score: f64) -> Self {
        let label = if score > 0.0 { Label::Af } else { Label::Nsr };
        Self { label, score }
    }
}

/// Anything that turns a feature vector into a prediction.
pub trait Classifier: Send + Sync {
    fn predict(&self, v: &FeatureVector) -> Result<Prediction>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub feature_fingerprint: String,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub norm: NormStats,
    pub hyperparams: Hyperparams,
}

impl ModelArtifact {
    /// Hand-built model over the current feature order.
    pub fn from_parts(weights: [f64; FEATURE_COUNT], bias: f64, norm: NormStats) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            feature_fingerprint: feature_fingerprint(),
            weights: weights.to_vec(),
            bias,
            norm,
            hyperparams: Hyperparams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported model format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.feature_fingerprint != feature_fingerprint() {
            return Err(Error::Incompatible(format!(
                "model feature fingerprint {} does not match {}",
                self.feature_fingerprint,
                feature_fingerprint()
            )));
        }
        let lens = [
            self.weights.len(),
            self.norm.mean.len(),
            self.norm.scale.len(),
        ];
        if lens.iter().any(|&l| l != FEATURE_COUNT) {
            return Err(Error::Model(format!(
                "expected {FEATURE_COUNT} weights and norm entries, got {lens:?}"
            )));
        }
        let finite = self
            .weights
            .iter()
            .chain(&self.norm.mean)
            .chain(&self.norm.scale)
            .chain(std::iter::once(&self.bias))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Model("non-finite model parameter".into()));
        }
        if self.norm.scale.iter().any(|&s| s < NORM_FLOOR) {
            return Err(Error::Model("normalization scale below floor".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Model(format!("serialize model: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self =
            serde_json::from_str(text).map_err(|e| Error::Model(format!("parse model: {e}")))?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Model(m) => Error::format(path, m),
            other => other,
        })
    }

    /// `w · normalize(v) + b`.
    pub fn score(&self, v: &FeatureVector) -> Result<f64> {
        if self.feature_fingerprint != feature_fingerprint() {
            return Err(Error::Incompatible(format!(
                "model feature fingerprint {} does not match {}",
                self.feature_fingerprint,
                feature_fingerprint()
            )));
        }
        check_finite(v)?;
        let z = apply_norm(v, &self.norm);
        Ok(dot(&self.weights, &z.values) + self.bias)
    }
}

impl Classifier for ModelArtifact {
    fn predict(&self, v: &FeatureVector) -> Result<Prediction> {
        self.score(v).map(Prediction::from_score)
    }
}

pub fn predict(model: &ModelArtifact, v: &FeatureVector) -> Result<Prediction> {
    model.predict(v)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_finite(v: &FeatureVector) -> Result<()> {
    if v.values.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("non-finite feature value".into()))
    }
}

/// `+1` for AF, `-1` for NSR; unlabelled samples are rejected.
fn class_sign(s: &Sample) -> Result<f64> {
    s.label.sign().ok_or_else(|| {
        Error::InvalidInput(format!(
            "unlabelled sample from subject {} in training data",
            s.subject_id
        ))
    })
}

fn check_training_set(data: &[Sample]) -> Result<Vec<f64>> {
    let y = data.iter().map(class_sign).collect::<Result<Vec<_>>>()?;
    for s in data {
        check_finite(&s.features)?;
    }
    let pos = y.iter().filter(|&&v| v > 0.0).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::Training(format!(
            "training data has a single class ({} samples)",
            y.len()
        )));
    }
    Ok(y)
}

pub fn train_linear(data: &[Sample], hp: &Hyperparams) -> Result<ModelArtifact> {
    if !(hp.c.is_finite() && hp.c > 0.0) {
        return Err(Error::Config(format!("C must be positive, got {}", hp.c)));
    }
    if hp.epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    let y = check_training_set(data)?;
    let features: Vec<FeatureVector> = data.iter().map(|s| s.features).collect();
    let norm = fit_norm(&features)?;
    let x: Vec<[f64; FEATURE_COUNT + 1]> = features
        .iter()
        .map(|f| {
            let z = apply_norm(f, &norm);
            let mut row = [1.0; FEATURE_COUNT + 1];
            row[..FEATURE_COUNT].copy_from_slice(&z.values);
            row
        })
        .collect();

    let n = data.len();
    let weight_of = {
        let pos = y.iter().filter(|&&v| v > 0.0).count() as f64;
        let (wp, wn) = if hp.balanced {
            (n as f64 / (2.0 * pos), n as f64 / (2.0 * (n as f64 - pos)))
        } else {
            (1.0, 1.0)
        };
        move |label: f64| if label > 0.0 { wp } else { wn }
    };

    let lambda = 1.0 / (hp.c * n as f64);
    let mut w = [0.0; FEATURE_COUNT + 1];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut t = 0u64;
    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin = y[i] * dot(&w, &x[i]);
            let shrink = 1.0 - 1.0 / t as f64;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                let step = eta * y[i] * weight_of(y[i]);
                for (wj, xj) in w.iter_mut().zip(&x[i]) {
                    *wj += step * xj;
                }
            }
        }
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Training("weights diverged".into()));
    }
    Ok(ModelArtifact {
        format_version: FORMAT_VERSION,
        feature_fingerprint: feature_fingerprint(),
        weights: w[..FEATURE_COUNT].to_vec(),
        bias: w[FEATURE_COUNT],
        norm,
        hyperparams: hp.clone(),
    })
}

/// Mean hinge loss of `model` over `data`.
pub fn hinge_loss(model: &ModelArtifact, data: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in data {
        let y = class_sign(s)?;
        total += (1.0 - y * model.score(&s.features)?).max(0.0);
    }
    Ok(total / data.len().max(1) as f64)
}

/// k-nearest-neighbour majority vote in the training set's normalized space.
#[derive(Debug, Clone)]
pub struct KnnModel {
    norm: NormStats,
    points: Vec<[f64; FEATURE_COUNT]>,
    signs: Vec<f64>,
    k: usize,
}

impl KnnModel {
    pub fn fit(train: &[Sample], k: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Training("empty kNN training set".into()));
        }
        if k == 0 || k % 2 == 0 || k > train.len() {
            return Err(Error::Config(format!(
                "k must be odd and at most {}, got {k}",
                train.len()
            )));
        }
        let signs = train.iter().map(class_sign).collect::<Result<Vec<_>>>()?;
        for s in train {
            check_finite(&s.features)?;
        }
        let features: Vec<FeatureVector> = train.iter().map(|s| s.features).collect();
        let norm = if features.len() >= 2 {
            fit_norm(&features)?
        } else {
            NormStats {
                mean: vec![0.0; FEATURE_COUNT],
                scale: vec![1.0; FEATURE_COUNT],
                divisor: Default::default(),
            }
        };
        let points = features.iter().map(|f| apply_norm(f, &norm).values).collect();
        Ok(Self {
            norm,
            points,
            signs,
            k,
        })
    }
}

impl Classifier for KnnModel {
    /// Distance ties go to the earlier training sample.
    fn predict(&self, v: &FeatureVector) -> Result<Prediction> {
        check_finite(v)?;
        let z = apply_norm(v, &self.norm).values;
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d: f64 = p.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, i)
            })
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let votes: f64 = dist[..self.k].iter().map(|&(_, i)| self.signs[i]).sum();
        Ok(Prediction::from_score(votes / self.k as f64))
    }
}

pub fn knn_baseline(train: &[Sample], v: &FeatureVector, k: usize) -> Result<Prediction> {
    KnnModel::fit(train, k)?.predict(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(x0: f64, x1: f64, label: Label) -> Sample {
        let mut v = [0.0; FEATURE_COUNT];
        v[0] = x0;
        v[1] = x1;
        Sample::new(FeatureVector::new(v), label, "s")
    }

    fn toy() -> Vec<Sample> {
        (0..10)
            .flat_map(|_| [sample(0.0, 0.0, Label::Nsr), sample(1.0, 1.0, Label::Af)])
            .collect()
    }

    fn swapped(data: &[Sample]) -> Vec<Sample> {
        data.iter()
            .map(|s| {
                let label = if s.label == Label::Af { Label::Nsr } else { Label::Af };
                Sample { label, ..s.clone() }
            })
            .collect()
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let data = toy();
        let m = train_linear(&data, &Hyperparams::default()).unwrap();
        for s in &data {
            assert_eq!(m.predict(&s.features).unwrap().label, s.label);
        }
    }

    #[test]
    fn swapping_labels_negates_weights() {
        let data = toy();
        let hp = Hyperparams::default();
        let a = train_linear(&data, &hp).unwrap();
        let b = train_linear(&swapped(&data), &hp).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x + y).abs() < 1e-6);
        }
        assert!((a.bias + b.bias).abs() < 1e-6);
    }

    #[test]
    fn hinge_loss_not_worse_than_zero_model() {
        let data = toy();
        let m = train_linear(&data, &Hyperparams::default()).unwrap();
        let zero = ModelArtifact::from_parts([0.0; FEATURE_COUNT], 0.0, m.norm.clone());
        assert!(hinge_loss(&m, &data).unwrap() <= hinge_loss(&zero, &data).unwrap());
    }

    #[test]
    fn single_class_rejected() {
        let data: Vec<Sample> = (0..4).map(|i| sample(i as f64, 0.0, Label::Af)).collect();
        assert!(matches!(
            train_linear(&data, &Hyperparams::default()),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn nan_feature_rejected() {
        let mut data = toy();
        data[3].features.values[5] = f64::NAN;
        assert!(matches!(
            train_linear(&data, &Hyperparams::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn bias_only_models_follow_tie_rule() {
        let norm = fit_norm(&toy().iter().map(|s| s.features).collect::<Vec<_>>()).unwrap();
        let v = toy()[0].features;
        let pos = ModelArtifact::from_parts([0.0; FEATURE_COUNT], 1.0, norm.clone());
        assert_eq!(pos.predict(&v).unwrap().label, Label::Af);
        let tie = ModelArtifact::from_parts([0.0; FEATURE_COUNT], 0.0, norm);
        let p = tie.predict(&v).unwrap();
        assert_eq!((p.label, p.score), (Label::Nsr, 0.0));
    }

    #[test]
    fn constant_training_column_is_ignored() {
        let data = toy();
        let m = train_linear(&data, &Hyperparams::default()).unwrap();
        let mut v = data[1].features;
        let base = m.score(&v).unwrap();
        v.values[7] = 1e12;
        assert_eq!(m.score(&v).unwrap(), base);
    }

    #[test]
    fn fingerprint_mismatch_is_incompatible() {
        let mut m = train_linear(&toy(), &Hyperparams::default()).unwrap();
        m.feature_fingerprint = "0000".into();
        assert!(matches!(
            m.predict(&toy()[0].features),
            Err(Error::Incompatible(_))
        ));
        assert!(matches!(
            ModelArtifact::from_json(&m.to_json().unwrap()),
            Err(Error::Incompatible(_))
        ));
    }

    #[test]
    fn unknown_format_version_rejected() {
        let mut m = train_linear(&toy(), &Hyperparams::default()).unwrap();
        m.format_version = 99;
        assert!(matches!(
            ModelArtifact::from_json(&m.to_json().unwrap()),
            Err(Error::Model(_))
        ));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = train_linear(&toy(), &Hyperparams::default()).unwrap();
        let back = ModelArtifact::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(m.to_json().unwrap().contains("\"C\": 1.0"));
    }

    #[test]
    fn knn_votes() {
        let train = vec![
            sample(0.0, 0.0, Label::Nsr),
            sample(1.0, 0.0, Label::Af),
            sample(1.1, 0.0, Label::Af),
            sample(5.0, 0.0, Label::Nsr),
            sample(6.0, 0.0, Label::Nsr),
        ];
        let p = knn_baseline(&train, &train[0].features, 1).unwrap();
        assert_eq!(p.label, Label::Nsr);
        let p = knn_baseline(&train, &sample(0.9, 0.0, Label::Nsr).features, 3).unwrap();
        assert_eq!(p.label, Label::Af);
        assert!((p.score - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn knn_distance_tie_prefers_earlier_sample() {
        let train = vec![
            sample(-1.0, 0.0, Label::Af),
            sample(1.0, 0.0, Label::Nsr),
        ];
        let p = knn_baseline(&train, &sample(0.0, 0.0, Label::Nsr).features, 1).unwrap();
        assert_eq!(p.label, Label::Af);
        let rev: Vec<Sample> = train.into_iter().rev().collect();
        let p = knn_baseline(&rev, &sample(0.0, 0.0, Label::Nsr).features, 1).unwrap();
        assert_eq!(p.label, Label::Nsr);
    }

    #[test]
    fn knn_argument_errors() {
        let train = toy();
        assert!(knn_baseline(&[], &train[0].features, 1).is_err());
        assert!(knn_baseline(&train, &train[0].features, 2).is_err());
        assert!(knn_baseline(&train, &train[0].features, 21).is_err());
    }
}
