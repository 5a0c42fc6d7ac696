//! Intent classification: label codec, the hashed n-gram softmax reference
//! backend, training with early stopping, prediction and evaluation.

mod softmax;
mod train;

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use softmax::{cross_entropy, softmax, Example, SoftmaxRegression};
pub use train::{
    train, train_with_probe, EarlyStopping, EpochRecord, Observation, TrainError, TrainingConfig,
    TrainingLog,
};

use crate::corpus::{Corpus, DuplicateLabel, IntentLabel, LabelSet};
use crate::features::{featurize, FeatureSpec};
use crate::metrics::EvalReport;

/// Identifier stored with models trained by the built-in backend.
pub const REFERENCE_BACKEND: &str = "reference";

/// Bijection between intent labels and dense indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<IntentLabel>", into = "Vec<IntentLabel>")]
pub struct LabelCodec {
    labels: LabelSet,
}

impl LabelCodec {
    pub fn new(labels: Vec<IntentLabel>) -> Result<Self, DuplicateLabel> {
        Ok(Self { labels: LabelSet::new(labels)? })
    }

    pub fn index_of(&self, label: &IntentLabel) -> Option<usize> {
        self.labels.labels().iter().position(|l| l == label)
    }

    pub fn label_of(&self, index: usize) -> Option<&IntentLabel> {
        self.labels.labels().get(index)
    }

    pub fn labels(&self) -> &[IntentLabel] {
        self.labels.labels()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl TryFrom<Vec<IntentLabel>> for LabelCodec {
    type Error = DuplicateLabel;
    fn try_from(v: Vec<IntentLabel>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<LabelCodec> for Vec<IntentLabel> {
    fn from(c: LabelCodec) -> Self {
        c.labels.into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentPrediction {
    pub label: IntentLabel,
    pub confidence: f64,
    pub distribution: Vec<f64>,
}

impl IntentPrediction {
    /// Picks the argmax of `distribution`, lowest index on ties.
    pub fn from_distribution(codec: &LabelCodec, distribution: Vec<f64>) -> Self {
        let mut best = 0;
        for (i, &p) in distribution.iter().enumerate() {
            if p > distribution[best] {
                best = i;
            }
        }
        Self {
            label: codec.label_of(best).cloned().expect("distribution matches codec"),
            confidence: distribution[best],
            distribution,
        }
    }
}

/// Anything that can map text to an intent distribution. The router only
/// depends on this trait, so other backends can be plugged in.
pub trait IntentClassifier {
    fn codec(&self) -> &LabelCodec;
    fn backend_id(&self) -> &str;
    /// Unnormalized per-label scores, in codec order.
    fn scores(&self, text: &str) -> Vec<f64>;

    fn predict(&self, text: &str) -> IntentPrediction {
        let mut dist = self.scores(text);
        softmax(&mut dist);
        IntentPrediction::from_distribution(self.codec(), dist)
    }
}

/// A trained reference-backend model.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentModel {
    pub codec: LabelCodec,
    pub backend_id: String,
    pub feature_spec: FeatureSpec,
    pub parameters: SoftmaxRegression,
}

impl IntentModel {
    pub fn new(
        codec: LabelCodec,
        backend_id: &str,
        feature_spec: FeatureSpec,
        parameters: SoftmaxRegression,
    ) -> Self {
        Self { codec, backend_id: backend_id.to_string(), feature_spec, parameters }
    }

    /// All-zero parameters: every input gets the uniform distribution.
    pub fn zeroed(codec: LabelCodec, feature_spec: FeatureSpec) -> Self {
        let params = SoftmaxRegression::zeros(codec.len(), feature_spec.dimension as usize);
        Self::new(codec, REFERENCE_BACKEND, feature_spec, params)
    }
}

impl IntentClassifier for IntentModel {
    fn codec(&self) -> &LabelCodec {
        &self.codec
    }

    fn backend_id(&self) -> &str {
        &self.backend_id
    }

    fn scores(&self, text: &str) -> Vec<f64> {
        self.parameters.scores(&featurize(text, &self.feature_spec))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("cannot evaluate on an empty corpus")]
    Empty,
    #[error("gold label {0} is unknown to the model")]
    UnknownLabel(IntentLabel),
}

/// Scores `model` on `data`; the loss is the mean cross-entropy of the gold
/// labels.
pub fn evaluate<C: IntentClassifier + ?Sized>(model: &C, data: &Corpus) -> Result<EvalReport, EvalError> {
    if data.is_empty() {
        return Err(EvalError::Empty);
    }
    let codec = model.codec();
    let mut gold = Vec::with_capacity(data.len());
    let mut pred = Vec::with_capacity(data.len());
    let mut loss = 0.0;
    for u in &data.utterances {
        let g = codec.index_of(&u.intent).ok_or_else(|| EvalError::UnknownLabel(u.intent.clone()))?;
        let scores = model.scores(&u.normalized_text);
        loss += cross_entropy(&scores, g);
        let mut dist = scores;
        softmax(&mut dist);
        let p = IntentPrediction::from_distribution(codec, dist);
        gold.push(g);
        pred.push(codec.index_of(&p.label).expect("predicted label is in codec"));
    }
    let loss = loss / data.len() as f64;
    Ok(EvalReport::from_predictions(codec.labels().to_vec(), &gold, &pred, loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DEFAULT_INTENTS;

    fn seven() -> LabelCodec {
        LabelCodec::new(DEFAULT_INTENTS.iter().map(|s| IntentLabel::from(*s)).collect()).unwrap()
    }

    #[test]
    fn codec_is_bijective() {
        let c = seven();
        for (i, l) in c.labels().iter().enumerate() {
            assert_eq!(c.index_of(l), Some(i));
            assert_eq!(c.label_of(i), Some(l));
        }
        assert_eq!(c.index_of(&IntentLabel::from("weather")), None);
        assert!(LabelCodec::new(alloc::vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn zeroed_model_is_uniform_and_ties_go_to_lowest_index() {
        let m = IntentModel::zeroed(seven(), FeatureSpec::default());
        for text in ["wadii", "", "pace inoita mari?"] {
            let p = m.predict(text);
            assert!((p.confidence - 1.0 / 7.0).abs() < 1e-12);
            assert_eq!(p.label.as_str(), "greeting");
            assert!((p.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn evaluate_rejects_empty_and_unknown() {
        let m = IntentModel::zeroed(seven(), FeatureSpec::default());
        assert_eq!(evaluate(&m, &Corpus::default()), Err(EvalError::Empty));
    }
}
