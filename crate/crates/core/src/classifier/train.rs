use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::softmax::{Example, SoftmaxRegression};
use super::{IntentModel, LabelCodec, REFERENCE_BACKEND};
use crate::corpus::{Corpus, IntentLabel};
use crate::features::{featurize, FeatureSpec};

/// Optimization settings. Defaults are those of the reference backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    /// Evaluations without improvement tolerated before stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
    pub max_sequence_length: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            batch_size: 4,
            epochs: 3,
            weight_decay: 0.1,
            early_stop_patience: 2,
            seed: 42,
            max_sequence_length: 512,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.batch_size >= 1
            && self.epochs >= 1
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite()
            && self.early_stop_patience >= 1
            && self.max_sequence_length >= 1;
        if ok {
            Ok(())
        } else {
            Err(TrainError::InvalidConfig)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("training configuration has a non-positive or non-finite value")]
    InvalidConfig,
    #[error("feature spec dimension must be a power of two")]
    InvalidFeatureSpec,
    #[error("{0} corpus is empty")]
    EmptyCorpus(&'static str),
    #[error("validation label {0} does not occur in the training data")]
    UnseenLabel(IntentLabel),
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
}

/// Patience-based early stopping on a loss that should decrease.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience: patience.max(1), best: None, stale: 0 }
    }

    /// Records the loss of `epoch`. Only a strict decrease counts as an
    /// improvement.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> Observation {
        let improved = self.best.is_none_or(|(_, best)| loss < best);
        if improved {
            self.best = Some((epoch, loss));
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        Observation { improved, stop: self.stale >= self.patience }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Set on the epoch that triggered early stopping.
    pub stopped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch of the returned checkpoint.
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("epoch record serializes"));
            out.push('\n');
        }
        out
    }
}

fn examples(corpus: &Corpus, codec: &LabelCodec, spec: &FeatureSpec) -> Vec<Example> {
    corpus
        .utterances
        .iter()
        .map(|u| Example {
            features: featurize(&u.normalized_text, spec),
            label: codec.index_of(&u.intent).expect("label checked against codec"),
        })
        .collect()
}

/// Trains the reference backend and returns the checkpoint with the lowest
/// validation loss together with the per-epoch log.
pub fn train(
    train: &Corpus,
    val: &Corpus,
    config: &TrainingConfig,
    features: &FeatureSpec,
) -> Result<(IntentModel, TrainingLog), TrainError> {
    let prepared = Prepared::new(train, val, config, features)?;
    let val_examples = prepared.val.clone();
    prepared.run(config, |_, model| model.data_loss(&val_examples))
}

/// Like [`train`], but the validation loss of each epoch is supplied by
/// `probe` instead of being computed on `val`.
pub fn train_with_probe<P>(
    train: &Corpus,
    val: &Corpus,
    config: &TrainingConfig,
    features: &FeatureSpec,
    probe: P,
) -> Result<(IntentModel, TrainingLog), TrainError>
where
    P: FnMut(usize, &SoftmaxRegression) -> f64,
{
    Prepared::new(train, val, config, features)?.run(config, probe)
}

struct Prepared {
    codec: LabelCodec,
    spec: FeatureSpec,
    train: Vec<Example>,
    val: Vec<Example>,
}

impl Prepared {
    fn new(
        train: &Corpus,
        val: &Corpus,
        config: &TrainingConfig,
        features: &FeatureSpec,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        let spec = FeatureSpec { max_features: config.max_sequence_length, ..features.clone() };
        if !spec.is_valid() {
            return Err(TrainError::InvalidFeatureSpec);
        }
        if train.is_empty() {
            return Err(TrainError::EmptyCorpus("training"));
        }
        if val.is_empty() {
            return Err(TrainError::EmptyCorpus("validation"));
        }
        let mut labels: Vec<IntentLabel> = train.labels.labels().to_vec();
        for u in &train.utterances {
            if !labels.contains(&u.intent) {
                labels.push(u.intent.clone());
            }
        }
        let seen: BTreeSet<&IntentLabel> = train.utterances.iter().map(|u| &u.intent).collect();
        if let Some(u) = val.utterances.iter().find(|u| !seen.contains(&u.intent)) {
            return Err(TrainError::UnseenLabel(u.intent.clone()));
        }
        let codec = LabelCodec::new(labels).expect("labels deduplicated above");
        let train_examples = examples(train, &codec, &spec);
        let val_examples = examples(val, &codec, &spec);
        Ok(Self { codec, spec, train: train_examples, val: val_examples })
    }

    fn run<P>(self, config: &TrainingConfig, mut probe: P) -> Result<(IntentModel, TrainingLog), TrainError>
    where
        P: FnMut(usize, &SoftmaxRegression) -> f64,
    {
        let mut model = SoftmaxRegression::zeros(self.codec.len(), self.spec.dimension as usize);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        let mut stopper = EarlyStopping::new(config.early_stop_patience);
        let mut best = model.clone();
        let mut log = Vec::new();
        let mut batch = Vec::with_capacity(config.batch_size);

        for epoch in 1..=config.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(config.batch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| self.train[i].clone()));
                model.step(&batch, config.learning_rate, config.weight_decay);
            }
            let train_loss = model.data_loss(&self.train);
            let val_loss = probe(epoch, &model);
            if !train_loss.is_finite() || !val_loss.is_finite() || !model.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch });
            }
            let obs = stopper.observe(epoch, val_loss);
            if obs.improved {
                best = model.clone();
            }
            log.push(EpochRecord { epoch, train_loss, val_loss, stopped: obs.stop });
            if obs.stop {
                break;
            }
        }

        let best_epoch = stopper.best().map(|(e, _)| e).unwrap_or(0);
        let model = IntentModel::new(self.codec, REFERENCE_BACKEND, self.spec, best);
        Ok((model, TrainingLog { epochs: log, best_epoch }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stop_rule_on_scripted_losses() {
        let mut s = EarlyStopping::new(2);
        let seq = [0.9, 0.8, 0.85, 0.86];
        let obs: Vec<_> = seq.iter().enumerate().map(|(i, &l)| s.observe(i + 1, l)).collect();
        assert!(obs[..3].iter().all(|o| !o.stop));
        assert!(obs[3].stop);
        assert_eq!(s.best(), Some((2, 0.8)));
    }

    #[test]
    fn equal_loss_is_not_an_improvement() {
        let mut s = EarlyStopping::new(1);
        s.observe(1, 0.5);
        assert_eq!(s.observe(2, 0.5), Observation { improved: false, stop: true });
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        for bad in [
            TrainingConfig { batch_size: 0, ..TrainingConfig::default() },
            TrainingConfig { early_stop_patience: 0, ..TrainingConfig::default() },
            TrainingConfig { learning_rate: f64::NAN, ..TrainingConfig::default() },
        ] {
            assert_eq!(bad.validate(), Err(TrainError::InvalidConfig));
        }
    }
}
