use slangbot_core::classifier::{evaluate, train, IntentClassifier, IntentModel, LabelCodec, TrainingConfig};
use slangbot_core::corpus::{Corpus, DialogueAct, IntentLabel, LabelSet, Sentiment, Tone, Utterance, DEFAULT_INTENTS};
use slangbot_core::features::{featurize, FeatureSpec, SparseVector};
use slangbot_core::metrics::EvalReport;

fn utt(id: &str, text: &str, intent: &str) -> Utterance {
    Utterance {
        id: id.into(),
        raw_text: text.into(),
        normalized_text: text.into(),
        intent: IntentLabel::new(intent),
        sentiment: Sentiment::Neutral,
        dialogue_act: DialogueAct::Statement,
        code_mix: Vec::new(),
        tone: Tone::Friendly,
    }
}

fn corpus(rows: &[(&str, &str)]) -> Corpus {
    let utterances: Vec<_> = rows.iter().enumerate().map(|(i, (t, l))| utt(&format!("u{i}"), t, l)).collect();
    let labels = LabelSet::inferred(utterances.iter().map(|u| &u.intent));
    Corpus::new(labels, utterances)
}

fn centroid(vs: &[SparseVector], dim: usize) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    for v in vs {
        for &(i, x) in v.entries() {
            c[i as usize] += x / vs.len() as f64;
        }
    }
    c
}

fn dist2(v: &SparseVector, c: &[f64]) -> f64 {
    let dense = v.to_dense(c.len());
    dense.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[test]
fn separable_toy_reaches_full_validation_accuracy() {
    let a = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet"];
    let b = ["kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango"];
    let rows: Vec<(&str, &str)> = a.iter().map(|w| (*w, "x")).chain(b.iter().map(|w| (*w, "y"))).collect();
    let data = corpus(&rows);
    let spec = FeatureSpec::default();
    let dim = spec.dimension as usize;

    let va: Vec<_> = a.iter().map(|w| featurize(w, &spec)).collect();
    let vb: Vec<_> = b.iter().map(|w| featurize(w, &spec)).collect();
    let (ca, cb) = (centroid(&va, dim), centroid(&vb, dim));
    assert!(va.iter().all(|v| dist2(v, &ca) < dist2(v, &cb)));
    assert!(vb.iter().all(|v| dist2(v, &cb) < dist2(v, &ca)));

    let config = TrainingConfig { epochs: 20, early_stop_patience: 20, ..TrainingConfig::default() };
    let (model, log) = train(&data, &data, &config, &spec).unwrap();
    assert_eq!(evaluate(&model, &data).unwrap().accuracy, 1.0);
    assert_eq!(log.epochs.len(), 20);

    let (again, _) = train(&data, &data, &config, &spec).unwrap();
    assert_eq!(again, model);
}

#[test]
fn zero_model_is_uniform_over_seven_labels() {
    let codec = LabelCodec::new(DEFAULT_INTENTS.iter().map(|&l| IntentLabel::new(l)).collect()).unwrap();
    let model = IntentModel::zeroed(codec, FeatureSpec::default());
    for text in ["wadii", "", "mune ma program api pa Pace"] {
        let p = model.predict(text);
        assert!((p.confidence - 1.0 / 7.0).abs() < 1e-12);
        assert_eq!(p.label.as_str(), "greeting");
        assert!((p.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn hand_computed_weighted_scores() {
    let labels = vec![IntentLabel::new("a"), IntentLabel::new("b")];
    let r = EvalReport::from_predictions(labels, &[0, 0, 1], &[0, 1, 1], 0.0);
    assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-12);
    assert!((r.weighted_f1 - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(r.confusion_matrix, vec![vec![1, 1], vec![0, 1]]);
}

#[test]
fn validation_label_missing_from_training_is_an_error() {
    let train_set = corpus(&[("wadii", "greeting"), ("bye", "farewell")]);
    let val = corpus(&[("mari", "finance")]);
    assert!(train(&train_set, &val, &TrainingConfig::default(), &FeatureSpec::default()).is_err());
}
