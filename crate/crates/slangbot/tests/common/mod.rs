#![allow(dead_code)]

use std::path::{Path, PathBuf};

use slangbot::cli::{split_spec, training_config};
use slangbot::commands::train_pipeline;
use slangbot::config::Settings;
use slangbot::corpus_io::{load_corpus, load_lexicon};
use slangbot::engine::{load_policy, Engine};
use slangbot::kb_io;
use slangbot_core::features::FeatureSpec;
use slangbot_core::rag::{KnowledgeBase, DEFAULT_MAX_CHUNK_WORDS};

pub fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn script() -> String {
    std::fs::read_to_string(data("dialogue_script.txt")).unwrap()
}

/// The shipped policy, the shipped knowledge base and a model trained on the
/// mini-corpus with default settings.
pub fn fixture_engine() -> Engine {
    let lexicon = load_lexicon(data("lexicon.tsv")).unwrap();
    let corpus = load_corpus(data("mini_corpus.jsonl"), &lexicon).unwrap();
    let settings = Settings::default();
    let features = FeatureSpec { lexicon, ..FeatureSpec::default() };
    let outcome = train_pipeline(&corpus, &training_config(&settings), &split_spec(&settings), &features).unwrap();
    let docs = kb_io::load_documents(data("kb")).unwrap();
    let kb = KnowledgeBase::ingest(&docs, DEFAULT_MAX_CHUNK_WORDS).unwrap();
    Engine::new(outcome.model, load_policy(data("policy.json")).unwrap(), kb)
}
