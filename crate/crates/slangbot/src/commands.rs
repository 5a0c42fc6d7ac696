//! Implementations of the command-line subcommands. Each writes its human
//! readable output to a caller-supplied writer so tests can capture it.

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use slangbot_core::classifier::{evaluate, train, IntentModel, TrainingConfig, TrainingLog};
use slangbot_core::corpus::{Corpus, SplitSpec};
use slangbot_core::features::FeatureSpec;
use slangbot_core::metrics::EvalReport;
use slangbot_core::rag::{KnowledgeBase, DEFAULT_MAX_CHUNK_WORDS};
use slangbot_core::router::{Clock, Route, Session};
use slangbot_core::text::Lexicon;

use crate::compare::{compare_script, render_markdown};
use crate::corpus_io::{load_corpus, load_lexicon, save_corpus};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::{kb_io, model_io};

fn out_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn lexicon_or_empty(path: Option<&Path>) -> Result<Lexicon> {
    path.map(load_lexicon).transpose().map(Option::unwrap_or_default)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Validates and normalizes a raw corpus, then writes it back as JSONL.
pub fn cmd_prepare(input: &Path, lexicon: Option<&Path>, output: &Path, out: &mut dyn Write) -> Result<Corpus> {
    let lexicon = lexicon_or_empty(lexicon)?;
    let corpus = load_corpus(input, &lexicon)?;
    if corpus.is_empty() {
        writeln!(out, "warning: {} contains no utterances", input.display()).map_err(out_err)?;
    }
    save_corpus(output, &corpus)?;
    writeln!(out, "wrote {} utterances to {}", corpus.len(), output.display()).map_err(out_err)?;
    for (label, count) in corpus.class_histogram() {
        writeln!(out, "  {label:<12} {count}").map_err(out_err)?;
    }
    Ok(corpus)
}

/// Outcome of the training pipeline.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: IntentModel,
    pub log: TrainingLog,
    pub train: Corpus,
    pub val: Corpus,
    pub report: EvalReport,
}

/// Stratified split, rebalancing of the training partition, training and
/// evaluation on the held-out partition.
pub fn train_pipeline(
    corpus: &Corpus,
    config: &TrainingConfig,
    split: &SplitSpec,
    features: &FeatureSpec,
) -> Result<TrainOutcome> {
    let (train_part, val) = corpus.split(split).map_err(Error::validation)?;
    let balanced = train_part.rebalance(config.seed).map_err(Error::validation)?;
    let (model, log) = train(&balanced, &val, config, features).map_err(Error::validation)?;
    let report = evaluate(&model, &val).map_err(Error::validation)?;
    Ok(TrainOutcome { model, log, train: balanced, val, report })
}

pub fn run_header(config: &TrainingConfig) -> String {
    format!(
        "learning_rate={} batch_size={} epochs={} weight_decay={} early_stop_patience={} seed={} max_sequence_length={}",
        config.learning_rate,
        config.batch_size,
        config.epochs,
        config.weight_decay,
        config.early_stop_patience,
        config.seed,
        config.max_sequence_length,
    )
}

pub struct TrainPaths<'a> {
    pub corpus: &'a Path,
    pub lexicon: Option<&'a Path>,
    pub model: &'a Path,
    pub log: &'a Path,
}

pub fn cmd_train(
    paths: &TrainPaths<'_>,
    config: &TrainingConfig,
    split: &SplitSpec,
    out: &mut dyn Write,
) -> Result<TrainOutcome> {
    config.validate().map_err(Error::validation)?;
    let lexicon = lexicon_or_empty(paths.lexicon)?;
    let corpus = load_corpus(paths.corpus, &lexicon)?;
    writeln!(out, "{}", run_header(config)).map_err(out_err)?;
    let features = FeatureSpec { lexicon, ..FeatureSpec::default() };
    let outcome = train_pipeline(&corpus, config, split, &features)?;
    for e in &outcome.log.epochs {
        writeln!(out, "epoch {} train_loss={:.6} val_loss={:.6}", e.epoch, e.train_loss, e.val_loss)
            .map_err(out_err)?;
    }
    writeln!(
        out,
        "best epoch {} val accuracy={:.4} weighted_f1={:.4}",
        outcome.log.best_epoch, outcome.report.accuracy, outcome.report.weighted_f1
    )
    .map_err(out_err)?;
    model_io::save_model(&outcome.model, paths.model)?;
    write_text(paths.log, &outcome.log.to_jsonl())?;
    Ok(outcome)
}

/// The fields emitted by `eval --json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub loss: f64,
}

impl From<&EvalReport> for EvalSummary {
    fn from(r: &EvalReport) -> Self {
        Self {
            accuracy: r.accuracy,
            weighted_f1: r.weighted_f1,
            weighted_precision: r.weighted_precision,
            weighted_recall: r.weighted_recall,
            loss: r.loss,
        }
    }
}

pub fn render_report(report: &EvalReport) -> String {
    let mut s = format!("{:<14} {:>9} {:>9} {:>9} {:>8}\n", "label", "precision", "recall", "f1", "support");
    for c in &report.per_class {
        s.push_str(&format!(
            "{:<14} {:>9.4} {:>9.4} {:>9.4} {:>8}\n",
            c.label, c.precision, c.recall, c.f1, c.support
        ));
    }
    s.push_str(&format!(
        "accuracy={:.4} weighted_precision={:.4} weighted_recall={:.4} weighted_f1={:.4} loss={:.6}\n",
        report.accuracy, report.weighted_precision, report.weighted_recall, report.weighted_f1, report.loss
    ));
    s.push_str("confusion matrix (rows gold, columns predicted):\n");
    for (label, row) in report.labels.iter().zip(&report.confusion_matrix) {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>4}")).collect();
        s.push_str(&format!("{:<14}{}\n", label.as_str(), cells.join("")));
    }
    s
}

pub fn cmd_eval(
    model: &Path,
    corpus: &Path,
    lexicon: Option<&Path>,
    json: bool,
    out: &mut dyn Write,
) -> Result<EvalReport> {
    let model = model_io::load_model(model)?;
    let lexicon = lexicon_or_empty(lexicon)?;
    let corpus = load_corpus(corpus, &lexicon)?;
    let report = evaluate(&model, &corpus).map_err(Error::validation)?;
    if json {
        let summary = serde_json::to_string(&EvalSummary::from(&report)).expect("summary serializes");
        writeln!(out, "{summary}").map_err(out_err)?;
    } else {
        write!(out, "{}", render_report(&report)).map_err(out_err)?;
    }
    Ok(report)
}

pub fn cmd_ingest(docs: &Path, output: &Path, max_chunk_words: Option<usize>, out: &mut dyn Write) -> Result<KnowledgeBase> {
    let documents = kb_io::load_documents(docs)?;
    if documents.is_empty() {
        writeln!(out, "warning: no documents found in {}", docs.display()).map_err(out_err)?;
    }
    let kb = KnowledgeBase::ingest(&documents, max_chunk_words.unwrap_or(DEFAULT_MAX_CHUNK_WORDS))
        .map_err(Error::validation)?;
    kb_io::save_kb(&kb, output)?;
    writeln!(out, "ingested {} documents into {} chunks", documents.len(), kb.len()).map_err(out_err)?;
    Ok(kb)
}

/// Line-oriented chat loop. Returns the session so callers can inspect it.
pub fn cmd_chat(
    engine: &Engine,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    verbose: bool,
    clock: &dyn Clock,
) -> Result<Session> {
    let mut session = Session::new("repl", clock.now_millis());
    let mut line = String::new();
    loop {
        write!(out, "> ").map_err(out_err)?;
        out.flush().map_err(out_err)?;
        line.clear();
        if input.read_line(&mut line).map_err(|e| Error::io("<stdin>", e))? == 0 {
            break;
        }
        let text = line.trim_end_matches(['\n', '\r']);
        let plan = engine.respond(&mut session, text, clock);
        if verbose {
            let confidence = plan.confidence.map(|c| format!("{c:.3}")).unwrap_or_else(|| "-".into());
            let intent = plan.intent.as_ref().map(|i| i.as_str()).unwrap_or("-");
            writeln!(out, "[{} intent={intent} confidence={confidence}]", plan.route).map_err(out_err)?;
        }
        writeln!(out, "{}", plan.reply).map_err(out_err)?;
        if plan.route == Route::Exit {
            break;
        }
    }
    Ok(session)
}

pub fn cmd_compare(engine: &Engine, script: &Path, output: Option<&PathBuf>, out: &mut dyn Write, clock: &dyn Clock) -> Result<String> {
    let text = fs::read_to_string(script).map_err(|e| Error::io(script, e))?;
    let markdown = render_markdown(&compare_script(engine, &text, clock));
    match output {
        Some(path) => write_text(path, &markdown)?,
        None => write!(out, "{markdown}").map_err(out_err)?,
    }
    Ok(markdown)
}
