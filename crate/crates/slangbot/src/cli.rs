//! Command-line definition and dispatch.

use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use slangbot_core::classifier::TrainingConfig;
use slangbot_core::corpus::SplitSpec;

use crate::commands::{self, TrainPaths};
use crate::config::Settings;
use crate::engine::{Engine, SystemClock};
use crate::error::{Error, Result};
use crate::service::{self, ServiceConfig, DEFAULT_BIND, DEFAULT_MAX_REQUEST_BYTES, DEFAULT_SESSION_TTL_SECONDS};

#[derive(Debug, Parser)]
#[command(name = "slangbot", version, about = "Slang-aware hybrid Shona-English chatbot")]
pub struct Cli {
    /// Random seed for splitting, rebalancing and shuffling.
    #[arg(long, global = true, env = "SLANGBOT_SEED")]
    pub seed: Option<u64>,
    /// Minimum classifier confidence before a turn falls back.
    #[arg(long, global = true, env = "SLANGBOT_THRESHOLD")]
    pub threshold: Option<f64>,
    /// Number of knowledge-base chunks retrieved per query.
    #[arg(long, global = true, env = "SLANGBOT_K")]
    pub k: Option<usize>,
    /// JSON file with default settings; flags and environment override it.
    #[arg(long, global = true, env = "SLANGBOT_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and normalize a raw corpus and report its class histogram.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, env = "SLANGBOT_LEXICON")]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Split, rebalance and train the intent classifier.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, env = "SLANGBOT_LEXICON")]
        lexicon: Option<PathBuf>,
        #[arg(long = "model-out")]
        model_out: PathBuf,
        /// Training log destination (JSON lines).
        #[arg(long = "log-out")]
        log_out: PathBuf,
        #[command(flatten)]
        hyper: HyperParams,
    },
    /// Evaluate a model on a labelled corpus.
    Eval {
        #[arg(long, env = "SLANGBOT_MODEL")]
        model: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, env = "SLANGBOT_LEXICON")]
        lexicon: Option<PathBuf>,
        /// Print only the JSON summary.
        #[arg(long)]
        json: bool,
    },
    /// Chunk, embed and persist a document collection.
    Ingest {
        #[arg(long)]
        docs: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long = "max-chunk-words")]
        max_chunk_words: Option<usize>,
    },
    /// Interactive chat on standard input.
    Chat {
        #[command(flatten)]
        engine: EngineArgs,
        /// Show route, intent and confidence for every turn.
        #[arg(long)]
        verbose: bool,
    },
    /// Serve the HTTP chat API.
    Serve {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, env = "SLANGBOT_BIND")]
        bind: Option<String>,
        #[arg(long = "session-ttl-seconds", env = "SLANGBOT_SESSION_TTL_SECONDS")]
        session_ttl_seconds: Option<u64>,
        #[arg(long = "max-request-bytes", env = "SLANGBOT_MAX_REQUEST_BYTES")]
        max_request_bytes: Option<usize>,
        /// Append-only turn log.
        #[arg(long, env = "SLANGBOT_LOG")]
        log: Option<PathBuf>,
    },
    /// Run a script through the hybrid router and a retrieval-only baseline.
    Compare {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        script: PathBuf,
        /// Write the Markdown transcript here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    #[arg(long, env = "SLANGBOT_MODEL")]
    pub model: Option<PathBuf>,
    #[arg(long, env = "SLANGBOT_POLICY")]
    pub policy: Option<PathBuf>,
    #[arg(long, env = "SLANGBOT_KB")]
    pub kb: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HyperParams {
    #[arg(long = "learning-rate")]
    pub learning_rate: Option<f64>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "weight-decay")]
    pub weight_decay: Option<f64>,
    #[arg(long = "early-stop-patience")]
    pub early_stop_patience: Option<usize>,
    #[arg(long = "max-sequence-length")]
    pub max_sequence_length: Option<usize>,
    #[arg(long = "train-fraction")]
    pub train_fraction: Option<f64>,
}

impl Cli {
    /// Settings given on the command line or through the environment.
    pub fn overrides(&self) -> Settings {
        let mut s = Settings { seed: self.seed, threshold: self.threshold, k: self.k, ..Settings::default() };
        match &self.command {
            Command::Prepare { lexicon, .. } | Command::Train { lexicon, .. } => s.lexicon = lexicon.clone(),
            Command::Eval { model, lexicon, .. } => {
                s.model = model.clone();
                s.lexicon = lexicon.clone();
            }
            Command::Ingest { .. } => {}
            Command::Chat { engine, .. } | Command::Compare { engine, .. } => engine.apply(&mut s),
            Command::Serve { engine, bind, session_ttl_seconds, max_request_bytes, log } => {
                engine.apply(&mut s);
                s.bind = bind.clone();
                s.session_ttl_seconds = *session_ttl_seconds;
                s.max_request_bytes = *max_request_bytes;
                s.log = log.clone();
            }
        }
        if let Command::Train { hyper, .. } = &self.command {
            s.learning_rate = hyper.learning_rate;
            s.batch_size = hyper.batch_size;
            s.epochs = hyper.epochs;
            s.weight_decay = hyper.weight_decay;
            s.early_stop_patience = hyper.early_stop_patience;
            s.max_sequence_length = hyper.max_sequence_length;
            s.train_fraction = hyper.train_fraction;
        }
        s
    }

    /// Flags and environment layered over the config file, if any.
    pub fn settings(&self) -> Result<Settings> {
        let file = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        Ok(self.overrides().over(file))
    }
}

impl EngineArgs {
    fn apply(&self, s: &mut Settings) {
        s.model = self.model.clone();
        s.policy = self.policy.clone();
        s.kb = self.kb.clone();
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value.as_deref().ok_or_else(|| Error::validation(format!("--{flag} is required (flag, environment or config file)")))
}

pub fn training_config(s: &Settings) -> TrainingConfig {
    let d = TrainingConfig::default();
    TrainingConfig {
        learning_rate: s.learning_rate.unwrap_or(d.learning_rate),
        batch_size: s.batch_size.unwrap_or(d.batch_size),
        epochs: s.epochs.unwrap_or(d.epochs),
        weight_decay: s.weight_decay.unwrap_or(d.weight_decay),
        early_stop_patience: s.early_stop_patience.unwrap_or(d.early_stop_patience),
        seed: s.seed.unwrap_or(d.seed),
        max_sequence_length: s.max_sequence_length.unwrap_or(d.max_sequence_length),
    }
}

pub fn split_spec(s: &Settings) -> SplitSpec {
    let d = SplitSpec::default();
    SplitSpec { train_fraction: s.train_fraction.unwrap_or(d.train_fraction), seed: s.seed.unwrap_or(d.seed), stratified: true }
}

/// Loads the engine named by the settings and applies threshold and k.
pub fn load_engine(s: &Settings) -> Result<Engine> {
    let engine = Engine::load(required(&s.model, "model")?, required(&s.policy, "policy")?, required(&s.kb, "kb")?)?;
    configure_engine(engine, s)
}

fn configure_engine(mut engine: Engine, s: &Settings) -> Result<Engine> {
    if let Some(t) = s.threshold {
        engine = engine.with_threshold(t)?;
    }
    if let Some(k) = s.k {
        engine = engine.with_k(k)?;
    }
    Ok(engine)
}

pub fn service_config(s: &Settings) -> Result<ServiceConfig> {
    let bind = s.bind.clone().unwrap_or_else(|| DEFAULT_BIND.to_string());
    let bind: SocketAddr = bind.parse().map_err(|_| Error::validation(format!("invalid bind address {bind:?}")))?;
    Ok(ServiceConfig {
        bind,
        model: required(&s.model, "model")?.to_path_buf(),
        policy: required(&s.policy, "policy")?.to_path_buf(),
        kb: required(&s.kb, "kb")?.to_path_buf(),
        session_ttl_seconds: s.session_ttl_seconds.unwrap_or(DEFAULT_SESSION_TTL_SECONDS),
        max_request_bytes: s.max_request_bytes.unwrap_or(DEFAULT_MAX_REQUEST_BYTES),
        log: s.log.clone(),
    })
}

/// Runs one parsed invocation.
pub fn run(cli: &Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    let s = cli.settings()?;
    if let Some(t) = s.threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::validation(format!("--threshold must lie in [0, 1], got {t}")));
        }
    }
    if s.k == Some(0) {
        return Err(Error::validation("--k must be at least 1"));
    }
    match &cli.command {
        Command::Prepare { input: corpus, output, .. } => {
            commands::cmd_prepare(corpus, s.lexicon.as_deref(), output, out)?;
        }
        Command::Train { corpus, model_out, log_out, .. } => {
            let paths = TrainPaths { corpus, lexicon: s.lexicon.as_deref(), model: model_out, log: log_out };
            commands::cmd_train(&paths, &training_config(&s), &split_spec(&s), out)?;
        }
        Command::Eval { corpus, json, .. } => {
            commands::cmd_eval(required(&s.model, "model")?, corpus, s.lexicon.as_deref(), *json, out)?;
        }
        Command::Ingest { docs, output, max_chunk_words } => {
            commands::cmd_ingest(docs, output, *max_chunk_words, out)?;
        }
        Command::Chat { verbose, .. } => {
            let engine = load_engine(&s)?;
            commands::cmd_chat(&engine, input, out, *verbose, &SystemClock)?;
        }
        Command::Compare { script, output, .. } => {
            let engine = load_engine(&s)?;
            commands::cmd_compare(&engine, script, output.as_ref(), out, &SystemClock)?;
        }
        Command::Serve { .. } => {
            let config = service_config(&s)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
            let settings = Arc::new(s);
            runtime.block_on(service::serve(config, move |engine| configure_engine(engine, &settings)))?;
        }
    }
    Ok(())
}
