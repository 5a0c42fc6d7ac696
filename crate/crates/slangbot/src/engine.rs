//! Loaded model, policy and knowledge base, shared by the REPL, the
//! comparison harness and the HTTP service.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use slangbot_core::classifier::IntentModel;
use slangbot_core::rag::{KnowledgeBase, KnowledgeSource, RagAnswer, RagError, RagPipeline, DEFAULT_TOP_K};
use slangbot_core::router::{Clock, DialoguePolicy, ResponsePlan, Router, Session, Timestamp};

use crate::error::{Error, Result};
use crate::{kb_io, model_io};

/// Wall clock in milliseconds since the Unix epoch.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_millis(&self) -> Timestamp {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
    }
}

pub fn load_policy(path: impl AsRef<Path>) -> Result<DialoguePolicy> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DialoguePolicy::from_json(&text).map_err(|e| Error::format(path, e))
}

#[derive(Debug)]
pub struct Engine {
    pub model: IntentModel,
    pub policy: DialoguePolicy,
    pub kb: KnowledgeBase,
    pub k: usize,
}

impl Engine {
    pub fn new(model: IntentModel, policy: DialoguePolicy, kb: KnowledgeBase) -> Self {
        Self { model, policy, kb, k: DEFAULT_TOP_K }
    }

    pub fn load(model: &Path, policy: &Path, kb: &Path) -> Result<Self> {
        Ok(Self::new(model_io::load_model(model)?, load_policy(policy)?, kb_io::load_kb(kb)?))
    }

    pub fn with_k(mut self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::validation("--k must be at least 1"));
        }
        self.k = k;
        Ok(self)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        self.policy = self.policy.with_threshold(threshold).map_err(Error::validation)?;
        Ok(self)
    }

    pub fn rag(&self) -> RagPipeline<'_> {
        RagPipeline::new(&self.kb).with_k(self.k)
    }

    /// Hybrid routing of one turn.
    pub fn respond(&self, session: &mut Session, text: &str, clock: &dyn Clock) -> ResponsePlan {
        let rag = self.rag();
        Router::new(&self.model, &self.policy, &rag).route_turn(session, text, clock)
    }

    /// Retrieval-only answer, no intent classification.
    pub fn rag_only(&self, text: &str) -> std::result::Result<RagAnswer, RagError> {
        self.rag().answer(text)
    }
}
