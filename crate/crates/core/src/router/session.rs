use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::corpus::IntentLabel;

/// Milliseconds since an arbitrary epoch.
pub type Timestamp = u64;

pub trait Clock {
    fn now_millis(&self) -> Timestamp;
}

/// Test clock that advances only when told to.
#[derive(Debug, Default)]
pub struct ManualClock(Cell<Timestamp>);

impl ManualClock {
    pub fn new(start: Timestamp) -> Self {
        Self(Cell::new(start))
    }

    pub fn set(&self, t: Timestamp) {
        self.0.set(t);
    }

    pub fn advance(&self, by: Timestamp) {
        self.0.set(self.0.get() + by);
    }
}

impl Clock for ManualClock {
    fn now_millis(&self) -> Timestamp {
        self.0.get()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Route {
    Exit,
    Rule,
    Rag,
    Workflow,
    Fallback,
}

impl Route {
    pub fn as_str(self) -> &'static str {
        match self {
            Route::Exit => "EXIT",
            Route::Rule => "RULE",
            Route::Rag => "RAG",
            Route::Workflow => "WORKFLOW",
            Route::Fallback => "FALLBACK",
        }
    }
}

impl core::fmt::Display for Route {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub user_text: String,
    pub intent: Option<IntentLabel>,
    pub confidence: Option<f64>,
    pub route: Route,
    pub reply: String,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum SessionState {
    #[default]
    Idle,
    InWorkflow {
        next_slot: usize,
        filled: BTreeMap<String, String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub state: SessionState,
    history: Vec<Turn>,
    pub created_at: Timestamp,
    pub last_active: Timestamp,
}

impl Session {
    pub fn new(id: impl Into<String>, now: Timestamp) -> Self {
        Self { id: id.into(), state: SessionState::Idle, history: Vec::new(), created_at: now, last_active: now }
    }

    pub fn history(&self) -> &[Turn] {
        &self.history
    }

    pub fn in_workflow(&self) -> bool {
        matches!(self.state, SessionState::InWorkflow { .. })
    }

    /// Appends `turn`, clamping its timestamp so the log never goes back in
    /// time.
    pub fn append_log(&mut self, mut turn: Turn) {
        if let Some(last) = self.history.last() {
            turn.timestamp = turn.timestamp.max(last.timestamp);
        }
        self.last_active = self.last_active.max(turn.timestamp);
        self.history.push(turn);
    }

    /// One JSON object per turn, newline terminated.
    pub fn export_log(&self) -> String {
        let mut out = String::new();
        for t in &self.history {
            out.push_str(&serde_json::to_string(t).expect("turn serializes"));
            out.push('\n');
        }
        out
    }
}

/// Parses the output of [`Session::export_log`]; blank lines are skipped.
pub fn parse_log(text: &str) -> Result<Vec<Turn>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
