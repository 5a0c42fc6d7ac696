//! Side-by-side run of a scripted dialogue through the hybrid router and a
//! retrieval-only pipeline.

use serde::{Deserialize, Serialize};
use slangbot_core::rag::TraceEntry;
use slangbot_core::router::{Clock, Route, Session};

use crate::engine::Engine;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub turn: usize,
    pub user_text: String,
    pub hybrid_route: String,
    pub hybrid_reply: String,
    pub hybrid_trace: Option<Vec<TraceEntry>>,
    pub rag_only_route: String,
    pub rag_only_reply: String,
    pub rag_only_trace: Vec<TraceEntry>,
}

impl ComparisonRow {
    pub fn diverges(&self) -> bool {
        self.hybrid_reply != self.rag_only_reply
    }
}

/// Route label used for the retrieval-only side.
pub const RAG_ONLY_ROUTE: &str = "RAG";
const RAG_ONLY_ERROR_ROUTE: &str = "RAG-ERROR";

/// Runs every non-empty script line through both pipelines. The hybrid side
/// keeps one session and opens a fresh one after an exit turn.
pub fn compare_script(engine: &Engine, script: &str, clock: &dyn Clock) -> Vec<ComparisonRow> {
    let mut session = Session::new("compare", clock.now_millis());
    let mut rows = Vec::new();
    for line in script.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let plan = engine.respond(&mut session, line, clock);
        if plan.route == Route::Exit {
            session = Session::new("compare", clock.now_millis());
        }
        let (rag_only_route, rag_only_reply, rag_only_trace) = match engine.rag_only(line) {
            Ok(a) => (RAG_ONLY_ROUTE.to_string(), a.text, a.retrieved),
            Err(e) => (RAG_ONLY_ERROR_ROUTE.to_string(), e.to_string(), Vec::new()),
        };
        rows.push(ComparisonRow {
            turn: rows.len() + 1,
            user_text: line.to_string(),
            hybrid_route: plan.route.to_string(),
            hybrid_reply: plan.reply,
            hybrid_trace: plan.retrieval_trace,
            rag_only_route,
            rag_only_reply,
            rag_only_trace,
        });
    }
    rows
}

fn cell(s: &str) -> String {
    s.replace('\\', "\\\\").replace('|', "\\|").replace('\n', " ")
}

fn uncell(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            if let Some(n) = chars.next() {
                out.push(n);
            }
        } else {
            out.push(c);
        }
    }
    out
}

pub const TRANSCRIPT_HEADER: &str =
    "| # | User | Hybrid route | Hybrid reply | RAG-only route | RAG-only reply | Diverges |";

/// Markdown table, one row per turn.
pub fn render_markdown(rows: &[ComparisonRow]) -> String {
    let mut out = String::new();
    out.push_str(TRANSCRIPT_HEADER);
    out.push('\n');
    out.push_str("|---|---|---|---|---|---|---|\n");
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} |\n",
            r.turn,
            cell(&r.user_text),
            r.hybrid_route,
            cell(&r.hybrid_reply),
            r.rag_only_route,
            cell(&r.rag_only_reply),
            if r.diverges() { "yes" } else { "no" },
        ));
    }
    out
}

/// A row as read back from a rendered transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptRow {
    pub turn: usize,
    pub user_text: String,
    pub hybrid_route: String,
    pub hybrid_reply: String,
    pub rag_only_route: String,
    pub rag_only_reply: String,
    pub diverges: bool,
}

fn split_cells(line: &str) -> Vec<String> {
    let inner = line.trim().trim_start_matches('|');
    let mut cells = Vec::new();
    let mut current = String::new();
    let mut escaped = false;
    for c in inner.chars() {
        if escaped {
            current.push('\\');
            current.push(c);
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == '|' {
            cells.push(uncell(current.trim()));
            current.clear();
        } else {
            current.push(c);
        }
    }
    cells
}

/// Parses a transcript produced by [`render_markdown`].
pub fn parse_markdown(text: &str) -> Result<Vec<TranscriptRow>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(TRANSCRIPT_HEADER) {
        return Err("missing transcript header".into());
    }
    lines.next();
    lines
        .map(|line| {
            let c = split_cells(line);
            if c.len() != 7 {
                return Err(format!("expected 7 cells, found {}: {line}", c.len()));
            }
            Ok(TranscriptRow {
                turn: c[0].parse().map_err(|_| format!("bad turn number {:?}", c[0]))?,
                user_text: c[1].clone(),
                hybrid_route: c[2].clone(),
                hybrid_reply: c[3].clone(),
                rag_only_route: c[4].clone(),
                rag_only_reply: c[5].clone(),
                diverges: c[6] == "yes",
            })
        })
        .collect()
}
