//! Annotated slang corpus: records, validation, class histogram, hybrid
//! resampling and train/validation splitting.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{normalize_text, Lexicon};

/// Intent names used by the bundled corpus, in codec order.
pub const DEFAULT_INTENTS: [&str; 7] = [
    "greeting",
    "gratitude",
    "request",
    "religion",
    "finance",
    "education",
    "farewell",
];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntentLabel(String);

impl IntentLabel {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for IntentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for IntentLabel {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

macro_rules! closed_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub fn parse(s: &str) -> Option<Self> {
                match s {
                    $($text => Some(Self::$variant),)+
                    _ => None,
                }
            }

            pub fn as_str(self) -> &'static str {
                match self {
                    $(Self::$variant => $text),+
                }
            }
        }
    };
}

closed_enum!(Sentiment { Positive => "positive", Negative => "negative", Neutral => "neutral" });
closed_enum!(DialogueAct { Question => "question", Statement => "statement", Command => "command" });
closed_enum!(Tone { Friendly => "friendly", Formal => "formal", Humorous => "humorous" });
closed_enum!(
    /// Language of a code-mixed span.
    Language { Shona => "shona", English => "english" }
);
closed_enum!(
    /// Granularity of a language switch.
    SwitchUnit { Word => "word", Phrase => "phrase" }
);

/// A language switch inside `raw_text`, in character offsets (end exclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeMixSpan {
    pub start: usize,
    pub end: usize,
    pub language: Language,
    pub unit: SwitchUnit,
}

/// One annotated corpus record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub raw_text: String,
    pub normalized_text: String,
    pub intent: IntentLabel,
    pub sentiment: Sentiment,
    pub dialogue_act: DialogueAct,
    #[serde(default)]
    pub code_mix: Vec<CodeMixSpan>,
    pub tone: Tone,
}

/// Ordered, duplicate-free set of intent labels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<IntentLabel>", into = "Vec<IntentLabel>")]
pub struct LabelSet(Vec<IntentLabel>);

impl LabelSet {
    pub fn new(labels: Vec<IntentLabel>) -> Result<Self, DuplicateLabel> {
        let mut seen = BTreeSet::new();
        for label in &labels {
            if !seen.insert(label) {
                return Err(DuplicateLabel(label.clone()));
            }
        }
        Ok(Self(labels))
    }

    /// Labels present in `intents`, known ones first in [`DEFAULT_INTENTS`]
    /// order, unknown ones after them alphabetically.
    pub fn inferred<'a>(intents: impl IntoIterator<Item = &'a IntentLabel>) -> Self {
        let present: BTreeSet<&IntentLabel> = intents.into_iter().collect();
        let mut labels: Vec<IntentLabel> = DEFAULT_INTENTS
            .iter()
            .map(|s| IntentLabel::from(*s))
            .filter(|l| present.contains(l))
            .collect();
        labels.extend(
            present
                .into_iter()
                .filter(|l| !DEFAULT_INTENTS.contains(&l.as_str()))
                .cloned(),
        );
        Self(labels)
    }

    pub fn contains(&self, label: &IntentLabel) -> bool {
        self.0.contains(label)
    }

    pub fn labels(&self) -> &[IntentLabel] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("duplicate label {0}")]
pub struct DuplicateLabel(pub IntentLabel);

impl TryFrom<Vec<IntentLabel>> for LabelSet {
    type Error = DuplicateLabel;
    fn try_from(v: Vec<IntentLabel>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<LabelSet> for Vec<IntentLabel> {
    fn from(set: LabelSet) -> Self {
        set.0
    }
}

/// What went wrong on one line of a corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("malformed record: {0}")]
    Parse(String),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unknown {field} value {value:?}")]
    UnknownValue { field: &'static str, value: String },
    #[error("intent {0:?} is not in the corpus label set")]
    UnknownIntent(String),
    #[error("record id is empty")]
    EmptyId,
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("normalized_text is empty while raw_text is not")]
    EmptyNormalized,
    #[error("code-mix span {start}..{end} is outside 0..{len} or overlaps another span")]
    InvalidSpan { start: usize, end: usize, len: usize },
}

impl RecordError {
    /// Syntax problems as opposed to schema/value violations.
    pub fn is_parse(&self) -> bool {
        matches!(self, Self::Parse(_) | Self::Header(_))
    }
}

/// A [`RecordError`] located at a 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct CorpusError {
    pub line: usize,
    pub kind: RecordError,
}

#[derive(Deserialize)]
struct RawSpan {
    start: usize,
    end: usize,
    language: String,
    unit: String,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    raw_text: String,
    #[serde(default)]
    normalized_text: Option<String>,
    intent: String,
    sentiment: String,
    dialogue_act: String,
    #[serde(default)]
    code_mix: Vec<RawSpan>,
    tone: String,
}

#[derive(Deserialize)]
struct Header {
    labels: Vec<IntentLabel>,
}

#[derive(Serialize)]
struct HeaderOut<'a> {
    labels: &'a LabelSet,
}

fn closed<T>(field: &'static str, value: String, parse: fn(&str) -> Option<T>) -> Result<T, RecordError> {
    parse(&value).ok_or(RecordError::UnknownValue { field, value })
}

impl RawRecord {
    fn validate(self, labels: Option<&LabelSet>, lexicon: &Lexicon) -> Result<Utterance, RecordError> {
        if self.id.trim().is_empty() {
            return Err(RecordError::EmptyId);
        }
        let intent = IntentLabel::new(self.intent);
        if let Some(labels) = labels {
            if !labels.contains(&intent) {
                return Err(RecordError::UnknownIntent(intent.0));
            }
        }
        let sentiment = closed("sentiment", self.sentiment, Sentiment::parse)?;
        let dialogue_act = closed("dialogue_act", self.dialogue_act, DialogueAct::parse)?;
        let tone = closed("tone", self.tone, Tone::parse)?;
        let code_mix = self
            .code_mix
            .into_iter()
            .map(|s| {
                Ok(CodeMixSpan {
                    start: s.start,
                    end: s.end,
                    language: closed("code_mix.language", s.language, Language::parse)?,
                    unit: closed("code_mix.unit", s.unit, SwitchUnit::parse)?,
                })
            })
            .collect::<Result<Vec<_>, RecordError>>()?;
        let normalized_text = match self.normalized_text {
            Some(n) => n,
            None => normalize_text(&self.raw_text, lexicon),
        };
        let utterance = Utterance {
            id: self.id,
            raw_text: self.raw_text,
            normalized_text,
            intent,
            sentiment,
            dialogue_act,
            code_mix,
            tone,
        };
        utterance.check()?;
        Ok(utterance)
    }
}

impl Utterance {
    /// Checks the record-local invariants (text and span constraints).
    pub fn check(&self) -> Result<(), RecordError> {
        if !self.raw_text.is_empty() && self.normalized_text.trim().is_empty() {
            return Err(RecordError::EmptyNormalized);
        }
        let len = self.raw_text.chars().count();
        let mut spans: Vec<&CodeMixSpan> = self.code_mix.iter().collect();
        spans.sort_by_key(|s| (s.start, s.end));
        let mut prev_end = 0;
        for s in spans {
            if s.start >= s.end || s.end > len || s.start < prev_end {
                return Err(RecordError::InvalidSpan { start: s.start, end: s.end, len });
            }
            prev_end = s.end;
        }
        Ok(())
    }
}

/// An ordered collection of utterances plus the label set they draw from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub labels: LabelSet,
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn new(labels: LabelSet, utterances: Vec<Utterance>) -> Self {
        Self { labels, utterances }
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Parses line-delimited JSON records with an optional leading
    /// `{"labels": [...]}` header. Every bad line is reported, not just the
    /// first one.
    pub fn parse_jsonl(text: &str, lexicon: &Lexicon) -> Result<Self, Vec<CorpusError>> {
        let mut errors = Vec::new();
        let mut header: Option<LabelSet> = None;
        let mut utterances = Vec::new();
        let mut ids = BTreeSet::new();
        let mut first = true;

        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if first {
                first = false;
                if is_header(trimmed) {
                    match serde_json::from_str::<Header>(trimmed)
                        .map_err(|e| RecordError::Header(e.to_string()))
                        .and_then(|h| {
                            LabelSet::new(h.labels).map_err(|e| RecordError::Header(e.to_string()))
                        }) {
                        Ok(set) => header = Some(set),
                        Err(kind) => errors.push(CorpusError { line: line_no, kind }),
                    }
                    continue;
                }
            }
            let record = match serde_json::from_str::<RawRecord>(trimmed) {
                Ok(r) => r,
                Err(e) => {
                    errors.push(CorpusError {
                        line: line_no,
                        kind: RecordError::Parse(e.to_string()),
                    });
                    continue;
                }
            };
            match record.validate(header.as_ref(), lexicon) {
                Ok(u) => {
                    if ids.insert(u.id.clone()) {
                        utterances.push(u);
                    } else {
                        errors.push(CorpusError {
                            line: line_no,
                            kind: RecordError::DuplicateId(u.id),
                        });
                    }
                }
                Err(kind) => errors.push(CorpusError { line: line_no, kind }),
            }
        }

        if !errors.is_empty() {
            return Err(errors);
        }
        let labels = header.unwrap_or_else(|| LabelSet::inferred(utterances.iter().map(|u| &u.intent)));
        Ok(Self { labels, utterances })
    }

    /// Serializes to the line-delimited form read by [`Corpus::parse_jsonl`].
    /// A header line is written whenever the label set is non-empty.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        if !self.labels.is_empty() {
            out.push_str(&serde_json::to_string(&HeaderOut { labels: &self.labels }).expect("header serializes"));
            out.push('\n');
        }
        for u in &self.utterances {
            out.push_str(&serde_json::to_string(u).expect("utterance serializes"));
            out.push('\n');
        }
        out
    }

    /// Count of utterances per intent; only represented intents appear.
    pub fn class_histogram(&self) -> BTreeMap<IntentLabel, usize> {
        let mut hist = BTreeMap::new();
        for u in &self.utterances {
            *hist.entry(u.intent.clone()).or_insert(0) += 1;
        }
        hist
    }

    /// Groups utterance indices by intent, following label-set order first
    /// and then any intents missing from the set in sorted order.
    fn class_groups(&self) -> Vec<(IntentLabel, Vec<usize>)> {
        let mut by_label: BTreeMap<&IntentLabel, Vec<usize>> = BTreeMap::new();
        for (i, u) in self.utterances.iter().enumerate() {
            by_label.entry(&u.intent).or_default().push(i);
        }
        let mut groups = Vec::with_capacity(by_label.len());
        for label in self.labels.labels() {
            if let Some(idx) = by_label.remove(label) {
                groups.push((label.clone(), idx));
            }
        }
        groups.extend(by_label.into_iter().map(|(l, idx)| (l.clone(), idx)));
        groups
    }

    /// Hybrid resampling to the median class count: larger classes are
    /// downsampled without replacement, smaller ones topped up with
    /// duplicates drawn with replacement. Output is grouped by class.
    pub fn rebalance(&self, seed: u64) -> Result<Corpus, ResampleError> {
        if self.is_empty() {
            return Err(ResampleError::EmptyCorpus);
        }
        let groups = self.class_groups();
        let counts: Vec<usize> = groups.iter().map(|(_, g)| g.len()).collect();
        let target = rebalance_target(&counts);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(target * groups.len());

        for (_, members) in &groups {
            let n = members.len();
            if n > target {
                let mut picked = rand::seq::index::sample(&mut rng, n, target).into_vec();
                picked.sort_unstable();
                out.extend(picked.into_iter().map(|i| self.utterances[members[i]].clone()));
            } else {
                out.extend(members.iter().map(|&i| self.utterances[i].clone()));
                for _ in n..target {
                    let i = members[rng.random_range(0..n)];
                    out.push(self.utterances[i].clone());
                }
            }
        }
        Ok(Corpus::new(self.labels.clone(), out))
    }

    /// Splits into train and validation partitions. Record order within each
    /// partition follows the input order.
    pub fn split(&self, spec: &SplitSpec) -> Result<(Corpus, Corpus), ResampleError> {
        let f = spec.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(ResampleError::InvalidFraction(f));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut in_train = alloc::vec![false; self.len()];

        let groups: Vec<(IntentLabel, Vec<usize>)> = if spec.stratified {
            self.class_groups()
        } else {
            alloc::vec![(IntentLabel::new("*"), (0..self.len()).collect())]
        };
        for (label, mut members) in groups {
            let n = members.len();
            if n < 2 {
                return Err(ResampleError::ClassTooSmall { label, count: n });
            }
            let n_train = train_count(n, f);
            members.shuffle(&mut rng);
            for &i in &members[..n_train] {
                in_train[i] = true;
            }
        }

        let (mut train, mut val) = (Vec::new(), Vec::new());
        for (u, t) in self.utterances.iter().zip(in_train) {
            if t {
                train.push(u.clone());
            } else {
                val.push(u.clone());
            }
        }
        Ok((
            Corpus::new(self.labels.clone(), train),
            Corpus::new(self.labels.clone(), val),
        ))
    }
}

fn is_header(line: &str) -> bool {
    match serde_json::from_str::<serde_json::Value>(line) {
        Ok(serde_json::Value::Object(map)) => map.contains_key("labels") && !map.contains_key("id"),
        _ => false,
    }
}

/// Median of the class counts; for an even number of classes the mean of the
/// two middle counts, rounded down.
pub fn rebalance_target(counts: &[usize]) -> usize {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    if n == 0 {
        return 0;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2
    }
}

/// Training-side size for a group of `n ≥ 2` records: `round(n·f)` clamped so
/// both sides keep at least one record.
pub fn train_count(n: usize, fraction: f64) -> usize {
    let raw = libm::round(n as f64 * fraction) as usize;
    raw.clamp(1, n - 1)
}

/// Parameters of a train/validation split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.8, seed: 42, stratified: true }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResampleError {
    #[error("cannot resample an empty corpus")]
    EmptyCorpus,
    #[error("train fraction {0} is outside (0, 1)")]
    InvalidFraction(f64),
    #[error("class {label} has {count} record(s); a split needs at least 2")]
    ClassTooSmall { label: IntentLabel, count: usize },
}

impl fmt::Display for Corpus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hist = self.class_histogram();
        let parts: Vec<String> = hist.iter().map(|(l, c)| format!("{l}:{c}")).collect();
        write!(f, "{} utterances [{}]", self.len(), parts.join(", "))
    }
}
