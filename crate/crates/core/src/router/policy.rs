use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::IntentLabel;
use crate::text::base_normalize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("confidence threshold {0} is outside [0, 1]")]
    Threshold(String),
    #[error("at least one exit command is required")]
    NoExitCommands,
    #[error("rule table has no templates for {0:?}")]
    MissingIntent(&'static str),
    #[error("rule templates for {0} include an empty or missing entry")]
    EmptyTemplate(IntentLabel),
    #[error("workflow needs at least one slot")]
    NoSlots,
    #[error("workflow slot {0:?} is declared twice")]
    DuplicateSlot(String),
    #[error("workflow slot name or prompt is empty")]
    EmptySlot,
    #[error("policy document is not valid JSON: {0}")]
    Json(String),
}

/// Intent → reply templates. Every intent has at least one non-empty
/// template and both `greeting` and `farewell` are present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<IntentLabel, Vec<String>>", into = "BTreeMap<IntentLabel, Vec<String>>")]
pub struct RuleTable(BTreeMap<IntentLabel, Vec<String>>);

impl RuleTable {
    pub fn new(rules: BTreeMap<IntentLabel, Vec<String>>) -> Result<Self, PolicyError> {
        for (intent, templates) in &rules {
            if templates.is_empty() || templates.iter().any(|t| t.trim().is_empty()) {
                return Err(PolicyError::EmptyTemplate(intent.clone()));
            }
        }
        for required in ["greeting", "farewell"] {
            if !rules.contains_key(&IntentLabel::from(required)) {
                return Err(PolicyError::MissingIntent(required));
            }
        }
        Ok(Self(rules))
    }

    pub fn templates(&self, intent: &IntentLabel) -> Option<&[String]> {
        self.0.get(intent).map(Vec::as_slice)
    }

    pub fn intents(&self) -> impl Iterator<Item = &IntentLabel> {
        self.0.keys()
    }
}

impl TryFrom<BTreeMap<IntentLabel, Vec<String>>> for RuleTable {
    type Error = PolicyError;
    fn try_from(m: BTreeMap<IntentLabel, Vec<String>>) -> Result<Self, Self::Error> {
        Self::new(m)
    }
}

impl From<RuleTable> for BTreeMap<IntentLabel, Vec<String>> {
    fn from(t: RuleTable) -> Self {
        t.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    pub prompt: String,
}

/// Ordered slots collected by the application workflow. `completion` may
/// reference slot values as `{slot_name}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowSpec {
    pub slots: Vec<SlotSpec>,
    pub completion: String,
}

impl WorkflowSpec {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.slots.is_empty() {
            return Err(PolicyError::NoSlots);
        }
        let mut names = BTreeSet::new();
        for s in &self.slots {
            if s.name.trim().is_empty() || s.prompt.trim().is_empty() {
                return Err(PolicyError::EmptySlot);
            }
            if !names.insert(s.name.as_str()) {
                return Err(PolicyError::DuplicateSlot(s.name.clone()));
            }
        }
        Ok(())
    }

    /// Fills `{slot}` placeholders of the completion template.
    pub fn render_completion(&self, filled: &BTreeMap<String, String>) -> String {
        let mut out = self.completion.clone();
        for (name, value) in filled {
            out = out.replace(&alloc::format!("{{{name}}}"), value);
        }
        out
    }
}

impl Default for WorkflowSpec {
    fn default() -> Self {
        let slot = |name: &str, prompt: &str| SlotSpec { name: name.into(), prompt: prompt.into() };
        Self {
            slots: alloc::vec![
                slot("name", "Unonzi ani? (What is your name?)"),
                slot("education", "Wakadzidza kusvika papi? (What is your highest education?)"),
                slot("program_of_interest", "Unoda chirongwa chipi? (Which program interests you?)"),
            ],
            completion: "Ndatenda {name}! Takanyora dzidzo yako ({education}) uye chirongwa ({program_of_interest}). Tichakubata munguva pfupi.".into(),
        }
    }
}

/// On-disk shape of the policy file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDocument {
    pub threshold: f64,
    pub exit_commands: Vec<String>,
    pub fallback_reply: String,
    pub triggers: Vec<String>,
    pub rules: BTreeMap<IntentLabel, Vec<String>>,
    pub workflow: WorkflowSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clarification_reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workflow_intent: Option<IntentLabel>,
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_CLARIFICATION_REPLY: &str = "Handina kunzwisisa. Taura zvakare? (Sorry, could you say that again?)";
pub const DEFAULT_WORKFLOW_INTENT: &str = "education";

/// Validated routing policy including the rule table and workflow.
#[derive(Debug, Clone, PartialEq)]
pub struct DialoguePolicy {
    pub confidence_threshold: f64,
    /// Stored in normalized form.
    pub exit_commands: BTreeSet<String>,
    pub exit_reply: String,
    pub fallback_reply: String,
    pub clarification_reply: String,
    /// Stored in normalized form.
    pub application_triggers: Vec<String>,
    pub workflow_intent: IntentLabel,
    pub workflow: WorkflowSpec,
    pub rules: RuleTable,
}

impl DialoguePolicy {
    pub fn from_document(doc: PolicyDocument) -> Result<Self, PolicyError> {
        if !(0.0..=1.0).contains(&doc.threshold) {
            return Err(PolicyError::Threshold(doc.threshold.to_string()));
        }
        let exit_commands: BTreeSet<String> = doc
            .exit_commands
            .iter()
            .map(|c| base_normalize(c))
            .filter(|c| !c.is_empty())
            .collect();
        if exit_commands.is_empty() {
            return Err(PolicyError::NoExitCommands);
        }
        doc.workflow.validate()?;
        let rules = RuleTable::new(doc.rules)?;
        let exit_reply = match doc.exit_reply {
            Some(r) => r,
            None => rules.templates(&IntentLabel::from("farewell")).expect("validated")[0].clone(),
        };
        Ok(Self {
            confidence_threshold: doc.threshold,
            exit_commands,
            exit_reply,
            fallback_reply: doc.fallback_reply,
            clarification_reply: doc
                .clarification_reply
                .unwrap_or_else(|| DEFAULT_CLARIFICATION_REPLY.to_string()),
            application_triggers: doc
                .triggers
                .iter()
                .map(|t| base_normalize(t))
                .filter(|t| !t.is_empty())
                .collect(),
            workflow_intent: doc.workflow_intent.unwrap_or_else(|| DEFAULT_WORKFLOW_INTENT.into()),
            workflow: doc.workflow,
            rules,
        })
    }

    pub fn from_json(json: &str) -> Result<Self, PolicyError> {
        let doc: PolicyDocument = serde_json::from_str(json).map_err(|e| PolicyError::Json(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self, PolicyError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(PolicyError::Threshold(threshold.to_string()));
        }
        self.confidence_threshold = threshold;
        Ok(self)
    }

    /// Whether the normalized message is exactly one of the exit commands.
    pub fn is_exit(&self, text: &str) -> bool {
        self.exit_commands.contains(&base_normalize(text))
    }

    /// Whether any token of the message starts with an application trigger.
    pub fn has_trigger(&self, text: &str) -> bool {
        crate::text::content_tokens(text)
            .iter()
            .any(|tok| self.application_triggers.iter().any(|t| tok.starts_with(t.as_str())))
    }
}
