//! Per-turn dialogue routing.
//!
//! Decision order for one user turn:
//! 1. exit command → `EXIT` (dominates an active workflow)
//! 2. active workflow → `WORKFLOW` (the text fills the current slot)
//! 3. empty text → `FALLBACK` with the clarification reply
//! 4. classify; confidence below threshold → `FALLBACK`
//! 5. workflow intent plus an application trigger → start the workflow
//! 6. intent with rule templates → `RULE`
//! 7. anything else → `RAG`
//!
//! Every turn is appended to the session history.

mod policy;
mod session;

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use policy::{
    DialoguePolicy, PolicyDocument, PolicyError, RuleTable, SlotSpec, WorkflowSpec, DEFAULT_CLARIFICATION_REPLY,
    DEFAULT_THRESHOLD, DEFAULT_WORKFLOW_INTENT,
};
pub use session::{parse_log, Clock, ManualClock, Route, Session, SessionState, Timestamp, Turn};

use crate::classifier::IntentClassifier;
use crate::corpus::IntentLabel;
use crate::rag::{KnowledgeSource, TraceEntry};
use crate::text::base_normalize;

/// The router's decision for one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsePlan {
    pub route: Route,
    pub reply: String,
    pub intent: Option<IntentLabel>,
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_trace: Option<Vec<TraceEntry>>,
    /// Diagnostic attached when retrieval failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_note: Option<String>,
    pub session_terminated: bool,
}

impl ResponsePlan {
    fn simple(route: Route, reply: impl Into<String>) -> Self {
        Self {
            route,
            reply: reply.into(),
            intent: None,
            confidence: None,
            retrieval_trace: None,
            trace_note: None,
            session_terminated: false,
        }
    }

    fn classified(mut self, intent: &IntentLabel, confidence: f64) -> Self {
        self.intent = Some(intent.clone());
        self.confidence = Some(confidence);
        self
    }
}

/// Rotates through `templates` by the number of earlier `RULE` turns with the
/// same intent. `None` only for an empty list.
pub fn select_template<'t>(templates: &'t [String], history: &[Turn], intent: &IntentLabel) -> Option<&'t str> {
    if templates.is_empty() {
        return None;
    }
    let prior = history
        .iter()
        .filter(|t| t.route == Route::Rule && t.intent.as_ref() == Some(intent))
        .count();
    Some(templates[prior % templates.len()].as_str())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("session is not in a workflow")]
pub struct NotInWorkflow;

/// Consumes `text` as the value of the current slot. A blank value repeats
/// the current prompt without advancing. After the last slot the completion
/// is rendered and the session returns to idle.
pub fn advance_workflow(session: &mut Session, text: &str, spec: &WorkflowSpec) -> Result<ResponsePlan, NotInWorkflow> {
    let SessionState::InWorkflow { next_slot, filled } = &mut session.state else {
        return Err(NotInWorkflow);
    };
    let value = text.trim();
    if value.is_empty() {
        return Ok(ResponsePlan::simple(Route::Workflow, spec.slots[*next_slot].prompt.clone()));
    }
    filled.insert(spec.slots[*next_slot].name.clone(), value.to_string());
    *next_slot += 1;
    if *next_slot < spec.slots.len() {
        return Ok(ResponsePlan::simple(Route::Workflow, spec.slots[*next_slot].prompt.clone()));
    }
    let reply = spec.render_completion(filled);
    session.state = SessionState::Idle;
    Ok(ResponsePlan::simple(Route::Workflow, reply))
}

/// Bundles the read-only collaborators of a dialogue.
pub struct Router<'a> {
    pub classifier: &'a dyn IntentClassifier,
    pub policy: &'a DialoguePolicy,
    pub knowledge: &'a dyn KnowledgeSource,
}

impl<'a> Router<'a> {
    pub fn new(
        classifier: &'a dyn IntentClassifier,
        policy: &'a DialoguePolicy,
        knowledge: &'a dyn KnowledgeSource,
    ) -> Self {
        Self { classifier, policy, knowledge }
    }

    /// Routes one turn, records it in the session history and returns the
    /// plan.
    pub fn route_turn(&self, session: &mut Session, text: &str, clock: &dyn Clock) -> ResponsePlan {
        let plan = self.decide(session, text);
        session.append_log(Turn {
            user_text: text.to_string(),
            intent: plan.intent.clone(),
            confidence: plan.confidence,
            route: plan.route,
            reply: plan.reply.clone(),
            timestamp: clock.now_millis(),
        });
        plan
    }

    fn decide(&self, session: &mut Session, text: &str) -> ResponsePlan {
        let policy = self.policy;
        if policy.is_exit(text) {
            session.state = SessionState::Idle;
            let mut plan = ResponsePlan::simple(Route::Exit, policy.exit_reply.clone());
            plan.session_terminated = true;
            return plan;
        }
        if session.in_workflow() {
            return advance_workflow(session, text, &policy.workflow).expect("checked in_workflow");
        }
        if base_normalize(text).is_empty() {
            return ResponsePlan::simple(Route::Fallback, policy.clarification_reply.clone());
        }

        let prediction = self.classifier.predict(text);
        let (intent, confidence) = (&prediction.label, prediction.confidence);
        if confidence < policy.confidence_threshold {
            return ResponsePlan::simple(Route::Fallback, policy.fallback_reply.clone()).classified(intent, confidence);
        }
        if *intent == policy.workflow_intent && policy.has_trigger(text) {
            session.state = SessionState::InWorkflow { next_slot: 0, filled: Default::default() };
            return ResponsePlan::simple(Route::Workflow, policy.workflow.slots[0].prompt.clone())
                .classified(intent, confidence);
        }
        if let Some(templates) = policy.rules.templates(intent) {
            let reply = select_template(templates, session.history(), intent).expect("rule table entries are non-empty");
            return ResponsePlan::simple(Route::Rule, reply).classified(intent, confidence);
        }
        match self.knowledge.answer(text) {
            Ok(answer) => {
                let mut plan = ResponsePlan::simple(Route::Rag, answer.text).classified(intent, confidence);
                plan.retrieval_trace = Some(answer.retrieved);
                plan
            }
            Err(err) => {
                let mut plan =
                    ResponsePlan::simple(Route::Fallback, policy.fallback_reply.clone()).classified(intent, confidence);
                plan.trace_note = Some(err.to_string());
                plan
            }
        }
    }
}

/// Free-function form of [`Router::route_turn`].
pub fn route_turn(
    session: &mut Session,
    text: &str,
    classifier: &dyn IntentClassifier,
    policy: &DialoguePolicy,
    knowledge: &dyn KnowledgeSource,
    clock: &dyn Clock,
) -> ResponsePlan {
    Router::new(classifier, policy, knowledge).route_turn(session, text, clock)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::LabelCodec;
    use crate::corpus::DEFAULT_INTENTS;
    use crate::rag::{RagAnswer, RagError};
    use alloc::collections::BTreeMap;
    use alloc::vec;
    use proptest::prelude::*;

    /// Classifier answering from a fixed table; unknown text is uniform.
    struct Scripted {
        codec: LabelCodec,
        table: BTreeMap<String, (&'static str, f64)>,
    }

    impl Scripted {
        fn new(entries: &[(&str, &'static str, f64)]) -> Self {
            let codec = LabelCodec::new(DEFAULT_INTENTS.iter().map(|s| IntentLabel::from(*s)).collect()).unwrap();
            let table = entries.iter().map(|(t, l, c)| (t.to_string(), (*l, *c))).collect();
            Self { codec, table }
        }
    }

    impl IntentClassifier for Scripted {
        fn codec(&self) -> &LabelCodec {
            &self.codec
        }
        fn backend_id(&self) -> &str {
            "scripted"
        }
        fn scores(&self, text: &str) -> Vec<f64> {
            let n = self.codec.len();
            match self.table.get(text) {
                None => vec![0.0; n],
                Some((label, conf)) => {
                    // softmax of these scores puts `conf` on `label`
                    let idx = self.codec.index_of(&IntentLabel::from(*label)).unwrap();
                    let rest = (1.0 - conf) / (n as f64 - 1.0);
                    (0..n).map(|i| libm::log(if i == idx { *conf } else { rest })).collect()
                }
            }
        }
    }

    struct FixedKb(Result<RagAnswer, RagError>);

    impl KnowledgeSource for FixedKb {
        fn answer(&self, _query: &str) -> Result<RagAnswer, RagError> {
            self.0.clone()
        }
    }

    fn kb_ok() -> FixedKb {
        FixedKb(Ok(RagAnswer {
            text: "Based on Programs: MS in Data Science.".into(),
            retrieved: vec![TraceEntry { chunk_id: "programs#0".into(), score: 0.4 }],
            sources: vec!["programs#0".into()],
        }))
    }

    fn policy() -> DialoguePolicy {
        let mut rules = BTreeMap::new();
        rules.insert("greeting".into(), vec!["Hesi shamwari! Uri sei hako?".to_string(), "Mhoro!".to_string()]);
        rules.insert("farewell".into(), vec!["Zvakanaka, tichaonana zvakare!".to_string()]);
        rules.insert("religion".into(), vec!["Chaplain: https://example.edu/chaplain".to_string()]);
        DialoguePolicy::from_document(PolicyDocument {
            threshold: 0.5,
            exit_commands: vec!["exit".into()],
            fallback_reply: "Ndine urombo, handisati ndadzidziswa izvozvo.".into(),
            triggers: vec!["apply".into(), "application".into(), "kunyoresa".into()],
            rules,
            workflow: WorkflowSpec::default(),
            clarification_reply: None,
            exit_reply: None,
            workflow_intent: None,
        })
        .unwrap()
    }

    fn classifier() -> Scripted {
        Scripted::new(&[
            ("wadii", "greeting", 0.99),
            ("mune mufundisi here", "religion", 0.9),
            ("pace inoita mari?", "finance", 0.3),
            ("mune ma program api pa Pace", "education", 0.8),
            ("ndinoda ku apply", "education", 0.85),
            ("ndinoda ku apply futi", "education", 0.85),
        ])
    }

    #[test]
    fn dialogue_trace_routes() {
        let (c, p, kb, clock) = (classifier(), policy(), kb_ok(), ManualClock::new(0));
        let router = Router::new(&c, &p, &kb);
        let mut s = Session::new("s", 0);

        let r = router.route_turn(&mut s, "wadii", &clock);
        assert_eq!((r.route, r.reply.as_str()), (Route::Rule, "Hesi shamwari! Uri sei hako?"));
        assert_eq!(r.intent.as_ref().map(IntentLabel::as_str), Some("greeting"));

        let r = router.route_turn(&mut s, "mune mufundisi here", &clock);
        assert_eq!((r.route, r.reply.as_str()), (Route::Rule, "Chaplain: https://example.edu/chaplain"));

        let r = router.route_turn(&mut s, "pace inoita mari?", &clock);
        assert_eq!((r.route, r.reply.as_str()), (Route::Fallback, p.fallback_reply.as_str()));
        assert_eq!(r.intent.as_ref().map(IntentLabel::as_str), Some("finance"));

        let r = router.route_turn(&mut s, "mune ma program api pa Pace", &clock);
        assert_eq!(r.route, Route::Rag);
        assert_eq!(r.retrieval_trace.as_ref().unwrap().len(), 1);

        let r = router.route_turn(&mut s, "ndinoda ku apply", &clock);
        assert_eq!((r.route, r.reply.as_str()), (Route::Workflow, p.workflow.slots[0].prompt.as_str()));

        let r = router.route_turn(&mut s, "exit", &clock);
        assert_eq!((r.route, r.reply.as_str()), (Route::Exit, "Zvakanaka, tichaonana zvakare!"));
        assert!(r.session_terminated && r.intent.is_none());
        assert_eq!(s.history().len(), 6);
        assert!(!s.in_workflow());
    }

    #[test]
    fn workflow_collects_all_slots_then_idles() {
        let (c, p, kb, clock) = (classifier(), policy(), kb_ok(), ManualClock::new(0));
        let router = Router::new(&c, &p, &kb);
        let mut s = Session::new("s", 0);
        router.route_turn(&mut s, "ndinoda ku apply", &clock);
        let r = router.route_turn(&mut s, "Tariro", &clock);
        assert_eq!(r.reply, p.workflow.slots[1].prompt);
        let r = router.route_turn(&mut s, "   ", &clock);
        assert_eq!(r.reply, p.workflow.slots[1].prompt);
        assert_eq!(r.route, Route::Workflow);
        // text that would otherwise classify is still slot input
        let r = router.route_turn(&mut s, "wadii", &clock);
        assert_eq!(r.reply, p.workflow.slots[2].prompt);
        let r = router.route_turn(&mut s, "MS Data Science", &clock);
        assert_eq!(r.route, Route::Workflow);
        for v in ["Tariro", "wadii", "MS Data Science"] {
            assert!(r.reply.contains(v));
        }
        assert_eq!(s.state, SessionState::Idle);
    }

    #[test]
    fn advance_workflow_transitions() {
        let spec = WorkflowSpec {
            slots: vec![
                SlotSpec { name: "name".into(), prompt: "Name?".into() },
                SlotSpec { name: "education".into(), prompt: "Education?".into() },
            ],
            completion: "Done {name} / {education}".into(),
        };
        let mut s = Session::new("s", 0);
        assert_eq!(advance_workflow(&mut s, "x", &spec), Err(NotInWorkflow));
        s.state = SessionState::InWorkflow { next_slot: 0, filled: BTreeMap::new() };

        let before = s.clone();
        let r = advance_workflow(&mut s, " \t", &spec).unwrap();
        assert_eq!(r.reply, "Name?");
        assert_eq!(s, before);

        let r = advance_workflow(&mut s, "Tariro", &spec).unwrap();
        assert_eq!(r.reply, "Education?");
        let SessionState::InWorkflow { next_slot, filled } = &s.state else { panic!() };
        assert_eq!(*next_slot, 1);
        assert_eq!(filled.get("name").map(String::as_str), Some("Tariro"));

        let r = advance_workflow(&mut s, "BSc", &spec).unwrap();
        assert_eq!(r.reply, "Done Tariro / BSc");
        assert_eq!(s.state, SessionState::Idle);
    }

    #[test]
    fn exit_aborts_workflow() {
        let (c, p, kb, clock) = (classifier(), policy(), kb_ok(), ManualClock::new(0));
        let router = Router::new(&c, &p, &kb);
        let mut s = Session::new("s", 0);
        router.route_turn(&mut s, "ndinoda ku apply", &clock);
        let r = router.route_turn(&mut s, "EXIT", &clock);
        assert_eq!(r.route, Route::Exit);
        assert_eq!(s.state, SessionState::Idle);
    }

    #[test]
    fn empty_text_asks_for_clarification() {
        let (c, p, kb, clock) = (classifier(), policy(), kb_ok(), ManualClock::new(0));
        let mut s = Session::new("s", 0);
        let r = route_turn(&mut s, "  ", &c, &p, &kb, &clock);
        assert_eq!((r.route, r.reply.as_str()), (Route::Fallback, p.clarification_reply.as_str()));
        assert!(r.intent.is_none());
    }

    #[test]
    fn rag_failure_falls_back_with_note() {
        let (c, p, clock) = (classifier(), policy(), ManualClock::new(0));
        let kb = FixedKb(Err(RagError::Backend("index offline".into())));
        let mut s = Session::new("s", 0);
        let r = route_turn(&mut s, "mune ma program api pa Pace", &c, &p, &kb, &clock);
        assert_eq!(r.route, Route::Fallback);
        assert!(r.trace_note.unwrap().contains("index offline"));
    }

    #[test]
    fn templates_rotate_per_intent() {
        let (c, p, kb, clock) = (classifier(), policy(), kb_ok(), ManualClock::new(0));
        let router = Router::new(&c, &p, &kb);
        let mut s = Session::new("s", 0);
        let replies: Vec<String> = (0..3).map(|_| router.route_turn(&mut s, "wadii", &clock).reply).collect();
        assert_eq!(replies, vec!["Hesi shamwari! Uri sei hako?", "Mhoro!", "Hesi shamwari! Uri sei hako?"]);
        let one = vec!["only".to_string()];
        assert_eq!(select_template(&one, s.history(), &"greeting".into()), Some("only"));
        assert_eq!(select_template(&[], s.history(), &"greeting".into()), None);
    }

    #[test]
    fn zero_threshold_never_falls_back_for_rule_intents() {
        let (c, clock, kb) = (classifier(), ManualClock::new(0), kb_ok());
        let p = policy().with_threshold(0.0).unwrap();
        let mut s = Session::new("s", 0);
        // the scripted classifier returns uniform scores, and "greeting" wins the tie
        let r = route_turn(&mut s, "something unseen", &c, &p, &kb, &clock);
        assert_eq!(r.route, Route::Rule);
    }

    #[test]
    fn log_export_round_trips_with_monotone_timestamps() {
        let (c, p, kb) = (classifier(), policy(), kb_ok());
        let clock = ManualClock::new(1_000);
        let router = Router::new(&c, &p, &kb);
        let mut s = Session::new("s", 1_000);
        for (t, text) in [(1_000, "wadii"), (1_500, "pace inoita mari?"), (1_200, "exit")] {
            clock.set(t);
            router.route_turn(&mut s, text, &clock);
        }
        let exported = s.export_log();
        assert_eq!(exported.lines().count(), 3);
        let parsed = parse_log(&exported).unwrap();
        assert_eq!(parsed, s.history());
        assert!(parsed.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        assert_eq!(s.last_active, 1_500);
    }

    proptest! {
        #[test]
        fn routing_invariants_hold(script in proptest::collection::vec(
            prop_oneof![
                Just("wadii"), Just("mune mufundisi here"), Just("pace inoita mari?"),
                Just("mune ma program api pa Pace"), Just("ndinoda ku apply"), Just("exit"),
                Just(""), Just("Tariro"), Just("random words"),
            ],
            0..20,
        )) {
            let (c, p, kb, clock) = (classifier(), policy(), kb_ok(), ManualClock::new(0));
            let router = Router::new(&c, &p, &kb);
            let mut s = Session::new("s", 0);
            let mut replay = Session::new("s", 0);
            for (i, text) in script.iter().enumerate() {
                let was_in_workflow = s.in_workflow();
                let r = router.route_turn(&mut s, text, &clock);
                prop_assert_eq!(s.history().len(), i + 1);
                prop_assert_eq!(r.session_terminated, r.route == Route::Exit);
                if r.route == Route::Exit {
                    prop_assert!(r.intent.is_none());
                    prop_assert!(!s.in_workflow());
                }
                if was_in_workflow {
                    prop_assert!(matches!(r.route, Route::Exit | Route::Workflow));
                }
                if r.route == Route::Rule {
                    let intent = r.intent.as_ref().unwrap();
                    prop_assert!(p.rules.templates(intent).unwrap().contains(&r.reply));
                }
                if r.route == Route::Fallback {
                    prop_assert!(r.reply == p.fallback_reply || r.reply == p.clarification_reply);
                }
                prop_assert_eq!(r.confidence.is_some(), r.intent.is_some());
                let again = router.route_turn(&mut replay, text, &clock);
                prop_assert_eq!(&again, &r);
            }
        }
    }
}
