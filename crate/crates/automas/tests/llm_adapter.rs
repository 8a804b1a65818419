use std::path::PathBuf;

use automas::harness::{
    walkthrough, walkthrough_selector_prompt, walkthrough_with, HarnessError, SelectorBackend,
    WalkthroughOptions, REPLAY_MODEL,
};
use automas::llm::{
    completion_body, parse_action, CannedTransport, ChatEndpointConfig, ChatRequest, LlmEngine, LlmError,
    PromptTemplate, RecordingTransport, ReplayTransport, Transport, FALLBACK_TAG, LLM_TAG,
};
use automas_core::agent::{payload, Action, ReasoningEngine};
use automas_core::channel::ScenarioConfig;
use automas_core::orchestration::{
    channel_estimation_task, observe_scenario, selector_memory, CODE_AGENT_ROLE,
};
use automas_core::selector::{SelectorEngine, SelectorRules};
use proptest::prelude::*;
use serde_json::Value;

const FINISH_ISTA: &str = r#"{"action":"finish","result":{"algorithm":"ISTA"}}"#;
const THINK: &str = r#"{"action":"think","rationale":"Open area at 60 GHz with a strong line of sight: few dominant paths, so the sparse angular estimator fits. No samples or covariance are available."}"#;

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/selector_scenario2.jsonl")
}

fn endpoint() -> ChatEndpointConfig {
    ChatEndpointConfig::new("http://127.0.0.1:9", REPLAY_MODEL).unwrap()
}

fn rule_engine() -> SelectorEngine {
    SelectorEngine::new(SelectorRules::default()).notifying(CODE_AGENT_ROLE)
}

fn decide_once(transport: Box<dyn Transport>) -> (automas_core::agent::Decision, Vec<String>) {
    let sc = ScenarioConfig::open_area();
    let o0 = observe_scenario(&sc, "estimate the channel");
    let mut memory = selector_memory();
    memory.set_initial(o0.clone());
    let mut e = LlmEngine::new(endpoint(), PromptTemplate::selector(), transport, rule_engine()).unwrap();
    let d = e.decide(&channel_estimation_task(), &memory, &o0).unwrap();
    (d, e.failures.clone())
}

#[test]
fn schema_reply_becomes_the_action() {
    let (d, failures) = decide_once(Box::new(CannedTransport::new([FINISH_ISTA])));
    assert_eq!(
        d.action,
        Action::Finish {
            result: payload([("algorithm", Value::from("ISTA"))])
        }
    );
    assert_eq!(d.tag.as_deref(), Some(LLM_TAG));
    assert!(failures.is_empty());
}

#[test]
fn prose_replies_fall_back_to_the_rule_engine() {
    let prose = "I would pick ISTA because the channel is sparse.";
    let (d, failures) = decide_once(Box::new(CannedTransport::new([prose, prose, prose])));
    assert_eq!(d.tag.as_deref(), Some(FALLBACK_TAG));
    assert_eq!(failures.len(), 3);
    let sc = ScenarioConfig::open_area();
    let o0 = observe_scenario(&sc, "estimate the channel");
    let mut memory = selector_memory();
    memory.set_initial(o0.clone());
    let direct = rule_engine()
        .decide(&channel_estimation_task(), &memory, &o0)
        .unwrap();
    assert_eq!(d.action, direct.action);
}

#[test]
fn one_bad_reply_is_repaired() {
    let (d, failures) = decide_once(Box::new(CannedTransport::new(["nope", FINISH_ISTA])));
    assert_eq!(d.tag.as_deref(), Some(LLM_TAG));
    assert_eq!(failures.len(), 1);
}

#[test]
fn transport_failure_never_aborts() {
    let (d, failures) = decide_once(Box::new(CannedTransport::new(Vec::<String>::new())));
    assert_eq!(d.tag.as_deref(), Some(FALLBACK_TAG));
    assert_eq!(failures.len(), 3);
}

#[test]
fn open_area_prompt_names_area_and_carrier() {
    let msgs = walkthrough_selector_prompt();
    let text: String = msgs.iter().map(|m| m.content.as_str()).collect();
    assert!(text.contains("open area"));
    assert!(text.contains("60"));
    assert_eq!(walkthrough_selector_prompt(), msgs);
}

#[test]
fn record_then_replay_gives_the_same_action() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let rec = RecordingTransport::new(CannedTransport::new([FINISH_ISTA]), &path);
    let (recorded, _) = decide_once(Box::new(rec));
    let replay = ReplayTransport::load(&path).unwrap();
    assert_eq!(replay.len(), 1);
    let (replayed, failures) = decide_once(Box::new(replay));
    assert_eq!(recorded, replayed);
    assert!(failures.is_empty());
}

#[test]
fn mutated_prompt_misses_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let mut rec = RecordingTransport::new(CannedTransport::new([FINISH_ISTA]), &path);
    let mut req = ChatRequest {
        model: "m".into(),
        messages: walkthrough_selector_prompt(),
        temperature: 0.0,
    };
    let body = rec.send(&req).unwrap();
    let mut replay = ReplayTransport::load(&path).unwrap();
    assert_eq!(replay.send(&req).unwrap(), body);
    req.messages[1].content.push(' ');
    assert!(matches!(replay.send(&req), Err(LlmError::CacheMiss(_))));
}

#[test]
fn empty_transcript_file_misses_every_call() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    std::fs::write(&path, "").unwrap();
    let mut replay = ReplayTransport::load(&path).unwrap();
    let req = ChatRequest {
        model: REPLAY_MODEL.into(),
        messages: walkthrough_selector_prompt(),
        temperature: 0.0,
    };
    assert!(matches!(replay.send(&req), Err(LlmError::CacheMiss(_))));
    let opts = WalkthroughOptions {
        backend: SelectorBackend::Replay(path),
        time_slots: 2,
        ..WalkthroughOptions::default()
    };
    assert!(matches!(walkthrough(&opts), Err(HarnessError::ReplayMiss)));
}

#[test]
fn pinned_transcript_selects_like_the_rule_engine() {
    let rule = walkthrough(&WalkthroughOptions {
        time_slots: 5,
        ..WalkthroughOptions::default()
    })
    .unwrap();
    let llm = walkthrough(&WalkthroughOptions {
        backend: SelectorBackend::Replay(fixture()),
        time_slots: 5,
        ..WalkthroughOptions::default()
    })
    .unwrap();
    assert_eq!(llm.algorithm, rule.algorithm);
    assert_eq!(llm.mean_nmse_db, rule.mean_nmse_db);
    assert!(llm
        .outcome
        .trace
        .iter()
        .any(|s| s.record.tag.as_deref() == Some(LLM_TAG)));
}

#[test]
fn full_fallback_matches_the_rule_run() {
    let opts = WalkthroughOptions {
        time_slots: 3,
        ..WalkthroughOptions::default()
    };
    let rule = walkthrough_with(&opts, None, false).unwrap();
    let prose: Vec<String> = vec!["no JSON here".into(); 64];
    let engine = LlmEngine::new(
        endpoint(),
        PromptTemplate::selector(),
        Box::new(CannedTransport::new(prose)),
        rule_engine(),
    )
    .unwrap();
    let fb = walkthrough_with(&opts, Some(Box::new(engine)), false).unwrap();
    assert_eq!(fb.algorithm, rule.algorithm);
    assert_eq!(fb.outcome.attempts, rule.outcome.attempts);
    assert_eq!(fb.outcome.reports, rule.outcome.reports);
    assert_eq!(fb.mean_nmse_db, rule.mean_nmse_db);
    let actions = |r: &automas::harness::WalkthroughReport| -> Vec<Action> {
        r.outcome.trace.iter().map(|s| s.record.action.clone()).collect()
    };
    assert_eq!(actions(&fb), actions(&rule));
}

/// Rewrites the pinned transcript from canned replies. Run with
/// `cargo test -p automas --test llm_adapter -- --ignored` after a prompt
/// change.
#[test]
#[ignore]
fn regenerate_pinned_transcript() {
    let path = fixture();
    let _ = std::fs::remove_file(&path);
    let rec = RecordingTransport::new(CannedTransport::new([THINK, FINISH_ISTA]), &path);
    let engine = LlmEngine::new(
        endpoint(),
        PromptTemplate::selector(),
        Box::new(rec),
        rule_engine(),
    )
    .unwrap();
    let opts = WalkthroughOptions {
        time_slots: 1,
        ..WalkthroughOptions::default()
    };
    let r = walkthrough_with(&opts, Some(Box::new(engine)), true).unwrap();
    assert_eq!(r.algorithm.short_name(), "ISTA");
}

fn legal_reply() -> impl Strategy<Value = String> {
    prop_oneof![
        ".*".prop_map(|r| serde_json::json!({"action": "think", "rationale": r}).to_string()),
        "[A-Za-z]{1,8}"
            .prop_map(|a| serde_json::json!({"action": "finish", "result": {"algorithm": a}}).to_string()),
    ]
}

proptest! {
    #[test]
    fn arbitrary_text_is_rejected_unless_it_is_an_action(s in ".*") {
        if let Ok(a) = parse_action(&s) {
            let back: Value = serde_json::from_str(&s).unwrap();
            prop_assert!(back.is_object());
            prop_assert_eq!(serde_json::to_value(&a).unwrap(), back);
        }
    }

    #[test]
    fn legal_replies_round_trip(s in legal_reply()) {
        let a = parse_action(&s).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), s);
    }

    #[test]
    fn wrapped_or_truncated_replies_are_rejected(s in legal_reply(), prefix in "[^ \t\r\n]{1,6}", cut in 1usize..10) {
        let prefixed = format!("{prefix}{s}");
        prop_assert!(parse_action(&prefixed).is_err());
        let doubled = format!("{s}{s}");
        prop_assert!(parse_action(&doubled).is_err());
        let end = s.len().saturating_sub(cut);
        if s.is_char_boundary(end) {
            prop_assert!(parse_action(&s[..end]).is_err());
        }
    }

    #[test]
    fn completion_bodies_carry_content(s in ".*") {
        prop_assert_eq!(automas::llm::extract_content(&completion_body(&s)).unwrap(), s);
    }
}
