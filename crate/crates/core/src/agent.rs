//! Single-agent observation/action loop.
//!
//! An agent owns a [`MemoryStore`], a [`Toolbox`] and a [`ReasoningEngine`].
//! Each step the engine sees the task, the memory and the latest observation
//! and returns one [`Action`]; the loop executes it, producing the next
//! observation, and appends the pair to memory. `Finish` ends the loop.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// String/number map carried by observations and actions.
pub type Payload = serde_json::Map<String, Value>;

/// Builds a [`Payload`] from `(key, value)` pairs.
pub fn payload<const N: usize>(entries: [(&str, Value); N]) -> Payload {
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub id: String,
    pub goal: String,
    #[serde(default)]
    pub constraints: Vec<String>,
}

impl TaskSpec {
    pub fn new(id: impl Into<String>, goal: impl Into<String>) -> Result<Self, AgentError> {
        let task = Self {
            id: id.into(),
            goal: goal.into(),
            constraints: Vec::new(),
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.goal.trim().is_empty() {
            return Err(AgentError::InvalidTask("goal must be nonempty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ComputeBudget {
    Low,
    #[default]
    Normal,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSnapshot {
    pub snr_db: f64,
    pub carrier_ghz: f64,
    pub open_area: bool,
    pub location: String,
    pub speed_mps: f64,
    pub obstruction_note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceSnapshot {
    pub samples_available: usize,
    pub covariance_available: bool,
    pub compute_budget: ComputeBudget,
    pub bandwidth_note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservationKind {
    Initial,
    State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    pub kind: ObservationKind,
    pub step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_intent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvSnapshot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resources: Option<ResourceSnapshot>,
    #[serde(default)]
    pub payload: Payload,
}

impl Observation {
    pub fn initial(
        user_intent: impl Into<String>,
        environment: EnvSnapshot,
        resources: ResourceSnapshot,
    ) -> Self {
        Self {
            kind: ObservationKind::Initial,
            step: 0,
            user_intent: Some(user_intent.into()),
            environment: Some(environment),
            resources: Some(resources),
            payload: Payload::new(),
        }
    }

    pub fn state(step: usize, payload: Payload) -> Self {
        Self {
            kind: ObservationKind::State,
            step,
            user_intent: None,
            environment: None,
            resources: None,
            payload,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let ok = match self.kind {
            ObservationKind::Initial => {
                self.step == 0
                    && self.user_intent.is_some()
                    && self.environment.is_some()
                    && self.resources.is_some()
            }
            ObservationKind::State => self.step >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(AgentError::InvalidObservation(self.kind))
        }
    }

    /// `true` for an observation reporting a failed action.
    pub fn is_error(&self) -> bool {
        self.payload.get("status").and_then(Value::as_str) == Some("error")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Think {
        rationale: String,
    },
    Finish {
        result: Payload,
    },
    InvokeTool {
        tool_name: String,
        #[serde(default)]
        args: Payload,
    },
    SendMessage {
        to_role: String,
        body: Payload,
    },
}

impl Action {
    pub fn variant_name(&self) -> &'static str {
        match self {
            Action::Think { .. } => "think",
            Action::Finish { .. } => "finish",
            Action::InvokeTool { .. } => "invoke_tool",
            Action::SendMessage { .. } => "send_message",
        }
    }

    /// The variant's arguments as one JSON value, for traces.
    pub fn args(&self) -> Value {
        let mut v = serde_json::to_value(self).unwrap_or(Value::Null);
        if let Value::Object(map) = &mut v {
            map.remove("action");
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub tag: String,
    pub text: String,
}

/// Role definition, domain knowledge and the append-only history of
/// `(action, observation)` pairs. Messages delivered by an orchestrator are
/// kept separately in arrival order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MemoryStore {
    pub role_definition: String,
    pub domain_knowledge: Vec<KnowledgeEntry>,
    initial: Option<Observation>,
    history: Vec<(Action, Observation)>,
    received: Vec<Observation>,
}

impl MemoryStore {
    pub fn new(role_definition: impl Into<String>) -> Self {
        Self {
            role_definition: role_definition.into(),
            ..Self::default()
        }
    }

    pub fn with_knowledge(mut self, tag: impl Into<String>, text: impl Into<String>) -> Self {
        self.domain_knowledge.push(KnowledgeEntry {
            tag: tag.into(),
            text: text.into(),
        });
        self
    }

    pub fn initial(&self) -> Option<&Observation> {
        self.initial.as_ref()
    }

    pub fn set_initial(&mut self, o0: Observation) {
        self.initial = Some(o0);
    }

    pub fn history(&self) -> &[(Action, Observation)] {
        &self.history
    }

    pub fn received(&self) -> &[Observation] {
        &self.received
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// Step of the newest observation in memory.
    pub fn last_step(&self) -> usize {
        let from_history = self.history.last().map(|(_, o)| o.step).unwrap_or(0);
        let from_inbox = self.received.last().map(|o| o.step).unwrap_or(0);
        from_history.max(from_inbox)
    }

    pub fn append(&mut self, action: Action, observation: Observation) {
        debug_assert!(observation.step >= self.history.last().map(|(_, o)| o.step).unwrap_or(0));
        self.history.push((action, observation));
    }

    pub fn receive(&mut self, message: Observation) {
        self.received.push(message);
    }
}

/// `M <- M u (a, o)`, by value.
pub fn append_memory(mut memory: MemoryStore, action: Action, observation: Observation) -> MemoryStore {
    memory.append(action, observation);
    memory
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("reasoning engine failed: {0}")]
pub struct EngineError(pub String);

/// An engine's choice plus an optional provenance tag (e.g. `"fallback"`).
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub tag: Option<String>,
}

impl From<Action> for Decision {
    fn from(action: Action) -> Self {
        Self { action, tag: None }
    }
}

pub trait ReasoningEngine {
    fn decide(
        &mut self,
        task: &TaskSpec,
        memory: &MemoryStore,
        observation: &Observation,
    ) -> Result<Decision, EngineError>;
}

impl<E: ReasoningEngine + ?Sized> ReasoningEngine for &mut E {
    fn decide(
        &mut self,
        task: &TaskSpec,
        memory: &MemoryStore,
        observation: &Observation,
    ) -> Result<Decision, EngineError> {
        (**self).decide(task, memory, observation)
    }
}

impl<E: ReasoningEngine + ?Sized> ReasoningEngine for Box<E> {
    fn decide(
        &mut self,
        task: &TaskSpec,
        memory: &MemoryStore,
        observation: &Observation,
    ) -> Result<Decision, EngineError> {
        (**self).decide(task, memory, observation)
    }
}

pub trait Tool {
    fn call(&mut self, args: &Payload) -> Result<Payload, String>;
}

impl<F: FnMut(&Payload) -> Result<Payload, String>> Tool for F {
    fn call(&mut self, args: &Payload) -> Result<Payload, String> {
        self(args)
    }
}

#[derive(Default)]
pub struct Toolbox<'a> {
    tools: BTreeMap<String, Box<dyn Tool + 'a>>,
}

impl fmt::Debug for Toolbox<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.tools.keys()).finish()
    }
}

impl<'a> Toolbox<'a> {
    pub fn new() -> Self {
        Self {
            tools: BTreeMap::new(),
        }
    }

    pub fn register_tool(&mut self, name: impl Into<String>, tool: impl Tool + 'a) -> Result<(), AgentError> {
        let name = name.into();
        if name.is_empty() {
            return Err(AgentError::Registration("tool name must be nonempty".into()));
        }
        if self.tools.contains_key(&name) {
            return Err(AgentError::Registration(alloc::format!(
                "tool {name:?} is already registered"
            )));
        }
        self.tools.insert(name, Box::new(tool));
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.keys().map(String::as_str)
    }

    fn invoke(&mut self, name: &str, args: &Payload) -> Option<Result<Payload, String>> {
        self.tools.get_mut(name).map(|t| t.call(args))
    }
}

/// Delivery channel for `SendMessage`. Orchestrators implement this to route
/// messages along their plan's edges.
pub trait Outbox {
    fn send(&mut self, from_role: &str, to_role: &str, body: &Payload) -> Result<(), String>;
}

/// Rejects every message; for agents that run outside a workflow.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoOutbox;

impl Outbox for NoOutbox {
    fn send(&mut self, _from: &str, to_role: &str, _body: &Payload) -> Result<(), String> {
        Err(alloc::format!("no route to {to_role:?} outside a workflow"))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("observation of kind {0:?} violates its invariants")]
    InvalidObservation(ObservationKind),
    #[error("tool registration failed: {0}")]
    Registration(String),
    #[error("max_steps must be at least 1")]
    NoSteps,
}

/// One executed step: the action, the observation it produced and the
/// engine's provenance tag.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub role: String,
    pub action: Action,
    pub observation: Observation,
    pub tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutcome {
    /// The `Finish` payload, or `None` when the step budget ran out.
    pub result: Option<Payload>,
    pub trace: Vec<StepRecord>,
    pub memory: MemoryStore,
}

impl AgentOutcome {
    pub fn truncated(&self) -> bool {
        self.result.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LoopError {
    #[error(transparent)]
    Setup(#[from] AgentError),
    #[error("{error}")]
    Engine {
        error: EngineError,
        partial: Box<AgentOutcome>,
    },
}

/// Runs a fresh loop from the initial observation `o0`.
#[allow(clippy::too_many_arguments)]
pub fn run_agent_loop(
    role: &str,
    engine: &mut dyn ReasoningEngine,
    toolbox: &mut Toolbox<'_>,
    mut memory: MemoryStore,
    task: &TaskSpec,
    o0: Observation,
    max_steps: usize,
    outbox: &mut dyn Outbox,
) -> Result<AgentOutcome, LoopError> {
    if o0.kind != ObservationKind::Initial {
        return Err(AgentError::InvalidObservation(o0.kind).into());
    }
    o0.validate()?;
    memory.set_initial(o0.clone());
    resume_agent_loop(role, engine, toolbox, memory, task, o0, max_steps, outbox)
}

/// Continues a loop from `latest`, which is either the memory's initial
/// observation or a message the orchestrator delivered.
#[allow(clippy::too_many_arguments)]
pub fn resume_agent_loop(
    role: &str,
    engine: &mut dyn ReasoningEngine,
    toolbox: &mut Toolbox<'_>,
    mut memory: MemoryStore,
    task: &TaskSpec,
    latest: Observation,
    max_steps: usize,
    outbox: &mut dyn Outbox,
) -> Result<AgentOutcome, LoopError> {
    task.validate()?;
    if max_steps == 0 {
        return Err(AgentError::NoSteps.into());
    }
    let mut trace = Vec::new();
    let mut obs = latest;
    for _ in 0..max_steps {
        let decision = match engine.decide(task, &memory, &obs) {
            Ok(d) => d,
            Err(error) => {
                return Err(LoopError::Engine {
                    error,
                    partial: Box::new(AgentOutcome {
                        result: None,
                        trace,
                        memory,
                    }),
                })
            }
        };
        let step = memory.last_step() + 1;
        let (next, finished) = execute(role, &decision.action, toolbox, outbox, step);
        memory.append(decision.action.clone(), next.clone());
        trace.push(StepRecord {
            role: role.to_string(),
            action: decision.action.clone(),
            observation: next.clone(),
            tag: decision.tag,
        });
        if finished {
            let result = match decision.action {
                Action::Finish { result } => result,
                _ => unreachable!("only finish terminates"),
            };
            return Ok(AgentOutcome {
                result: Some(result),
                trace,
                memory,
            });
        }
        obs = next;
    }
    Ok(AgentOutcome {
        result: None,
        trace,
        memory,
    })
}

fn error_payload(kind: &str, detail: Value) -> Payload {
    payload([
        ("status", Value::from("error")),
        ("error", Value::from(kind)),
        ("detail", detail),
    ])
}

fn execute(
    role: &str,
    action: &Action,
    toolbox: &mut Toolbox<'_>,
    outbox: &mut dyn Outbox,
    step: usize,
) -> (Observation, bool) {
    let body = match action {
        Action::Think { .. } => payload([("event", Value::from("thought"))]),
        Action::Finish { .. } => {
            return (
                Observation::state(step, payload([("event", Value::from("finish"))])),
                true,
            )
        }
        Action::InvokeTool { tool_name, args } => match toolbox.invoke(tool_name, args) {
            None => error_payload("tool_not_found", Value::from(tool_name.as_str())),
            Some(Err(msg)) => {
                let mut p = error_payload("tool_failed", Value::from(msg));
                p.insert("tool".into(), Value::from(tool_name.as_str()));
                p
            }
            Some(Ok(mut out)) => {
                out.entry("status").or_insert_with(|| Value::from("ok"));
                out.insert("tool".into(), Value::from(tool_name.as_str()));
                out
            }
        },
        Action::SendMessage { to_role, body } => match outbox.send(role, to_role, body) {
            Ok(()) => payload([
                ("status", Value::from("delivered")),
                ("to", Value::from(to_role.as_str())),
            ]),
            Err(msg) => error_payload("routing_violation", Value::from(msg)),
        },
    };
    (Observation::state(step, body), false)
}
