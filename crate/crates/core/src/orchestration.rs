//! Supervisor/executor orchestration.
//!
//! The supervisor turns a task into a [`WorkflowPlan`]: which executor roles
//! take part and which message routes connect them. For channel estimation
//! the plan is the closed loop `algorithm_selector -> code_agent ->
//! algorithm_selector`. Each round the selector picks a class and messages it
//! to the code agent, which binds scenario parameters to the matching
//! estimator tool, runs it on held-out validation frames and either accepts
//! the result or sends a [`DiagnosticReport`] back, which excludes that class
//! from the next selection.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::{
    payload, resume_agent_loop, run_agent_loop, Action, AgentError, ComputeBudget, Decision, EngineError,
    EnvSnapshot, LoopError, MemoryStore, Observation, Outbox, Payload, ReasoningEngine, ResourceSnapshot,
    StepRecord, TaskSpec, Toolbox,
};
use crate::channel::{
    generate_channel, transmit_pilot, ChannelError, ChannelRealization, PilotFrame, ScenarioConfig,
    ScenarioId,
};
use crate::estimators::{nmse, AlgorithmClass, Estimate, NMSE_CLIP_DB};
use crate::math;
use crate::selector::{extract_features_with, EnvFeatures, SelectorEngine, SelectorRules, SELECTOR_ROLE};
use crate::suite::{EstimatorSuite, SuiteError};

pub const CODE_AGENT_ROLE: &str = "code_agent";
pub const DEFAULT_MAX_ROUNDS: u32 = 3;
pub const DEFAULT_VALIDATION_FRAMES: usize = 20;
/// Step budget for one executor loop within a round.
pub const EXECUTOR_MAX_STEPS: usize = 8;

/// `max(-5, -SNR + 5)` dB.
pub fn default_threshold_db(snr_db: f64) -> f64 {
    (-snr_db + 5.0).max(-5.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowPlan {
    pub selected_roles: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub closed_loop: bool,
    pub max_rounds: u32,
}

impl WorkflowPlan {
    pub fn validate(&self) -> Result<(), WorkflowError> {
        if self.max_rounds == 0 {
            return Err(WorkflowError::InvalidPlan("max_rounds must be >= 1".into()));
        }
        let roles: BTreeSet<&str> = self.selected_roles.iter().map(String::as_str).collect();
        if roles.len() != self.selected_roles.len() {
            return Err(WorkflowError::InvalidPlan("duplicate role".into()));
        }
        for (a, b) in &self.edges {
            if !roles.contains(a.as_str()) || !roles.contains(b.as_str()) {
                return Err(WorkflowError::InvalidPlan(alloc::format!(
                    "edge {a} -> {b} leaves the selected roles"
                )));
            }
        }
        if self.closed_loop && !self.has_cycle() {
            return Err(WorkflowError::InvalidPlan("closed-loop plan has no cycle".into()));
        }
        Ok(())
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edges.iter().any(|(a, b)| a == from && b == to)
    }

    fn has_cycle(&self) -> bool {
        // a node reaches itself through at least one edge
        self.selected_roles.iter().any(|start| {
            let mut seen = BTreeSet::new();
            let mut stack: Vec<&str> = self
                .edges
                .iter()
                .filter(|(a, _)| a == start)
                .map(|(_, b)| b.as_str())
                .collect();
            while let Some(n) = stack.pop() {
                if n == start {
                    return true;
                }
                if seen.insert(n) {
                    stack.extend(self.edges.iter().filter(|(a, _)| a == n).map(|(_, b)| b.as_str()));
                }
            }
            false
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub rejected_algorithm: AlgorithmClass,
    pub observed_nmse_db: f64,
    pub threshold_db: f64,
    pub channel_features: EnvFeatures,
    pub round: u32,
    /// Why the round failed when no estimate was produced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkflowError {
    #[error("no workflow template matches the goal {0:?}")]
    UnsupportedTask(String),
    #[error("agent pool lacks role {0:?}")]
    PoolIncomplete(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("message {from} -> {to} is not on a plan edge")]
    RoutingViolation { from: String, to: String },
    #[error("role {0:?} is already in the pool")]
    DuplicateRole(String),
    #[error("{role} failed: {message}")]
    AgentFailed {
        role: String,
        message: String,
        trace: Vec<WorkflowStep>,
    },
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// One executor: its engine, the memory it starts each workflow with and its
/// toolbox.
pub struct Executor<'a> {
    pub engine: Box<dyn ReasoningEngine + 'a>,
    pub memory_template: MemoryStore,
    pub toolbox: Toolbox<'a>,
}

impl core::fmt::Debug for Executor<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Executor")
            .field("memory_template", &self.memory_template)
            .field("toolbox", &self.toolbox)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Default)]
pub struct AgentPool<'a> {
    executors: BTreeMap<String, Executor<'a>>,
}

impl<'a> AgentPool<'a> {
    pub fn new() -> Self {
        Self {
            executors: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, role: impl Into<String>, executor: Executor<'a>) -> Result<(), WorkflowError> {
        let role = role.into();
        if self.executors.contains_key(&role) {
            return Err(WorkflowError::DuplicateRole(role));
        }
        self.executors.insert(role, executor);
        Ok(())
    }

    pub fn contains(&self, role: &str) -> bool {
        self.executors.contains_key(role)
    }

    pub fn roles(&self) -> impl Iterator<Item = &str> {
        self.executors.keys().map(String::as_str)
    }

    /// The selector and code agent wired to `validation`, with rule engines.
    pub fn standard(
        rules: SelectorRules,
        validation: &'a ValidationContext<'a>,
    ) -> Result<Self, WorkflowError> {
        let mut pool = Self::new();
        pool.register(
            SELECTOR_ROLE,
            Executor {
                engine: Box::new(SelectorEngine::new(rules.clone()).notifying(CODE_AGENT_ROLE)),
                memory_template: selector_memory(),
                toolbox: Toolbox::new(),
            },
        )?;
        pool.register(
            CODE_AGENT_ROLE,
            Executor {
                engine: Box::new(CodeAgentEngine::new(validation.threshold_db, rules)),
                memory_template: code_agent_memory(),
                toolbox: estimator_toolbox(validation)?,
            },
        )?;
        Ok(pool)
    }

    /// Swaps a role's reasoning engine, keeping its memory and tools.
    pub fn set_engine(
        &mut self,
        role: &str,
        engine: Box<dyn ReasoningEngine + 'a>,
    ) -> Result<(), WorkflowError> {
        let ex = self
            .executors
            .get_mut(role)
            .ok_or_else(|| WorkflowError::PoolIncomplete(role.to_string()))?;
        ex.engine = engine;
        Ok(())
    }
}

pub fn selector_memory() -> MemoryStore {
    MemoryStore::new(
        "You are the algorithm selector. Weigh the environment and the available \
         resources against the strengths of the four estimator classes and pick one.",
    )
    .with_knowledge(
        "no_prior",
        "LS: no prior needed, cheap, error equals the noise level.",
    )
    .with_knowledge(
        "feature_driven",
        "ISTA: exploits sparse angular structure; suits open areas and high carriers.",
    )
    .with_knowledge(
        "statistics_driven",
        "LMMSE: needs the channel covariance; strongest in heavy noise.",
    )
    .with_knowledge(
        "data_driven",
        "Learned linear filter: needs many ground-truth samples; generalizes poorly.",
    )
}

pub fn code_agent_memory() -> MemoryStore {
    MemoryStore::new(
        "You are the code agent. Bind the scenario parameters to the chosen estimator, \
         run it on the validation frames and report whether it meets the threshold.",
    )
}

/// Plans a workflow. Only channel estimation has a template.
pub fn supervisor_plan(
    task: &TaskSpec,
    o0: &Observation,
    pool: &AgentPool<'_>,
) -> Result<WorkflowPlan, WorkflowError> {
    task.validate()?;
    o0.validate()?;
    let goal = task.goal.to_ascii_lowercase();
    if !(goal.contains("channel estimation") || goal.contains("estimate the channel")) {
        return Err(WorkflowError::UnsupportedTask(task.goal.clone()));
    }
    for role in [SELECTOR_ROLE, CODE_AGENT_ROLE] {
        if !pool.contains(role) {
            return Err(WorkflowError::PoolIncomplete(role.to_string()));
        }
    }
    Ok(WorkflowPlan {
        selected_roles: alloc::vec![SELECTOR_ROLE.to_string(), CODE_AGENT_ROLE.to_string()],
        edges: alloc::vec![
            (SELECTOR_ROLE.to_string(), CODE_AGENT_ROLE.to_string()),
            (CODE_AGENT_ROLE.to_string(), SELECTOR_ROLE.to_string()),
        ],
        closed_loop: true,
        max_rounds: DEFAULT_MAX_ROUNDS,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub from: String,
    pub to: String,
    pub body: Payload,
}

/// FIFO queues, one per plan edge.
#[derive(Debug, Clone)]
pub struct MessageRouter {
    plan: WorkflowPlan,
    queues: BTreeMap<(String, String), VecDeque<Payload>>,
    log: Vec<Message>,
}

impl MessageRouter {
    pub fn new(plan: &WorkflowPlan) -> Self {
        Self {
            plan: plan.clone(),
            queues: BTreeMap::new(),
            log: Vec::new(),
        }
    }

    pub fn route(&mut self, msg: Message) -> Result<(), WorkflowError> {
        if !self.plan.has_edge(&msg.from, &msg.to) {
            return Err(WorkflowError::RoutingViolation {
                from: msg.from,
                to: msg.to,
            });
        }
        self.queues
            .entry((msg.from.clone(), msg.to.clone()))
            .or_default()
            .push_back(msg.body.clone());
        self.log.push(msg);
        Ok(())
    }

    /// Next message on the edge `from -> to`.
    pub fn receive(&mut self, from: &str, to: &str) -> Option<Payload> {
        self.queues
            .get_mut(&(from.to_string(), to.to_string()))
            .and_then(VecDeque::pop_front)
    }

    /// Every routed message in send order.
    pub fn log(&self) -> &[Message] {
        &self.log
    }
}

impl Outbox for MessageRouter {
    fn send(&mut self, from_role: &str, to_role: &str, body: &Payload) -> Result<(), String> {
        self.route(Message {
            from: from_role.to_string(),
            to: to_role.to_string(),
            body: body.clone(),
        })
        .map_err(|e| e.to_string())
    }
}

/// Validates `msg` against `plan` and queues it on `router`.
pub fn route_message(router: &mut MessageRouter, msg: Message) -> Result<(), WorkflowError> {
    router.route(msg)
}

/// Held-out frames, their ground truth and the estimator resources the code
/// agent's tools run on.
#[derive(Debug)]
pub struct ValidationContext<'a> {
    pub suite: &'a EstimatorSuite,
    pub frames: Vec<(PilotFrame, ChannelRealization)>,
    pub threshold_db: f64,
}

impl<'a> ValidationContext<'a> {
    /// `n` fresh frames drawn from `rng`, independent of any training data.
    pub fn draw<R: Rng + ?Sized>(
        suite: &'a EstimatorSuite,
        scenario: &ScenarioConfig,
        n: usize,
        threshold_db: f64,
        rng: &mut R,
    ) -> Result<Self, ChannelError> {
        let frames = (0..n)
            .map(|_| {
                let ch = generate_channel(scenario, rng)?;
                let f = transmit_pilot(&ch, scenario, rng)?;
                Ok((f, ch))
            })
            .collect::<Result<Vec<_>, ChannelError>>()?;
        Ok(Self {
            suite,
            frames,
            threshold_db,
        })
    }

    /// Mean NMSE (dB) of `class` over the validation frames.
    pub fn evaluate(&self, class: AlgorithmClass) -> Result<f64, SuiteError> {
        if self.frames.is_empty() {
            return Err(SuiteError::Estimator(
                crate::estimators::EstimatorError::EmptyDataset,
            ));
        }
        let mut total = 0.0;
        for (frame, truth) in &self.frames {
            let est = self.suite.estimate(class, frame)?;
            total += nmse(&est.h_hat, &truth.h)?;
        }
        Ok(total / self.frames.len() as f64)
    }
}

fn arg_usize(args: &Payload, key: &str) -> Option<usize> {
    args.get(key).and_then(Value::as_u64).map(|v| v as usize)
}

/// One tool per estimator class, named by [`AlgorithmClass::tool_name`].
/// Each checks the bound `antenna_num` against the frames and returns
/// `{"mean_nmse_db", "frames", "algorithm"}`.
pub fn estimator_toolbox<'a>(validation: &'a ValidationContext<'a>) -> Result<Toolbox<'a>, WorkflowError> {
    let mut tools = Toolbox::new();
    for class in AlgorithmClass::ALL {
        tools.register_tool(class.tool_name(), move |args: &Payload| {
            let n_r = validation.frames.first().map(|(f, _)| f.y.len()).unwrap_or(0);
            match arg_usize(args, "antenna_num") {
                Some(n) if n == n_r => {}
                other => {
                    return Err(alloc::format!(
                        "antenna_num {other:?} does not match the {n_r}-element array"
                    ))
                }
            }
            let mean = validation.evaluate(class).map_err(|e| match e {
                SuiteError::ResourceUnavailable(_) => e.reason().to_string(),
                other => other.to_string(),
            })?;
            Ok(payload([
                ("algorithm", Value::from(class.name())),
                ("mean_nmse_db", Value::from(mean)),
                ("frames", Value::from(validation.frames.len())),
            ]))
        })?;
    }
    Ok(tools)
}

/// Deterministic code agent. For each assignment it thinks (parameter
/// binding), invokes the estimator tool, then finishes on success or sends a
/// diagnostic report to the selector and finishes on failure. A failing tool
/// counts as an observed NMSE of +300 dB.
#[derive(Debug, Clone)]
pub struct CodeAgentEngine {
    pub threshold_db: f64,
    rules: SelectorRules,
}

impl CodeAgentEngine {
    pub fn new(threshold_db: f64, rules: SelectorRules) -> Self {
        Self { threshold_db, rules }
    }
}

impl ReasoningEngine for CodeAgentEngine {
    fn decide(
        &mut self,
        _task: &TaskSpec,
        memory: &MemoryStore,
        _observation: &Observation,
    ) -> Result<Decision, EngineError> {
        let assignment = memory
            .received()
            .last()
            .ok_or_else(|| EngineError("no algorithm has been assigned".into()))?;
        let class = assignment
            .payload
            .get("algorithm")
            .and_then(Value::as_str)
            .and_then(AlgorithmClass::parse)
            .ok_or_else(|| EngineError("assignment names no known algorithm".into()))?;
        let o0 = memory
            .initial()
            .ok_or_else(|| EngineError("code agent has no initial observation".into()))?;
        let round = memory.received().len() as u32;
        let since = assignment.step;
        let recent: Vec<&(Action, Observation)> =
            memory.history().iter().filter(|(_, o)| o.step > since).collect();

        let tool_result = recent.iter().find_map(|(a, o)| match a {
            Action::InvokeTool { .. } => Some(o),
            _ => None,
        });
        let Some(result) = tool_result else {
            if recent.iter().any(|(a, _)| matches!(a, Action::Think { .. })) {
                return Ok(Action::InvokeTool {
                    tool_name: class.tool_name().to_string(),
                    args: bind_parameters(o0),
                }
                .into());
            }
            let args = bind_parameters(o0);
            let text: Vec<String> = args.iter().map(|(k, v)| alloc::format!("{k} = {v}")).collect();
            return Ok(Action::Think {
                rationale: alloc::format!("Running {} with {}.", class.name(), text.join(", ")),
            }
            .into());
        };

        let (observed, reason) = if result.is_error() {
            let detail = result
                .payload
                .get("detail")
                .and_then(Value::as_str)
                .unwrap_or("tool failed")
                .to_string();
            (NMSE_CLIP_DB, Some(detail))
        } else {
            let m = result
                .payload
                .get("mean_nmse_db")
                .and_then(Value::as_f64)
                .ok_or_else(|| EngineError("tool returned no NMSE".into()))?;
            (m, None)
        };
        let passed = observed <= self.threshold_db;
        let mut summary = payload([
            ("algorithm", Value::from(class.name())),
            ("mean_nmse_db", Value::from(observed)),
            ("passed", Value::from(passed)),
        ]);
        if passed {
            return Ok(Action::Finish { result: summary }.into());
        }
        let sent = recent
            .iter()
            .any(|(a, _)| matches!(a, Action::SendMessage { .. }));
        if sent {
            if let Some(r) = reason {
                summary.insert("reason".into(), Value::from(r));
            }
            return Ok(Action::Finish { result: summary }.into());
        }
        let features = extract_features_with(o0, &self.rules).map_err(|e| EngineError(e.to_string()))?;
        let report = DiagnosticReport {
            rejected_algorithm: class,
            observed_nmse_db: observed,
            threshold_db: self.threshold_db,
            channel_features: features,
            round,
            reason,
        };
        let body = match serde_json::to_value(&report) {
            Ok(Value::Object(m)) => m,
            _ => return Err(EngineError("could not encode diagnostic report".into())),
        };
        Ok(Action::SendMessage {
            to_role: SELECTOR_ROLE.to_string(),
            body,
        }
        .into())
    }
}

/// Translates the environment description into estimator arguments.
fn bind_parameters(o0: &Observation) -> Payload {
    let mut args = Payload::new();
    for key in ["antenna_num", "antenna_rows", "antenna_cols"] {
        if let Some(v) = o0.payload.get(key) {
            args.insert(key.to_string(), v.clone());
        }
    }
    if let Some(env) = &o0.environment {
        args.insert("noise_var".into(), Value::from(math::db_to_linear(-env.snr_db)));
        args.insert("carrier_ghz".into(), Value::from(env.carrier_ghz));
    }
    args
}

/// Environment and resource description of `scenario` as the agents see it.
pub fn observe_scenario(scenario: &ScenarioConfig, user_intent: &str) -> Observation {
    let location = match scenario.scenario_id {
        ScenarioId::OpenArea => "open area",
        ScenarioId::DenseLowNoise => "dense urban area",
        ScenarioId::DenseHighNoise => "dense urban area with heavy interference",
        ScenarioId::IndoorOffice => "indoor office",
        ScenarioId::Custom if scenario.open_area => "open area",
        ScenarioId::Custom => "unspecified area",
    };
    let obstruction = if scenario.los {
        "clear line of sight to the user"
    } else {
        "line of sight blocked; rich scattering"
    };
    let mut o = Observation::initial(
        user_intent,
        EnvSnapshot {
            snr_db: scenario.snr_db,
            carrier_ghz: scenario.carrier_ghz,
            open_area: scenario.open_area,
            location: location.to_string(),
            speed_mps: scenario.speed_mps,
            obstruction_note: obstruction.to_string(),
        },
        ResourceSnapshot {
            samples_available: scenario.samples_available,
            covariance_available: scenario.covariance_available,
            compute_budget: ComputeBudget::Normal,
            bandwidth_note: String::new(),
        },
    );
    o.payload = payload([
        ("scenario", Value::from(scenario.scenario_id.label())),
        ("antenna_rows", Value::from(scenario.array.rows)),
        ("antenna_cols", Value::from(scenario.array.cols)),
        ("antenna_num", Value::from(scenario.num_rx())),
        ("user_distance_m", Value::from(scenario.user_distance_m)),
    ]);
    o
}

/// A step of some executor in some round.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowStep {
    pub round: u32,
    pub record: StepRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub round: u32,
    pub algorithm: AlgorithmClass,
    pub mean_nmse_db: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowOutcome {
    pub plan: WorkflowPlan,
    /// The accepted class, or the best attempt after exhaustion.
    pub algorithm: AlgorithmClass,
    pub mean_nmse_db: f64,
    /// The chosen estimator on the last validation frame.
    pub estimate: Option<Estimate>,
    pub attempts: Vec<Attempt>,
    pub reports: Vec<DiagnosticReport>,
    pub rounds_used: u32,
    /// Every round failed validation.
    pub truncated: bool,
    pub trace: Vec<WorkflowStep>,
    pub messages: Vec<Message>,
}

fn deliver(memory: &mut MemoryStore, from: &str, mut body: Payload) -> Observation {
    body.insert("from".into(), Value::from(from));
    let msg = Observation::state(memory.last_step() + 1, body);
    memory.receive(msg.clone());
    msg
}

struct Running<'p, 'a> {
    executor: &'p mut Executor<'a>,
    memory: Option<MemoryStore>,
}

#[allow(clippy::too_many_arguments)]
fn run_role(
    role: &str,
    state: &mut Running<'_, '_>,
    task: &TaskSpec,
    latest: Observation,
    fresh: bool,
    router: &mut MessageRouter,
    round: u32,
    trace: &mut Vec<WorkflowStep>,
) -> Result<Option<Payload>, WorkflowError> {
    let memory = state.memory.take().expect("memory is restored after every run");
    let outcome = if fresh {
        run_agent_loop(
            role,
            &mut state.executor.engine,
            &mut state.executor.toolbox,
            memory,
            task,
            latest,
            EXECUTOR_MAX_STEPS,
            router,
        )
    } else {
        resume_agent_loop(
            role,
            &mut state.executor.engine,
            &mut state.executor.toolbox,
            memory,
            task,
            latest,
            EXECUTOR_MAX_STEPS,
            router,
        )
    };
    match outcome {
        Ok(out) => {
            trace.extend(out.trace.into_iter().map(|record| WorkflowStep { round, record }));
            state.memory = Some(out.memory);
            Ok(out.result)
        }
        Err(LoopError::Engine { error, partial }) => {
            trace.extend(
                partial
                    .trace
                    .into_iter()
                    .map(|record| WorkflowStep { round, record }),
            );
            Err(WorkflowError::AgentFailed {
                role: role.to_string(),
                message: error.0,
                trace: core::mem::take(trace),
            })
        }
        Err(LoopError::Setup(e)) => Err(e.into()),
    }
}

/// Runs the closed selector/code-agent loop for up to `plan.max_rounds`
/// rounds.
pub fn execute_workflow(
    plan: &WorkflowPlan,
    pool: &mut AgentPool<'_>,
    task: &TaskSpec,
    o0: &Observation,
    validation: &ValidationContext<'_>,
) -> Result<WorkflowOutcome, WorkflowError> {
    plan.validate()?;
    for role in &plan.selected_roles {
        if !pool.contains(role) {
            return Err(WorkflowError::PoolIncomplete(role.clone()));
        }
    }
    for role in [SELECTOR_ROLE, CODE_AGENT_ROLE] {
        if !plan.selected_roles.iter().any(|r| r == role) {
            return Err(WorkflowError::InvalidPlan(alloc::format!("plan lacks {role}")));
        }
    }
    let mut router = MessageRouter::new(plan);
    let mut trace = Vec::new();
    let (mut selector, mut coder) = {
        let mut it = pool.executors.iter_mut();
        let mut sel = None;
        let mut code = None;
        for (name, ex) in &mut it {
            if name == SELECTOR_ROLE {
                sel = Some(ex);
            } else if name == CODE_AGENT_ROLE {
                code = Some(ex);
            }
        }
        let sel = sel.expect("checked above");
        let code = code.expect("checked above");
        let sm = sel.memory_template.clone();
        let mut cm = code.memory_template.clone();
        cm.set_initial(o0.clone());
        (
            Running {
                executor: sel,
                memory: Some(sm),
            },
            Running {
                executor: code,
                memory: Some(cm),
            },
        )
    };

    let mut attempts: Vec<Attempt> = Vec::new();
    let mut reports = Vec::new();
    let mut rounds_used = 0;
    let mut accepted = false;

    for round in 1..=plan.max_rounds {
        rounds_used = round;
        // selector
        let (latest, fresh) = if round == 1 {
            (o0.clone(), true)
        } else {
            let body =
                router
                    .receive(CODE_AGENT_ROLE, SELECTOR_ROLE)
                    .ok_or_else(|| WorkflowError::AgentFailed {
                        role: CODE_AGENT_ROLE.to_string(),
                        message: "failed round produced no diagnostic report".into(),
                        trace: core::mem::take(&mut trace),
                    })?;
            let mem = selector.memory.as_mut().expect("present");
            (deliver(mem, CODE_AGENT_ROLE, body), false)
        };
        let sel_result = run_role(
            SELECTOR_ROLE,
            &mut selector,
            task,
            latest,
            fresh,
            &mut router,
            round,
            &mut trace,
        )?;
        let chosen = sel_result
            .as_ref()
            .and_then(|r| r.get("algorithm"))
            .and_then(Value::as_str)
            .and_then(AlgorithmClass::parse);
        let Some(chosen) = chosen else {
            return Err(WorkflowError::AgentFailed {
                role: SELECTOR_ROLE.to_string(),
                message: "selector did not finish with an algorithm".into(),
                trace,
            });
        };
        if attempts.iter().any(|a| a.algorithm == chosen) {
            return Err(WorkflowError::AgentFailed {
                role: SELECTOR_ROLE.to_string(),
                message: alloc::format!("{} was already rejected", chosen.name()),
                trace,
            });
        }
        // the selector may finish without messaging; the assignment is then
        // forwarded on its behalf along the same edge
        let assignment = match router.receive(SELECTOR_ROLE, CODE_AGENT_ROLE) {
            Some(body) => body,
            None => {
                let body = payload([("algorithm", Value::from(chosen.name()))]);
                route_message(
                    &mut router,
                    Message {
                        from: SELECTOR_ROLE.to_string(),
                        to: CODE_AGENT_ROLE.to_string(),
                        body: body.clone(),
                    },
                )?;
                router
                    .receive(SELECTOR_ROLE, CODE_AGENT_ROLE)
                    .expect("just routed")
            }
        };

        // code agent
        let mem = coder.memory.as_mut().expect("present");
        let latest = deliver(mem, SELECTOR_ROLE, assignment);
        let code_result = run_role(
            CODE_AGENT_ROLE,
            &mut coder,
            task,
            latest,
            false,
            &mut router,
            round,
            &mut trace,
        )?;
        let Some(result) = code_result else {
            return Err(WorkflowError::AgentFailed {
                role: CODE_AGENT_ROLE.to_string(),
                message: "code agent did not finish".into(),
                trace,
            });
        };
        let mean = result
            .get("mean_nmse_db")
            .and_then(Value::as_f64)
            .unwrap_or(NMSE_CLIP_DB);
        let passed = result.get("passed").and_then(Value::as_bool).unwrap_or(false);
        attempts.push(Attempt {
            round,
            algorithm: chosen,
            mean_nmse_db: mean,
            passed,
        });
        if passed {
            accepted = true;
            break;
        }
        // the report stays queued for the selector's next round
        let report = router
            .log()
            .iter()
            .rev()
            .find(|m| m.from == CODE_AGENT_ROLE && m.to == SELECTOR_ROLE)
            .and_then(|m| serde_json::from_value::<DiagnosticReport>(Value::Object(m.body.clone())).ok());
        match report {
            Some(r) if r.round == round => reports.push(r),
            _ => {
                return Err(WorkflowError::AgentFailed {
                    role: CODE_AGENT_ROLE.to_string(),
                    message: "failed round produced no diagnostic report".into(),
                    trace,
                })
            }
        }
    }

    let best = if accepted {
        *attempts.last().expect("accepted round recorded")
    } else {
        *attempts
            .iter()
            .min_by(|a, b| a.mean_nmse_db.total_cmp(&b.mean_nmse_db))
            .expect("at least one round ran")
    };
    let estimate = validation
        .frames
        .last()
        .and_then(|(f, _)| validation.suite.estimate(best.algorithm, f).ok());
    Ok(WorkflowOutcome {
        plan: plan.clone(),
        algorithm: best.algorithm,
        mean_nmse_db: best.mean_nmse_db,
        estimate,
        attempts,
        reports,
        rounds_used,
        truncated: !accepted,
        trace,
        messages: router.log().to_vec(),
    })
}

/// Flat, serializable view of one workflow step for JSON-lines traces.
/// `timestamp` is the step's position in the workflow, so traces are
/// reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub workflow_id: u64,
    pub round: u32,
    pub timestamp: u64,
    pub step: usize,
    pub role: String,
    pub action: String,
    pub args: Value,
    pub observation: Payload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl WorkflowOutcome {
    pub fn trace_records(&self, workflow_id: u64) -> Vec<TraceRecord> {
        self.trace
            .iter()
            .enumerate()
            .map(|(i, s)| TraceRecord {
                workflow_id,
                round: s.round,
                timestamp: i as u64,
                step: s.record.observation.step,
                role: s.record.role.clone(),
                action: s.record.action.variant_name().to_string(),
                args: s.record.action.args(),
                observation: s.record.observation.payload.clone(),
                tag: s.record.tag.clone(),
            })
            .collect()
    }
}

/// The standard channel-estimation task.
pub fn channel_estimation_task() -> TaskSpec {
    TaskSpec {
        id: "channel-estimation".into(),
        goal: "channel estimation for the served user".into(),
        constraints: alloc::vec!["use only the resources the scenario provides".into()],
    }
}
