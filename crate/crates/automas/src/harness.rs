//! Experiment runner: per-slot baselines, one AutoMAS workflow per episode,
//! CSV/JSON-lines/plot-data outputs, and the single-episode walkthrough.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use automas_core::agent::{MemoryStore, ReasoningEngine};
use automas_core::channel::{
    evolve_channel, generate_channel, sample_dataset, transmit_pilot, ChannelError, ChannelRealization,
    PilotFrame, ScenarioConfig, ScenarioId,
};
use automas_core::estimators::{fit_linear_estimator, nmse, AlgorithmClass, LinearEstimator};
use automas_core::orchestration::{
    channel_estimation_task, default_threshold_db, execute_workflow, observe_scenario, supervisor_plan,
    AgentPool, TraceRecord, ValidationContext, WorkflowError, WorkflowOutcome, WorkflowPlan, CODE_AGENT_ROLE,
};
use automas_core::rng::{domain, SeedSplitter};
use automas_core::selector::{SelectorEngine, SelectorRules, SELECTOR_ROLE};
use automas_core::suite::{EstimatorSuite, SuiteConfig, SuiteError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{resolve_preset, ConfigError, ConfigFile};
use crate::llm::{
    ChatEndpointConfig, HttpTransport, LlmEngine, LlmError, PromptTemplate, RecordingTransport,
    ReplayTransport, Transport, FALLBACK_TAG,
};
use crate::trace::write_trace;

pub const AUTOMAS_LABEL: &str = "AutoMAS";
pub const WALKTHROUGH_BOUND_DB: f64 = -12.0;
pub const WALKTHROUGH_INTENT: &str = "Estimate the channel of the user served in this area.";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("IO on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("no results to emit")]
    EmptyResults,
    #[error("replay transcript has no response for the selector prompt; steps fell back to the rule engine")]
    ReplayMiss,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub algorithm: String,
    pub trial: usize,
    pub slot: usize,
    /// NaN when the estimator could not run.
    pub nmse_db: f64,
    pub rounds_used: Option<u32>,
    pub wall_time_s: Option<f64>,
    pub reason: String,
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub algorithm: String,
    pub rows: usize,
    pub failed_rows: usize,
    pub mean_nmse_db: f64,
    pub std_nmse_db: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub traces: Vec<TraceRecord>,
    /// Algorithm AutoMAS settled on, per scenario and trial.
    pub selections: Vec<(String, usize, AlgorithmClass)>,
}

fn scenario_key(sc: &ScenarioConfig, index: usize) -> String {
    match sc.scenario_id {
        ScenarioId::Custom => format!("custom{index}"),
        id => id.label().to_string(),
    }
}

/// Learned filter trained on the named preset's full ground-truth budget.
pub fn train_checkpoint(
    preset: &str,
    ridge: f64,
    seeds: &SeedSplitter,
) -> Result<(LinearEstimator, String), HarnessError> {
    let sc = resolve_preset(preset)?;
    let n = sc.samples_available;
    let data = sample_dataset(&sc, n, true, &mut seeds.stream(domain::CHECKPOINT, 0))?;
    let est = fit_linear_estimator(&data, ridge).map_err(SuiteError::from)?;
    Ok((est, sc.scenario_id.label().to_string()))
}

/// The frames of one episode: an initial draw evolved over `slots` slots.
pub fn episode(
    sc: &ScenarioConfig,
    slots: usize,
    seeds: &SeedSplitter,
    trial: u32,
) -> Result<Vec<(PilotFrame, ChannelRealization)>, ChannelError> {
    let mut ch_rng = seeds.stream(domain::EPISODE, trial);
    let mut noise_rng = seeds.stream(domain::NOISE, trial);
    let mut out = Vec::with_capacity(slots);
    let mut ch = generate_channel(sc, &mut ch_rng)?;
    for s in 0..slots {
        if s > 0 {
            ch = evolve_channel(&ch, sc);
        }
        let f = transmit_pilot(&ch, sc, &mut noise_rng)?;
        out.push((f, ch.clone()));
    }
    Ok(out)
}

struct SlotScore {
    nmse_db: f64,
    wall_time_s: Option<f64>,
    reason: String,
}

fn score(
    suite: &EstimatorSuite,
    class: AlgorithmClass,
    frame: &PilotFrame,
    truth: &ChannelRealization,
    measure_time: bool,
) -> SlotScore {
    let t0 = Instant::now();
    let res = suite.estimate(class, frame);
    let wall = measure_time.then(|| t0.elapsed().as_secs_f64());
    match res
        .map_err(|e| e.reason())
        .and_then(|e| nmse(&e.h_hat, &truth.h).map_err(|_| "estimator-error"))
    {
        Ok(v) => SlotScore {
            nmse_db: v,
            wall_time_s: wall,
            reason: String::new(),
        },
        Err(reason) => SlotScore {
            nmse_db: f64::NAN,
            wall_time_s: None,
            reason: reason.to_string(),
        },
    }
}

struct TrialOutput {
    rows: Vec<ResultRow>,
    traces: Vec<TraceRecord>,
    selection: Option<AlgorithmClass>,
}

/// Runs one workflow against fresh validation frames for `trial`.
pub fn run_workflow(
    sc: &ScenarioConfig,
    suite: &EstimatorSuite,
    rules: &SelectorRules,
    seeds: &SeedSplitter,
    trial: u32,
    validation_frames: usize,
    threshold_db: f64,
) -> Result<WorkflowOutcome, HarnessError> {
    let v = ValidationContext::draw(
        suite,
        sc,
        validation_frames,
        threshold_db,
        &mut seeds.stream(domain::VALIDATION, trial),
    )?;
    let mut pool = AgentPool::standard(rules.clone(), &v)?;
    let task = channel_estimation_task();
    let o0 = observe_scenario(sc, WALKTHROUGH_INTENT);
    let plan = supervisor_plan(&task, &o0, &pool)?;
    Ok(execute_workflow(&plan, &mut pool, &task, &o0, &v)?)
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    cfg: &ConfigFile,
    sc: &ScenarioConfig,
    key: &str,
    suite: &EstimatorSuite,
    seeds: &SeedSplitter,
    trial: usize,
    workflow_id: u64,
) -> Result<TrialOutput, HarnessError> {
    let ex = &cfg.experiment;
    let frames = episode(sc, ex.time_slots, seeds, trial as u32)?;
    let mut rows = Vec::new();
    let mut cache: BTreeMap<(usize, AlgorithmClass), f64> = BTreeMap::new();
    for (slot, (frame, truth)) in frames.iter().enumerate() {
        for &class in &ex.algorithms {
            let s = score(suite, class, frame, truth, ex.measure_time);
            cache.insert((slot, class), s.nmse_db);
            rows.push(ResultRow {
                scenario: key.to_string(),
                algorithm: class.short_name().to_string(),
                trial,
                slot,
                nmse_db: s.nmse_db,
                rounds_used: None,
                wall_time_s: s.wall_time_s,
                reason: s.reason,
            });
        }
    }
    let mut traces = Vec::new();
    let mut selection = None;
    if ex.run_automas {
        let threshold = ex.threshold_db.unwrap_or_else(|| default_threshold_db(sc.snr_db));
        let outcome = run_workflow(
            sc,
            suite,
            &cfg.selector_rules,
            seeds,
            trial as u32,
            ex.validation_frames,
            threshold,
        )?;
        if ex.write_trace {
            traces = outcome.trace_records(workflow_id);
        }
        let class = outcome.algorithm;
        selection = Some(class);
        for (slot, (frame, truth)) in frames.iter().enumerate() {
            let s = match cache.get(&(slot, class)) {
                Some(&v) if !ex.measure_time => SlotScore {
                    nmse_db: v,
                    wall_time_s: None,
                    reason: if v.is_nan() {
                        "resource-unavailable".into()
                    } else {
                        String::new()
                    },
                },
                _ => score(suite, class, frame, truth, ex.measure_time),
            };
            rows.push(ResultRow {
                scenario: key.to_string(),
                algorithm: AUTOMAS_LABEL.to_string(),
                trial,
                slot,
                nmse_db: s.nmse_db,
                rounds_used: Some(outcome.rounds_used),
                wall_time_s: s.wall_time_s,
                reason: s.reason,
            });
        }
    }
    Ok(TrialOutput {
        rows,
        traces,
        selection,
    })
}

/// Runs every scenario of `cfg`. Output is a pure function of `cfg`,
/// independent of `parallel`.
pub fn run_experiment(cfg: &ConfigFile) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let ex = &cfg.experiment;
    let master = SeedSplitter::new(ex.master_seed);
    let suite_cfg: SuiteConfig = cfg.estimators.suite_config();
    let checkpoint = match &cfg.estimators.checkpoint_scenario {
        Some(name) => Some(train_checkpoint(name, suite_cfg.linear_ridge, &master)?),
        None => None,
    };
    let mut result = ExperimentResult::default();
    for (i, sc) in cfg.resolved_scenarios()?.iter().enumerate() {
        let key = scenario_key(sc, i);
        let seeds = master.child(i as u64);
        let suite = EstimatorSuite::prepare(sc, &suite_cfg, &seeds, checkpoint.clone())?;
        let base_id = (i * ex.trials) as u64;
        let outputs = run_trials(ex.trials, ex.parallel.max(1), |t| {
            run_trial(cfg, sc, &key, &suite, &seeds, t, base_id + t as u64)
        })?;
        for (t, out) in outputs.into_iter().enumerate() {
            result.rows.extend(out.rows);
            result.traces.extend(out.traces);
            if let Some(c) = out.selection {
                result.selections.push((key.clone(), t, c));
            }
        }
    }
    result.summary = summarize(&result.rows);
    Ok(result)
}

/// Runs `f` for every trial on `workers` threads; results are in trial order.
fn run_trials<T, F>(trials: usize, workers: usize, f: F) -> Result<Vec<T>, HarnessError>
where
    T: Send,
    F: Fn(usize) -> Result<T, HarnessError> + Sync,
{
    if workers <= 1 {
        return (0..trials).map(&f).collect();
    }
    let f = &f;
    let chunks: Vec<Vec<Result<T, HarnessError>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| s.spawn(move || (w..trials).step_by(workers).map(f).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("trial worker panicked"))
            .collect()
    });
    let mut iters: Vec<_> = chunks.into_iter().map(Vec::into_iter).collect();
    (0..trials)
        .map(|t| iters[t % workers].next().expect("every trial ran"))
        .collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

fn ordered_keys<K: PartialEq + Clone>(items: impl Iterator<Item = K>) -> Vec<K> {
    let mut out: Vec<K> = Vec::new();
    for k in items {
        if !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

/// Mean and sample standard deviation per scenario and algorithm over the
/// finite rows, in first-appearance order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let keys = ordered_keys(rows.iter().map(|r| (r.scenario.clone(), r.algorithm.clone())));
    keys.into_iter()
        .map(|(scenario, algorithm)| {
            let group: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.scenario == scenario && r.algorithm == algorithm)
                .collect();
            let finite: Vec<f64> = group.iter().map(|r| r.nmse_db).filter(|v| !v.is_nan()).collect();
            let (mean, std) = mean_std(&finite);
            let reason = group
                .iter()
                .find(|r| !r.reason.is_empty())
                .map(|r| r.reason.clone())
                .unwrap_or_default();
            SummaryRow {
                scenario,
                algorithm,
                rows: group.len(),
                failed_rows: group.len() - finite.len(),
                mean_nmse_db: mean,
                std_nmse_db: std,
                reason,
            }
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<(), HarnessError> {
    if rows.is_empty() {
        // header only, so readers still see the schema
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "scenario",
            "algorithm",
            "trial",
            "slot",
            "nmse_db",
            "rounds_used",
            "wall_time_s",
            "reason",
        ])?;
        return w.flush().map_err(io_err(path));
    }
    write_csv(path, rows)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<ResultRow>, _>>()?)
}

/// Writes `results.csv`, `summary.csv`, `trace.jsonl` (when traces exist)
/// and the per-scenario plot data into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_results(&dir.join("results.csv"), &result.rows)?;
    write_csv(&dir.join("summary.csv"), &result.summary)?;
    let trace_path = dir.join("trace.jsonl");
    write_trace(&trace_path, &result.traces).map_err(io_err(&trace_path))?;
    if !result.rows.is_empty() {
        emit_plot_data(&result.rows, dir)?;
    }
    Ok(())
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.6}")
    }
}

/// One `scenario_<id>.dat` per scenario: a header, then per slot the mean
/// NMSE (dB) across trials of each algorithm, whitespace separated.
pub fn emit_plot_data(rows: &[ResultRow], dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyResults);
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for scenario in ordered_keys(rows.iter().map(|r| r.scenario.as_str())) {
        let sr: Vec<&ResultRow> = rows.iter().filter(|r| r.scenario == scenario).collect();
        let algos = ordered_keys(sr.iter().map(|r| r.algorithm.as_str()));
        let slots = sr.iter().map(|r| r.slot).max().unwrap_or(0) + 1;
        let mut sums = vec![vec![(0.0f64, 0usize); algos.len()]; slots];
        for r in &sr {
            if r.nmse_db.is_nan() {
                continue;
            }
            let a = algos
                .iter()
                .position(|x| *x == r.algorithm)
                .expect("algorithm listed");
            let cell = &mut sums[r.slot][a];
            cell.0 += r.nmse_db;
            cell.1 += 1;
        }
        let mut text = String::from("slot");
        for a in &algos {
            text.push(' ');
            text.push_str(a);
        }
        text.push('\n');
        for (slot, cells) in sums.iter().enumerate() {
            text.push_str(&slot.to_string());
            for &(sum, n) in cells {
                text.push(' ');
                text.push_str(&format_value(if n == 0 { f64::NAN } else { sum / n as f64 }));
            }
            text.push('\n');
        }
        let path = dir.join(format!("scenario_{scenario}.dat"));
        fs::write(&path, text).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

/// Reasoning engine behind the selector in the walkthrough.
#[derive(Debug, Clone, PartialEq)]
pub enum SelectorBackend {
    Rule,
    /// Serves a recorded transcript; a miss is an error.
    Replay(PathBuf),
    /// Live endpoint, optionally recording every exchange.
    Live {
        endpoint: ChatEndpointConfig,
        record: Option<PathBuf>,
    },
}

#[derive(Debug, Clone)]
pub struct WalkthroughOptions {
    pub backend: SelectorBackend,
    pub master_seed: u64,
    pub time_slots: usize,
    /// Model name sent in replayed requests; part of the request hash.
    pub model_name: String,
}

pub const REPLAY_MODEL: &str = "selector-model";

impl Default for WalkthroughOptions {
    fn default() -> Self {
        Self {
            backend: SelectorBackend::Rule,
            master_seed: 2025,
            time_slots: 50,
            model_name: REPLAY_MODEL.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WalkthroughReport {
    pub plan: WorkflowPlan,
    pub outcome: WorkflowOutcome,
    pub algorithm: AlgorithmClass,
    /// Mean NMSE (dB) of the chosen estimator over the episode.
    pub mean_nmse_db: f64,
    pub lines: Vec<String>,
}

impl WalkthroughReport {
    pub fn passed(&self) -> bool {
        self.mean_nmse_db <= WALKTHROUGH_BOUND_DB
    }
}

fn selector_llm(
    backend: &SelectorBackend,
    model_name: &str,
    rules: &SelectorRules,
) -> Result<Option<LlmEngine<SelectorEngine>>, HarnessError> {
    let (endpoint, transport): (ChatEndpointConfig, Box<dyn Transport>) = match backend {
        SelectorBackend::Rule => return Ok(None),
        SelectorBackend::Replay(path) => {
            let mut ep = ChatEndpointConfig::new("replay://transcript", model_name)?;
            ep.max_retries = 0;
            (ep, Box::new(ReplayTransport::load(path)?))
        }
        SelectorBackend::Live { endpoint, record } => {
            let http = HttpTransport::new(endpoint.clone())?;
            let t: Box<dyn Transport> = match record {
                Some(p) => Box::new(RecordingTransport::new(http, p.clone())),
                None => Box::new(http),
            };
            (endpoint.clone(), t)
        }
    };
    let fallback = SelectorEngine::new(rules.clone()).notifying(CODE_AGENT_ROLE);
    Ok(Some(LlmEngine::new(
        endpoint,
        PromptTemplate::selector(),
        transport,
        fallback,
    )?))
}

/// Prompt the selector sees first in the Scenario-2 walkthrough.
pub fn walkthrough_selector_prompt() -> Vec<crate::llm::ChatMessage> {
    let sc = ScenarioConfig::open_area();
    let o0 = observe_scenario(&sc, WALKTHROUGH_INTENT);
    let mut memory: MemoryStore = automas_core::orchestration::selector_memory();
    memory.set_initial(o0.clone());
    PromptTemplate::selector().render(&channel_estimation_task(), &memory, &o0)
}

/// One Scenario-2 episode with the full trace rendered as text.
pub fn walkthrough(opts: &WalkthroughOptions) -> Result<WalkthroughReport, HarnessError> {
    let rules = SelectorRules::default();
    let engine = selector_llm(&opts.backend, &opts.model_name, &rules)?
        .map(|e| Box::new(e) as Box<dyn ReasoningEngine>);
    let replaying = matches!(opts.backend, SelectorBackend::Replay(_));
    walkthrough_with(opts, engine, replaying)
}

/// [`walkthrough`] with an explicit selector engine; `None` keeps the rule
/// engine. With `strict`, any fallback step is a [`HarnessError::ReplayMiss`].
pub fn walkthrough_with(
    opts: &WalkthroughOptions,
    selector: Option<Box<dyn ReasoningEngine + '_>>,
    strict: bool,
) -> Result<WalkthroughReport, HarnessError> {
    let sc = ScenarioConfig::open_area();
    let rules = SelectorRules::default();
    let seeds = SeedSplitter::new(opts.master_seed).child(1);
    let suite = EstimatorSuite::prepare(&sc, &SuiteConfig::default(), &seeds, None)?;
    let threshold = default_threshold_db(sc.snr_db);
    let v = ValidationContext::draw(
        &suite,
        &sc,
        automas_core::orchestration::DEFAULT_VALIDATION_FRAMES,
        threshold,
        &mut seeds.stream(domain::VALIDATION, 0),
    )?;
    let mut pool = AgentPool::standard(rules.clone(), &v)?;
    if let Some(engine) = selector {
        pool.set_engine(SELECTOR_ROLE, engine)?;
    }
    let task = channel_estimation_task();
    let o0 = observe_scenario(&sc, WALKTHROUGH_INTENT);
    let plan = supervisor_plan(&task, &o0, &pool)?;
    let outcome = execute_workflow(&plan, &mut pool, &task, &o0, &v)?;

    if strict
        && outcome
            .trace
            .iter()
            .any(|s| s.record.role == SELECTOR_ROLE && s.record.tag.as_deref() == Some(FALLBACK_TAG))
    {
        return Err(HarnessError::ReplayMiss);
    }

    let mut lines = vec![
        format!("scenario {} ({})", sc.scenario_id.label(), sc.scenario_id.name()),
        format!(
            "plan: roles [{}], closed loop {}, max rounds {}",
            plan.selected_roles.join(", "),
            plan.closed_loop,
            plan.max_rounds
        ),
    ];
    for s in &outcome.trace {
        let r = &s.record;
        let tag = r.tag.as_deref().map(|t| format!(" [{t}]")).unwrap_or_default();
        lines.push(format!(
            "round {} step {} {}{}: {} {} -> {}",
            s.round,
            r.observation.step,
            r.role,
            tag,
            r.action.variant_name(),
            r.action.args(),
            serde_json::Value::Object(r.observation.payload.clone())
        ));
    }
    let frames = episode(&sc, opts.time_slots.max(1), &seeds, 0)?;
    let mut total = 0.0;
    for (frame, truth) in &frames {
        let est = suite.estimate(outcome.algorithm, frame)?;
        total += nmse(&est.h_hat, &truth.h).map_err(SuiteError::from)?;
    }
    let mean = total / frames.len() as f64;
    lines.push(format!(
        "selected {} after {} round(s); validation NMSE {:.2} dB",
        outcome.algorithm.short_name(),
        outcome.rounds_used,
        outcome.mean_nmse_db
    ));
    lines.push(format!(
        "episode NMSE over {} slots: {:.2} dB (bound {WALKTHROUGH_BOUND_DB} dB)",
        frames.len(),
        mean
    ));
    Ok(WalkthroughReport {
        plan,
        algorithm: outcome.algorithm,
        outcome,
        mean_nmse_db: mean,
        lines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scenario: &str, algorithm: &str, slot: usize, v: f64) -> ResultRow {
        ResultRow {
            scenario: scenario.into(),
            algorithm: algorithm.into(),
            trial: 0,
            slot,
            nmse_db: v,
            rounds_used: None,
            wall_time_s: None,
            reason: if v.is_nan() {
                "resource-unavailable".into()
            } else {
                String::new()
            },
        }
    }

    #[test]
    fn summary_skips_failed_rows() {
        let rows = vec![
            row("1", "LS", 0, -10.0),
            row("1", "LS", 1, -12.0),
            row("1", "LMMSE", 0, f64::NAN),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].mean_nmse_db, -11.0);
        assert!((s[0].std_nmse_db - 2f64.sqrt()).abs() < 1e-12);
        assert!(s[1].mean_nmse_db.is_nan());
        assert_eq!(s[1].failed_rows, 1);
        assert_eq!(s[1].reason, "resource-unavailable");
    }

    #[test]
    fn parallel_order_matches_serial() {
        let serial = run_trials(7, 1, |t| Ok(t * t)).unwrap();
        let par = run_trials(7, 3, |t| Ok(t * t)).unwrap();
        assert_eq!(serial, par);
    }

    #[test]
    fn plot_data_requires_rows() {
        let dir = std::env::temp_dir();
        assert!(matches!(
            emit_plot_data(&[], &dir),
            Err(HarnessError::EmptyResults)
        ));
    }
}
