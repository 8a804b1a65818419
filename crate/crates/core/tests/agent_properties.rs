use automas_core::agent::{
    payload, run_agent_loop, Action, ComputeBudget, Decision, EngineError, EnvSnapshot, MemoryStore,
    NoOutbox, Observation, ReasoningEngine, ResourceSnapshot, TaskSpec, Toolbox,
};
use automas_core::rng::{domain, SeedSplitter, SimRng};
use proptest::prelude::*;
use rand::Rng;
use serde_json::Value;

const TOOLS: [&str; 2] = ["ls_estimate", "echo"];
const NAMES: [&str; 4] = ["ls_estimate", "echo", "missing", ""];

/// Picks random actions and checks on every call that the memory it is
/// shown extends the memory it saw last time.
struct FuzzEngine {
    rng: SimRng,
    finish_weight: u32,
    seen: Vec<(Action, Observation)>,
    violations: usize,
}

impl FuzzEngine {
    fn new(seed: u64, finish_weight: u32) -> Self {
        Self {
            rng: SeedSplitter::new(seed).stream(domain::HOLDOUT, 9),
            finish_weight,
            seen: Vec::new(),
            violations: 0,
        }
    }
}

impl ReasoningEngine for FuzzEngine {
    fn decide(
        &mut self,
        _: &TaskSpec,
        memory: &MemoryStore,
        _: &Observation,
    ) -> Result<Decision, EngineError> {
        let h = memory.history();
        if h.len() < self.seen.len() || h[..self.seen.len()] != self.seen[..] {
            self.violations += 1;
        }
        self.seen = h.to_vec();
        let roll = self.rng.random_range(0..100);
        let action = if roll < self.finish_weight {
            Action::Finish {
                result: payload([("n", Value::from(h.len()))]),
            }
        } else if roll < 40 {
            Action::Think {
                rationale: format!("step {}", h.len()),
            }
        } else if roll < 80 {
            let name = NAMES[self.rng.random_range(0..NAMES.len())];
            Action::InvokeTool {
                tool_name: name.into(),
                args: payload([("x", Value::from(self.rng.random_range(0..10)))]),
            }
        } else {
            Action::SendMessage {
                to_role: "code_agent".into(),
                body: payload([]),
            }
        };
        Ok(action.into())
    }
}

fn o0() -> Observation {
    Observation::initial(
        "estimate the channel",
        EnvSnapshot {
            snr_db: 10.0,
            carrier_ghz: 60.0,
            open_area: true,
            location: "open area".into(),
            speed_mps: 1.5,
            obstruction_note: String::new(),
        },
        ResourceSnapshot {
            samples_available: 0,
            covariance_available: false,
            compute_budget: ComputeBudget::Normal,
            bandwidth_note: String::new(),
        },
    )
}

fn toolbox<'a>() -> Toolbox<'a> {
    let mut t = Toolbox::new();
    t.register_tool(TOOLS[0], |a: &automas_core::agent::Payload| {
        Ok(payload([("x", a.get("x").cloned().unwrap_or(Value::Null))]))
    })
    .unwrap();
    t.register_tool(TOOLS[1], |a: &automas_core::agent::Payload| {
        match a.get("x").and_then(Value::as_u64) {
            Some(x) if x % 3 == 0 => Err("multiple of three".to_string()),
            _ => Ok(a.clone()),
        }
    })
    .unwrap();
    t
}

fn run(seed: u64, finish_weight: u32, max_steps: usize) -> (automas_core::agent::AgentOutcome, usize) {
    let mut engine = FuzzEngine::new(seed, finish_weight);
    let task = TaskSpec::new("fuzz", "channel estimation").unwrap();
    let out = run_agent_loop(
        "selector",
        &mut engine,
        &mut toolbox(),
        MemoryStore::new("fuzz role"),
        &task,
        o0(),
        max_steps,
        &mut NoOutbox,
    )
    .unwrap();
    (out, engine.violations)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn fuzzed_engines_respect_loop_invariants(seed in any::<u64>(), fw in 0u32..20, max_steps in 1usize..40) {
        let (out, violations) = run(seed, fw, max_steps);
        prop_assert!(out.trace.len() <= max_steps);
        prop_assert_eq!(violations, 0);
        prop_assert_eq!(out.memory.history().len(), out.trace.len());
        for (i, (rec, (a, o))) in out.trace.iter().zip(out.memory.history()).enumerate() {
            prop_assert_eq!(&rec.action, a);
            prop_assert_eq!(&rec.observation, o);
            prop_assert_eq!(o.step, i + 1);
            if let Action::InvokeTool { tool_name, .. } = a {
                let legal = TOOLS.contains(&tool_name.as_str());
                let not_found = o.payload.get("error") == Some(&Value::from("tool_not_found"));
                prop_assert!(legal != not_found, "{tool_name:?} -> {:?}", o.payload);
            }
            if let Action::SendMessage { .. } = a {
                prop_assert!(o.is_error());
            }
        }
        match (&out.result, out.trace.last()) {
            (Some(_), Some(last)) => {
                let finished = matches!(last.action, Action::Finish { .. });
                prop_assert!(finished);
            }
            (None, _) => prop_assert_eq!(out.trace.len(), max_steps),
            (Some(_), None) => prop_assert!(false, "finished without a step"),
        }
        prop_assert_eq!(out.memory.initial(), Some(&o0()));
    }

    #[test]
    fn fuzzed_runs_replay_identically(seed in any::<u64>(), max_steps in 1usize..30) {
        let (a, _) = run(seed, 5, max_steps);
        let (b, _) = run(seed, 5, max_steps);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn actions_round_trip_through_json(seed in any::<u64>()) {
        let (out, _) = run(seed, 3, 20);
        for rec in &out.trace {
            let text = serde_json::to_string(&rec.action).unwrap();
            let back: Action = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(&back, &rec.action);
        }
    }
}
