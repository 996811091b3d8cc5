//! Scripted oracle policies: deterministic agent backends for fully offline
//! verification of the episode engine, the classifier, and the metric stack.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::Action;

use super::{AgentBackend, CompletionRequest, CompletionResult, GatewayError};

/// Deterministic turn policies. Output depends only on (policy, seed,
/// history length), so identical requests always produce identical results.
#[derive(Debug, Clone, PartialEq)]
pub enum ScriptedPolicy {
    /// Always COUNTER: the rigid-solver signature.
    Hardline,
    /// COUNTER for the first `concede_turn` turns, CONCEDE once, then
    /// SUPPORT: the qualified-sampler signature.
    Conceder { concede_turn: u32 },
    /// Cycles COUNTER, OPPOSE, CONCEDE, COUNTER with a per-agent phase
    /// drawn from the seed. Any two agents with distinct phases mod 4 can
    /// never jointly land on conciliatory stances in the same round, so
    /// local variation stays high while joint agreement never forms.
    ActiveUnresolved,
    /// Wraps another policy and replaces its output with malformed text
    /// with probability `p_error`, via a per-turn seeded draw.
    Noisy {
        p_error: f64,
        inner: Box<ScriptedPolicy>,
    },
}

const ACTIVE_UNRESOLVED_CYCLE: [Action; 4] = [
    Action::Counter,
    Action::Oppose,
    Action::Concede,
    Action::Counter,
];

impl ScriptedPolicy {
    /// Canonical policy id, also accepted by [`ScriptedPolicy::parse`].
    pub fn id(&self) -> String {
        match self {
            ScriptedPolicy::Hardline => "hardline".to_string(),
            ScriptedPolicy::Conceder { concede_turn } => format!("conceder({concede_turn})"),
            ScriptedPolicy::ActiveUnresolved => "active_unresolved".to_string(),
            ScriptedPolicy::Noisy { p_error, inner } => {
                format!("noisy({p_error},{})", inner.id())
            }
        }
    }

    /// Parses ids like `hardline`, `conceder(2)`, `active_unresolved`,
    /// `noisy(1.0,hardline)`. Noisy wrappers nest.
    pub fn parse(text: &str) -> Result<ScriptedPolicy, PolicyParseError> {
        let text = text.trim();
        if text == "hardline" {
            return Ok(ScriptedPolicy::Hardline);
        }
        if text == "active_unresolved" {
            return Ok(ScriptedPolicy::ActiveUnresolved);
        }
        if let Some(args) = strip_call(text, "conceder") {
            let concede_turn = args
                .trim()
                .parse::<u32>()
                .map_err(|_| PolicyParseError::BadArgument(text.to_string()))?;
            return Ok(ScriptedPolicy::Conceder { concede_turn });
        }
        if let Some(args) = strip_call(text, "noisy") {
            let (p_text, inner_text) = args
                .split_once(',')
                .ok_or_else(|| PolicyParseError::BadArgument(text.to_string()))?;
            let p_error = p_text
                .trim()
                .parse::<f64>()
                .map_err(|_| PolicyParseError::BadArgument(text.to_string()))?;
            if !(0.0..=1.0).contains(&p_error) {
                return Err(PolicyParseError::BadArgument(text.to_string()));
            }
            let inner = Box::new(ScriptedPolicy::parse(inner_text)?);
            return Ok(ScriptedPolicy::Noisy { p_error, inner });
        }
        Err(PolicyParseError::Unknown(text.to_string()))
    }
}

fn strip_call<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    text.strip_prefix(name)?
        .strip_prefix('(')?
        .strip_suffix(')')
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PolicyParseError {
    #[error("unknown scripted policy id: {0}")]
    Unknown(String),
    #[error("bad scripted policy argument in: {0}")]
    BadArgument(String),
}

impl From<PolicyParseError> for GatewayError {
    fn from(err: PolicyParseError) -> GatewayError {
        GatewayError::UnknownPolicy(err.to_string())
    }
}

/// Seed for one actor's policy within one run. The actor index lands in the
/// low bits, so up to four actors in the same episode get distinct
/// active-unresolved phases (mod 4) regardless of the run seed.
pub fn actor_seed(run_seed: u64, actor_index: usize) -> u64 {
    run_seed.wrapping_mul(4).wrapping_add(actor_index as u64)
}

fn turn_rng(rng_seed: u64, history_len: u32) -> ChaCha8Rng {
    let mixed = rng_seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(u64::from(history_len));
    ChaCha8Rng::seed_from_u64(mixed)
}

fn action_line(action: Action, message: &str) -> String {
    format!("ACTION: {}\n{}", action.token(), message)
}

const MALFORMED_TEXT: &str =
    "After weighing the briefing materials we believe further consultation is required \
     before committing to any position.";

/// The pure turn function behind every scripted backend: maps (policy, seed,
/// history length) to the raw text the backend returns for that turn.
pub fn scripted_turn(policy: &ScriptedPolicy, rng_seed: u64, history_len: u32) -> String {
    match policy {
        ScriptedPolicy::Hardline => action_line(
            Action::Counter,
            "We cannot accept this framing and table a revised draft of our original terms.",
        ),
        ScriptedPolicy::Conceder { concede_turn } => {
            if history_len < *concede_turn {
                action_line(
                    Action::Counter,
                    "We decline the current draft and propose adjusted thresholds.",
                )
            } else if history_len == *concede_turn {
                action_line(
                    Action::Concede,
                    "We can live with the adjusted thresholds and withdraw our earlier objection.",
                )
            } else {
                action_line(Action::Support, "We back the amended package as it stands.")
            }
        }
        ScriptedPolicy::ActiveUnresolved => {
            let phase = (rng_seed % 4) as u32;
            let action = ACTIVE_UNRESOLVED_CYCLE[((history_len + phase) % 4) as usize];
            let message = match action {
                Action::Counter => "We reject the draft and put a narrower carveout forward.",
                Action::Oppose => "We object to the cost-allocation clause as written.",
                Action::Concede => "We drop our demand on the review window.",
                _ => "We note the current direction.",
            };
            action_line(action, message)
        }
        ScriptedPolicy::Noisy { p_error, inner } => {
            let mut rng = turn_rng(rng_seed, history_len);
            if rng.gen_bool(p_error.clamp(0.0, 1.0)) {
                MALFORMED_TEXT.to_string()
            } else {
                scripted_turn(inner, rng_seed, history_len)
            }
        }
    }
}

/// Agent backend driven by a scripted policy.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    name: String,
    policy: ScriptedPolicy,
    rng_seed: u64,
}

impl ScriptedBackend {
    pub fn new(policy: ScriptedPolicy, rng_seed: u64) -> Self {
        ScriptedBackend {
            name: format!("scripted:{}", policy.id()),
            policy,
            rng_seed,
        }
    }
}

impl AgentBackend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &CompletionRequest) -> CompletionResult {
        let text = scripted_turn(&self.policy, self.rng_seed, request.agent_turn_index);
        CompletionResult::text(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ReasoningMode;
    use crate::gateway::{PromptSection, SectionKind};

    fn first_line(text: &str) -> &str {
        text.lines().next().unwrap_or("")
    }

    #[test]
    fn hardline_always_counters() {
        for history_len in 0..20 {
            let text = scripted_turn(&ScriptedPolicy::Hardline, 99, history_len);
            assert_eq!(first_line(&text), "ACTION: COUNTER");
        }
    }

    #[test]
    fn conceder_sequence_matches_definition() {
        let policy = ScriptedPolicy::Conceder { concede_turn: 2 };
        let tokens: Vec<&str> = (0..6)
            .map(|i| match first_line(&scripted_turn(&policy, 0, i)) {
                "ACTION: COUNTER" => "COUNTER",
                "ACTION: CONCEDE" => "CONCEDE",
                "ACTION: SUPPORT" => "SUPPORT",
                other => panic!("unexpected header {other}"),
            })
            .collect();
        assert_eq!(
            tokens,
            vec!["COUNTER", "COUNTER", "CONCEDE", "SUPPORT", "SUPPORT", "SUPPORT"]
        );
    }

    #[test]
    fn active_unresolved_cycles_with_seeded_phase() {
        // Phase 0: COUNTER, OPPOSE, CONCEDE, COUNTER, then repeats.
        let seq: Vec<String> = (0..8)
            .map(|i| first_line(&scripted_turn(&ScriptedPolicy::ActiveUnresolved, 4, i)).to_string())
            .collect();
        assert_eq!(
            seq,
            vec![
                "ACTION: COUNTER",
                "ACTION: OPPOSE",
                "ACTION: CONCEDE",
                "ACTION: COUNTER",
                "ACTION: COUNTER",
                "ACTION: OPPOSE",
                "ACTION: CONCEDE",
                "ACTION: COUNTER",
            ]
        );
        // Phase 1 shifts the cycle by one turn.
        assert_eq!(
            first_line(&scripted_turn(&ScriptedPolicy::ActiveUnresolved, 5, 0)),
            "ACTION: OPPOSE"
        );
    }

    #[test]
    fn noisy_one_is_always_malformed() {
        let policy = ScriptedPolicy::Noisy {
            p_error: 1.0,
            inner: Box::new(ScriptedPolicy::Hardline),
        };
        for i in 0..10 {
            let text = scripted_turn(&policy, 3, i);
            assert!(!text.starts_with("ACTION:"), "turn {i} should be malformed");
        }
    }

    #[test]
    fn noisy_zero_is_transparent() {
        let policy = ScriptedPolicy::Noisy {
            p_error: 0.0,
            inner: Box::new(ScriptedPolicy::Hardline),
        };
        for i in 0..10 {
            assert_eq!(
                scripted_turn(&policy, 3, i),
                scripted_turn(&ScriptedPolicy::Hardline, 3, i)
            );
        }
    }

    #[test]
    fn noisy_draws_are_deterministic_per_turn() {
        let policy = ScriptedPolicy::Noisy {
            p_error: 0.5,
            inner: Box::new(ScriptedPolicy::Hardline),
        };
        let a: Vec<String> = (0..30).map(|i| scripted_turn(&policy, 11, i)).collect();
        let b: Vec<String> = (0..30).map(|i| scripted_turn(&policy, 11, i)).collect();
        assert_eq!(a, b);
        // A 0.5 error rate over 30 turns should produce both kinds.
        assert!(a.iter().any(|t| t.starts_with("ACTION:")));
        assert!(a.iter().any(|t| !t.starts_with("ACTION:")));
    }

    #[test]
    fn policy_ids_round_trip() {
        let policies = vec![
            ScriptedPolicy::Hardline,
            ScriptedPolicy::Conceder { concede_turn: 2 },
            ScriptedPolicy::ActiveUnresolved,
            ScriptedPolicy::Noisy {
                p_error: 1.0,
                inner: Box::new(ScriptedPolicy::Conceder { concede_turn: 3 }),
            },
        ];
        for policy in policies {
            assert_eq!(ScriptedPolicy::parse(&policy.id()).unwrap(), policy);
        }
        assert!(ScriptedPolicy::parse("stubborn").is_err());
        assert!(ScriptedPolicy::parse("noisy(2.0,hardline)").is_err());
    }

    #[test]
    fn identical_requests_yield_identical_results() {
        let backend = ScriptedBackend::new(ScriptedPolicy::Conceder { concede_turn: 1 }, 17);
        let request = CompletionRequest {
            prompt_sections: vec![PromptSection {
                kind: SectionKind::System,
                text: "anything".into(),
            }],
            max_output_tokens: 384,
            temperature: 0.7,
            reasoning_mode: ReasoningMode::Off,
            timeout_ms: 1000,
            seed: Some(1),
            agent_turn_index: 1,
        };
        assert_eq!(backend.complete(&request), backend.complete(&request));
        assert_eq!(
            backend.complete(&request).text_ref().map(first_line),
            Some("ACTION: CONCEDE")
        );
    }

    #[test]
    fn actor_seeds_give_distinct_unresolved_phases() {
        for run_seed in [0u64, 1, 42, u64::MAX - 3] {
            let phases: Vec<u64> = (0..4).map(|i| actor_seed(run_seed, i) % 4).collect();
            let mut sorted = phases.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 4, "phases {phases:?} collide for seed {run_seed}");
        }
    }
}
