//! Shared vocabulary for negotiation runs: actions, outcomes, turns, runs,
//! scenarios, and condition definitions, plus the canonical line-oriented
//! run-record schema every other module reads and writes.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version stamped into every serialized run record. Readers reject lines
/// written under a different version.
pub const SCHEMA_VERSION: u32 = 1;

/// One of the five public negotiation moves an agent can emit per turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Support,
    Oppose,
    Concede,
    Counter,
    Exit,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Support,
        Action::Oppose,
        Action::Concede,
        Action::Counter,
        Action::Exit,
    ];

    /// Canonical wire token for this action.
    pub fn token(self) -> &'static str {
        match self {
            Action::Support => "SUPPORT",
            Action::Oppose => "OPPOSE",
            Action::Concede => "CONCEDE",
            Action::Counter => "COUNTER",
            Action::Exit => "EXIT",
        }
    }

    /// Parses a token after case folding and whitespace trimming. Returns
    /// `None` for anything outside the five-action alphabet.
    pub fn from_token(token: &str) -> Option<Action> {
        let folded = token.trim().to_ascii_uppercase();
        Action::ALL.into_iter().find(|a| a.token() == folded)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Largest attainable per-run action entropy given the five-action alphabet.
pub fn max_action_entropy_bits() -> f64 {
    (Action::ALL.len() as f64).log2()
}

/// Terminal outcome of a completed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Compromise,
    Consensus,
    AuthorityDecision,
    Deadlock,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [
        Outcome::Compromise,
        Outcome::Consensus,
        Outcome::AuthorityDecision,
        Outcome::Deadlock,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Outcome::Compromise => "COMPROMISE",
            Outcome::Consensus => "CONSENSUS",
            Outcome::AuthorityDecision => "AUTHORITY_DECISION",
            Outcome::Deadlock => "DEADLOCK",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Why a turn's raw text failed to parse into an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatErrorReason {
    MissingHeader,
    UnknownToken,
    EmptyOutput,
}

/// Why a backend call produced no text for a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderErrorReason {
    Timeout,
    Transport,
    RateLimit,
    MalformedResponse,
}

/// What a turn resolved to: exactly one of a parsed action, a format error,
/// or a provider error. Format and provider errors are separate channels and
/// are never conflated downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum TurnParse {
    Action(Action),
    FormatError(FormatErrorReason),
    ProviderError(ProviderErrorReason),
}

impl TurnParse {
    pub fn action(self) -> Option<Action> {
        match self {
            TurnParse::Action(a) => Some(a),
            _ => None,
        }
    }

    pub fn is_format_error(self) -> bool {
        matches!(self, TurnParse::FormatError(_))
    }

    pub fn is_provider_error(self) -> bool {
        matches!(self, TurnParse::ProviderError(_))
    }
}

/// One agent turn inside a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    /// 0-based position of this turn within the whole run.
    pub turn_index: u32,
    pub agent_id: String,
    /// Complete text returned by the backend, including any private section.
    pub raw_text: String,
    pub parsed: TurnParse,
    pub latency_ms: u64,
    pub tokens_out: u64,
}

impl TurnRecord {
    pub fn action(
        turn_index: u32,
        agent_id: impl Into<String>,
        raw_text: impl Into<String>,
        action: Action,
    ) -> Self {
        TurnRecord {
            turn_index,
            agent_id: agent_id.into(),
            raw_text: raw_text.into(),
            parsed: TurnParse::Action(action),
            latency_ms: 0,
            tokens_out: 0,
        }
    }

    pub fn format_error(
        turn_index: u32,
        agent_id: impl Into<String>,
        raw_text: impl Into<String>,
        reason: FormatErrorReason,
    ) -> Self {
        TurnRecord {
            turn_index,
            agent_id: agent_id.into(),
            raw_text: raw_text.into(),
            parsed: TurnParse::FormatError(reason),
            latency_ms: 0,
            tokens_out: 0,
        }
    }

    pub fn provider_error(
        turn_index: u32,
        agent_id: impl Into<String>,
        reason: ProviderErrorReason,
    ) -> Self {
        TurnRecord {
            turn_index,
            agent_id: agent_id.into(),
            raw_text: String::new(),
            parsed: TurnParse::ProviderError(reason),
            latency_ms: 0,
            tokens_out: 0,
        }
    }
}

/// Per-run metric block stored on every record. All fields are recomputable
/// from the turn list; `validate_run_record` checks that they match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Shannon entropy in bits over parsed action types within the run.
    pub action_entropy: f64,
    pub concession_arc: bool,
    pub parse_success: bool,
    pub provider_error_turns: u32,
    pub format_error_turns: u32,
    /// Set when the run contains zero parsed actions; entropy is reported
    /// as 0.0 and the run is flagged as degenerate.
    pub no_parsed_actions: bool,
}

impl RunMetrics {
    /// Recomputes the full metric block from a turn list. This is the single
    /// assembly point used by both the episode runner and the validator.
    pub fn from_turns(turns: &[TurnRecord]) -> Self {
        let parsed_count = turns.iter().filter(|t| t.parsed.action().is_some()).count();
        RunMetrics {
            action_entropy: crate::metrics::action_entropy_of_turns(turns),
            concession_arc: crate::scenario::detect_concession_arc(turns),
            parse_success: crate::parser::parse_success_of_run(turns),
            provider_error_turns: turns.iter().filter(|t| t.parsed.is_provider_error()).count()
                as u32,
            format_error_turns: turns.iter().filter(|t| t.parsed.is_format_error()).count() as u32,
            no_parsed_actions: parsed_count == 0,
        }
    }
}

/// Agreement detected by the episode engine before termination, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementKind {
    Compromise,
    Consensus,
}

impl From<AgreementKind> for Outcome {
    fn from(kind: AgreementKind) -> Outcome {
        match kind {
            AgreementKind::Compromise => Outcome::Compromise,
            AgreementKind::Consensus => Outcome::Consensus,
        }
    }
}

/// Snapshot of the negotiation state at termination. Stored on the record so
/// the authority-minimum-turn rule can be re-applied to finished runs without
/// re-executing them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalState {
    /// Full rounds completed when the episode ended.
    pub rounds_completed: u32,
    /// Whether the designated authority had not exited by termination.
    pub authority_active: bool,
    pub agreement: Option<AgreementKind>,
}

/// One full episode: ordered turns, terminal outcome, per-run metrics, and
/// the condition labels needed to aggregate without external config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub experiment_id: String,
    pub model_family: String,
    pub condition_id: String,
    pub reflection: ReflectionMode,
    pub ledger_variant: LedgerVariant,
    pub seed: u64,
    pub turn_cap: u32,
    pub authority_min_turns: u32,
    pub turns: Vec<TurnRecord>,
    pub outcome: Outcome,
    pub exhausted: bool,
    pub terminal: Option<TerminalState>,
    pub metrics: RunMetrics,
}

impl RunRecord {
    /// True when the run contains no provider-error and no format-error
    /// turns. Error-excluded reanalysis is a pure filter on this flag.
    pub fn is_error_free(&self) -> bool {
        self.metrics.provider_error_turns == 0 && self.metrics.format_error_turns == 0
    }

    /// Parsed actions of the run, in turn order.
    pub fn action_sequence(&self) -> Vec<Action> {
        self.turns.iter().filter_map(|t| t.parsed.action()).collect()
    }
}

/// One actor in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorSpec {
    pub agent_id: String,
    pub role_label: String,
    pub is_authority: bool,
    pub brief_template: String,
}

/// Declarative description of one negotiation environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario_id: String,
    pub actors: Vec<ActorSpec>,
    pub issue_bundle: Vec<String>,
    pub turn_cap: u32,
    #[serde(default = "default_authority_min_turns")]
    pub authority_min_turns: u32,
}

fn default_authority_min_turns() -> u32 {
    5
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        let authorities = self.actors.iter().filter(|a| a.is_authority).count();
        if authorities != 1 {
            return Err(SpecError::AuthorityCount {
                scenario_id: self.scenario_id.clone(),
                found: authorities,
            });
        }
        if self.turn_cap == 0 || self.authority_min_turns == 0 {
            return Err(SpecError::ZeroTurnBound {
                scenario_id: self.scenario_id.clone(),
            });
        }
        if self.turn_cap < self.authority_min_turns {
            return Err(SpecError::CapBelowMinTurns {
                scenario_id: self.scenario_id.clone(),
                turn_cap: self.turn_cap,
                authority_min_turns: self.authority_min_turns,
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for actor in &self.actors {
            if !seen.insert(actor.agent_id.as_str()) {
                return Err(SpecError::DuplicateAgentId {
                    scenario_id: self.scenario_id.clone(),
                    agent_id: actor.agent_id.clone(),
                });
            }
        }
        Ok(())
    }

    /// The single designated authority actor. Panics on unvalidated specs.
    pub fn authority(&self) -> &ActorSpec {
        self.actors
            .iter()
            .find(|a| a.is_authority)
            .expect("validated scenario has exactly one authority")
    }
}

/// Structural problems in scenario or condition definitions.
#[derive(Debug, Error)]
pub enum SpecError {
    #[error("scenario {scenario_id}: expected exactly one authority actor, found {found}")]
    AuthorityCount { scenario_id: String, found: usize },
    #[error("scenario {scenario_id}: turn_cap and authority_min_turns must be positive")]
    ZeroTurnBound { scenario_id: String },
    #[error(
        "scenario {scenario_id}: turn_cap {turn_cap} is below authority_min_turns {authority_min_turns}"
    )]
    CapBelowMinTurns {
        scenario_id: String,
        turn_cap: u32,
        authority_min_turns: u32,
    },
    #[error("scenario {scenario_id}: duplicate agent id {agent_id}")]
    DuplicateAgentId {
        scenario_id: String,
        agent_id: String,
    },
    #[error("condition {condition_id}: reflection 'none' requires ledger_variant 'absent'")]
    NoneNeedsAbsentLedger { condition_id: String },
    #[error("condition {condition_id}: scaffold reflection requires a non-absent ledger_variant")]
    ScaffoldNeedsLedger { condition_id: String },
    #[error("condition {condition_id}: token_floor and timeout_floor_ms must be positive")]
    ZeroConditionBound { condition_id: String },
    #[error("condition {condition_id}: temperature must be non-negative")]
    NegativeTemperature { condition_id: String },
}

/// Private-reflection mode of a condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectionMode {
    None,
    Scaffold,
    Native,
    ScaffoldPlusNative,
}

/// Which five-slot private ledger a condition injects, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerVariant {
    Negotiation,
    NeutralLabel,
    OrthogonalProcess,
    Absent,
}

/// Provider-side reasoning setting carried by a condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasoningMode {
    Off,
    Medium,
    High,
    ProviderNative,
}

/// One cell of the reflection-condition matrix: reflection mode, ledger
/// variant, and provider settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub condition_id: String,
    pub reflection: ReflectionMode,
    pub ledger_variant: LedgerVariant,
    pub token_floor: u32,
    pub temperature: f64,
    pub reasoning_effort: ReasoningMode,
    pub timeout_floor_ms: u64,
}

impl ConditionSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.reflection == ReflectionMode::None && self.ledger_variant != LedgerVariant::Absent
        {
            return Err(SpecError::NoneNeedsAbsentLedger {
                condition_id: self.condition_id.clone(),
            });
        }
        if matches!(
            self.reflection,
            ReflectionMode::Scaffold | ReflectionMode::ScaffoldPlusNative
        ) && self.ledger_variant == LedgerVariant::Absent
        {
            return Err(SpecError::ScaffoldNeedsLedger {
                condition_id: self.condition_id.clone(),
            });
        }
        if self.token_floor == 0 || self.timeout_floor_ms == 0 {
            return Err(SpecError::ZeroConditionBound {
                condition_id: self.condition_id.clone(),
            });
        }
        if !(self.temperature >= 0.0) {
            return Err(SpecError::NegativeTemperature {
                condition_id: self.condition_id.clone(),
            });
        }
        Ok(())
    }

    fn base(
        condition_id: &str,
        reflection: ReflectionMode,
        ledger_variant: LedgerVariant,
        token_floor: u32,
        reasoning_effort: ReasoningMode,
    ) -> ConditionSpec {
        ConditionSpec {
            condition_id: condition_id.to_string(),
            reflection,
            ledger_variant,
            token_floor,
            temperature: 0.7,
            reasoning_effort,
            timeout_floor_ms: 60_000,
        }
    }

    /// Named presets reproducing the condition matrix, including the
    /// token-budget control rows and the private-state controls.
    pub fn preset(name: &str) -> Option<ConditionSpec> {
        use LedgerVariant as L;
        use ReasoningMode as R;
        use ReflectionMode as M;
        let spec = match name {
            "none_384" => Self::base(name, M::None, L::Absent, 384, R::Off),
            "none_1024" => Self::base(name, M::None, L::Absent, 1024, R::Off),
            "scaffold_1024" => Self::base(name, M::Scaffold, L::Negotiation, 1024, R::Off),
            "native_1024" => Self::base(name, M::Native, L::Absent, 1024, R::ProviderNative),
            "scaffold_native_1024" => Self::base(
                name,
                M::ScaffoldPlusNative,
                L::Negotiation,
                1024,
                R::ProviderNative,
            ),
            "scaffold_neutral_1024" => Self::base(name, M::Scaffold, L::NeutralLabel, 1024, R::Off),
            "scaffold_orthogonal_1024" => {
                Self::base(name, M::Scaffold, L::OrthogonalProcess, 1024, R::Off)
            }
            _ => return None,
        };
        Some(spec)
    }

    pub fn preset_names() -> &'static [&'static str] {
        &[
            "none_384",
            "none_1024",
            "scaffold_1024",
            "native_1024",
            "scaffold_native_1024",
            "scaffold_neutral_1024",
            "scaffold_orthogonal_1024",
        ]
    }
}

/// A single invariant violation found in a run record. Violations are data,
/// not failures: validation always returns the full list.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("schema_version {found} does not match supported version {SCHEMA_VERSION}")]
    SchemaVersion { found: u32 },
    #[error("entropy {value} outside [0, log2(5)≈2.3219]")]
    EntropyOutOfRange { value: f64 },
    #[error("turn_index not strictly increasing at position {position}")]
    TurnIndexNotIncreasing { position: usize },
    #[error("stored metric {field} ({stored}) disagrees with recomputation from turns ({recomputed})")]
    MetricsMismatch {
        field: &'static str,
        stored: String,
        recomputed: String,
    },
    #[error("exhausted={exhausted} but terminal rounds_completed={rounds_completed} with turn_cap={turn_cap}")]
    ExhaustedMismatch {
        exhausted: bool,
        rounds_completed: u32,
        turn_cap: u32,
    },
    #[error("outcome {stored} disagrees with terminal-state reclassification {reclassified}")]
    OutcomeMismatch {
        stored: Outcome,
        reclassified: Outcome,
    },
    #[error("DEADLOCK outcome with an active authority after the minimum turn count")]
    DeadlockWithActiveAuthority,
    #[error("agent {agent_id} has {count} turns, exceeding turn_cap {cap}")]
    TurnsPerAgentExceedCap {
        agent_id: String,
        count: u32,
        cap: u32,
    },
    #[error("terminal rounds_completed {rounds} exceeds turn_cap {cap}")]
    RoundsExceedCap { rounds: u32, cap: u32 },
}

/// Checks every record invariant and returns the full violation list;
/// a record is valid iff the list is empty.
pub fn validate_run_record(record: &RunRecord) -> Vec<Violation> {
    let mut violations = Vec::new();

    if record.schema_version != SCHEMA_VERSION {
        violations.push(Violation::SchemaVersion {
            found: record.schema_version,
        });
    }

    let entropy = record.metrics.action_entropy;
    if !(entropy >= 0.0) || entropy > max_action_entropy_bits() + 1e-12 {
        violations.push(Violation::EntropyOutOfRange { value: entropy });
    }

    for (position, pair) in record.turns.windows(2).enumerate() {
        if pair[1].turn_index <= pair[0].turn_index {
            violations.push(Violation::TurnIndexNotIncreasing { position: position + 1 });
        }
    }

    let recomputed = RunMetrics::from_turns(&record.turns);
    let stored = &record.metrics;
    // Entropy is compared bit-exactly, but only when the stored value is in
    // range; an out-of-range value is already reported above.
    let entropy_in_range = entropy >= 0.0 && entropy <= max_action_entropy_bits() + 1e-12;
    if entropy_in_range && stored.action_entropy.to_bits() != recomputed.action_entropy.to_bits() {
        violations.push(Violation::MetricsMismatch {
            field: "action_entropy",
            stored: format!("{}", stored.action_entropy),
            recomputed: format!("{}", recomputed.action_entropy),
        });
    }
    if stored.concession_arc != recomputed.concession_arc {
        violations.push(Violation::MetricsMismatch {
            field: "concession_arc",
            stored: stored.concession_arc.to_string(),
            recomputed: recomputed.concession_arc.to_string(),
        });
    }
    if stored.parse_success != recomputed.parse_success {
        violations.push(Violation::MetricsMismatch {
            field: "parse_success",
            stored: stored.parse_success.to_string(),
            recomputed: recomputed.parse_success.to_string(),
        });
    }
    if stored.provider_error_turns != recomputed.provider_error_turns {
        violations.push(Violation::MetricsMismatch {
            field: "provider_error_turns",
            stored: stored.provider_error_turns.to_string(),
            recomputed: recomputed.provider_error_turns.to_string(),
        });
    }
    if stored.format_error_turns != recomputed.format_error_turns {
        violations.push(Violation::MetricsMismatch {
            field: "format_error_turns",
            stored: stored.format_error_turns.to_string(),
            recomputed: recomputed.format_error_turns.to_string(),
        });
    }
    if stored.no_parsed_actions != recomputed.no_parsed_actions {
        violations.push(Violation::MetricsMismatch {
            field: "no_parsed_actions",
            stored: stored.no_parsed_actions.to_string(),
            recomputed: recomputed.no_parsed_actions.to_string(),
        });
    }

    let mut per_agent: BTreeMap<&str, u32> = BTreeMap::new();
    for turn in &record.turns {
        *per_agent.entry(turn.agent_id.as_str()).or_default() += 1;
    }
    for (agent_id, count) in per_agent {
        if count > record.turn_cap {
            violations.push(Violation::TurnsPerAgentExceedCap {
                agent_id: agent_id.to_string(),
                count,
                cap: record.turn_cap,
            });
        }
    }

    if let Some(terminal) = &record.terminal {
        if terminal.rounds_completed > record.turn_cap {
            violations.push(Violation::RoundsExceedCap {
                rounds: terminal.rounds_completed,
                cap: record.turn_cap,
            });
        }
        let should_exhaust = terminal.rounds_completed == record.turn_cap;
        if record.exhausted != should_exhaust {
            violations.push(Violation::ExhaustedMismatch {
                exhausted: record.exhausted,
                rounds_completed: terminal.rounds_completed,
                turn_cap: record.turn_cap,
            });
        }
        let reclassified =
            crate::scenario::classify_terminal_state(terminal, record.authority_min_turns);
        if reclassified != record.outcome {
            violations.push(Violation::OutcomeMismatch {
                stored: record.outcome,
                reclassified,
            });
        }
        if record.outcome == Outcome::Deadlock
            && terminal.authority_active
            && terminal.rounds_completed >= record.authority_min_turns
        {
            violations.push(Violation::DeadlockWithActiveAuthority);
        }
    }

    violations
}

/// Record-level serialization failures.
#[derive(Debug, Error)]
pub enum RecordError {
    #[error("refusing to serialize invalid run record {run_id}: {violations:?}")]
    Invalid {
        run_id: String,
        violations: Vec<Violation>,
    },
    #[error("malformed run record line: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported schema_version {found}, expected {SCHEMA_VERSION}")]
    SchemaVersion { found: u32 },
}

/// Serializes a valid record to its canonical single-line form. Field order
/// is fixed by the schema; equal records produce byte-identical lines.
pub fn serialize_run(record: &RunRecord) -> Result<String, RecordError> {
    let violations = validate_run_record(record);
    if !violations.is_empty() {
        return Err(RecordError::Invalid {
            run_id: record.run_id.clone(),
            violations,
        });
    }
    Ok(serde_json::to_string(record)?)
}

/// Parses one canonical line back into a record, rejecting unknown schema
/// versions.
pub fn deserialize_run(line: &str) -> Result<RunRecord, RecordError> {
    let record: RunRecord = serde_json::from_str(line)?;
    if record.schema_version != SCHEMA_VERSION {
        return Err(RecordError::SchemaVersion {
            found: record.schema_version,
        });
    }
    Ok(record)
}
