//! Per-agent private state under the ledger variants, plus the rendering of
//! the private block injected into each agent prompt.
//!
//! A ledger is always exactly five `(label, content)` slots. Variants differ
//! only in their labels; update cadence and character budget are identical
//! across variants so conditions stay budget-matched.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::LedgerVariant;

/// Default cap on the rendered ledger, in characters.
pub const DEFAULT_LEDGER_CHAR_BUDGET: usize = 600;

/// Delimiter line separating the public turn text from the private ledger
/// update. Everything after the first occurrence of this exact line is the
/// agent's private channel and never enters the shared transcript.
pub const PRIVATE_BLOCK_DELIMITER: &str = "=== PRIVATE ===";

const NEGOTIATION_LABELS: [&str; 5] = [
    "own_concessions",
    "their_concessions",
    "current_state",
    "opponent_assessment",
    "open_issues",
];

const ORTHOGONAL_PROCESS_LABELS: [&str; 5] = [
    "prior_turn_recap",
    "style_tone_target",
    "clarity_check",
    "format_check",
    "message_shape_plan",
];

const NEUTRAL_LABELS: [&str; 5] = ["slot_a", "slot_b", "slot_c", "slot_d", "slot_e"];

/// Returns the five slot labels for a non-absent variant.
pub fn slot_labels(variant: LedgerVariant) -> Option<[&'static str; 5]> {
    match variant {
        LedgerVariant::Negotiation => Some(NEGOTIATION_LABELS),
        LedgerVariant::OrthogonalProcess => Some(ORTHOGONAL_PROCESS_LABELS),
        LedgerVariant::NeutralLabel => Some(NEUTRAL_LABELS),
        LedgerVariant::Absent => None,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("the absent ledger variant has no slots to initialize")]
    AbsentVariant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Slot {
    label: String,
    content: String,
    /// Generation counter of the last overwrite; 0 means never updated.
    touched: u64,
}

/// Five-slot private ledger for one agent in one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    variant: LedgerVariant,
    slots: Vec<Slot>,
    char_budget: usize,
    generation: u64,
}

/// Creates an empty ledger with variant-correct labels.
pub fn init_ledger(variant: LedgerVariant) -> Result<Ledger, LedgerError> {
    let labels = slot_labels(variant).ok_or(LedgerError::AbsentVariant)?;
    Ok(Ledger {
        variant,
        slots: labels
            .iter()
            .map(|label| Slot {
                label: (*label).to_string(),
                content: String::new(),
                touched: 0,
            })
            .collect(),
        char_budget: DEFAULT_LEDGER_CHAR_BUDGET,
        generation: 0,
    })
}

impl Ledger {
    pub fn variant(&self) -> LedgerVariant {
        self.variant
    }

    pub fn with_char_budget(mut self, budget: usize) -> Self {
        self.char_budget = budget;
        self.enforce_budget();
        self
    }

    /// Slot labels in render order.
    pub fn labels(&self) -> Vec<&str> {
        self.slots.iter().map(|s| s.label.as_str()).collect()
    }

    pub fn slot_content(&self, label: &str) -> Option<&str> {
        self.slots
            .iter()
            .find(|s| s.label == label)
            .map(|s| s.content.as_str())
    }

    /// Applies one private-update block. Each `label: content` line
    /// overwrites the matching slot; unknown labels are ignored and missing
    /// labels leave slots unchanged. The update channel is lenient by
    /// design: it must never fail a run.
    pub fn update(&mut self, update_text: &str) {
        for line in update_text.lines() {
            let Some((label, content)) = line.split_once(':') else {
                continue;
            };
            let label = label.trim();
            let content = content.trim();
            if let Some(slot) = self.slots.iter_mut().find(|s| s.label == label) {
                self.generation += 1;
                slot.content = content.to_string();
                slot.touched = self.generation;
            }
        }
        self.enforce_budget();
    }

    /// Deterministic five-line rendering in slot order. Equal ledgers render
    /// to identical bytes.
    pub fn render_private_block(&self) -> String {
        let mut out = String::new();
        for (i, slot) in self.slots.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&slot.label);
            out.push_str(": ");
            out.push_str(&slot.content);
        }
        out
    }

    fn rendered_len(&self) -> usize {
        self.render_private_block().chars().count()
    }

    // Keeps the rendered block within the character budget by clearing the
    // least recently updated content first, then trimming the tail of the
    // newest slot if it alone still overflows.
    fn enforce_budget(&mut self) {
        if self.rendered_len() <= self.char_budget {
            return;
        }
        let mut order: Vec<usize> = (0..self.slots.len()).collect();
        order.sort_by_key(|&i| self.slots[i].touched);
        let (&newest, older) = order.split_last().expect("ledger has five slots");
        for &i in older {
            if self.rendered_len() <= self.char_budget {
                return;
            }
            self.slots[i].content.clear();
        }
        if self.rendered_len() > self.char_budget {
            let frame_len = {
                let saved = std::mem::take(&mut self.slots[newest].content);
                let len = self.rendered_len();
                self.slots[newest].content = saved;
                len
            };
            let keep = self.char_budget.saturating_sub(frame_len);
            let truncated: String = self.slots[newest].content.chars().take(keep).collect();
            self.slots[newest].content = truncated;
        }
    }
}

/// Splits a backend completion into its public part and the optional private
/// update after [`PRIVATE_BLOCK_DELIMITER`].
pub fn split_private_section(raw: &str) -> (&str, Option<&str>) {
    for (offset, line) in line_offsets(raw) {
        if line.trim() == PRIVATE_BLOCK_DELIMITER {
            let public = &raw[..offset];
            let private_start = offset + line.len();
            let private = raw[private_start..].trim_start_matches('\n');
            return (public, Some(private));
        }
    }
    (raw, None)
}

fn line_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split_inclusive('\n').scan(0usize, |offset, line| {
        let start = *offset;
        *offset += line.len();
        Some((start, line))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn negotiation_ledger_has_the_five_negotiation_slots() {
        let ledger = init_ledger(LedgerVariant::Negotiation).unwrap();
        assert_eq!(
            ledger.labels(),
            vec![
                "own_concessions",
                "their_concessions",
                "current_state",
                "opponent_assessment",
                "open_issues"
            ]
        );
        assert!(ledger.labels().iter().all(|l| ledger.slot_content(l) == Some("")));
    }

    #[test]
    fn orthogonal_ledger_tracks_message_form_slots() {
        let ledger = init_ledger(LedgerVariant::OrthogonalProcess).unwrap();
        assert_eq!(
            ledger.labels(),
            vec![
                "prior_turn_recap",
                "style_tone_target",
                "clarity_check",
                "format_check",
                "message_shape_plan"
            ]
        );
    }

    #[test]
    fn neutral_ledger_has_bleached_labels() {
        let ledger = init_ledger(LedgerVariant::NeutralLabel).unwrap();
        assert_eq!(
            ledger.labels(),
            vec!["slot_a", "slot_b", "slot_c", "slot_d", "slot_e"]
        );
    }

    #[test]
    fn absent_variant_is_rejected() {
        assert_eq!(
            init_ledger(LedgerVariant::Absent).unwrap_err(),
            LedgerError::AbsentVariant
        );
    }

    #[test]
    fn update_overwrites_only_the_matching_slot() {
        let mut ledger = init_ledger(LedgerVariant::Negotiation).unwrap();
        ledger.update("open_issues: exemption scope");
        assert_eq!(ledger.slot_content("open_issues"), Some("exemption scope"));
        assert_eq!(ledger.slot_content("current_state"), Some(""));
    }

    #[test]
    fn unknown_labels_are_ignored() {
        let mut ledger = init_ledger(LedgerVariant::Negotiation).unwrap();
        let before = ledger.clone();
        ledger.update("mood: buoyant");
        assert_eq!(ledger, before);
    }

    #[test]
    fn empty_update_is_identity() {
        let mut ledger = init_ledger(LedgerVariant::Negotiation).unwrap();
        ledger.update("their_concessions: dropped the cap");
        let before = ledger.clone();
        ledger.update("");
        assert_eq!(ledger, before);
    }

    #[test]
    fn render_is_deterministic_and_stable_under_noop_update() {
        let mut ledger = init_ledger(LedgerVariant::Negotiation).unwrap();
        ledger.update("current_state: two issues open");
        let first = ledger.render_private_block();
        assert_eq!(first.lines().count(), 5);
        ledger.update("");
        assert_eq!(ledger.render_private_block(), first);
        let twin = ledger.clone();
        assert_eq!(twin.render_private_block(), first);
    }

    #[test]
    fn budget_clears_oldest_content_first() {
        let mut ledger = init_ledger(LedgerVariant::NeutralLabel)
            .unwrap()
            .with_char_budget(80);
        ledger.update("slot_a: aaaaaaaaaaaaaaaaaaaaaaaaaaaaaa");
        ledger.update("slot_b: bbbbbbbbbbbbbbbbbbbbbbbbbbbbbb");
        // Third long update pushes the render over 80 chars; slot_a content
        // is the oldest and goes first.
        ledger.update("slot_c: cccccccccccccccccccccccccccccc");
        assert_eq!(ledger.slot_content("slot_a"), Some(""));
        assert_eq!(ledger.slot_content("slot_c"), Some("cccccccccccccccccccccccccccccc"));
        assert!(ledger.render_private_block().chars().count() <= 80);
    }

    #[test]
    fn split_private_section_finds_the_delimiter_line() {
        let raw = "ACTION: COUNTER\npublic text\n=== PRIVATE ===\nopen_issues: scope";
        let (public, private) = split_private_section(raw);
        assert_eq!(public, "ACTION: COUNTER\npublic text\n");
        assert_eq!(private, Some("open_issues: scope"));

        let (public, private) = split_private_section("ACTION: EXIT\nbye");
        assert_eq!(public, "ACTION: EXIT\nbye");
        assert_eq!(private, None);
    }

    proptest! {
        #[test]
        fn slot_count_is_invariant_under_any_update_sequence(
            updates in prop::collection::vec("[a-z_: ]{0,40}", 0..20),
        ) {
            for variant in [
                LedgerVariant::Negotiation,
                LedgerVariant::NeutralLabel,
                LedgerVariant::OrthogonalProcess,
            ] {
                let mut ledger = init_ledger(variant).unwrap();
                for update in &updates {
                    ledger.update(update);
                    prop_assert_eq!(ledger.labels().len(), 5);
                    prop_assert_eq!(ledger.render_private_block().lines().count(), 5);
                }
            }
        }

        #[test]
        fn rendered_ledger_respects_budget(
            contents in prop::collection::vec("[a-z ]{0,200}", 1..8),
        ) {
            let mut ledger = init_ledger(LedgerVariant::Negotiation)
                .unwrap()
                .with_char_budget(DEFAULT_LEDGER_CHAR_BUDGET);
            let labels = ["own_concessions", "their_concessions", "current_state",
                          "opponent_assessment", "open_issues"];
            for (i, content) in contents.iter().enumerate() {
                ledger.update(&format!("{}: {}", labels[i % 5], content));
            }
            prop_assert!(ledger.render_private_block().chars().count() <= DEFAULT_LEDGER_CHAR_BUDGET);
        }
    }
}
