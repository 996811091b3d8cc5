//! Turns raw agent output into a structured action plus free-text message.
//!
//! The header convention is deliberately rigid: the first non-empty line must
//! read `ACTION: <TOKEN>` with a case-sensitive key and a case-insensitive
//! token drawn from the five-action alphabet. Scanning the rest of the
//! message for tokens is forbidden so that parsing stays deterministic.

use std::ops::Range;

use crate::domain::{Action, FormatErrorReason, TurnRecord};

/// Case-sensitive key that must open the first non-empty line of a turn.
pub const ACTION_HEADER_KEY: &str = "ACTION:";

/// Successful parse of one turn's raw text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTurn {
    pub action: Action,
    /// Everything after the header line, trimmed.
    pub message: String,
    /// Character range of the header line within the raw text.
    pub header_span: Range<usize>,
}

/// Parses one turn of raw agent output. Exactly one of `ParsedTurn` or a
/// format-error reason is returned; the function is pure.
pub fn parse_turn(raw: &str) -> Result<ParsedTurn, FormatErrorReason> {
    if raw.trim().is_empty() {
        return Err(FormatErrorReason::EmptyOutput);
    }

    // Locate the first non-empty line, tracking its character offset.
    let lines: Vec<&str> = raw.split('\n').collect();
    let mut char_offset = 0usize;
    for (i, line) in lines.iter().enumerate() {
        let line_chars = line.chars().count();
        if line.trim().is_empty() {
            char_offset += line_chars + 1; // +1 for the newline
            continue;
        }

        let trimmed = line.trim();
        let Some(token_part) = trimmed.strip_prefix(ACTION_HEADER_KEY) else {
            return Err(FormatErrorReason::MissingHeader);
        };
        let Some(action) = Action::from_token(token_part) else {
            return Err(FormatErrorReason::UnknownToken);
        };

        let header_span = char_offset..char_offset + line_chars;
        let message = lines[i + 1..].join("\n").trim().to_string();
        return Ok(ParsedTurn {
            action,
            message,
            header_span,
        });
    }

    Err(FormatErrorReason::EmptyOutput)
}

/// Run-level parse success: true iff zero turns carry a format error.
/// Provider errors are a separate channel and do not affect this flag.
pub fn parse_success_of_run(turns: &[TurnRecord]) -> bool {
    turns.iter().all(|t| !t.parsed.is_format_error())
}
