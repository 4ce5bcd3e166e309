//! Prompt and target rendering, simplified to the toy vocabulary.

use alloc::format;
use alloc::string::String;

use super::entity::parse_scenario;
use super::{TaskInstance, TaskKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PromptStyle {
    /// Ask for the answer directly, no derivation.
    Immediate,
    /// Ask for (and, in training targets, include) the derivation.
    Trace,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenderError {
    #[error("instance {0} carries no trace")]
    MissingTrace(String),
}

const SUDOKU_SHOT_1: (&str, &str) = ("0000/0040/4312/0200", "3421/2143/4312/1234");
const SUDOKU_SHOT_2: (&str, &str) = ("0400/3014/2300/4032", "1423/3214/2341/4132");

/// Full system+user prompt text. The Sudoku prompt carries the two fixed
/// few-shot pairs.
pub fn render_prompt(instance: &TaskInstance, style: PromptStyle) -> Result<String, RenderError> {
    if style == PromptStyle::Trace && instance.trace.is_none() {
        return Err(RenderError::MissingTrace(instance.id.clone()));
    }
    Ok(match instance.kind {
        TaskKind::Addition => {
            let system = match style {
                PromptStyle::Immediate => {
                    "Answer the question with The final result is. \
                     Do not give any additional explanation."
                }
                PromptStyle::Trace => {
                    "Reason step by step. Finally write final and the result."
                }
            };
            format!("{system} What is the result of {}?", instance.prompt)
        }
        TaskKind::EntityTracking => {
            let system = "Answer the question but do not give any additional explanation.";
            format!("{system} {}", instance.prompt)
        }
        TaskKind::Sudoku => {
            let system = "4x4 Sudoku Rules: each row, column, and 2x2 sub grid must contain \
                 the numbers 1 to 4 exactly once. Some cells are pre filled, and the player \
                 must fill in the rest. Only provide the solved sudoku grid as a string of \
                 digits. Do not provide any additional explanation or text.";
            format!(
                "{system} Solve the following Sudoku puzzle: {} {} \
                 Solve the following Sudoku puzzle: {} {} \
                 Solve the following Sudoku puzzle: {}",
                SUDOKU_SHOT_1.0, SUDOKU_SHOT_1.1, SUDOKU_SHOT_2.0, SUDOKU_SHOT_2.1,
                instance.prompt
            )
        }
    })
}

/// Training-target text for an instance: the answer with its scaffolding,
/// or the derivation followed by the final answer in Trace style.
pub fn render_target(instance: &TaskInstance, style: PromptStyle) -> Result<String, RenderError> {
    match style {
        PromptStyle::Trace => {
            let trace = instance
                .trace
                .as_ref()
                .ok_or_else(|| RenderError::MissingTrace(instance.id.clone()))?;
            Ok(format!("{trace};final {}", instance.target))
        }
        PromptStyle::Immediate => Ok(match instance.kind {
            TaskKind::Addition => format!("The final result is {}", instance.target),
            TaskKind::EntityTracking => {
                let q = query_box(&instance.prompt).unwrap_or(0);
                format!("Box {q} contains {}", instance.target)
            }
            TaskKind::Sudoku => instance.target.clone(),
        }),
    }
}

/// The box number asked about in an entity-tracking scenario.
pub fn query_box(scenario: &str) -> Option<usize> {
    parse_scenario(scenario).ok().map(|(_, q)| q)
}
