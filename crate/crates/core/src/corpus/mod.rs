//! Synthetic task corpora: Addition, Entity Tracking, and 4x4 Sudoku, with
//! controlled difficulty axes, exact oracles, and counterfactual pairing.

mod addition;
mod counterfactual;
mod entity;
mod oracle;
mod render;
mod sudoku;

pub use addition::{eval_left_to_right, gen_addition};
pub use counterfactual::{make_counterfactual, CounterfactualError};
pub use entity::{gen_entity_tracking, BoxWorld, EntityOp, ENTITY_GRID_CELLS};
pub use oracle::{oracle_solve, solve_addition, solve_entity, solve_sudoku, OracleError};
pub use render::{render_prompt, render_target, PromptStyle, RenderError};
pub use sudoku::{gen_sudoku, SudokuGrid};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::rng::fnv1a64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    Addition,
    EntityTracking,
    Sudoku,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Addition => "addition",
            TaskKind::EntityTracking => "entity",
            TaskKind::Sudoku => "sudoku",
        }
    }
}

/// One problem instance. `prompt` holds the bare task content (expression,
/// scenario text, or puzzle grid); templating around it is `render_prompt`'s
/// job.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub kind: TaskKind,
    pub prompt: String,
    pub target: String,
    pub difficulty: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterfactual_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
}

impl TaskInstance {
    pub fn new(
        kind: TaskKind,
        prompt: String,
        target: String,
        difficulty: BTreeMap<String, u32>,
    ) -> TaskInstance {
        let id = stable_id(kind, &prompt, &target, &difficulty);
        TaskInstance {
            id,
            kind,
            prompt,
            target,
            difficulty,
            counterfactual_id: None,
            trace: None,
        }
    }
}

/// Stable content hash: identical instances get identical ids across runs.
pub fn stable_id(
    kind: TaskKind,
    prompt: &str,
    target: &str,
    difficulty: &BTreeMap<String, u32>,
) -> String {
    let mut buf = String::new();
    buf.push_str(kind.as_str());
    buf.push('|');
    buf.push_str(prompt);
    buf.push('|');
    buf.push_str(target);
    for (k, v) in difficulty {
        buf.push('|');
        buf.push_str(k);
        buf.push('=');
        buf.push_str(&format!("{v}"));
    }
    format!("{:016x}", fnv1a64(buf.as_bytes()))
}
