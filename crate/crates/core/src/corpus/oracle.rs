//! Ground-truth oracles for the three tasks, used to validate generators and
//! to score model outputs against an independent path.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::entity::{parse_scenario, render_contents};
use super::sudoku::SudokuGrid;
use super::{TaskInstance, TaskKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("malformed prompt: {0}")]
    MalformedPrompt(String),
    #[error("sudoku puzzle has no completion")]
    UnsolvableSudoku,
}

/// Solve `instance.prompt` from scratch, independent of how the instance was
/// generated.
pub fn oracle_solve(instance: &TaskInstance) -> Result<String, OracleError> {
    match instance.kind {
        TaskKind::Addition => solve_addition(&instance.prompt),
        TaskKind::EntityTracking => solve_entity(&instance.prompt),
        TaskKind::Sudoku => solve_sudoku(&instance.prompt),
    }
}

pub fn solve_addition(expr: &str) -> Result<String, OracleError> {
    let mut operands: Vec<i64> = Vec::new();
    let mut plus: Vec<bool> = Vec::new();
    let mut cur: Option<i64> = None;
    for c in expr.chars() {
        match c {
            '0'..='9' => {
                cur = Some(cur.unwrap_or(0) * 10 + (c as i64 - '0' as i64));
            }
            '+' | '-' => {
                operands.push(cur.take().ok_or_else(|| {
                    OracleError::MalformedPrompt(format!("dangling operator in `{expr}`"))
                })?);
                plus.push(c == '+');
            }
            c if c.is_whitespace() => {}
            _ => {
                return Err(OracleError::MalformedPrompt(format!(
                    "unexpected `{c}` in `{expr}`"
                )))
            }
        }
    }
    operands.push(
        cur.ok_or_else(|| OracleError::MalformedPrompt(format!("trailing operator in `{expr}`")))?,
    );
    Ok(format!("{}", super::eval_left_to_right(&operands, &plus)))
}

pub fn solve_entity(scenario: &str) -> Result<String, OracleError> {
    let (world, q) =
        parse_scenario(scenario).map_err(|e| OracleError::MalformedPrompt(e.to_string()))?;
    let boxes = world
        .simulate()
        .map_err(|e| OracleError::MalformedPrompt(e.to_string()))?;
    Ok(render_contents(&boxes[q]))
}

pub fn solve_sudoku(grid_text: &str) -> Result<String, OracleError> {
    let puzzle = SudokuGrid::parse(grid_text)
        .map_err(|e| OracleError::MalformedPrompt(e.to_string()))?;
    let solved = puzzle.solve().map_err(|_| OracleError::UnsolvableSudoku)?;
    Ok(solved.render())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeMap;

    fn inst(kind: TaskKind, prompt: &str) -> TaskInstance {
        TaskInstance::new(kind, prompt.into(), String::new(), BTreeMap::new())
    }

    #[test]
    fn addition_basic() {
        assert_eq!(solve_addition("3+4").unwrap(), "7");
        assert_eq!(solve_addition("99+18-23").unwrap(), "94");
        assert_eq!(solve_addition("0+0-5").unwrap(), "-5");
    }

    #[test]
    fn addition_malformed() {
        assert!(matches!(
            solve_addition("3++"),
            Err(OracleError::MalformedPrompt(_))
        ));
        assert!(matches!(
            solve_addition("3*4"),
            Err(OracleError::MalformedPrompt(_))
        ));
    }

    #[test]
    fn sudoku_appendix_pair() {
        let i = inst(TaskKind::Sudoku, "0000/0040/4312/0200");
        assert_eq!(oracle_solve(&i).unwrap(), "3421/2143/4312/1234");
    }

    #[test]
    fn sudoku_unsolvable() {
        let i = inst(TaskKind::Sudoku, "1100/0000/0000/0000");
        assert_eq!(oracle_solve(&i), Err(OracleError::UnsolvableSudoku));
    }

    #[test]
    fn entity_malformed() {
        let i = inst(TaskKind::EntityTracking, "Box 0 holds mysteries.");
        assert!(matches!(
            oracle_solve(&i),
            Err(OracleError::MalformedPrompt(_))
        ));
    }
}
