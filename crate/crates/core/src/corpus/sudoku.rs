//! 4x4 Sudoku generator and backtracking solver.
//!
//! Puzzles are made by solving a random full grid and blanking cells; the
//! stored target is the first completion found by the deterministic
//! backtracking order (row-major cells, digits ascending).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{TaskInstance, TaskKind};
use crate::rng::{derive, seeded, LabRng};

pub const SIDE: usize = 4;
pub const MIN_EMPTY: u32 = 1;
pub const MAX_EMPTY: u32 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SudokuGrid {
    pub cells: [[u8; SIDE]; SIDE],
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SudokuError {
    #[error("grid text is not 4 groups of 4 digits")]
    BadFormat,
    #[error("puzzle has no completion")]
    Unsolvable,
}

impl SudokuGrid {
    pub fn empty() -> SudokuGrid {
        SudokuGrid { cells: [[0; SIDE]; SIDE] }
    }

    /// Parse the `0000/0040/4312/0200` rendering (whitespace tolerated).
    pub fn parse(text: &str) -> Result<SudokuGrid, SudokuError> {
        let digits: Vec<u8> = text
            .chars()
            .filter(|c| c.is_ascii_digit())
            .map(|c| c as u8 - b'0')
            .collect();
        let seps = text.chars().filter(|c| *c == '/').count();
        if digits.len() != SIDE * SIDE || seps != SIDE - 1 || digits.iter().any(|&d| d > 4) {
            return Err(SudokuError::BadFormat);
        }
        let mut g = SudokuGrid::empty();
        for (i, d) in digits.iter().enumerate() {
            g.cells[i / SIDE][i % SIDE] = *d;
        }
        Ok(g)
    }

    pub fn render(&self) -> String {
        let rows: Vec<String> = self
            .cells
            .iter()
            .map(|row| row.iter().map(|d| format!("{d}")).collect::<String>())
            .collect();
        rows.join("/")
    }

    pub fn is_full(&self) -> bool {
        self.cells.iter().flatten().all(|&d| d != 0)
    }

    fn placement_ok(&self, r: usize, c: usize, d: u8) -> bool {
        for i in 0..SIDE {
            if self.cells[r][i] == d || self.cells[i][c] == d {
                return false;
            }
        }
        let (br, bc) = (r / 2 * 2, c / 2 * 2);
        for i in 0..2 {
            for j in 0..2 {
                if self.cells[br + i][bc + j] == d {
                    return false;
                }
            }
        }
        true
    }

    /// Every row, column, and 2x2 sub-grid holds 1..=4 exactly once.
    pub fn is_valid_solution(&self) -> bool {
        let group_ok = |cells: [u8; SIDE]| -> bool {
            let mut seen = [false; SIDE + 1];
            for d in cells {
                if d == 0 || d > 4 || seen[d as usize] {
                    return false;
                }
                seen[d as usize] = true;
            }
            true
        };
        for i in 0..SIDE {
            let row = self.cells[i];
            let col = [self.cells[0][i], self.cells[1][i], self.cells[2][i], self.cells[3][i]];
            if !group_ok(row) || !group_ok(col) {
                return false;
            }
        }
        for br in [0, 2] {
            for bc in [0, 2] {
                let blk = [
                    self.cells[br][bc],
                    self.cells[br][bc + 1],
                    self.cells[br + 1][bc],
                    self.cells[br + 1][bc + 1],
                ];
                if !group_ok(blk) {
                    return false;
                }
            }
        }
        true
    }

    /// Checks whether this grid completes `puzzle` (agrees on all givens).
    pub fn completes(&self, puzzle: &SudokuGrid) -> bool {
        self.is_valid_solution()
            && puzzle
                .cells
                .iter()
                .flatten()
                .zip(self.cells.iter().flatten())
                .all(|(&p, &s)| p == 0 || p == s)
    }

    /// First completion in row-major, digit-ascending order.
    pub fn solve(&self) -> Result<SudokuGrid, SudokuError> {
        let mut g = *self;
        // givens are not re-checked by the search, so validate the result
        if solve_rec(&mut g, 0, &mut |_| 0) && g.is_valid_solution() {
            Ok(g)
        } else {
            Err(SudokuError::Unsolvable)
        }
    }
}

/// Backtracking over cells `idx..`; `digit_order(cell)` rotates the starting
/// digit so random full grids can reuse the same search.
fn solve_rec(g: &mut SudokuGrid, idx: usize, digit_order: &mut impl FnMut(usize) -> u8) -> bool {
    if idx == SIDE * SIDE {
        return true;
    }
    let (r, c) = (idx / SIDE, idx % SIDE);
    if g.cells[r][c] != 0 {
        return solve_rec(g, idx + 1, digit_order);
    }
    let start = digit_order(idx);
    for k in 0..SIDE as u8 {
        let d = (start + k) % SIDE as u8 + 1;
        if g.placement_ok(r, c, d) {
            g.cells[r][c] = d;
            if solve_rec(g, idx + 1, digit_order) {
                return true;
            }
            g.cells[r][c] = 0;
        }
    }
    false
}

fn random_full_grid(rng: &mut LabRng) -> SudokuGrid {
    let mut g = SudokuGrid::empty();
    let offsets: Vec<u8> = (0..SIDE * SIDE).map(|_| rng.random_range(0..SIDE as u8)).collect();
    let ok = solve_rec(&mut g, 0, &mut |cell| offsets[cell]);
    debug_assert!(ok);
    g
}

/// `per_level` puzzles per empty-cell count in 1..=12.
pub fn gen_sudoku(seed: u64, per_level: usize) -> Vec<TaskInstance> {
    assert!(per_level >= 1);
    let mut rng = seeded(derive(seed, "gen-sudoku"));
    let mut out = Vec::with_capacity(per_level * (MAX_EMPTY - MIN_EMPTY + 1) as usize);
    for empty in MIN_EMPTY..=MAX_EMPTY {
        for _ in 0..per_level {
            let full = random_full_grid(&mut rng);
            let mut cells: Vec<usize> = (0..SIDE * SIDE).collect();
            cells.shuffle(&mut rng);
            let mut puzzle = full;
            for &cell in &cells[..empty as usize] {
                puzzle.cells[cell / SIDE][cell % SIDE] = 0;
            }
            let target = puzzle.solve().expect("blanked grid always solvable");
            let mut difficulty = BTreeMap::new();
            difficulty.insert(String::from("empty_cells"), empty);
            out.push(TaskInstance::new(
                TaskKind::Sudoku,
                puzzle.render(),
                target.render(),
                difficulty,
            ));
        }
    }
    // counterfactual = next puzzle in dataset order, wrapping at the end
    let n = out.len();
    let ids: Vec<String> = out.iter().map(|i| i.id.clone()).collect();
    for (i, inst) in out.iter_mut().enumerate() {
        inst.counterfactual_id = Some(ids[(i + 1) % n].clone());
    }
    out
}
