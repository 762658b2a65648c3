//! Deep sea: descend one row per step on an N x N grid; the treasure sits at the bottom-right cell.
//!
//! Action 1 moves right, action 0 moves left. Transitions are deterministic and
//! there is no move cost.

pub(crate) const ACTIONS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Position {
    pub row: usize,
    pub col: usize,
}

pub(crate) fn reset() -> Position {
    Position { row: 0, col: 0 }
}

/// Returns the next position, the unscaled reward and whether the episode ended.
pub(crate) fn step(p: &Position, action: usize, size: usize) -> (Position, f64, bool) {
    let right = action == 1;
    let reward = if p.col == size - 1 && right { 1.0 } else { 0.0 };
    let col = if right {
        (p.col + 1).min(size - 1)
    } else {
        p.col.saturating_sub(1)
    };
    let next = Position {
        row: p.row + 1,
        col,
    };
    (next, reward, next.row == size)
}

pub(crate) fn observe(p: &Position, size: usize, out: &mut Vec<f64>) {
    let start = out.len();
    out.resize(start + size * size, 0.0);
    if p.row < size {
        out[start + p.row * size + p.col] = 1.0;
    }
}
