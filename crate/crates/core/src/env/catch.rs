//! Catch: a ball falls one row per step; the paddle on the bottom row moves left, stays or moves right.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub(crate) const ACTIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Board {
    pub ball_row: usize,
    pub ball_col: usize,
    pub paddle_col: usize,
}

pub(crate) fn reset(rng: &mut ChaCha8Rng, cols: usize) -> Board {
    Board {
        ball_row: 0,
        ball_col: rng.gen_range(0..cols),
        paddle_col: cols / 2,
    }
}

/// Returns the next board and `Some(+1 | -1)` once the ball reaches the paddle row.
pub(crate) fn step(b: &Board, action: usize, rows: usize, cols: usize) -> (Board, Option<f64>) {
    let paddle_col = match action {
        0 => b.paddle_col.saturating_sub(1),
        1 => b.paddle_col,
        _ => (b.paddle_col + 1).min(cols - 1),
    };
    let next = Board {
        ball_row: b.ball_row + 1,
        ball_col: b.ball_col,
        paddle_col,
    };
    let outcome = (next.ball_row == rows - 1).then(|| {
        if next.ball_col == next.paddle_col {
            1.0
        } else {
            -1.0
        }
    });
    (next, outcome)
}

pub(crate) fn observe(b: &Board, rows: usize, cols: usize, out: &mut Vec<f64>) {
    let start = out.len();
    out.resize(start + rows * cols, 0.0);
    if b.ball_row < rows {
        out[start + b.ball_row * cols + b.ball_col] = 1.0;
    }
    out[start + (rows - 1) * cols + b.paddle_col] = 1.0;
}
