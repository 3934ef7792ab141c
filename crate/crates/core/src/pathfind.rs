//! A* search on the 4-connected grid.
//!
//! The heuristic is the obstacle-blind 4-directional step count to the goal,
//! which is admissible and consistent for unit step costs, so the first
//! expansion of a cell is final.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;
use thiserror::Error;

use crate::map::{Cell, GridMap, Move};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("endpoint {0} is blocked or outside the map")]
    BlockedEndpoint(Cell),
    #[error("no path from {from} to {to}")]
    NoPath { from: Cell, to: Cell },
    #[error("step {index} from {from} to {to} is not a single grid move")]
    NonAdjacentStep { index: usize, from: Cell, to: Cell },
}

/// A start-to-goal cell sequence, both ends inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Path {
    cells: Vec<Cell>,
}

impl Path {
    /// Validates adjacency of consecutive cells.
    pub fn new(cells: Vec<Cell>) -> Result<Self, PathError> {
        path_to_moves(&cells)?;
        assert!(!cells.is_empty(), "a path holds at least its start cell");
        Ok(Self { cells })
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn start(&self) -> Cell {
        self.cells[0]
    }

    pub fn goal(&self) -> Cell {
        *self.cells.last().expect("non-empty path")
    }

    /// Number of steps.
    pub fn cost(&self) -> usize {
        self.cells.len() - 1
    }

    pub fn moves(&self) -> Vec<Move> {
        path_to_moves(&self.cells).expect("path adjacency is checked on construction")
    }

    pub fn reversed(&self) -> Path {
        let mut cells = self.cells.clone();
        cells.reverse();
        Path { cells }
    }
}

/// Remaining-cost estimate: |Δrow| + |Δcol|.
pub fn heuristic(cell: Cell, goal: Cell) -> usize {
    cell.manhattan(goal)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SearchNode {
    cell: Cell,
    g: usize,
    h: usize,
    seq: u64,
}

impl SearchNode {
    fn f(&self) -> usize {
        self.g + self.h
    }
}

// BinaryHeap is a max-heap: "greater" pops first. Smaller f wins, then larger
// g (deeper node), then earlier insertion.
impl Ord for SearchNode {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f()
            .cmp(&self.f())
            .then_with(|| self.g.cmp(&other.g))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for SearchNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum-step path from `start` to `goal`. Deterministic for fixed input.
pub fn astar(map: &GridMap, start: Cell, goal: Cell) -> Result<Path, PathError> {
    for endpoint in [start, goal] {
        if !map.is_free(endpoint) {
            return Err(PathError::BlockedEndpoint(endpoint));
        }
    }

    let idx = |c: Cell| c.row * map.cols() + c.col;
    let n = map.rows() * map.cols();
    let mut best_g = vec![usize::MAX; n];
    let mut parent: Vec<Option<Cell>> = vec![None; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;

    best_g[idx(start)] = 0;
    open.push(SearchNode {
        cell: start,
        g: 0,
        h: heuristic(start, goal),
        seq,
    });

    while let Some(node) = open.pop() {
        let i = idx(node.cell);
        // Stale heap entries left behind by a later, cheaper insertion.
        if closed[i] || node.g > best_g[i] {
            continue;
        }
        closed[i] = true;
        if node.cell == goal {
            return Ok(Path {
                cells: reconstruct(&parent, goal, idx),
            });
        }
        for (_, next) in map.neighbors(node.cell).expect("expanded cells are in bounds") {
            let j = idx(next);
            let g = node.g + 1;
            if closed[j] || g >= best_g[j] {
                continue;
            }
            best_g[j] = g;
            parent[j] = Some(node.cell);
            seq += 1;
            open.push(SearchNode {
                cell: next,
                g,
                h: heuristic(next, goal),
                seq,
            });
        }
    }
    Err(PathError::NoPath {
        from: start,
        to: goal,
    })
}

fn reconstruct(parent: &[Option<Cell>], goal: Cell, idx: impl Fn(Cell) -> usize) -> Vec<Cell> {
    let mut cells = vec![goal];
    let mut cur = goal;
    while let Some(p) = parent[idx(cur)] {
        cells.push(p);
        cur = p;
    }
    cells.reverse();
    cells
}

/// Move ids that walk the cell sequence. One fewer entry than cells.
pub fn path_to_moves(cells: &[Cell]) -> Result<Vec<Move>, PathError> {
    cells
        .windows(2)
        .enumerate()
        .map(|(index, w)| {
            w[0].move_to(w[1]).ok_or(PathError::NonAdjacentStep {
                index,
                from: w[0],
                to: w[1],
            })
        })
        .collect()
}

/// Inverse of [`path_to_moves`]. Returns `None` if a move would leave the
/// non-negative quadrant.
pub fn apply_moves(start: Cell, moves: &[Move]) -> Option<Vec<Cell>> {
    let mut cells = Vec::with_capacity(moves.len() + 1);
    cells.push(start);
    let mut cur = start;
    for &mv in moves {
        cur = cur.step(mv)?;
        cells.push(cur);
    }
    Some(cells)
}
