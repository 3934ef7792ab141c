//! Occupancy grid, key points and the four-direction move table.
//!
//! Cells are addressed 0-based, row-major. Row 0 is the top line of the map
//! text; moving `Forward` decreases the row index.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Two feet, the physical footprint of one grid cell on the reference rig.
pub const DEFAULT_CELL_SIZE_CM: f64 = 60.96;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("map is empty")]
    EmptyMap,
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid character {ch:?} at row {row}, column {col}")]
    InvalidChar { row: usize, col: usize, ch: char },
    #[error("cell {0} is outside the map")]
    OutOfBounds(Cell),
    #[error("cell size must be positive, got {0}")]
    InvalidCellSize(f64),
    #[error("key point {0} is on a blocked cell")]
    KeyPointBlocked(Cell),
    #[error("key point {0} is listed more than once")]
    DuplicateKeyPoint(Cell),
}

/// A grid index pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Applies a move delta. Returns `None` when the result would have a
    /// negative index; the upper bound is the map's business.
    pub fn step(self, mv: Move) -> Option<Cell> {
        let (dr, dc) = mv.delta();
        let row = self.row.checked_add_signed(dr)?;
        let col = self.col.checked_add_signed(dc)?;
        Some(Cell { row, col })
    }

    /// The move that takes `self` to `other`, if the two are 4-adjacent.
    pub fn move_to(self, other: Cell) -> Option<Move> {
        Move::ALL.into_iter().find(|&mv| self.step(mv) == Some(other))
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// One of the four grid moves. The discriminant is the canonical move id and
/// indexes [`MOVE_TABLE`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Move {
    Forward = 0,
    Left = 1,
    Backward = 2,
    Right = 3,
}

/// `(Δrow, Δcol)` for Forward, Left, Backward, Right, in that order.
pub const MOVE_TABLE: [(isize, isize); 4] = [(-1, 0), (0, -1), (1, 0), (0, 1)];

impl Move {
    pub const ALL: [Move; 4] = [Move::Forward, Move::Left, Move::Backward, Move::Right];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Move> {
        Move::ALL.get(id).copied()
    }

    pub fn delta(self) -> (isize, isize) {
        MOVE_TABLE[self.id()]
    }

    /// Table order runs counter-clockwise, so the opposite move sits two
    /// slots away and the clockwise neighbour three.
    pub fn opposite(self) -> Move {
        Move::ALL[(self.id() + 2) % 4]
    }

    /// The direction 90° clockwise of this one.
    pub fn right_of(self) -> Move {
        Move::ALL[(self.id() + 3) % 4]
    }

    /// The direction 90° counter-clockwise of this one.
    pub fn left_of(self) -> Move {
        Move::ALL[(self.id() + 1) % 4]
    }

    pub fn label(self) -> &'static str {
        match self {
            Move::Forward => "forward",
            Move::Left => "left",
            Move::Backward => "backward",
            Move::Right => "right",
        }
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Occupancy {
    Free,
    Blocked,
}

/// Static occupancy grid. Immutable once built; temporary blockages are
/// expressed by deriving a new map with [`GridMap::with_blocked`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    rows: usize,
    cols: usize,
    cells: Vec<Occupancy>,
    cell_size_cm: f64,
}

impl GridMap {
    /// Builds a map from row vectors. `true` marks a blocked cell.
    pub fn from_rows(rows: &[Vec<bool>], cell_size_cm: f64) -> Result<Self, MapError> {
        let first = rows.first().ok_or(MapError::EmptyMap)?;
        let cols = first.len();
        if cols == 0 {
            return Err(MapError::EmptyMap);
        }
        if !(cell_size_cm > 0.0 && cell_size_cm.is_finite()) {
            return Err(MapError::InvalidCellSize(cell_size_cm));
        }
        let mut cells = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(MapError::RaggedRows {
                    row: r,
                    expected: cols,
                    found: row.len(),
                });
            }
            cells.extend(row.iter().map(|&b| if b { Occupancy::Blocked } else { Occupancy::Free }));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            cells,
            cell_size_cm,
        })
    }

    /// An all-free map.
    pub fn empty(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "map dimensions must be positive");
        Self {
            rows,
            cols,
            cells: vec![Occupancy::Free; rows * cols],
            cell_size_cm: DEFAULT_CELL_SIZE_CM,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size_cm(&self) -> f64 {
        self.cell_size_cm
    }

    pub fn with_cell_size(mut self, cell_size_cm: f64) -> Result<Self, MapError> {
        if !(cell_size_cm > 0.0 && cell_size_cm.is_finite()) {
            return Err(MapError::InvalidCellSize(cell_size_cm));
        }
        self.cell_size_cm = cell_size_cm;
        Ok(self)
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }

    pub fn occupancy(&self, cell: Cell) -> Option<Occupancy> {
        self.in_bounds(cell)
            .then(|| self.cells[cell.row * self.cols + cell.col])
    }

    /// Out-of-bounds cells count as blocked.
    pub fn is_free(&self, cell: Cell) -> bool {
        self.occupancy(cell) == Some(Occupancy::Free)
    }

    /// Free 4-neighbours of `cell` in move-table order.
    pub fn neighbors(&self, cell: Cell) -> Result<Vec<(Move, Cell)>, MapError> {
        if !self.in_bounds(cell) {
            return Err(MapError::OutOfBounds(cell));
        }
        Ok(Move::ALL
            .into_iter()
            .filter_map(|mv| cell.step(mv).map(|c| (mv, c)))
            .filter(|&(_, c)| self.is_free(c))
            .collect())
    }

    /// Copy of this map with the given in-bounds cells marked blocked.
    pub fn with_blocked<I: IntoIterator<Item = Cell>>(&self, blocked: I) -> GridMap {
        let mut map = self.clone();
        for cell in blocked {
            if map.in_bounds(cell) {
                map.cells[cell.row * map.cols + cell.col] = Occupancy::Blocked;
            }
        }
        map
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| Cell::new(r, c)))
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.iter_cells().filter(|&c| self.is_free(c))
    }

    /// Renders the map in the `0`/`1` grammar, one row per line with a
    /// trailing newline.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.rows * (self.cols + 1));
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(match self.cells[r * self.cols + c] {
                    Occupancy::Free => '0',
                    Occupancy::Blocked => '1',
                });
            }
            out.push('\n');
        }
        out
    }
}

/// Parses newline-separated rows of `0` (free) and `1` (blocked). A single
/// trailing newline is allowed; `\r\n` line endings are accepted.
pub fn parse_map(text: &str) -> Result<GridMap, MapError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let body = body.strip_suffix('\r').unwrap_or(body);
    if body.is_empty() {
        return Err(MapError::EmptyMap);
    }
    let mut rows = Vec::new();
    for (r, line) in body.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let row = line
            .chars()
            .enumerate()
            .map(|(c, ch)| match ch {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(MapError::InvalidChar { row: r, col: c, ch }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    GridMap::from_rows(&rows, DEFAULT_CELL_SIZE_CM)
}

/// The origin plus the other cells that must each be visited at least once.
/// Index 0 is always the origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPointSet {
    origin: Cell,
    others: Vec<Cell>,
}

impl KeyPointSet {
    pub fn new(map: &GridMap, origin: Cell, others: Vec<Cell>) -> Result<Self, MapError> {
        for &cell in std::iter::once(&origin).chain(&others) {
            if !map.in_bounds(cell) {
                return Err(MapError::OutOfBounds(cell));
            }
            if !map.is_free(cell) {
                return Err(MapError::KeyPointBlocked(cell));
            }
        }
        for (i, &cell) in others.iter().enumerate() {
            if cell == origin || others[..i].contains(&cell) {
                return Err(MapError::DuplicateKeyPoint(cell));
            }
        }
        Ok(Self { origin, others })
    }

    pub fn origin(&self) -> Cell {
        self.origin
    }

    pub fn others(&self) -> &[Cell] {
        &self.others
    }

    pub fn len(&self) -> usize {
        1 + self.others.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Origin first, then the others in declaration order.
    pub fn all(&self) -> Vec<Cell> {
        std::iter::once(self.origin).chain(self.others.iter().copied()).collect()
    }

    pub fn contains(&self, cell: Cell) -> bool {
        self.origin == cell || self.others.contains(&cell)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(r: usize, col: usize) -> Cell {
        Cell::new(r, col)
    }

    #[test]
    fn parses_center_obstacle() {
        let map = parse_map("000\n010\n000").unwrap();
        assert_eq!((map.rows(), map.cols()), (3, 3));
        for cell in map.iter_cells() {
            assert_eq!(map.is_free(cell), cell != c(1, 1));
        }
        assert_eq!(map.cell_size_cm(), DEFAULT_CELL_SIZE_CM);
    }

    #[test]
    fn parses_single_cell_and_trailing_newline() {
        let map = parse_map("0").unwrap();
        assert_eq!((map.rows(), map.cols()), (1, 1));
        assert!(map.is_free(c(0, 0)));
        assert_eq!(parse_map("01\n10\n").unwrap().rows(), 2);
        assert_eq!(parse_map("01\r\n10\r\n").unwrap().rows(), 2);
    }

    #[test]
    fn rejects_bad_maps() {
        assert_eq!(
            parse_map("00\n0"),
            Err(MapError::RaggedRows {
                row: 1,
                expected: 2,
                found: 1
            })
        );
        assert_eq!(
            parse_map("0 0"),
            Err(MapError::InvalidChar {
                row: 0,
                col: 1,
                ch: ' '
            })
        );
        assert_eq!(parse_map(""), Err(MapError::EmptyMap));
        assert_eq!(parse_map("\n"), Err(MapError::EmptyMap));
        assert!(matches!(parse_map("00\n\n00"), Err(MapError::RaggedRows { .. })));
    }

    #[test]
    fn is_free_out_of_bounds_is_false() {
        let map = parse_map("000\n010\n000").unwrap();
        assert!(!map.is_free(c(1, 1)));
        assert!(map.is_free(c(0, 0)));
        assert!(!map.is_free(c(3, 0)));
        assert!(!map.is_free(c(0, 3)));
    }

    #[test]
    fn neighbors_follow_table_order() {
        let map = GridMap::empty(3, 3);
        assert_eq!(
            map.neighbors(c(1, 1)).unwrap(),
            vec![
                (Move::Forward, c(0, 1)),
                (Move::Left, c(1, 0)),
                (Move::Backward, c(2, 1)),
                (Move::Right, c(1, 2)),
            ]
        );
        assert_eq!(
            map.neighbors(c(0, 0)).unwrap(),
            vec![(Move::Backward, c(1, 0)), (Move::Right, c(0, 1))]
        );
        let walled = parse_map("000\n010\n000").unwrap();
        assert_eq!(
            walled.neighbors(c(0, 1)).unwrap(),
            vec![(Move::Left, c(0, 0)), (Move::Right, c(0, 2))]
        );
        assert_eq!(map.neighbors(c(5, 0)), Err(MapError::OutOfBounds(c(5, 0))));
    }

    #[test]
    fn move_table_values() {
        assert_eq!(MOVE_TABLE, [(-1, 0), (0, -1), (1, 0), (0, 1)]);
        for (i, mv) in Move::ALL.into_iter().enumerate() {
            assert_eq!(mv.id(), i);
            assert_eq!(Move::from_id(i), Some(mv));
        }
        assert_eq!(Move::Forward.right_of(), Move::Right);
        assert_eq!(Move::Forward.left_of(), Move::Left);
        assert_eq!(Move::Right.right_of(), Move::Backward);
        assert_eq!(Move::Left.opposite(), Move::Right);
    }

    #[test]
    fn key_point_validation() {
        let map = parse_map("000\n010\n000").unwrap();
        assert!(KeyPointSet::new(&map, c(0, 0), vec![c(2, 2)]).is_ok());
        assert_eq!(
            KeyPointSet::new(&map, c(0, 0), vec![c(1, 1)]),
            Err(MapError::KeyPointBlocked(c(1, 1)))
        );
        assert_eq!(
            KeyPointSet::new(&map, c(0, 0), vec![c(0, 0)]),
            Err(MapError::DuplicateKeyPoint(c(0, 0)))
        );
        assert_eq!(
            KeyPointSet::new(&map, c(0, 0), vec![c(2, 2), c(2, 2)]),
            Err(MapError::DuplicateKeyPoint(c(2, 2)))
        );
        assert_eq!(
            KeyPointSet::new(&map, c(0, 0), vec![c(9, 9)]),
            Err(MapError::OutOfBounds(c(9, 9)))
        );
    }

    fn arb_map() -> impl Strategy<Value = GridMap> {
        (1usize..12, 1usize..12).prop_flat_map(|(r, c)| {
            proptest::collection::vec(proptest::collection::vec(any::<bool>(), c), r)
                .prop_map(|rows| GridMap::from_rows(&rows, DEFAULT_CELL_SIZE_CM).unwrap())
        })
    }

    proptest! {
        #[test]
        fn text_round_trip(map in arb_map()) {
            prop_assert_eq!(parse_map(&map.to_text()).unwrap(), map);
        }

        #[test]
        fn neighbors_are_free_and_few(map in arb_map(), r in 0usize..12, col in 0usize..12) {
            let cell = c(r, col);
            match map.neighbors(cell) {
                Ok(ns) => {
                    prop_assert!(ns.len() <= 4);
                    for (mv, n) in ns {
                        prop_assert!(map.is_free(n));
                        prop_assert_eq!(cell.step(mv), Some(n));
                    }
                }
                Err(e) => {
                    prop_assert!(!map.in_bounds(cell));
                    prop_assert_eq!(e, MapError::OutOfBounds(cell));
                }
            }
        }

        #[test]
        fn opposite_moves_cancel(r in 1usize..100, col in 1usize..100, id in 0usize..4) {
            let mv = Move::from_id(id).unwrap();
            let back = Move::from_id((id + 2) % 4).unwrap();
            let cell = c(r, col);
            prop_assert_eq!(cell.step(mv).and_then(|n| n.step(back)), Some(cell));
        }
    }
}
