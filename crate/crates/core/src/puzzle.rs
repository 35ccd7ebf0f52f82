//! The Eight Puzzle: states, blank moves and the Manhattan Distance heuristic.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const CELLS: usize = 9;
const WIDTH: usize = 3;

/// A search domain as seen by the tree builder and the policies.
pub trait Domain {
    type State: Clone + Eq;
    type Move: Copy + Eq + fmt::Debug;

    /// Successor states in a fixed, deterministic order.
    fn successors(&self, state: &Self::State) -> Vec<(Self::Move, Self::State)>;

    fn is_goal(&self, state: &Self::State) -> bool;
}

/// A heuristic evaluation function returning a non-negative integer estimate.
pub trait Heuristic<S> {
    fn evaluate(&self, state: &S) -> usize;
}

impl<S, F> Heuristic<S> for F
where
    F: Fn(&S) -> usize,
{
    fn evaluate(&self, state: &S) -> usize {
        self(state)
    }
}

/// Direction in which the blank moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    pub fn inverse(self) -> Move {
        match self {
            Move::Up => Move::Down,
            Move::Down => Move::Up,
            Move::Left => Move::Right,
            Move::Right => Move::Left,
        }
    }

    /// Destination cell of a blank at `blank`, if it stays on the board.
    fn target(self, blank: usize) -> Option<usize> {
        let (row, col) = (blank / WIDTH, blank % WIDTH);
        match self {
            Move::Up if row > 0 => Some(blank - WIDTH),
            Move::Down if row + 1 < WIDTH => Some(blank + WIDTH),
            Move::Left if col > 0 => Some(blank - 1),
            Move::Right if col + 1 < WIDTH => Some(blank + 1),
            _ => None,
        }
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Move::Up => "up",
            Move::Down => "down",
            Move::Left => "left",
            Move::Right => "right",
        };
        f.write_str(name)
    }
}

/// A 3x3 board, row-major, with 0 as the blank.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PuzzleState {
    cells: [u8; CELLS],
    blank: u8,
}

impl PuzzleState {
    pub fn new(cells: [u8; CELLS]) -> Result<Self> {
        let mut seen = [false; CELLS];
        for &c in &cells {
            let c = c as usize;
            if c >= CELLS || seen[c] {
                return Err(Error::InvalidState(format!(
                    "{cells:?} is not a permutation of 0..=8"
                )));
            }
            seen[c] = true;
        }
        let blank = cells.iter().position(|&c| c == 0).unwrap() as u8;
        Ok(PuzzleState { cells, blank })
    }

    /// Blank at cell 0, tiles 1..8 in row-major order.
    pub fn default_goal() -> Self {
        PuzzleState {
            cells: [0, 1, 2, 3, 4, 5, 6, 7, 8],
            blank: 0,
        }
    }

    pub fn cells(&self) -> &[u8; CELLS] {
        &self.cells
    }

    pub fn blank(&self) -> usize {
        self.blank as usize
    }

    pub fn is_legal(&self, mv: Move) -> bool {
        mv.target(self.blank()).is_some()
    }

    pub fn apply(&self, mv: Move) -> Result<PuzzleState> {
        let blank = self.blank();
        let target = mv.target(blank).ok_or(Error::IllegalMove { mv, blank })?;
        let mut cells = self.cells;
        cells.swap(blank, target);
        Ok(PuzzleState {
            cells,
            blank: target as u8,
        })
    }

    /// Legal blank moves in the fixed order Up, Down, Left, Right.
    pub fn neighbors(&self) -> Vec<(Move, PuzzleState)> {
        let blank = self.blank();
        Move::ALL
            .iter()
            .filter_map(|&mv| {
                mv.target(blank).map(|target| {
                    let mut cells = self.cells;
                    cells.swap(blank, target);
                    (
                        mv,
                        PuzzleState {
                            cells,
                            blank: target as u8,
                        },
                    )
                })
            })
            .collect()
    }

    /// Parity of the number of inversions among the tiles, blank ignored.
    fn inversion_parity(&self) -> bool {
        let tiles: Vec<u8> = self.cells.iter().copied().filter(|&c| c != 0).collect();
        let mut inversions = 0usize;
        for i in 0..tiles.len() {
            for j in i + 1..tiles.len() {
                if tiles[i] > tiles[j] {
                    inversions += 1;
                }
            }
        }
        inversions % 2 == 1
    }
}

impl fmt::Display for PuzzleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.cells.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for PuzzleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PuzzleState({self})")
    }
}

impl FromStr for PuzzleState {
    type Err = Error;

    /// Parses nine whitespace-separated integers, e.g. `"0 1 2 3 4 5 6 7 8"`.
    fn from_str(s: &str) -> Result<Self> {
        let parsed: Vec<u8> = s
            .split_whitespace()
            .map(|tok| {
                tok.parse::<u8>()
                    .map_err(|_| Error::InvalidState(format!("bad cell value {tok:?}")))
            })
            .collect::<Result<_>>()?;
        let cells: [u8; CELLS] = parsed.try_into().map_err(|v: Vec<u8>| {
            Error::InvalidState(format!("expected 9 cells, found {}", v.len()))
        })?;
        PuzzleState::new(cells)
    }
}

/// The goal configuration of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GoalSpec {
    goal: PuzzleState,
    /// `home[tile]` is the goal cell of each tile.
    home: [u8; CELLS],
}

impl GoalSpec {
    pub fn new(goal: PuzzleState) -> Self {
        let mut home = [0u8; CELLS];
        for (cell, &tile) in goal.cells.iter().enumerate() {
            home[tile as usize] = cell as u8;
        }
        GoalSpec { goal, home }
    }

    pub fn state(&self) -> &PuzzleState {
        &self.goal
    }

    pub fn manhattan_distance(&self, s: &PuzzleState) -> usize {
        s.cells
            .iter()
            .enumerate()
            .filter(|(_, &tile)| tile != 0)
            .map(|(cell, &tile)| {
                let home = self.home[tile as usize] as usize;
                (cell / WIDTH).abs_diff(home / WIDTH) + (cell % WIDTH).abs_diff(home % WIDTH)
            })
            .sum()
    }

    /// True iff `s` lies in the goal's reachability class.
    pub fn solvable(&self, s: &PuzzleState) -> bool {
        s.inversion_parity() == self.goal.inversion_parity()
    }
}

impl Default for GoalSpec {
    fn default() -> Self {
        GoalSpec::new(PuzzleState::default_goal())
    }
}

/// The Eight Puzzle as a search domain with unit-cost blank moves.
#[derive(Debug, Clone, Copy, Default)]
pub struct EightPuzzle {
    pub goal: GoalSpec,
}

impl EightPuzzle {
    pub fn new(goal: GoalSpec) -> Self {
        EightPuzzle { goal }
    }
}

impl Domain for EightPuzzle {
    type State = PuzzleState;
    type Move = Move;

    fn successors(&self, state: &PuzzleState) -> Vec<(Move, PuzzleState)> {
        state.neighbors()
    }

    fn is_goal(&self, state: &PuzzleState) -> bool {
        *state == self.goal.goal
    }
}

/// Manhattan Distance to a fixed goal.
#[derive(Debug, Clone, Copy, Default)]
pub struct Manhattan {
    pub goal: GoalSpec,
}

impl Manhattan {
    pub fn new(goal: GoalSpec) -> Self {
        Manhattan { goal }
    }
}

impl Heuristic<PuzzleState> for Manhattan {
    fn evaluate(&self, state: &PuzzleState) -> usize {
        self.goal.manhattan_distance(state)
    }
}
