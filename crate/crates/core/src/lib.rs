//! Bayesian problem solving on the Eight Puzzle.
//!
//! Heuristic evaluations are treated as uncertain evidence about a node's
//! true distance to the goal. Beliefs over those distances are propagated
//! through a fixed-depth search tree by message passing, and moves are chosen
//! by minimum expected distance. The crate also ships the exact ground truth
//! (a breadth-first distance table), heuristic calibration, the face-value
//! Minimin and random baselines, and the decision-quality harness used to
//! compare them.

pub mod error;
pub mod harness;
pub mod inference;
pub mod oracle;
pub mod phe;
pub mod policies;
pub mod puzzle;
pub mod verify;

pub use error::{Error, Result};

pub use oracle::DistanceTable;
pub use phe::{HeuristicVariant, JointCountTable, PheModel, TransitionMatrix};

pub use puzzle::{Domain, EightPuzzle, GoalSpec, Heuristic, Manhattan, Move, PuzzleState};
