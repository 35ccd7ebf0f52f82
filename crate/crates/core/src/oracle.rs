//! Exact goal distances for every state, by breadth-first enumeration.
//!
//! States are indexed by the lexicographic rank of their cell sequence
//! (Lehmer code), so the whole table is a dense byte array of 9! entries.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::puzzle::{GoalSpec, Heuristic, Move, PuzzleState, CELLS};

/// 9!
pub const PERMUTATIONS: usize = 362_880;
/// 9!/2
pub const REACHABLE: usize = 181_440;
pub const UNREACHABLE: u8 = 255;

const MAGIC: &[u8; 4] = b"BPS8";
const VERSION: u8 = 0x01;

const FACTORIAL: [usize; CELLS] = [1, 1, 2, 6, 24, 120, 720, 5040, 40320];

pub fn rank(s: &PuzzleState) -> usize {
    let cells = s.cells();
    let mut r = 0;
    for i in 0..CELLS {
        let smaller_after = cells[i + 1..].iter().filter(|&&c| c < cells[i]).count();
        r += smaller_after * FACTORIAL[CELLS - 1 - i];
    }
    r
}

pub fn unrank(mut index: usize) -> Result<PuzzleState> {
    if index >= PERMUTATIONS {
        return Err(Error::RankOutOfRange(index));
    }
    let mut pool: Vec<u8> = (0..CELLS as u8).collect();
    let mut cells = [0u8; CELLS];
    for (i, cell) in cells.iter_mut().enumerate() {
        let f = FACTORIAL[CELLS - 1 - i];
        *cell = pool.remove(index / f);
        index %= f;
    }
    PuzzleState::new(cells)
}

/// Exact distance to the goal for every permutation, `UNREACHABLE` outside
/// the goal's solvability class.
#[derive(Clone, PartialEq, Eq)]
pub struct DistanceTable {
    distances: Vec<u8>,
    goal: GoalSpec,
}

impl std::fmt::Debug for DistanceTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DistanceTable")
            .field("goal", self.goal.state())
            .field("max_distance", &self.max_distance())
            .finish()
    }
}

impl DistanceTable {
    pub fn build(goal: GoalSpec) -> Self {
        let mut distances = vec![UNREACHABLE; PERMUTATIONS];
        let mut queue = VecDeque::with_capacity(REACHABLE);
        distances[rank(goal.state())] = 0;
        queue.push_back(*goal.state());
        while let Some(s) = queue.pop_front() {
            let next = distances[rank(&s)] + 1;
            for (_, n) in s.neighbors() {
                let r = rank(&n);
                if distances[r] == UNREACHABLE {
                    distances[r] = next;
                    queue.push_back(n);
                }
            }
        }
        DistanceTable { distances, goal }
    }

    pub fn goal(&self) -> &GoalSpec {
        &self.goal
    }

    /// Raw distance bytes in rank order.
    pub fn raw(&self) -> &[u8] {
        &self.distances
    }

    pub fn exact_distance(&self, s: &PuzzleState) -> Result<usize> {
        match self.distances[rank(s)] {
            UNREACHABLE => Err(Error::UnreachableState(s.to_string())),
            d => Ok(d as usize),
        }
    }

    /// True iff `mv` strictly decreases the exact distance to the goal.
    pub fn is_toward_goal(&self, s: &PuzzleState, mv: Move) -> Result<bool> {
        let next = s.apply(mv)?;
        Ok(self.exact_distance(&next)? + 1 == self.exact_distance(s)?)
    }

    pub fn reachable_count(&self) -> usize {
        self.distances.iter().filter(|&&d| d != UNREACHABLE).count()
    }

    pub fn max_distance(&self) -> usize {
        self.distances
            .iter()
            .filter(|&&d| d != UNREACHABLE)
            .max()
            .copied()
            .unwrap_or(0) as usize
    }

    /// Count of reachable states at each distance 0..=max.
    pub fn distance_histogram(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.max_distance() + 1];
        for &d in &self.distances {
            if d != UNREACHABLE {
                counts[d as usize] += 1;
            }
        }
        counts
    }

    /// Reachable states with their distances, in rank order.
    pub fn reachable(&self) -> impl Iterator<Item = (PuzzleState, usize)> + '_ {
        self.distances
            .iter()
            .enumerate()
            .filter(|(_, &d)| d != UNREACHABLE)
            .map(|(r, &d)| (unrank(r).expect("rank in range"), d as usize))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        w.write_all(self.goal.state().cells())?;
        w.write_all(&self.distances)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 5];
        r.read_exact(&mut header)
            .map_err(|_| Error::format("oracle table", "truncated header"))?;
        if &header[..4] != MAGIC {
            return Err(Error::format("oracle table", "bad magic bytes"));
        }
        if header[4] != VERSION {
            return Err(Error::format(
                "oracle table",
                format!("unsupported version {}", header[4]),
            ));
        }
        let mut goal = [0u8; CELLS];
        r.read_exact(&mut goal)
            .map_err(|_| Error::format("oracle table", "truncated goal"))?;
        let goal = GoalSpec::new(
            PuzzleState::new(goal).map_err(|e| Error::format("oracle table", e.to_string()))?,
        );
        let mut distances = Vec::with_capacity(PERMUTATIONS);
        r.read_to_end(&mut distances)?;
        if distances.len() != PERMUTATIONS {
            return Err(Error::format(
                "oracle table",
                format!("expected {PERMUTATIONS} distance bytes, found {}", distances.len()),
            ));
        }
        if distances[rank(goal.state())] != 0 {
            return Err(Error::format("oracle table", "goal entry is not zero"));
        }
        Ok(DistanceTable { distances, goal })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// The table is a perfect heuristic; unreachable states evaluate to 255.
impl Heuristic<PuzzleState> for DistanceTable {
    fn evaluate(&self, state: &PuzzleState) -> usize {
        self.distances[rank(state)] as usize
    }
}
