//! Probabilistic heuristic estimates.
//!
//! A heuristic is paired with the joint distribution of (heuristic value,
//! true distance) over the state space. From the joint counts we derive the
//! likelihood `P(h | o)`, which is the evidence message a heuristic node sends
//! to its search node, and the posterior `P(o | h)`. This module also
//! calibrates the parent-to-child outcome transition matrix and builds the
//! beacon-masked heuristic variants.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::oracle::{rank, DistanceTable};
use crate::puzzle::{GoalSpec, Heuristic, Manhattan, PuzzleState};

/// Heuristic value given to masked beacons.
pub const BEACON_REPLACEMENT: usize = 4;
/// States with heuristic value at most this are beacons.
pub const BEACON_THRESHOLD: usize = 3;
/// Additive smoothing applied to admissible cells of a sampled table.
pub const SAMPLED_SMOOTHING: f64 = 1e-6;

pub const DEFAULT_N_RANDOM: usize = 1000;
pub const DEFAULT_N_NEAREST: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Full,
    Sampled {
        n_random: usize,
        n_nearest: usize,
        seed: u64,
    },
    /// Built directly from a matrix, e.g. a hand-made model in a test.
    Manual,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Full => f.write_str("full"),
            Provenance::Sampled {
                n_random,
                n_nearest,
                ..
            } => write!(f, "sampled({n_random},{n_nearest})"),
            Provenance::Manual => f.write_str("manual"),
        }
    }
}

/// Joint counts indexed `[h][o]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCountTable {
    counts: Vec<Vec<f64>>,
    provenance: Provenance,
}

impl JointCountTable {
    /// Wraps a `[h][o]` matrix. Rows must be equally long and entries finite
    /// and non-negative.
    pub fn from_matrix(counts: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self> {
        let width = counts.first().map(Vec::len).unwrap_or(0);
        if width == 0 {
            return Err(Error::format("joint table", "empty matrix"));
        }
        for row in &counts {
            if row.len() != width {
                return Err(Error::format("joint table", "ragged rows"));
            }
            if row.iter().any(|&c| !(c.is_finite() && c >= 0.0)) {
                return Err(Error::format("joint table", "negative or non-finite count"));
            }
        }
        Ok(JointCountTable { counts, provenance })
    }

    fn zeros(h_values: usize, outcomes: usize, provenance: Provenance) -> Self {
        JointCountTable {
            counts: vec![vec![0.0; outcomes]; h_values],
            provenance,
        }
    }

    pub fn h_max(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn o_max(&self) -> usize {
        self.counts[0].len() - 1
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn get(&self, h: usize, o: usize) -> f64 {
        self.counts
            .get(h)
            .and_then(|row| row.get(o))
            .copied()
            .unwrap_or(0.0)
    }

    /// The outcome distribution mass for heuristic value `h`.
    pub fn column(&self, h: usize) -> &[f64] {
        &self.counts[h]
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().flatten().sum()
    }

    fn column_total(&self, h: usize) -> f64 {
        self.counts[h].iter().sum()
    }

    /// Fills every h-column without mass from its nearest non-empty
    /// neighbours, then adds `smoothing` to every cell with `o >= h`.
    ///
    /// An empty column takes the linear blend of the neighbouring columns'
    /// normalized outcome distributions, each shifted by its offset from `h`
    /// so that mass keeps its `o - h` position. Its total mass is the linear
    /// blend of the neighbours' totals (the single neighbour's total at the
    /// edges).
    pub fn interpolate_empty_columns(&mut self, smoothing: f64) {
        let outcomes = self.o_max() + 1;
        let filled: Vec<usize> = (0..self.counts.len())
            .filter(|&h| self.column_total(h) > 0.0)
            .collect();
        if filled.is_empty() {
            for (h, row) in self.counts.iter_mut().enumerate() {
                for cell in row.iter_mut().skip(h) {
                    *cell += smoothing;
                }
            }
            return;
        }

        let shifted = |src: &[f64], offset: isize| -> Vec<f64> {
            let total: f64 = src.iter().sum();
            let mut out = vec![0.0; outcomes];
            for (o, &mass) in src.iter().enumerate() {
                let target = o as isize + offset;
                if (0..outcomes as isize).contains(&target) {
                    out[target as usize] = mass / total;
                }
            }
            out
        };

        for h in 0..self.counts.len() {
            if self.column_total(h) > 0.0 {
                continue;
            }
            let below = filled.iter().rev().find(|&&f| f < h).copied();
            let above = filled.iter().find(|&&f| f > h).copied();
            let (dist, mass) = match (below, above) {
                (Some(lo), Some(hi)) => {
                    let w_hi = (h - lo) as f64 / (hi - lo) as f64;
                    let w_lo = 1.0 - w_hi;
                    let from_lo = shifted(&self.counts[lo], (h - lo) as isize);
                    let from_hi = shifted(&self.counts[hi], -((hi - h) as isize));
                    let dist: Vec<f64> = from_lo
                        .iter()
                        .zip(&from_hi)
                        .map(|(a, b)| w_lo * a + w_hi * b)
                        .collect();
                    let mass = w_lo * self.column_total(lo) + w_hi * self.column_total(hi);
                    (dist, mass)
                }
                (Some(lo), None) => (
                    shifted(&self.counts[lo], (h - lo) as isize),
                    self.column_total(lo),
                ),
                (None, Some(hi)) => (
                    shifted(&self.counts[hi], -((hi - h) as isize)),
                    self.column_total(hi),
                ),
                (None, None) => unreachable!("at least one column is filled"),
            };
            // Mass shifted off the outcome domain is dropped; renormalize.
            let kept: f64 = dist.iter().sum();
            if kept > 0.0 {
                for (cell, p) in self.counts[h].iter_mut().zip(&dist) {
                    *cell = mass * p / kept;
                }
            }
        }

        for (h, row) in self.counts.iter_mut().enumerate() {
            for cell in row.iter_mut().skip(h) {
                *cell += smoothing;
            }
        }
    }
}

/// Likelihood `P(h | o)` and posterior `P(o | h)` derived from joint counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PheModel {
    joint: JointCountTable,
    /// `[h][o]`, normalized over h for each o with support.
    likelihood: Vec<Vec<f64>>,
    /// `[h][o]`, normalized over o for each h with support.
    posterior: Vec<Vec<f64>>,
    variant: HeuristicVariant,
}

impl PheModel {
    pub fn from_joint(joint: JointCountTable) -> Self {
        let h_values = joint.h_max() + 1;
        let outcomes = joint.o_max() + 1;
        let mut likelihood = vec![vec![0.0; outcomes]; h_values];
        let mut posterior = vec![vec![0.0; outcomes]; h_values];
        for o in 0..outcomes {
            let row_total: f64 = (0..h_values).map(|h| joint.get(h, o)).sum();
            if row_total > 0.0 {
                for (h, lik) in likelihood.iter_mut().enumerate() {
                    lik[o] = joint.get(h, o) / row_total;
                }
            }
        }
        for (h, post) in posterior.iter_mut().enumerate() {
            let col_total = joint.column_total(h);
            if col_total > 0.0 {
                for (o, p) in post.iter_mut().enumerate() {
                    *p = joint.get(h, o) / col_total;
                }
            }
        }
        PheModel {
            joint,
            likelihood,
            posterior,
            variant: HeuristicVariant::Plain,
        }
    }

    /// A heuristic that reveals the outcome exactly: `P(h | o) = [h == o]`.
    pub fn delta(o_max: usize) -> Self {
        let counts = (0..=o_max)
            .map(|h| (0..=o_max).map(|o| if h == o { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::from_joint(JointCountTable::from_matrix(counts, Provenance::Manual).unwrap())
    }

    /// Uninformative evidence: every heuristic value equally likely under
    /// every outcome.
    pub fn uniform(h_max: usize, o_max: usize) -> Self {
        let counts = vec![vec![1.0; o_max + 1]; h_max + 1];
        Self::from_joint(JointCountTable::from_matrix(counts, Provenance::Manual).unwrap())
    }

    pub fn with_variant(mut self, variant: HeuristicVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn variant(&self) -> HeuristicVariant {
        self.variant
    }

    pub fn joint(&self) -> &JointCountTable {
        &self.joint
    }

    pub fn h_max(&self) -> usize {
        self.joint.h_max()
    }

    pub fn o_max(&self) -> usize {
        self.joint.o_max()
    }

    pub fn outcomes(&self) -> usize {
        self.o_max() + 1
    }

    /// `P(h | ·)` as a vector over outcomes; `None` for values never seen.
    pub fn likelihood_column(&self, h: usize) -> Option<&[f64]> {
        self.likelihood.get(h).map(Vec::as_slice)
    }

    pub fn likelihood(&self, h: usize, o: usize) -> f64 {
        self.likelihood
            .get(h)
            .and_then(|row| row.get(o))
            .copied()
            .unwrap_or(0.0)
    }

    /// `P(· | h)` as a vector over outcomes.
    pub fn posterior_column(&self, h: usize) -> Option<&[f64]> {
        self.posterior.get(h).map(Vec::as_slice)
    }

    pub fn posterior(&self, h: usize, o: usize) -> f64 {
        self.posterior
            .get(h)
            .and_then(|row| row.get(o))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let seed = match self.joint.provenance {
            Provenance::Sampled { seed, .. } => seed.to_string(),
            _ => "none".to_string(),
        };
        writeln!(
            w,
            "phe rows={} cols={} provenance={} variant={} seed={}",
            self.h_max() + 1,
            self.outcomes(),
            self.joint.provenance,
            self.variant,
            seed
        )?;
        write_rows(&mut w, &self.joint.counts)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        const WHAT: &str = "phe file";
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(WHAT, "empty file"))??;
        let fields = parse_header(&header, "phe", WHAT)?;
        let rows: usize = header_value(&fields, "rows", WHAT)?;
        let cols: usize = header_value(&fields, "cols", WHAT)?;
        let variant: HeuristicVariant = header_value(&fields, "variant", WHAT)?;
        let seed = header_str(&fields, "seed", WHAT)?;
        let provenance = parse_provenance(header_str(&fields, "provenance", WHAT)?, seed)?;
        let counts = read_rows(lines, rows, cols, WHAT)?;
        let joint = JointCountTable::from_matrix(counts, provenance)?;
        Ok(Self::from_joint(joint).with_variant(variant))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(std::io::BufWriter::new(fs::File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(fs::File::open(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransitionKind {
    Empirical,
    Uniform,
    Manual,
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransitionKind::Empirical => "empirical",
            TransitionKind::Uniform => "uniform",
            TransitionKind::Manual => "manual",
        })
    }
}

impl FromStr for TransitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(TransitionKind::Empirical),
            "uniform" => Ok(TransitionKind::Uniform),
            "manual" => Ok(TransitionKind::Manual),
            other => Err(Error::Config(format!("unknown transition kind {other:?}"))),
        }
    }
}

/// `P(O_child = j | O_parent = i)`, stored `[i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    p: Vec<Vec<f64>>,
    kind: TransitionKind,
}

impl TransitionMatrix {
    /// Normalizes each row that has any mass; rows without mass stay zero.
    pub fn from_rows(mut rows: Vec<Vec<f64>>, kind: TransitionKind) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::format("transition matrix", "matrix must be square"));
        }
        for row in &mut rows {
            if row.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
                return Err(Error::format(
                    "transition matrix",
                    "negative or non-finite entry",
                ));
            }
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter_mut().for_each(|p| *p /= total);
            }
        }
        Ok(TransitionMatrix { p: rows, kind })
    }

    /// `p(i-1 | i) = p(i+1 | i) = 1/2`, renormalized at the domain edges.
    pub fn uniform(o_max: usize) -> Self {
        let n = o_max + 1;
        let rows = (0..n)
            .map(|i| {
                let mut row = vec![0.0; n];
                if i > 0 {
                    row[i - 1] = 0.5;
                }
                if i + 1 < n {
                    row[i + 1] = 0.5;
                }
                row
            })
            .collect();
        Self::from_rows(rows, TransitionKind::Uniform).unwrap()
    }

    pub fn outcomes(&self) -> usize {
        self.p.len()
    }

    pub fn kind(&self) -> TransitionKind {
        self.kind
    }

    pub fn p(&self, parent: usize, child: usize) -> f64 {
        self.p
            .get(parent)
            .and_then(|row| row.get(child))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn row(&self, parent: usize) -> &[f64] {
        &self.p[parent]
    }

    /// Rootward: `out(i) = Σ_j msg(j) p(j | i)`.
    pub fn to_parent(&self, child_msg: &[f64], out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.p[i].iter().zip(child_msg).map(|(p, m)| p * m).sum();
        }
    }

    /// Leafward: `out(j) = Σ_i pi(i) p(j | i)`.
    pub fn to_child(&self, parent_pi: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (row, &w) in self.p.iter().zip(parent_pi) {
            if w == 0.0 {
                continue;
            }
            for (slot, p) in out.iter_mut().zip(row) {
                *slot += w * p;
            }
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.outcomes();
        writeln!(w, "transition rows={n} cols={n} kind={}", self.kind)?;
        write_rows(&mut w, &self.p)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        const WHAT: &str = "transition file";
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(WHAT, "empty file"))??;
        let fields = parse_header(&header, "transition", WHAT)?;
        let rows: usize = header_value(&fields, "rows", WHAT)?;
        let cols: usize = header_value(&fields, "cols", WHAT)?;
        let kind: TransitionKind = header_value(&fields, "kind", WHAT)?;
        if rows != cols {
            return Err(Error::format(WHAT, "matrix must be square"));
        }
        Self::from_rows(read_rows(lines, rows, cols, WHAT)?, kind)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(std::io::BufWriter::new(fs::File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(fs::File::open(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum HeuristicVariant {
    #[default]
    Plain,
    AllBeaconsRemoved,
    GoalOnlyBeacon,
}

impl HeuristicVariant {
    pub const ALL: [HeuristicVariant; 3] = [
        HeuristicVariant::Plain,
        HeuristicVariant::AllBeaconsRemoved,
        HeuristicVariant::GoalOnlyBeacon,
    ];
}

impl fmt::Display for HeuristicVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeuristicVariant::Plain => "plain",
            HeuristicVariant::AllBeaconsRemoved => "nobeacons",
            HeuristicVariant::GoalOnlyBeacon => "goalonly",
        })
    }
}

impl FromStr for HeuristicVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(HeuristicVariant::Plain),
            "nobeacons" => Ok(HeuristicVariant::AllBeaconsRemoved),
            "goalonly" => Ok(HeuristicVariant::GoalOnlyBeacon),
            other => Err(Error::Config(format!(
                "unknown heuristic variant {other:?} (expected plain, nobeacons or goalonly)"
            ))),
        }
    }
}

/// Manhattan Distance with some beacons re-valued to [`BEACON_REPLACEMENT`].
#[derive(Debug, Clone)]
pub struct MaskedHeuristic {
    base: Manhattan,
    variant: HeuristicVariant,
    /// Sorted ranks of the beacons whose value is replaced.
    masked: Vec<usize>,
}

impl MaskedHeuristic {
    pub fn variant(&self) -> HeuristicVariant {
        self.variant
    }

    pub fn masked_count(&self) -> usize {
        self.masked.len()
    }
}

impl Heuristic<PuzzleState> for MaskedHeuristic {
    fn evaluate(&self, state: &PuzzleState) -> usize {
        if !self.masked.is_empty() && self.masked.binary_search(&rank(state)).is_ok() {
            BEACON_REPLACEMENT
        } else {
            self.base.evaluate(state)
        }
    }
}

/// Reachable states with `h(s) <= threshold`, sorted by rank.
pub fn find_beacons<H: Heuristic<PuzzleState>>(
    table: &DistanceTable,
    h: &H,
    threshold: usize,
) -> Vec<PuzzleState> {
    table
        .reachable()
        .filter(|(s, _)| h.evaluate(s) <= threshold)
        .map(|(s, _)| s)
        .collect()
}

pub fn mask_beacons(
    goal: GoalSpec,
    variant: HeuristicVariant,
    beacons: &[PuzzleState],
) -> MaskedHeuristic {
    let mut masked: Vec<usize> = match variant {
        HeuristicVariant::Plain => Vec::new(),
        HeuristicVariant::AllBeaconsRemoved => beacons.iter().map(rank).collect(),
        HeuristicVariant::GoalOnlyBeacon => beacons
            .iter()
            .filter(|s| *s != goal.state())
            .map(rank)
            .collect(),
    };
    masked.sort_unstable();
    MaskedHeuristic {
        base: Manhattan::new(goal),
        variant,
        masked,
    }
}

/// The Manhattan Distance variant for the table's goal, with beacons found by
/// exhaustive scan.
pub fn heuristic_variant(table: &DistanceTable, variant: HeuristicVariant) -> MaskedHeuristic {
    let goal = *table.goal();
    let beacons = match variant {
        HeuristicVariant::Plain => Vec::new(),
        _ => find_beacons(table, &Manhattan::new(goal), BEACON_THRESHOLD),
    };
    mask_beacons(goal, variant, &beacons)
}

fn max_heuristic<H: Heuristic<PuzzleState>>(table: &DistanceTable, h: &H) -> usize {
    table
        .reachable()
        .map(|(s, _)| h.evaluate(&s))
        .max()
        .unwrap_or(0)
}

/// Joint counts of `(h(s), d(s))` over every reachable state.
pub fn calibrate_full<H: Heuristic<PuzzleState>>(table: &DistanceTable, h: &H) -> JointCountTable {
    let mut joint = JointCountTable::zeros(
        max_heuristic(table, h) + 1,
        table.max_distance() + 1,
        Provenance::Full,
    );
    for (s, d) in table.reachable() {
        joint.counts[h.evaluate(&s)][d] += 1.0;
    }
    joint
}

/// Joint counts from `n_random` states drawn uniformly without replacement
/// plus the `n_nearest` states closest to the goal (ties by rank), with empty
/// heuristic columns interpolated and admissible cells smoothed.
///
/// The heuristic's value range is taken from a scan of every reachable state;
/// only the sampled states contribute outcome information.
pub fn calibrate_sampled<H: Heuristic<PuzzleState>>(
    table: &DistanceTable,
    h: &H,
    n_random: usize,
    n_nearest: usize,
    seed: u64,
) -> Result<JointCountTable> {
    if n_random + n_nearest == 0 {
        return Err(Error::Config(
            "sampled calibration needs at least one state".into(),
        ));
    }
    let reachable: Vec<(PuzzleState, usize)> = table.reachable().collect();
    if n_random > reachable.len() || n_nearest > reachable.len() {
        return Err(Error::Config(format!(
            "cannot sample more than {} reachable states",
            reachable.len()
        )));
    }
    let mut joint = JointCountTable::zeros(
        max_heuristic(table, h) + 1,
        table.max_distance() + 1,
        Provenance::Sampled {
            n_random,
            n_nearest,
            seed,
        },
    );

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, reachable.len(), n_random).into_vec();
    picked.sort_unstable();
    for i in picked {
        let (s, d) = &reachable[i];
        joint.counts[h.evaluate(s)][*d] += 1.0;
    }

    // `reachable` is in rank order, so a stable sort by distance breaks ties
    // by rank.
    let mut nearest: Vec<&(PuzzleState, usize)> = reachable.iter().collect();
    nearest.sort_by_key(|(_, d)| *d);
    for (s, d) in nearest.into_iter().take(n_nearest) {
        joint.counts[h.evaluate(s)][*d] += 1.0;
    }

    joint.interpolate_empty_columns(SAMPLED_SMOOTHING);
    Ok(joint)
}

/// Empirical `P(O_child | O_parent)` over every reachable state and each of
/// its neighbours.
pub fn calibrate_transition(table: &DistanceTable) -> TransitionMatrix {
    let n = table.max_distance() + 1;
    let mut counts = vec![vec![0.0; n]; n];
    for (s, d) in table.reachable() {
        for (_, next) in s.neighbors() {
            let dn = table
                .exact_distance(&next)
                .expect("neighbours of reachable states are reachable");
            counts[d][dn] += 1.0;
        }
    }
    TransitionMatrix::from_rows(counts, TransitionKind::Empirical).unwrap()
}

/// The unconditional distance distribution of reachable states.
pub fn distance_prior(table: &DistanceTable) -> Vec<f64> {
    let hist = table.distance_histogram();
    let total: u64 = hist.iter().sum();
    hist.iter().map(|&c| c as f64 / total as f64).collect()
}

fn write_rows<W: Write>(w: &mut W, rows: &[Vec<f64>]) -> Result<()> {
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

fn read_rows<B: BufRead>(
    lines: std::io::Lines<B>,
    rows: usize,
    cols: usize,
    what: &'static str,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(rows);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::format(what, format!("bad number {tok:?}")))
            })
            .collect::<Result<_>>()?;
        if row.len() != cols {
            return Err(Error::format(
                what,
                format!("row {} has {} values, expected {cols}", out.len(), row.len()),
            ));
        }
        out.push(row);
    }
    if out.len() != rows {
        return Err(Error::format(
            what,
            format!("found {} rows, header says {rows}", out.len()),
        ));
    }
    Ok(out)
}

fn parse_header<'a>(
    header: &'a str,
    tag: &str,
    what: &'static str,
) -> Result<Vec<(&'a str, &'a str)>> {
    let mut parts = header.split_whitespace();
    if parts.next() != Some(tag) {
        return Err(Error::format(what, format!("header must start with {tag:?}")));
    }
    parts
        .map(|kv| {
            kv.split_once('=')
                .ok_or_else(|| Error::format(what, format!("bad header field {kv:?}")))
        })
        .collect()
}

fn header_str<'a>(fields: &[(&str, &'a str)], key: &str, what: &'static str) -> Result<&'a str> {
    fields
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::format(what, format!("header is missing {key}")))
}

fn header_value<T: FromStr>(fields: &[(&str, &str)], key: &str, what: &'static str) -> Result<T> {
    let raw = header_str(fields, key, what)?;
    raw.parse()
        .map_err(|_| Error::format(what, format!("bad header value {key}={raw}")))
}

fn parse_provenance(raw: &str, seed: &str) -> Result<Provenance> {
    const WHAT: &str = "phe file";
    match raw {
        "full" => Ok(Provenance::Full),
        "manual" => Ok(Provenance::Manual),
        _ => {
            let inner = raw
                .strip_prefix("sampled(")
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| Error::format(WHAT, format!("bad provenance {raw:?}")))?;
            let (a, b) = inner
                .split_once(',')
                .ok_or_else(|| Error::format(WHAT, format!("bad provenance {raw:?}")))?;
            let bad = |_| Error::format(WHAT, format!("bad provenance {raw:?}"));
            Ok(Provenance::Sampled {
                n_random: a.parse().map_err(bad)?,
                n_nearest: b.parse().map_err(bad)?,
                seed: seed
                    .parse()
                    .map_err(|_| Error::format(WHAT, format!("bad seed {seed:?}")))?,
            })
        }
    }
}
