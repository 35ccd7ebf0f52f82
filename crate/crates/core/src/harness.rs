//! Decision-quality experiments.
//!
//! For each horizon `d`, states at least `d` moves from the goal are sampled
//! uniformly (with replacement), the policy makes one move from each, and the
//! fraction of moves that strictly reduce the true distance is recorded.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::{BeliefVector, TreeOptions};
use crate::oracle::DistanceTable;
use crate::phe::{
    calibrate_full, calibrate_sampled, calibrate_transition, heuristic_variant, HeuristicVariant,
    MaskedHeuristic, PheModel, TransitionMatrix, DEFAULT_N_NEAREST, DEFAULT_N_RANDOM,
};
use crate::policies::{bps_decide, minimin_decide, random_decide, Decision, Policy, TieBreak};
use crate::puzzle::{EightPuzzle, Move, PuzzleState};

pub const CSV_HEADER: &str = "policy,variant,phe_mode,horizon,n,n_toward,quality,stderr,mean_nodes";

/// Minimin horizons above this need `allow_long_run`.
pub const MINIMIN_LONG_RUN_HORIZON: usize = 16;

/// Instances per horizon in the `paper` profile.
pub const PAPER_INSTANCES_MINIMIN: usize = 10_000;
pub const PAPER_INSTANCES_BPS: usize = 1000;
pub const DEFAULT_INSTANCES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PheMode {
    #[default]
    Full,
    Sampled { n_random: usize, n_nearest: usize },
}

impl PheMode {
    pub fn paper_sampled() -> Self {
        PheMode::Sampled {
            n_random: DEFAULT_N_RANDOM,
            n_nearest: DEFAULT_N_NEAREST,
        }
    }
}

/// CSV-safe label, e.g. `full` or `sampled-1000-500`.
impl fmt::Display for PheMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PheMode::Full => f.write_str("full"),
            PheMode::Sampled {
                n_random,
                n_nearest,
            } => write!(f, "sampled-{n_random}-{n_nearest}"),
        }
    }
}

impl FromStr for PheMode {
    type Err = Error;

    /// Accepts `full`, `sampled` (1000 random, 500 nearest) or `sampled-<random>-<nearest>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(PheMode::Full),
            "sampled" => Ok(PheMode::paper_sampled()),
            _ => {
                let bad = || Error::Config(format!("unknown PHE mode {s:?}"));
                let rest = s.strip_prefix("sampled-").ok_or_else(bad)?;
                let (a, b) = rest.split_once('-').ok_or_else(bad)?;
                Ok(PheMode::Sampled {
                    n_random: a.parse().map_err(|_| bad())?,
                    n_nearest: b.parse().map_err(|_| bad())?,
                })
            }
        }
    }
}

/// Which distribution BPS uses for the root's outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorMode {
    /// Distance histogram of all reachable states.
    #[default]
    Unconditional,
    /// The histogram restricted to distances `>= horizon`.
    Eligible,
}

impl FromStr for PriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unconditional" => Ok(PriorMode::Unconditional),
            "eligible" => Ok(PriorMode::Eligible),
            other => Err(Error::Config(format!(
                "unknown prior {other:?} (expected unconditional or eligible)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub policy: Policy,
    pub variant: HeuristicVariant,
    pub phe_mode: PheMode,
    pub horizons: Vec<usize>,
    pub instances: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub workers: usize,
    pub prior: PriorMode,
    pub random_ties: bool,
    pub prune_reversal: bool,
    pub allow_long_run: bool,
}

impl ExperimentConfig {
    pub fn new(policy: Policy) -> Self {
        ExperimentConfig {
            policy,
            variant: HeuristicVariant::Plain,
            phe_mode: PheMode::Full,
            horizons: vec![1],
            instances: DEFAULT_INSTANCES,
            seed: 0,
            output: None,
            workers: 1,
            prior: PriorMode::Unconditional,
            random_ties: false,
            prune_reversal: true,
            allow_long_run: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::Config("horizons must be non-empty and >= 1".into()));
        }
        if self.instances == 0 {
            return Err(Error::Config("instances must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if self.policy == Policy::Minimin && !self.allow_long_run {
            if let Some(&h) = self.horizons.iter().find(|&&h| h > MINIMIN_LONG_RUN_HORIZON) {
                return Err(Error::Config(format!(
                    "minimin at horizon {h} expands millions of nodes per decision; \
                     pass the long-run flag to allow horizons above {MINIMIN_LONG_RUN_HORIZON}"
                )));
            }
        }
        Ok(())
    }

    /// The instance counts used for the published curves.
    pub fn apply_paper_profile(&mut self) {
        self.instances = match self.policy {
            Policy::Bps => PAPER_INSTANCES_BPS,
            Policy::Minimin | Policy::Random => PAPER_INSTANCES_MINIMIN,
        };
    }

    /// CSV label of the PHE column; only BPS uses a PHE.
    fn phe_label(&self) -> String {
        match self.policy {
            Policy::Bps => self.phe_mode.to_string(),
            _ => "none".to_string(),
        }
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("{key}: bad value {value:?}")))
        }
        match key {
            "policy" => self.policy = value.parse()?,
            "variant" => self.variant = value.parse()?,
            "phe" => self.phe_mode = value.parse()?,
            "horizons" => self.horizons = parse_horizons(value)?,
            "instances" => self.instances = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out" => self.output = Some(PathBuf::from(value)),
            "workers" => self.workers = num(key, value)?,
            "prior" => self.prior = value.parse()?,
            "tie_break" => {
                self.random_ties = match value {
                    "first" => false,
                    "random" => true,
                    _ => return Err(Error::Config(format!("tie_break: bad value {value:?}"))),
                }
            }
            "prune_reversal" => self.prune_reversal = num(key, value)?,
            "long_run" => self.allow_long_run = num(key, value)?,
            "paper" => {
                if num::<bool>(key, value)? {
                    self.apply_paper_profile();
                }
            }
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }
}

/// Parses `"1..7"`, `"5,10,15"` or a mix such as `"1..3,10"`; ranges are
/// inclusive.
pub fn parse_horizons(spec: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("bad horizon list {spec:?}"));
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let a: usize = a.trim().parse().map_err(|_| bad())?;
                let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// Everything a run needs besides its configuration.
#[derive(Debug, Clone)]
pub struct Models<'a> {
    pub table: &'a DistanceTable,
    pub heuristic: MaskedHeuristic,
    /// Required by BPS only.
    pub phe: Option<PheModel>,
    pub transition: Option<TransitionMatrix>,
}

impl<'a> Models<'a> {
    /// Builds the heuristic variant and, for BPS, calibrates its PHE and the
    /// transition matrix from the table.
    pub fn calibrate(table: &'a DistanceTable, cfg: &ExperimentConfig) -> Result<Self> {
        let heuristic = heuristic_variant(table, cfg.variant);
        let (phe, transition) = if cfg.policy == Policy::Bps {
            let joint = match cfg.phe_mode {
                PheMode::Full => calibrate_full(table, &heuristic),
                PheMode::Sampled {
                    n_random,
                    n_nearest,
                } => calibrate_sampled(table, &heuristic, n_random, n_nearest, cfg.seed)?,
            };
            (
                Some(PheModel::from_joint(joint).with_variant(cfg.variant)),
                Some(calibrate_transition(table)),
            )
        } else {
            (None, None)
        };
        Ok(Models {
            table,
            heuristic,
            phe,
            transition,
        })
    }

    /// The root prior for BPS at `horizon`.
    pub fn prior(&self, mode: PriorMode, horizon: usize) -> Result<BeliefVector> {
        let hist = self.table.distance_histogram();
        let values = hist
            .iter()
            .enumerate()
            .map(|(d, &c)| match mode {
                PriorMode::Eligible if d < horizon => 0.0,
                _ => c as f64,
            })
            .collect();
        BeliefVector::new(values)
    }
}

/// `n` states drawn uniformly with replacement from those at least `horizon`
/// moves from the goal.
pub fn sample_eligible(
    table: &DistanceTable,
    horizon: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<PuzzleState>> {
    let eligible: Vec<PuzzleState> = table
        .reachable()
        .filter(|(_, d)| *d >= horizon)
        .map(|(s, _)| s)
        .collect();
    if eligible.is_empty() {
        return Err(Error::EmptyEligibleSet {
            horizon,
            max: table.max_distance(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| eligible[rng.gen_range(0..eligible.len())])
        .collect())
}

/// SplitMix64 finalizer, used to derive independent seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn horizon_seed(master: u64, horizon: usize) -> u64 {
    mix(mix(master) ^ horizon as u64)
}

pub fn instance_seed(master: u64, horizon: usize, index: usize) -> u64 {
    mix(horizon_seed(master, horizon) ^ mix(index as u64 ^ 0xA5A5_A5A5))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityRecord {
    pub policy: String,
    pub variant: String,
    pub phe_mode: String,
    pub horizon: usize,
    pub n: usize,
    pub n_toward: usize,
    pub quality: f64,
    pub stderr: f64,
    pub mean_nodes: f64,
}

impl QualityRecord {
    fn new(
        cfg: &ExperimentConfig,
        horizon: usize,
        n: usize,
        n_toward: usize,
        total_nodes: u64,
    ) -> Self {
        let (quality, stderr, mean_nodes) = if n == 0 {
            (0.0, 0.0, 0.0)
        } else {
            let q = n_toward as f64 / n as f64;
            (
                q,
                (q * (1.0 - q) / n as f64).sqrt(),
                total_nodes as f64 / n as f64,
            )
        };
        QualityRecord {
            policy: cfg.policy.to_string(),
            variant: cfg.variant.to_string(),
            phe_mode: cfg.phe_label(),
            horizon,
            n,
            n_toward,
            quality,
            stderr,
            mean_nodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceError {
    pub horizon: usize,
    pub index: usize,
    pub state: PuzzleState,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub records: Vec<QualityRecord>,
    pub errors: Vec<InstanceError>,
}

fn decide(
    cfg: &ExperimentConfig,
    models: &Models<'_>,
    domain: &EightPuzzle,
    prior: Option<&BeliefVector>,
    root: &PuzzleState,
    horizon: usize,
    seed: u64,
) -> Result<Decision<Move>> {
    let opts = TreeOptions {
        horizon,
        prune_reversal: cfg.prune_reversal,
    };
    let tie = if cfg.random_ties {
        TieBreak::Random(seed)
    } else {
        TieBreak::First
    };
    match cfg.policy {
        Policy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            random_decide(domain, root, &mut rng)
        }
        Policy::Minimin => minimin_decide(domain, root, opts, &models.heuristic, tie),
        Policy::Bps => {
            let missing = || Error::Config("BPS needs a PHE and a transition matrix".into());
            let phe = models.phe.as_ref().ok_or_else(missing)?;
            let trans = models.transition.as_ref().ok_or_else(missing)?;
            let prior = prior.ok_or_else(missing)?;
            bps_decide(
                domain,
                root,
                opts,
                &models.heuristic,
                phe,
                trans,
                prior,
                tie,
            )
        }
    }
}

/// Runs every horizon of `cfg`. Instance failures are collected rather than
/// aborting the run; configuration problems are returned as errors.
pub fn run_experiment(cfg: &ExperimentConfig, models: &Models<'_>) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    if cfg.policy == Policy::Bps {
        if let Some(phe) = &models.phe {
            if phe.variant() != cfg.variant {
                return Err(Error::Config(format!(
                    "PHE was calibrated for the {} heuristic, run uses {}",
                    phe.variant(),
                    cfg.variant
                )));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let domain = EightPuzzle::new(*models.table.goal());

    let mut records = Vec::with_capacity(cfg.horizons.len());
    let mut errors = Vec::new();
    for &horizon in &cfg.horizons {
        let states = sample_eligible(
            models.table,
            horizon,
            cfg.instances,
            horizon_seed(cfg.seed, horizon),
        )?;
        let prior = match cfg.policy {
            Policy::Bps => Some(models.prior(cfg.prior, horizon)?),
            _ => None,
        };
        let results: Vec<Result<(bool, usize)>> = pool.install(|| {
            states
                .par_iter()
                .enumerate()
                .map(|(index, root)| {
                    let seed = instance_seed(cfg.seed, horizon, index);
                    let d = decide(cfg, models, &domain, prior.as_ref(), root, horizon, seed)?;
                    let toward = models.table.is_toward_goal(root, d.chosen)?;
                    Ok((toward, d.nodes))
                })
                .collect()
        });

        let (mut n, mut n_toward, mut nodes) = (0usize, 0usize, 0u64);
        for (index, result) in results.into_iter().enumerate() {
            match result {
                Ok((toward, count)) => {
                    n += 1;
                    n_toward += toward as usize;
                    nodes += count as u64;
                }
                Err(e) => errors.push(InstanceError {
                    horizon,
                    index,
                    state: states[index],
                    message: e.to_string(),
                }),
            }
        }
        records.push(QualityRecord::new(cfg, horizon, n, n_toward, nodes));
    }
    Ok(ExperimentOutcome { records, errors })
}

pub fn write_csv<W: Write>(records: &[QualityRecord], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{:.6},{:.6},{:.6}",
            r.policy,
            r.variant,
            r.phe_mode,
            r.horizon,
            r.n,
            r.n_toward,
            r.quality,
            r.stderr,
            r.mean_nodes
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(records: &[QualityRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(records, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<QualityRecord>> {
    const WHAT: &str = "quality CSV";
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::format(WHAT, "missing or unexpected header"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(Error::format(WHAT, format!("expected 9 fields in {line:?}")));
            }
            let int = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::format(WHAT, format!("bad integer {s:?}")))
            };
            let real = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::format(WHAT, format!("bad number {s:?}")))
            };
            Ok(QualityRecord {
                policy: f[0].to_string(),
                variant: f[1].to_string(),
                phe_mode: f[2].to_string(),
                horizon: int(f[3])?,
                n: int(f[4])?,
                n_toward: int(f[5])?,
                quality: real(f[6])?,
                stderr: real(f[7])?,
                mean_nodes: real(f[8])?,
            })
        })
        .collect()
}
