use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bps_core::harness::{self, ExperimentConfig, Models};
use bps_core::inference::{build_tree, infer_root, node_beliefs, TreeOptions};
use bps_core::phe::{
    calibrate_full, calibrate_sampled, calibrate_transition, find_beacons, heuristic_variant,
    HeuristicVariant, PheModel, TransitionMatrix, BEACON_THRESHOLD,
};
use bps_core::policies::{bps_decide, minimin_decide, Policy, TieBreak};
use bps_core::verify::{self, CheckResult};
use bps_core::{DistanceTable, EightPuzzle, GoalSpec, Heuristic, Manhattan, PuzzleState};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EXIT_USAGE: u8 = 1;
const EXIT_VERIFY: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

const PHE_FILE: &str = "phe.txt";
const TRANSITION_FILE: &str = "transition.txt";

/// Bayesian problem solving on the Eight Puzzle: build the distance oracle,
/// calibrate heuristic models, and measure decision quality.
#[derive(Debug, Parser)]
#[command(name = "bps", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Enumerate every reachable state breadth-first and write the distance table.
    BuildOracle {
        /// Goal state as nine space-separated cells, 0 is the blank.
        #[arg(long, default_value = "0 1 2 3 4 5 6 7 8")]
        goal: String,
        /// Output table file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate a PHE and the outcome transition matrix; writes phe.txt and
    /// transition.txt into the output directory.
    Calibrate {
        /// Distance table written by build-oracle.
        #[arg(long)]
        oracle: PathBuf,
        /// full (every reachable state) or sampled.
        #[arg(long, default_value = "full")]
        mode: String,
        /// Uniformly sampled states in sampled mode.
        #[arg(long, default_value_t = bps_core::phe::DEFAULT_N_RANDOM)]
        n_random: usize,
        /// States nearest the goal added in sampled mode.
        #[arg(long, default_value_t = bps_core::phe::DEFAULT_N_NEAREST)]
        n_nearest: usize,
        /// plain, nobeacons or goalonly.
        #[arg(long, default_value = "plain")]
        variant: String,
        /// Sampling seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a decision-quality experiment and write CSV.
    Run(RunArgs),
    /// Check built artifacts and core invariants; exit 2 on any failure.
    Verify {
        #[arg(long)]
        oracle: PathBuf,
        /// Directory with phe.txt and transition.txt from calibrate.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Random trees compared against joint enumeration.
        #[arg(long, default_value_t = 200)]
        trials: usize,
    },
    /// Show heuristic values, distances and policy decisions for one state.
    Inspect {
        /// State as nine space-separated cells.
        #[arg(long)]
        state: String,
        /// Distance table; built in memory when absent.
        #[arg(long)]
        oracle: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        horizon: usize,
        /// plain, nobeacons or goalonly.
        #[arg(long, default_value = "plain")]
        variant: String,
        /// Print the belief vector of every tree node.
        #[arg(long)]
        dump_beliefs: bool,
    },
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Key-value config file (`key = value` per line); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// bps, minimin or random.
    #[arg(long)]
    policy: Option<String>,
    /// plain, nobeacons or goalonly.
    #[arg(long)]
    variant: Option<String>,
    /// full, sampled, or sampled-<random>-<nearest>.
    #[arg(long)]
    phe: Option<String>,
    /// Horizon list such as 1..7 or 5,10,15.
    #[arg(long)]
    horizons: Option<String>,
    /// Instances per horizon.
    #[arg(long)]
    instances: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// BPS root prior: unconditional or eligible.
    #[arg(long)]
    prior: Option<String>,
    /// first or random.
    #[arg(long)]
    tie_break: Option<String>,
    /// Expand the inverse of the generating move too.
    #[arg(long)]
    no_prune: bool,
    /// Use the published instance counts (10000 Minimin/random, 1000 BPS).
    #[arg(long)]
    paper: bool,
    /// Allow Minimin horizons above 16.
    #[arg(long)]
    long_run: bool,
    /// Distance table; built in memory when absent.
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Directory with phe.txt and transition.txt; calibrated in memory when absent.
    #[arg(long)]
    models: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

/// Errors raised while validating flags, before any computation.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn dispatch(command: Command) -> Result<u8> {
    let result = match command {
        Command::BuildOracle { goal, out } => build_oracle(&goal, &out),
        Command::Calibrate {
            oracle,
            mode,
            n_random,
            n_nearest,
            variant,
            seed,
            out,
        } => calibrate(&oracle, &mode, n_random, n_nearest, &variant, seed, &out),
        Command::Run(args) => run(args),
        Command::Verify {
            oracle,
            models,
            trials,
        } => verify_artifacts(&oracle, models.as_deref(), trials),
        Command::Inspect {
            state,
            oracle,
            horizon,
            variant,
            dump_beliefs,
        } => inspect(&state, oracle.as_deref(), horizon, &variant, dump_beliefs),
    };
    match result {
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("usage error: {e}");
            Ok(EXIT_USAGE)
        }
        other => other,
    }
}

fn parse_state(raw: &str) -> Result<PuzzleState> {
    raw.parse()
        .map_err(|e: bps_core::Error| usage(format!("{raw:?}: {e}")))
}

fn parse_variant(raw: &str) -> Result<HeuristicVariant> {
    raw.parse().map_err(|e: bps_core::Error| usage(e.to_string()))
}

fn load_table(path: &Path) -> Result<DistanceTable> {
    DistanceTable::load(path).with_context(|| format!("reading oracle table {}", path.display()))
}

fn build_oracle(goal: &str, out: &Path) -> Result<u8> {
    let goal = parse_state(goal)?;
    let table = DistanceTable::build(GoalSpec::new(goal));
    table
        .save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    println!("reachable={}", table.reachable_count());
    println!("max_distance={}", table.max_distance());
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn calibrate(
    oracle: &Path,
    mode: &str,
    n_random: usize,
    n_nearest: usize,
    variant: &str,
    seed: u64,
    out: &Path,
) -> Result<u8> {
    let variant = parse_variant(variant)?;
    if mode != "full" && mode != "sampled" {
        return Err(usage(format!("--mode must be full or sampled, got {mode:?}")));
    }
    let table = load_table(oracle)?;
    let h = heuristic_variant(&table, variant);
    let joint = if mode == "full" {
        calibrate_full(&table, &h)
    } else {
        calibrate_sampled(&table, &h, n_random, n_nearest, seed)?
    };
    let phe = PheModel::from_joint(joint).with_variant(variant);
    let trans = calibrate_transition(&table);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    phe.save(out.join(PHE_FILE))?;
    trans.save(out.join(TRANSITION_FILE))?;

    let beacons = find_beacons(&table, &Manhattan::new(*table.goal()), BEACON_THRESHOLD).len();
    println!("variant={variant}");
    println!("beacons={beacons}");
    println!("masked={}", h.masked_count());
    println!("total={}", phe.joint().total());
    println!("h_max={} o_max={}", phe.h_max(), phe.o_max());
    Ok(0)
}

fn load_models(dir: &Path) -> Result<(PheModel, TransitionMatrix)> {
    let phe = PheModel::load(dir.join(PHE_FILE))
        .with_context(|| format!("reading {}", dir.join(PHE_FILE).display()))?;
    let trans = TransitionMatrix::load(dir.join(TRANSITION_FILE))
        .with_context(|| format!("reading {}", dir.join(TRANSITION_FILE).display()))?;
    Ok((phe, trans))
}

fn run(args: RunArgs) -> Result<u8> {
    let mut cfg = ExperimentConfig::new(Policy::Random);
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_config_text(&text)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    let flags: [(&str, Option<String>); 9] = [
        ("policy", args.policy),
        ("variant", args.variant),
        ("phe", args.phe),
        ("horizons", args.horizons),
        ("seed", args.seed.map(|v| v.to_string())),
        ("workers", args.workers.map(|v| v.to_string())),
        ("prior", args.prior),
        ("tie_break", args.tie_break),
        ("out", args.out.map(|p| p.display().to_string())),
    ];
    for (key, value) in flags {
        if let Some(value) = value {
            cfg.set(key, &value).map_err(|e| usage(e.to_string()))?;
        }
    }
    if args.paper {
        cfg.apply_paper_profile();
    }
    if let Some(n) = args.instances {
        cfg.instances = n;
    }
    if args.no_prune {
        cfg.prune_reversal = false;
    }
    if args.long_run {
        cfg.allow_long_run = true;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let table = match &args.oracle {
        Some(path) => load_table(path)?,
        None => DistanceTable::build(GoalSpec::default()),
    };
    let models = match (&args.models, cfg.policy) {
        (Some(dir), Policy::Bps) => {
            let (phe, trans) = load_models(dir)?;
            Models {
                table: &table,
                heuristic: heuristic_variant(&table, cfg.variant),
                phe: Some(phe),
                transition: Some(trans),
            }
        }
        _ => Models::calibrate(&table, &cfg)?,
    };

    let outcome = harness::run_experiment(&cfg, &models)?;
    match &cfg.output {
        Some(path) => harness::emit_csv(&outcome.records, path)
            .with_context(|| format!("writing {}", path.display()))?,
        None => harness::write_csv(&outcome.records, io::stdout().lock())?,
    }
    for e in &outcome.errors {
        eprintln!(
            "instance error: horizon={} index={} state=\"{}\": {}",
            e.horizon, e.index, e.state, e.message
        );
    }
    if outcome.errors.is_empty() {
        Ok(0)
    } else {
        eprintln!("{} instances failed", outcome.errors.len());
        Ok(EXIT_RUNTIME)
    }
}

fn report(checks: &[CheckResult]) -> bool {
    let mut all = true;
    for c in checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        all &= c.passed;
    }
    all
}

fn verify_artifacts(oracle: &Path, models: Option<&Path>, trials: usize) -> Result<u8> {
    let mut checks = Vec::new();
    let table = match DistanceTable::load(oracle) {
        Ok(t) => {
            checks.push(CheckResult {
                name: "oracle-format",
                passed: true,
                detail: format!("{}", oracle.display()),
            });
            t
        }
        Err(e) => {
            report(&[CheckResult {
                name: "oracle-format",
                passed: false,
                detail: e.to_string(),
            }]);
            return Ok(EXIT_VERIFY);
        }
    };
    checks.push(verify::check_census(&table));
    checks.push(verify::check_neighbor_distances(&table));
    checks.push(verify::check_beacons(&table));

    let (phe, trans) = match models {
        Some(dir) => match load_models(dir) {
            Ok(m) => m,
            Err(e) => {
                checks.push(CheckResult {
                    name: "model-format",
                    passed: false,
                    detail: format!("{e:#}"),
                });
                report(&checks);
                return Ok(EXIT_VERIFY);
            }
        },
        None => {
            let h = heuristic_variant(&table, HeuristicVariant::Plain);
            (
                PheModel::from_joint(calibrate_full(&table, &h)),
                calibrate_transition(&table),
            )
        }
    };
    checks.extend(verify::check_phe(&phe));
    checks.push(verify::check_transition(&trans));
    checks.push(CheckResult {
        name: "model-dimensions",
        passed: phe.outcomes() == trans.outcomes() && phe.o_max() == table.max_distance(),
        detail: format!(
            "phe_outcomes={} transition_outcomes={} table_max={}",
            phe.outcomes(),
            trans.outcomes(),
            table.max_distance()
        ),
    });
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    checks.push(verify::check_inference_against_enumeration(&mut rng, trials));
    checks.push(verify::check_constraint_composition());

    Ok(if report(&checks) { 0 } else { EXIT_VERIFY })
}

fn inspect(
    state: &str,
    oracle: Option<&Path>,
    horizon: usize,
    variant: &str,
    dump_beliefs: bool,
) -> Result<u8> {
    let state = parse_state(state)?;
    let variant = parse_variant(variant)?;
    if horizon == 0 {
        return Err(usage("--horizon must be at least 1"));
    }
    let table = match oracle {
        Some(path) => load_table(path)?,
        None => DistanceTable::build(GoalSpec::default()),
    };
    let goal = *table.goal();
    if !goal.solvable(&state) {
        bail!("state \"{state}\" is not reachable from the goal");
    }
    let h = heuristic_variant(&table, variant);
    let distance = table.exact_distance(&state)?;
    let mut out = io::stdout().lock();
    writeln!(out, "state={state}")?;
    writeln!(out, "manhattan={}", goal.manhattan_distance(&state))?;
    writeln!(out, "heuristic={} ({variant})", h.evaluate(&state))?;
    writeln!(out, "distance={distance}")?;
    for (mv, next) in state.neighbors() {
        writeln!(
            out,
            "move {mv}: heuristic={} distance={} toward={}",
            h.evaluate(&next),
            table.exact_distance(&next)?,
            table.is_toward_goal(&state, mv)?
        )?;
    }
    if distance == 0 {
        return Ok(0);
    }

    let domain = EightPuzzle::new(goal);
    let opts = TreeOptions::new(horizon);
    let phe = PheModel::from_joint(calibrate_full(&table, &h)).with_variant(variant);
    let trans = calibrate_transition(&table);
    let prior = Models {
        table: &table,
        heuristic: h.clone(),
        phe: None,
        transition: None,
    }
    .prior(Default::default(), horizon)?;

    let mm = minimin_decide(&domain, &state, opts, &h, TieBreak::First)?;
    writeln!(out, "minimin chooses {} ({} nodes)", mm.chosen, mm.nodes)?;
    for (mv, score) in &mm.scores {
        writeln!(out, "  {mv}: best frontier h={score}")?;
    }
    let bps = bps_decide(&domain, &state, opts, &h, &phe, &trans, &prior, TieBreak::First)?;
    writeln!(out, "bps chooses {} ({} nodes)", bps.chosen, bps.nodes)?;
    for (mv, score) in &bps.scores {
        writeln!(out, "  {mv}: expected distance={score:.6}")?;
    }

    if dump_beliefs {
        let tree = build_tree(&domain, &state, opts, &h);
        let root = infer_root(&tree, &prior, &phe, &trans)?;
        writeln!(out, "peak_live_messages={}", root.stats.peak)?;
        let beliefs = node_beliefs(&tree, &prior, &phe, &trans)?;
        writeln!(
            out,
            "beliefs rows={} cols={} provenance=full variant={variant} seed=none",
            beliefs.len(),
            phe.outcomes()
        )?;
        for b in &beliefs {
            let row: Vec<String> = b.probs().iter().map(|p| p.to_string()).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
    }
    Ok(0)
}
