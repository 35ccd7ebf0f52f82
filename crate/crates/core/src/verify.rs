//! Named consistency checks over built artifacts, shared by the `verify`
//! command and the test suites.

use rand::Rng;

use crate::error::Result;
use crate::inference::{
    brute_force_beliefs, decision_beliefs, node_beliefs, root_belief, BeliefVector, SearchTree,
    BRUTE_FORCE_CAP,
};
use crate::oracle::{DistanceTable, REACHABLE};
use crate::phe::{
    find_beacons, HeuristicVariant, JointCountTable, PheModel, Provenance, TransitionKind,
    TransitionMatrix, BEACON_THRESHOLD,
};
use crate::puzzle::Manhattan;

pub const EXPECTED_BEACONS: usize = 17;
/// Manhattan values that always equal the true distance. Two states with
/// value 3 are 11 moves from the goal, so 3 is not among them.
pub const PERFECT_LOW_VALUES: usize = 2;
const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        CheckResult {
            name,
            passed,
            detail: detail.into(),
        }
    }
}

pub fn check_census(table: &DistanceTable) -> CheckResult {
    let n = table.reachable_count();
    CheckResult::new(
        "census",
        n == REACHABLE,
        format!("reachable={n} max_distance={}", table.max_distance()),
    )
}

/// Neighbouring reachable states differ in distance by exactly one, and every
/// non-goal state has a move toward the goal.
pub fn check_neighbor_distances(table: &DistanceTable) -> CheckResult {
    let mut bad_pairs = 0usize;
    let mut stuck = 0usize;
    for (s, d) in table.reachable() {
        let mut toward = false;
        for (_, n) in s.neighbors() {
            match table.exact_distance(&n) {
                Ok(dn) if dn.abs_diff(d) == 1 => toward |= dn + 1 == d,
                _ => bad_pairs += 1,
            }
        }
        if d > 0 && !toward {
            stuck += 1;
        }
    }
    CheckResult::new(
        "neighbor-distances",
        bad_pairs == 0 && stuck == 0,
        format!("bad_pairs={bad_pairs} states_without_toward_move={stuck}"),
    )
}

pub fn check_beacons(table: &DistanceTable) -> CheckResult {
    let beacons = find_beacons(table, &Manhattan::new(*table.goal()), BEACON_THRESHOLD);
    let within = beacons
        .iter()
        .filter(|s| table.exact_distance(s).map(|d| d <= 3).unwrap_or(false))
        .count();
    CheckResult::new(
        "beacons",
        beacons.len() == EXPECTED_BEACONS,
        format!("beacons={} within_3_moves={within}", beacons.len()),
    )
}

pub fn check_phe_normalization(phe: &PheModel) -> CheckResult {
    let mut worst = 0.0f64;
    for o in 0..phe.outcomes() {
        let s: f64 = (0..=phe.h_max()).map(|h| phe.likelihood(h, o)).sum();
        if s > 0.0 {
            worst = worst.max((s - 1.0).abs());
        }
    }
    for h in 0..=phe.h_max() {
        let s: f64 = phe.posterior_column(h).unwrap().iter().sum();
        if s > 0.0 {
            worst = worst.max((s - 1.0).abs());
        }
    }
    CheckResult::new(
        "phe-normalization",
        worst <= NORMALIZATION_TOL,
        format!("max_deviation={worst:e}"),
    )
}

/// Cells of the joint table where an admissible heuristic can have no mass.
pub fn admissibility_violations(joint: &JointCountTable) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for h in 0..=joint.h_max() {
        for o in 0..h.min(joint.o_max() + 1) {
            if joint.get(h, o) > 0.0 {
                out.push((h, o));
            }
        }
    }
    out
}

pub fn check_phe_admissible(phe: &PheModel) -> CheckResult {
    let bad = admissibility_violations(phe.joint());
    CheckResult::new(
        "phe-admissibility",
        bad.is_empty(),
        match bad.first() {
            None => "no mass below the diagonal".to_string(),
            Some((h, o)) => format!("{} cells with o < h, first at h={h} o={o}", bad.len()),
        },
    )
}

/// Exact structure of the fully calibrated plain Manhattan table: parity
/// support and perfect low values.
pub fn check_phe_structure(phe: &PheModel) -> CheckResult {
    let joint = phe.joint();
    let mut parity = 0;
    for h in 0..=joint.h_max() {
        for o in 0..=joint.o_max() {
            if joint.get(h, o) > 0.0 && (h + o) % 2 == 1 {
                parity += 1;
            }
        }
    }
    let low_exact = (0..=PERFECT_LOW_VALUES.min(phe.h_max())).all(|h| phe.posterior(h, h) == 1.0);
    let total = joint.total();
    CheckResult::new(
        "phe-structure",
        parity == 0 && low_exact && total == REACHABLE as f64,
        format!(
            "parity_violations={parity} exact_for_h<={PERFECT_LOW_VALUES}={low_exact} \
             P(O=3|h=3)={} total={total}",
            phe.posterior(3, 3)
        ),
    )
}

pub fn check_transition(trans: &TransitionMatrix) -> CheckResult {
    let n = trans.outcomes();
    let mut worst = 0.0f64;
    let mut off_support = 0;
    for i in 0..n {
        let row = trans.row(i);
        let s: f64 = row.iter().sum();
        worst = worst.max((s - 1.0).abs());
        if trans.kind() != TransitionKind::Manual {
            off_support += row
                .iter()
                .enumerate()
                .filter(|(j, &p)| p > 0.0 && j.abs_diff(i) != 1)
                .count();
        }
    }
    CheckResult::new(
        "transition",
        worst <= NORMALIZATION_TOL && off_support == 0,
        format!("max_row_deviation={worst:e} off_support_entries={off_support}"),
    )
}

/// A random tree with random likelihood, transition and prior models.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub tree: SearchTree<u32, usize>,
    pub prior: BeliefVector,
    pub phe: PheModel,
    pub trans: TransitionMatrix,
}

/// Draws a tree of depth at most `max_depth` with an outcome domain of at
/// most `max_outcomes` values, small enough for joint enumeration within
/// `cap` assignments.
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    max_depth: usize,
    max_outcomes: usize,
    cap: u64,
) -> RandomInstance {
    let outcomes = rng.gen_range(2..=max_outcomes.max(2));
    let h_values = rng.gen_range(1..=outcomes + 1);
    let max_nodes = ((cap as f64).ln() / (outcomes as f64).ln()).floor() as usize;

    let mut tree = SearchTree::new(0u32, rng.gen_range(0..h_values));
    let mut frontier = vec![SearchTree::<u32, usize>::ROOT];
    while let Some(id) = frontier.pop() {
        if tree.node(id).depth >= max_depth {
            continue;
        }
        for mv in 0..rng.gen_range(0..=3usize) {
            if tree.len() >= max_nodes {
                break;
            }
            let label = tree.len() as u32;
            let child = tree.add_child(id, label, mv, rng.gen_range(0..h_values));
            frontier.push(child);
        }
    }

    // Sparse-ish positive models: zeros appear, but never a whole row.
    let mut sparse_row = |len: usize| -> Vec<f64> {
        let mut row: Vec<f64> = (0..len)
            .map(|_| {
                if rng.gen_bool(0.25) {
                    0.0
                } else {
                    rng.gen_range(0.01..1.0)
                }
            })
            .collect();
        if row.iter().all(|&v| v == 0.0) {
            let i = rng.gen_range(0..len);
            row[i] = 1.0;
        }
        row
    };
    // likelihood rows are indexed by outcome, so build [o][h] and transpose
    let lik_by_o: Vec<Vec<f64>> = (0..outcomes).map(|_| sparse_row(h_values)).collect();
    let counts: Vec<Vec<f64>> = (0..h_values)
        .map(|h| (0..outcomes).map(|o| lik_by_o[o][h]).collect())
        .collect();
    let trans_rows: Vec<Vec<f64>> = (0..outcomes).map(|_| sparse_row(outcomes)).collect();
    let prior = sparse_row(outcomes);

    RandomInstance {
        tree,
        prior: BeliefVector::new(prior).unwrap(),
        phe: PheModel::from_joint(JointCountTable::from_matrix(counts, Provenance::Manual).unwrap()),
        trans: TransitionMatrix::from_rows(trans_rows, TransitionKind::Manual).unwrap(),
    }
}

/// Largest absolute belief difference between message passing and joint
/// enumeration over the root, the root's children and (via the two-pass
/// schedule) every node. `Ok(None)` when both agree the evidence is
/// impossible.
pub fn compare_with_brute_force(inst: &RandomInstance) -> Result<Option<f64>> {
    let brute = brute_force_beliefs(&inst.tree, &inst.prior, &inst.phe, &inst.trans, BRUTE_FORCE_CAP);
    let root = root_belief(&inst.tree, &inst.prior, &inst.phe, &inst.trans);
    let children = decision_beliefs(&inst.tree, &inst.prior, &inst.phe, &inst.trans);
    let all = node_beliefs(&inst.tree, &inst.prior, &inst.phe, &inst.trans);
    match (brute, root, children, all) {
        (Ok(brute), Ok(root), Ok(children), Ok(all)) => {
            let mut worst = root.max_abs_diff(&brute[0]);
            for ((_, belief), &id) in children.iter().zip(&inst.tree.root().children) {
                worst = worst.max(belief.max_abs_diff(&brute[id]));
            }
            for (a, b) in all.iter().zip(&brute) {
                worst = worst.max(a.max_abs_diff(b));
            }
            Ok(Some(worst))
        }
        (Err(_), Err(_), Err(_), Err(_)) => Ok(None),
        (b, r, c, a) => Err(crate::Error::Config(format!(
            "message passing and enumeration disagree on feasibility: brute={} root={} children={} all={}",
            b.is_ok(),
            r.is_ok(),
            c.is_ok(),
            a.is_ok()
        ))),
    }
}

pub fn check_inference_against_enumeration<R: Rng + ?Sized>(
    rng: &mut R,
    trials: usize,
) -> CheckResult {
    let mut worst = 0.0f64;
    let mut infeasible = 0;
    let mut failures = 0;
    for _ in 0..trials {
        let inst = random_instance(rng, 3, 8, 200_000);
        match compare_with_brute_force(&inst) {
            Ok(Some(d)) => worst = worst.max(d),
            Ok(None) => infeasible += 1,
            Err(_) => failures += 1,
        }
    }
    CheckResult::new(
        "inference-vs-enumeration",
        failures == 0 && worst <= 1e-9,
        format!("trials={trials} max_abs_diff={worst:e} infeasible={infeasible} disagreements={failures}"),
    )
}

/// Two chained constraints: A is 17 from the goal, C (B's child) is 19, so B
/// must be 18.
pub fn constraint_composition() -> Result<BeliefVector> {
    let o_max = 31;
    let flat = o_max + 1;
    // Heuristic values 0..=31 reveal the outcome; value 32 says nothing.
    let mut counts: Vec<Vec<f64>> = (0..=o_max)
        .map(|h| (0..=o_max).map(|o| if h == o { 1.0 } else { 0.0 }).collect())
        .collect();
    counts.push(vec![1.0; o_max + 1]);
    let phe = PheModel::from_joint(JointCountTable::from_matrix(counts, Provenance::Manual)?);
    let rows = (0..=o_max)
        .map(|i| {
            (0..=o_max)
                .map(|j| if i.abs_diff(j) <= 1 { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let trans = TransitionMatrix::from_rows(rows, TransitionKind::Manual)?;
    let mut tree: SearchTree<&str, ()> = SearchTree::new("A", 17);
    let b = tree.add_child(0, "B", (), flat);
    tree.add_child(b, "C", (), 19);
    let beliefs = decision_beliefs(&tree, &BeliefVector::uniform(o_max + 1), &phe, &trans)?;
    Ok(beliefs[0].1.clone())
}

pub fn check_constraint_composition() -> CheckResult {
    match constraint_composition() {
        Ok(b) => CheckResult::new(
            "constraint-composition",
            b.probs()[18] == 1.0,
            format!("P(O_B = 18) = {}", b.probs()[18]),
        ),
        Err(e) => CheckResult::new("constraint-composition", false, e.to_string()),
    }
}

/// Checks that apply to a PHE of the given variant.
pub fn check_phe(phe: &PheModel) -> Vec<CheckResult> {
    let mut out = vec![check_phe_normalization(phe)];
    if phe.variant() == HeuristicVariant::Plain {
        out.push(check_phe_admissible(phe));
        if phe.joint().provenance() == Provenance::Full {
            out.push(check_phe_structure(phe));
        }
    }
    out
}
