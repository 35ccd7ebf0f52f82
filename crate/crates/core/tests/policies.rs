use std::sync::OnceLock;

use bps_core::harness::sample_eligible;
use bps_core::inference::{BeliefVector, TreeOptions};
use bps_core::oracle::DistanceTable;
use bps_core::phe::{calibrate_full, calibrate_transition};
use bps_core::policies::{bps_decide, minimin_decide, random_decide, TieBreak};
use bps_core::{EightPuzzle, GoalSpec, Manhattan, Move, PheModel, PuzzleState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn table() -> &'static DistanceTable {
    static TABLE: OnceLock<DistanceTable> = OnceLock::new();
    TABLE.get_or_init(|| DistanceTable::build(GoalSpec::default()))
}

fn prior() -> BeliefVector {
    BeliefVector::new(
        table()
            .distance_histogram()
            .iter()
            .map(|&c| c as f64)
            .collect(),
    )
    .unwrap()
}

#[test]
fn minimin_with_the_perfect_heuristic_always_moves_toward_the_goal() {
    let domain = EightPuzzle::default();
    for horizon in 1..=4 {
        let roots = sample_eligible(table(), horizon, 300, 11 + horizon as u64).unwrap();
        for root in &roots {
            let d = minimin_decide(&domain, root, TreeOptions::new(horizon), table(), TieBreak::First)
                .unwrap();
            assert!(table().is_toward_goal(root, d.chosen).unwrap(), "{root}");
        }
    }
}

#[test]
fn bps_with_delta_likelihood_matches_minimin_at_horizon_one() {
    let domain = EightPuzzle::default();
    let md = Manhattan::default();
    let phe = PheModel::delta(table().max_distance());
    let trans = calibrate_transition(table());
    let prior = prior();
    let roots = sample_eligible(table(), 1, 2000, 5).unwrap();
    for root in &roots {
        let opts = TreeOptions::new(1);
        let a = minimin_decide(&domain, root, opts, &md, TieBreak::First).unwrap();
        let b = bps_decide(&domain, root, opts, &md, &phe, &trans, &prior, TieBreak::First).unwrap();
        assert_eq!(a.chosen, b.chosen, "{root}");
        assert_eq!(a.nodes, b.nodes);
        for ((ma, sa), (mb, sb)) in a.scores.iter().zip(&b.scores) {
            assert_eq!(ma, mb);
            assert!((sa - sb).abs() < 1e-9);
        }
    }
}

#[test]
fn decisions_are_legal_and_deterministic() {
    let domain = EightPuzzle::default();
    let md = Manhattan::default();
    let phe = PheModel::from_joint(calibrate_full(table(), &md));
    let trans = calibrate_transition(table());
    let prior = prior();
    let roots = sample_eligible(table(), 4, 100, 3).unwrap();
    for root in &roots {
        let legal: Vec<Move> = root.neighbors().iter().map(|(m, _)| *m).collect();
        let opts = TreeOptions::new(4);
        for tie in [TieBreak::First, TieBreak::Random(9)] {
            let a = bps_decide(&domain, root, opts, &md, &phe, &trans, &prior, tie).unwrap();
            let b = bps_decide(&domain, root, opts, &md, &phe, &trans, &prior, tie).unwrap();
            assert_eq!(a, b);
            assert!(legal.contains(&a.chosen));
            let m = minimin_decide(&domain, root, opts, &md, tie).unwrap();
            assert_eq!(m, minimin_decide(&domain, root, opts, &md, tie).unwrap());
            assert!(legal.contains(&m.chosen));
            assert_eq!(a.nodes, m.nodes);
        }
        let r1 = random_decide(&domain, root, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let r2 = random_decide(&domain, root, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(r1, r2);
        assert!(legal.contains(&r1.chosen));
    }
}

#[test]
fn random_ties_only_pick_among_minimal_scores() {
    let domain = EightPuzzle::default();
    let md = Manhattan::default();
    let root: PuzzleState = "4 1 2 3 0 5 6 7 8".parse().unwrap();
    for seed in 0..50 {
        let d = minimin_decide(&domain, &root, TreeOptions::new(1), &md, TieBreak::Random(seed)).unwrap();
        let best = d.scores.iter().map(|(_, s)| *s).fold(f64::INFINITY, f64::min);
        let chosen = d.scores.iter().find(|(m, _)| *m == d.chosen).unwrap().1;
        assert_eq!(chosen, best);
    }
}
