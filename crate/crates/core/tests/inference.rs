use std::sync::OnceLock;

use bps_core::inference::{
    build_tree, infer_root, lambda_message, node_beliefs, BeliefVector, SearchTree, TreeOptions,
};
use bps_core::oracle::{unrank, DistanceTable};
use bps_core::phe::{calibrate_full, calibrate_transition, JointCountTable, Provenance};
use bps_core::verify::{compare_with_brute_force, random_instance, RandomInstance};
use bps_core::{EightPuzzle, GoalSpec, Manhattan, PheModel, PuzzleState};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn table() -> &'static DistanceTable {
    static TABLE: OnceLock<DistanceTable> = OnceLock::new();
    TABLE.get_or_init(|| DistanceTable::build(GoalSpec::default()))
}

fn instance(seed: u64) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_instance(&mut rng, 3, 8, 200_000)
}

fn scaled(phe: &PheModel, factor: f64) -> PheModel {
    let j = phe.joint();
    let rows = (0..=j.h_max())
        .map(|h| j.column(h).iter().map(|v| v * factor).collect())
        .collect();
    PheModel::from_joint(JointCountTable::from_matrix(rows, Provenance::Manual).unwrap())
}

fn close(a: &BeliefVector, b: &BeliefVector) -> bool {
    a.max_abs_diff(b) <= 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn message_passing_matches_enumeration(seed in any::<u64>()) {
        let inst = instance(seed);
        match compare_with_brute_force(&inst) {
            Ok(Some(d)) => prop_assert!(d <= 1e-9, "max diff {d}"),
            Ok(None) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn beliefs_ignore_count_scale(seed in any::<u64>(), factor in 1e-3f64..1e3) {
        let inst = instance(seed);
        let a = infer_root(&inst.tree, &inst.prior, &inst.phe, &inst.trans);
        let b = infer_root(&inst.tree, &inst.prior, &scaled(&inst.phe, factor), &inst.trans);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert!(close(&a.root, &b.root));
                for ((ma, ba), (mb, bb)) in a.children.iter().zip(&b.children) {
                    prop_assert_eq!(ma, mb);
                    prop_assert!(close(ba, bb));
                }
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "feasibility changed under scaling"),
        }
    }

    #[test]
    fn beliefs_ignore_child_order(seed in any::<u64>()) {
        let inst = instance(seed);
        let mut flipped = inst.tree.clone();
        flipped.reverse_children();
        let a = node_beliefs(&inst.tree, &inst.prior, &inst.phe, &inst.trans);
        let b = node_beliefs(&flipped, &inst.prior, &inst.phe, &inst.trans);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!(close(x, y));
                }
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "feasibility changed under reordering"),
        }
        let ra = infer_root(&inst.tree, &inst.prior, &inst.phe, &inst.trans);
        let rb = infer_root(&flipped, &inst.prior, &inst.phe, &inst.trans);
        if let (Ok(ra), Ok(rb)) = (ra, rb) {
            for (mv, belief) in &ra.children {
                let other = &rb.children.iter().find(|(m, _)| m == mv).unwrap().1;
                prop_assert!(close(belief, other));
            }
        }
    }
}

#[test]
fn root_children_agree_with_two_pass_schedule_on_puzzle_trees() {
    let phe = PheModel::from_joint(calibrate_full(table(), &Manhattan::default()));
    let trans = calibrate_transition(table());
    let prior = BeliefVector::new(
        table()
            .distance_histogram()
            .iter()
            .map(|&c| c as f64)
            .collect(),
    )
    .unwrap();
    let domain = EightPuzzle::default();
    let md = Manhattan::default();
    let root: PuzzleState = "8 7 6 5 4 3 2 1 0".parse().unwrap();
    for horizon in 1..=5 {
        let tree = build_tree(&domain, &root, TreeOptions::new(horizon), &md);
        let fast = infer_root(&tree, &prior, &phe, &trans).unwrap();
        let all = node_beliefs(&tree, &prior, &phe, &trans).unwrap();
        assert!(close(&fast.root, &all[0]));
        for ((_, b), &id) in fast.children.iter().zip(&tree.root().children) {
            assert!(close(b, &all[id]));
        }
    }
}

#[test]
fn live_messages_grow_with_depth_not_width() {
    let phe = PheModel::from_joint(calibrate_full(table(), &Manhattan::default()));
    let trans = calibrate_transition(table());
    let prior = BeliefVector::uniform(phe.outcomes());
    let domain = EightPuzzle::default();
    let md = Manhattan::default();
    let roots = [1000usize, 77_777, 200_000, 345_678];
    for r in roots {
        let root = unrank(r).unwrap();
        if table().exact_distance(&root).is_err() {
            continue;
        }
        for horizon in [4, 8, 10] {
            let tree = build_tree(&domain, &root, TreeOptions::new(horizon), &md);
            let stats = infer_root(&tree, &prior, &phe, &trans).unwrap().stats;
            assert!(
                stats.peak <= 2 * (tree.depth() + 1),
                "peak {} for depth {} ({} nodes)",
                stats.peak,
                tree.depth(),
                tree.len()
            );
            // the root keeps one message per child for the downward pass
            assert_eq!(stats.live, tree.root().children.len());
            assert!(stats.allocated >= tree.len() - 1);
        }
    }
}

#[test]
fn leaf_lambda_is_the_likelihood_column() {
    let phe = PheModel::from_joint(calibrate_full(table(), &Manhattan::default()));
    let trans = calibrate_transition(table());
    let tree: SearchTree<u8, u8> = SearchTree::new(0, 5);
    let msg = lambda_message(&tree, 0, &phe, &trans).unwrap();
    let column: Vec<f64> = (0..phe.outcomes()).map(|o| phe.likelihood(5, o)).collect();
    let total: f64 = column.iter().sum();
    for (a, b) in msg.values().iter().zip(&column) {
        assert!((a - b / total).abs() < 1e-12);
    }
}
