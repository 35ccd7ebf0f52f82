//! Single-move decision policies: BPS, Minimin and a random baseline.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::inference::{build_tree, infer_root, BeliefVector, TreeOptions};
use crate::phe::{PheModel, TransitionMatrix};
use crate::puzzle::{Domain, Heuristic};

/// Relative tolerance under which two scores count as tied.
const TIE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    Bps,
    Minimin,
    Random,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Bps => "bps",
            Policy::Minimin => "minimin",
            Policy::Random => "random",
        })
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bps" => Ok(Policy::Bps),
            "minimin" => Ok(Policy::Minimin),
            "random" => Ok(Policy::Random),
            other => Err(Error::Config(format!(
                "unknown policy {other:?} (expected bps, minimin or random)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// First child in the domain's successor order.
    #[default]
    First,
    /// Uniform among the tied children, seeded.
    Random(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision<M> {
    pub chosen: M,
    /// Per-child score; empty for the random policy.
    pub scores: Vec<(M, f64)>,
    /// Nodes in the lookahead tree, root included.
    pub nodes: usize,
}

fn pick<M: Copy>(scores: &[(M, f64)], tie: TieBreak) -> M {
    let best = scores
        .iter()
        .map(|(_, s)| *s)
        .fold(f64::INFINITY, f64::min);
    let tol = TIE_EPSILON * best.abs().max(1.0);
    let tied: Vec<M> = scores
        .iter()
        .filter(|(_, s)| *s <= best + tol)
        .map(|(m, _)| *m)
        .collect();
    match tie {
        TieBreak::First => tied[0],
        TieBreak::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            tied[rng.gen_range(0..tied.len())]
        }
    }
}

fn root_must_not_be_goal<D: Domain>(domain: &D, root: &D::State) -> Result<()> {
    if domain.is_goal(root) {
        return Err(Error::Config("the root is already the goal".into()));
    }
    Ok(())
}

/// Minimum heuristic value over the frontier below `state`, counting every
/// node visited. Internal nodes are evaluated but their values are ignored.
fn frontier_min<D, H>(
    domain: &D,
    state: &D::State,
    parent: Option<&D::State>,
    remaining: usize,
    opts: TreeOptions,
    h: &H,
    visited: &mut usize,
) -> usize
where
    D: Domain,
    H: Heuristic<D::State>,
{
    *visited += 1;
    let value = h.evaluate(state);
    if remaining == 0 || domain.is_goal(state) {
        return value;
    }
    let mut best = usize::MAX;
    for (_, next) in domain.successors(state) {
        if opts.prune_reversal && parent == Some(&next) {
            continue;
        }
        best = best.min(frontier_min(
            domain,
            &next,
            Some(state),
            remaining - 1,
            opts,
            h,
            visited,
        ));
    }
    if best == usize::MAX {
        // no successors: the node is its own frontier
        value
    } else {
        best
    }
}

/// Full-width search to the horizon, then one move toward the child whose
/// subtree holds the frontier leaf with the smallest heuristic value.
pub fn minimin_decide<D, H>(
    domain: &D,
    root: &D::State,
    opts: TreeOptions,
    h: &H,
    tie: TieBreak,
) -> Result<Decision<D::Move>>
where
    D: Domain,
    H: Heuristic<D::State>,
{
    if opts.horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    root_must_not_be_goal(domain, root)?;
    let mut visited = 1;
    h.evaluate(root);
    let scores: Vec<(D::Move, f64)> = domain
        .successors(root)
        .into_iter()
        .map(|(mv, next)| {
            let best = frontier_min(
                domain,
                &next,
                Some(root),
                opts.horizon - 1,
                opts,
                h,
                &mut visited,
            );
            (mv, best as f64)
        })
        .collect();
    Ok(Decision {
        chosen: pick(&scores, tie),
        scores,
        nodes: visited,
    })
}

/// Belief propagation over the full-width tree, then one move to the child
/// with the smallest expected distance to the goal.
#[allow(clippy::too_many_arguments)]
pub fn bps_decide<D, H>(
    domain: &D,
    root: &D::State,
    opts: TreeOptions,
    h: &H,
    phe: &PheModel,
    trans: &TransitionMatrix,
    prior: &BeliefVector,
    tie: TieBreak,
) -> Result<Decision<D::Move>>
where
    D: Domain,
    H: Heuristic<D::State>,
{
    if opts.horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    root_must_not_be_goal(domain, root)?;
    let tree = build_tree(domain, root, opts, h);
    let inference = infer_root(&tree, prior, phe, trans)?;
    let scores: Vec<(D::Move, f64)> = inference
        .children
        .iter()
        .map(|(mv, belief)| (*mv, belief.expected_outcome()))
        .collect();
    Ok(Decision {
        chosen: pick(&scores, tie),
        scores,
        nodes: tree.len(),
    })
}

/// A uniformly random legal move.
pub fn random_decide<D, R>(domain: &D, root: &D::State, rng: &mut R) -> Result<Decision<D::Move>>
where
    D: Domain,
    R: Rng + ?Sized,
{
    root_must_not_be_goal(domain, root)?;
    let moves = domain.successors(root);
    if moves.is_empty() {
        return Err(Error::Config("the root has no legal moves".into()));
    }
    let (chosen, _) = moves[rng.gen_range(0..moves.len())];
    Ok(Decision {
        chosen,
        scores: Vec::new(),
        nodes: 1,
    })
}
