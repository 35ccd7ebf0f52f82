//! Belief propagation over a fixed-depth search tree.
//!
//! Every tree node `i` carries an unknown outcome `O_i` (its true distance to
//! the goal) and an observed heuristic value `h_i`. The heuristic node sends
//! `P(h_i | O_i)` to its search node; each child `k` sends the likelihood of
//! the evidence in its subtree, `λ_k`, pushed through the transition matrix
//! `P(O_k | O_i)`. The root combines these with the prior `P(O_0)`, and a
//! leafward message `π_i` carries the evidence outside a subtree down to it.
//!
//! ```text
//! λ_i(o)   = P(h_i | o) · Π_k Σ_{o'} λ_k(o') P(o' | o)
//! π_i(o)   = Σ_{o_p} P(o | o_p) · π_p(o_p) P(h_p | o_p) Π_{j ≠ i} m_j(o_p)
//! bel_i(o) = α · π_i(o) · λ_i(o)
//! ```
//!
//! The rootward pass is depth-first; only one message per level of the tree
//! is alive at a time, which [`MessageStats`] records.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::phe::{PheModel, TransitionMatrix};
use crate::puzzle::{Domain, Heuristic};

pub type NodeId = usize;

/// Default cap on the number of joint assignments brute force may enumerate.
pub const BRUTE_FORCE_CAP: u64 = 5_000_000;

/// A normalized distribution over outcomes `0..=o_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefVector {
    probs: Vec<f64>,
}

impl BeliefVector {
    /// Normalizes `values`; fails if they are not a valid non-zero measure.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::Config(
                "belief entries must be finite and non-negative".into(),
            ));
        }
        let total: f64 = values.iter().sum();
        if total <= 0.0 {
            return Err(Error::Config("belief vector has no mass".into()));
        }
        Ok(BeliefVector {
            probs: values.into_iter().map(|v| v / total).collect(),
        })
    }

    pub fn uniform(outcomes: usize) -> Self {
        BeliefVector {
            probs: vec![1.0 / outcomes as f64; outcomes],
        }
    }

    pub fn point_mass(outcomes: usize, at: usize) -> Self {
        let mut probs = vec![0.0; outcomes];
        probs[at] = 1.0;
        BeliefVector { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `Σ_o o · b(o)`.
    pub fn expected_outcome(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(o, p)| o as f64 * p)
            .sum()
    }

    /// The most probable outcome, lowest value on ties.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (o, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = o;
            }
        }
        best
    }

    pub fn max_abs_diff(&self, other: &BeliefVector) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// An unnormalized likelihood vector `P(evidence | O)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceMessage {
    values: Vec<f64>,
}

impl EvidenceMessage {
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode<S, M> {
    pub state: S,
    /// The move that generated this node; `None` at the root.
    pub mv: Option<M>,
    pub h: usize,
    pub depth: usize,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

/// An explicit search tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchTree<S, M> {
    nodes: Vec<TreeNode<S, M>>,
}

impl<S, M> SearchTree<S, M> {
    pub fn new(root: S, h: usize) -> Self {
        SearchTree {
            nodes: vec![TreeNode {
                state: root,
                mv: None,
                h,
                depth: 0,
                parent: None,
                children: Vec::new(),
            }],
        }
    }

    pub fn add_child(&mut self, parent: NodeId, state: S, mv: M, h: usize) -> NodeId {
        let id = self.nodes.len();
        let depth = self.nodes[parent].depth + 1;
        self.nodes.push(TreeNode {
            state,
            mv: Some(mv),
            h,
            depth,
            parent: Some(parent),
            children: Vec::new(),
        });
        self.nodes[parent].children.push(id);
        id
    }

    pub const ROOT: NodeId = 0;

    pub fn root(&self) -> &TreeNode<S, M> {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &TreeNode<S, M> {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode<S, M>] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Depth of the deepest node.
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Frontier leaves: nodes without children.
    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].children.is_empty())
    }

    /// Reverses the child order of every node. Beliefs must not change.
    pub fn reverse_children(&mut self) {
        for node in &mut self.nodes {
            node.children.reverse();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeOptions {
    pub horizon: usize,
    /// Skip any successor equal to the parent's state.
    pub prune_reversal: bool,
}

impl TreeOptions {
    pub fn new(horizon: usize) -> Self {
        TreeOptions {
            horizon,
            prune_reversal: true,
        }
    }
}

/// Full-width expansion to `opts.horizon`. Goal states are never expanded, so
/// a goal becomes a leaf wherever it appears.
pub fn build_tree<D, H>(
    domain: &D,
    root: &D::State,
    opts: TreeOptions,
    h: &H,
) -> SearchTree<D::State, D::Move>
where
    D: Domain,
    H: Heuristic<D::State>,
{
    let mut tree = SearchTree::new(root.clone(), h.evaluate(root));
    expand(domain, &mut tree, SearchTree::<D::State, D::Move>::ROOT, opts, h);
    tree
}

fn expand<D, H>(
    domain: &D,
    tree: &mut SearchTree<D::State, D::Move>,
    id: NodeId,
    opts: TreeOptions,
    h: &H,
) where
    D: Domain,
    H: Heuristic<D::State>,
{
    let node = &tree.nodes[id];
    if node.depth >= opts.horizon || domain.is_goal(&node.state) {
        return;
    }
    let parent_state = match (opts.prune_reversal, node.parent) {
        (true, Some(p)) => Some(tree.nodes[p].state.clone()),
        _ => None,
    };
    for (mv, next) in domain.successors(&node.state) {
        if parent_state.as_ref() == Some(&next) {
            continue;
        }
        let value = h.evaluate(&next);
        let child = tree.add_child(id, next, mv, value);
        expand(domain, tree, child, opts, h);
    }
}

/// Live-vector accounting for the rootward pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MessageStats {
    pub live: usize,
    pub peak: usize,
    pub allocated: usize,
}

impl MessageStats {
    fn alloc(&mut self, len: usize) -> Vec<f64> {
        self.live += 1;
        self.allocated += 1;
        self.peak = self.peak.max(self.live);
        vec![0.0; len]
    }

    fn free(&mut self, v: Vec<f64>) {
        drop(v);
        self.live -= 1;
    }
}

/// Beliefs at the root and at each of its children.
#[derive(Debug, Clone, PartialEq)]
pub struct RootInference<M> {
    pub root: BeliefVector,
    pub children: Vec<(M, BeliefVector)>,
    pub stats: MessageStats,
}

fn check_dimensions(prior: Option<&BeliefVector>, phe: &PheModel, trans: &TransitionMatrix) -> Result<usize> {
    let n = phe.outcomes();
    if trans.outcomes() != n {
        return Err(Error::Config(format!(
            "transition matrix covers {} outcomes, heuristic model covers {n}",
            trans.outcomes()
        )));
    }
    if let Some(prior) = prior {
        if prior.len() != n {
            return Err(Error::Config(format!(
                "prior covers {} outcomes, heuristic model covers {n}",
                prior.len()
            )));
        }
    }
    Ok(n)
}

/// Copies `P(h | ·)` into `out`, zero for heuristic values the model never saw.
fn load_likelihood(phe: &PheModel, h: usize, out: &mut [f64]) {
    match phe.likelihood_column(h) {
        Some(col) => out.copy_from_slice(col),
        None => out.iter_mut().for_each(|v| *v = 0.0),
    }
}

fn normalize(v: &mut [f64], node: NodeId) -> Result<()> {
    let total: f64 = v.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::AllZeroMessage { node });
    }
    v.iter_mut().for_each(|x| *x /= total);
    Ok(())
}

fn multiply(acc: &mut [f64], by: &[f64]) {
    acc.iter_mut().zip(by).for_each(|(a, b)| *a *= b);
}

fn lambda_rec<S, M>(
    tree: &SearchTree<S, M>,
    id: NodeId,
    phe: &PheModel,
    trans: &TransitionMatrix,
    stats: &mut MessageStats,
) -> Result<Vec<f64>> {
    let n = phe.outcomes();
    let mut acc = stats.alloc(n);
    load_likelihood(phe, tree.nodes[id].h, &mut acc);
    for &child in &tree.nodes[id].children {
        let child_lambda = lambda_rec(tree, child, phe, trans, stats)?;
        let mut up = stats.alloc(n);
        trans.to_parent(&child_lambda, &mut up);
        stats.free(child_lambda);
        multiply(&mut acc, &up);
        stats.free(up);
    }
    normalize(&mut acc, id)?;
    Ok(acc)
}

/// The rootward message `λ` of `node`: its own heuristic likelihood times the
/// transition-propagated messages of its children, normalized.
pub fn lambda_message<S, M>(
    tree: &SearchTree<S, M>,
    node: NodeId,
    phe: &PheModel,
    trans: &TransitionMatrix,
) -> Result<EvidenceMessage> {
    check_dimensions(None, phe, trans)?;
    let mut stats = MessageStats::default();
    let values = lambda_rec(tree, node, phe, trans, &mut stats)?;
    Ok(EvidenceMessage { values })
}

/// Posterior beliefs of the root and its children given every heuristic
/// evaluation in the tree.
pub fn infer_root<S, M: Copy>(
    tree: &SearchTree<S, M>,
    prior: &BeliefVector,
    phe: &PheModel,
    trans: &TransitionMatrix,
) -> Result<RootInference<M>> {
    let n = check_dimensions(Some(prior), phe, trans)?;
    let mut stats = MessageStats::default();
    let root = tree.root();

    // prior ⊙ P(h_root | ·)
    let mut own = vec![0.0; n];
    load_likelihood(phe, root.h, &mut own);
    multiply(&mut own, prior.probs());

    let mut lambdas = Vec::with_capacity(root.children.len());
    let mut ups = Vec::with_capacity(root.children.len());
    for &child in &root.children {
        let lambda = lambda_rec(tree, child, phe, trans, &mut stats)?;
        let mut up = vec![0.0; n];
        trans.to_parent(&lambda, &mut up);
        lambdas.push(lambda);
        ups.push(up);
    }

    let mut root_belief = own.clone();
    for up in &ups {
        multiply(&mut root_belief, up);
    }
    normalize(&mut root_belief, SearchTree::<S, M>::ROOT)?;

    let mut children = Vec::with_capacity(root.children.len());
    let mut excl = vec![0.0; n];
    let mut pi = vec![0.0; n];
    for (i, &child) in root.children.iter().enumerate() {
        excl.copy_from_slice(&own);
        for (j, up) in ups.iter().enumerate() {
            if j != i {
                multiply(&mut excl, up);
            }
        }
        normalize(&mut excl, SearchTree::<S, M>::ROOT)?;
        trans.to_child(&excl, &mut pi);
        let mut belief = pi.clone();
        multiply(&mut belief, &lambdas[i]);
        normalize(&mut belief, child)?;
        let mv = tree.nodes[child].mv.expect("non-root nodes carry their move");
        children.push((mv, BeliefVector { probs: belief }));
    }

    Ok(RootInference {
        root: BeliefVector { probs: root_belief },
        children,
        stats,
    })
}

/// Beliefs of the root's children, which are what a move decision needs.
pub fn decision_beliefs<S, M: Copy>(
    tree: &SearchTree<S, M>,
    prior: &BeliefVector,
    phe: &PheModel,
    trans: &TransitionMatrix,
) -> Result<Vec<(M, BeliefVector)>> {
    infer_root(tree, prior, phe, trans).map(|r| r.children)
}

pub fn root_belief<S, M: Copy>(
    tree: &SearchTree<S, M>,
    prior: &BeliefVector,
    phe: &PheModel,
    trans: &TransitionMatrix,
) -> Result<BeliefVector> {
    infer_root(tree, prior, phe, trans).map(|r| r.root)
}

/// Beliefs at every node by a full two-pass schedule. Keeps every message in
/// memory, so it is meant for inspection rather than for move decisions.
pub fn node_beliefs<S, M>(
    tree: &SearchTree<S, M>,
    prior: &BeliefVector,
    phe: &PheModel,
    trans: &TransitionMatrix,
) -> Result<Vec<BeliefVector>> {
    let n = check_dimensions(Some(prior), phe, trans)?;
    let count = tree.len();

    // Children always have larger ids than their parents, so a reverse sweep
    // is a valid rootward schedule.
    let mut lambda = vec![vec![0.0; n]; count];
    let mut up = vec![vec![0.0; n]; count];
    for id in (0..count).rev() {
        let mut acc = vec![0.0; n];
        load_likelihood(phe, tree.nodes[id].h, &mut acc);
        for &c in &tree.nodes[id].children {
            multiply(&mut acc, &up[c]);
        }
        normalize(&mut acc, id)?;
        let mut msg = vec![0.0; n];
        trans.to_parent(&acc, &mut msg);
        lambda[id] = acc;
        up[id] = msg;
    }

    // pi[i] is P(O_i | evidence outside the subtree of i), unnormalized.
    let mut pi = vec![vec![0.0; n]; count];
    pi[0] = prior.probs().to_vec();
    let mut beliefs = Vec::with_capacity(count);
    for id in 0..count {
        let node = &tree.nodes[id];
        let mut own = pi[id].clone();
        let mut lik = vec![0.0; n];
        load_likelihood(phe, node.h, &mut lik);
        multiply(&mut own, &lik);
        for (i, &c) in node.children.iter().enumerate() {
            let mut excl = own.clone();
            for (j, &other) in node.children.iter().enumerate() {
                if j != i {
                    multiply(&mut excl, &up[other]);
                }
            }
            normalize(&mut excl, id)?;
            let mut down = vec![0.0; n];
            trans.to_child(&excl, &mut down);
            pi[c] = down;
        }
        let mut belief = pi[id].clone();
        multiply(&mut belief, &lambda[id]);
        normalize(&mut belief, id)?;
        beliefs.push(BeliefVector { probs: belief });
    }
    Ok(beliefs)
}

/// Beliefs at every node by enumerating the full joint distribution of all
/// outcomes. Exponential in the node count; a test oracle only.
pub fn brute_force_beliefs<S, M>(
    tree: &SearchTree<S, M>,
    prior: &BeliefVector,
    phe: &PheModel,
    trans: &TransitionMatrix,
    cap: u64,
) -> Result<Vec<BeliefVector>> {
    let n = check_dimensions(Some(prior), phe, trans)?;
    let count = tree.len();
    let needed = (n as f64).powi(count as i32);
    if needed > cap as f64 {
        return Err(Error::CapExceeded { needed, cap });
    }

    let parents: Vec<Option<NodeId>> = tree.nodes.iter().map(|node| node.parent).collect();
    let hs: Vec<usize> = tree.nodes.iter().map(|node| node.h).collect();
    let mut marginals = vec![vec![0.0; n]; count];
    let mut assignment = vec![0usize; count];
    loop {
        let mut w = prior.probs()[assignment[0]];
        for i in 0..count {
            if w == 0.0 {
                break;
            }
            w *= phe.likelihood(hs[i], assignment[i]);
            if let Some(p) = parents[i] {
                w *= trans.p(assignment[p], assignment[i]);
            }
        }
        if w != 0.0 {
            for (marginal, &o) in marginals.iter_mut().zip(&assignment) {
                marginal[o] += w;
            }
        }

        // odometer increment
        let mut pos = 0;
        loop {
            if pos == count {
                return marginals
                    .into_iter()
                    .enumerate()
                    .map(|(id, mut m)| {
                        normalize(&mut m, id)?;
                        Ok(BeliefVector { probs: m })
                    })
                    .collect();
            }
            assignment[pos] += 1;
            if assignment[pos] < n {
                break;
            }
            assignment[pos] = 0;
            pos += 1;
        }
    }
}

/// Number of tree nodes per depth.
pub fn level_sizes<S, M>(tree: &SearchTree<S, M>) -> Vec<usize> {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for node in tree.nodes() {
        *counts.entry(node.depth).or_default() += 1;
    }
    (0..=tree.depth())
        .map(|d| counts.get(&d).copied().unwrap_or(0))
        .collect()
}
