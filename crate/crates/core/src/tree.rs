//! Binary regression trees over a numeric covariate matrix.
//!
//! Internal nodes hold a rule `x[j] <= cut` (true goes left); terminal nodes hold
//! a value μ. Nodes live in an arena addressed by [`NodeId`]; the root is always
//! id 0. Every ordered listing (leaves, internal nodes, text form) follows a
//! pre-order depth-first walk, so outputs are deterministic.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

pub const ROOT: NodeId = 0;

/// Row-major n × p covariate matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    n: usize,
    p: usize,
    values: Vec<f64>,
}

impl Covariates {
    pub fn new(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::input("covariate matrix needs at least one column"));
        }
        if values.len() != n * p {
            return Err(Error::input(format!(
                "covariate matrix has {} values, expected {n}×{p}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite covariate value"));
        }
        Ok(Self { n, p, values })
    }

    /// Single-column matrix.
    pub fn from_column(x: Vec<f64>) -> Result<Self> {
        let n = x.len();
        Self::new(n, 1, x)
    }

    /// Matrix from rows of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::input("covariate rows differ in length"));
        }
        Self::new(rows.len(), p, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    /// Zero-based feature index.
    pub feature: usize,
    pub cut: f64,
}

impl SplitRule {
    #[inline]
    pub fn goes_left(&self, x: &[f64]) -> bool {
        x[self.feature] <= self.cut
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        mu: f64,
    },
    Split {
        rule: SplitRule,
        left: NodeId,
        right: NodeId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Slot {
    parent: Option<NodeId>,
    node: Node,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    dim: usize,
    slots: Vec<Option<Slot>>,
    free: Vec<NodeId>,
}

/// Node sets used by the structural moves.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeSets {
    /// Terminal nodes.
    pub terminal: Vec<NodeId>,
    /// Internal nodes.
    pub internal: Vec<NodeId>,
    /// Internal nodes whose two children are both terminal.
    pub prunable: Vec<NodeId>,
    /// (parent, child) pairs where both are internal.
    pub parent_child: Vec<(NodeId, NodeId)>,
}

/// Sign applied to ω·n_L in the log prior. `AsPrinted` rewards extra leaves
/// and the chain drifts to very large trees, so `Penalizing` is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorSign {
    /// log π = ω·n_L − ζ·Δ
    AsPrinted,
    /// log π = −ω·n_L − ζ·Δ
    Penalizing,
}

impl FromStr for PriorSign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "as-printed" => Ok(PriorSign::AsPrinted),
            "penalizing" => Ok(PriorSign::Penalizing),
            other => Err(Error::config(format!(
                "prior sign must be 'as-printed' or 'penalizing', got '{other}'"
            ))),
        }
    }
}

impl fmt::Display for PriorSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriorSign::AsPrinted => "as-printed",
            PriorSign::Penalizing => "penalizing",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPrior {
    pub omega: f64,
    pub zeta: f64,
    pub sign: PriorSign,
}

impl Default for LossPrior {
    fn default() -> Self {
        Self {
            omega: 1.62,
            zeta: 0.62,
            sign: PriorSign::Penalizing,
        }
    }
}

impl LossPrior {
    pub fn new(omega: f64, zeta: f64, sign: PriorSign) -> Result<Self> {
        if !(omega.is_finite() && omega >= 0.0) || !zeta.is_finite() {
            return Err(Error::config(format!(
                "loss prior needs finite omega >= 0 and finite zeta, got ({omega}, {zeta})"
            )));
        }
        Ok(Self { omega, zeta, sign })
    }

    /// Unnormalised log prior from leaf count and imbalance.
    pub fn log_prior_parts(&self, n_leaves: usize, delta: i64) -> f64 {
        let s = match self.sign {
            PriorSign::AsPrinted => 1.0,
            PriorSign::Penalizing => -1.0,
        };
        s * self.omega * n_leaves as f64 - self.zeta * delta as f64
    }

    pub fn log_prior(&self, tree: &DecisionTree) -> f64 {
        self.log_prior_parts(tree.n_leaves(), tree.delta())
    }
}

/// Split rules available in a cell, with their prior mass.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSpace {
    /// (feature, valid cutpoints sorted ascending) for features with at least one cut.
    pub features: Vec<(usize, Vec<f64>)>,
}

impl RuleSpace {
    /// Valid cutpoints are the distinct observed values in the cell except the
    /// largest, so both children of `x[j] <= cut` are nonempty.
    pub fn for_cell(x: &Covariates, members: &[usize]) -> Self {
        let mut features = Vec::new();
        let mut buf = Vec::with_capacity(members.len());
        for j in 0..x.p() {
            buf.clear();
            buf.extend(members.iter().map(|&i| x.get(i, j)));
            buf.sort_by(f64::total_cmp);
            buf.dedup();
            if buf.len() >= 2 {
                buf.pop();
                features.push((j, buf.clone()));
            }
        }
        Self { features }
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<SplitRule> {
        if self.features.is_empty() {
            return None;
        }
        let (feature, cuts) = &self.features[rng.random_range(0..self.features.len())];
        let cut = cuts[rng.random_range(0..cuts.len())];
        Some(SplitRule {
            feature: *feature,
            cut,
        })
    }

    /// log π_RULE(rule | cell); −∞ when the rule is not in the space.
    pub fn log_prob(&self, rule: &SplitRule) -> f64 {
        match self.features.iter().find(|(j, _)| *j == rule.feature) {
            Some((_, cuts)) if cuts.iter().any(|&c| c == rule.cut) => {
                -(self.features.len() as f64).ln() - (cuts.len() as f64).ln()
            }
            _ => f64::NEG_INFINITY,
        }
    }
}

/// A grow proposal: split `leaf` with `rule`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowProposal {
    pub leaf: NodeId,
    pub rule: SplitRule,
    /// log π_RULE(rule | cell of leaf).
    pub log_rule_prob: f64,
    /// |TN(T)| of the current tree.
    pub n_terminal: usize,
    /// |PN(T*)| of the grown tree.
    pub n_prunable_after: usize,
}

/// A prune proposal: collapse `node`, whose children are both leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneProposal {
    pub node: NodeId,
    pub left: NodeId,
    pub right: NodeId,
    /// |PN(T)| of the current tree.
    pub n_prunable: usize,
    /// |TN(T*)| of the pruned tree.
    pub n_terminal_after: usize,
}

/// Outcome of a dimension-preserving proposal.
#[derive(Debug, Clone, PartialEq)]
pub enum Reshape {
    /// The move has no candidates in this tree.
    Unavailable,
    /// The proposed tree would contain an empty leaf; rejected outright.
    EmptyLeaf,
    Proposed(DecisionTree),
}

impl DecisionTree {
    /// Single-node tree over `dim` covariates.
    pub fn new(dim: usize, mu: f64) -> Self {
        Self {
            dim,
            slots: vec![Some(Slot {
                parent: None,
                node: Node::Leaf { mu },
            })],
            free: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn slot(&self, id: NodeId) -> &Slot {
        self.slots[id].as_ref().expect("live node id")
    }

    fn slot_mut(&mut self, id: NodeId) -> &mut Slot {
        self.slots[id].as_mut().expect("live node id")
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.slot(id).node
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.slot(id).parent
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        matches!(self.node(id), Node::Leaf { .. })
    }

    pub fn mu(&self, id: NodeId) -> f64 {
        match self.node(id) {
            Node::Leaf { mu } => *mu,
            Node::Split { .. } => panic!("node {id} is not a leaf"),
        }
    }

    pub fn set_mu(&mut self, id: NodeId, value: f64) {
        match &mut self.slot_mut(id).node {
            Node::Leaf { mu } => *mu = value,
            Node::Split { .. } => panic!("node {id} is not a leaf"),
        }
    }

    pub fn rule(&self, id: NodeId) -> Option<SplitRule> {
        match self.node(id) {
            Node::Split { rule, .. } => Some(*rule),
            Node::Leaf { .. } => None,
        }
    }

    pub fn children(&self, id: NodeId) -> Option<(NodeId, NodeId)> {
        match self.node(id) {
            Node::Split { left, right, .. } => Some((*left, *right)),
            Node::Leaf { .. } => None,
        }
    }

    fn alloc(&mut self, slot: Slot) -> NodeId {
        if let Some(id) = self.free.pop() {
            self.slots[id] = Some(slot);
            id
        } else {
            self.slots.push(Some(slot));
            self.slots.len() - 1
        }
    }

    /// Node ids in pre-order.
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![ROOT];
        while let Some(id) = stack.pop() {
            out.push(id);
            if let Some((l, r)) = self.children(id) {
                stack.push(r);
                stack.push(l);
            }
        }
        out
    }

    /// Terminal nodes in pre-order.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.preorder().into_iter().filter(|&id| self.is_leaf(id)).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.count_leaves(ROOT)
    }

    fn count_leaves(&self, id: NodeId) -> usize {
        match self.children(id) {
            None => 1,
            Some((l, r)) => self.count_leaves(l) + self.count_leaves(r),
        }
    }

    /// Right-subtree leaves minus left-subtree leaves at the root; 0 for a
    /// single node.
    pub fn delta(&self) -> i64 {
        match self.children(ROOT) {
            None => 0,
            Some((l, r)) => self.count_leaves(r) as i64 - self.count_leaves(l) as i64,
        }
    }

    /// Maximum number of edges from the root to a leaf.
    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, id: NodeId) -> usize {
            match t.children(id) {
                None => 0,
                Some((l, r)) => 1 + go(t, l).max(go(t, r)),
            }
        }
        go(self, ROOT)
    }

    pub fn node_sets(&self) -> NodeSets {
        let mut sets = NodeSets::default();
        for id in self.preorder() {
            match self.children(id) {
                None => sets.terminal.push(id),
                Some((l, r)) => {
                    sets.internal.push(id);
                    if self.is_leaf(l) && self.is_leaf(r) {
                        sets.prunable.push(id);
                    }
                    for c in [l, r] {
                        if !self.is_leaf(c) {
                            sets.parent_child.push((id, c));
                        }
                    }
                }
            }
        }
        sets
    }

    /// Leaf reached by covariate vector `x`.
    #[inline]
    pub fn leaf_for(&self, x: &[f64]) -> NodeId {
        let mut id = ROOT;
        while let Node::Split { rule, left, right } = self.node(id) {
            id = if rule.goes_left(x) { *left } else { *right };
        }
        id
    }

    /// g(x, T, M).
    pub fn value_at(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::input(format!(
                "covariate vector has {} components, tree expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(self.mu(self.leaf_for(x)))
    }

    /// Leaf id for each observation.
    pub fn assign(&self, x: &Covariates) -> Vec<NodeId> {
        (0..x.n()).map(|i| self.leaf_for(x.row(i))).collect()
    }

    /// V = (g(x_i, T, M))_i.
    pub fn values(&self, x: &Covariates) -> Vec<f64> {
        (0..x.n()).map(|i| self.mu(self.leaf_for(x.row(i)))).collect()
    }

    /// Observations whose path passes through `node`.
    pub fn members(&self, x: &Covariates, node: NodeId) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = node;
        while let Some(p) = self.parent(cur) {
            let (l, _) = self.children(p).expect("parent is internal");
            path.push((self.rule(p).expect("parent is internal"), cur == l));
            cur = p;
        }
        (0..x.n())
            .filter(|&i| {
                let row = x.row(i);
                path.iter().all(|(rule, left)| rule.goes_left(row) == *left)
            })
            .collect()
    }

    /// Observation count per leaf, keyed by leaf id, in pre-order.
    pub fn leaf_counts(&self, x: &Covariates) -> Vec<(NodeId, usize)> {
        let leaves = self.leaves();
        let mut counts = vec![0usize; self.slots.len()];
        for i in 0..x.n() {
            counts[self.leaf_for(x.row(i))] += 1;
        }
        leaves.into_iter().map(|id| (id, counts[id])).collect()
    }

    pub fn has_empty_leaf(&self, x: &Covariates) -> bool {
        self.leaf_counts(x).iter().any(|&(_, c)| c == 0)
    }

    /// Splits `leaf` with `rule`; returns the new (left, right) leaves.
    pub fn grow(&mut self, leaf: NodeId, rule: SplitRule, mu_left: f64, mu_right: f64) -> (NodeId, NodeId) {
        assert!(self.is_leaf(leaf), "grow target {leaf} is not a leaf");
        assert!(rule.feature < self.dim, "rule feature out of range");
        let left = self.alloc(Slot {
            parent: Some(leaf),
            node: Node::Leaf { mu: mu_left },
        });
        let right = self.alloc(Slot {
            parent: Some(leaf),
            node: Node::Leaf { mu: mu_right },
        });
        self.slot_mut(leaf).node = Node::Split { rule, left, right };
        (left, right)
    }

    /// Collapses `node` (both children leaves) into a leaf with value `mu`.
    pub fn prune(&mut self, node: NodeId, mu: f64) {
        let (l, r) = self.children(node).expect("prune target is internal");
        assert!(self.is_leaf(l) && self.is_leaf(r), "prune target must be prunable");
        self.slots[l] = None;
        self.slots[r] = None;
        // reuse lower ids first so repeated grow/prune cycles stay compact
        self.free.push(r);
        self.free.push(l);
        self.slot_mut(node).node = Node::Leaf { mu };
    }

    pub fn set_rule(&mut self, node: NodeId, new_rule: SplitRule) {
        match &mut self.slot_mut(node).node {
            Node::Split { rule, .. } => *rule = new_rule,
            Node::Leaf { .. } => panic!("node {node} is not internal"),
        }
    }

    /// Chooses a leaf uniformly and draws a rule from the rule prior on its cell.
    /// `None` when the chosen leaf has no valid split.
    pub fn propose_grow<R: Rng + ?Sized>(&self, x: &Covariates, rng: &mut R) -> Option<GrowProposal> {
        let leaves = self.leaves();
        let leaf = leaves[rng.random_range(0..leaves.len())];
        let members = self.members(x, leaf);
        let space = RuleSpace::for_cell(x, &members);
        let rule = space.draw(rng)?;
        let log_rule_prob = space.log_prob(&rule);
        // the grown leaf becomes prunable; its parent stops being prunable
        let mut n_prunable_after = self.node_sets().prunable.len() + 1;
        if let Some(p) = self.parent(leaf) {
            let (l, r) = self.children(p).expect("parent is internal");
            if self.is_leaf(l) && self.is_leaf(r) {
                n_prunable_after -= 1;
            }
        }
        Some(GrowProposal {
            leaf,
            rule,
            log_rule_prob,
            n_terminal: leaves.len(),
            n_prunable_after,
        })
    }

    /// Chooses a prunable node uniformly. `None` on a single-node tree.
    pub fn propose_prune<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<PruneProposal> {
        let sets = self.node_sets();
        if sets.prunable.is_empty() {
            return None;
        }
        let node = sets.prunable[rng.random_range(0..sets.prunable.len())];
        let (left, right) = self.children(node).expect("prunable is internal");
        Some(PruneProposal {
            node,
            left,
            right,
            n_prunable: sets.prunable.len(),
            n_terminal_after: sets.terminal.len() - 1,
        })
    }

    /// Redraws the rule of a uniformly chosen internal node from the rule prior
    /// on that node's cell.
    pub fn propose_change<R: Rng + ?Sized>(&self, x: &Covariates, rng: &mut R) -> Reshape {
        let sets = self.node_sets();
        if sets.internal.is_empty() {
            return Reshape::Unavailable;
        }
        let node = sets.internal[rng.random_range(0..sets.internal.len())];
        let members = self.members(x, node);
        let Some(rule) = RuleSpace::for_cell(x, &members).draw(rng) else {
            return Reshape::EmptyLeaf;
        };
        let mut out = self.clone();
        out.set_rule(node, rule);
        if out.has_empty_leaf(x) {
            Reshape::EmptyLeaf
        } else {
            Reshape::Proposed(out)
        }
    }

    /// Exchanges the rules of a uniformly chosen internal parent-child pair.
    pub fn propose_swap<R: Rng + ?Sized>(&self, x: &Covariates, rng: &mut R) -> Reshape {
        let sets = self.node_sets();
        if sets.parent_child.is_empty() {
            return Reshape::Unavailable;
        }
        let (p, c) = sets.parent_child[rng.random_range(0..sets.parent_child.len())];
        let (rp, rc) = (self.rule(p).unwrap(), self.rule(c).unwrap());
        let mut out = self.clone();
        out.set_rule(p, rc);
        out.set_rule(c, rp);
        if out.has_empty_leaf(x) {
            Reshape::EmptyLeaf
        } else {
            Reshape::Proposed(out)
        }
    }

    /// Nested text form, one node per line, two spaces of indent per level:
    ///
    /// ```text
    /// split x1 <= 0.33
    ///   leaf 0.1
    ///   split x1 <= 0.66
    ///     leaf 1.2
    ///     leaf 0.1
    /// ```
    ///
    /// Features are 1-based. The left child is listed first. Numbers use the
    /// shortest round-trip representation, so parsing the text restores the
    /// tree exactly (node ids are renumbered in pre-order).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write_text(ROOT, 0, &mut out);
        out
    }

    fn write_text(&self, id: NodeId, level: usize, out: &mut String) {
        for _ in 0..level {
            out.push_str("  ");
        }
        match self.node(id) {
            Node::Leaf { mu } => {
                let _ = writeln!(out, "leaf {mu:?}");
            }
            Node::Split { rule, left, right } => {
                let _ = writeln!(out, "split x{} <= {:?}", rule.feature + 1, rule.cut);
                self.write_text(*left, level + 1, out);
                self.write_text(*right, level + 1, out);
            }
        }
    }

    /// Parses the text form produced by [`DecisionTree::to_text`].
    pub fn from_text(text: &str, dim: usize) -> Result<Self> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let trimmed = l.trim_start_matches(' ');
                ((l.len() - trimmed.len()) / 2, trimmed.trim_end())
            })
            .collect();
        let mut tree = DecisionTree::new(dim, 0.0);
        let mut pos = 0;
        parse_node(&lines, &mut pos, 0, &mut tree, ROOT)?;
        if pos != lines.len() {
            return Err(Error::input(format!("trailing tree text at line {}", pos + 1)));
        }
        Ok(tree)
    }
}

fn parse_node(
    lines: &[(usize, &str)],
    pos: &mut usize,
    level: usize,
    tree: &mut DecisionTree,
    id: NodeId,
) -> Result<()> {
    let bad = |line: usize, what: &str| Error::input(format!("tree text line {}: {what}", line + 1));
    let Some(&(indent, body)) = lines.get(*pos) else {
        return Err(bad(*pos, "unexpected end of tree"));
    };
    if indent != level {
        return Err(bad(*pos, "unexpected indentation"));
    }
    let line = *pos;
    *pos += 1;
    if let Some(rest) = body.strip_prefix("leaf ") {
        let mu: f64 = rest.trim().parse().map_err(|_| bad(line, "bad leaf value"))?;
        tree.set_mu(id, mu);
        return Ok(());
    }
    let rest = body
        .strip_prefix("split x")
        .ok_or_else(|| bad(line, "expected 'leaf' or 'split'"))?;
    let (feat, cut) = rest
        .split_once("<=")
        .ok_or_else(|| bad(line, "expected 'x<j> <= <cut>'"))?;
    let feature: usize = feat.trim().parse().map_err(|_| bad(line, "bad feature index"))?;
    if feature == 0 || feature > tree.dim {
        return Err(bad(line, "feature index out of range"));
    }
    let cut: f64 = cut.trim().parse().map_err(|_| bad(line, "bad cutpoint"))?;
    let (l, r) = tree.grow(
        id,
        SplitRule {
            feature: feature - 1,
            cut,
        },
        0.0,
        0.0,
    );
    parse_node(lines, pos, level + 1, tree, l)?;
    parse_node(lines, pos, level + 1, tree, r)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn rule(feature: usize, cut: f64) -> SplitRule {
        SplitRule { feature, cut }
    }

    /// Root x1 <= c1; left leaf; right child x3 <= c3 with two leaves.
    fn right_grown(c1: f64, c3: f64) -> DecisionTree {
        let mut t = DecisionTree::new(3, 0.0);
        let (_, r) = t.grow(ROOT, rule(0, c1), 0.5, 0.0);
        t.grow(r, rule(2, c3), -1.0, 2.0);
        t
    }

    /// Four leaves: both root children split.
    fn four_leaf() -> DecisionTree {
        let mut t = DecisionTree::new(2, 0.0);
        let (l, r) = t.grow(ROOT, rule(0, 0.5), 0.0, 0.0);
        t.grow(l, rule(1, 0.3), 1.0, 2.0);
        t.grow(r, rule(1, 0.7), 3.0, 4.0);
        t
    }

    #[test]
    fn value_at_follows_rules() {
        let t = DecisionTree::new(1, 0.7);
        assert_eq!(t.value_at(&[123.0]).unwrap(), 0.7);

        let mut t = DecisionTree::new(1, 0.0);
        t.grow(ROOT, rule(0, 0.5), -1.0, 2.0);
        assert_eq!(t.value_at(&[0.3]).unwrap(), -1.0);
        assert_eq!(t.value_at(&[0.5]).unwrap(), -1.0);
        assert_eq!(t.value_at(&[0.51]).unwrap(), 2.0);
        assert!(t.value_at(&[0.1, 0.2]).is_err());

        // x1 past c1, x3 below c3: left leaf of the grown right branch
        let t = right_grown(0.4, 0.6);
        assert_eq!(t.value_at(&[0.9, 0.0, 0.2]).unwrap(), -1.0);
        assert_eq!(t.value_at(&[0.9, 0.0, 0.8]).unwrap(), 2.0);
        assert_eq!(t.value_at(&[0.1, 0.0, 0.8]).unwrap(), 0.5);
    }

    #[test]
    fn node_set_counts() {
        let s = DecisionTree::new(1, 0.0).node_sets();
        assert_eq!(s.terminal, vec![ROOT]);
        assert!(s.internal.is_empty() && s.prunable.is_empty() && s.parent_child.is_empty());

        let mut t = DecisionTree::new(1, 0.0);
        t.grow(ROOT, rule(0, 0.5), 0.0, 0.0);
        let s = t.node_sets();
        assert_eq!((s.terminal.len(), s.internal.len(), s.prunable.len()), (2, 1, 1));
        assert!(s.parent_child.is_empty());

        let s = four_leaf().node_sets();
        assert_eq!(s.terminal.len(), 4);
        assert_eq!(s.internal.len(), 3);
        assert_eq!(s.prunable.len(), 2);
        assert_eq!(s.parent_child.len(), 2);
    }

    #[test]
    fn delta_and_depth() {
        assert_eq!(DecisionTree::new(1, 0.0).delta(), 0);
        assert_eq!(DecisionTree::new(1, 0.0).depth(), 0);
        let mut t = DecisionTree::new(1, 0.0);
        let (l, _) = t.grow(ROOT, rule(0, 0.5), 0.0, 0.0);
        assert_eq!(t.delta(), 0);
        t.grow(l, rule(0, 0.2), 0.0, 0.0);
        assert_eq!(t.delta(), -1);
        assert_eq!(t.depth(), 2);
        assert_eq!(right_grown(0.1, 0.2).delta(), 1);
        assert_eq!(four_leaf().depth(), 2);
    }

    #[test]
    fn log_prior_differences() {
        let p = LossPrior::default();
        assert!((p.log_prior_parts(3, 1) - p.log_prior_parts(3, -1) + 1.24).abs() < 1e-12);
        let p = LossPrior::new(1.62, 0.0, PriorSign::AsPrinted).unwrap();
        assert!((p.log_prior_parts(4, 0) - p.log_prior_parts(3, 2) - 1.62).abs() < 1e-12);
        let p = LossPrior::new(1.62, 0.0, PriorSign::Penalizing).unwrap();
        assert!((p.log_prior_parts(4, 0) - p.log_prior_parts(3, 2) + 1.62).abs() < 1e-12);
        let flat = LossPrior::new(0.0, 0.0, PriorSign::AsPrinted).unwrap();
        assert_eq!(flat.log_prior(&four_leaf()), flat.log_prior(&DecisionTree::new(1, 0.0)));
        assert!(LossPrior::new(-1.0, 0.0, PriorSign::AsPrinted).is_err());
    }

    #[test]
    fn prior_depends_only_on_leaf_count_and_imbalance() {
        // two different shapes, both with 4 leaves and Δ = 1 - 3
        let mut a = DecisionTree::new(1, 0.0);
        let (l, _) = a.grow(ROOT, rule(0, 0.5), 0.0, 0.0);
        let (ll, _) = a.grow(l, rule(0, 0.3), 0.0, 0.0);
        a.grow(ll, rule(0, 0.1), 0.0, 0.0);
        let mut b = DecisionTree::new(1, 0.0);
        let (l, _) = b.grow(ROOT, rule(0, 0.6), 0.0, 0.0);
        let (_, lr) = b.grow(l, rule(0, 0.2), 0.0, 0.0);
        b.grow(lr, rule(0, 0.4), 0.0, 0.0);
        assert_ne!(a.to_text(), b.to_text());
        assert_eq!((a.n_leaves(), a.delta()), (b.n_leaves(), b.delta()));
        for sign in [PriorSign::AsPrinted, PriorSign::Penalizing] {
            let p = LossPrior::new(1.62, 0.62, sign).unwrap();
            assert_eq!(p.log_prior(&a), p.log_prior(&b));
        }
    }

    #[test]
    fn cutpoints_exclude_cell_maximum() {
        let x = Covariates::from_column(vec![0.4, 0.9, 0.2, 0.4]).unwrap();
        let space = RuleSpace::for_cell(&x, &[0, 1, 2, 3]);
        assert_eq!(space.features, vec![(0, vec![0.2, 0.4])]);
        assert!((space.log_prob(&rule(0, 0.4)) + 2f64.ln()).abs() < 1e-15);
        assert_eq!(space.log_prob(&rule(0, 0.9)), f64::NEG_INFINITY);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let r = space.draw(&mut rng).unwrap();
            assert!(r.cut == 0.2 || r.cut == 0.4);
        }
        assert!(RuleSpace::for_cell(&x, &[0, 3]).is_empty());
    }

    #[test]
    fn grow_selection_is_uniform_over_leaves() {
        let x = Covariates::from_column((0..20).map(|i| i as f64 / 20.0).collect()).unwrap();
        let t = DecisionTree::new(1, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(t.propose_grow(&x, &mut rng).unwrap().leaf, ROOT);

        let mut t = DecisionTree::new(1, 0.0);
        let (l, _) = t.grow(ROOT, rule(0, 0.5), 0.0, 0.0);
        let hits = (0..10_000)
            .filter(|_| t.propose_grow(&x, &mut rng).unwrap().leaf == l)
            .count();
        assert!((hits as f64 / 1e4 - 0.5).abs() < 0.02);
    }

    #[test]
    fn prune_selection_is_uniform_over_prunable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = four_leaf();
        let (l, _) = t.children(ROOT).unwrap();
        let hits = (0..10_000)
            .filter(|_| t.propose_prune(&mut rng).unwrap().node == l)
            .count();
        assert!((hits as f64 / 1e4 - 0.5).abs() < 0.02);
        assert!(DecisionTree::new(1, 0.0).propose_prune(&mut rng).is_none());

        let mut t = DecisionTree::new(1, 0.0);
        t.grow(ROOT, rule(0, 0.5), 0.0, 0.0);
        let p = t.propose_prune(&mut rng).unwrap();
        assert_eq!((p.node, p.n_prunable, p.n_terminal_after), (ROOT, 1, 1));
    }

    #[test]
    fn grow_then_prune_restores_tree() {
        let base = four_leaf();
        let mut t = base.clone();
        let leaf = t.leaves()[2];
        let mu = t.mu(leaf);
        t.grow(leaf, rule(0, 0.6), 9.0, -9.0);
        t.prune(leaf, mu);
        assert_eq!(t.to_text(), base.to_text());
        assert_eq!(t.node_sets(), base.node_sets());
    }

    #[test]
    fn change_and_swap_availability() {
        let x = Covariates::from_rows(
            &(0..30)
                .map(|i| vec![i as f64 / 30.0, ((i * 7) % 30) as f64 / 30.0, ((i * 11) % 30) as f64 / 30.0])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let single = DecisionTree::new(3, 0.0);
        assert_eq!(single.propose_change(&x, &mut rng), Reshape::Unavailable);
        assert_eq!(single.propose_swap(&x, &mut rng), Reshape::Unavailable);

        let mut t = DecisionTree::new(3, 0.0);
        t.grow(ROOT, rule(2, 0.5), 0.0, 0.0);
        assert_eq!(t.propose_swap(&x, &mut rng), Reshape::Unavailable);
        let mut reached = false;
        for _ in 0..500 {
            if let Reshape::Proposed(s) = t.propose_change(&x, &mut rng) {
                assert_eq!(s.n_leaves(), t.n_leaves());
                reached |= s.rule(ROOT) == Some(rule(2, 0.8));
            }
        }
        assert!(reached);

        let t = right_grown(0.4, 0.6);
        let mut x1 = t.clone();
        let r = t.children(ROOT).unwrap().1;
        x1.set_rule(ROOT, rule(2, 0.6));
        x1.set_rule(r, rule(0, 0.4));
        match t.propose_swap(&x, &mut rng) {
            Reshape::Proposed(s) => assert_eq!(s, x1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn text_round_trip() {
        let t = right_grown(0.4, 0.1 + 0.2);
        let text = t.to_text();
        assert_eq!(
            text,
            "split x1 <= 0.4\n  leaf 0.5\n  split x3 <= 0.30000000000000004\n    leaf -1.0\n    leaf 2.0\n"
        );
        let back = DecisionTree::from_text(&text, 3).unwrap();
        assert_eq!(back.to_text(), text);
        assert!(DecisionTree::from_text("split x1 <= 0.4\n  leaf 1\n", 1).is_err());
        assert!(DecisionTree::from_text("split x4 <= 0.4\n  leaf 1\n  leaf 2\n", 3).is_err());
    }

    /// Brute-force node sets from the arena's parent links, independent of the
    /// child-walk in `node_sets`.
    fn sets_from_parents(t: &DecisionTree) -> (usize, usize, usize, usize) {
        let live: Vec<NodeId> = (0..t.slots.len()).filter(|&i| t.slots[i].is_some()).collect();
        let kids = |id: NodeId| live.iter().filter(|&&c| t.parent(c) == Some(id)).count();
        let leaves = live.iter().filter(|&&i| kids(i) == 0).count();
        let internal = live.len() - leaves;
        let prunable = live
            .iter()
            .filter(|&&i| kids(i) == 2 && live.iter().filter(|&&c| t.parent(c) == Some(i)).all(|&c| kids(c) == 0))
            .count();
        let pc = live
            .iter()
            .filter(|&&c| kids(c) == 2 && t.parent(c).is_some())
            .count();
        (leaves, internal, prunable, pc)
    }

    proptest! {
        #[test]
        fn random_moves_keep_tree_valid(seed in 0u64..5000, steps in 1usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 25;
            let x = Covariates::from_rows(
                &(0..n).map(|_| vec![rng.random::<f64>(), (rng.random::<f64>() * 4.0).floor()]).collect::<Vec<_>>(),
            ).unwrap();
            let mut t = DecisionTree::new(2, 0.0);
            for _ in 0..steps {
                match rng.random_range(0..4) {
                    0 => if let Some(g) = t.propose_grow(&x, &mut rng) {
                        let before = t.node_sets().prunable.len();
                        t.grow(g.leaf, g.rule, 0.1, -0.1);
                        prop_assert_eq!(t.node_sets().prunable.len(), g.n_prunable_after);
                        prop_assert!(before <= g.n_prunable_after);
                    },
                    1 => if let Some(p) = t.propose_prune(&mut rng) {
                        t.prune(p.node, 0.0);
                        prop_assert_eq!(t.n_leaves(), p.n_terminal_after);
                    },
                    2 => if let Reshape::Proposed(s) = t.propose_change(&x, &mut rng) { t = s; },
                    _ => if let Reshape::Proposed(s) = t.propose_swap(&x, &mut rng) { t = s; },
                }
                let s = t.node_sets();
                prop_assert_eq!(s.terminal.len(), s.internal.len() + 1);
                prop_assert!(t.n_leaves() <= n);
                let counts = t.leaf_counts(&x);
                prop_assert_eq!(counts.iter().map(|c| c.1).sum::<usize>(), n);
                prop_assert!(counts.iter().all(|c| c.1 > 0));
                prop_assert_eq!(
                    sets_from_parents(&t),
                    (s.terminal.len(), s.internal.len(), s.prunable.len(), s.parent_child.len())
                );
                if s.terminal.len() >= 2 { prop_assert!(!s.prunable.is_empty()); }
            }
            let back = DecisionTree::from_text(&t.to_text(), 2).unwrap();
            prop_assert_eq!(back.values(&x), t.values(&x));
        }

    }
}
