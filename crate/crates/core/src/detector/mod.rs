//! Class-weighted CART classifier over anomaly features, with minimal
//! cost-complexity pruning and Gini feature importances.
//!
//! Splits are axis-aligned thresholds ("value <= threshold goes left"),
//! candidates are midpoints between consecutive distinct sorted values,
//! and the best split maximizes the weighted Gini impurity decrease. Ties
//! resolve to the lowest feature index, then the lowest threshold, which
//! makes fitting fully deterministic for a fixed dataset.

pub mod eval;
pub mod export;

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Default cost-complexity pruning strength.
pub const DEFAULT_CCP_ALPHA: f64 = 1.5e-5;

/// Dense feature matrix with one integer label per row.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    width: usize,
    n_classes: usize,
    data: Vec<f64>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(width: usize, n_classes: usize) -> LabeledDataset {
        assert!(width > 0 && n_classes > 0);
        LabeledDataset {
            width,
            n_classes,
            data: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: &[f64], label: usize) -> Result<()> {
        if row.len() != self.width {
            return Err(Error::config(format!(
                "row has {} features, dataset expects {}",
                row.len(),
                self.width
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("training rows must be finite"));
        }
        if label >= self.n_classes {
            return Err(Error::config(format!(
                "label {} outside {} classes",
                label, self.n_classes
            )));
        }
        self.data.extend_from_slice(row);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Balanced class weights w_k = N / (K * N_k) over the classes present;
    /// absent classes get weight 0.
    pub fn class_weights(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        let present = counts.iter().filter(|&&c| c > 0).count();
        let n = self.labels.len() as f64;
        counts
            .iter()
            .map(|&c| {
                if c > 0 {
                    n / (present as f64 * c as f64)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Gini impurity 1 - sum((m_k / M)^2) of weighted class masses.
pub fn gini_impurity(masses: &[f64]) -> f64 {
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - masses.iter().map(|&m| (m / total) * (m / total)).sum::<f64>()
}

/// One node of the fitted tree. `feature == None` marks a leaf.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub feature: Option<usize>,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    /// Weighted row mass reaching this node.
    pub mass: f64,
    /// Weighted Gini impurity at this node.
    pub gini: f64,
    /// Majority (weighted) class, the prediction if this node were a leaf.
    pub class: usize,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.feature.is_none()
    }
}

/// Fitting parameters.
#[derive(Clone, Debug)]
pub struct TreeParams {
    /// Cost-complexity pruning strength; 0 disables pruning.
    pub ccp_alpha: f64,
    /// Restrict split search to these (global) feature indices.
    pub allowed_features: Option<Vec<usize>>,
    /// Recorded in the model; fitting itself is deterministic.
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            ccp_alpha: DEFAULT_CCP_ALPHA,
            allowed_features: None,
            seed: 0,
        }
    }
}

/// Fitted decision tree. Nodes form an arena with the root at index 0;
/// feature indices refer to the full feature layout even when fitting was
/// restricted to a subset.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    pub n_classes: usize,
    pub n_features: usize,
    pub class_weights: Vec<f64>,
    pub ccp_alpha: f64,
    pub seed: u64,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> usize {
        assert_eq!(x.len(), self.n_features, "feature vector width mismatch");
        let mut i = 0;
        loop {
            let node = &self.nodes[i];
            match node.feature {
                None => return node.class,
                Some(f) => {
                    // NaN compares false, so unmonitored markers fall right.
                    i = if x[f] <= node.threshold { node.left } else { node.right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn max_depth(&self) -> usize {
        fn depth(nodes: &[TreeNode], i: usize) -> usize {
            let n = &nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + depth(nodes, n.left).max(depth(nodes, n.right))
            }
        }
        depth(&self.nodes, 0)
    }

    /// Global indices of the features any split actually tests.
    pub fn used_features(&self) -> BTreeSet<usize> {
        self.nodes.iter().filter_map(|n| n.feature).collect()
    }

    /// Normalized Gini importances over the full feature layout.
    ///
    /// Each split contributes its mass-weighted impurity decrease; the
    /// unnormalized total equals the root impurity minus the mass-fraction
    /// weighted leaf impurities. The result sums to 1 unless the tree is a
    /// single leaf.
    pub fn gini_importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0f64; self.n_features];
        let root_mass = self.nodes[0].mass;
        for node in &self.nodes {
            if let Some(f) = node.feature {
                let l = &self.nodes[node.left];
                let r = &self.nodes[node.right];
                imp[f] += (node.mass * node.gini - l.mass * l.gini - r.mass * r.gini) / root_mass;
            }
        }
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            for v in &mut imp {
                *v /= total;
            }
        }
        imp
    }
}

struct Builder<'a> {
    ds: &'a LabeledDataset,
    weights: Vec<f64>,
    features: Vec<usize>,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl<'a> Builder<'a> {
    fn class_masses(&self, rows: &[usize]) -> Vec<f64> {
        let mut m = vec![0.0f64; self.ds.n_classes()];
        for &r in rows {
            m[self.ds.label(r)] += self.weights[self.ds.label(r)];
        }
        m
    }

    fn majority(masses: &[f64]) -> usize {
        let mut best = 0;
        for (k, &m) in masses.iter().enumerate() {
            if m > masses[best] {
                best = k;
            }
        }
        best
    }

    /// Exhaustive scan over allowed features and midpoint thresholds; the
    /// strict `>` comparison with ascending feature and threshold order
    /// implements the lowest-index, lowest-threshold tie policy.
    fn best_split(&self, rows: &[usize], parent_masses: &[f64], parent_gini: f64) -> Option<BestSplit> {
        let parent_mass: f64 = parent_masses.iter().sum();
        let mut best: Option<BestSplit> = None;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
        let mut left = vec![0.0f64; self.ds.n_classes()];
        for &f in &self.features {
            pairs.clear();
            pairs.extend(rows.iter().map(|&r| (self.ds.row(r)[f], self.ds.label(r))));
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[pairs.len() - 1].0 {
                continue;
            }
            left.iter_mut().for_each(|m| *m = 0.0);
            let mut left_mass = 0.0f64;
            for i in 0..pairs.len() - 1 {
                let (v, label) = pairs[i];
                left[label] += self.weights[label];
                left_mass += self.weights[label];
                let next = pairs[i + 1].0;
                if v == next {
                    continue;
                }
                let t = 0.5 * (v + next);
                if t <= v || t >= next {
                    continue;
                }
                let right: Vec<f64> = parent_masses
                    .iter()
                    .zip(&left)
                    .map(|(&p, &l)| p - l)
                    .collect();
                let right_mass = parent_mass - left_mass;
                let child = (left_mass * gini_impurity(&left)
                    + right_mass * gini_impurity(&right))
                    / parent_mass;
                let gain = parent_gini - child;
                if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        threshold: t,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, rows: Vec<usize>) {
        self.nodes.push(TreeNode {
            feature: None,
            threshold: 0.0,
            left: 0,
            right: 0,
            mass: 0.0,
            gini: 0.0,
            class: 0,
        });
        let mut stack = vec![(0usize, rows)];
        while let Some((id, rows)) = stack.pop() {
            let masses = self.class_masses(&rows);
            let mass: f64 = masses.iter().sum();
            let gini = gini_impurity(&masses);
            self.nodes[id].mass = mass;
            self.nodes[id].gini = gini;
            self.nodes[id].class = Self::majority(&masses);
            if gini <= 0.0 {
                continue;
            }
            let Some(split) = self.best_split(&rows, &masses, gini) else {
                continue;
            };
            let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
            for r in rows {
                if self.ds.row(r)[split.feature] <= split.threshold {
                    left_rows.push(r);
                } else {
                    right_rows.push(r);
                }
            }
            debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());
            let placeholder = TreeNode {
                feature: None,
                threshold: 0.0,
                left: 0,
                right: 0,
                mass: 0.0,
                gini: 0.0,
                class: 0,
            };
            let left_id = self.nodes.len();
            let right_id = left_id + 1;
            self.nodes.push(placeholder.clone());
            self.nodes.push(placeholder);
            let node = &mut self.nodes[id];
            node.feature = Some(split.feature);
            node.threshold = split.threshold;
            node.left = left_id;
            node.right = right_id;
            stack.push((right_id, right_rows));
            stack.push((left_id, left_rows));
        }
    }
}

/// Fit a tree on the full dataset. Splitting continues while some split has
/// strictly positive impurity decrease; cost-complexity pruning then
/// collapses weak links whose effective alpha is at most `ccp_alpha`.
pub fn fit_tree(ds: &LabeledDataset, params: &TreeParams) -> Result<DecisionTree> {
    if ds.is_empty() {
        return Err(Error::config("cannot fit a tree on an empty dataset"));
    }
    let features: Vec<usize> = match &params.allowed_features {
        None => (0..ds.width()).collect(),
        Some(list) => {
            let set: BTreeSet<usize> = list.iter().copied().collect();
            if set.is_empty() {
                return Err(Error::config("allowed feature set is empty"));
            }
            if let Some(&bad) = set.iter().find(|&&f| f >= ds.width()) {
                return Err(Error::config(format!(
                    "allowed feature {} outside width {}",
                    bad,
                    ds.width()
                )));
            }
            set.into_iter().collect()
        }
    };
    if !(params.ccp_alpha >= 0.0) {
        return Err(Error::config("ccp_alpha must be nonnegative"));
    }
    let mut b = Builder {
        ds,
        weights: ds.class_weights(),
        features,
        nodes: Vec::new(),
    };
    b.build((0..ds.len()).collect());
    let mut tree = DecisionTree {
        nodes: b.nodes,
        n_classes: ds.n_classes(),
        n_features: ds.width(),
        class_weights: b.weights,
        ccp_alpha: params.ccp_alpha,
        seed: params.seed,
    };
    ccp_prune(&mut tree, params.ccp_alpha);
    Ok(tree)
}

/// Minimal cost-complexity pruning: repeatedly collapse the internal node
/// with the smallest effective alpha g(t) = (R(t) - R(T_t)) / (leaves - 1)
/// while g(t) <= alpha. Node risk R is mass-fraction-weighted impurity.
pub fn ccp_prune(tree: &mut DecisionTree, alpha: f64) {
    if alpha <= 0.0 {
        return;
    }
    let root_mass = tree.nodes[0].mass;
    loop {
        if tree.nodes[0].is_leaf() {
            break;
        }
        // Subtree risk and leaf count per node, computed in one post-order
        // sweep (children always have larger arena indices than their
        // parent, so a reverse index scan visits children first).
        let n = tree.nodes.len();
        let mut sub_risk = vec![0.0f64; n];
        let mut sub_leaves = vec![0usize; n];
        let mut reachable = vec![false; n];
        mark_reachable(tree, 0, &mut reachable);
        for i in (0..n).rev() {
            if !reachable[i] {
                continue;
            }
            let node = &tree.nodes[i];
            if node.is_leaf() {
                sub_risk[i] = node.mass / root_mass * node.gini;
                sub_leaves[i] = 1;
            } else {
                sub_risk[i] = sub_risk[node.left] + sub_risk[node.right];
                sub_leaves[i] = sub_leaves[node.left] + sub_leaves[node.right];
            }
        }
        let mut weakest: Option<(f64, usize)> = None;
        for i in 0..n {
            if !reachable[i] || tree.nodes[i].is_leaf() {
                continue;
            }
            let own_risk = tree.nodes[i].mass / root_mass * tree.nodes[i].gini;
            let g = (own_risk - sub_risk[i]) / (sub_leaves[i] - 1) as f64;
            let better = match weakest {
                None => true,
                Some((gw, _)) => g < gw,
            };
            if better {
                weakest = Some((g, i));
            }
        }
        let Some((g, i)) = weakest else { break };
        if g > alpha {
            break;
        }
        let node = &mut tree.nodes[i];
        node.feature = None;
        node.threshold = 0.0;
        node.left = 0;
        node.right = 0;
    }
    compact(tree);
}

fn mark_reachable(tree: &DecisionTree, root: usize, out: &mut [bool]) {
    let mut stack = vec![root];
    while let Some(i) = stack.pop() {
        if out[i] {
            continue;
        }
        out[i] = true;
        let node = &tree.nodes[i];
        if !node.is_leaf() {
            stack.push(node.left);
            stack.push(node.right);
        }
    }
}

/// Drop unreachable arena entries and renumber in preorder.
fn compact(tree: &mut DecisionTree) {
    let mut order = Vec::with_capacity(tree.nodes.len());
    let mut remap = vec![usize::MAX; tree.nodes.len()];
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        remap[i] = order.len();
        order.push(i);
        let node = &tree.nodes[i];
        if !node.is_leaf() {
            stack.push(node.right);
            stack.push(node.left);
        }
    }
    let mut nodes = Vec::with_capacity(order.len());
    for &old in &order {
        let mut node = tree.nodes[old].clone();
        if !node.is_leaf() {
            node.left = remap[node.left];
            node.right = remap[node.right];
        }
        nodes.push(node);
    }
    tree.nodes = nodes;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(rows: &[(&[f64], usize)], width: usize, n_classes: usize) -> LabeledDataset {
        let mut ds = LabeledDataset::new(width, n_classes);
        for (row, label) in rows {
            ds.push_row(row, *label).unwrap();
        }
        ds
    }

    #[test]
    fn gini_hand_values() {
        assert_eq!(gini_impurity(&[4.0, 0.0]), 0.0);
        assert_eq!(gini_impurity(&[1.0, 1.0]), 0.5);
        assert!((gini_impurity(&[1.0, 3.0]) - 0.375).abs() < 1e-15);
        assert_eq!(gini_impurity(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn class_weights_balance_inverse_frequency() {
        let ds = dataset(
            &[(&[0.0], 0), (&[0.0], 0), (&[0.0], 0), (&[0.0], 1)],
            1,
            3,
        );
        let w = ds.class_weights();
        assert!((w[0] - 4.0 / 6.0).abs() < 1e-15);
        assert!((w[1] - 2.0).abs() < 1e-15);
        assert_eq!(w[2], 0.0, "absent class carries no weight");
    }

    #[test]
    fn dataset_rejects_bad_rows() {
        let mut ds = LabeledDataset::new(2, 2);
        assert!(ds.push_row(&[0.0], 0).is_err());
        assert!(ds.push_row(&[0.0, f64::NAN], 0).is_err());
        assert!(ds.push_row(&[0.0, 0.0], 2).is_err());
        assert!(ds.push_row(&[0.0, 0.0], 1).is_ok());
    }

    #[test]
    fn single_threshold_problem_yields_stump() {
        let ds = dataset(
            &[(&[1.0], 0), (&[2.0], 0), (&[3.0], 1), (&[4.0], 1)],
            1,
            2,
        );
        let tree = fit_tree(&ds, &TreeParams::default()).unwrap();
        assert_eq!(tree.n_leaves(), 2);
        let root = &tree.nodes[0];
        assert_eq!(root.feature, Some(0));
        assert_eq!(root.threshold, 2.5);
        assert_eq!(tree.predict(&[0.0]), 0);
        assert_eq!(tree.predict(&[2.5]), 0);
        assert_eq!(tree.predict(&[2.6]), 1);
        let imp = tree.gini_importances();
        assert!((imp[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn perfectly_balanced_xor_has_no_positive_gain_split() {
        // Every candidate split of a balanced XOR leaves the weighted
        // impurity unchanged, and splits must strictly reduce it.
        let ds = dataset(
            &[
                (&[0.0, 0.0], 0),
                (&[0.0, 1.0], 1),
                (&[1.0, 0.0], 1),
                (&[1.0, 1.0], 0),
            ],
            2,
            2,
        );
        let tree = fit_tree(&ds, &TreeParams { ccp_alpha: 0.0, ..Default::default() }).unwrap();
        assert_eq!(tree.n_leaves(), 1);
    }

    #[test]
    fn asymmetric_xor_needs_two_levels() {
        // Duplicating one corner breaks the gain symmetry, so the greedy
        // splitter can carve out all four corners.
        let ds = dataset(
            &[
                (&[0.0, 0.0], 0),
                (&[0.0, 1.0], 1),
                (&[1.0, 0.0], 1),
                (&[1.0, 1.0], 0),
                (&[1.0, 1.0], 0),
            ],
            2,
            2,
        );
        let tree = fit_tree(&ds, &TreeParams { ccp_alpha: 0.0, ..Default::default() }).unwrap();
        assert_eq!(tree.max_depth(), 2);
        for (x, want) in [([0.0, 0.0], 0), ([0.0, 1.0], 1), ([1.0, 0.0], 1), ([1.0, 1.0], 0)] {
            assert_eq!(tree.predict(&x), want);
        }
    }

    #[test]
    fn equal_gain_prefers_lowest_feature_index() {
        let ds = dataset(
            &[
                (&[0.0, 0.0], 0),
                (&[1.0, 1.0], 0),
                (&[2.0, 2.0], 1),
                (&[3.0, 3.0], 1),
            ],
            2,
            2,
        );
        let tree = fit_tree(&ds, &TreeParams::default()).unwrap();
        assert_eq!(tree.nodes[0].feature, Some(0));
    }

    #[test]
    fn equal_gain_prefers_lowest_threshold() {
        // Gains at thresholds 0.5 and 2.5 tie; 1.5 is worse.
        let ds = dataset(
            &[(&[0.0], 0), (&[1.0], 1), (&[2.0], 0), (&[3.0], 1)],
            1,
            2,
        );
        let tree = fit_tree(&ds, &TreeParams { ccp_alpha: 0.0, ..Default::default() }).unwrap();
        assert_eq!(tree.nodes[0].threshold, 0.5);
    }

    #[test]
    fn restricted_features_keep_global_indices() {
        let ds = dataset(
            &[
                (&[9.0, 1.0, 5.0], 0),
                (&[9.0, 2.0, 5.0], 0),
                (&[9.0, 3.0, 5.0], 1),
                (&[9.0, 4.0, 5.0], 1),
            ],
            3,
            2,
        );
        let params = TreeParams {
            allowed_features: Some(vec![1]),
            ..Default::default()
        };
        let tree = fit_tree(&ds, &params).unwrap();
        assert_eq!(tree.nodes[0].feature, Some(1));
        assert_eq!(tree.predict(&[0.0, 1.5, 0.0]), 0);
        assert_eq!(tree.predict(&[0.0, 3.5, 0.0]), 1);
        assert!(fit_tree(
            &ds,
            &TreeParams {
                allowed_features: Some(vec![7]),
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn zero_alpha_keeps_tree_infinite_alpha_collapses_to_root() {
        let rows: Vec<(Vec<f64>, usize)> = (0..32)
            .map(|i| (vec![i as f64, (i * 7 % 13) as f64], (i % 3 != 0) as usize))
            .collect();
        let mut ds = LabeledDataset::new(2, 2);
        for (row, label) in &rows {
            ds.push_row(row, *label).unwrap();
        }
        let full = fit_tree(&ds, &TreeParams { ccp_alpha: 0.0, ..Default::default() }).unwrap();
        assert!(full.n_leaves() > 2);
        let collapsed =
            fit_tree(&ds, &TreeParams { ccp_alpha: f64::INFINITY, ..Default::default() }).unwrap();
        assert_eq!(collapsed.nodes.len(), 1);
        assert_eq!(collapsed.predict(&[0.0, 0.0]), 1, "majority weighted class");
    }

    #[test]
    fn pruning_is_monotone_in_alpha() {
        let rows: Vec<(Vec<f64>, usize)> = (0..64)
            .map(|i| {
                let x = (i % 8) as f64;
                let y = (i / 8) as f64;
                (vec![x, y], ((x + y * 3.0) as usize % 2 + (i % 5 == 0) as usize).min(1))
            })
            .collect();
        let mut ds = LabeledDataset::new(2, 2);
        for (row, label) in &rows {
            ds.push_row(row, *label).unwrap();
        }
        let alphas = [0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];
        let mut prev_leaves = usize::MAX;
        for &a in &alphas {
            let tree = fit_tree(&ds, &TreeParams { ccp_alpha: a, ..Default::default() }).unwrap();
            let leaves = tree.n_leaves();
            assert!(
                leaves <= prev_leaves,
                "alpha {} grew the tree: {} > {}",
                a,
                leaves,
                prev_leaves
            );
            prev_leaves = leaves;
        }
    }

    #[test]
    fn importances_account_for_leaf_impurity() {
        let rows: Vec<(Vec<f64>, usize)> = (0..48)
            .map(|i| {
                let x = (i % 6) as f64;
                let y = (i / 6) as f64;
                (vec![x, y, 0.0], ((x > 2.0) as usize + (y > 3.0) as usize).min(1))
            })
            .collect();
        let mut ds = LabeledDataset::new(3, 2);
        for (row, label) in &rows {
            ds.push_row(row, *label).unwrap();
        }
        let tree = fit_tree(&ds, &TreeParams { ccp_alpha: 0.0, ..Default::default() }).unwrap();
        let imp = tree.gini_importances();
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(imp[2], 0.0, "constant feature is never used");

        // Unnormalized total must equal root impurity minus weighted leaf
        // impurity.
        let root_mass = tree.nodes[0].mass;
        let mut total = 0.0;
        for node in &tree.nodes {
            if node.feature.is_some() {
                let l = &tree.nodes[node.left];
                let r = &tree.nodes[node.right];
                total += (node.mass * node.gini - l.mass * l.gini - r.mass * r.gini) / root_mass;
            }
        }
        let leaf_term: f64 = tree
            .nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| n.mass / root_mass * n.gini)
            .sum();
        assert!((total - (tree.nodes[0].gini - leaf_term)).abs() < 1e-12);
    }

    #[test]
    fn fitting_is_deterministic() {
        let rows: Vec<(Vec<f64>, usize)> = (0..40)
            .map(|i| (vec![(i * 13 % 17) as f64, (i * 5 % 11) as f64], i % 3))
            .collect();
        let mut ds = LabeledDataset::new(2, 3);
        for (row, label) in &rows {
            ds.push_row(row, *label).unwrap();
        }
        let a = fit_tree(&ds, &TreeParams::default()).unwrap();
        let b = fit_tree(&ds, &TreeParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nan_features_fall_to_the_right_branch() {
        let ds = dataset(
            &[(&[1.0], 0), (&[2.0], 0), (&[3.0], 1), (&[4.0], 1)],
            1,
            2,
        );
        let tree = fit_tree(&ds, &TreeParams::default()).unwrap();
        assert_eq!(tree.predict(&[f64::NAN]), 1);
    }

    #[test]
    fn majority_tie_prefers_lowest_class() {
        let ds = dataset(&[(&[0.0], 1), (&[0.0], 0)], 1, 2);
        let tree = fit_tree(&ds, &TreeParams::default()).unwrap();
        assert_eq!(tree.nodes.len(), 1, "identical features cannot split");
        assert_eq!(tree.predict(&[0.0]), 0);
    }
}
