//! Feature reduction: retrain on the top-ranked markers until a small tree
//! retains the full detector's scores, and iterate that reduction over
//! disjoint feature sets to map how much redundant signal the monitor
//! carries.

use std::collections::BTreeSet;

use crate::detector::eval::evaluate_tree;
use crate::detector::{fit_tree, DecisionTree, LabeledDataset, TreeParams};
use crate::error::{Error, Result};
use crate::monitor::FeatureLayout;

/// Default retention: a reduced model must keep 95% of the baseline
/// precision and recall.
pub const DEFAULT_RETENTION: f64 = 0.95;

/// Default depth budget of the minimal-set search.
pub const DEFAULT_SEARCH_DEPTH: usize = 24;

/// One retrain attempt during reduction.
#[derive(Clone, Debug)]
pub struct ReductionStep {
    pub k: usize,
    /// Top-k candidate features (global indices) handed to the retrain.
    pub features: Vec<usize>,
    pub precision: f64,
    pub recall: f64,
    pub accepted: bool,
}

/// Reduced detector together with its bookkeeping.
#[derive(Clone, Debug)]
pub struct ReducedModel {
    pub tree: DecisionTree,
    /// Candidate set the accepted tree was fitted on.
    pub selected: Vec<usize>,
    /// Features its splits actually use, ascending.
    pub used: Vec<usize>,
    /// Number of used features.
    pub n_ft: usize,
    /// Number of distinct conv layers the used features touch.
    pub n_l: usize,
    pub precision: f64,
    pub recall: f64,
    pub accepted: bool,
}

/// Full reduction result: the model plus the scores it was held against
/// and the per-k trace.
#[derive(Clone, Debug)]
pub struct Reduction {
    pub model: ReducedModel,
    /// The baseline tree fitted on the whole universe.
    pub full_tree: DecisionTree,
    pub full_precision: f64,
    pub full_recall: f64,
    pub steps: Vec<ReductionStep>,
}

fn used_and_layers(tree: &DecisionTree, layout: FeatureLayout) -> (Vec<usize>, usize) {
    let used: Vec<usize> = tree.used_features().into_iter().collect();
    let layers: BTreeSet<usize> = used.iter().map(|&f| layout.decode(f).0).collect();
    (used, layers.len())
}

/// Rank features by Gini importance, keeping only strictly positive ones;
/// ties resolve to the lower index.
pub fn rank_by_importance(tree: &DecisionTree) -> Vec<usize> {
    let imp = tree.gini_importances();
    let mut ranked: Vec<usize> = (0..imp.len()).filter(|&i| imp[i] > 0.0).collect();
    ranked.sort_by(|&a, &b| imp[b].partial_cmp(&imp[a]).unwrap().then(a.cmp(&b)));
    ranked
}

/// Retrain on growing top-k slices of the importance ranking and return
/// the smallest model whose exact-class precision and recall both stay
/// within `retention` of the baseline.
///
/// The baseline defaults to the full model fitted on `universe` (all
/// features when `None`); `baseline` overrides it with absolute scores,
/// which the minimal-set search uses to hold every round against the
/// original detector. All fits share `params.ccp_alpha` and `params.seed`.
pub fn reduce_features(
    train: &LabeledDataset,
    test: &LabeledDataset,
    layout: FeatureLayout,
    params: &TreeParams,
    universe: Option<&[usize]>,
    retention: f64,
    baseline: Option<(f64, f64)>,
) -> Result<Reduction> {
    if train.width() != layout.len() || test.width() != layout.len() {
        return Err(Error::config("dataset width does not match feature layout"));
    }
    if !(0.0..=1.0).contains(&retention) {
        return Err(Error::config("retention must lie in [0,1]"));
    }
    let fit_on = |features: Option<Vec<usize>>| -> Result<DecisionTree> {
        fit_tree(
            train,
            &TreeParams {
                ccp_alpha: params.ccp_alpha,
                allowed_features: features,
                seed: params.seed,
            },
        )
    };

    let full = fit_on(universe.map(|u| u.to_vec()))?;
    let full_report = evaluate_tree(&full, test)?;
    let (full_p, full_r) = (full_report.cls.precision, full_report.cls.recall);
    let (base_p, base_r) = baseline.unwrap_or((full_p, full_r));
    let meets = |p: f64, r: f64| p >= retention * base_p && r >= retention * base_r;

    let ranked = rank_by_importance(&full);
    let mut steps = Vec::new();
    let mut model: Option<ReducedModel> = None;

    for k in 1..=ranked.len() {
        let selected = ranked[..k].to_vec();
        let tree = fit_on(Some(selected.clone()))?;
        let report = evaluate_tree(&tree, test)?;
        let (p, r) = (report.cls.precision, report.cls.recall);
        let accepted = meets(p, r);
        steps.push(ReductionStep {
            k,
            features: selected.clone(),
            precision: p,
            recall: r,
            accepted,
        });
        let last = k == ranked.len();
        if accepted || last {
            let (used, n_l) = used_and_layers(&tree, layout);
            model = Some(ReducedModel {
                n_ft: used.len(),
                n_l,
                tree,
                selected,
                used,
                precision: p,
                recall: r,
                accepted,
            });
            if accepted {
                break;
            }
        }
    }

    let model = match model {
        Some(m) => m,
        None => {
            // The full tree is a single leaf: nothing to rank, the "reduced"
            // model is the leaf itself.
            let (used, n_l) = used_and_layers(&full, layout);
            ReducedModel {
                n_ft: used.len(),
                n_l,
                accepted: meets(full_p, full_r),
                tree: full.clone(),
                selected: Vec::new(),
                used,
                precision: full_p,
                recall: full_r,
            }
        }
    };

    Ok(Reduction {
        model,
        full_tree: full,
        full_precision: full_p,
        full_recall: full_r,
        steps,
    })
}

/// What bounds the minimal-set search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DepthMode {
    /// Stop after this many reduction rounds.
    Rounds,
    /// Stop once this many features have been eliminated from the universe.
    Features,
}

impl DepthMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DepthMode::Rounds => "rounds",
            DepthMode::Features => "features",
        }
    }

    pub fn from_str(s: &str) -> Result<DepthMode> {
        match s {
            "rounds" => Ok(DepthMode::Rounds),
            "features" => Ok(DepthMode::Features),
            other => Err(Error::parse(format!("unknown depth mode '{}'", other))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// The depth budget ran out.
    Depth,
    /// A round's reduction no longer met the retention thresholds, or no
    /// features were left to train on.
    Failed,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Depth => "depth",
            StopReason::Failed => "failed",
        }
    }
}

/// One accepted round of the minimal-set search.
#[derive(Clone, Debug)]
pub struct MinimalRound {
    pub round: usize,
    pub model: ReducedModel,
}

/// Pool of pairwise-disjoint feature sets that each support a detector
/// within the retention thresholds.
#[derive(Clone, Debug)]
pub struct MinimalPool {
    pub rounds: Vec<MinimalRound>,
    /// Used feature sets, one per accepted round, pairwise disjoint.
    pub pool: Vec<Vec<usize>>,
    pub stopped: StopReason,
    /// Baseline scores every round was held against.
    pub baseline: (f64, f64),
}

/// Repeatedly reduce, each time banning every feature an earlier accepted
/// model used, until the depth budget runs out or reduction fails.
pub fn minimal_feature_search(
    train: &LabeledDataset,
    test: &LabeledDataset,
    layout: FeatureLayout,
    params: &TreeParams,
    depth: usize,
    mode: DepthMode,
    retention: f64,
) -> Result<MinimalPool> {
    let mut excluded: BTreeSet<usize> = BTreeSet::new();
    let mut rounds = Vec::new();
    let mut pool: Vec<Vec<usize>> = Vec::new();
    let mut baseline: Option<(f64, f64)> = None;
    let stopped;

    let mut round = 1;
    loop {
        let budget_left = match mode {
            DepthMode::Rounds => round <= depth,
            DepthMode::Features => excluded.len() < depth,
        };
        if !budget_left {
            stopped = StopReason::Depth;
            break;
        }
        let allowed: Vec<usize> = (0..layout.len()).filter(|f| !excluded.contains(f)).collect();
        if allowed.is_empty() {
            stopped = StopReason::Failed;
            break;
        }
        let reduction = reduce_features(
            train,
            test,
            layout,
            params,
            Some(&allowed),
            retention,
            baseline,
        )?;
        if baseline.is_none() {
            baseline = Some((reduction.full_precision, reduction.full_recall));
        }
        if !reduction.model.accepted || reduction.model.used.is_empty() {
            stopped = StopReason::Failed;
            break;
        }
        excluded.extend(reduction.model.used.iter().copied());
        pool.push(reduction.model.used.clone());
        rounds.push(MinimalRound {
            round,
            model: reduction.model,
        });
        round += 1;
    }

    Ok(MinimalPool {
        rounds,
        pool,
        stopped,
        baseline: baseline.unwrap_or((0.0, 0.0)),
    })
}

/// Aggregate view of a minimal-set pool.
#[derive(Clone, Debug)]
pub struct MinimalSummary {
    pub sets: usize,
    /// Total features across the pool.
    pub features: usize,
    pub mean_set_size: f64,
    /// Mean of layer / L over all pooled features (1.0 = deepest layer).
    pub mean_normalized_depth: f64,
    /// (percentile, count) over all pooled features, ascending percentile.
    pub percentile_counts: Vec<(u8, usize)>,
    /// (layer, count) over all pooled features, ascending layer.
    pub layer_counts: Vec<(usize, usize)>,
}

pub fn summarize_minimal(pool: &[Vec<usize>], layout: FeatureLayout) -> MinimalSummary {
    use crate::monitor::PERCENTILES;
    let mut percentile_counts = vec![0usize; PERCENTILES.len()];
    let mut layer_counts = vec![0usize; layout.layers];
    let mut depth_sum = 0.0f64;
    let mut features = 0usize;
    for set in pool {
        for &f in set {
            let (layer, p_idx) = layout.decode(f);
            layer_counts[layer - 1] += 1;
            percentile_counts[p_idx] += 1;
            depth_sum += layer as f64 / layout.layers as f64;
            features += 1;
        }
    }
    MinimalSummary {
        sets: pool.len(),
        features,
        mean_set_size: if pool.is_empty() {
            0.0
        } else {
            features as f64 / pool.len() as f64
        },
        mean_normalized_depth: if features == 0 { 0.0 } else { depth_sum / features as f64 },
        percentile_counts: PERCENTILES
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, percentile_counts[i]))
            .collect(),
        layer_counts: (1..=layout.layers).map(|l| (l, layer_counts[l - 1])).collect(),
    }
}
