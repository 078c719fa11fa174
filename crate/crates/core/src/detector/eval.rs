//! Precision/recall scoring of fault-class predictions at three
//! granularities: exact class, input/memory category, and binary
//! fault-versus-clean (the SDC view).

use serde::{Deserialize, Serialize};

use crate::corruption::{FaultCategory, FaultClass};
use crate::error::{Error, Result};

/// Macro-averaged precision and recall of one evaluation mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeScores {
    pub precision: f64,
    pub recall: f64,
}

/// Per-class breakdown entry for the exact-class mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub support: usize,
}

/// Scores of one prediction set across all three modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Exact fault class, averaged over fault classes present in the truth.
    pub cls: ModeScores,
    /// Input vs memory category, clean negative.
    pub cat: ModeScores,
    /// Binary fault vs clean.
    pub sdc: ModeScores,
    pub per_class: Vec<ClassScores>,
    pub n: usize,
}

/// Macro-averaged precision/recall over the positive labels present in the
/// truth. A class never predicted scores precision 0; a class without true
/// members is skipped entirely.
fn macro_pr(
    truth: &[usize],
    pred: &[usize],
    n_labels: usize,
    negative: usize,
) -> (f64, f64, Vec<(usize, f64, f64, usize)>) {
    let mut tp = vec![0usize; n_labels];
    let mut fp = vec![0usize; n_labels];
    let mut fn_ = vec![0usize; n_labels];
    for (&t, &p) in truth.iter().zip(pred) {
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let mut per = Vec::new();
    let (mut p_sum, mut r_sum) = (0.0, 0.0);
    for k in 0..n_labels {
        if k == negative {
            continue;
        }
        let support = tp[k] + fn_[k];
        if support == 0 {
            continue;
        }
        let p = if tp[k] + fp[k] > 0 {
            tp[k] as f64 / (tp[k] + fp[k]) as f64
        } else {
            0.0
        };
        let r = tp[k] as f64 / support as f64;
        p_sum += p;
        r_sum += r;
        per.push((k, p, r, support));
    }
    if per.is_empty() {
        return (0.0, 0.0, per);
    }
    let n = per.len() as f64;
    (p_sum / n, r_sum / n, per)
}

fn cat_index(c: FaultCategory) -> usize {
    match c {
        FaultCategory::Clean => 0,
        FaultCategory::Input => 1,
        FaultCategory::Memory => 2,
    }
}

/// Score predictions against ground truth in all three modes.
pub fn evaluate_modes(truth: &[FaultClass], pred: &[FaultClass]) -> Result<EvalReport> {
    if truth.len() != pred.len() {
        return Err(Error::config(format!(
            "truth has {} entries, predictions {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::config("cannot evaluate an empty prediction set"));
    }

    let t_cls: Vec<usize> = truth.iter().map(|c| c.index()).collect();
    let p_cls: Vec<usize> = pred.iter().map(|c| c.index()).collect();
    let (p, r, per) = macro_pr(&t_cls, &p_cls, FaultClass::COUNT, FaultClass::None.index());
    let cls = ModeScores { precision: p, recall: r };
    let per_class = per
        .into_iter()
        .map(|(k, p, r, support)| ClassScores {
            class: FaultClass::from_index(k).unwrap().as_str().to_string(),
            precision: p,
            recall: r,
            support,
        })
        .collect();

    let t_cat: Vec<usize> = truth.iter().map(|c| cat_index(c.category())).collect();
    let p_cat: Vec<usize> = pred.iter().map(|c| cat_index(c.category())).collect();
    let (p, r, _) = macro_pr(&t_cat, &p_cat, 3, 0);
    let cat = ModeScores { precision: p, recall: r };

    let t_sdc: Vec<usize> = truth.iter().map(|c| (*c != FaultClass::None) as usize).collect();
    let p_sdc: Vec<usize> = pred.iter().map(|c| (*c != FaultClass::None) as usize).collect();
    let (p, r, _) = macro_pr(&t_sdc, &p_sdc, 2, 0);
    let sdc = ModeScores { precision: p, recall: r };

    Ok(EvalReport {
        cls,
        cat,
        sdc,
        per_class,
        n: truth.len(),
    })
}

/// Score a fitted tree on a labeled dataset across all three modes.
pub fn evaluate_tree(
    tree: &crate::detector::DecisionTree,
    ds: &crate::detector::LabeledDataset,
) -> Result<EvalReport> {
    if ds.width() != tree.n_features {
        return Err(Error::config(format!(
            "dataset width {} does not match tree input width {}",
            ds.width(),
            tree.n_features
        )));
    }
    let mut truth = Vec::with_capacity(ds.len());
    let mut pred = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let t = FaultClass::from_index(ds.label(i))
            .ok_or_else(|| Error::config(format!("label {} is not a fault class", ds.label(i))))?;
        let p = tree.predict(ds.row(i));
        let p = FaultClass::from_index(p)
            .ok_or_else(|| Error::config(format!("prediction {} is not a fault class", p)))?;
        truth.push(t);
        pred.push(p);
    }
    evaluate_modes(&truth, &pred)
}

#[cfg(test)]
mod tests {
    use super::*;
    use FaultClass::*;

    #[test]
    fn perfect_predictions_score_one_everywhere() {
        let truth = [None, Noise, Blur, Contrast, Memory];
        let report = evaluate_modes(&truth, &truth).unwrap();
        assert_eq!(report.cls.precision, 1.0);
        assert_eq!(report.cls.recall, 1.0);
        assert_eq!(report.cat.precision, 1.0);
        assert_eq!(report.cat.recall, 1.0);
        assert_eq!(report.sdc.precision, 1.0);
        assert_eq!(report.sdc.recall, 1.0);
    }

    #[test]
    fn within_category_confusion_hits_cls_but_not_cat_or_sdc() {
        let truth = [None, Noise, Blur, Contrast, Memory, None];
        let pred = [None, Blur, Blur, Contrast, Memory, None];
        let report = evaluate_modes(&truth, &pred).unwrap();
        assert!((report.cls.precision - 0.625).abs() < 1e-12);
        assert!((report.cls.recall - 0.75).abs() < 1e-12);
        assert_eq!(report.cat.precision, 1.0);
        assert_eq!(report.cat.recall, 1.0);
        assert_eq!(report.sdc.precision, 1.0);
        assert_eq!(report.sdc.recall, 1.0);
    }

    #[test]
    fn cross_category_confusion_degrades_cat_scores() {
        let truth = [None, Memory, Noise, Blur, Contrast, Memory];
        let pred = [None, Noise, Noise, Blur, Contrast, Memory];
        let report = evaluate_modes(&truth, &pred).unwrap();
        assert!((report.cls.precision - 0.875).abs() < 1e-12);
        assert!((report.cls.recall - 0.875).abs() < 1e-12);
        assert!((report.cat.precision - 0.875).abs() < 1e-12);
        assert!((report.cat.recall - 0.75).abs() < 1e-12);
        assert_eq!(report.sdc.precision, 1.0);
        assert_eq!(report.sdc.recall, 1.0);
    }

    #[test]
    fn false_alarms_hit_sdc_precision() {
        let truth = [None, None, Noise, None];
        let pred = [Noise, None, Noise, None];
        let report = evaluate_modes(&truth, &pred).unwrap();
        assert!((report.sdc.precision - 0.5).abs() < 1e-12);
        assert_eq!(report.sdc.recall, 1.0);
    }

    #[test]
    fn missed_faults_hit_recall_not_precision() {
        let truth = [Noise, Noise, None];
        let pred = [Noise, None, None];
        let report = evaluate_modes(&truth, &pred).unwrap();
        assert_eq!(report.cls.precision, 1.0);
        assert!((report.cls.recall - 0.5).abs() < 1e-12);
        assert_eq!(report.sdc.precision, 1.0);
        assert!((report.sdc.recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn class_never_predicted_scores_zero_precision() {
        let truth = [Blur, Blur];
        let pred = [Noise, Noise];
        let report = evaluate_modes(&truth, &pred).unwrap();
        assert_eq!(report.cls.precision, 0.0);
        assert_eq!(report.cls.recall, 0.0);
        assert_eq!(report.per_class.len(), 1, "only blur is present in truth");
        assert_eq!(report.per_class[0].class, "blur");
    }

    #[test]
    fn absent_truth_classes_are_excluded_from_the_average() {
        let truth = [Noise, Noise, None];
        let pred = [Noise, Blur, None];
        let report = evaluate_modes(&truth, &pred).unwrap();
        // Only noise is averaged: P = 1/1, R = 1/2. Blur's false positive
        // does not create a blur entry because blur has no true members.
        assert_eq!(report.cls.precision, 1.0);
        assert!((report.cls.recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mismatched_or_empty_inputs_error() {
        assert!(evaluate_modes(&[None], &[]).is_err());
        assert!(evaluate_modes(&[], &[]).is_err());
    }

    #[test]
    fn report_serializes_to_json() {
        let truth = [None, Noise];
        let report = evaluate_modes(&truth, &truth).unwrap();
        let text = serde_json::to_string(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&text).unwrap();
        assert_eq!(report, back);
    }
}
