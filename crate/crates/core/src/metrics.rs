//! Semantic and instance segmentation metrics.
//!
//! Semantic scores come from a confusion matrix (rows ground truth, columns
//! prediction). Instance AP follows the ScanNet procedure: predictions are
//! matched greedily by descending confidence and the precision/recall curve
//! is integrated under its all-point precision envelope. Ground-truth points
//! with semantic label −1 take no part in either.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geom::{LabeledCloud, UNLABELED};
use crate::instgroup::InstancePrediction;
use crate::{Error, Result};

/// IoU thresholds 0.50, 0.55, …, 0.95.
pub fn ap_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn mean_of(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (s, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    pub fn gt_count(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn pred_count(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }

    pub fn class_scores(&self, c: usize) -> ClassScores {
        let tp = self.true_positives(c);
        let fp = self.pred_count(c) - tp;
        let fn_ = self.gt_count(c) - tp;
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        ClassScores {
            iou: ratio(tp, tp + fp + fn_),
            precision,
            recall,
            f1,
        }
    }
}

/// Per-class semantic scores; a ratio with a zero denominator is `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub iou: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticMetrics {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassScores>,
    /// Mean IoU over classes present in the ground truth.
    pub miou: Option<f64>,
}

pub fn semantic_eval(gt: &LabeledCloud, pred: &[i32], n_classes: usize) -> Result<SemanticMetrics> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!(
            "{} predicted labels for {} points",
            pred.len(),
            gt.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(n_classes);
    for (i, (&g, &p)) in gt.semantic.iter().zip(pred).enumerate() {
        if g == UNLABELED {
            continue;
        }
        if g < 0 || g as usize >= n_classes {
            return Err(Error::Schema(format!("ground-truth class {g} outside 0..{n_classes}")));
        }
        if p < 0 || p as usize >= n_classes {
            return Err(Error::InvalidPrediction(format!("point {i} predicted as class {p}")));
        }
        cm.counts[g as usize][p as usize] += 1;
    }
    let per_class: Vec<ClassScores> = (0..n_classes).map(|c| cm.class_scores(c)).collect();
    let miou = mean_of((0..n_classes).filter(|&c| cm.gt_count(c) > 0).map(|c| per_class[c].iou));
    Ok(SemanticMetrics {
        confusion: cm,
        per_class,
        miou,
    })
}

/// AP of one class at one IoU threshold, given the IoU of every prediction
/// (rows, already in ranking order) against every ground-truth instance.
pub fn average_precision(ious: &[Vec<f64>], n_gt: usize, threshold: f64) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut matched = vec![false; n_gt];
    let mut tp_flags = Vec::with_capacity(ious.len());
    for row in ious {
        let mut best: Option<(usize, f64)> = None;
        for (g, &iou) in row.iter().enumerate() {
            if !matched[g] && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        match best {
            Some((g, iou)) if iou >= threshold => {
                matched[g] = true;
                tp_flags.push(true);
            }
            _ => tp_flags.push(false),
        }
    }
    let mut precision = Vec::with_capacity(tp_flags.len());
    let mut recall = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (k, &hit) in tp_flags.iter().enumerate() {
        tp += hit as usize;
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    // precision envelope: best precision at this or any later rank
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..tp_flags.len() {
        if tp_flags[k] {
            ap += (recall[k] - prev_recall) * precision[k];
            prev_recall = recall[k];
        }
    }
    Some(ap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub n_gt: usize,
    pub ap25: Option<f64>,
    pub ap50: Option<f64>,
    /// Mean over thresholds 0.50..=0.95.
    pub ap: Option<f64>,
    /// AP at each of [`ap_thresholds`].
    pub per_threshold: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub per_class: BTreeMap<i32, ClassAp>,
    pub ap25: Option<f64>,
    pub ap50: Option<f64>,
    pub ap: Option<f64>,
}

/// Ranking order: descending confidence, then ascending smallest point index.
pub fn rank_predictions(preds: &[InstancePrediction]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&preds[a], &preds[b]);
        pb.confidence
            .total_cmp(&pa.confidence)
            .then(pa.point_indices.iter().min().cmp(&pb.point_indices.iter().min()))
            .then(pa.class_id.cmp(&pb.class_id))
            .then_with(|| {
                let mut x = pa.point_indices.clone();
                let mut y = pb.point_indices.clone();
                x.sort_unstable();
                y.sort_unstable();
                x.cmp(&y)
            })
    });
    order
}

/// Instance AP per class. Ground-truth instances are the distinct instance
/// ids among points of each class in `instance_classes`.
pub fn instance_eval(
    gt: &LabeledCloud,
    preds: &[InstancePrediction],
    instance_classes: &[i32],
) -> Result<InstanceMetrics> {
    let n = gt.len();
    for (k, p) in preds.iter().enumerate() {
        if p.point_indices.is_empty() {
            return Err(Error::InvalidPrediction(format!("prediction {k} has no points")));
        }
        let mut seen = HashSet::with_capacity(p.point_indices.len());
        for &i in &p.point_indices {
            if i >= n {
                return Err(Error::InvalidPrediction(format!(
                    "prediction {k} references point {i} of {n}"
                )));
            }
            if !seen.insert(i) {
                return Err(Error::InvalidPrediction(format!("prediction {k} repeats point {i}")));
            }
        }
        if !(p.confidence.is_finite()) {
            return Err(Error::InvalidPrediction(format!(
                "prediction {k} has confidence {}",
                p.confidence
            )));
        }
    }

    // ground-truth masks: class -> instance id -> points
    let mut gt_masks: BTreeMap<i32, BTreeMap<i32, Vec<usize>>> = BTreeMap::new();
    for i in 0..n {
        let (c, inst) = (gt.semantic[i], gt.instance[i]);
        if c != UNLABELED && inst != UNLABELED && instance_classes.contains(&c) {
            gt_masks.entry(c).or_default().entry(inst).or_default().push(i);
        }
    }
    let ranked = rank_predictions(preds);
    let thresholds = ap_thresholds();
    let mut per_class = BTreeMap::new();
    for &c in instance_classes {
        let masks: Vec<&Vec<usize>> = gt_masks.get(&c).map(|m| m.values().collect()).unwrap_or_default();
        let mut owner: HashMap<usize, usize> = HashMap::new();
        for (g, m) in masks.iter().enumerate() {
            for &i in m.iter() {
                owner.insert(i, g);
            }
        }
        let ious: Vec<Vec<f64>> = ranked
            .iter()
            .map(|&k| &preds[k])
            .filter(|p| p.class_id == c)
            .map(|p| {
                let mut inter = vec![0usize; masks.len()];
                let mut size = 0usize;
                for &i in &p.point_indices {
                    if gt.semantic[i] == UNLABELED {
                        continue;
                    }
                    size += 1;
                    if let Some(&g) = owner.get(&i) {
                        inter[g] += 1;
                    }
                }
                masks
                    .iter()
                    .zip(&inter)
                    .map(|(m, &x)| {
                        let union = size + m.len() - x;
                        if union == 0 {
                            0.0
                        } else {
                            x as f64 / union as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let n_gt = masks.len();
        let per_threshold: Vec<Option<f64>> = thresholds.iter().map(|&t| average_precision(&ious, n_gt, t)).collect();
        per_class.insert(
            c,
            ClassAp {
                n_gt,
                ap25: average_precision(&ious, n_gt, 0.25),
                ap50: average_precision(&ious, n_gt, 0.5),
                ap: mean_of(per_threshold.iter().copied()).filter(|_| n_gt > 0),
                per_threshold,
            },
        );
    }
    Ok(InstanceMetrics {
        ap25: mean_of(per_class.values().map(|a| a.ap25)),
        ap50: mean_of(per_class.values().map(|a| a.ap50)),
        ap: mean_of(per_class.values().map(|a| a.ap)),
        per_class,
    })
}

/// One row per class: semantic scores and, for instance classes, AP.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_id: i32,
    pub name: String,
    pub iou: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub ap25: Option<f64>,
    pub ap50: Option<f64>,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<ClassReport>,
    pub miou: Option<f64>,
    pub mean_precision: Option<f64>,
    pub mean_recall: Option<f64>,
    pub mean_f1: Option<f64>,
    pub ap25: Option<f64>,
    pub ap50: Option<f64>,
    pub ap: Option<f64>,
    pub samples: usize,
    pub elapsed_seconds: f64,
    /// Samples per second of wall-clock time.
    pub throughput: f64,
}

impl EvalReport {
    pub fn from_metrics(
        class_names: &[String],
        semantic: &SemanticMetrics,
        instance: Option<&InstanceMetrics>,
        elapsed_seconds: f64,
    ) -> Self {
        let present = |c: usize| semantic.confusion.gt_count(c) > 0;
        let classes: Vec<ClassReport> = class_names
            .iter()
            .enumerate()
            .map(|(c, name)| {
                let s = semantic.per_class.get(c).copied().unwrap_or_default();
                let ap = instance.and_then(|m| m.per_class.get(&(c as i32)));
                ClassReport {
                    class_id: c as i32,
                    name: name.clone(),
                    iou: s.iou,
                    precision: s.precision,
                    recall: s.recall,
                    f1: s.f1,
                    ap25: ap.and_then(|a| a.ap25),
                    ap50: ap.and_then(|a| a.ap50),
                    ap: ap.and_then(|a| a.ap),
                }
            })
            .collect();
        let over_present = |f: fn(&ClassReport) -> Option<f64>| {
            mean_of(
                classes
                    .iter()
                    .enumerate()
                    .filter(|(c, _)| present(*c))
                    .map(|(_, r)| f(r)),
            )
        };
        Self {
            miou: semantic.miou,
            mean_precision: over_present(|r| r.precision),
            mean_recall: over_present(|r| r.recall),
            mean_f1: over_present(|r| r.f1),
            ap25: instance.and_then(|m| m.ap25),
            ap50: instance.and_then(|m| m.ap50),
            ap: instance.and_then(|m| m.ap),
            classes,
            samples: 1,
            elapsed_seconds,
            throughput: if elapsed_seconds > 0.0 {
                1.0 / elapsed_seconds
            } else {
                0.0
            },
        }
    }

    /// Table-shaped CSV: one row per class and a final mean row.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        let mut out = String::from("class,iou,precision,recall,f1,ap25,ap50,ap\n");
        for r in &self.classes {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.name,
                cell(r.iou),
                cell(r.precision),
                cell(r.recall),
                cell(r.f1),
                cell(r.ap25),
                cell(r.ap50),
                cell(r.ap)
            );
        }
        let _ = writeln!(
            out,
            "mean,{},{},{},{},{},{},{}",
            cell(self.miou),
            cell(self.mean_precision),
            cell(self.mean_recall),
            cell(self.mean_f1),
            cell(self.ap25),
            cell(self.ap50),
            cell(self.ap)
        );
        out
    }
}

/// Mean of several reports. Every field is averaged over the reports where
/// it is defined; throughput is total samples over total time.
pub fn aggregate(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::EmptyInput("no reports to aggregate".into()))?;
    let names: Vec<(i32, &str)> = first.classes.iter().map(|c| (c.class_id, c.name.as_str())).collect();
    for r in &reports[1..] {
        let other: Vec<(i32, &str)> = r.classes.iter().map(|c| (c.class_id, c.name.as_str())).collect();
        if other != names {
            return Err(Error::Schema(format!("class maps differ: {names:?} vs {other:?}")));
        }
    }
    let avg = |f: &dyn Fn(&EvalReport) -> Option<f64>| mean_of(reports.iter().map(f));
    let classes = first
        .classes
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let col = |f: fn(&ClassReport) -> Option<f64>| mean_of(reports.iter().map(|r| f(&r.classes[k])));
            ClassReport {
                class_id: c.class_id,
                name: c.name.clone(),
                iou: col(|r| r.iou),
                precision: col(|r| r.precision),
                recall: col(|r| r.recall),
                f1: col(|r| r.f1),
                ap25: col(|r| r.ap25),
                ap50: col(|r| r.ap50),
                ap: col(|r| r.ap),
            }
        })
        .collect();
    let samples = reports.iter().map(|r| r.samples).sum();
    let elapsed_seconds: f64 = reports.iter().map(|r| r.elapsed_seconds).sum();
    Ok(EvalReport {
        classes,
        miou: avg(&|r| r.miou),
        mean_precision: avg(&|r| r.mean_precision),
        mean_recall: avg(&|r| r.mean_recall),
        mean_f1: avg(&|r| r.mean_f1),
        ap25: avg(&|r| r.ap25),
        ap50: avg(&|r| r.ap50),
        ap: avg(&|r| r.ap),
        samples,
        elapsed_seconds,
        throughput: if elapsed_seconds > 0.0 {
            samples as f64 / elapsed_seconds
        } else {
            0.0
        },
    })
}
