//! Detection quality: precision, recall, F1, interpolated AP and mAP.

use std::collections::BTreeMap;
use std::io::Write;

use crate::detector_io::{Category, FrameBatch};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub category: Category,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub bbox: BBox,
    pub category: Category,
    pub confidence: f64,
}

/// Ground truth and predictions of one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalSample {
    pub ground_truth: Vec<GroundTruth>,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchResult {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    /// True positive flag per prediction, in input order.
    pub labels: Vec<bool>,
}

/// Prediction indices by descending confidence; ties keep input order.
fn confidence_order(preds: &[Prediction]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence));
    order
}

/// Greedy matching: each prediction, most confident first, takes the
/// unmatched same-category ground truth of highest IoU at or above the
/// threshold.
pub fn match_detections(sample: &EvalSample, iou_threshold: f64) -> MatchResult {
    let mut taken = vec![false; sample.ground_truth.len()];
    let mut labels = vec![false; sample.predictions.len()];
    for pi in confidence_order(&sample.predictions) {
        let p = &sample.predictions[pi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in sample.ground_truth.iter().enumerate() {
            if taken[gi] || g.category != p.category {
                continue;
            }
            let o = iou(&p.bbox, &g.bbox);
            if o >= iou_threshold && best.is_none_or(|(_, b)| o > b) {
                best = Some((gi, o));
            }
        }
        if let Some((gi, _)) = best {
            taken[gi] = true;
            labels[pi] = true;
        }
    }
    let tp = labels.iter().filter(|&&l| l).count() as u64;
    MatchResult {
        tp,
        fp: labels.len() as u64 - tp,
        fn_: sample.ground_truth.len() as u64 - tp,
        labels,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Some ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

pub fn precision_recall_f1(tp: u64, fp: u64, fn_: u64) -> PrecisionRecall {
    let ratio = |num: f64, den: f64| if den > 0.0 { Some(num / den) } else { None };
    let (tpf, fpf, fnf) = (tp as f64, fp as f64, fn_ as f64);
    let recall = ratio(tpf, tpf + fnf);
    let precision = ratio(tpf, tpf + fpf);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) => ratio(2.0 * p * r, p + r),
        _ => None,
    };
    PrecisionRecall {
        precision: precision.unwrap_or(0.0),
        recall: recall.unwrap_or(0.0),
        f1: f1.unwrap_or(0.0),
        degenerate: precision.is_none() || recall.is_none() || f1.is_none(),
    }
}

/// All-point interpolated AP from `(confidence, is_true_positive)` pairs.
pub fn average_precision(labeled: &[(f64, bool)], total_gt: u64) -> Result<f64> {
    if total_gt == 0 {
        return Err(Error::UndefinedAp);
    }
    let mut sorted = labeled.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    // one PR point per distinct confidence threshold
    let mut points: Vec<(f64, f64)> = Vec::new();
    let (mut tp, mut seen) = (0u64, 0u64);
    for (i, &(conf, hit)) in sorted.iter().enumerate() {
        seen += 1;
        tp += u64::from(hit);
        if sorted.get(i + 1).is_none_or(|next| next.0 != conf) {
            points.push((tp as f64 / total_gt as f64, tp as f64 / seen as f64));
        }
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..points.len() {
        let r = points[k].0;
        if r <= prev_recall {
            continue;
        }
        let p_interp = points[k..].iter().map(|p| p.1).fold(0.0, f64::max);
        ap += (r - prev_recall) * p_interp;
        prev_recall = r;
    }
    Ok(ap)
}

/// Mean over the classes whose AP is defined.
pub fn mean_ap(aps: &[Option<f64>]) -> Result<f64> {
    let defined: Vec<f64> = aps.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::NoDefinedAp);
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Matched predictions of one class over a whole dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassLabels {
    pub gt_count: u64,
    pub labeled: Vec<(f64, bool)>,
}

pub fn class_labels(samples: &[EvalSample], iou_threshold: f64) -> BTreeMap<Category, ClassLabels> {
    let mut out: BTreeMap<Category, ClassLabels> =
        Category::ALL.into_iter().map(|c| (c, ClassLabels::default())).collect();
    for s in samples {
        let m = match_detections(s, iou_threshold);
        for g in &s.ground_truth {
            out.get_mut(&g.category).expect("all categories present").gt_count += 1;
        }
        for (p, &hit) in s.predictions.iter().zip(&m.labels) {
            out.get_mut(&p.category)
                .expect("all categories present")
                .labeled
                .push((p.confidence, hit));
        }
    }
    out
}

/// Per-class AP at one IoU threshold; `None` for classes without ground truth.
pub fn class_aps(samples: &[EvalSample], iou_threshold: f64) -> BTreeMap<Category, Option<f64>> {
    class_labels(samples, iou_threshold)
        .into_iter()
        .map(|(c, l)| (c, average_precision(&l.labeled, l.gt_count).ok()))
        .collect()
}

pub fn map_at(samples: &[EvalSample], iou_threshold: f64) -> Result<f64> {
    let aps: Vec<Option<f64>> = class_aps(samples, iou_threshold).into_values().collect();
    mean_ap(&aps)
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50.0 + 5.0 * f64::from(i)) / 100.0).collect()
}

/// mAP averaged over IoU thresholds 0.50 to 0.95 in steps of 0.05.
pub fn map_50_95(samples: &[EvalSample]) -> Result<f64> {
    let t = coco_thresholds();
    let mut sum = 0.0;
    for &thr in &t {
        sum += map_at(samples, thr)?;
    }
    Ok(sum / t.len() as f64)
}

/// Pairs ground-truth and prediction frames by frame id.
pub fn samples_from_streams(gt: &[FrameBatch], pred: &[FrameBatch]) -> Vec<EvalSample> {
    let mut frames: BTreeMap<u64, EvalSample> = BTreeMap::new();
    for b in gt {
        let s = frames.entry(b.frame_id).or_default();
        s.ground_truth.extend(b.detections.iter().map(|d| GroundTruth {
            bbox: d.bbox,
            category: d.category,
        }));
    }
    for b in pred {
        let s = frames.entry(b.frame_id).or_default();
        s.predictions.extend(b.detections.iter().map(|d| Prediction {
            bbox: d.bbox,
            category: d.category,
            confidence: d.confidence,
        }));
    }
    frames.into_values().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub confidence_threshold: f64,
    pub class_ap: BTreeMap<Category, Option<f64>>,
    pub map_50: Option<f64>,
    pub map_50_95: Option<f64>,
    pub counts: MatchResult,
    pub metrics: PrecisionRecall,
}

/// Full report: AP and mAP over all predictions; precision, recall and F1 at
/// the given confidence operating point.
pub fn evaluate(samples: &[EvalSample], iou_threshold: f64, confidence_threshold: f64) -> Result<EvalReport> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::Config(format!(
            "IoU threshold must lie in (0, 1], got {iou_threshold}"
        )));
    }
    let mut counts = MatchResult::default();
    for s in samples {
        let kept = EvalSample {
            ground_truth: s.ground_truth.clone(),
            predictions: s
                .predictions
                .iter()
                .filter(|p| p.confidence >= confidence_threshold)
                .copied()
                .collect(),
        };
        let m = match_detections(&kept, iou_threshold);
        counts.tp += m.tp;
        counts.fp += m.fp;
        counts.fn_ += m.fn_;
    }
    Ok(EvalReport {
        iou_threshold,
        confidence_threshold,
        class_ap: class_aps(samples, iou_threshold),
        map_50: map_at(samples, 0.5).ok(),
        map_50_95: map_50_95(samples).ok(),
        metrics: precision_recall_f1(counts.tp, counts.fp, counts.fn_),
        counts,
    })
}

impl EvalReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "value"])?;
        w.write_record(["iou_threshold", &self.iou_threshold.to_string()])?;
        w.write_record(["confidence_threshold", &self.confidence_threshold.to_string()])?;
        for (c, ap) in &self.class_ap {
            w.write_record([format!("ap_{c}"), opt(*ap)])?;
        }
        w.write_record(["map_50", &opt(self.map_50)])?;
        w.write_record(["map_50_95", &opt(self.map_50_95)])?;
        w.write_record(["tp", &self.counts.tp.to_string()])?;
        w.write_record(["fp", &self.counts.fp.to_string()])?;
        w.write_record(["fn", &self.counts.fn_.to_string()])?;
        w.write_record(["precision", &self.metrics.precision.to_string()])?;
        w.write_record(["recall", &self.metrics.recall.to_string()])?;
        w.write_record(["f1", &self.metrics.f1.to_string()])?;
        w.write_record(["degenerate", &self.metrics.degenerate.to_string()])?;
        w.flush().map_err(|e| Error::io("<eval>", e))?;
        Ok(())
    }
}
