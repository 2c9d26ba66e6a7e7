//! Segmentation quality measures.
//!
//! Two conventions matter and differ on purpose. Mean IoU averages
//! per-episode foreground IoU within each class first and across classes
//! second, so rare classes weigh as much as common ones. FB-IoU instead
//! pools intersections and unions over the whole evaluation set, once for
//! foreground and once for background, and averages the two pooled ratios.

use crate::error::{Error, Result};
use crate::transform::Mask;
use serde::Serialize;
use std::collections::BTreeMap;

/// Intersection over union of the foreground. Both masks empty counts as a
/// perfect match (1.0): there was nothing to find and nothing was claimed.
pub fn foreground_iou(pred: &Mask, gt: &Mask) -> Result<f64> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::DimensionMismatch {
            context: "foreground_iou",
            expected: (gt.height(), gt.width()),
            got: (pred.height(), pred.width()),
        });
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        if p == 1 && g == 1 {
            inter += 1;
        }
        if p == 1 || g == 1 {
            union += 1;
        }
    }
    Ok(if union > 0 {
        inter as f64 / union as f64
    } else {
        1.0
    })
}

/// Mean of per-class IoU values. Inputs must already be class means in
/// `[0, 1]`.
pub fn miou(per_class: &[f64]) -> Result<f64> {
    if per_class.is_empty() {
        return Err(Error::EmptyList("per-class IoU list"));
    }
    for &v in per_class {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "IoU values must lie in [0, 1], got {v}"
            )));
        }
    }
    Ok(per_class.iter().sum::<f64>() / per_class.len() as f64)
}

/// Foreground-background IoU pooled over an evaluation set: aggregate
/// foreground IoU and aggregate background IoU, averaged.
pub fn fb_iou(preds: &[Mask], gts: &[Mask]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::EmptyList("prediction list"));
    }
    if preds.len() != gts.len() {
        return Err(Error::DimensionMismatch {
            context: "fb_iou",
            expected: (gts.len(), 1),
            got: (preds.len(), 1),
        });
    }
    let mut fg_inter = 0usize;
    let mut fg_union = 0usize;
    let mut bg_inter = 0usize;
    let mut bg_union = 0usize;
    for (pred, gt) in preds.iter().zip(gts) {
        if pred.height() != gt.height() || pred.width() != gt.width() {
            return Err(Error::DimensionMismatch {
                context: "fb_iou",
                expected: (gt.height(), gt.width()),
                got: (pred.height(), pred.width()),
            });
        }
        for (&p, &g) in pred.data().iter().zip(gt.data()) {
            if p == 1 && g == 1 {
                fg_inter += 1;
            }
            if p == 1 || g == 1 {
                fg_union += 1;
            }
            if p == 0 && g == 0 {
                bg_inter += 1;
            }
            if p == 0 || g == 0 {
                bg_union += 1;
            }
        }
    }
    let ratio = |i: usize, u: usize| if u > 0 { i as f64 / u as f64 } else { 1.0 };
    Ok((ratio(fg_inter, fg_union) + ratio(bg_inter, bg_union)) / 2.0)
}

/// Evaluation summary. `attention_mode` records which averaging path was
/// used, e.g. `A_5-shot` when five support pairs were averaged.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub per_class_iou: BTreeMap<String, f64>,
    pub miou: f64,
    pub fb_iou: f64,
    pub pairs_evaluated: usize,
    pub shots: usize,
    pub attention_mode: String,
    pub seed: u64,
    pub threshold: f64,
}

impl MetricsReport {
    /// Plain-text table, classes sorted by name.
    pub fn render_table(&self) -> String {
        let name_w = self
            .per_class_iou
            .keys()
            .map(|k| k.len())
            .chain(std::iter::once("class".len()))
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        out.push_str(&format!("{:<name_w$}  IoU\n", "class"));
        for (name, iou) in &self.per_class_iou {
            out.push_str(&format!("{name:<name_w$}  {iou:.4}\n"));
        }
        out.push_str(&format!(
            "mIoU {:.4}  FB-IoU {:.4}  ({} pairs, {}, seed {}, threshold {})\n",
            self.miou, self.fb_iou, self.pairs_evaluated, self.attention_mode, self.seed,
            self.threshold
        ));
        out
    }
}
