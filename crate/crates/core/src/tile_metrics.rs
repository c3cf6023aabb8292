//! Tile-oriented benchmark metrics.
//!
//! Every ground-truth tile is matched to the predicted region it overlaps
//! most (ties go to the smallest predicted label). The match is greedy per
//! tile, so one predicted region may serve several tiles. Tiles that touch no
//! predicted region count as zero in both the precision and recall means.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{connected_components, filter_small_regions, region_sizes, BinaryMask, Connectivity, LabeledMask};
use crate::pixel_metrics::{pixel_metrics, PixelMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileAssignment {
    pub gt_label: u32,
    pub matched_pred_label: Option<u32>,
    pub intersection: usize,
    pub tile_size: usize,
    /// Zero when the tile is unmatched.
    pub region_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileMetrics {
    pub n_gt: usize,
    pub n_pred: usize,
    pub count_error: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assignments: Vec<TileAssignment>,
}

impl TileMetrics {
    /// Builds a summary record from already-computed values such as rows
    /// of an external results table. `f_measure` is taken as given.
    pub fn from_summary(count_error: f64, precision: f64, recall: f64, f_measure: f64) -> Self {
        Self {
            n_gt: 0,
            n_pred: 0,
            count_error,
            precision,
            recall,
            f_measure,
            assignments: Vec::new(),
        }
    }
}

pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Best-overlap predicted region for every ground-truth tile, in tile label order.
pub fn best_match(gt: &LabeledMask, pred: &LabeledMask) -> Result<Vec<TileAssignment>> {
    gt.labels().check_same_dims(pred.labels())?;

    let mut overlap: HashMap<(u32, u32), usize> = HashMap::new();
    for (&g, &p) in gt.labels().data().iter().zip(pred.labels().data()) {
        if g != 0 && p != 0 {
            *overlap.entry((g, p)).or_default() += 1;
        }
    }

    // (intersection, pred label) of the current best per tile.
    let mut best: Vec<Option<(usize, u32)>> = vec![None; gt.region_count()];
    for (&(g, p), &count) in &overlap {
        let slot = &mut best[g as usize - 1];
        let better = match *slot {
            None => true,
            Some((c, l)) => count > c || (count == c && p < l),
        };
        if better {
            *slot = Some((count, p));
        }
    }

    let tile_sizes = region_sizes(gt);
    let pred_sizes = region_sizes(pred);
    Ok(best
        .into_iter()
        .zip(tile_sizes)
        .map(|(m, (label, tile_size))| match m {
            Some((intersection, p)) => TileAssignment {
                gt_label: label,
                matched_pred_label: Some(p),
                intersection,
                tile_size,
                region_size: pred_sizes[p as usize - 1].1,
            },
            None => TileAssignment {
                gt_label: label,
                matched_pred_label: None,
                intersection: 0,
                tile_size,
                region_size: 0,
            },
        })
        .collect())
}

pub fn tile_metrics(gt: &LabeledMask, pred: &LabeledMask) -> Result<TileMetrics> {
    gt.labels().check_same_dims(pred.labels())?;
    let n_gt = gt.region_count();
    if n_gt == 0 {
        return Err(Error::InvalidInput(
            "ground truth has no tiles; count error is undefined".into(),
        ));
    }
    let n_pred = pred.region_count();
    let assignments = best_match(gt, pred)?;

    let (mut prec_sum, mut rec_sum) = (0.0, 0.0);
    for a in &assignments {
        if a.matched_pred_label.is_some() {
            prec_sum += a.intersection as f64 / a.region_size as f64;
            rec_sum += a.intersection as f64 / a.tile_size as f64;
        }
    }
    let precision = prec_sum / n_gt as f64;
    let recall = rec_sum / n_gt as f64;

    Ok(TileMetrics {
        n_gt,
        n_pred,
        count_error: n_gt.abs_diff(n_pred) as f64 / n_gt as f64,
        precision,
        recall,
        f_measure: f_measure(precision, recall),
        assignments,
    })
}

/// Ground truth supplied either as a label map or as a binary mask to be labeled.
#[derive(Debug, Clone)]
pub enum GroundTruth {
    Binary(BinaryMask),
    Labeled(LabeledMask),
}

impl GroundTruth {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            GroundTruth::Binary(m) => m.dims(),
            GroundTruth::Labeled(m) => m.dims(),
        }
    }

    pub fn to_labeled(&self, conn: Connectivity) -> LabeledMask {
        match self {
            GroundTruth::Binary(m) => connected_components(m, conn),
            GroundTruth::Labeled(m) => m.clone(),
        }
    }

    pub fn to_binary(&self) -> BinaryMask {
        match self {
            GroundTruth::Binary(m) => m.clone(),
            GroundTruth::Labeled(m) => m.to_binary(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub connectivity: Connectivity,
    /// Predicted regions smaller than this are discarded before matching; 1 keeps all.
    pub min_region_px: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            connectivity: Connectivity::Eight,
            min_region_px: 1,
        }
    }
}

/// Labels the prediction (and a binary ground truth) and computes both metric families.
pub fn evaluate_pair(
    gt: &GroundTruth,
    pred: &BinaryMask,
    options: &EvalOptions,
) -> Result<(PixelMetrics, TileMetrics)> {
    let gt_binary = gt.to_binary();
    let pixel = pixel_metrics(pred, &gt_binary)?;
    let gt_labeled = gt.to_labeled(options.connectivity);
    let pred_labeled = filter_small_regions(
        &connected_components(pred, options.connectivity),
        options.min_region_px,
    );
    let tile = tile_metrics(&gt_labeled, &pred_labeled)?;
    Ok((pixel, tile))
}
