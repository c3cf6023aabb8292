//! Pixel-level overlap metrics between a prediction and its ground truth.
//!
//! Degenerate denominators resolve as follows: when both masks are empty
//! every metric is 1 (perfect agreement); when the ground truth is empty but
//! the prediction is not, IoU, Dice and Recall are 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelMetrics {
    pub iou: f64,
    pub dice: f64,
    pub accuracy: f64,
    pub recall: f64,
}

pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    gt.grid().check_same_dims(pred.grid())?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

impl From<ConfusionCounts> for PixelMetrics {
    fn from(c: ConfusionCounts) -> Self {
        let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
        let union = tp + fp + fn_;
        let gt_size = tp + fn_;
        let (iou, dice) = if union == 0.0 {
            (1.0, 1.0)
        } else {
            (tp / union, 2.0 * tp / (2.0 * tp + fp + fn_))
        };
        let recall = match (gt_size == 0.0, fp == 0.0) {
            (true, true) => 1.0,
            (true, false) => 0.0,
            (false, _) => tp / gt_size,
        };
        PixelMetrics {
            iou,
            dice,
            accuracy: (tp + tn) / (tp + fp + fn_ + tn),
            recall,
        }
    }
}

pub fn pixel_metrics(pred: &BinaryMask, gt: &BinaryMask) -> Result<PixelMetrics> {
    confusion(pred, gt).map(PixelMetrics::from)
}

/// Unweighted per-image mean, accumulated in record order.
pub fn average_metrics(records: &[PixelMetrics]) -> Result<PixelMetrics> {
    if records.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot average an empty list of metrics".into(),
        ));
    }
    // A run of identical records must average back to itself exactly.
    if records.iter().all(|r| r == &records[0]) {
        return Ok(records[0]);
    }
    let n = records.len() as f64;
    let mut sum = PixelMetrics::default();
    for r in records {
        sum.iou += r.iou;
        sum.dice += r.dice;
        sum.accuracy += r.accuracy;
        sum.recall += r.recall;
    }
    Ok(PixelMetrics {
        iou: sum.iou / n,
        dice: sum.dice / n,
        accuracy: sum.accuracy / n,
        recall: sum.recall / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(w: usize, h: usize, bits: &[u8]) -> BinaryMask {
        BinaryMask::new(w, h, bits.iter().map(|&b| b != 0).collect()).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let g = m(3, 3, &[1, 1, 0, 1, 1, 0, 0, 0, 0]);
        let c = confusion(&g, &g).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 4, fp: 0, fn_: 0, tn: 5 });

        let empty = BinaryMask::empty(3, 3).unwrap();
        let c = confusion(&empty, &g).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 0, fp: 0, fn_: 4, tn: 5 });

        // 4x2: gt covers the left two columns, prediction the top-left two pixels.
        let gt = m(4, 2, &[1, 1, 0, 0, 1, 1, 0, 0]);
        let pred = m(4, 2, &[1, 1, 0, 0, 0, 0, 0, 0]);
        let c = confusion(&pred, &gt).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 2, fp: 0, fn_: 2, tn: 4 });
        assert_eq!(c.total(), 8);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = BinaryMask::empty(2, 3).unwrap();
        let b = BinaryMask::empty(3, 2).unwrap();
        assert!(matches!(pixel_metrics(&a, &b), Err(Error::Shape { .. })));
    }

    #[test]
    fn metric_examples() {
        let g = m(3, 3, &[1, 1, 0, 1, 1, 0, 0, 0, 0]);
        let p = pixel_metrics(&g, &g).unwrap();
        assert_eq!(p, PixelMetrics { iou: 1.0, dice: 1.0, accuracy: 1.0, recall: 1.0 });

        let other = m(3, 3, &[0, 0, 0, 0, 0, 0, 0, 1, 1]);
        let p = pixel_metrics(&other, &g).unwrap();
        assert_eq!((p.iou, p.dice, p.recall), (0.0, 0.0, 0.0));
        assert_eq!(p.accuracy, 3.0 / 9.0);

        let p = PixelMetrics::from(ConfusionCounts { tp: 2, fp: 0, fn_: 2, tn: 4 });
        assert_eq!(p.iou, 0.5);
        assert!((p.dice - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.accuracy, 0.75);
        assert_eq!(p.recall, 0.5);
    }

    #[test]
    fn degenerate_cases() {
        let e = BinaryMask::empty(2, 2).unwrap();
        assert_eq!(
            pixel_metrics(&e, &e).unwrap(),
            PixelMetrics { iou: 1.0, dice: 1.0, accuracy: 1.0, recall: 1.0 }
        );
        let p = m(2, 2, &[1, 0, 0, 0]);
        let r = pixel_metrics(&p, &e).unwrap();
        assert_eq!((r.iou, r.dice, r.recall, r.accuracy), (0.0, 0.0, 0.0, 0.75));
    }

    #[test]
    fn averaging() {
        assert!(average_metrics(&[]).is_err());
        let a = PixelMetrics { iou: 0.8, dice: 0.9, accuracy: 0.7, recall: 0.3 };
        assert_eq!(average_metrics(&[a]).unwrap(), a);
        let b = PixelMetrics { iou: 1.0, ..a };
        assert!((average_metrics(&[a, b]).unwrap().iou - 0.9).abs() < 1e-15);
        let odd = PixelMetrics { iou: 0.1, dice: 0.7, accuracy: 0.3, recall: 1.0 / 3.0 };
        assert_eq!(average_metrics(&[odd; 7]).unwrap(), odd);
    }
}
