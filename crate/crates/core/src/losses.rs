//! Reference implementations of the training objective.
//!
//! The total loss is the soft Dice loss plus a weighted confidence
//! calibration term, `|s - IoU(G, P > 0.5)|`. Only the Dice term has a
//! gradient here; the calibration term is piecewise constant in `P` and
//! non-differentiable at `s = IoU`, so it is evaluated for values only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{threshold, BinaryMask, Grid, SoftMask};
use crate::pixel_metrics::pixel_metrics;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_score: f64,
}

impl LossWeights {
    pub fn new(lambda_score: f64) -> Result<Self> {
        if !(lambda_score >= 0.0) || !lambda_score.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda_score must be a finite non-negative number, got {lambda_score}"
            )));
        }
        Ok(Self { lambda_score })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_score: 1.0 }
    }
}

/// A predicted soft mask with its self-reported confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOutput {
    pub soft_mask: SoftMask,
    pub confidence: f64,
}

impl PredictionOutput {
    pub fn new(soft_mask: SoftMask, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidParameter(format!(
                "confidence must lie in [0, 1], got {confidence}"
            )));
        }
        Ok(Self {
            soft_mask,
            confidence,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub dice_loss: f64,
    pub score_loss: f64,
    pub total: f64,
    pub iou_at_half: f64,
}

impl LossBreakdown {
    pub fn combine(dice_loss: f64, score_loss: f64, iou_at_half: f64, weights: &LossWeights) -> Self {
        Self {
            dice_loss,
            score_loss,
            total: dice_loss + weights.lambda_score * score_loss,
            iou_at_half,
        }
    }
}

fn check_smooth(smooth: f64) -> Result<()> {
    if !(smooth >= 0.0) || !smooth.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "smooth must be a finite non-negative number, got {smooth}"
        )));
    }
    Ok(())
}

/// Returns `(2 * sum(P*G) + smooth, |P|_1 + |G|_1 + smooth)`.
fn dice_terms(pred: &Grid<f64>, gt: &BinaryMask, smooth: f64) -> Result<(f64, f64)> {
    gt.grid().check_same_dims(pred)?;
    check_smooth(smooth)?;
    let (mut inter, mut p_sum, mut g_sum) = (0.0, 0.0, 0.0);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        // P is non-negative, so its L1 norm is the plain sum.
        p_sum += p;
        if g {
            inter += p;
            g_sum += 1.0;
        }
    }
    Ok((2.0 * inter + smooth, p_sum + g_sum + smooth))
}

fn dice_loss_raw(pred: &Grid<f64>, gt: &BinaryMask, smooth: f64) -> Result<f64> {
    let (num, den) = dice_terms(pred, gt, smooth)?;
    if den == 0.0 {
        // Both masks empty with no smoothing: perfect agreement.
        return Ok(0.0);
    }
    Ok(1.0 - num / den)
}

/// Soft Dice loss `1 - (2 sum(P*G) + smooth) / (|P|_1 + |G|_1 + smooth)`.
pub fn dice_loss(pred: &SoftMask, gt: &BinaryMask, smooth: f64) -> Result<f64> {
    dice_loss_raw(pred.grid(), gt, smooth)
}

/// Analytic derivative of [`dice_loss`] with respect to every pixel of `P`.
pub fn dice_loss_gradient(pred: &SoftMask, gt: &BinaryMask, smooth: f64) -> Result<Grid<f64>> {
    let (num, den) = dice_terms(pred.grid(), gt, smooth)?;
    if den == 0.0 {
        return Err(Error::Degenerate(
            "dice loss gradient is undefined when both masks are empty and smooth = 0".into(),
        ));
    }
    let den_sq = den * den;
    Ok(gt.grid().map(|&g| {
        let g = if g { 1.0 } else { 0.0 };
        -(2.0 * g * den - num) / den_sq
    }))
}

/// IoU between the ground truth and the prediction thresholded at 0.5.
pub fn iou_at_half(pred: &SoftMask, gt: &BinaryMask) -> Result<f64> {
    let hard = threshold(pred, 0.5)?;
    Ok(pixel_metrics(&hard, gt)?.iou)
}

pub fn score_loss(output: &PredictionOutput, gt: &BinaryMask) -> Result<f64> {
    Ok((output.confidence - iou_at_half(&output.soft_mask, gt)?).abs())
}

pub fn total_loss(
    output: &PredictionOutput,
    gt: &BinaryMask,
    weights: &LossWeights,
    smooth: f64,
) -> Result<LossBreakdown> {
    let dice_loss = dice_loss(&output.soft_mask, gt, smooth)?;
    let iou = iou_at_half(&output.soft_mask, gt)?;
    let score_loss = (output.confidence - iou).abs();
    Ok(LossBreakdown::combine(dice_loss, score_loss, iou, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn soft(w: usize, h: usize, v: &[f64]) -> SoftMask {
        SoftMask::new(w, h, v.to_vec()).unwrap()
    }

    fn bin(w: usize, h: usize, v: &[u8]) -> BinaryMask {
        BinaryMask::new(w, h, v.iter().map(|&b| b != 0).collect()).unwrap()
    }

    /// Central differences of the loss, evaluated on an unconstrained grid.
    fn numeric_gradient(pred: &SoftMask, gt: &BinaryMask, smooth: f64, h: f64) -> Vec<f64> {
        let base = pred.grid().clone();
        (0..base.len())
            .map(|k| {
                let mut plus = base.clone();
                plus.data_mut()[k] += h;
                let mut minus = base.clone();
                minus.data_mut()[k] -= h;
                (dice_loss_raw(&plus, gt, smooth).unwrap() - dice_loss_raw(&minus, gt, smooth).unwrap())
                    / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
    }

    #[test]
    fn dice_loss_examples() {
        let g = bin(4, 1, &[1, 1, 0, 0]);
        assert_eq!(dice_loss(&SoftMask::from(&g), &g, 0.0).unwrap(), 0.0);
        assert_eq!(dice_loss(&soft(4, 1, &[0.0; 4]), &g, 0.0).unwrap(), 1.0);
        let l = dice_loss(&soft(4, 1, &[1.0, 0.5, 0.0, 0.0]), &g, 0.0).unwrap();
        assert!((l - (1.0 - 3.0 / 3.5)).abs() < 1e-12);
        let empty = BinaryMask::empty(4, 1).unwrap();
        assert_eq!(dice_loss(&soft(4, 1, &[0.0; 4]), &empty, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn dice_loss_rejects_bad_inputs() {
        let g = bin(2, 1, &[1, 0]);
        assert!(matches!(dice_loss(&soft(1, 2, &[0.0, 1.0]), &g, 0.0), Err(Error::Shape { .. })));
        assert!(dice_loss(&soft(2, 1, &[0.0, 1.0]), &g, -1.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences_at_perfect_overlap() {
        let g = bin(3, 2, &[1, 0, 1, 1, 0, 0]);
        let p = SoftMask::from(&g);
        let analytic = dice_loss_gradient(&p, &g, 1.0).unwrap();
        let numeric = numeric_gradient(&p, &g, 1.0, 1e-4);
        for (a, n) in analytic.data().iter().zip(&numeric) {
            assert!(rel_err(*a, *n) < 1e-5, "{a} vs {n}");
        }
    }

    #[test]
    fn gradient_on_uniform_half_prediction() {
        let g = bin(4, 2, &[1, 1, 1, 1, 0, 0, 0, 0]);
        let p = soft(4, 2, &[0.5; 8]);
        let analytic = dice_loss_gradient(&p, &g, 0.0).unwrap();
        let numeric = numeric_gradient(&p, &g, 0.0, 1e-4);
        for (a, n) in analytic.data().iter().zip(&numeric) {
            assert!(rel_err(*a, *n) < 1e-5, "{a} vs {n}");
        }
        // Raising a background pixel's probability raises the loss.
        assert!(analytic.data()[7] > 0.0);
        assert!(analytic.data()[0] < 0.0);
    }

    #[test]
    fn gradient_degenerate() {
        let e = BinaryMask::empty(2, 2).unwrap();
        assert!(matches!(
            dice_loss_gradient(&soft(2, 2, &[0.0; 4]), &e, 0.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn score_loss_examples() {
        // 4x2 masks: G has 4 px, P thresholds to 3 of them -> IoU 0.75.
        let g = bin(4, 2, &[1, 1, 0, 0, 1, 1, 0, 0]);
        let p = soft(4, 2, &[0.9, 0.8, 0.1, 0.0, 0.7, 0.5, 0.2, 0.0]);
        assert_eq!(iou_at_half(&p, &g).unwrap(), 0.75);
        let out = PredictionOutput::new(p.clone(), 0.9).unwrap();
        assert!((score_loss(&out, &g).unwrap() - 0.15).abs() < 1e-12);
        let exact = PredictionOutput::new(p, 0.75).unwrap();
        assert_eq!(score_loss(&exact, &g).unwrap(), 0.0);

        let disjoint = PredictionOutput::new(soft(4, 2, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0]), 1.0).unwrap();
        assert_eq!(score_loss(&disjoint, &g).unwrap(), 1.0);
        assert!(PredictionOutput::new(soft(1, 1, &[0.0]), 1.5).is_err());
    }

    #[test]
    fn total_loss_examples() {
        let g = bin(4, 1, &[1, 1, 0, 0]);
        let p = soft(4, 1, &[1.0, 0.5, 0.0, 0.0]);
        let out = PredictionOutput::new(p, 0.3).unwrap();
        let b = total_loss(&out, &g, &LossWeights::new(0.0).unwrap(), 0.0).unwrap();
        assert_eq!(b.total, b.dice_loss);

        let perfect = PredictionOutput::new(SoftMask::from(&g), 1.0).unwrap();
        let b = total_loss(&perfect, &g, &LossWeights::default(), 0.0).unwrap();
        assert_eq!((b.total, b.dice_loss, b.score_loss, b.iou_at_half), (0.0, 0.0, 0.0, 1.0));

        let w = LossWeights::new(0.05).unwrap();
        let b = LossBreakdown::combine(0.2, 0.1, 0.9, &w);
        assert!((b.total - 0.205).abs() < 1e-15);
        let b = total_loss(&out, &g, &w, 0.0).unwrap();
        assert_eq!(b.total, b.dice_loss + 0.05 * b.score_loss);
        assert!(LossWeights::new(-0.1).is_err());
    }
}
