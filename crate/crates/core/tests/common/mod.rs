//! Random inputs and brute-force reference implementations shared by the
//! integration tests. Nothing here calls into the metric code under test.

#![allow(dead_code)]

use rand::Rng;
use tessera::mask::{BinaryMask, Grid, LabeledMask};

pub fn random_binary(rng: &mut impl Rng, w: usize, h: usize) -> BinaryMask {
    let p: f64 = rng.gen_range(0.0..=1.0);
    BinaryMask::new(w, h, (0..w * h).map(|_| rng.gen_bool(p)).collect()).unwrap()
}

/// Either scattered labels or a few overlapping painted rectangles, then
/// compacted. Regions need not be connected.
pub fn random_labeled(rng: &mut impl Rng, w: usize, h: usize) -> LabeledMask {
    let mut raw = vec![0u32; w * h];
    if rng.gen_bool(0.5) {
        let k = rng.gen_range(1..=6);
        let fill: f64 = rng.gen_range(0.1..0.9);
        for v in raw.iter_mut() {
            if rng.gen_bool(fill) {
                *v = rng.gen_range(1..=k);
            }
        }
    } else {
        for label in 1..=rng.gen_range(0..=8u32) {
            let (x0, y0) = (rng.gen_range(0..w), rng.gen_range(0..h));
            let (x1, y1) = (rng.gen_range(x0..w), rng.gen_range(y0..h));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    raw[y * w + x] = label;
                }
            }
        }
    }
    LabeledMask::compact(&Grid::new(w, h, raw).unwrap())
}

/// Labeled mask guaranteed to contain at least one region.
pub fn random_nonempty_labeled(rng: &mut impl Rng, w: usize, h: usize) -> LabeledMask {
    loop {
        let m = random_labeled(rng, w, h);
        if m.region_count() > 0 {
            return m;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileOracle {
    pub count_error: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Literal tile-metric definitions over a dense intersection table.
///
/// For every ground-truth tile the predicted region with the largest
/// non-zero intersection is chosen (smallest label on ties). Per-tile
/// precision is intersection / region size, recall is intersection / tile
/// size, unmatched tiles score 0, and both are averaged over all tiles in
/// ascending label order.
pub fn brute_force_tiles(gt: &LabeledMask, pred: &LabeledMask) -> TileOracle {
    let (n_gt, n_pred) = (gt.region_count(), pred.region_count());
    let g = gt.labels().data();
    let p = pred.labels().data();
    let mut table = vec![vec![0usize; n_pred + 1]; n_gt + 1];
    for i in 0..g.len() {
        table[g[i] as usize][p[i] as usize] += 1;
    }
    let tile_size = |t: usize| (0..=n_pred).map(|r| table[t][r]).sum::<usize>();
    let region_size = |r: usize| (0..=n_gt).map(|t| table[t][r]).sum::<usize>();

    let (mut prec_sum, mut rec_sum) = (0.0, 0.0);
    for t in 1..=n_gt {
        let mut best = 0;
        let mut best_inter = 0;
        for r in 1..=n_pred {
            if table[t][r] > best_inter {
                best = r;
                best_inter = table[t][r];
            }
        }
        if best != 0 {
            prec_sum += best_inter as f64 / region_size(best) as f64;
            rec_sum += best_inter as f64 / tile_size(t) as f64;
        }
    }
    let precision = prec_sum / n_gt as f64;
    let recall = rec_sum / n_gt as f64;
    let f_measure = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    TileOracle {
        count_error: (n_gt as f64 - n_pred as f64).abs() / n_gt as f64,
        precision,
        recall,
        f_measure,
    }
}
