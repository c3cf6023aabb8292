//! Deterministic synthetic mosaics with exact ground truth, and controlled
//! corruptions of that ground truth to stand in for imperfect predictions.
//!
//! Tiles are convex quadrilaterals, one per grid cell. Each corner is pulled
//! inward from the cell's inset rectangle by a random amount up to
//! `jitter_px`, so neighboring tiles are always at least `grout_px` apart.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::RgbImage;
use crate::error::{Error, Result};
use crate::mask::{centroid, connected_components, region_sizes, BinaryMask, Connectivity, Grid, LabeledMask};

const GROUT_COLOR: [u8; 3] = [196, 192, 180];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MosaicSpec {
    pub width: usize,
    pub height: usize,
    pub tile_rows: usize,
    pub tile_cols: usize,
    pub grout_px: usize,
    pub jitter_px: usize,
    pub seed: u64,
}

impl Default for MosaicSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            tile_rows: 4,
            tile_cols: 4,
            grout_px: 2,
            jitter_px: 0,
            seed: 0,
        }
    }
}

impl MosaicSpec {
    pub fn tile_count(&self) -> usize {
        self.tile_rows * self.tile_cols
    }

    fn min_cell(&self) -> (usize, usize) {
        (self.width / self.tile_cols.max(1), self.height / self.tile_rows.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_rows == 0 || self.tile_cols == 0 {
            return Err(Error::InvalidParameter("tile grid must have at least one row and column".into()));
        }
        if self.grout_px == 0 {
            return Err(Error::InvalidParameter("grout_px must be at least 1".into()));
        }
        let (cw, ch) = self.min_cell();
        if 2 * self.jitter_px >= cw.min(ch) {
            return Err(Error::InvalidParameter(format!(
                "jitter {} must be below half the smallest cell dimension ({})",
                self.jitter_px,
                cw.min(ch)
            )));
        }
        // Inset extent (pixel centers) minus the inward pull on both sides.
        let core = |cell: usize| cell as isize - 1 - self.grout_px as isize - 2 * self.jitter_px as isize;
        if core(cw) < 0 || core(ch) < 0 {
            return Err(Error::InvalidParameter(format!(
                "cells of {cw}x{ch} px cannot hold a tile with grout {} and jitter {}",
                self.grout_px, self.jitter_px
            )));
        }
        Ok(())
    }
}

/// Counts a sidecar records next to a generated mosaic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedCounts {
    pub tiles: usize,
    pub foreground_px: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Vertex {
    x: f64,
    y: f64,
}

fn cross(o: Vertex, a: Vertex, b: Vertex) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Clockwise (in image coordinates) convex quad; a point is inside when it is
/// on the inner side of, or on, every edge.
fn quad_contains(quad: &[Vertex; 4], p: Vertex) -> bool {
    (0..4).all(|i| cross(quad[i], quad[(i + 1) % 4], p) >= 0.0)
}

pub fn generate_mosaic(spec: &MosaicSpec) -> Result<(RgbImage, LabeledMask)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels = Grid::filled(spec.width, spec.height, 0u32)?;
    let mut image = Grid::filled(spec.width, spec.height, GROUT_COLOR)?;
    let (gl, gr) = (spec.grout_px / 2, spec.grout_px - spec.grout_px / 2);
    let j = spec.jitter_px;

    let mut tile = 0u32;
    for r in 0..spec.tile_rows {
        for c in 0..spec.tile_cols {
            tile += 1;
            let (x0, x1) = (c * spec.width / spec.tile_cols, (c + 1) * spec.width / spec.tile_cols);
            let (y0, y1) = (r * spec.height / spec.tile_rows, (r + 1) * spec.height / spec.tile_rows);
            // Inclusive pixel-center bounds of the inset rectangle.
            let (xa, xb) = ((x0 + gl) as f64, (x1 - 1 - gr) as f64);
            let (ya, yb) = ((y0 + gl) as f64, (y1 - 1 - gr) as f64);
            let mut pull = || if j == 0 { 0.0 } else { rng.gen_range(0..=j) as f64 };
            let quad = [
                Vertex { x: xa + pull(), y: ya + pull() },
                Vertex { x: xb - pull(), y: ya + pull() },
                Vertex { x: xb - pull(), y: yb - pull() },
                Vertex { x: xa + pull(), y: yb - pull() },
            ];
            let color = [rng.gen_range(20..=235), rng.gen_range(20..=235), rng.gen_range(20..=235)];
            for y in y0..y1 {
                for x in x0..x1 {
                    if quad_contains(&quad, Vertex { x: x as f64, y: y as f64 }) {
                        labels.set(x, y, tile);
                        image.set(x, y, color);
                    }
                }
            }
        }
    }

    // Slanted edges can leave pixels touching their tile only diagonally.
    // Keep the largest four-connected piece of each tile so the ground truth
    // is the same under either connectivity.
    let pieces = connected_components(&BinaryMask::from_grid(labels.map(|&l| l != 0)), Connectivity::Four);
    let mut piece_tile = vec![0usize; pieces.region_count() + 1];
    for (&p, &l) in pieces.labels().data().iter().zip(labels.data()) {
        piece_tile[p as usize] = l as usize;
    }
    let mut best: Vec<Option<(usize, u32)>> = vec![None; spec.tile_count() + 1];
    for (piece, size) in region_sizes(&pieces) {
        let tile = piece_tile[piece as usize];
        if best[tile].map_or(true, |(s, _)| size > s) {
            best[tile] = Some((size, piece));
        }
    }
    for i in 0..labels.len() {
        let tile = labels.data()[i] as usize;
        if tile != 0 && best[tile].map(|(_, p)| p) != Some(pieces.labels().data()[i]) {
            labels.data_mut()[i] = 0;
            image.data_mut()[i] = GROUT_COLOR;
        }
    }

    let gt = LabeledMask::compact(&labels);
    if gt.region_count() != spec.tile_count() || !gt.is_connected(Connectivity::Eight) {
        return Err(Error::InvalidParameter(
            "tile geometry collapsed; increase the cell size or reduce jitter".into(),
        ));
    }
    Ok((image, gt))
}

pub fn expected_counts(gt: &LabeledMask) -> ExpectedCounts {
    ExpectedCounts {
        tiles: gt.region_count(),
        foreground_px: gt.to_binary().foreground_count(),
    }
}

/// JSON record written next to a generated mosaic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub mosaic: MosaicSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSpec>,
    pub expected: ExpectedCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerturbationSpec {
    #[serde(default)]
    pub drop_tiles: usize,
    #[serde(default)]
    pub merge_pairs: usize,
    #[serde(default)]
    pub dilate_px: usize,
    #[serde(default)]
    pub erode_px: usize,
    #[serde(default)]
    pub speckle_count: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Square (Chebyshev) dilation. Out-of-image pixels are ignored.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    morph(mask, radius, true)
}

/// Square (Chebyshev) erosion. Only in-image neighbors are required to be set,
/// so dilation followed by erosion never removes an original pixel.
pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    morph(mask, radius, false)
}

fn morph(mask: &BinaryMask, radius: usize, dilate: bool) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let r = radius as isize;
    let g = Grid::from_fn(w, h, |x, y| {
        let mut any = false;
        let mut all = true;
        for dy in -r..=r {
            for dx in -r..=r {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let v = mask.get(nx as usize, ny as usize);
                any |= v;
                all &= v;
            }
        }
        if dilate {
            any
        } else {
            all
        }
    })
    .expect("same dimensions");
    BinaryMask::from_grid(g)
}

/// Four-connected staircase path between two pixels, endpoints included.
fn staircase(a: (usize, usize), b: (usize, usize)) -> Vec<(usize, usize)> {
    let (mut x, mut y) = (a.0 as isize, a.1 as isize);
    let (tx, ty) = (b.0 as isize, b.1 as isize);
    let (dx, dy) = ((tx - x).abs(), (ty - y).abs());
    let (sx, sy) = ((tx - x).signum(), (ty - y).signum());
    let mut out = vec![(x as usize, y as usize)];
    let (mut ix, mut iy) = (0, 0);
    while ix < dx || iy < dy {
        // Step along whichever axis lags the ideal line more.
        if (2 * ix + 1) * dy < (2 * iy + 1) * dx {
            x += sx;
            ix += 1;
        } else {
            y += sy;
            iy += 1;
        }
        out.push((x as usize, y as usize));
    }
    out
}

fn rounded_centroid(gt: &LabeledMask, label: u32) -> (usize, usize) {
    let c = centroid(gt, label).expect("label in range");
    (c.x.round() as usize, c.y.round() as usize)
}

/// Bridge path between two tiles, if one exists that touches no other tile.
fn bridge(labels: &Grid<u32>, gt: &LabeledMask, a: u32, b: u32) -> Option<Vec<(usize, usize)>> {
    let path = staircase(rounded_centroid(gt, a), rounded_centroid(gt, b));
    let (w, h) = labels.dims();
    for &(x, y) in &path {
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let l = labels.data()[labels.index(nx as usize, ny as usize)];
                if l != 0 && l != a && l != b {
                    return None;
                }
            }
        }
    }
    Some(path)
}

/// Corrupts a ground truth into a prediction-like binary mask. Steps run in
/// the order drop, merge, dilate, erode, speckle.
///
/// Merges join two surviving tiles with a one-pixel four-connected band that
/// stays clear of every other tile; pairs are drawn from each tile's four
/// nearest neighbors. Speckles are single pixels with no foreground in their
/// 3x3 neighborhood. When no valid pair or speckle site remains, fewer are
/// applied.
pub fn perturb(gt: &LabeledMask, spec: &PerturbationSpec) -> Result<BinaryMask> {
    let n = gt.region_count();
    if spec.drop_tiles > n {
        return Err(Error::InvalidParameter(format!(
            "cannot drop {} of {n} tiles",
            spec.drop_tiles
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut order: Vec<u32> = (1..=n as u32).collect();
    order.shuffle(&mut rng);
    let mut dropped = vec![false; n + 1];
    for &l in &order[..spec.drop_tiles] {
        dropped[l as usize] = true;
    }
    let kept = gt.labels().map(|&l| if dropped[l as usize] { 0 } else { l });
    let mut mask = BinaryMask::from_grid(kept.map(|&l| l != 0));

    if spec.merge_pairs > 0 {
        let survivors: Vec<u32> = (1..=n as u32).filter(|&l| !dropped[l as usize]).collect();
        let centers: Vec<(f64, f64)> = survivors
            .iter()
            .map(|&l| {
                let c = centroid(gt, l).expect("label in range");
                (c.x, c.y)
            })
            .collect();
        let mut candidates = Vec::new();
        for (i, &a) in survivors.iter().enumerate() {
            let mut near: Vec<(f64, usize)> = survivors
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(k, _)| {
                    let d = (centers[i].0 - centers[k].0).powi(2) + (centers[i].1 - centers[k].1).powi(2);
                    (d, k)
                })
                .collect();
            near.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            for &(_, k) in near.iter().take(4) {
                let b = survivors[k];
                let pair = (a.min(b), a.max(b));
                if !candidates.contains(&pair) {
                    candidates.push(pair);
                }
            }
        }
        candidates.shuffle(&mut rng);
        let mut used = vec![false; n + 1];
        let mut merged = 0;
        for (a, b) in candidates {
            if merged == spec.merge_pairs {
                break;
            }
            if used[a as usize] || used[b as usize] {
                continue;
            }
            if let Some(path) = bridge(&kept, gt, a, b) {
                for (x, y) in path {
                    mask.grid_mut().set(x, y, true);
                }
                used[a as usize] = true;
                used[b as usize] = true;
                merged += 1;
            }
        }
    }

    mask = dilate(&mask, spec.dilate_px);
    mask = erode(&mask, spec.erode_px);

    if spec.speckle_count > 0 {
        let (w, h) = mask.dims();
        let mut placed = 0;
        let mut attempts = 0;
        let max_attempts = 100 * spec.speckle_count + w * h;
        while placed < spec.speckle_count && attempts < max_attempts {
            attempts += 1;
            let (x, y) = (rng.gen_range(0..w), rng.gen_range(0..h));
            let clear = (-1isize..=1).all(|dy| {
                (-1isize..=1).all(|dx| {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize || !mask.get(nx as usize, ny as usize)
                })
            });
            if clear {
                mask.grid_mut().set(x, y, true);
                placed += 1;
            }
        }
    }
    Ok(mask)
}
