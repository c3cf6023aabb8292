//! Mask representations and region operations.
//!
//! All rasters are row-major with the origin at the top-left pixel. A pixel
//! at column `x` and row `y` lives at index `y * width + x`, and its center
//! sits at the integer coordinate `(x, y)`.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::{apply_transform, Transform};
use crate::error::{Error, Result};

/// A dense row-major raster of `T`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T> Grid<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width
            .checked_mul(height)
            .ok_or_else(|| Error::InvalidParameter("grid dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(Error::Length {
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(width.saturating_mul(height));
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn get(&self, x: usize, y: usize) -> Option<&T> {
        if x < self.width && y < self.height {
            self.data.get(self.index(x, y))
        } else {
            None
        }
    }

    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let idx = self.index(x, y);
        self.data[idx] = value;
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Copies the `w`x`h` window whose top-left pixel is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self>
    where
        T: Clone,
    {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::InvalidParameter(format!(
                "crop {w}x{h}+{x}+{y} outside {}x{} grid",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = self.index(x, row);
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Self::new(w, h, data)
    }

    pub(crate) fn check_same_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width.saturating_mul(height)])
    }

    pub fn transformed(&self, t: Transform) -> Self {
        apply_transform(self, t)
    }
}

/// Pixel adjacency used when grouping foreground pixels into regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    /// Up, down, left, right.
    Four,
    /// The four edge neighbors plus the four diagonals.
    #[default]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
        const EIGHT: [(isize, isize); 8] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::InvalidParameter(format!(
                "connectivity must be 4 or 8, got {other}"
            ))),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

impl std::str::FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n: u8 = s
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("connectivity must be 4 or 8, got {s:?}")))?;
        Connectivity::try_from(n)
    }
}

/// A real-valued pixel coordinate; `x` is the column and `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Foreground/background mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask(Grid<bool>);

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        Grid::new(width, height, data).map(Self)
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Grid::filled(width, height, false).map(Self)
    }

    pub fn from_grid(grid: Grid<bool>) -> Self {
        Self(grid)
    }

    pub fn grid(&self) -> &Grid<bool> {
        &self.0
    }

    pub fn grid_mut(&mut self) -> &mut Grid<bool> {
        &mut self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn data(&self) -> &[bool] {
        self.0.data()
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.0.get(x, y).copied().unwrap_or(false)
    }

    pub fn foreground_count(&self) -> usize {
        self.0.data().iter().filter(|&&v| v).count()
    }

    pub fn transformed(&self, t: Transform) -> Self {
        Self(self.0.transformed(t))
    }
}

/// Per-pixel foreground probability in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask(Grid<f64>);

impl SoftMask {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_grid(Grid::new(width, height, data)?)
    }

    pub fn from_grid(grid: Grid<f64>) -> Result<Self> {
        if let Some((i, v)) = grid
            .data()
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidInput(format!(
                "soft mask value {v} at index {i} is outside [0, 1]"
            )));
        }
        Ok(Self(grid))
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }
}

impl From<&BinaryMask> for SoftMask {
    fn from(mask: &BinaryMask) -> Self {
        SoftMask(mask.grid().map(|&v| if v { 1.0 } else { 0.0 }))
    }
}

/// Raw, unbounded per-pixel prediction scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMask(Grid<f64>);

impl LogitMask {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Grid::new(width, height, data).map(Self)
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }
}

/// Integer region map. Label 0 is background and positive labels are
/// exactly `1..=region_count`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledMask {
    labels: Grid<u32>,
    region_count: usize,
}

impl LabeledMask {
    /// Wraps a label grid, rejecting gaps in the positive label range.
    ///
    /// Region connectivity is not checked here; see [`LabeledMask::is_connected`].
    pub fn new(labels: Grid<u32>) -> Result<Self> {
        let max = labels.data().iter().copied().max().unwrap_or(0) as usize;
        let mut seen = vec![false; max + 1];
        for &l in labels.data() {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().skip(1).position(|s| !s) {
            return Err(Error::InvalidInput(format!(
                "label {} is missing from 1..={max}",
                missing + 1
            )));
        }
        Ok(Self {
            labels,
            region_count: max,
        })
    }

    /// Renumbers arbitrary labels to `1..=n` in raster first-encounter order.
    pub fn compact(labels: &Grid<u32>) -> Self {
        let mut remap = std::collections::HashMap::new();
        let mut next = 0u32;
        let relabeled = labels.map(|&l| {
            if l == 0 {
                0
            } else {
                *remap.entry(l).or_insert_with(|| {
                    next += 1;
                    next
                })
            }
        });
        Self {
            labels: relabeled,
            region_count: next as usize,
        }
    }

    pub fn labels(&self) -> &Grid<u32> {
        &self.labels
    }

    pub fn region_count(&self) -> usize {
        self.region_count
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.labels.dims()
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels.get(x, y).copied().unwrap_or(0)
    }

    pub fn to_binary(&self) -> BinaryMask {
        BinaryMask(self.labels.map(|&l| l != 0))
    }

    /// Same geometry, labels carried over unchanged.
    pub fn transformed(&self, t: Transform) -> Self {
        Self {
            labels: self.labels.transformed(t),
            region_count: self.region_count,
        }
    }

    /// True when every region's pixels form one connected set under `conn`.
    pub fn is_connected(&self, conn: Connectivity) -> bool {
        let relabeled = connected_components(&self.to_binary(), conn);
        // Every component must carry exactly one label and every label one component.
        let mut comp_of_label = vec![0u32; self.region_count + 1];
        for (&l, &c) in self.labels.data().iter().zip(relabeled.labels.data()) {
            if l == 0 {
                continue;
            }
            match comp_of_label[l as usize] {
                0 => comp_of_label[l as usize] = c,
                prev if prev != c => return false,
                _ => {}
            }
        }
        let mut seen = vec![false; relabeled.region_count + 1];
        for &c in comp_of_label.iter().skip(1) {
            if seen[c as usize] {
                return false;
            }
            seen[c as usize] = true;
        }
        true
    }

    /// Pixel coordinates of every region, indexed by `label - 1`.
    pub fn region_pixels(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out = vec![Vec::new(); self.region_count];
        let w = self.width();
        for (i, &l) in self.labels.data().iter().enumerate() {
            if l != 0 {
                out[l as usize - 1].push((i % w, i / w));
            }
        }
        out
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_transform(logits: &LogitMask) -> SoftMask {
    SoftMask(logits.grid().map(|&v| sigmoid(v)))
}

/// Foreground where the probability is strictly greater than `tau`.
pub fn threshold(soft: &SoftMask, tau: f64) -> Result<BinaryMask> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must lie in (0, 1), got {tau}"
        )));
    }
    Ok(BinaryMask(soft.grid().map(|&v| v > tau)))
}

/// Labels maximal connected foreground regions in raster first-encounter order.
pub fn connected_components(mask: &BinaryMask, conn: Connectivity) -> LabeledMask {
    let (w, h) = mask.dims();
    let fg = mask.data();
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();

    for start in 0..fg.len() {
        if !fg[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            let (x, y) = ((idx % w) as isize, (idx / w) as isize);
            for &(dx, dy) in conn.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let n = ny as usize * w + nx as usize;
                if fg[n] && labels[n] == 0 {
                    labels[n] = next;
                    queue.push_back(n);
                }
            }
        }
    }

    LabeledMask {
        labels: Grid {
            width: w,
            height: h,
            data: labels,
        },
        region_count: next as usize,
    }
}

/// Mean pixel coordinate of region `label`.
pub fn centroid(labeled: &LabeledMask, label: u32) -> Result<Point> {
    if label == 0 || label as usize > labeled.region_count() {
        return Err(Error::NotFound(format!(
            "label {label} (mask has {} regions)",
            labeled.region_count()
        )));
    }
    let w = labeled.width();
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (i, _) in labeled
        .labels()
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == label)
    {
        sx += (i % w) as f64;
        sy += (i / w) as f64;
        n += 1;
    }
    Ok(Point::new(sx / n as f64, sy / n as f64))
}

/// `(label, pixel count)` for every positive label, in label order.
pub fn region_sizes(labeled: &LabeledMask) -> Vec<(u32, usize)> {
    let mut counts = vec![0usize; labeled.region_count() + 1];
    for &l in labeled.labels().data() {
        counts[l as usize] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .skip(1)
        .map(|(l, c)| (l as u32, c))
        .collect()
}

/// Drops regions smaller than `min_px` pixels and renumbers the rest.
pub fn filter_small_regions(labeled: &LabeledMask, min_px: usize) -> LabeledMask {
    if min_px <= 1 {
        return labeled.clone();
    }
    let sizes = region_sizes(labeled);
    let kept = labeled
        .labels()
        .map(|&l| if l != 0 && sizes[l as usize - 1].1 >= min_px { l } else { 0 });
    LabeledMask::compact(&kept)
}
