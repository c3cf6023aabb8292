//! Dataset preparation: cropping, geometric augmentation, splitting,
//! prompt-point generation and JSON-lines manifests.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{centroid, connected_components, BinaryMask, Connectivity, Grid, LabeledMask, Point};

pub type RgbImage = Grid<[u8; 3]>;

/// A dihedral transform. Rotations are clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    Identity,
    Rot90,
    Rot180,
    Rot270,
    Hflip,
    Vflip,
}

impl Transform {
    /// Identity plus the three rotations and two flips.
    pub const ALL: [Transform; 6] = [
        Transform::Identity,
        Transform::Rot90,
        Transform::Rot180,
        Transform::Rot270,
        Transform::Hflip,
        Transform::Vflip,
    ];

    pub fn inverse(self) -> Self {
        match self {
            Transform::Rot90 => Transform::Rot270,
            Transform::Rot270 => Transform::Rot90,
            other => other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Transform::Identity => "identity",
            Transform::Rot90 => "rot90",
            Transform::Rot180 => "rot180",
            Transform::Rot270 => "rot270",
            Transform::Hflip => "hflip",
            Transform::Vflip => "vflip",
        }
    }

    pub fn output_dims(self, width: usize, height: usize) -> (usize, usize) {
        match self {
            Transform::Rot90 | Transform::Rot270 => (height, width),
            _ => (width, height),
        }
    }

    /// Maps a real coordinate in a `width`x`height` source to the output frame.
    /// Pixel centers sit on integers, so integer inputs map to integer outputs.
    pub fn map_point(self, p: Point, width: usize, height: usize) -> Point {
        let (wm, hm) = ((width - 1) as f64, (height - 1) as f64);
        match self {
            Transform::Identity => p,
            Transform::Rot90 => Point::new(hm - p.y, p.x),
            Transform::Rot180 => Point::new(wm - p.x, hm - p.y),
            Transform::Rot270 => Point::new(p.y, wm - p.x),
            Transform::Hflip => Point::new(wm - p.x, p.y),
            Transform::Vflip => Point::new(p.x, hm - p.y),
        }
    }

    pub fn map_pixel(self, x: usize, y: usize, width: usize, height: usize) -> (usize, usize) {
        match self {
            Transform::Identity => (x, y),
            Transform::Rot90 => (height - 1 - y, x),
            Transform::Rot180 => (width - 1 - x, height - 1 - y),
            Transform::Rot270 => (y, width - 1 - x),
            Transform::Hflip => (width - 1 - x, y),
            Transform::Vflip => (x, height - 1 - y),
        }
    }
}

impl std::fmt::Display for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Transform::ALL
            .into_iter()
            .find(|t| t.name() == s.trim())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown transform {s:?}")))
    }
}

pub fn apply_transform<T: Clone>(grid: &Grid<T>, t: Transform) -> Grid<T> {
    let (w, h) = grid.dims();
    let (ow, oh) = t.output_dims(w, h);
    let inv = t.inverse();
    Grid::from_fn(ow, oh, |x, y| {
        let (sx, sy) = inv.map_pixel(x, y, ow, oh);
        grid.data()[grid.index(sx, sy)].clone()
    })
    .expect("transformed dimensions are positive")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Window start offsets along one axis; the last window is flush with the edge.
fn window_offsets(dim: usize, tile: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..)
        .map(|k| k * stride)
        .take_while(|&o| o + tile <= dim)
        .collect();
    if let Some(&last) = out.last() {
        if last + tile < dim {
            out.push(dim - tile);
        }
    }
    out
}

/// Raster-order crops at the given stride. Trailing partial windows are
/// shifted back so they end on the image border.
pub fn crop_grid<T: Clone>(
    image: &Grid<T>,
    tile_w: usize,
    tile_h: usize,
    stride_w: usize,
    stride_h: usize,
) -> Result<Vec<(CropRect, Grid<T>)>> {
    let (w, h) = image.dims();
    if tile_w == 0 || tile_h == 0 || tile_w > w || tile_h > h {
        return Err(Error::InvalidParameter(format!(
            "tile {tile_w}x{tile_h} does not fit in {w}x{h} image"
        )));
    }
    if stride_w == 0 || stride_h == 0 {
        return Err(Error::InvalidParameter("crop strides must be at least 1".into()));
    }
    let xs = window_offsets(w, tile_w, stride_w);
    let ys = window_offsets(h, tile_h, stride_h);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            let rect = CropRect {
                x,
                y,
                width: tile_w,
                height: tile_h,
            };
            out.push((rect, image.crop(x, y, tile_w, tile_h)?));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PromptPoint {
    pub label: u32,
    pub x: f64,
    pub y: f64,
}

impl PromptPoint {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_id: String,
    pub transform: Transform,
    pub crop: Option<CropRect>,
}

/// A prediction of some method for one manifest entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodPrediction {
    pub method: String,
    pub path: PathBuf,
}

/// One line of a manifest. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
    pub gt_mask_path: PathBuf,
    #[serde(default)]
    pub split: Split,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prompts: Vec<PromptPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predictions: Vec<MethodPrediction>,
}

impl SampleEntry {
    pub fn new(id: impl Into<String>, gt_mask_path: impl Into<PathBuf>) -> Self {
        Self {
            id: id.into(),
            image_path: None,
            gt_mask_path: gt_mask_path.into(),
            split: Split::Train,
            prompts: Vec::new(),
            provenance: None,
            predictions: Vec::new(),
        }
    }

    /// Every referenced file, resolved against `base`.
    pub fn referenced_files(&self, base: &Path) -> Vec<PathBuf> {
        let mut out: Vec<PathBuf> = self.image_path.iter().map(|p| base.join(p)).collect();
        out.push(base.join(&self.gt_mask_path));
        out.extend(self.predictions.iter().map(|p| base.join(&p.path)));
        out
    }
}

/// An entry together with its pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: RgbImage,
    pub gt: LabeledMask,
    pub entry: SampleEntry,
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{suffix}.{ext}"),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}

/// Applies each transform to image, mask and prompts together.
///
/// Regions keep their identity through the transform but are renumbered in
/// raster first-encounter order of the new frame, so the output label map
/// equals the connected-component labeling of the transformed mask. Prompt
/// labels follow the renumbering.
pub fn augment_sample(sample: &Sample, transforms: &[Transform]) -> Result<Vec<Sample>> {
    if transforms.is_empty() {
        return Err(Error::InvalidParameter("at least one transform is required".into()));
    }
    sample.image.check_same_dims(sample.gt.labels())?;
    let already = sample
        .entry
        .provenance
        .as_ref()
        .map(|p| p.transform)
        .unwrap_or_default();

    let (w, h) = sample.gt.dims();
    let mut out = Vec::with_capacity(transforms.len());
    for &t in transforms {
        if t == Transform::Identity {
            out.push(sample.clone());
            continue;
        }
        if already != Transform::Identity {
            return Err(Error::InvalidParameter(format!(
                "sample {} is already augmented with {already}",
                sample.entry.id
            )));
        }

        let carried = sample.gt.labels().transformed(t);
        let gt = LabeledMask::compact(&carried);
        let mut renumber = HashMap::new();
        for (&old, &new) in carried.data().iter().zip(gt.labels().data()) {
            if old != 0 {
                renumber.entry(old).or_insert(new);
            }
        }
        let mut prompts: Vec<PromptPoint> = sample
            .entry
            .prompts
            .iter()
            .filter_map(|p| {
                let label = *renumber.get(&p.label)?;
                let q = t.map_point(p.point(), w, h);
                Some(PromptPoint { label, x: q.x, y: q.y })
            })
            .collect();
        prompts.sort_by_key(|p| p.label);

        let mut entry = sample.entry.clone();
        entry.id = format!("{}_{}", entry.id, t.name());
        entry.image_path = entry.image_path.as_deref().map(|p| with_suffix(p, t.name()));
        entry.gt_mask_path = with_suffix(&entry.gt_mask_path, t.name());
        entry.prompts = prompts;
        let provenance = entry.provenance.get_or_insert_with(|| Provenance {
            source_id: sample.entry.id.clone(),
            transform: Transform::Identity,
            crop: None,
        });
        provenance.transform = t;

        out.push(Sample {
            image: sample.image.transformed(t),
            gt,
            entry,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train_fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        Ok(Self {
            train_fraction,
            seed,
        })
    }

    /// `floor(train_fraction * n)`, tolerant of representation error such as `0.29 * 100`.
    pub fn train_count(&self, n: usize) -> usize {
        ((self.train_fraction * n as f64) + 1e-9).floor() as usize
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Seeded shuffle, then the first `floor(fraction * n)` entries go to training.
pub fn split_dataset<T: Clone>(entries: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>)> {
    SplitSpec::new(spec.train_fraction, spec.seed)?;
    if entries.is_empty() {
        return Err(Error::InvalidParameter("cannot split an empty dataset".into()));
    }
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_train = spec.train_count(entries.len());
    let pick = |idx: &[usize]| idx.iter().map(|&i| entries[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

/// Splits manifest entries and stamps each with its split.
pub fn split_entries(entries: &[SampleEntry], spec: &SplitSpec) -> Result<(Vec<SampleEntry>, Vec<SampleEntry>)> {
    let (mut train, mut val) = split_dataset(entries, spec)?;
    train.iter_mut().for_each(|e| e.split = Split::Train);
    val.iter_mut().for_each(|e| e.split = Split::Val);
    Ok((train, val))
}

/// One prompt per region: its centroid, or when the centroid's pixel lies
/// outside the region, the region pixel nearest to the centroid (ties broken
/// by raster order).
pub fn generate_prompts(gt: &LabeledMask) -> Vec<PromptPoint> {
    let regions = gt.region_pixels();
    regions
        .iter()
        .enumerate()
        .map(|(i, pixels)| {
            let label = i as u32 + 1;
            let c = centroid(gt, label).expect("label is in range");
            let raw = PromptPoint { label, x: c.x, y: c.y };
            if prompt_inside(gt, &raw) {
                return raw;
            }
            // region_pixels lists pixels in raster order; min_by keeps the first minimum.
            let &(nx, ny) = pixels
                .iter()
                .min_by(|a, b| {
                    let da = (a.0 as f64 - c.x).powi(2) + (a.1 as f64 - c.y).powi(2);
                    let db = (b.0 as f64 - c.x).powi(2) + (b.1 as f64 - c.y).powi(2);
                    da.total_cmp(&db)
                })
                .expect("regions are non-empty");
            PromptPoint {
                label,
                x: nx as f64,
                y: ny as f64,
            }
        })
        .collect()
}

/// True when the prompt's nearest pixel belongs to its region.
pub fn prompt_inside(gt: &LabeledMask, p: &PromptPoint) -> bool {
    let (x, y) = (p.x.round(), p.y.round());
    x >= 0.0 && y >= 0.0 && gt.get(x as usize, y as usize) == p.label
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareOptions {
    pub tile_w: usize,
    pub tile_h: usize,
    pub stride_w: usize,
    pub stride_h: usize,
    pub transforms: Vec<Transform>,
    pub connectivity: Connectivity,
    /// Skip crops whose ground truth is entirely background.
    pub drop_empty: bool,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            tile_w: 512,
            tile_h: 512,
            stride_w: 512,
            stride_h: 512,
            transforms: Transform::ALL.to_vec(),
            connectivity: Connectivity::Eight,
            drop_empty: false,
        }
    }
}

/// Crops one source image and mask, labels the crops, attaches prompts and
/// augments. Output paths are `images/<id>.png` and `masks/<id>.png`.
pub fn prepare_source(
    source_id: &str,
    image: &RgbImage,
    gt: &BinaryMask,
    options: &PrepareOptions,
) -> Result<Vec<Sample>> {
    image.check_same_dims(gt.grid())?;
    let image_crops = crop_grid(image, options.tile_w, options.tile_h, options.stride_w, options.stride_h)?;
    let mask_crops = crop_grid(gt.grid(), options.tile_w, options.tile_h, options.stride_w, options.stride_h)?;

    let mut out = Vec::new();
    for ((rect, img), (_, m)) in image_crops.into_iter().zip(mask_crops) {
        let labeled = connected_components(&BinaryMask::from_grid(m), options.connectivity);
        if options.drop_empty && labeled.region_count() == 0 {
            continue;
        }
        let id = format!("{source_id}_x{}_y{}", rect.x, rect.y);
        let entry = SampleEntry {
            id: id.clone(),
            image_path: Some(PathBuf::from(format!("images/{id}.png"))),
            gt_mask_path: PathBuf::from(format!("masks/{id}.png")),
            split: Split::Train,
            prompts: generate_prompts(&labeled),
            provenance: Some(Provenance {
                source_id: source_id.to_string(),
                transform: Transform::Identity,
                crop: Some(rect),
            }),
            predictions: Vec::new(),
        };
        let sample = Sample {
            image: img,
            gt: labeled,
            entry,
        };
        out.extend(augment_sample(&sample, &options.transforms)?);
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<SampleEntry>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: SampleEntry = serde_json::from_str(&line).map_err(|e| {
            Error::InvalidInput(format!("{}:{}: {e}", path.display(), n + 1))
        })?;
        out.push(entry);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[SampleEntry]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Checks ids are unique and every referenced file exists.
pub fn validate_manifest(entries: &[SampleEntry], base: &Path) -> Result<()> {
    let mut ids = std::collections::HashSet::new();
    for e in entries {
        if !ids.insert(e.id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate entry id {}", e.id)));
        }
        for f in e.referenced_files(base) {
            if !f.exists() {
                return Err(Error::io(
                    f,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file does not exist"),
                ));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(w: usize, h: usize) -> Grid<u32> {
        Grid::new(w, h, (0..(w * h) as u32).collect()).unwrap()
    }

    #[test]
    fn transforms_are_bijections_with_inverses() {
        let g = grid(3, 2);
        for t in Transform::ALL {
            assert_eq!(g.transformed(t).transformed(t.inverse()), g, "{t}");
        }
        assert_eq!(g.transformed(Transform::Hflip).transformed(Transform::Hflip), g);
        let mut r = g.clone();
        for _ in 0..4 {
            r = r.transformed(Transform::Rot90);
        }
        assert_eq!(r, g);
    }

    #[test]
    fn transform_index_remap() {
        let g = Grid::new(2, 1, vec!['a', 'b']).unwrap();
        assert_eq!(g.transformed(Transform::Hflip).data(), &['b', 'a']);
        // [0 1 2]      clockwise     [3 0]
        // [3 4 5]  -> rot90 gives    [4 1]
        //                            [5 2]
        let r = grid(3, 2).transformed(Transform::Rot90);
        assert_eq!(r.dims(), (2, 3));
        assert_eq!(r.data(), &[3, 0, 4, 1, 5, 2]);
        assert_eq!(grid(3, 2).transformed(Transform::Rot270).data(), &[2, 5, 1, 4, 0, 3]);
        assert_eq!(grid(3, 2).transformed(Transform::Vflip).data(), &[3, 4, 5, 0, 1, 2]);
    }

    #[test]
    fn map_pixel_agrees_with_grid_transform() {
        let g = grid(4, 3);
        for t in Transform::ALL {
            let out = g.transformed(t);
            for y in 0..3 {
                for x in 0..4 {
                    let (nx, ny) = t.map_pixel(x, y, 4, 3);
                    assert_eq!(out.get(nx, ny), g.get(x, y));
                    let p = t.map_point(Point::new(x as f64, y as f64), 4, 3);
                    assert_eq!((p.x, p.y), (nx as f64, ny as f64));
                }
            }
        }
    }

    #[test]
    fn crop_counts() {
        assert_eq!(crop_grid(&grid(5, 4), 5, 4, 1, 1).unwrap().len(), 1);
        let g = Grid::filled(100, 100, 0u8).unwrap();
        assert_eq!(crop_grid(&g, 50, 50, 50, 50).unwrap().len(), 4);
        let g = Grid::filled(90, 50, 0u8).unwrap();
        let crops = crop_grid(&g, 50, 50, 50, 50).unwrap();
        assert_eq!(crops.len(), 2);
        assert_eq!(crops[1].0.x, 40);
        assert!(crop_grid(&g, 91, 10, 10, 10).is_err());
        assert!(crop_grid(&g, 10, 10, 0, 10).is_err());
    }

    #[test]
    fn crop_contents() {
        let crops = crop_grid(&grid(4, 4), 2, 2, 2, 2).unwrap();
        assert_eq!(crops[3].1.data(), &[10, 11, 14, 15]);
        assert_eq!(crops[1].0, CropRect { x: 2, y: 0, width: 2, height: 2 });
    }

    fn sample_from(rows: &[&str]) -> Sample {
        let (w, h) = (rows[0].len(), rows.len());
        let m = BinaryMask::new(w, h, rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect()).unwrap();
        let gt = connected_components(&m, Connectivity::Eight);
        let mut entry = SampleEntry::new("s", "masks/s.png");
        entry.image_path = Some("images/s.png".into());
        entry.prompts = generate_prompts(&gt);
        Sample {
            image: Grid::filled(w, h, [1, 2, 3]).unwrap(),
            gt,
            entry,
        }
    }

    #[test]
    fn augment_default_set_and_identity() {
        let s = sample_from(&["##..", "##.#", "...#"]);
        let out = augment_sample(&s, &Transform::ALL).unwrap();
        assert_eq!(out.len(), 6);
        assert_eq!(out[0], s);
        assert_eq!(augment_sample(&s, &[Transform::Identity]).unwrap(), vec![s.clone()]);
        assert!(augment_sample(&s, &[]).is_err());
        assert_eq!(out[1].entry.gt_mask_path, PathBuf::from("masks/s_rot90.png"));
        assert_eq!(out[1].entry.provenance.as_ref().unwrap().transform, Transform::Rot90);
        assert!(augment_sample(&out[1], &[Transform::Hflip]).is_err());
    }

    #[test]
    fn augmented_labels_are_canonical_and_prompts_follow() {
        let s = sample_from(&["##...", "##..#", "....#"]);
        for t in Transform::ALL {
            let a = &augment_sample(&s, &[t]).unwrap()[0];
            let relabeled = connected_components(&a.gt.to_binary(), Connectivity::Eight);
            assert_eq!(relabeled, a.gt);
            assert_eq!(a.entry.prompts.len(), a.gt.region_count());
            for p in &a.entry.prompts {
                assert!(prompt_inside(&a.gt, p));
                let c = centroid(&a.gt, p.label).unwrap();
                assert!((c.x - p.x).abs() < 1e-12 && (c.y - p.y).abs() < 1e-12, "{t}");
            }
        }
    }

    #[test]
    fn centroid_commutes_with_rot180() {
        let s = sample_from(&["###..", "#....", "....."]);
        let c = centroid(&s.gt, 1).unwrap();
        let rotated = s.gt.transformed(Transform::Rot180);
        let rc = centroid(&rotated, 1).unwrap();
        let expected = Transform::Rot180.map_point(c, 5, 3);
        assert!((rc.x - expected.x).abs() < 1e-12 && (rc.y - expected.y).abs() < 1e-12);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let entries: Vec<usize> = (0..984).collect();
        let spec = SplitSpec::new(0.8, 42).unwrap();
        let (train, val) = split_dataset(&entries, &spec).unwrap();
        assert_eq!((train.len(), val.len()), (787, 197));
        assert_eq!(split_dataset(&entries, &spec).unwrap(), (train.clone(), val.clone()));
        let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
        all.sort();
        assert_eq!(all, entries);

        let ten: Vec<usize> = (0..10).collect();
        let (t, v) = split_dataset(&ten, &SplitSpec::default()).unwrap();
        assert_eq!((t.len(), v.len()), (8, 2));
        assert_eq!(SplitSpec::new(0.29, 0).unwrap().train_count(100), 29);
        assert!(split_dataset::<usize>(&[], &spec).is_err());
        assert!(SplitSpec::new(1.0, 0).is_err());
    }

    #[test]
    fn prompts_for_simple_regions() {
        let s = sample_from(&["###....", "###..##", "###..##"]);
        assert_eq!(
            s.entry.prompts,
            vec![
                PromptPoint { label: 1, x: 1.0, y: 1.0 },
                PromptPoint { label: 2, x: 5.5, y: 1.5 },
            ]
        );
    }

    /// Brute-force nearest region pixel to a point, scanning the whole mask.
    fn nearest_oracle(gt: &LabeledMask, label: u32, c: Point) -> (usize, usize) {
        let mut best = None;
        for y in 0..gt.height() {
            for x in 0..gt.width() {
                if gt.get(x, y) != label {
                    continue;
                }
                let d = (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2);
                match best {
                    Some((bd, _)) if bd <= d => {}
                    _ => best = Some((d, (x, y))),
                }
            }
        }
        best.unwrap().1
    }

    #[test]
    fn u_shape_prompt_is_snapped_inside() {
        let s = sample_from(&["#...#", "#...#", "#####"]);
        let c = centroid(&s.gt, 1).unwrap();
        assert_eq!(s.gt.get(c.x.round() as usize, c.y.round() as usize), 0);
        let p = s.entry.prompts[0];
        let (ox, oy) = nearest_oracle(&s.gt, 1, c);
        assert_eq!((p.x, p.y), (ox as f64, oy as f64));
        assert!(prompt_inside(&s.gt, &p));
    }

    #[test]
    fn prepare_one_source() {
        let image = Grid::filled(8, 8, [9u8, 9, 9]).unwrap();
        let mut m = BinaryMask::empty(8, 8).unwrap();
        for (x, y) in [(1, 1), (5, 1), (1, 5), (6, 6)] {
            m.grid_mut().set(x, y, true);
        }
        let opts = PrepareOptions { tile_w: 4, tile_h: 4, stride_w: 4, stride_h: 4, ..Default::default() };
        let samples = prepare_source("src", &image, &m, &opts).unwrap();
        assert_eq!(samples.len(), 24);
        assert_eq!(samples[0].entry.id, "src_x0_y0");
        assert_eq!(samples[1].entry.id, "src_x0_y0_rot90");
        assert!(samples.iter().all(|s| s.entry.prompts.len() == 1));

        m.grid_mut().set(6, 6, false);
        let opts = PrepareOptions { drop_empty: true, ..opts };
        assert_eq!(prepare_source("src", &image, &m, &opts).unwrap().len(), 18);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = sample_from(&["##.", "..#"]);
        let mut e = s.entry.clone();
        e.predictions.push(MethodPrediction { method: "ft".into(), path: "pred/s.png".into() });
        let path = dir.path().join("m.jsonl");
        write_manifest(&path, &[e.clone(), s.entry.clone()]).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), vec![e.clone(), s.entry]);
        assert!(validate_manifest(&[e], dir.path()).unwrap_err().is_missing_file());
    }
}
