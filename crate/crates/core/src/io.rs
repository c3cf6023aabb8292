//! Raster file formats.
//!
//! * Binary masks: 8-bit grayscale PNG, foreground where the value is >= 128;
//!   written as 0/255.
//! * Labeled masks: 16-bit grayscale PNG, pixel value = label.
//! * Images and overlays: 8-bit RGB PNG.
//! * Soft masks: `SOFTMSK1` magic, width and height as little-endian `u32`,
//!   then `width * height` little-endian `f32` values in row-major order.

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use crate::dataset::RgbImage;
use crate::error::{Error, Result};
use crate::mask::{BinaryMask, Grid, LabeledMask, SoftMask};
use crate::tile_metrics::GroundTruth;

pub const SOFT_MAGIC: &[u8; 8] = b"SOFTMSK1";
const SOFT_HEADER_LEN: usize = 16;

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(image_err(path))
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image {
            path: path.to_path_buf(),
            source,
        },
    }
}

fn dims_u32(path: &Path, w: usize, h: usize) -> Result<(u32, u32)> {
    match (u32::try_from(w), u32::try_from(h)) {
        (Ok(w), Ok(h)) => Ok((w, h)),
        _ => Err(Error::Raster {
            path: path.to_path_buf(),
            reason: format!("{w}x{h} exceeds the format limits"),
        }),
    }
}

pub fn read_binary_mask(path: &Path) -> Result<BinaryMask> {
    let img = open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| v >= 128).collect();
    BinaryMask::new(w as usize, h as usize, data)
}

pub fn write_binary_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let (w, h) = dims_u32(path, mask.width(), mask.height())?;
    let raw = mask.data().iter().map(|&b| if b { 255u8 } else { 0 }).collect();
    let img: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(w, h, raw).expect("buffer size matches");
    img.save_with_format(path, ImageFormat::Png).map_err(image_err(path))
}

/// Reads a 16-bit label PNG. Labels must run 1..=n without gaps.
pub fn read_labeled_mask(path: &Path) -> Result<LabeledMask> {
    let img = open(path)?.into_luma16();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(u32::from).collect();
    LabeledMask::new(Grid::new(w as usize, h as usize, data)?).map_err(|e| Error::Raster {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_labeled_mask(path: &Path, mask: &LabeledMask) -> Result<()> {
    if mask.region_count() > u16::MAX as usize {
        return Err(Error::InvalidParameter(format!(
            "{} regions do not fit a 16-bit label image",
            mask.region_count()
        )));
    }
    let (w, h) = dims_u32(path, mask.width(), mask.height())?;
    let raw = mask.labels().data().iter().map(|&l| l as u16).collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(w, h, raw).expect("buffer size matches");
    img.save_with_format(path, ImageFormat::Png).map_err(image_err(path))
}

/// A 16-bit grayscale PNG is read as labeled tiles, anything else as a
/// binary mask.
pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let img = open(path)?;
    match img {
        DynamicImage::ImageLuma16(_) => {
            drop(img);
            read_labeled_mask(path).map(GroundTruth::Labeled)
        }
        img => {
            let img = img.into_luma8();
            let (w, h) = img.dimensions();
            let data = img.into_raw().into_iter().map(|v| v >= 128).collect();
            BinaryMask::new(w as usize, h as usize, data).map(GroundTruth::Binary)
        }
    }
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = open(path)?.into_rgb8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0).collect();
    Grid::new(w as usize, h as usize, data)
}

pub fn write_rgb(path: &Path, image: &RgbImage) -> Result<()> {
    let (w, h) = dims_u32(path, image.width(), image.height())?;
    let raw: Vec<u8> = image.data().iter().flatten().copied().collect();
    let img: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(w, h, raw).expect("buffer size matches");
    img.save_with_format(path, ImageFormat::Png).map_err(image_err(path))
}

pub fn read_soft_mask(path: &Path) -> Result<SoftMask> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let malformed = |reason: String| Error::Raster {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < SOFT_HEADER_LEN || &bytes[..8] != SOFT_MAGIC {
        return Err(malformed("missing SOFTMSK1 header".into()));
    }
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[SOFT_HEADER_LEN..];
    let expected = w.checked_mul(h).and_then(|n| n.checked_mul(4));
    if expected != Some(body.len()) {
        return Err(malformed(format!(
            "{w}x{h} header does not match {} payload bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    SoftMask::new(w, h, data).map_err(|e| malformed(e.to_string()))
}

/// Values are stored as `f32`, so they round-trip only to single precision.
pub fn write_soft_mask(path: &Path, mask: &SoftMask) -> Result<()> {
    let (w, h) = mask.dims();
    let (w32, h32) = dims_u32(path, w, h)?;
    let mut bytes = Vec::with_capacity(SOFT_HEADER_LEN + 4 * w * h);
    bytes.extend_from_slice(SOFT_MAGIC);
    bytes.extend_from_slice(&w32.to_le_bytes());
    bytes.extend_from_slice(&h32.to_le_bytes());
    for &v in mask.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let m = BinaryMask::new(3, 2, vec![true, false, true, false, false, true]).unwrap();
        write_binary_mask(&p, &m).unwrap();
        assert_eq!(read_binary_mask(&p).unwrap(), m);
        assert!(matches!(read_ground_truth(&p).unwrap(), GroundTruth::Binary(b) if b == m));
    }

    #[test]
    fn gray_threshold_is_128() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        let img: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(4, 1, vec![0, 127, 128, 255]).unwrap();
        img.save(&p).unwrap();
        assert_eq!(read_binary_mask(&p).unwrap().data(), &[false, false, true, true]);
    }

    #[test]
    fn labeled_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.png");
        let m = LabeledMask::new(Grid::new(3, 1, vec![1, 0, 300]).unwrap());
        assert!(m.is_err());
        let m = LabeledMask::compact(&Grid::new(4, 1, vec![1, 0, 300, 300]).unwrap());
        write_labeled_mask(&p, &m).unwrap();
        assert_eq!(read_labeled_mask(&p).unwrap(), m);
        assert!(matches!(read_ground_truth(&p).unwrap(), GroundTruth::Labeled(l) if l == m));
    }

    #[test]
    fn wide_labels_survive_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("wide.png");
        let n = 600;
        let labels = Grid::new(2 * n, 1, (0..2 * n as u32).map(|i| if i % 2 == 0 { i / 2 + 1 } else { 0 }).collect()).unwrap();
        let m = LabeledMask::new(labels).unwrap();
        write_labeled_mask(&p, &m).unwrap();
        assert_eq!(read_labeled_mask(&p).unwrap().region_count(), n);
    }

    #[test]
    fn rgb_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        let img = Grid::new(2, 1, vec![[1, 2, 3], [250, 128, 0]]).unwrap();
        write_rgb(&p, &img).unwrap();
        assert_eq!(read_rgb(&p).unwrap(), img);
    }

    #[test]
    fn soft_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        let m = SoftMask::new(2, 2, vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        write_soft_mask(&p, &m).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 16 + 16);
        assert_eq!(&bytes[..8], b"SOFTMSK1");
        assert_eq!(read_soft_mask(&p).unwrap(), m);

        fs::write(&p, &bytes[..20]).unwrap();
        assert!(matches!(read_soft_mask(&p), Err(Error::Raster { .. })));
        let mut bad = bytes.clone();
        bad[16..20].copy_from_slice(&2.0f32.to_le_bytes());
        fs::write(&p, &bad).unwrap();
        assert!(read_soft_mask(&p).is_err());
    }

    #[test]
    fn missing_file_is_reported() {
        let e = read_binary_mask(Path::new("/nonexistent/mask.png")).unwrap_err();
        assert!(e.is_missing_file());
        assert_eq!(e.path(), Some(Path::new("/nonexistent/mask.png")));
    }
}
