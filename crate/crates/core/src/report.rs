//! Tables, method comparisons and four-color overlays.
//!
//! All values are kept at full precision until formatting. Percentages are
//! rounded to integers and Cnt to two decimals, half away from zero, after
//! averaging.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::dataset::RgbImage;
use crate::error::{Error, Result};
use crate::mask::{BinaryMask, Grid};
use crate::pixel_metrics::{average_metrics, PixelMetrics};
use crate::tile_metrics::TileMetrics;

pub const WHITE: [u8; 3] = [255, 255, 255];
pub const GREEN: [u8; 3] = [0, 255, 0];
pub const RED: [u8; 3] = [255, 0, 0];
pub const BLUE: [u8; 3] = [0, 0, 255];
pub const BLACK: [u8; 3] = [0, 0, 0];
pub const DIM_RED: [u8; 3] = [128, 0, 0];
pub const DIM_GREEN: [u8; 3] = [0, 128, 0];
pub const GRAY: [u8; 3] = [128, 128, 128];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub image_id: String,
    pub pixel: PixelMetrics,
    pub tile: TileMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableStyle {
    Pixel,
    Tile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
}

struct Column {
    header: &'static str,
    decimals: i32,
    lower_is_better: bool,
}

const PIXEL_COLUMNS: [Column; 4] = [
    Column { header: "IoU", decimals: 0, lower_is_better: false },
    Column { header: "Dice", decimals: 0, lower_is_better: false },
    Column { header: "Accuracy", decimals: 0, lower_is_better: false },
    Column { header: "Recall", decimals: 0, lower_is_better: false },
];

const TILE_COLUMNS: [Column; 4] = [
    Column { header: "Cnt", decimals: 2, lower_is_better: true },
    Column { header: "Prec", decimals: 0, lower_is_better: false },
    Column { header: "Rec", decimals: 0, lower_is_better: false },
    Column { header: "Fm", decimals: 0, lower_is_better: false },
];

fn columns(style: TableStyle) -> &'static [Column; 4] {
    match style {
        TableStyle::Pixel => &PIXEL_COLUMNS,
        TableStyle::Tile => &TILE_COLUMNS,
    }
}

/// Display-scale values (percentages, raw Cnt) before rounding.
fn display_values(pixel: &PixelMetrics, tile: &TileMetrics, style: TableStyle) -> [f64; 4] {
    match style {
        TableStyle::Pixel => [
            100.0 * pixel.iou,
            100.0 * pixel.dice,
            100.0 * pixel.accuracy,
            100.0 * pixel.recall,
        ],
        TableStyle::Tile => [
            tile.count_error,
            100.0 * tile.precision,
            100.0 * tile.recall,
            100.0 * tile.f_measure,
        ],
    }
}

/// Rounds half away from zero. Representation noise below 1e-9 of the last
/// kept digit is removed first, so 82.49999999999999 still rounds to 83.
pub fn round_half_away(value: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    let scaled = value * scale;
    let snapped = (scaled * 1e9).round() / 1e9;
    snapped.round() / scale
}

/// Unweighted mean of tile summaries in record order. Counts are averaged too.
pub fn average_tile_metrics(records: &[TileMetrics]) -> Result<TileMetrics> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("cannot average an empty list of metrics".into()));
    }
    let n = records.len() as f64;
    let mean = |f: fn(&TileMetrics) -> f64| {
        if records.iter().all(|r| f(r) == f(&records[0])) {
            f(&records[0])
        } else {
            records.iter().map(f).sum::<f64>() / n
        }
    };
    let mut avg = TileMetrics::from_summary(
        mean(|t| t.count_error),
        mean(|t| t.precision),
        mean(|t| t.recall),
        mean(|t| t.f_measure),
    );
    avg.n_gt = (records.iter().map(|t| t.n_gt).sum::<usize>() as f64 / n).round() as usize;
    avg.n_pred = (records.iter().map(|t| t.n_pred).sum::<usize>() as f64 / n).round() as usize;
    Ok(avg)
}

/// Average row over `records`, labelled "Average".
pub fn average_record(records: &[EvaluationRecord]) -> Result<EvaluationRecord> {
    let pixels: Vec<PixelMetrics> = records.iter().map(|r| r.pixel).collect();
    let tiles: Vec<TileMetrics> = records.iter().map(|r| r.tile.clone()).collect();
    Ok(EvaluationRecord {
        image_id: "Average".into(),
        pixel: average_metrics(&pixels)?,
        tile: average_tile_metrics(&tiles)?,
    })
}

/// One table row as it will be printed: label plus rounded values.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub values: [f64; 4],
}

fn rounded(values: [f64; 4], style: TableStyle) -> [f64; 4] {
    let cols = columns(style);
    let mut out = values;
    for (v, c) in out.iter_mut().zip(cols) {
        *v = round_half_away(*v, c.decimals);
    }
    out
}

/// Per-image rows followed by the average row, rounded for display.
pub fn table_rows(records: &[EvaluationRecord], style: TableStyle) -> Result<Vec<TableRow>> {
    check_unique_ids(records)?;
    let avg = average_record(records)?;
    Ok(records
        .iter()
        .chain(std::iter::once(&avg))
        .map(|r| TableRow {
            label: r.image_id.clone(),
            values: rounded(display_values(&r.pixel, &r.tile, style), style),
        })
        .collect())
}

fn check_unique_ids(records: &[EvaluationRecord]) -> Result<()> {
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.image_id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate image_id {}", r.image_id)));
        }
    }
    Ok(())
}

fn format_value(v: f64, decimals: i32) -> String {
    format!("{:.*}", decimals as usize, v)
}

fn to_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn markdown(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&format!("| {} |\n", header.join(" | ")));
    let rule: Vec<&str> = header.iter().enumerate().map(|(i, _)| if i == 0 { "---" } else { "---:" }).collect();
    out.push_str(&format!("| {} |\n", rule.join(" | ")));
    for row in rows {
        out.push_str(&format!("| {} |\n", row.join(" | ")));
    }
    out
}

/// Per-image rows plus an Average row in Markdown or CSV.
pub fn emit_table(records: &[EvaluationRecord], style: TableStyle, format: TableFormat) -> Result<String> {
    let rows = table_rows(records, style)?;
    let cols = columns(style);
    let mut header = vec!["Image"];
    header.extend(cols.iter().map(|c| c.header));
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.label.clone()];
            row.extend(r.values.iter().zip(cols).map(|(&v, c)| format_value(v, c.decimals)));
            row
        })
        .collect();
    match format {
        TableFormat::Markdown => Ok(markdown(&header, &cells)),
        TableFormat::Csv => to_csv(&header, &cells),
    }
}

/// Machine-readable per-image CSV at full precision (six decimals).
pub fn metrics_csv(records: &[EvaluationRecord], style: TableStyle) -> Result<String> {
    let f = |v: f64| format!("{v:.6}");
    match style {
        TableStyle::Pixel => {
            let rows: Vec<Vec<String>> = records
                .iter()
                .map(|r| {
                    vec![
                        r.image_id.clone(),
                        f(r.pixel.iou),
                        f(r.pixel.dice),
                        f(r.pixel.accuracy),
                        f(r.pixel.recall),
                    ]
                })
                .collect();
            to_csv(&["image_id", "iou", "dice", "accuracy", "recall"], &rows)
        }
        TableStyle::Tile => {
            let rows: Vec<Vec<String>> = records
                .iter()
                .map(|r| {
                    vec![
                        r.image_id.clone(),
                        r.tile.n_gt.to_string(),
                        r.tile.n_pred.to_string(),
                        f(r.tile.count_error),
                        f(r.tile.precision),
                        f(r.tile.recall),
                        f(r.tile.f_measure),
                    ]
                })
                .collect();
            to_csv(&["image_id", "n_gt", "n_pred", "cnt", "prec", "rec", "fm"], &rows)
        }
    }
}

/// Results of several methods over the same images.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    methods: Vec<(String, Vec<EvaluationRecord>)>,
    averages: Vec<EvaluationRecord>,
}

impl ComparisonReport {
    pub fn new(methods: Vec<(String, Vec<EvaluationRecord>)>) -> Result<Self> {
        if methods.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "a comparison needs at least two methods, got {}",
                methods.len()
            )));
        }
        let ids = |recs: &[EvaluationRecord]| recs.iter().map(|r| r.image_id.clone()).collect::<HashSet<_>>();
        let reference = ids(&methods[0].1);
        for (name, records) in &methods {
            check_unique_ids(records)?;
            if ids(records) != reference {
                return Err(Error::InvalidInput(format!(
                    "method {name} covers a different set of images than {}",
                    methods[0].0
                )));
            }
        }
        let averages = methods
            .iter()
            .map(|(_, r)| average_record(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { methods, averages })
    }

    pub fn methods(&self) -> &[(String, Vec<EvaluationRecord>)] {
        &self.methods
    }

    /// Mean row per method, in method order.
    pub fn averages(&self) -> &[EvaluationRecord] {
        &self.averages
    }

    /// For each method, whether it is best (or tied for best) on each column.
    /// Decided on unrounded averages with a 1e-12 tie tolerance.
    pub fn best_flags(&self, style: TableStyle) -> Vec<[bool; 4]> {
        let cols = columns(style);
        let values: Vec<[f64; 4]> = self
            .averages
            .iter()
            .map(|a| display_values(&a.pixel, &a.tile, style))
            .collect();
        let mut flags = vec![[false; 4]; values.len()];
        for (k, col) in cols.iter().enumerate() {
            let best = values
                .iter()
                .map(|v| v[k])
                .fold(None, |acc: Option<f64>, v| match acc {
                    None => Some(v),
                    Some(b) if col.lower_is_better => Some(b.min(v)),
                    Some(b) => Some(b.max(v)),
                })
                .expect("at least two methods");
            for (m, v) in values.iter().enumerate() {
                flags[m][k] = (v[k] - best).abs() <= 1e-12;
            }
        }
        flags
    }

    fn record(&self, method: usize, image_id: &str) -> &EvaluationRecord {
        self.methods[method]
            .1
            .iter()
            .find(|r| r.image_id == image_id)
            .expect("image sets were validated")
    }
}

/// Per-image blocks (one row per method), then per-method averages with the
/// best value in each column marked. Markdown marks with bold; CSV adds a
/// `best` column listing the winning metrics.
pub fn compare_methods(report: &ComparisonReport, style: TableStyle, format: TableFormat) -> Result<String> {
    let cols = columns(style);
    let mut header = vec!["Image", "Method"];
    header.extend(cols.iter().map(|c| c.header));
    if format == TableFormat::Csv {
        header.push("best");
    }
    let fmt = |v: [f64; 4]| -> Vec<String> {
        rounded(v, style)
            .iter()
            .zip(cols)
            .map(|(&x, c)| format_value(x, c.decimals))
            .collect()
    };

    let mut rows = Vec::new();
    for image in &report.methods[0].1 {
        for (m, (name, _)) in report.methods.iter().enumerate() {
            let r = report.record(m, &image.image_id);
            let mut row = vec![image.image_id.clone(), name.clone()];
            row.extend(fmt(display_values(&r.pixel, &r.tile, style)));
            if format == TableFormat::Csv {
                row.push(String::new());
            }
            rows.push(row);
        }
    }
    let flags = report.best_flags(style);
    for (m, (name, _)) in report.methods.iter().enumerate() {
        let avg = &report.averages[m];
        let mut row = vec!["Avg".to_string(), name.clone()];
        let cells = fmt(display_values(&avg.pixel, &avg.tile, style));
        match format {
            TableFormat::Markdown => {
                row.extend(cells.into_iter().zip(flags[m]).map(|(c, best)| if best { format!("**{c}**") } else { c }));
            }
            TableFormat::Csv => {
                row.extend(cells);
                let best: Vec<&str> = cols
                    .iter()
                    .zip(flags[m])
                    .filter(|(_, b)| *b)
                    .map(|(c, _)| c.header)
                    .collect();
                row.push(best.join(";"));
            }
        }
        rows.push(row);
    }
    match format {
        TableFormat::Markdown => Ok(markdown(&header, &rows)),
        TableFormat::Csv => to_csv(&header, &rows),
    }
}

/// Legend class of one overlay pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OverlayClass {
    /// Ground-truth pixel covered by both predictions.
    Both,
    /// Covered only by prediction B.
    OnlyB,
    /// Covered only by prediction A.
    OnlyA,
    /// Ground-truth pixel neither prediction covers.
    Neither,
    Background,
}

impl OverlayClass {
    pub fn color(self) -> [u8; 3] {
        match self {
            OverlayClass::Both => WHITE,
            OverlayClass::OnlyB => GREEN,
            OverlayClass::OnlyA => RED,
            OverlayClass::Neither => BLUE,
            OverlayClass::Background => BLACK,
        }
    }
}

pub fn classify_pixel(gt: bool, a: bool, b: bool) -> OverlayClass {
    match (gt, a, b) {
        (false, _, _) => OverlayClass::Background,
        (true, true, true) => OverlayClass::Both,
        (true, false, true) => OverlayClass::OnlyB,
        (true, true, false) => OverlayClass::OnlyA,
        (true, false, false) => OverlayClass::Neither,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OverlayOptions {
    /// Tint background pixels that a prediction marks as foreground: dim red
    /// for A only, dim green for B only, gray for both.
    pub show_false_positives: bool,
}

/// Four-color comparison of prediction A (baseline) and B against the ground truth.
pub fn overlay(gt: &BinaryMask, pred_a: &BinaryMask, pred_b: &BinaryMask) -> Result<RgbImage> {
    overlay_with(gt, pred_a, pred_b, OverlayOptions::default())
}

pub fn overlay_with(
    gt: &BinaryMask,
    pred_a: &BinaryMask,
    pred_b: &BinaryMask,
    options: OverlayOptions,
) -> Result<RgbImage> {
    gt.grid().check_same_dims(pred_a.grid())?;
    gt.grid().check_same_dims(pred_b.grid())?;
    let (w, h) = gt.dims();
    let out = Grid::from_fn(w, h, |x, y| {
        let (g, a, b) = (gt.get(x, y), pred_a.get(x, y), pred_b.get(x, y));
        if !g && options.show_false_positives {
            match (a, b) {
                (true, true) => return GRAY,
                (true, false) => return DIM_RED,
                (false, true) => return DIM_GREEN,
                (false, false) => {}
            }
        }
        classify_pixel(g, a, b).color()
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tile_record(id: &str, cnt: f64, prec: f64, rec: f64, fm: f64) -> EvaluationRecord {
        EvaluationRecord {
            image_id: id.into(),
            pixel: PixelMetrics::default(),
            tile: TileMetrics::from_summary(cnt, prec / 100.0, rec / 100.0, fm / 100.0),
        }
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(round_half_away(82.5, 0), 83.0);
        assert_eq!(round_half_away(0.5 * (0.78 + 0.87) * 100.0, 0), 83.0);
        assert_eq!(round_half_away(-2.5, 0), -3.0);
        assert_eq!(round_half_away(0.125, 2), 0.13);
        assert_eq!(round_half_away(1.0771428, 2), 1.08);
        assert_eq!(round_half_away(0.02, 2), 0.02);
    }

    #[test]
    fn two_image_average_rounds_up() {
        let recs = [tile_record("7", 0.01, 76.0, 81.0, 78.0), tile_record("11", 0.03, 89.0, 86.0, 87.0)];
        let rows = table_rows(&recs, TableStyle::Tile).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].label, "Average");
        assert_eq!(rows[2].values[0], 0.02);
        assert_eq!(rows[2].values[3], 83.0);
    }

    #[test]
    fn single_record_average_equals_record() {
        let recs = [tile_record("a", 0.37, 61.0, 72.0, 66.0)];
        let avg = average_record(&recs).unwrap();
        assert_eq!(avg.tile.count_error, recs[0].tile.count_error);
        assert_eq!(avg.tile.f_measure, recs[0].tile.f_measure);
        let rows = table_rows(&recs, TableStyle::Tile).unwrap();
        assert_eq!(rows[0].values, rows[1].values);
    }

    #[test]
    fn markdown_and_csv_layout() {
        let recs = [tile_record("7", 0.01, 76.0, 81.0, 78.0), tile_record("11", 0.03, 89.0, 86.0, 87.0)];
        let md = emit_table(&recs, TableStyle::Tile, TableFormat::Markdown).unwrap();
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines[0], "| Image | Cnt | Prec | Rec | Fm |");
        assert_eq!(lines[2], "| 7 | 0.01 | 76 | 81 | 78 |");
        assert_eq!(lines[4], "| Average | 0.02 | 83 | 84 | 83 |");
        let csv = emit_table(&recs, TableStyle::Tile, TableFormat::Csv).unwrap();
        assert_eq!(csv.lines().last(), Some("Average,0.02,83,84,83"));
        assert!(emit_table(&[], TableStyle::Pixel, TableFormat::Csv).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let recs = [tile_record("a", 0.0, 1.0, 1.0, 1.0), tile_record("a", 0.0, 1.0, 1.0, 1.0)];
        assert!(emit_table(&recs, TableStyle::Tile, TableFormat::Csv).is_err());
    }

    #[test]
    fn metrics_csv_has_six_decimals() {
        let mut r = tile_record("img", 0.125, 87.5, 87.5, 87.5);
        r.pixel = PixelMetrics { iou: 1.0, dice: 1.0, accuracy: 1.0, recall: 1.0 };
        let csv = metrics_csv(&[r.clone()], TableStyle::Pixel).unwrap();
        assert_eq!(csv, "image_id,iou,dice,accuracy,recall\nimg,1.000000,1.000000,1.000000,1.000000\n");
        let csv = metrics_csv(&[r], TableStyle::Tile).unwrap();
        assert_eq!(csv.lines().nth(1), Some("img,0,0,0.125000,0.875000,0.875000,0.875000"));
    }

    #[test]
    fn identical_methods_tie() {
        let recs = vec![tile_record("1", 0.1, 70.0, 80.0, 75.0)];
        let report = ComparisonReport::new(vec![("a".into(), recs.clone()), ("b".into(), recs)]).unwrap();
        assert_eq!(report.best_flags(TableStyle::Tile), vec![[true; 4]; 2]);
        assert_eq!(report.averages()[0].tile.f_measure, 0.75);
    }

    #[test]
    fn comparison_validates_inputs() {
        let a = vec![tile_record("1", 0.1, 70.0, 80.0, 75.0)];
        let b = vec![tile_record("2", 0.1, 70.0, 80.0, 75.0)];
        assert!(matches!(
            ComparisonReport::new(vec![("a".into(), a.clone()), ("b".into(), b)]),
            Err(Error::InvalidInput(_))
        ));
        assert!(ComparisonReport::new(vec![("a".into(), a)]).is_err());
    }

    #[test]
    fn comparison_marks_best_in_markdown() {
        let a = vec![tile_record("1", 0.5, 70.0, 80.0, 75.0)];
        let b = vec![tile_record("1", 0.2, 60.0, 80.0, 69.0)];
        let report = ComparisonReport::new(vec![("a".into(), a), ("b".into(), b)]).unwrap();
        let md = compare_methods(&report, TableStyle::Tile, TableFormat::Markdown).unwrap();
        assert!(md.contains("| Avg | a | 0.50 | **70** | **80** | **75** |"));
        assert!(md.contains("| Avg | b | **0.20** | 60 | **80** | 69 |"));
        let csv = compare_methods(&report, TableStyle::Tile, TableFormat::Csv).unwrap();
        assert!(csv.contains("Avg,b,0.20,60,80,69,Cnt;Rec"));
    }

    #[test]
    fn overlay_legend() {
        let m = |v: &[u8]| BinaryMask::new(5, 1, v.iter().map(|&b| b != 0).collect()).unwrap();
        let gt = m(&[1, 1, 1, 1, 0]);
        let a = m(&[1, 0, 1, 0, 1]);
        let b = m(&[1, 1, 0, 0, 1]);
        let img = overlay(&gt, &a, &b).unwrap();
        assert_eq!(img.data(), &[WHITE, GREEN, RED, BLUE, BLACK]);
        let fp = overlay_with(&gt, &a, &b, OverlayOptions { show_false_positives: true }).unwrap();
        assert_eq!(fp.data()[4], GRAY);
        assert!(overlay(&gt, &a, &BinaryMask::empty(1, 5).unwrap()).is_err());
    }
}
