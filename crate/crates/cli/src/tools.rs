use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use tessera::dataset::{read_manifest, write_manifest, MethodPrediction, SampleEntry};
use tessera::io::{read_binary_mask, read_ground_truth, read_soft_mask, write_binary_mask, write_labeled_mask, write_rgb};
use tessera::losses::{total_loss, LossWeights, PredictionOutput};
use tessera::report::{overlay_with, OverlayOptions};
use tessera::schedule::{enumerate_grid, schedule_table, GridSpec, ScheduleConfig};
use tessera::synth::{expected_counts, generate_mosaic, perturb, MosaicSpec, PerturbationSpec, Sidecar};
use tessera::BinaryMask;

use crate::config::RunConfig;
use crate::CliError;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(path, tessera::Error::Io { path: path.into(), source: e }))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_mask(path: &Path) -> Result<BinaryMask> {
    read_binary_mask(path).map_err(|e| CliError::input(path, e))
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 4)]
    pub rows: usize,
    #[arg(long, default_value_t = 4)]
    pub cols: usize,
    /// Minimum background gap between tiles, in pixels.
    #[arg(long, default_value_t = 2)]
    pub grout: usize,
    /// Maximum inward displacement of each tile corner, in pixels.
    #[arg(long, default_value_t = 0)]
    pub jitter: usize,
    /// Tiles removed from the prediction.
    #[arg(long, default_value_t = 0)]
    pub drop: usize,
    /// Pairs of tiles bridged into one region in the prediction.
    #[arg(long, default_value_t = 0)]
    pub merge: usize,
    #[arg(long, default_value_t = 0)]
    pub dilate: usize,
    #[arg(long, default_value_t = 0)]
    pub erode: usize,
    /// Isolated single-pixel false positives added to the prediction.
    #[arg(long, default_value_t = 0)]
    pub speckles: usize,
}

/// Writes image.png, gt_labels.png (16-bit), gt.png, pred.png, synth.json and
/// a one-entry manifest.jsonl pointing at them.
pub fn synth(config: &RunConfig, args: &SynthArgs) -> Result<()> {
    let mosaic = MosaicSpec {
        width: args.width,
        height: args.height,
        tile_rows: args.rows,
        tile_cols: args.cols,
        grout_px: args.grout,
        jitter_px: args.jitter,
        seed: config.seed,
    };
    let perturbation = PerturbationSpec {
        drop_tiles: args.drop,
        merge_pairs: args.merge,
        dilate_px: args.dilate,
        erode_px: args.erode,
        speckle_count: args.speckles,
        seed: config.seed,
    };
    let (image, gt) = generate_mosaic(&mosaic)?;
    let pred = perturb(&gt, &perturbation)?;

    let out = config.output_dir()?;
    write_rgb(&out.join("image.png"), &image)?;
    write_labeled_mask(&out.join("gt_labels.png"), &gt)?;
    write_binary_mask(&out.join("gt.png"), &gt.to_binary())?;
    write_binary_mask(&out.join("pred.png"), &pred)?;
    let sidecar = Sidecar {
        mosaic,
        perturbation: (perturbation != PerturbationSpec { seed: config.seed, ..Default::default() }).then_some(perturbation),
        expected: expected_counts(&gt),
    };
    write(&out.join("synth.json"), serde_json::to_string_pretty(&sidecar)? + "\n")?;

    let mut entry = SampleEntry::new(format!("synth_{}", config.seed), "gt_labels.png");
    entry.image_path = Some(PathBuf::from("image.png"));
    entry.predictions.push(MethodPrediction {
        method: "synth".into(),
        path: PathBuf::from("pred.png"),
    });
    write_manifest(&out.join("manifest.jsonl"), &[entry])?;
    println!(
        "{} tiles, {} foreground pixels written to {}",
        sidecar.expected.tiles,
        sidecar.expected.foreground_px,
        out.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct OverlayArgs {
    /// Ground-truth mask (single-image mode).
    #[arg(long, requires_all = ["pred_a", "pred_b"], conflicts_with_all = ["method_a", "method_b"])]
    pub gt: Option<PathBuf>,
    /// Baseline prediction; pixels only it finds are red.
    #[arg(long)]
    pub pred_a: Option<PathBuf>,
    /// Compared prediction; pixels only it finds are green.
    #[arg(long)]
    pub pred_b: Option<PathBuf>,
    /// Baseline method name (manifest mode).
    #[arg(long, requires = "method_b")]
    pub method_a: Option<String>,
    /// Compared method name (manifest mode).
    #[arg(long, requires = "method_a")]
    pub method_b: Option<String>,
    /// Tint false positives: dim red (A only), dim green (B only), gray (both).
    #[arg(long)]
    pub show_fp: bool,
}

fn render_overlay(gt: &Path, a: &Path, b: &Path, out: &Path, image_id: &str, options: OverlayOptions) -> Result<()> {
    let gt_mask = read_ground_truth(gt).map_err(|e| CliError::input(gt, e))?.to_binary();
    let (ma, mb) = (load_mask(a)?, load_mask(b)?);
    let img = overlay_with(&gt_mask, &ma, &mb, options).map_err(|e| match e {
        tessera::Error::Shape { expected, found } => CliError::Dimensions {
            image_id: image_id.to_string(),
            detail: format!("ground truth is {}x{}, prediction is {}x{}", expected.0, expected.1, found.0, found.1),
        }
        .into(),
        other => anyhow::Error::new(other),
    })?;
    write_rgb(out, &img).with_context(|| format!("writing {}", out.display()))
}

pub fn overlay(config: &RunConfig, args: &OverlayArgs) -> Result<()> {
    let options = OverlayOptions {
        show_false_positives: args.show_fp,
    };
    let out = config.output_dir()?;
    if let (Some(gt), Some(a), Some(b)) = (&args.gt, &args.pred_a, &args.pred_b) {
        let path = out.join("overlay.png");
        render_overlay(gt, a, b, &path, &gt.display().to_string(), options)?;
        println!("wrote {}", path.display());
        return Ok(());
    }
    let (Some(method_a), Some(method_b)) = (&args.method_a, &args.method_b) else {
        bail!("give either --gt/--pred-a/--pred-b or --manifest with --method-a/--method-b");
    };
    let manifest = config.manifest()?;
    let entries = read_manifest(manifest).map_err(|e| CliError::input(manifest, e))?;
    let base = manifest.parent().unwrap_or(Path::new(""));
    let find = |e: &SampleEntry, m: &str| -> Result<PathBuf> {
        e.predictions
            .iter()
            .find(|p| p.method == m)
            .map(|p| base.join(&p.path))
            .with_context(|| format!("entry {} has no prediction from {m}", e.id))
    };
    let dir = out.join("overlays");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let pool = config.thread_pool()?;
    let results: Vec<Result<()>> = pool.install(|| {
        entries
            .par_iter()
            .map(|e| {
                if e.id.contains(['/', '\\']) {
                    bail!("image id {} cannot be used as a file name", e.id);
                }
                let (a, b) = (find(e, method_a)?, find(e, method_b)?);
                render_overlay(&base.join(&e.gt_mask_path), &a, &b, &dir.join(format!("{}.png", e.id)), &e.id, options)
            })
            .collect()
    });
    results.into_iter().collect::<Result<Vec<()>>>()?;
    println!("wrote {} overlays to {}", entries.len(), dir.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct ScheduleArgs {
    /// JSON file with eta_max, eta_min and t_max; replaces the flags below.
    #[arg(long)]
    pub schedule_config: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-5)]
    pub eta_max: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eta_min: f64,
    #[arg(long, default_value_t = 9)]
    pub t_max: u32,
}

pub fn schedule(config: &RunConfig, args: &ScheduleArgs) -> Result<()> {
    let cfg = match &args.schedule_config {
        Some(path) => read_json::<ScheduleConfig>(path)?,
        None => ScheduleConfig {
            eta_max: args.eta_max,
            eta_min: args.eta_min,
            t_max: args.t_max,
        },
    };
    let table = schedule_table(&cfg)?;
    let mut csv = String::from("epoch,lr\n");
    for (t, lr) in table {
        csv.push_str(&format!("{t},{lr}\n"));
    }
    let path = config.output_dir()?.join("schedule.csv");
    write(&path, &csv)?;
    print!("{csv}");
    Ok(())
}

#[derive(Args, Debug)]
pub struct GridArgs {
    /// JSON file with learning_rates, weight_decays, batch_sizes and optionally epochs.
    /// Default: 3 learning rates x 2 weight decays x 2 batch sizes.
    #[arg(long)]
    pub grid_config: Option<PathBuf>,
}

pub fn grid(config: &RunConfig, args: &GridArgs) -> Result<()> {
    let spec = match &args.grid_config {
        Some(path) => read_json::<GridSpec>(path)?,
        None => GridSpec::reference(),
    };
    let mut lines = String::new();
    for cfg in enumerate_grid(&spec)? {
        lines.push_str(&serde_json::to_string(&cfg)?);
        lines.push('\n');
    }
    let path = config.output_dir()?.join("grid.jsonl");
    write(&path, &lines)?;
    print!("{lines}");
    Ok(())
}

#[derive(Args, Debug)]
pub struct LossArgs {
    /// Soft mask in SOFTMSK1 raster format.
    #[arg(long)]
    pub soft: PathBuf,
    /// Ground-truth mask PNG.
    #[arg(long)]
    pub gt: PathBuf,
    /// Predicted confidence in [0, 1].
    #[arg(long)]
    pub confidence: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_score: f64,
    /// Additive smoothing in the Dice ratio.
    #[arg(long, default_value_t = 0.0)]
    pub smooth: f64,
}

pub fn loss(config: &RunConfig, args: &LossArgs) -> Result<()> {
    let soft = read_soft_mask(&args.soft).map_err(|e| CliError::input(&args.soft, e))?;
    let gt = read_ground_truth(&args.gt).map_err(|e| CliError::input(&args.gt, e))?.to_binary();
    if soft.dims() != gt.dims() {
        return Err(CliError::Dimensions {
            image_id: args.gt.display().to_string(),
            detail: format!(
                "ground truth is {}x{}, soft mask is {}x{}",
                gt.width(),
                gt.height(),
                soft.dims().0,
                soft.dims().1
            ),
        }
        .into());
    }
    let output = PredictionOutput::new(soft, args.confidence)?;
    let breakdown = total_loss(&output, &gt, &LossWeights::new(args.lambda_score)?, args.smooth)?;
    let json = serde_json::to_string_pretty(&breakdown)? + "\n";
    write(&config.output_dir()?.join("loss.json"), &json)?;
    print!("{json}");
    Ok(())
}
