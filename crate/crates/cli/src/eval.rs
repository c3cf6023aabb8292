use std::collections::HashSet;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use tessera::dataset::{read_manifest, SampleEntry};
use tessera::io::{read_binary_mask, read_ground_truth};
use tessera::report::{
    average_record, compare_methods, emit_table, metrics_csv, ComparisonReport, EvaluationRecord, TableFormat,
    TableStyle,
};
use tessera::tile_metrics::{evaluate_pair, EvalOptions, TileAssignment};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Only evaluate these methods (repeatable). Default: every method in the manifest.
    #[arg(long = "method")]
    pub methods: Vec<String>,

    /// Also write the per-tile matching for each method.
    #[arg(long)]
    pub assignments: bool,
}

#[derive(Serialize)]
struct ImageAssignments<'a> {
    image_id: &'a str,
    assignments: &'a [TileAssignment],
}

fn check_method_name(name: &str) -> Result<()> {
    if name.is_empty() || name == "." || name == ".." || name.contains(['/', '\\']) {
        bail!("method name {name:?} cannot be used as a directory name");
    }
    Ok(())
}

/// Methods in order of first appearance in the manifest.
fn methods_in(entries: &[SampleEntry], only: &[String]) -> Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    for e in entries {
        for p in &e.predictions {
            if !out.contains(&p.method) && (only.is_empty() || only.contains(&p.method)) {
                out.push(p.method.clone());
            }
        }
    }
    for m in only {
        if !out.contains(m) {
            bail!("method {m} does not appear in the manifest");
        }
    }
    for m in &out {
        check_method_name(m)?;
    }
    Ok(out)
}

fn evaluate_entry(
    entry: &SampleEntry,
    base: &Path,
    methods: &[String],
    options: &EvalOptions,
) -> Result<Vec<(usize, EvaluationRecord)>> {
    let gt_path = base.join(&entry.gt_mask_path);
    let gt = read_ground_truth(&gt_path).map_err(|e| CliError::input(&gt_path, e))?;
    let mut out = Vec::new();
    for pred in &entry.predictions {
        let Some(m) = methods.iter().position(|m| *m == pred.method) else {
            continue;
        };
        let path = base.join(&pred.path);
        let mask = read_binary_mask(&path).map_err(|e| CliError::input(&path, e))?;
        let (pixel, tile) = evaluate_pair(&gt, &mask, options).map_err(|e| match e {
            tessera::Error::Shape { expected, found } => CliError::Dimensions {
                image_id: entry.id.clone(),
                detail: format!(
                    "ground truth is {}x{}, {} prediction is {}x{}",
                    expected.0, expected.1, pred.method, found.0, found.1
                ),
            }
            .into(),
            other => anyhow::Error::new(other).context(format!("evaluating image {}", entry.id)),
        })?;
        out.push((
            m,
            EvaluationRecord {
                image_id: entry.id.clone(),
                pixel,
                tile,
            },
        ));
    }
    Ok(out)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn method_report(records: &[EvaluationRecord]) -> Result<String> {
    Ok(format!(
        "## Pixel metrics (%)\n\n{}\n## Tile metrics (Cnt is the count error, others in %)\n\n{}",
        emit_table(records, TableStyle::Pixel, TableFormat::Markdown)?,
        emit_table(records, TableStyle::Tile, TableFormat::Markdown)?
    ))
}

pub fn run(config: &RunConfig, args: &EvalArgs) -> Result<()> {
    let manifest = config.manifest()?;
    let entries = read_manifest(manifest).map_err(|e| CliError::input(manifest, e))?;
    if entries.is_empty() {
        bail!("manifest {} has no entries", manifest.display());
    }
    let mut ids = HashSet::new();
    for e in &entries {
        if !ids.insert(e.id.as_str()) {
            bail!("duplicate image id {} in {}", e.id, manifest.display());
        }
        if e.predictions.is_empty() {
            bail!("entry {} has no prediction to evaluate", e.id);
        }
    }
    let methods = methods_in(&entries, &args.methods)?;
    let base = manifest.parent().unwrap_or(Path::new(""));
    let options = config.eval_options();

    let pool = config.thread_pool()?;
    let results: Vec<Result<Vec<(usize, EvaluationRecord)>>> = pool.install(|| {
        entries
            .par_iter()
            .map(|e| evaluate_entry(e, base, &methods, &options))
            .collect()
    });

    // Aggregation follows manifest order whatever the thread count.
    let mut per_method: Vec<Vec<EvaluationRecord>> = vec![Vec::new(); methods.len()];
    for result in results {
        for (m, record) in result? {
            per_method[m].push(record);
        }
    }

    let out = config.output_dir()?;
    for (name, records) in methods.iter().zip(&per_method) {
        let dir = out.join(name);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut rows = records.clone();
        rows.push(average_record(records)?);
        write(&dir.join("pixel.csv"), &metrics_csv(&rows, TableStyle::Pixel)?)?;
        write(&dir.join("tile.csv"), &metrics_csv(&rows, TableStyle::Tile)?)?;
        let report = method_report(records)?;
        write(&dir.join("report.md"), &report)?;
        if args.assignments {
            let dump: Vec<ImageAssignments> = records
                .iter()
                .map(|r| ImageAssignments {
                    image_id: &r.image_id,
                    assignments: &r.tile.assignments,
                })
                .collect();
            write(&dir.join("assignments.json"), &serde_json::to_string_pretty(&dump)?)?;
        }
        println!("# {name}\n\n{report}");
    }

    if methods.len() >= 2 {
        let report = ComparisonReport::new(methods.iter().cloned().zip(per_method).collect())?;
        let md = format!(
            "## Tile metrics\n\n{}\n## Pixel metrics\n\n{}",
            compare_methods(&report, TableStyle::Tile, TableFormat::Markdown)?,
            compare_methods(&report, TableStyle::Pixel, TableFormat::Markdown)?
        );
        write(&out.join("comparison.md"), &md)?;
        write(&out.join("comparison_tile.csv"), &compare_methods(&report, TableStyle::Tile, TableFormat::Csv)?)?;
        write(&out.join("comparison_pixel.csv"), &compare_methods(&report, TableStyle::Pixel, TableFormat::Csv)?)?;
        println!("# comparison\n\n{md}");
    }
    Ok(())
}
