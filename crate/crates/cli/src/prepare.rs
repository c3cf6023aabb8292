use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Deserialize;
use tessera::dataset::{prepare_source, split_entries, write_manifest, PrepareOptions, Sample, SampleEntry, Split, SplitSpec, Transform};
use tessera::io::{read_binary_mask, read_rgb, write_binary_mask, write_rgb};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// JSON-lines file of sources: {"id": ..., "image": ..., "mask": ...}, paths relative to the file.
    #[arg(long)]
    pub sources: PathBuf,

    /// Crop width (and height unless --tile-h is given).
    #[arg(long, default_value_t = 512)]
    pub tile: usize,

    #[arg(long)]
    pub tile_h: Option<usize>,

    /// Horizontal crop stride (and vertical unless --stride-h is given). Default: the tile size.
    #[arg(long)]
    pub stride: Option<usize>,

    #[arg(long)]
    pub stride_h: Option<usize>,

    /// Comma-separated transforms from identity, rot90, rot180, rot270, hflip, vflip.
    #[arg(long, value_delimiter = ',', default_value = "identity,rot90,rot180,rot270,hflip,vflip")]
    pub transforms: Vec<Transform>,

    /// Fraction of non-test entries assigned to training.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,

    /// Source ids whose entries form the test split (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub test_sources: Vec<String>,

    /// Skip crops without any foreground.
    #[arg(long)]
    pub drop_empty: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Source {
    id: String,
    image: PathBuf,
    mask: PathBuf,
}

fn read_sources(path: &Path) -> Result<Vec<Source>> {
    let file = File::open(path).map_err(|e| CliError::input(path, tessera::Error::Io { path: path.into(), source: e }))?;
    let mut out: Vec<Source> = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let src: Source =
            serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), n + 1))?;
        if out.iter().any(|s| s.id == src.id) {
            bail!("duplicate source id {} in {}", src.id, path.display());
        }
        out.push(src);
    }
    if out.is_empty() {
        bail!("no sources listed in {}", path.display());
    }
    Ok(out)
}

fn load_and_prepare(src: &Source, base: &Path, options: &PrepareOptions) -> Result<Vec<Sample>> {
    let image_path = base.join(&src.image);
    let mask_path = base.join(&src.mask);
    let image = read_rgb(&image_path).map_err(|e| CliError::input(&image_path, e))?;
    let mask = read_binary_mask(&mask_path).map_err(|e| CliError::input(&mask_path, e))?;
    prepare_source(&src.id, &image, &mask, options).with_context(|| format!("preparing source {}", src.id))
}

fn write_sample(sample: &Sample, out: &Path) -> Result<()> {
    let e = &sample.entry;
    let image_path = out.join(e.image_path.as_ref().expect("prepared entries have images"));
    write_rgb(&image_path, &sample.image).with_context(|| format!("writing {}", image_path.display()))?;
    let mask_path = out.join(&e.gt_mask_path);
    write_binary_mask(&mask_path, &sample.gt.to_binary()).with_context(|| format!("writing {}", mask_path.display()))?;
    let prompt_path = out.join("prompts").join(format!("{}.json", e.id));
    fs::write(&prompt_path, serde_json::to_string(&e.prompts)?)
        .with_context(|| format!("writing {}", prompt_path.display()))
}

pub fn run(config: &RunConfig, args: &PrepareArgs) -> Result<()> {
    let options = PrepareOptions {
        tile_w: args.tile,
        tile_h: args.tile_h.unwrap_or(args.tile),
        stride_w: args.stride.unwrap_or(args.tile),
        stride_h: args.stride_h.or(args.stride).unwrap_or(args.tile_h.unwrap_or(args.tile)),
        transforms: args.transforms.clone(),
        connectivity: config.connectivity,
        drop_empty: args.drop_empty,
    };
    let spec = SplitSpec::new(args.train_fraction, config.seed)?;
    let sources = read_sources(&args.sources)?;
    for id in &args.test_sources {
        if !sources.iter().any(|s| &s.id == id) {
            bail!("test source {id} is not listed in {}", args.sources.display());
        }
    }
    let base = args.sources.parent().unwrap_or(Path::new(""));

    let out = config.output_dir()?;
    for sub in ["images", "masks", "prompts"] {
        fs::create_dir_all(out.join(sub)).with_context(|| format!("creating {}", out.join(sub).display()))?;
    }

    let pool = config.thread_pool()?;
    let samples: Vec<Sample> = pool.install(|| -> Result<Vec<Sample>> {
        let per_source: Vec<Result<Vec<Sample>>> =
            sources.par_iter().map(|s| load_and_prepare(s, base, &options)).collect();
        let mut all = Vec::new();
        for r in per_source {
            all.extend(r?);
        }
        Ok(all)
    })?;
    let mut seen = HashSet::new();
    for s in &samples {
        if !seen.insert(s.entry.id.as_str()) {
            bail!("two crops share the id {}; source ids must not collide", s.entry.id);
        }
    }
    pool.install(|| samples.par_iter().map(|s| write_sample(s, out)).collect::<Result<Vec<()>>>())?;

    let test_ids: HashSet<&str> = args.test_sources.iter().map(String::as_str).collect();
    let is_test = |e: &SampleEntry| e.provenance.as_ref().is_some_and(|p| test_ids.contains(p.source_id.as_str()));
    let mut test: Vec<SampleEntry> = samples.iter().map(|s| s.entry.clone()).filter(|e| is_test(e)).collect();
    test.iter_mut().for_each(|e| e.split = Split::Test);
    let rest: Vec<SampleEntry> = samples.iter().map(|s| s.entry.clone()).filter(|e| !is_test(e)).collect();
    let (train, val) = if rest.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        split_entries(&rest, &spec)?
    };

    let split_of: HashMap<&str, Split> =
        train.iter().chain(&val).chain(&test).map(|e| (e.id.as_str(), e.split)).collect();
    let all: Vec<SampleEntry> = samples
        .iter()
        .map(|s| SampleEntry {
            split: split_of[s.entry.id.as_str()],
            ..s.entry.clone()
        })
        .collect();

    for (name, entries) in [("manifest.jsonl", &all), ("train.jsonl", &train), ("val.jsonl", &val), ("test.jsonl", &test)] {
        let path = out.join(name);
        write_manifest(&path, entries).with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "{} entries from {} sources: {} train, {} val, {} test",
        all.len(),
        sources.len(),
        train.len(),
        val.len(),
        test.len()
    );
    Ok(())
}
