use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tessera::{Connectivity, EvalOptions};

use crate::GlobalArgs;

/// Settings shared by all subcommands. A JSON config file uses the same field
/// names; relative paths in it resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest_path: Option<PathBuf>,
    pub connectivity: Connectivity,
    pub min_region_px: usize,
    pub output_dir: PathBuf,
    /// 0 lets the thread pool pick one worker per core.
    pub threads: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest_path: None,
            connectivity: Connectivity::Eight,
            min_region_px: 1,
            output_dir: PathBuf::from("out"),
            threads: 0,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| crate::CliError::input(path, tessera::Error::Io { path: path.into(), source: e }))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(m) = &cfg.manifest_path {
            cfg.manifest_path = Some(base.join(m));
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn resolve(args: &GlobalArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if let Some(m) = &args.manifest {
            cfg.manifest_path = Some(m.clone());
        }
        if let Some(o) = &args.out {
            cfg.output_dir = o.clone();
        }
        if let Some(c) = args.connectivity {
            cfg.connectivity = c;
        }
        if let Some(k) = args.min_region_px {
            cfg.min_region_px = k;
        }
        if let Some(t) = args.threads {
            cfg.threads = t;
        }
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        if cfg.min_region_px == 0 {
            bail!("min_region_px must be at least 1 (1 keeps every region)");
        }
        Ok(cfg)
    }

    pub fn manifest(&self) -> Result<&Path> {
        self.manifest_path
            .as_deref()
            .context("this command needs a manifest (--manifest or manifest_path in --config)")
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            connectivity: self.connectivity,
            min_region_px: self.min_region_px,
        }
    }

    pub fn output_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.output_dir)
            .with_context(|| format!("creating output directory {}", self.output_dir.display()))?;
        Ok(&self.output_dir)
    }

    pub fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .context("starting worker threads")
    }
}
