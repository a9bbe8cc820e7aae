use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::experiments::{dispatch, Check};
use crate::output::{ArtifactWriter, OutputFile, VERSION};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub experiment: Experiment,
    pub master_seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub workers: usize,
    pub wall_time_secs: f64,
    pub outputs: Vec<OutputFile>,
    pub checks: Vec<Check>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: not a run manifest: {e}", path.display())))
    }

    pub fn failed_checks(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.clone())
            .collect()
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    experiment: Experiment,
    master_seed: u64,
    params: &'a crate::config::Params,
    results: &'a serde_json::Value,
    checks: &'a [Check],
}

/// Run one experiment on a pool of `cfg.workers` threads and write its
/// artifacts, `summary.json` and `manifest.json`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()?;
    let mut writer = ArtifactWriter::new(cfg)?;
    let outcome = pool.install(|| dispatch(&cfg.params, cfg.master_seed, &mut writer))?;
    writer.json(
        SUMMARY_FILE,
        &Summary {
            experiment: cfg.experiment(),
            master_seed: cfg.master_seed,
            params: &cfg.params,
            results: &outcome.results,
            checks: &outcome.checks,
        },
    )?;
    let config_hash = writer.config_hash().to_string();
    let dir = writer.dir().to_path_buf();
    let manifest = RunManifest {
        config_hash,
        tool_version: VERSION.to_string(),
        experiment: cfg.experiment(),
        master_seed: cfg.master_seed,
        seeds: outcome.seeds,
        workers: cfg.workers,
        wall_time_secs: start.elapsed().as_secs_f64(),
        outputs: writer.into_outputs(),
        checks: outcome.checks,
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    std::fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}
