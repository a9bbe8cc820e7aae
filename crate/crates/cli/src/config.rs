//! Experiment configuration: a TOML file with top-level `seed`, `workers`
//! and `out` keys plus one flat section per experiment. Command-line flags
//! override file values.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Simulate,
    Oracle,
    Contiguity,
    Recurrence,
    Scaling,
    Kernels,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Simulate,
        Experiment::Oracle,
        Experiment::Contiguity,
        Experiment::Recurrence,
        Experiment::Scaling,
        Experiment::Kernels,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Oracle => "oracle",
            Experiment::Contiguity => "contiguity",
            Experiment::Recurrence => "recurrence",
            Experiment::Scaling => "scaling",
            Experiment::Kernels => "kernels",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplerChoice {
    #[default]
    Counting,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateParams {
    pub alpha: Option<f64>,
    pub n: u64,
    pub walkers: u64,
    /// Number of points on the geometric checkpoint grid.
    pub checkpoints: usize,
    pub sampler: SamplerChoice,
    /// Walker 0 is written step by step when `n` is at most this.
    pub trajectory_cap: u64,
}

impl Default for SimulateParams {
    fn default() -> Self {
        SimulateParams {
            alpha: None,
            n: 10_000,
            walkers: 100,
            checkpoints: 20,
            sampler: SamplerChoice::Counting,
            trajectory_cap: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleParams {
    pub alpha: Option<f64>,
    pub m: usize,
    /// Random path subsets checked against the change-of-measure identity.
    pub events: usize,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            alpha: None,
            m: 5,
            events: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContiguityParams {
    pub alpha: f64,
    pub n: usize,
    pub epsilon: f64,
    pub a: f64,
    /// Fixed `A_ε`; calibrated from SRW windows when absent.
    pub a_eps: Option<f64>,
    pub calibration_samples: usize,
    pub windows: usize,
    pub checkpoints: usize,
    /// ERW prefixes drawn for the contiguity inequality.
    pub bound_samples: usize,
}

impl Default for ContiguityParams {
    fn default() -> Self {
        ContiguityParams {
            alpha: 0.25,
            n: 1000,
            epsilon: 0.1,
            a: 1.0,
            a_eps: None,
            calibration_samples: 10_000,
            windows: 10_000,
            checkpoints: 8,
            bound_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecurrenceParams {
    pub a: f64,
    pub second_moment_ns: Vec<usize>,
    pub fractions: Vec<f64>,
    /// Count band of the second-moment event, in units of `√n`.
    pub band: Option<f64>,
    pub second_moment_samples: usize,
    pub alphas: Vec<f64>,
    pub window_ns: Vec<usize>,
    pub window_samples: usize,
    pub triadic: bool,
    pub triadic_alpha: f64,
    pub j_min: u32,
    pub j_max: u32,
    pub j_delta: u32,
    pub prefixes: usize,
    pub pilot_continuations: usize,
    pub delta_quantile: f64,
    pub resolution: f64,
    pub max_continuations: usize,
}

impl Default for RecurrenceParams {
    fn default() -> Self {
        RecurrenceParams {
            a: 1.0,
            second_moment_ns: vec![256, 512, 1024],
            fractions: vec![0.0, 0.5, 1.0],
            band: Some(2.0),
            second_moment_samples: 2000,
            alphas: vec![0.0, 0.3],
            window_ns: vec![243, 729],
            window_samples: 20_000,
            triadic: true,
            triadic_alpha: 0.3,
            j_min: 3,
            j_max: 5,
            j_delta: 3,
            prefixes: 50,
            pilot_continuations: 400,
            delta_quantile: 0.05,
            resolution: 30.0,
            max_continuations: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingParams {
    pub alphas: Vec<f64>,
    pub n_min: u64,
    pub n_max: u64,
    pub points: usize,
    pub walks: usize,
    pub stability_n: u64,
    pub stability_walks: usize,
    /// `A` values for the conditioning-mass curve at `stability_n`.
    pub a_grid: Vec<f64>,
}

impl Default for ScalingParams {
    fn default() -> Self {
        ScalingParams {
            alphas: vec![0.0, 0.25, 0.75],
            n_min: 100,
            n_max: 10_000,
            points: 10,
            walks: 1000,
            stability_n: 1000,
            stability_walks: 1000,
            a_grid: vec![0.5, 1.0, 1.5, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelsParams {
    pub k_max: usize,
    /// Scale of the Green function and of the L1 comparison.
    pub n: usize,
    pub l1_samples: usize,
    pub band: f64,
    /// Step count of the kernel table written out in full.
    pub table_k: usize,
}

impl Default for KernelsParams {
    fn default() -> Self {
        KernelsParams {
            k_max: 512,
            n: 64,
            l1_samples: 10_000,
            band: 2.0,
            table_k: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "experiment", rename_all = "lowercase")]
pub enum Params {
    Simulate(SimulateParams),
    Oracle(OracleParams),
    Contiguity(ContiguityParams),
    Recurrence(RecurrenceParams),
    Scaling(ScalingParams),
    Kernels(KernelsParams),
}

impl Params {
    pub fn defaults(experiment: Experiment) -> Params {
        match experiment {
            Experiment::Simulate => Params::Simulate(Default::default()),
            Experiment::Oracle => Params::Oracle(Default::default()),
            Experiment::Contiguity => Params::Contiguity(Default::default()),
            Experiment::Recurrence => Params::Recurrence(Default::default()),
            Experiment::Scaling => Params::Scaling(Default::default()),
            Experiment::Kernels => Params::Kernels(Default::default()),
        }
    }

    pub fn experiment(&self) -> Experiment {
        match self {
            Params::Simulate(_) => Experiment::Simulate,
            Params::Oracle(_) => Experiment::Oracle,
            Params::Contiguity(_) => Experiment::Contiguity,
            Params::Recurrence(_) => Experiment::Recurrence,
            Params::Scaling(_) => Experiment::Scaling,
            Params::Kernels(_) => Experiment::Kernels,
        }
    }
}

/// Contents of a config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub simulate: Option<SimulateParams>,
    pub oracle: Option<OracleParams>,
    pub contiguity: Option<ContiguityParams>,
    pub recurrence: Option<RecurrenceParams>,
    pub scaling: Option<ScalingParams>,
    pub kernels: Option<KernelsParams>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<ConfigFile> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn params(&self, experiment: Experiment) -> Params {
        let section = match experiment {
            Experiment::Simulate => self.simulate.clone().map(Params::Simulate),
            Experiment::Oracle => self.oracle.clone().map(Params::Oracle),
            Experiment::Contiguity => self.contiguity.clone().map(Params::Contiguity),
            Experiment::Recurrence => self.recurrence.clone().map(Params::Recurrence),
            Experiment::Scaling => self.scaling.clone().map(Params::Scaling),
            Experiment::Kernels => self.kernels.clone().map(Params::Kernels),
        };
        section.unwrap_or_else(|| Params::defaults(experiment))
    }

    /// Experiments with a section in the file.
    pub fn sections(&self) -> Vec<Experiment> {
        Experiment::ALL
            .into_iter()
            .filter(|&e| match e {
                Experiment::Simulate => self.simulate.is_some(),
                Experiment::Oracle => self.oracle.is_some(),
                Experiment::Contiguity => self.contiguity.is_some(),
                Experiment::Recurrence => self.recurrence.is_some(),
                Experiment::Scaling => self.scaling.is_some(),
                Experiment::Kernels => self.kernels.is_some(),
            })
            .collect()
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub n: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub params: Params,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn resolve(
        experiment: Experiment,
        file: &ConfigFile,
        overrides: &Overrides,
    ) -> Result<ExperimentConfig> {
        let mut params = file.params(experiment);
        apply_overrides(&mut params, overrides)?;
        let cfg = ExperimentConfig {
            params,
            master_seed: overrides.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            output_dir: overrides
                .out
                .clone()
                .or_else(|| file.out.clone())
                .unwrap_or_else(|| PathBuf::from("out").join(experiment.name())),
            workers: overrides.workers.or(file.workers).unwrap_or(1),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn experiment(&self) -> Experiment {
        self.params.experiment()
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(CliError::Config("workers must be >= 1".into()));
        }
        validate_params(&self.params)
    }

    /// SHA-256 of the experiment, seed and parameters. Worker count and
    /// output directory do not affect results and are left out.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            seed: u64,
            params: &'a Params,
        }
        let json = serde_json::to_string(&Hashed {
            seed: self.master_seed,
            params: &self.params,
        })
        .expect("parameters serialize");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn apply_overrides(params: &mut Params, o: &Overrides) -> Result<()> {
    let n_usize = |n: u64| {
        usize::try_from(n).map_err(|_| CliError::Config(format!("--n {n} does not fit in usize")))
    };
    match params {
        Params::Simulate(p) => {
            p.alpha = o.alpha.or(p.alpha);
            if let Some(n) = o.n {
                p.n = n;
            }
        }
        Params::Oracle(p) => {
            p.alpha = o.alpha.or(p.alpha);
            if let Some(n) = o.n {
                p.m = n_usize(n)?;
            }
        }
        Params::Contiguity(p) => {
            if let Some(a) = o.alpha {
                p.alpha = a;
            }
            if let Some(n) = o.n {
                p.n = n_usize(n)?;
            }
        }
        Params::Recurrence(p) => {
            if let Some(a) = o.alpha {
                p.alphas = vec![a];
                p.triadic_alpha = a;
            }
            if let Some(n) = o.n {
                p.window_ns = vec![n_usize(n)?];
            }
        }
        Params::Scaling(p) => {
            if let Some(a) = o.alpha {
                p.alphas = vec![a];
            }
            if let Some(n) = o.n {
                p.n_max = n;
            }
        }
        Params::Kernels(p) => {
            if o.alpha.is_some() {
                return Err(CliError::Config(
                    "--alpha does not apply to kernels (SRW only)".into(),
                ));
            }
            if let Some(n) = o.n {
                p.n = n_usize(n)?;
            }
        }
    }
    Ok(())
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

fn check_alpha(key: &str, a: f64) -> Result<()> {
    check(a > -1.0 / 3.0 && a < 1.0, || {
        format!("{key} = {a} outside (-1/3, 1)")
    })
}

fn require_alpha(section: &str, a: Option<f64>) -> Result<f64> {
    let a = a.ok_or_else(|| {
        CliError::Config(format!(
            "[{section}] requires alpha (set it in the file or pass --alpha)"
        ))
    })?;
    check_alpha("alpha", a)?;
    Ok(a)
}

fn validate_params(params: &Params) -> Result<()> {
    match params {
        Params::Simulate(p) => {
            require_alpha("simulate", p.alpha)?;
            check(p.n >= 1, || "n must be >= 1".into())?;
            check(p.walkers >= 1, || "walkers must be >= 1".into())?;
            check(p.checkpoints >= 1, || "checkpoints must be >= 1".into())?;
        }
        Params::Oracle(p) => {
            require_alpha("oracle", p.alpha)?;
            check(p.m <= erwlab_core::oracle::MAX_PATH_LEN, || {
                format!("m = {} exceeds {}", p.m, erwlab_core::oracle::MAX_PATH_LEN)
            })?;
        }
        Params::Contiguity(p) => {
            check_alpha("alpha", p.alpha)?;
            check(p.n >= 2, || "n must be >= 2".into())?;
            check(p.epsilon > 0.0 && p.epsilon < 1.0, || {
                format!("epsilon = {} outside (0, 1)", p.epsilon)
            })?;
            check(p.a > 0.0, || "a must be > 0".into())?;
            check(p.a_eps.is_none_or(|x| x > 0.0), || {
                "a_eps must be > 0".into()
            })?;
            check(p.a_eps.is_some() || p.calibration_samples >= 2, || {
                "calibration_samples must be >= 2".into()
            })?;
            check(p.windows >= 2 && p.bound_samples >= 1, || {
                "windows must be >= 2 and bound_samples >= 1".into()
            })?;
            check(p.checkpoints >= 1 && p.checkpoints <= p.n, || {
                "checkpoints must be in 1..=n".into()
            })?;
        }
        Params::Recurrence(p) => {
            check(p.a > 0.0, || "a must be > 0".into())?;
            check(p.second_moment_ns.iter().all(|&n| n >= 2), || {
                "second_moment_ns entries must be >= 2".into()
            })?;
            check(p.fractions.iter().all(|f| (0.0..=1.0).contains(f)), || {
                "fractions must lie in [0, 1]".into()
            })?;
            check(p.band.is_none_or(|b| b > 0.0), || "band must be > 0".into())?;
            for &a in &p.alphas {
                check_alpha("alphas", a)?;
            }
            check(p.window_ns.iter().all(|&n| n >= 2), || {
                "window_ns entries must be >= 2".into()
            })?;
            if p.triadic {
                check_alpha("triadic_alpha", p.triadic_alpha)?;
                check(p.j_min >= 1 && p.j_min <= p.j_max && p.j_delta >= 1, || {
                    "need 1 <= j_min <= j_max and j_delta >= 1".into()
                })?;
                check(p.j_max <= erwlab_core::recurrence::MAX_TRIADIC_J, || {
                    format!("j_max exceeds {}", erwlab_core::recurrence::MAX_TRIADIC_J)
                })?;
                check(p.delta_quantile > 0.0 && p.delta_quantile < 1.0, || {
                    "delta_quantile must lie in (0, 1)".into()
                })?;
                check(p.prefixes >= 1 && p.pilot_continuations >= 1, || {
                    "prefixes and pilot_continuations must be >= 1".into()
                })?;
            }
        }
        Params::Scaling(p) => {
            check(!p.alphas.is_empty(), || "alphas must not be empty".into())?;
            for &a in &p.alphas {
                check_alpha("alphas", a)?;
            }
            check(p.n_min >= 1 && p.n_min < p.n_max, || {
                "need 1 <= n_min < n_max".into()
            })?;
            check(p.points >= 4, || "points must be >= 4".into())?;
            check(p.walks >= 2 && p.stability_walks >= 2, || {
                "walks and stability_walks must be >= 2".into()
            })?;
            check(p.stability_n >= 1, || "stability_n must be >= 1".into())?;
        }
        Params::Kernels(p) => {
            let cap = erwlab_core::srw::DEFAULT_DP_CAP;
            check(p.k_max >= 2 && p.k_max <= cap, || {
                format!("k_max must be in 2..={cap}")
            })?;
            check(p.n >= 1 && p.n <= cap, || format!("n must be in 1..={cap}"))?;
            check(p.table_k <= cap, || format!("table_k must be <= {cap}"))?;
            check(p.band > 0.0, || "band must be > 0".into())?;
            check(p.l1_samples >= 1, || "l1_samples must be >= 1".into())?;
        }
    }
    Ok(())
}
