use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseDescriptor;
use crate::torus::{FamilyDescriptor, MapFamily};

/// Experiments reachable from a config or CLI subcommand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Spectrum,
    Sweep,
    F2,
    ConeEscape,
    NoiseCheck,
    Transversality,
    MetricCheck,
    Uniformity,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Self::Spectrum,
        Self::Sweep,
        Self::F2,
        Self::ConeEscape,
        Self::NoiseCheck,
        Self::Transversality,
        Self::MetricCheck,
        Self::Uniformity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Spectrum => "spectrum",
            Self::Sweep => "sweep",
            Self::F2 => "f2",
            Self::ConeEscape => "cone-escape",
            Self::NoiseCheck => "noise-check",
            Self::Transversality => "transversality",
            Self::MetricCheck => "metric-check",
            Self::Uniformity => "uniformity",
        }
    }
}

fn default_noise() -> NoiseDescriptor {
    NoiseDescriptor::None
}
fn default_n_steps() -> u64 {
    10_000
}
fn default_trials() -> u64 {
    1
}
fn default_beta() -> f64 {
    0.1
}
fn default_burn_in() -> u64 {
    1000
}
fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
fn default_samples() -> u64 {
    100_000
}
fn default_bins() -> usize {
    16
}
fn default_grid() -> usize {
    512
}
fn default_refine() -> usize {
    50
}
fn default_system_grid() -> usize {
    2048
}

/// A validated run description. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// May be omitted when the CLI subcommand names it.
    #[serde(default)]
    pub experiment: Option<Experiment>,
    pub family: FamilyDescriptor,
    #[serde(default = "default_noise")]
    pub noise: NoiseDescriptor,
    #[serde(default = "default_n_steps")]
    pub n_steps: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// `0` draws a seed from system entropy; the drawn value is recorded.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_path: Option<String>,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: u64,
    /// Parameter values for `sweep` and `f2`.
    #[serde(default)]
    pub l_values: Option<Vec<f64>>,
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_refine")]
    pub refine_iters: usize,
    #[serde(default = "default_system_grid")]
    pub system_grid: usize,
}

/// Documentation of every config key, shown by `--help`.
pub const CONFIG_KEYS: &str = "\
CONFIG KEYS (JSON object; unknown keys are rejected)
  experiment    spectrum | sweep | f2 | cone-escape | noise-check |
                transversality | metric-check | uniformity
                (optional; must match the subcommand when present)
  family        {\"type\": \"CoupledStandard\", \"N\": n, \"L\": l, \"mu\": [[..]]}
                {\"type\": \"StrongCoupling2\", \"L\": l}
                {\"type\": \"GenericLPsiPhi\", \"N\": n, \"L\": l, \"psi\": name, \"phi\": name}
                  names: sine, strong_coupling, doubling, identity, zero
                {\"type\": \"LinearTest\", \"a\": [[integers]]}
                L >= 1; mu symmetric with zero diagonal
  noise         {\"type\": \"None\"} (default)
                {\"type\": \"Shift\", \"epsilon\": e}            0 <= e < 0.5
                {\"type\": \"Rotational\", \"c\": c | null, \"centers\": mode}
                  c null: calibrate c_max; mode: \"faithful\" (default),
                  {\"light_grid\": k} or {\"light\": [[z..], ..]}
  n_steps       steps per trajectory (window length for cone-escape, <= 6)
                default 10000; >= 1 (uniformity allows 0)
  trials        independent trajectories or Monte Carlo trials; default 1; >= 1
  beta          critical-set exponent in (0, 1); default 0.1
  seed          unsigned 64-bit; 0 draws from entropy and records it; default 0
  out_path      output prefix; writes <out_path>.csv and <out_path>.json
  threads       worker threads, 1..=1024; default: available cores
  burn_in       discarded steps before accumulating exponents; default 1000
  l_values      list of L >= 1 for sweep and f2; default [1e3, 1e4, 1e5]
  samples       Monte Carlo samples (f2, noise-check, uniformity); default 100000
  bins          histogram bins for noise-check, >= 2; default 16
  grid          points per axis for transversality, >= 2; default 512
  refine_iters  coordinate-descent iterations for transversality; default 50
  system_grid   points per axis for the three-equation sweep, >= 2; default 2048
";

fn range(key: &str, ok: bool, bound: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "`{key}` out of range: must be {bound}"
        )))
    }
}

impl RunConfig {
    pub fn experiment(&self) -> Result<Experiment> {
        self.experiment.ok_or_else(|| {
            Error::Config("`experiment` is missing and no subcommand was given".into())
        })
    }

    /// The validated family.
    pub fn build_family(&self) -> Result<MapFamily> {
        MapFamily::try_from(&self.family).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("`family`: {m}")),
            other => Error::Config(format!("`family`: {other}")),
        })
    }

    pub fn l_values(&self) -> Vec<f64> {
        self.l_values.clone().unwrap_or_else(|| vec![1e3, 1e4, 1e5])
    }

    /// Range checks on every numeric key.
    pub fn validate(&self) -> Result<()> {
        let fam = self.build_family()?;
        range("beta", self.beta > 0.0 && self.beta < 1.0, "in (0, 1)")?;
        range("trials", self.trials >= 1, ">= 1")?;
        range("threads", (1..=1024).contains(&self.threads), "in 1..=1024")?;
        range("samples", self.samples >= 1, ">= 1")?;
        range("bins", self.bins >= 2, ">= 2")?;
        range("grid", self.grid >= 2, ">= 2")?;
        range("system_grid", self.system_grid >= 2, ">= 2")?;
        let allow_zero = self.experiment == Some(Experiment::Uniformity);
        range("n_steps", allow_zero || self.n_steps >= 1, ">= 1")?;
        if self.experiment == Some(Experiment::ConeEscape) {
            range(
                "n_steps",
                (1..=6).contains(&self.n_steps),
                "in 1..=6 for cone-escape",
            )?;
        }
        if let Some(ls) = &self.l_values {
            range(
                "l_values",
                !ls.is_empty() && ls.iter().all(|l| *l >= 1.0 && l.is_finite()),
                "a nonempty list of L >= 1",
            )?;
        }
        match &self.noise {
            NoiseDescriptor::Shift { epsilon } => {
                range("noise.epsilon", (0.0..0.5).contains(epsilon), "in [0, 0.5)")?
            }
            NoiseDescriptor::Rotational { c: Some(c), .. } => {
                range("noise.c", *c >= 0.0 && c.is_finite(), ">= 0")?
            }
            _ => {}
        }
        if let NoiseDescriptor::Rotational {
            centers: crate::noise::CenterMode::Light(p),
            ..
        } = &self.noise
        {
            range(
                "noise.centers",
                !p.is_empty() && p.iter().all(|c| c.len() == 2 * fam.n()),
                "a nonempty list of points with 2N coordinates",
            )?;
        }
        Ok(())
    }
}

/// Parse and validate a JSON config document.
pub fn parse_config(document: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(document)
        .map_err(|e| Error::Config(format!("{e} (line {}, column {})", e.line(), e.column())))?;
    cfg.validate()?;
    Ok(cfg)
}
