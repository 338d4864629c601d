//! TOML run configuration and command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tamed_sde::{ErrorTime, SchemeConfig, SchemeVariant, StudyConfig};

use crate::presets::ModelSpec;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Whole configuration file. Every section but `[model]` is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub scheme: SchemeSpec,
    #[serde(default)]
    pub taming: TamingSpec,
    #[serde(default)]
    pub study: StudySpec,
    #[serde(default)]
    pub simulate: SimulateSpec,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub moments: MomentsSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub seed: u64,
    pub workers: usize,
    pub format: Format,
    pub out: PathBuf,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            seed: 2024,
            workers: 0,
            format: Format::Csv,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSpec {
    pub variant: SchemeVariant,
    /// Step count of a single `simulate` run.
    pub n: usize,
}

impl Default for SchemeSpec {
    fn default() -> Self {
        Self {
            variant: SchemeVariant::RandomizedTamed,
            n: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TamingSpec {
    pub n_power: f64,
    /// Defaults to `3ζ/2` of the model.
    pub x_power: Option<f64>,
}

impl Default for TamingSpec {
    fn default() -> Self {
        Self {
            n_power: 0.5,
            x_power: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySpec {
    pub levels: Vec<usize>,
    pub reference_n: usize,
    pub reference_variant: SchemeVariant,
    pub paths: usize,
    pub p_list: Vec<f64>,
    pub error_time: ErrorTime,
    pub batches: usize,
    /// Largest divergence fraction tolerated before exit status 3.
    pub divergence_threshold: f64,
    pub plot: bool,
}

impl Default for StudySpec {
    fn default() -> Self {
        let d = StudyConfig::desk_scale(0);
        Self {
            levels: d.levels,
            reference_n: d.reference_n,
            reference_variant: d.reference_variant,
            paths: d.num_paths,
            p_list: d.p_list,
            error_time: d.error_time,
            batches: d.batches,
            divergence_threshold: 0.5,
            plot: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSpec {
    pub path_index: u64,
    /// Delay θ; enables the delay/switching stepper together with `switching`.
    pub delay: f64,
    /// Constant initial segment `x_t = c` on `[−θ, 0]`.
    pub initial_segment: Option<Vec<f64>>,
    pub switching: Option<SwitchingSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingSpec {
    pub states: usize,
    /// Row-major generator; the diagonal is recomputed from the rates.
    pub generator: Vec<f64>,
    #[serde(default = "one")]
    pub initial_state: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub q: Vec<u32>,
    pub p0: Vec<u32>,
    /// The λ > 1 of the monotonicity constraint.
    pub lambda: f64,
    pub samples: usize,
    /// Step count used for the taming-bound probe.
    pub n: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            q: vec![4, 648],
            p0: vec![2, 4],
            lambda: 1.001,
            samples: 10_000,
            n: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsSpec {
    pub q: f64,
    pub n_list: Vec<usize>,
    pub paths: usize,
}

impl Default for MomentsSpec {
    fn default() -> Self {
        Self {
            q: 4.0,
            n_list: (6..=10).map(|e| 1 << e).collect(),
            paths: 10_000,
        }
    }
}

/// Command-line values that replace file keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub levels: Option<Vec<usize>>,
    pub reference_n: Option<usize>,
    pub variant: Option<SchemeVariant>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.run.seed = v;
        }
        if let Some(v) = o.paths {
            self.study.paths = v;
            self.moments.paths = v;
        }
        if let Some(v) = &o.levels {
            self.study.levels = v.clone();
        }
        if let Some(v) = o.reference_n {
            self.study.reference_n = v;
        }
        if let Some(v) = o.variant {
            self.scheme.variant = v;
        }
        if let Some(v) = o.format {
            self.run.format = v;
        }
        if let Some(v) = &o.out {
            self.run.out = v.clone();
        }
        if let Some(v) = o.workers {
            self.run.workers = v;
        }
    }

    pub fn model_spec(&self) -> Result<&ModelSpec, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Config("configuration has no [model] section".into()))
    }

    pub fn scheme_config(&self, n: usize) -> SchemeConfig {
        SchemeConfig::new(self.scheme.variant, n)
            .with_taming_exponents(self.taming.n_power, self.taming.x_power)
    }

    pub fn study_config(&self) -> StudyConfig {
        StudyConfig {
            variant: self.scheme.variant,
            reference_variant: self.study.reference_variant,
            n_power: self.taming.n_power,
            x_power: self.taming.x_power,
            levels: self.study.levels.clone(),
            reference_n: self.study.reference_n,
            num_paths: self.study.paths,
            p_list: self.study.p_list.clone(),
            error_time: self.study.error_time,
            base_seed: self.run.seed,
            batches: self.study.batches,
            workers: self.run.workers,
        }
    }
}

/// Parses `64,128,256` as step counts or `6..11` as an inclusive range of
/// base-2 exponents.
pub fn parse_levels(s: &str) -> Result<Vec<usize>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a
            .trim()
            .parse()
            .map_err(|e| format!("bad exponent '{a}': {e}"))?;
        let b: u32 = b
            .trim()
            .parse()
            .map_err(|e| format!("bad exponent '{b}': {e}"))?;
        if a > b || b >= usize::BITS {
            return Err(format!("bad exponent range {a}..{b}"));
        }
        return Ok((a..=b).map(|e| 1usize << e).collect());
    }
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad level '{t}': {e}"))
        })
        .collect()
}
