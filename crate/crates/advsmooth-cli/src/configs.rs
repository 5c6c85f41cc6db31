//! JSON config schemas for the five subcommands.
//!
//! All scientific parameters live in these files; command-line flags only
//! select the subcommand, the config path, the output directory and an
//! optional seed override. Every schema starts with a `schema_version`
//! field so configs stay replayable across releases. Parsing reports the
//! exact JSON field path of the first offending value, and `validate`
//! methods re-check everything the library would reject, again with field
//! paths, so a bad config always exits with code 2 before any computation
//! starts.

use advsmooth_core::model::{BinaryLabel, InputPoint, LabeledDataset, LabeledExample, ModelSpec};
use advsmooth_core::probe::{Region, RegionPredicate};
use advsmooth_core::surface::{GridFormat, GridSpec, LossVariant};
use advsmooth_core::train::make_synthetic_dataset;
use advsmooth_core::verify::CheckSuite;
use advsmooth_core::{attack::NormKind, attack::PgdConfig, entropy::QuadratureSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{at_field, CliError};
use crate::manifest::sha256_hex;

/// Version this binary reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

fn default_seed() -> u64 {
    0
}

/// Read a config file and parse it, reporting the JSON field path of the
/// first error. Returns the parsed value and the SHA-256 of the raw bytes.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<(T, String), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::config(path.display().to_string(), format!("unreadable: {e}")))?;
    let digest = sha256_hex(&bytes);
    let mut de = serde_json::Deserializer::from_slice(&bytes);
    let parsed: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        CliError::config(
            format!("{}: {}", path.display(), e.path()),
            e.inner().to_string(),
        )
    })?;
    de.end()
        .map_err(|e| CliError::config(path.display().to_string(), e))?;
    Ok((parsed, digest))
}

fn check_schema_version(found: u32) -> Result<(), CliError> {
    if found != SCHEMA_VERSION {
        return Err(CliError::config(
            "schema_version",
            format!("this binary reads version {SCHEMA_VERSION}, config says {found}"),
        ));
    }
    Ok(())
}

/// Where a subcommand's dataset comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Inline labeled points; `y` is 1 or -1.
    Examples(Vec<ExampleSpec>),
    /// Seeded standard-normal points labeled by the sign of the first
    /// coordinate; `split` picks the train or test half of the stream.
    Synthetic {
        n_per_split: usize,
        input_dim: usize,
        seed: u64,
        #[serde(default)]
        split: Split,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleSpec {
    pub x: Vec<f64>,
    pub y: i8,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    Test,
}

impl DataSource {
    pub fn build(&self, field: &str) -> Result<LabeledDataset, CliError> {
        match self {
            DataSource::Examples(examples) => {
                let mut rows = Vec::with_capacity(examples.len());
                for (i, ex) in examples.iter().enumerate() {
                    let x = at_field(
                        &format!("{field}.examples[{i}].x"),
                        InputPoint::new(ex.x.clone()),
                    )?;
                    let y = match ex.y {
                        1 => BinaryLabel::Pos,
                        -1 => BinaryLabel::Neg,
                        other => {
                            return Err(CliError::config(
                                format!("{field}.examples[{i}].y"),
                                format!("must be 1 or -1, got {other}"),
                            ))
                        }
                    };
                    rows.push(LabeledExample { x, y });
                }
                at_field(field, LabeledDataset::new(rows))
            }
            DataSource::Synthetic {
                n_per_split,
                input_dim,
                seed,
                split,
            } => {
                let (train, test) = at_field(
                    &format!("{field}.synthetic"),
                    make_synthetic_dataset(*n_per_split, *input_dim, *seed),
                )?;
                Ok(match split {
                    Split::Train => train,
                    Split::Test => test,
                })
            }
        }
    }
}

/// `surface` subcommand: a batch of grids over one dataset, each exported
/// under its own name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub schema_version: u32,
    pub data: DataSource,
    /// Seed for PGD-sampled variants (fixed once per surface).
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub jobs: Vec<SurfaceJob>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceJob {
    /// Artifact stem: `<name>.csv` / `<name>.json`.
    pub name: String,
    pub model: ModelSpec,
    pub grid: GridSpec,
    #[serde(default = "default_formats")]
    pub formats: Vec<GridFormat>,
}

fn default_formats() -> Vec<GridFormat> {
    vec![GridFormat::Csv]
}

fn name_is_artifact_safe(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl SurfaceConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_schema_version(self.schema_version)?;
        if self.jobs.is_empty() {
            return Err(CliError::config("jobs", "must list at least one job"));
        }
        for (i, job) in self.jobs.iter().enumerate() {
            if !name_is_artifact_safe(&job.name) {
                return Err(CliError::config(
                    format!("jobs[{i}].name"),
                    "must be non-empty and use only [A-Za-z0-9_-]",
                ));
            }
            if self.jobs[..i].iter().any(|j| j.name == job.name) {
                return Err(CliError::config(
                    format!("jobs[{i}].name"),
                    format!("duplicate name {:?}", job.name),
                ));
            }
            if job.formats.is_empty() {
                return Err(CliError::config(
                    format!("jobs[{i}].formats"),
                    "must list at least one format",
                ));
            }
            at_field(&format!("jobs[{i}].model"), job.model.validate())?;
            at_field(&format!("jobs[{i}].grid"), job.grid.validate())?;
        }
        Ok(())
    }
}

/// `probe` subcommand: smoothness constants, curvature, spectral norm and
/// sharpness for one model/dataset/region configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub schema_version: u32,
    pub model: ModelSpec,
    pub data: DataSource,
    pub theta_region: RegionSpec,
    pub ball: BallSpec,
    pub pgd: PgdSpec,
    pub reference_theta: Vec<f64>,
    pub n_samples: usize,
    pub min_separation: f64,
    pub sharpness_radius: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_schema_version(self.schema_version)?;
        at_field("model", self.model.validate())?;
        self.theta_region.build("theta_region")?;
        self.ball.build("ball")?;
        self.pgd.build("pgd", self.ball.epsilon, self.seed)?;
        if self.n_samples == 0 {
            return Err(CliError::config("n_samples", "must be >= 1"));
        }
        if !(self.min_separation.is_finite() && self.min_separation > 0.0) {
            return Err(CliError::config(
                "min_separation",
                format!("must be positive, got {}", self.min_separation),
            ));
        }
        if !(self.sharpness_radius.is_finite() && self.sharpness_radius > 0.0) {
            return Err(CliError::config(
                "sharpness_radius",
                format!("must be positive, got {}", self.sharpness_radius),
            ));
        }
        Ok(())
    }
}

/// Box-plus-predicate sampling region, rebuilt through the library's
/// validating constructors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(default)]
    pub predicate: RegionPredicate,
}

impl RegionSpec {
    pub fn build(&self, field: &str) -> Result<Region, CliError> {
        let region = at_field(field, Region::new_box(self.lo.clone(), self.hi.clone()))?;
        at_field(
            &format!("{field}.predicate"),
            region.with_predicate(self.predicate.clone()),
        )
    }
}

/// Perturbation ball; `p` is "2" or "inf".
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallSpec {
    pub p: NormKind,
    pub epsilon: f64,
}

impl BallSpec {
    pub fn build(&self, field: &str) -> Result<advsmooth_core::attack::NormBall, CliError> {
        at_field(field, advsmooth_core::attack::NormBall::new(self.p, self.epsilon))
    }
}

/// Projected-gradient attack settings; the step size defaults to a quarter
/// of the ball radius.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgdSpec {
    pub steps: usize,
    #[serde(default)]
    pub step_size: Option<f64>,
    #[serde(default)]
    pub random_init: bool,
}

impl PgdSpec {
    pub fn build(&self, field: &str, epsilon: f64, seed: u64) -> Result<PgdConfig, CliError> {
        let step = self
            .step_size
            .unwrap_or((epsilon / 4.0).max(f64::MIN_POSITIVE));
        at_field(
            field,
            PgdConfig::new(self.steps, step, self.random_init, seed),
        )
    }
}

/// `entropy` subcommand: tabulate the smoothed objective (value, gradient,
/// Hessian, spectral-norm bound) of a raw base variant at listed parameter
/// points.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyConfig {
    pub schema_version: u32,
    pub model: ModelSpec,
    pub data: DataSource,
    /// Raw objective to smooth: clean, adv_l2 or adv_linf.
    pub base: LossVariant,
    pub gamma: f64,
    #[serde(default)]
    pub quad: QuadratureSpec,
    pub thetas: Vec<Vec<f64>>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl EntropyConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_schema_version(self.schema_version)?;
        at_field("model", self.model.validate())?;
        // One composite check covers gamma, quad and the base-variant rules
        // (no smoothing of smoothed or PGD-sampled objectives).
        let combined = LossVariant::Entropy {
            gamma: self.gamma,
            quad: self.quad,
            base: Box::new(self.base.clone()),
        };
        at_field("base", combined.validate())?;
        if self.thetas.is_empty() {
            return Err(CliError::config("thetas", "must list at least one point"));
        }
        Ok(())
    }
}

/// `verify-lemmas` subcommand: which named check suites to run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub schema_version: u32,
    #[serde(default = "all_suites")]
    pub suites: Vec<CheckSuite>,
}

fn all_suites() -> Vec<CheckSuite> {
    vec![
        CheckSuite::Attacks,
        CheckSuite::SmoothnessProbes,
        CheckSuite::EntropySgd,
    ]
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_schema_version(self.schema_version)?;
        if self.suites.is_empty() {
            return Err(CliError::config("suites", "must list at least one suite"));
        }
        for (i, s) in self.suites.iter().enumerate() {
            if self.suites[..i].contains(s) {
                return Err(CliError::config(
                    format!("suites[{i}]"),
                    format!("duplicate suite {s}"),
                ));
            }
        }
        Ok(())
    }
}
