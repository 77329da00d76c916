//! Experiment configuration: the single JSON document that, together with
//! its master seed, determines every output byte of a run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::{SchemeKind, VarianceRule};
use crate::matrix::{Mat, MatrixTarget};
use crate::scalar::ScalarLoss;
use crate::trajectory::{StepPlan, Thinning};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixTargetSpec {
    /// `Y = −I`.
    MinusIdentity,
    /// JSON file `{"d": n, "values": [row-major n·n entries]}`; relative paths
    /// resolve against the config file's directory.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    Scalar { loss: ScalarLoss },
    Matrix { target: MatrixTargetSpec },
}

impl ObjectiveSpec {
    pub fn is_scalar(&self) -> bool {
        matches!(self, ObjectiveSpec::Scalar { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    pub scheme: SchemeKind,
    pub k: usize,
    #[serde(default = "default_d")]
    pub d: usize,
}

fn default_d() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    #[default]
    Auto,
    Threads(usize),
}

impl Parallelism {
    pub fn threads(self) -> usize {
        match self {
            Parallelism::Auto => std::thread::available_parallelism().map_or(1, |n| n.get()),
            Parallelism::Threads(n) => n.max(1),
        }
    }
}

impl Serialize for Parallelism {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Parallelism::Auto => s.serialize_str("auto"),
            Parallelism::Threads(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Parallelism {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Count(usize),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) if s == "auto" => Ok(Parallelism::Auto),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("expected \"auto\" or a thread count, got {s:?}"))),
            Raw::Count(0) => Err(serde::de::Error::custom("thread count must be >= 1")),
            Raw::Count(n) => Ok(Parallelism::Threads(n)),
        }
    }
}

/// Defaults: `trials = 10`, `master_seed = 42`, geometric thinning 1.01,
/// `output_dir = "gdlab-out"`, `parallelism = "auto"`, and the step plan's
/// own defaults (cap 10⁷, threshold 0.1). `objective`, `grid` and
/// `plan.eta` are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSpec,
    pub grid: Vec<GridCell>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    pub plan: StepPlan,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default)]
    pub thinning: Thinning,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub parallelism: Parallelism,
    /// Directory used to resolve relative target files; not serialized.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_trials() -> u64 {
    10
}

pub const DEFAULT_SEED: u64 = 42;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("gdlab-out")
}

fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(config_error("trials", "must be at least 1"));
        }
        if self.grid.is_empty() {
            return Err(config_error("grid", "must list at least one (scheme, k, d) cell"));
        }
        self.plan.validate().map_err(|e| config_error("plan", e.to_string()))?;
        self.thinning.validate().map_err(|e| config_error("thinning", e.to_string()))?;
        let scalar = self.objective.is_scalar();
        for (i, cell) in self.grid.iter().enumerate() {
            let at = |field: &str| format!("grid[{i}].{field}");
            if cell.k == 0 {
                return Err(config_error(&at("k"), "must be at least 1"));
            }
            if cell.d == 0 {
                return Err(config_error(&at("d"), "must be at least 1"));
            }
            if scalar && cell.d != 1 {
                return Err(config_error(&at("d"), "scalar objectives use d = 1"));
            }
            let ok = if scalar { cell.scheme.supports_scalar() } else { cell.scheme.supports_matrix() };
            if !ok {
                let kind = if scalar { "scalar" } else { "matrix" };
                return Err(config_error(&at("scheme"), format!("{} is not a {kind} scheme", cell.scheme.id())));
            }
            if let SchemeKind::Explicit { values } = &cell.scheme {
                let need = if scalar { cell.k } else { cell.k * cell.d * cell.d };
                if values.len() != need {
                    return Err(config_error(&at("scheme.values"), format!("expected {need} values, got {}", values.len())));
                }
            }
        }
        for (i, cell) in self.grid.iter().enumerate() {
            if let Some(j) = self.grid[..i].iter().position(|c| c == cell) {
                return Err(config_error(&format!("grid[{i}]"), format!("duplicates grid[{j}]")));
            }
        }
        if let ObjectiveSpec::Matrix { target: spec @ MatrixTargetSpec::File(_) } = &self.objective {
            let target = self.matrix_target_for(spec)?;
            if let Some((i, cell)) = self.grid.iter().enumerate().find(|(_, c)| c.d != target.y.dim()) {
                return Err(config_error(
                    &format!("grid[{i}].d"),
                    format!("target is {0}x{0} but d = {1}", target.y.dim(), cell.d),
                ));
            }
        }
        Ok(())
    }

    fn matrix_target_for(&self, spec: &MatrixTargetSpec) -> Result<MatrixTarget> {
        match spec {
            MatrixTargetSpec::MinusIdentity => Ok(MatrixTarget::minus_identity(self.grid.first().map_or(1, |c| c.d))),
            MatrixTargetSpec::File(path) => {
                let full = match &self.base_dir {
                    Some(base) if path.is_relative() => base.join(path),
                    _ => path.clone(),
                };
                load_target_file(&full)
            }
        }
    }

    /// Target matrix for cells of dimension `d`.
    pub fn matrix_target(&self, d: usize) -> Result<MatrixTarget> {
        match &self.objective {
            ObjectiveSpec::Matrix { target: MatrixTargetSpec::MinusIdentity } => Ok(MatrixTarget::minus_identity(d)),
            ObjectiveSpec::Matrix { target } => self.matrix_target_for(target),
            ObjectiveSpec::Scalar { .. } => Err(config_error("objective", "scalar objective has no matrix target")),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let parent = e.path().to_string();
            let inner = e.into_inner();
            let message = inner.to_string();
            let path = match missing_field(&message) {
                Some(field) if parent == "." || parent.is_empty() => field.to_string(),
                Some(field) => format!("{parent}.{field}"),
                None => parent,
            };
            Error::Config { path, message }
        })?;
        Ok(config)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn missing_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetFile {
    d: usize,
    values: Vec<f64>,
}

fn load_target_file(path: &Path) -> Result<MatrixTarget> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error("objective.target.file", format!("cannot read {}: {e}", path.display())))?;
    let file: TargetFile = serde_json::from_str(&text)
        .map_err(|e| config_error("objective.target.file", format!("{}: {e}", path.display())))?;
    let y = Mat::from_row_major(file.d, file.values)
        .map_err(|e| config_error("objective.target.file", e.to_string()))?;
    Ok(MatrixTarget { y })
}

/// Single scalar trajectory at depth 7: quadratic target −1, near-one start,
/// `η = 10⁻²`, every iteration recorded.
pub fn figure1_config() -> ExperimentConfig {
    ExperimentConfig {
        objective: ObjectiveSpec::Scalar { loss: ScalarLoss::Quadratic { y: -1.0 } },
        grid: vec![GridCell { scheme: SchemeKind::ScalarNearOne { c1: 1.0 }, k: 7, d: 1 }],
        trials: 1,
        plan: StepPlan::new(1e-2, 10_000_000, 0.1).expect("valid plan"),
        master_seed: DEFAULT_SEED,
        thinning: Thinning::Every(1),
        output_dir: default_output_dir(),
        parallelism: Parallelism::Auto,
        base_dir: None,
    }
}

/// Matrix sweep with `Y = −I`, `d = 25`, `η = 10⁻³`, threshold 0.1 over Xavier
/// Gaussian and both near-identity variance rules for `k = 2..=k_max`.
pub fn figure2_config(k_max: usize, max_iters: u64, trials: u64) -> ExperimentConfig {
    let schemes = [
        SchemeKind::XavierGaussian,
        SchemeKind::NearIdentity { variance: VarianceRule::OneOverDk },
        SchemeKind::NearIdentity { variance: VarianceRule::OneOverDkSquared },
    ];
    let grid = schemes
        .iter()
        .flat_map(|s| (2..=k_max).map(move |k| GridCell { scheme: s.clone(), k, d: 25 }))
        .collect();
    ExperimentConfig {
        objective: ObjectiveSpec::Matrix { target: MatrixTargetSpec::MinusIdentity },
        grid,
        trials,
        plan: StepPlan { eta: 1e-3, max_iters, stop_threshold: 0.1 },
        master_seed: DEFAULT_SEED,
        thinning: Thinning::default(),
        output_dir: default_output_dir(),
        parallelism: Parallelism::Auto,
        base_dir: None,
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error("<file>", format!("cannot read {}: {e}", path.display())))?;
    let mut config = ExperimentConfig::from_json_str(&text)?;
    config.base_dir = path.parent().map(Path::to_path_buf);
    config.validate()?;
    Ok(config)
}
