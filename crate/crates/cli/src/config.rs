//! JSON run configuration.
//!
//! One file drives one subcommand. Physical parameters come either as a
//! `model` (bosonic Kitaev chain) or a `chain` (single Hatano–Nelson chain);
//! each subcommand reads its own options section.

use std::path::{Path, PathBuf};

use kitaev_core::dynamics::{Precision, WavepacketSpec};
use kitaev_core::geometry::TreeMethod;
use kitaev_core::model::{Band, HNParams, ModelParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional guard; must name the subcommand being run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<HNParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Main CSV output; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolve: Option<EvolveOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curved: Option<CurvedOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepOptions>,
}

/// Which generator of a `model` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    X,
    P,
    Coupled,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Target>,
    /// Also compute eigenvectors and report residuals.
    #[serde(default)]
    pub vectors: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Rk4,
    Exact,
}

/// Unit of the configured times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    /// Times are τ itself.
    #[default]
    Bare,
    /// Times are `√|t_L t_R|·τ` (`√|J²-Δ²|·τ` for a model).
    Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Target>,
    pub packet: WavepacketSpec,
    pub times: Vec<f64>,
    #[serde(default)]
    pub time_unit: TimeUnit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default)]
    pub method: Method,
    /// Prepare the packet at this band edge, subtract the gain and write the
    /// closed-form continuum overlay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<Band>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<Precision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeOptions {
    pub q: usize,
    #[serde(rename = "N")]
    pub layers: usize,
    #[serde(default = "one")]
    pub t: f64,
    pub times: Vec<f64>,
    #[serde(default = "default_tree_method")]
    pub method: TreeMethod,
    /// Real layer profile of the initial state; a Gaussian centred on layer
    /// 3 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_values: Option<Vec<f64>>,
    /// Also write the edge list next to the main output.
    #[serde(default)]
    pub edges: bool,
}

fn one() -> f64 {
    1.0
}

fn default_tree_method() -> TreeMethod {
    TreeMethod::Rk4 { dt: 1e-3 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvedOptions {
    pub band: Band,
    /// Number of `d -> d/2` refinements at fixed length `(L+1)·d`.
    #[serde(default)]
    pub refine: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanOptions {
    #[serde(rename = "J", default = "one")]
    pub j: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
    #[serde(rename = "L")]
    pub ls: Vec<usize>,
    #[serde(rename = "mu")]
    pub mus: Vec<f64>,
    #[serde(default = "yes")]
    pub exact: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepTarget {
    GapPrediction,
    DoubletGap,
    GroundEnergy,
    SpectralRadius,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOptions {
    #[serde(rename = "J", default = "one")]
    pub j: f64,
    #[serde(rename = "L")]
    pub ls: Vec<usize>,
    #[serde(rename = "Delta")]
    pub deltas: Vec<f64>,
    #[serde(rename = "mu")]
    pub mus: Vec<f64>,
    pub target: SweepTarget,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
