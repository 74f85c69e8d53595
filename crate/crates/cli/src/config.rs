//! Pipeline configuration: one JSON document with a section per stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use slowman::dmap::DmapParams;
use slowman::extension::SchemeConfig;
use slowman::reduced::{method_preset, Formulation};
use slowman::sampling::{SamplingPlan, SyntheticKind, SyntheticParams};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Artifact directory; not part of the configuration identity.
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
    pub sampling: SamplingConfig,
    #[serde(default = "default_dmap")]
    pub dmap: DmapParams,
    #[serde(default)]
    pub operators: OperatorsConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub comparison: ComparisonConfig,
}

fn default_dmap() -> DmapParams {
    DmapParams { n_coords: 1, ..Default::default() }
}

/// How distances between ambient states are scaled while sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricChoice {
    Identity,
    /// `1 / max |v|` over the sampling vertices, per coordinate.
    Box,
    Diagonal(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Built-in vector field, e.g. `davis-skodje`.
    #[serde(default)]
    pub model: Option<String>,
    /// Stiffness parameter of `davis-skodje`.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Mechanism document (JSON) for mass-action kinetics.
    #[serde(default)]
    pub mechanism: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticKind>,
    #[serde(default)]
    pub synthetic_params: SyntheticParams,
    /// Initial-condition box for fields without conservation laws.
    #[serde(default, rename = "box")]
    pub bounds: Option<BoxSpec>,
    /// Fresh mixture defining the admissible polytope of a mechanism.
    #[serde(default)]
    pub fresh: Option<Vec<f64>>,
    #[serde(default = "default_metric")]
    pub metric: MetricChoice,
    #[serde(default = "default_plan")]
    pub plan: SamplingPlan,
}

fn default_metric() -> MetricChoice {
    MetricChoice::Box
}

fn default_plan() -> SamplingPlan {
    SamplingPlan { tau_f: 0.8, t_end: 6.0, d_min: 0.002, n_trajectories: 100, ..Default::default() }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            model: Some("davis-skodje".into()),
            gamma: None,
            mechanism: None,
            synthetic: None,
            synthetic_params: SyntheticParams::default(),
            bounds: None,
            fresh: None,
            // y2 varies over a quarter of the range of y1 near the slow curve
            metric: MetricChoice::Diagonal(vec![0.25, 1.0]),
            plan: SamplingPlan { d_min: 0.003, ..default_plan() },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorsConfig {
    /// One of the twelve method presets; preset 2 when nothing is given.
    pub preset: Option<u8>,
    pub lifting: Option<SchemeConfig>,
    pub restriction: Option<SchemeConfig>,
    pub formulation: Option<Formulation>,
}

/// Operator choice after applying the preset and explicit overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedOperators {
    pub lifting: SchemeConfig,
    pub restriction: SchemeConfig,
    pub formulation: Formulation,
}

impl OperatorsConfig {
    pub fn resolve(&self) -> Result<ResolvedOperators, CliError> {
        let base = method_preset(self.preset.unwrap_or(2)).map_err(|e| CliError::Config(format!("operators.preset: {e}")))?;
        Ok(ResolvedOperators {
            lifting: self.lifting.clone().unwrap_or(base.lifting),
            restriction: self.restriction.clone().unwrap_or(base.restriction),
            formulation: self.formulation.unwrap_or(base.formulation),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Nodes per reduced axis; 60 on every axis when absent.
    pub nodes: Option<Vec<usize>>,
    /// `[min, max]` per axis; fitted to the training embedding when absent.
    pub bounds: Option<Vec<[f64; 2]>>,
    /// Relative padding of the fitted bounds.
    pub pad: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { nodes: None, bounds: None, pad: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RhsSource {
    #[default]
    Table,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Reduced initial condition; the restriction of `y0` when absent.
    #[serde(default)]
    pub u0: Option<Vec<f64>>,
    /// Detailed initial condition; the lifting of `u0` when only that is
    /// given, a model-specific state when neither is.
    #[serde(default)]
    pub y0: Option<Vec<f64>>,
    pub t_end: f64,
    /// Output intervals over `[0, t_end]`.
    #[serde(default = "default_n_out")]
    pub n_out: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default)]
    pub source: RhsSource,
}

fn default_n_out() -> usize {
    500
}

fn default_rel_tol() -> f64 {
    1e-9
}

fn default_abs_tol() -> f64 {
    1e-12
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            u0: None,
            y0: None,
            t_end: 5.0,
            n_out: default_n_out(),
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            source: RhsSource::Table,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparisonConfig {
    /// Compare artifacts even when their configuration hashes differ. An
    /// invocation setting, so it does not enter the hash.
    #[serde(skip_serializing)]
    pub force: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            out_dir: None,
            sampling: SamplingConfig::default(),
            dmap: default_dmap(),
            operators: OperatorsConfig::default(),
            grid: GridConfig::default(),
            simulation: SimulationConfig::default(),
            comparison: ComparisonConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                CliError::Config(inner.to_string())
            } else {
                CliError::Config(format!("{path}: {inner}"))
            }
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Hex SHA-256 of the canonical JSON form, excluding the output path.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Checks cross-section consistency that serde cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.sampling;
        let sources = [s.model.is_some(), s.mechanism.is_some(), s.synthetic.is_some()];
        match sources.iter().filter(|v| **v).count() {
            1 => {}
            0 => return Err(CliError::Config("sampling: one of `model`, `mechanism` or `synthetic` is required".into())),
            _ => return Err(CliError::Config("sampling: `model`, `mechanism` and `synthetic` are exclusive".into())),
        }
        if let Some(b) = &s.bounds {
            if b.lo.len() != b.hi.len() || b.lo.iter().zip(&b.hi).any(|(l, h)| !(l < h)) {
                return Err(CliError::Config("sampling.box: need lo < hi componentwise".into()));
            }
        }
        s.plan.validate().map_err(|e| CliError::Config(format!("sampling.plan: {e}")))?;
        self.operators.resolve()?;
        if let Some(n) = &self.grid.nodes {
            if n.iter().any(|&k| k < 2) {
                return Err(CliError::Config("grid.nodes: every axis needs at least two nodes".into()));
            }
        }
        let sim = &self.simulation;
        if !(sim.t_end > 0.0 && sim.t_end.is_finite()) {
            return Err(CliError::Config(format!("simulation.t_end: must be positive, got {}", sim.t_end)));
        }
        if sim.n_out == 0 {
            return Err(CliError::Config("simulation.n_out: must be positive".into()));
        }
        Ok(())
    }

    /// Built-in model name with its arguments, e.g. `davis-skodje(10)`.
    pub fn model_name(&self) -> Option<String> {
        let m = self.sampling.model.as_ref()?;
        Some(match self.sampling.gamma {
            Some(g) if !m.contains('(') => format!("{m}({g})"),
            _ => m.clone(),
        })
    }
}
