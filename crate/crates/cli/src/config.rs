//! Run configuration, read from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dpam::data::{MarkerDecl, Schema};
use dpam::diagnostics::GateThresholds;
use dpam::model::{AnchorMode, MarkerModel, Priors};
use dpam::prediction::{GridSpec, PredictionConfig};
use dpam::sampler::SamplerConfig;
use dpam::simulator::{default_scenario, SimConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Not written to resolved configs, so outputs do not depend on where they land.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    /// Input files. Without this section the cohort is simulated from `simulation`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimConfig>,
    pub model: ModelConfig,
    pub sampler: SamplerConfig,
    pub gate: GateThresholds,
    pub prediction: PredictConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("dpam-out"),
            data: None,
            simulation: None,
            model: ModelConfig::default(),
            sampler: SamplerConfig::default(),
            gate: GateThresholds::default(),
            prediction: PredictConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Values are already on the normalized (Gaussian) scale.
    #[default]
    Normalized,
    /// Raw marker values; the weighted percentile transform is fitted first.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub observations: PathBuf,
    pub subjects: PathBuf,
    #[serde(default)]
    pub scale: Scale,
    #[serde(default)]
    pub schema: Schema,
    pub markers: Vec<MarkerDecl>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub mode: AnchorMode,
    pub eps_l: f64,
    pub eps_u: f64,
    /// Per-marker structure, matched to the data by name. Markers not listed
    /// get a random intercept only; with simulated data the generator's
    /// structure is used when this is empty.
    pub markers: Vec<MarkerModel>,
    pub priors: Priors,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mode: AnchorMode::Anchored,
            eps_l: 1.5,
            eps_u: 1.5,
            markers: Vec::new(),
            priors: Priors::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub name: String,
    /// Covariate values on the input scale; unlisted covariates sit at their centre.
    #[serde(default)]
    pub covariates: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    pub grid: GridSpec,
    pub mc_draws: usize,
    pub antithetic: bool,
    pub threshold: f64,
    pub seed: u64,
    pub profiles: Vec<Profile>,
}

impl Default for PredictConfig {
    fn default() -> Self {
        let p = PredictionConfig::default();
        PredictConfig {
            grid: p.grid,
            mc_draws: p.mc_draws,
            antithetic: p.antithetic,
            threshold: p.threshold,
            seed: p.seed,
            profiles: vec![Profile {
                name: "reference".into(),
                covariates: BTreeMap::new(),
            }],
        }
    }
}

impl PredictConfig {
    pub fn settings(&self) -> PredictionConfig {
        PredictionConfig {
            grid: self.grid.clone(),
            mc_draws: self.mc_draws,
            antithetic: self.antithetic,
            threshold: self.threshold,
            seed: self.seed,
        }
    }
}

/// Command-line settings that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<AnchorMode>,
    pub eps: Option<f64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Reads `path` (or the defaults when `None`), applies `ov` and resolves
    /// relative input paths against the config file's directory.
    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read {}: {e}", p.display())))?;
                let mut cfg: RunConfig = toml::from_str(&text)
                    .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
                let base = p.parent().unwrap_or(Path::new(""));
                if let Some(d) = &mut cfg.data {
                    d.observations = base.join(&d.observations);
                    d.subjects = base.join(&d.subjects);
                }
                cfg
            }
            None => RunConfig::default(),
        };
        if cfg.data.is_none() && cfg.simulation.is_none() {
            cfg.simulation = Some(default_scenario());
        }
        if let Some(seed) = ov.seed {
            cfg.sampler.seed = seed;
            cfg.prediction.seed = seed;
            if let Some(sim) = &mut cfg.simulation {
                sim.seed = seed;
            }
        }
        if let Some(mode) = ov.mode {
            cfg.model.mode = mode;
        }
        if let Some(eps) = ov.eps {
            cfg.model.eps_l = eps;
            cfg.model.eps_u = eps;
        }
        if let Some(out) = &ov.out {
            cfg.out_dir = out.clone();
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::usage(format!("cannot render config: {e}")))
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("{}: {e}", origin.display())))
    }
}
