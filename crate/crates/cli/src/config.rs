use std::fs;
use std::path::{Path, PathBuf};

use practsig_core::cpt::{CostProfile, WeightingParams};
use practsig_core::model::{ModelKind, ZiLink};
use practsig_core::posterior::{Composition, PredictiveMode, SubjectMode, DEFAULT_CI};
use practsig_core::sampler::SamplerConfig;
use practsig_core::scenarios::Scenario;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// One JSON document describing a whole analysis. Command-line flags
/// override whatever it sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelKind>,
    pub zi_link: Option<ZiLink>,
    pub sampler: SamplerConfig,
    pub seed: Option<u64>,
    pub ci: f64,
    pub cost: CostProfile,
    pub weighting: WeightingParams,
    /// Extra scenarios, looked up by name before the presets.
    pub scenarios: Vec<Scenario>,
    pub predictive_mode: PredictiveMode,
    pub subject: SubjectMode,
    pub composition: Composition,
    pub n_rep: usize,
    pub data: Option<PathBuf>,
    pub draws: Vec<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: None,
            zi_link: None,
            sampler: SamplerConfig::default(),
            seed: None,
            ci: DEFAULT_CI,
            cost: CostProfile::default(),
            weighting: WeightingParams::default(),
            scenarios: Vec::new(),
            predictive_mode: PredictiveMode::default(),
            subject: SubjectMode::default(),
            composition: Composition::default(),
            n_rep: 1,
            data: None,
            draws: Vec::new(),
            out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("bad config {}: {e}", path.display())))
    }

    pub fn seed(&self, flag: Option<u64>) -> Result<u64, Failure> {
        flag.or(self.seed).ok_or_else(|| Failure::input("a seed is required: pass --seed or set `seed` in the config"))
    }

    pub fn out(&self, flag: Option<PathBuf>) -> Result<PathBuf, Failure> {
        flag.or_else(|| self.out.clone()).ok_or_else(|| Failure::input("an output path is required: pass --out"))
    }

    pub fn scenario(&self, name: &str) -> Result<Scenario, Failure> {
        match self.scenarios.iter().find(|s| s.name == name) {
            Some(s) => Ok(s.clone()),
            None => Ok(Scenario::preset(name)?),
        }
    }
}

/// Inputs and outputs must all be different files.
pub fn check_distinct(paths: &[&Path]) -> Result<(), Failure> {
    for (i, a) in paths.iter().enumerate() {
        if paths[i + 1..].iter().any(|b| a == b) {
            return Err(Failure::input(format!("path {} is used twice", a.display())));
        }
    }
    Ok(())
}
