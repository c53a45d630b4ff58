use std::path::Path;

use gompertz_core::bayes::{GibbsConfig, PriorHyper};
use gompertz_core::diagnostics::DEFAULT_MAX_LAG;
use gompertz_core::mcem::McemConfig;
use serde::{Deserialize, Serialize};

/// Settings read from a JSON config file. Missing keys take their defaults;
/// command-line flags override the file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub prior: PriorHyper<f64>,
    pub gibbs: GibbsConfig,
    pub mcem: McemConfig,
    /// Nominal level of reported intervals.
    pub level: f64,
    pub max_lag: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            prior: PriorHyper::default(),
            gibbs: GibbsConfig::default(),
            mcem: McemConfig::default(),
            level: 0.95,
            max_lag: DEFAULT_MAX_LAG,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.validate().map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.prior.validate().map_err(|e| e.to_string())?;
        self.mcem.validate().map_err(|e| e.to_string())?;
        if self.gibbs.iterations == 0 {
            return Err("gibbs.iterations must be positive".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(format!("level {} is outside (0, 1)", self.level));
        }
        Ok(())
    }
}
