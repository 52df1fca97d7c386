//! Experiment configuration: a TOML file with one table per subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use svplab::experiments::{default_q_grid, default_r_grid, FeatureFamily, ResidualMode, TrialConfig};
use svplab::features::FourierIndexing;
use svplab::spectrum::BiLevelParams;

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub model: ModelSection,
    pub solve: SolveSection,
    pub figure1: Figure1Section,
    pub heatmap: HeatmapSection,
    pub risk: RiskSection,
    pub diagnostics: DiagnosticsSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 2024,
            out: None,
            workers: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub n: usize,
    pub beta: f64,
    pub r: f64,
    pub q: f64,
    pub family: FeatureFamily,
    pub target_support_half: usize,
    pub indexing: FourierIndexing,
    pub residual_mode: ResidualMode,
    pub fixed_target: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svm_tol: Option<f64>,
    pub svm_max_iter: usize,
    pub tau: f64,
    pub grid_size: usize,
    pub block_size: usize,
    pub explicit_budget: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let params = BiLevelParams {
            n: 100,
            beta: 3.2,
            r: 0.4,
            q: 0.8,
        };
        let base = TrialConfig::new(params, FeatureFamily::Fourier, 0);
        Self {
            n: params.n,
            beta: params.beta,
            r: params.r,
            q: params.q,
            family: base.family,
            target_support_half: base.target_support_half,
            indexing: base.indexing,
            residual_mode: base.residual_mode,
            fixed_target: base.fixed_target,
            svm_tol: base.svm_tol,
            svm_max_iter: base.svm_max_iter,
            tau: base.tau,
            grid_size: base.grid_size,
            block_size: base.block_size,
            explicit_budget: base.explicit_budget as u64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    pub trial: u64,
    pub abc: bool,
    /// Monte-Carlo points for excess risk, 0 to skip.
    pub mc_points: usize,
}

impl Default for SolveSection {
    fn default() -> Self {
        Self {
            trial: 0,
            abc: true,
            mc_points: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure1Section {
    pub qs: Vec<f64>,
    pub trial: u64,
}

impl Default for Figure1Section {
    fn default() -> Self {
        Self {
            qs: svplab::experiments::FIGURE1_QS.to_vec(),
            trial: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapSection {
    pub trials: usize,
    /// Also solve the SVM and certify every trial.
    pub cross_check: bool,
    pub r_grid: Vec<f64>,
    pub q_grid: Vec<f64>,
}

impl Default for HeatmapSection {
    fn default() -> Self {
        Self {
            trials: 25,
            cross_check: true,
            r_grid: default_r_grid(),
            q_grid: default_q_grid(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskSection {
    pub n_list: Vec<usize>,
    pub trials: usize,
    pub mc_points: usize,
}

impl Default for RiskSection {
    fn default() -> Self {
        Self {
            n_list: vec![50, 100, 200, 400],
            trials: 10,
            mc_points: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub trials: usize,
    pub abc: bool,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self { trials: 25, abc: true }
    }
}

/// The `config` table of a manifest written by an earlier run.
#[derive(Deserialize)]
struct ManifestEcho {
    config: Config,
}

impl Config {
    /// Reads a TOML config, or the config echoed in a `manifest.json`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: format!("cannot read: {e}"),
        })?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str::<ManifestEcho>(&text)
                .map(|m| m.config)
                .map_err(|e| e.to_string())
        } else {
            toml::from_str::<Config>(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })
    }

    /// Harness config for the `[model]` table with the run seed.
    pub fn trial_config(&self) -> Result<TrialConfig, CliError> {
        let m = &self.model;
        let params = BiLevelParams {
            n: m.n,
            beta: m.beta,
            r: m.r,
            q: m.q,
        };
        let config = TrialConfig {
            target_support_half: m.target_support_half,
            svm_tol: m.svm_tol,
            svm_max_iter: m.svm_max_iter,
            tau: m.tau,
            indexing: m.indexing,
            residual_mode: m.residual_mode,
            fixed_target: m.fixed_target,
            grid_size: m.grid_size,
            block_size: m.block_size,
            explicit_budget: m.explicit_budget as u128,
            ..TrialConfig::new(params, m.family, self.run.seed)
        };
        config.validate().map_err(|e| CliError::Invalid(format!("[model] {e}")))?;
        if m.block_size == 0 {
            return Err(CliError::Invalid("[model] block_size must be positive".into()));
        }
        if let Some(tol) = m.svm_tol {
            if !(tol > 0.0) {
                return Err(CliError::Invalid(format!("[model] svm_tol = {tol} must be positive")));
            }
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        let c: Config = toml::from_str("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.heatmap.r_grid.len(), 19);
        assert_eq!(c.heatmap.q_grid.len(), 41);
    }

    #[test]
    fn sections_override_defaults() {
        let c: Config = toml::from_str(
            "[run]\nseed = 7\n[model]\nq = -0.4\nfamily = \"gaussian\"\n[risk]\nn_list = [10, 20]\n",
        )
        .unwrap();
        assert_eq!(c.run.seed, 7);
        assert_eq!(c.model.q, -0.4);
        assert_eq!(c.model.family, FeatureFamily::Gaussian);
        assert_eq!(c.model.beta, 3.2);
        assert_eq!(c.risk.n_list, vec![10, 20]);
    }

    #[test]
    fn unknown_key_reports_location() {
        let err = toml::from_str::<Config>("[model]\nn = 10\nbeta_typo = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("beta_typo"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn bad_model_is_invalid() {
        let mut c = Config::default();
        c.model.beta = 0.5;
        assert!(matches!(c.trial_config(), Err(CliError::Invalid(_))));
    }

    #[test]
    fn toml_round_trip() {
        let c = Config::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<Config>(&text).unwrap(), c);
    }
}
