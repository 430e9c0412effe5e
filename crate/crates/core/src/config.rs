//! TOML run configuration shared by the command-line front end.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::atlas::AtlasConfig;
use crate::error::{Error, Result};
use crate::geodesic::{JumpOptions, JumpSchedule};
use crate::noise::NoiseParams;
use crate::surrogate::{AugmentConfig, RecordMethod, TrainConfig};
use crate::synthesis::SynthesisOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSection {
    pub restarts: usize,
    pub restart_scale: f64,
    /// Worst-case six-state fidelity a gate field must reach; `0` disables
    /// the protection check.
    pub min_fidelity: f64,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        let d = SynthesisOptions::default();
        Self {
            restarts: d.restarts,
            restart_scale: d.restart_scale,
            min_fidelity: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AmpdampSection {
    /// Qubit gap; defaults to ω_c.
    pub omega0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub n_targets: usize,
    pub test_fraction: f64,
    pub q_max: f64,
    pub n_it: usize,
    pub kfold: usize,
    pub method: RecordMethod,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            n_targets: 1000,
            test_fraction: 1.0 / 3.0,
            q_max: 500.0,
            n_it: 30,
            kfold: 4,
            method: RecordMethod::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub grid_n: usize,
    pub out_dir: PathBuf,
    pub noise: NoiseParams,
    pub schedule: JumpSchedule,
    pub tolerances: JumpOptions,
    pub synthesis: SynthesisSection,
    pub ampdamp: AmpdampSection,
    pub surrogate: TrainConfig,
    pub augment: AugmentConfig,
    pub dataset: DatasetSection,
    pub atlas: AtlasConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 1,
            grid_n: crate::geodesic::DEFAULT_STEPS,
            out_dir: PathBuf::from("out"),
            noise: NoiseParams::default(),
            schedule: JumpSchedule::default(),
            tolerances: JumpOptions::default(),
            synthesis: SynthesisSection::default(),
            ampdamp: AmpdampSection::default(),
            surrogate: TrainConfig::default(),
            augment: AugmentConfig::default(),
            dataset: DatasetSection::default(),
            atlas: AtlasConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serialisable")
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.schedule.validate()?;
        self.surrogate.validate()?;
        self.atlas.validate()?;
        if self.grid_n < 100 {
            return Err(Error::InvalidArgument(format!(
                "grid_n must be >= 100, got {}",
                self.grid_n
            )));
        }
        if !(0.0..1.0).contains(&self.dataset.test_fraction) {
            return Err(Error::InvalidArgument(
                "dataset.test_fraction must be in [0, 1)".into(),
            ));
        }
        if !(self.tolerances.tol > 0.0 && self.tolerances.final_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Options for gate synthesis, seeded from the master seed.
    pub fn synthesis_options(&self) -> SynthesisOptions {
        SynthesisOptions {
            grid_n: self.grid_n,
            schedule: self.schedule,
            jump: self.tolerances,
            restarts: self.synthesis.restarts,
            restart_scale: self.synthesis.restart_scale,
            seed: self.seed,
        }
    }

    /// Reduced schedule used when building training data.
    pub fn dataset_options(&self) -> SynthesisOptions {
        SynthesisOptions {
            schedule: JumpSchedule {
                q_in: self.schedule.q_in,
                q_max: self.dataset.q_max,
                n_it: self.dataset.n_it,
            },
            restarts: 0,
            ..self.synthesis_options()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.surrogate.clone()
        }
    }

    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            seed: self.seed,
            ..self.augment.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_toml("grid_n = 400\n[noise]\neta = 0.1\nomega_c = 1.0\n[schedule]\nq_in = 10.0\nq_max = 500.0\nn_it = 30\n").unwrap();
        assert_eq!(c.grid_n, 400);
        assert_eq!(c.noise.thermal(), 1.0);
        assert_eq!(c.surrogate.hidden, vec![256; 5]);
    }

    #[test]
    fn rejects_bad_values_and_typos() {
        assert!(RunConfig::from_toml("grid_n = 50").is_err());
        assert!(RunConfig::from_toml("gridn = 500").is_err());
        assert!(RunConfig::from_toml("[noise]\neta = 0.3\nomega_c = -1.0").is_err());
    }
}
