//! Run configuration: one TOML document with a section per component.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::episodes::EpisodeConfig;
use crate::error::{Error, Result};
use crate::infer::EvalConfig;
use crate::io;
use crate::reward::RewardConfig;
use crate::semspace::SemanticSpaceConfig;
use crate::train::PpoConfig;
use crate::world::WorldConfig;

/// How much data a run generates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub scenes: usize,
    pub train_episodes: usize,
    pub eval_episodes: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            scenes: 20,
            train_episodes: 1000,
            eval_episodes: 200,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// data seed: scenes and episodes derive from it
    pub seed: u64,
    pub suite: SuiteConfig,
    pub semspace: SemanticSpaceConfig,
    pub world: WorldConfig,
    pub episodes: EpisodeConfig,
    pub reward: RewardConfig,
    pub agent: AgentConfig,
    pub ppo: PpoConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Validates every section and the constraints that span sections.
    pub fn validate(&self) -> Result<()> {
        self.semspace.validate()?;
        self.world.validate(&self.semspace)?;
        self.episodes.validate(self.world.headings)?;
        self.reward.validate()?;
        self.agent.validate()?;
        self.ppo.validate()?;
        self.eval.validate()?;
        if self.agent.embed_dim != self.semspace.dim {
            return Err(Error::config(format!(
                "agent.embed_dim ({}) must equal semspace.dim ({})",
                self.agent.embed_dim, self.semspace.dim
            )));
        }
        if self.agent.layout_dim != self.world.fov.n_rays {
            return Err(Error::config(format!(
                "agent.layout_dim ({}) must equal world.fov.n_rays ({})",
                self.agent.layout_dim, self.world.fov.n_rays
            )));
        }
        if self.suite.scenes == 0 {
            return Err(Error::config("suite.scenes must be positive"));
        }
        Ok(())
    }

    /// Small single-room suite that trains in about a minute per run.
    pub fn easy() -> Self {
        let mut c = RunConfig {
            suite: SuiteConfig {
                scenes: 24,
                train_episodes: 480,
                eval_episodes: 200,
            },
            ..RunConfig::default()
        };
        c.semspace.dim = 32;
        c.world.generation.rooms = 1;
        c.world.generation.width = [8, 9];
        c.world.generation.height = [8, 9];
        c.world.generation.objects_per_room = 3;
        c.world.generation.obstacles_per_room = 1;
        c.world.generation.distinct_categories = true;
        c.episodes.distance_band_m = [1.0, 2.5];
        c.reward.dist_threshold = 0.3;
        c.agent.embed_dim = 32;
        c.agent.spm_dim = 32;
        c.agent.obs_encoder_dims = vec![32, 32];
        c.agent.hidden_dim = 64;
        c.ppo.learning_rate = 1e-3;
        c.ppo.gamma = 0.95;
        c.ppo.n_envs = 16;
        c.ppo.horizon = 64;
        c.ppo.max_episode_steps = 40;
        c.ppo.total_steps = 300_000;
        c.eval.max_steps = 40;
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_text(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for cfg in [RunConfig::default(), RunConfig::easy()] {
            cfg.validate().unwrap();
            let text = cfg.to_toml().unwrap();
            let back = RunConfig::from_toml(&text).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_toml().unwrap(), text);
        }
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(RunConfig::from_toml("seed = 1\nbogus = 2\n").is_err());
        assert!(RunConfig::from_toml("[ppo]\nlearning_rat = 0.1\n").is_err());
        assert!(RunConfig::from_toml("seed = 3\n").is_ok());
    }

    #[test]
    fn rejects_cross_section_mismatch() {
        let err = RunConfig::from_toml("[agent]\nspm_dim = 128\n").unwrap_err();
        assert!(err.to_string().contains("spm_dim"));
        assert!(RunConfig::from_toml("[semspace]\ndim = 32\n").is_err());
        assert!(RunConfig::from_toml("[world.fov]\nn_rays = 8\n").is_err());
    }
}
