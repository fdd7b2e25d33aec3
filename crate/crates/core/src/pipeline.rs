//! End-to-end helpers: build a scene/episode suite from a [`RunConfig`]
//! and train one agent variant on it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentParams, Variant};
use crate::config::RunConfig;
use crate::env::NavWorld;
use crate::episodes::{self, Episode};
use crate::error::Result;
use crate::semspace::Codebook;
use crate::train::{self, Observer, ProgressRow};
use crate::world::{self, Scene, SceneAssets};
use crate::{io, par, seed};

/// Seed of scene `i` under data seed `seed`.
pub fn scene_seed(seed: u64, i: usize) -> u64 {
    seed::derive(seed, "scenes") % 1_000_000_000 + i as u64
}

pub fn generate_scenes(cfg: &RunConfig, count: usize) -> Result<Vec<Scene>> {
    cfg.world.validate(&cfg.semspace)?;
    par::map_range(count, |i| {
        world::generate_scene(scene_seed(cfg.seed, i), &cfg.world.generation, &cfg.semspace)
    })
    .into_iter()
    .collect()
}

/// Index of a directory of scene files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub seed: u64,
    /// scene file names, relative to the manifest's directory
    pub scenes: Vec<String>,
}

impl SceneManifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    /// Writes `scenes` into `dir` as one JSON file each plus the manifest.
    pub fn write(dir: &Path, seed: u64, scenes: &[Scene]) -> Result<Self> {
        io::create_dir(dir)?;
        let mut names = Vec::with_capacity(scenes.len());
        for s in scenes {
            let name = format!("{}.json", s.scene_id);
            s.save(&dir.join(&name))?;
            names.push(name);
        }
        let manifest = Self { seed, scenes: names };
        io::write_json(&dir.join(Self::FILE_NAME), &manifest)?;
        Ok(manifest)
    }

    /// Accepts the manifest file itself or the directory holding it.
    pub fn read(path: &Path) -> Result<(Self, Vec<Scene>)> {
        let file = if path.is_dir() {
            path.join(Self::FILE_NAME)
        } else {
            path.to_path_buf()
        };
        let manifest: Self = io::read_json(&file)?;
        let dir = file.parent().unwrap_or(Path::new("."));
        let scenes = manifest
            .scenes
            .iter()
            .map(|n| Scene::load(&dir.join(n)))
            .collect::<Result<Vec<_>>>()?;
        Ok((manifest, scenes))
    }
}

pub fn scene_assets(scenes: Vec<Scene>, codebook: &Codebook) -> Result<Vec<SceneAssets>> {
    scenes.into_iter().map(|s| SceneAssets::new(s, codebook)).collect()
}

/// Codebook, scenes, and train/eval episodes for one configuration.
pub struct Suite {
    pub codebook: Codebook,
    pub scenes: Vec<SceneAssets>,
    pub train: Vec<Episode>,
    pub eval: Vec<Episode>,
}

impl Suite {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let codebook = Codebook::build(&cfg.semspace)?;
        let scenes = scene_assets(generate_scenes(cfg, cfg.suite.scenes)?, &codebook)?;
        let train = episodes::generate_episodes(
            &scenes,
            &codebook,
            &cfg.episodes,
            &cfg.world,
            cfg.suite.train_episodes,
            seed::derive(cfg.seed, "episodes/train"),
            "train",
        )?;
        let eval = episodes::generate_episodes(
            &scenes,
            &codebook,
            &cfg.episodes,
            &cfg.world,
            cfg.suite.eval_episodes,
            seed::derive(cfg.seed, "episodes/eval"),
            "eval",
        )?;
        Ok(Self {
            codebook,
            scenes,
            train,
            eval,
        })
    }

    pub fn nav<'a>(&'a self, cfg: &'a RunConfig) -> NavWorld<'a> {
        NavWorld::new(&self.scenes, &self.codebook, &cfg.world, &cfg.reward)
    }
}

/// Agent and PPO seeds both follow `train_seed`.
pub fn seeded(cfg: &RunConfig, variant: Variant, train_seed: u64) -> RunConfig {
    let mut c = cfg.clone();
    c.agent.variant = variant;
    c.agent.seed = seed::derive(train_seed, "agent");
    c.ppo.seed = seed::derive(train_seed, "ppo");
    c
}

/// Trains a fresh agent of `variant` on `train` episodes.
pub fn train_agent(
    cfg: &RunConfig,
    nav: &NavWorld,
    train: &[Episode],
    log_trajectories: bool,
    observer: &mut Observer,
) -> Result<(AgentParams, Vec<ProgressRow>)> {
    let mut params = AgentParams::new(&cfg.agent)?;
    let rows = train::train(&mut params, nav, train, &cfg.ppo, log_trajectories, observer)?;
    Ok((params, rows))
}
