//! Navigation episodes as a stepping environment shared by training and
//! evaluation.

use std::collections::HashMap;

use crate::agent::{AgentInput, Variant};
use crate::episodes::Episode;
use crate::error::{Error, Result};
use crate::reward::{self, RewardConfig, RewardTerms, StepSnapshot};
use crate::semspace::Codebook;
use crate::world::{self, Action, AgentPose, Observation, SceneAssets, WorldConfig};

/// Angular size of one pitch level, in degrees.
pub const PITCH_STEP_DEG: f64 = 30.0;

/// Read-only environment description.
pub struct NavWorld<'a> {
    pub scenes: &'a [SceneAssets],
    pub codebook: &'a Codebook,
    pub world: &'a WorldConfig,
    pub reward: &'a RewardConfig,
    index: HashMap<&'a str, usize>,
}

impl<'a> NavWorld<'a> {
    pub fn new(
        scenes: &'a [SceneAssets],
        codebook: &'a Codebook,
        world: &'a WorldConfig,
        reward: &'a RewardConfig,
    ) -> Self {
        let index = scenes
            .iter()
            .enumerate()
            .map(|(i, s)| (s.scene.scene_id.as_str(), i))
            .collect();
        Self {
            scenes,
            codebook,
            world,
            reward,
            index,
        }
    }

    pub fn scene_of(&self, ep: &Episode) -> Result<&'a SceneAssets> {
        self.index
            .get(ep.scene_id.as_str())
            .map(|&i| &self.scenes[i])
            .ok_or_else(|| Error::input(format!("episode {} names unknown scene {}", ep.episode_id, ep.scene_id)))
    }

    /// Scene assets plus goal-object index for an episode.
    pub fn resolve(&self, ep: &Episode) -> Result<(&'a SceneAssets, usize)> {
        let assets = self.scene_of(ep)?;
        let obj = assets.scene.object_index(&ep.goal_instance).ok_or_else(|| {
            Error::input(format!(
                "episode {}: goal instance {} not in scene {}",
                ep.episode_id, ep.goal_instance, ep.scene_id
            ))
        })?;
        Ok((assets, obj))
    }

    pub fn render(&self, assets: &SceneAssets, pose: &AgentPose) -> Observation {
        assets.render(pose, self.codebook, self.world)
    }

    /// Checks every episode resolves and every scene is known.
    pub fn check_episodes(&self, episodes: &[Episode]) -> Result<()> {
        for ep in episodes {
            self.resolve(ep)?;
        }
        Ok(())
    }
}

/// Goal side of a running episode: what the agent is given, and the view
/// the reward's angle terms compare against.
#[derive(Clone, Debug, PartialEq)]
pub struct Target {
    pub obj: usize,
    pub view_pose: AgentPose,
    pub goal: Vec<f64>,
}

/// Agent goal vector for candidate view `c` of `ep` under `variant`.
pub fn view_goal(ep: &Episode, c: usize, variant: Variant) -> Vec<f64> {
    let view = &ep.all_candidates[c];
    if variant.layout_goal() {
        view.layout.clone()
    } else {
        view.embedding.to_f64()
    }
}

pub fn snapshot(assets: &SceneAssets, target: &Target, pose: &AgentPose, headings: u32) -> StepSnapshot {
    let d = assets.fields.distance(&assets.scene, target.obj, pose.cell());
    let yaw_err = world::yaw_error(pose.yaw, target.view_pose.yaw, headings);
    let pitch_err = ((pose.pitch as f64 - target.view_pose.pitch as f64).abs() * PITCH_STEP_DEG)
        .to_radians()
        .min(std::f64::consts::PI);
    StepSnapshot { d, yaw_err, pitch_err }
}

pub fn agent_input(obs: &Observation, goal: &[f64], prev_action: Option<usize>) -> AgentInput {
    AgentInput {
        layout: obs.layout.clone(),
        semantic: obs.semantic.to_f64(),
        goal: goal.to_vec(),
        prev_action,
    }
}

/// One episode in progress.
#[derive(Clone, Debug)]
pub struct Running {
    pub scene: usize,
    pub target: Target,
    pub pose: AgentPose,
    pub snap: StepSnapshot,
    pub steps: usize,
    pub path_length: f64,
    pub episode_return: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub reward: f64,
    pub terms: RewardTerms,
    pub done: bool,
    pub stopped: bool,
    pub success: bool,
}

impl Running {
    pub fn start(nav: &NavWorld, ep: &Episode, target: Target) -> Result<Self> {
        let (assets, _) = nav.resolve(ep)?;
        let scene = nav
            .scenes
            .iter()
            .position(|s| std::ptr::eq(s, assets))
            .expect("resolved scene is in the list");
        let pose = ep.start;
        if !pose.is_valid(&assets.scene, nav.world.headings) {
            return Err(Error::input(format!(
                "episode {}: start pose is not on the floor",
                ep.episode_id
            )));
        }
        let snap = snapshot(assets, &target, &pose, nav.world.headings);
        Ok(Self {
            scene,
            target,
            pose,
            snap,
            steps: 0,
            path_length: 0.0,
            episode_return: 0.0,
        })
    }

    pub fn observe(&self, nav: &NavWorld) -> Observation {
        nav.render(&nav.scenes[self.scene], &self.pose)
    }

    /// Applies `action`; `done` is set on STOP or after `max_steps`.
    pub fn step(&mut self, nav: &NavWorld, action: Action, max_steps: usize) -> Transition {
        let assets = &nav.scenes[self.scene];
        let out = world::step(&assets.scene, &self.pose, action, nav.world.headings);
        let snap = snapshot(assets, &self.target, &out.pose, nav.world.headings);
        let terms = reward::transition_terms(&self.snap, &snap, out.stopped, nav.reward);
        let reward = terms.total();
        self.pose = out.pose;
        self.snap = snap;
        self.steps += 1;
        self.path_length += out.displacement;
        self.episode_return += reward;
        let success = reward::success_test(&snap, out.stopped, nav.reward);
        Transition {
            reward,
            terms,
            done: out.stopped || self.steps >= max_steps,
            stopped: out.stopped,
            success,
        }
    }
}
