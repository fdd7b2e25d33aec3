//! Perspective-relaxed navigation reward and its strict-matching baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// angle success compares yaw only
    Relaxed,
    /// angle success compares the full view direction, pitch included
    Strict,
}

/// When the two success terms are paid out inside an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessSchedule {
    /// every step that ends inside the goal region
    PerStep,
    /// only on the STOP transition
    OnStop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub success_reward: f64,
    /// meters
    pub dist_threshold: f64,
    /// radians
    pub angle_threshold: f64,
    pub delay_penalty: f64,
    pub mode: RewardMode,
    pub schedule: SuccessSchedule,
    /// evaluation success radius, meters
    pub success_radius_m: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            success_reward: 5.0,
            dist_threshold: 1.0,
            angle_threshold: 25f64.to_radians(),
            delay_penalty: 0.01,
            mode: RewardMode::Relaxed,
            schedule: SuccessSchedule::OnStop,
            success_radius_m: 0.25,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.success_reward.is_nan() || self.success_reward <= 0.0 {
            return Err(Error::config("reward.success_reward must be positive"));
        }
        if self.dist_threshold.is_nan() || self.dist_threshold <= 0.0 {
            return Err(Error::config("reward.dist_threshold must be positive"));
        }
        if !(self.angle_threshold > 0.0 && self.angle_threshold <= std::f64::consts::PI) {
            return Err(Error::config("reward.angle_threshold must be in (0, pi]"));
        }
        if !(self.delay_penalty >= 0.0 && self.delay_penalty.is_finite()) {
            return Err(Error::config("reward.delay_penalty must be non-negative"));
        }
        if !(self.success_radius_m >= 0.0 && self.success_radius_m.is_finite()) {
            return Err(Error::config("reward.success_radius_m must be non-negative"));
        }
        Ok(())
    }
}

/// Agent state relative to the goal at one timestep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSnapshot {
    /// meters to the nearest goal viewpoint
    pub d: f64,
    /// radians, in `[0, π]`
    pub yaw_err: f64,
    /// radians, in `[0, π]`
    pub pitch_err: f64,
}

impl StepSnapshot {
    /// Angle error used by the success indicator under `mode`.
    pub fn angle_error(&self, mode: RewardMode) -> f64 {
        match mode {
            RewardMode::Relaxed => self.yaw_err,
            RewardMode::Strict => self.yaw_err.hypot(self.pitch_err).min(std::f64::consts::PI),
        }
    }
}

/// Individual reward terms for one transition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub reach: f64,
    pub view: f64,
    pub distance: f64,
    pub angle: f64,
    pub delay: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.reach + self.view + self.distance + self.angle - self.delay
    }
}

fn terms(prev: &StepSnapshot, cur: &StepSnapshot, cfg: &RewardConfig, pay_success: bool) -> RewardTerms {
    let inside = cur.d < cfg.dist_threshold;
    let aligned = cur.angle_error(cfg.mode) < cfg.angle_threshold;
    let reach = if inside && pay_success { cfg.success_reward } else { 0.0 };
    let view = if inside && aligned && pay_success {
        cfg.success_reward
    } else {
        0.0
    };
    // the dense angle term follows yaw in both modes
    let angle = if inside { prev.yaw_err - cur.yaw_err } else { 0.0 };
    RewardTerms {
        reach,
        view,
        distance: prev.d - cur.d,
        angle,
        delay: cfg.delay_penalty,
    }
}

/// Per-step reward with both success terms evaluated at `cur`.
pub fn step_reward(prev: &StepSnapshot, cur: &StepSnapshot, cfg: &RewardConfig) -> f64 {
    terms(prev, cur, cfg, true).total()
}

/// Reward the environment pays for one transition, honoring `cfg.schedule`.
pub fn transition_terms(prev: &StepSnapshot, cur: &StepSnapshot, stopped: bool, cfg: &RewardConfig) -> RewardTerms {
    let pay = match cfg.schedule {
        SuccessSchedule::PerStep => true,
        SuccessSchedule::OnStop => stopped,
    };
    terms(prev, cur, cfg, pay)
}

pub fn transition_reward(prev: &StepSnapshot, cur: &StepSnapshot, stopped: bool, cfg: &RewardConfig) -> f64 {
    transition_terms(prev, cur, stopped, cfg).total()
}

/// Episode success: STOP issued within the success radius.
pub fn success_test(cur: &StepSnapshot, stopped: bool, cfg: &RewardConfig) -> bool {
    stopped && cur.d <= cfg.success_radius_m + 1e-9
}
