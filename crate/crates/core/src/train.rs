//! On-policy training: parallel rollouts, GAE and clipped-surrogate PPO
//! with truncated backpropagation through time.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::agent::{self, ActMode, AgentInput, AgentParams, PolicyState, StepTrace};
use crate::env::{self, NavWorld, Running, Target};
use crate::episodes::Episode;
use crate::error::{Error, Result};
use crate::nn::{self, Adam, AdamConfig};
use crate::reward::RewardTerms;
use crate::world::Action;
use crate::{math, par, seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub max_episode_steps: usize,
    /// steps per environment per round
    pub horizon: usize,
    pub n_envs: usize,
    /// BPTT chunk length
    pub seq_len: usize,
    pub total_steps: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs: 4,
            minibatches: 4,
            learning_rate: 2.5e-4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            max_episode_steps: 200,
            horizon: 128,
            n_envs: 8,
            seq_len: 16,
            total_steps: 1_000_000,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::config("ppo.clip_epsilon must be in (0, 1)"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return Err(Error::config("ppo.gamma and ppo.gae_lambda must be in (0, 1]"));
        }
        if self.epochs == 0 || self.minibatches == 0 || self.horizon == 0 || self.n_envs == 0 {
            return Err(Error::config(
                "ppo.epochs, minibatches, horizon and n_envs must be positive",
            ));
        }
        if self.seq_len == 0 || self.max_episode_steps == 0 {
            return Err(Error::config("ppo.seq_len and ppo.max_episode_steps must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("ppo.learning_rate must be non-negative"));
        }
        let chunks = self.n_envs * self.horizon.div_ceil(self.seq_len);
        if self.minibatches > chunks {
            return Err(Error::config(format!(
                "ppo.minibatches ({}) exceeds the {chunks} sequence chunks per round",
                self.minibatches
            )));
        }
        Ok(())
    }

    pub fn steps_per_round(&self) -> usize {
        self.horizon * self.n_envs
    }
}

/// One stored transition.
#[derive(Clone, Debug)]
pub struct Step {
    pub input: AgentInput,
    /// hidden state entering this step
    pub h_in: Vec<f64>,
    /// first step of an episode (hidden state was reset)
    pub first: bool,
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinishedEpisode {
    pub success: bool,
    pub steps: usize,
    pub episode_return: f64,
}

/// Contiguous rollout of one environment worker.
#[derive(Clone, Debug, Default)]
pub struct Segment {
    pub steps: Vec<Step>,
    /// value of the state after the last step (0 when it ended an episode)
    pub bootstrap: f64,
    pub finished: Vec<FinishedEpisode>,
    pub trajectory: Vec<TrajectoryRow>,
}

#[derive(Clone, Debug, Default)]
pub struct RolloutBuffer {
    pub segments: Vec<Segment>,
    pub advantages: Vec<Vec<f64>>,
    pub returns: Vec<Vec<f64>>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.steps.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn finished(&self) -> impl Iterator<Item = &FinishedEpisode> {
        self.segments.iter().flat_map(|s| &s.finished)
    }

    pub fn mean_reward(&self) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        self.segments
            .iter()
            .flat_map(|s| &s.steps)
            .map(|s| s.reward)
            .sum::<f64>()
            / n as f64
    }
}

/// Per-step audit record written to trajectory logs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub round: usize,
    pub env: usize,
    pub episode_id: String,
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub yaw: u32,
    pub pitch: i8,
    pub action: Action,
    pub reward: f64,
    pub terms: RewardTerms,
    pub d: f64,
    pub done: bool,
    pub success: bool,
}

/// Persistent state of one environment worker across rounds.
#[derive(Clone, Debug)]
pub struct EnvWorker {
    pub id: usize,
    rng: seed::Rng,
    running: Option<(usize, Running)>,
    state: PolicyState,
}

impl EnvWorker {
    pub fn new(id: usize, seed: u64, hidden_dim: usize) -> Self {
        Self {
            id,
            rng: seed::rng(seed, &format!("env/{id}")),
            running: None,
            state: PolicyState::initial(hidden_dim),
        }
    }

    fn reset(&mut self, nav: &NavWorld, episodes: &[Episode], params: &AgentParams) -> Result<()> {
        if episodes.is_empty() {
            return Err(Error::Exhausted(self.id));
        }
        let e = self.rng.random_range(0..episodes.len());
        let ep = &episodes[e];
        if ep.goal_views.is_empty() {
            return Err(Error::input(format!("episode {} has no goal views", ep.episode_id)));
        }
        let c = ep.goal_views[self.rng.random_range(0..ep.goal_views.len())];
        let (_, obj) = nav.resolve(ep)?;
        let target = Target {
            obj,
            view_pose: ep.all_candidates[c].pose,
            goal: env::view_goal(ep, c, params.config().variant),
        };
        self.running = Some((e, Running::start(nav, ep, target)?));
        self.state = PolicyState::initial(params.config().hidden_dim);
        Ok(())
    }

    /// Runs `horizon` steps with the current policy.
    pub fn collect(
        &mut self,
        nav: &NavWorld,
        episodes: &[Episode],
        params: &AgentParams,
        cfg: &PpoConfig,
        round: usize,
        log: bool,
    ) -> Result<Segment> {
        let mut seg = Segment {
            steps: Vec::with_capacity(cfg.horizon),
            ..Default::default()
        };
        for _ in 0..cfg.horizon {
            let first = self.running.is_none();
            if first {
                self.reset(nav, episodes, params)?;
            }
            let (e, run) = self.running.as_mut().expect("episode running");
            let obs = run.observe(nav);
            let input = env::agent_input(&obs, &run.target.goal, self.state.prev_action);
            let trace = params.step_input(&input, &self.state.h)?;
            let a = agent::act(&trace.logits, ActMode::Sample, &mut self.rng);
            let log_prob = math::log_softmax(&trace.logits)[a];
            let action = Action::from_index(a).expect("valid action");
            let tr = run.step(nav, action, cfg.max_episode_steps);
            if log {
                seg.trajectory.push(TrajectoryRow {
                    round,
                    env: self.id,
                    episode_id: episodes[*e].episode_id.clone(),
                    step: run.steps,
                    x: run.pose.x,
                    y: run.pose.y,
                    yaw: run.pose.yaw,
                    pitch: run.pose.pitch,
                    action,
                    reward: tr.reward,
                    terms: tr.terms,
                    d: run.snap.d,
                    done: tr.done,
                    success: tr.success,
                });
            }
            seg.steps.push(Step {
                input,
                h_in: std::mem::take(&mut self.state.h),
                first,
                action: a,
                log_prob,
                value: trace.value,
                reward: tr.reward,
                done: tr.done,
            });
            self.state = PolicyState {
                h: trace.h,
                prev_action: Some(a),
            };
            if tr.done {
                seg.finished.push(FinishedEpisode {
                    success: tr.success,
                    steps: run.steps,
                    episode_return: run.episode_return,
                });
                self.running = None;
            }
        }
        seg.bootstrap = match &self.running {
            Some((_, run)) => {
                let obs = run.observe(nav);
                let input = env::agent_input(&obs, &run.target.goal, self.state.prev_action);
                params.step_input(&input, &self.state.h)?.value
            }
            None => 0.0,
        };
        Ok(seg)
    }
}

/// Collects one round from every worker in parallel; segment order
/// follows worker order, so the buffer is independent of thread count.
pub fn collect_rollouts(
    workers: &mut [EnvWorker],
    nav: &NavWorld,
    episodes: &[Episode],
    params: &AgentParams,
    cfg: &PpoConfig,
    round: usize,
    log_trajectories: bool,
) -> Result<RolloutBuffer> {
    let segments = par::map_mut(workers, |_, w| {
        w.collect(nav, episodes, params, cfg, round, log_trajectories && w.id == 0)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut buf = RolloutBuffer {
        segments,
        ..Default::default()
    };
    compute_gae(&mut buf, cfg.gamma, cfg.gae_lambda);
    Ok(buf)
}

/// `A_t = Σ_k (γλ)^k δ_{t+k}`, `δ_t = r_t + γ V_{t+1} (1 − done_t) − V_t`.
/// Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        acc = delta + gamma * lambda * live * acc;
        adv[t] = acc;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

pub fn compute_gae(buf: &mut RolloutBuffer, gamma: f64, lambda: f64) {
    let (adv, ret): (Vec<_>, Vec<_>) = buf
        .segments
        .iter()
        .map(|s| {
            let r: Vec<f64> = s.steps.iter().map(|t| t.reward).collect();
            let v: Vec<f64> = s.steps.iter().map(|t| t.value).collect();
            let d: Vec<bool> = s.steps.iter().map(|t| t.done).collect();
            gae(&r, &v, &d, s.bootstrap, gamma, lambda)
        })
        .unzip();
    buf.advantages = adv;
    buf.returns = ret;
}

/// Clipped surrogate for one step: returns `(loss, dloss/dlog_prob, clipped)`
/// where `loss = −min(ρA, clip(ρ, 1−ε, 1+ε)A)` and `ρ = exp(lp − lp_old)`.
pub fn clipped_surrogate(log_prob: f64, old_log_prob: f64, advantage: f64, clip: f64) -> (f64, f64, bool) {
    let ratio = (log_prob - old_log_prob).exp();
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    let is_clipped = (ratio - 1.0).abs() > clip;
    if unclipped <= clipped {
        (-unclipped, -advantage * ratio, is_clipped)
    } else {
        (-clipped, 0.0, is_clipped)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    /// mean value loss seen during each epoch
    pub epoch_value_loss: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default)]
struct LossSums {
    policy: f64,
    value: f64,
    entropy: f64,
    clipped: f64,
    steps: f64,
}

impl LossSums {
    fn add(&mut self, o: &LossSums) {
        self.policy += o.policy;
        self.value += o.value;
        self.entropy += o.entropy;
        self.clipped += o.clipped;
        self.steps += o.steps;
    }
}

/// Chunk `(segment, start, end)`.
type Chunk = (usize, usize, usize);

fn chunks(buf: &RolloutBuffer, seq_len: usize) -> Vec<Chunk> {
    let mut out = Vec::new();
    for (s, seg) in buf.segments.iter().enumerate() {
        let mut start = 0;
        while start < seg.steps.len() {
            let end = (start + seq_len).min(seg.steps.len());
            out.push((s, start, end));
            start = end;
        }
    }
    out
}

/// PPO loss over one chunk and its gradient, scaled by `scale`.
fn chunk_loss_grad(
    params: &AgentParams,
    buf: &RolloutBuffer,
    norm_adv: &[Vec<f64>],
    chunk: Chunk,
    cfg: &PpoConfig,
    scale: f64,
    grad: &mut [f64],
) -> LossSums {
    let (s, start, end) = chunk;
    let seg = &buf.segments[s];
    let hd = params.config().hidden_dim;
    let mut traces: Vec<StepTrace> = Vec::with_capacity(end - start);
    let mut h = seg.steps[start].h_in.clone();
    for (k, step) in seg.steps[start..end].iter().enumerate() {
        if step.first && k > 0 {
            h = vec![0.0; hd];
        }
        let t = params.forward(&step.input, &h);
        h = t.h.clone();
        traces.push(t);
    }
    let mut sums = LossSums::default();
    let mut dh = vec![0.0; hd];
    for k in (0..traces.len()).rev() {
        let idx = start + k;
        let step = &seg.steps[idx];
        let t = &traces[k];
        let logp = math::log_softmax(&t.logits);
        let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let entropy: f64 = -p.iter().zip(&logp).map(|(a, b)| a * b).sum::<f64>();
        let (pl, dlp, clipped) =
            clipped_surrogate(logp[step.action], step.log_prob, norm_adv[s][idx], cfg.clip_epsilon);
        let target = buf.returns[s][idx];
        let vl = (t.value - target).powi(2);

        let mut dlogits = vec![0.0; p.len()];
        for j in 0..p.len() {
            let onehot = if j == step.action { 1.0 } else { 0.0 };
            // d(−c·H)/dz_j = c · p_j (log p_j + H)
            dlogits[j] = scale * (dlp * (onehot - p[j]) + cfg.entropy_coef * p[j] * (logp[j] + entropy));
        }
        let dvalue = scale * cfg.value_coef * 2.0 * (t.value - target);
        let dh_prev = params.backward(t, &dlogits, dvalue, &dh, grad);
        dh = if step.first { vec![0.0; hd] } else { dh_prev };

        sums.policy += pl;
        sums.value += vl;
        sums.entropy += entropy;
        sums.clipped += clipped as u8 as f64;
        sums.steps += 1.0;
    }
    sums
}

/// Normalizes advantages across the whole buffer (mean 0, std 1).
pub fn normalized_advantages(buf: &RolloutBuffer) -> Vec<Vec<f64>> {
    let all: Vec<f64> = buf.advantages.iter().flatten().copied().collect();
    let mean = math::mean(&all);
    let var = if all.is_empty() {
        0.0
    } else {
        all.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / all.len() as f64
    };
    let std = var.sqrt() + 1e-8;
    buf.advantages
        .iter()
        .map(|seg| seg.iter().map(|a| (a - mean) / std).collect())
        .collect()
}

/// Total PPO loss `L_clip + c_v·L_V − c_e·H` averaged over every buffered
/// step, with its gradient.
pub fn ppo_loss_and_grad(params: &AgentParams, buf: &RolloutBuffer, cfg: &PpoConfig) -> (f64, Vec<f64>) {
    let norm_adv = normalized_advantages(buf);
    let n = buf.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut total = LossSums::default();
    for c in chunks(buf, cfg.seq_len) {
        total.add(&chunk_loss_grad(params, buf, &norm_adv, c, cfg, 1.0 / n, &mut grad));
    }
    let loss = (total.policy + cfg.value_coef * total.value - cfg.entropy_coef * total.entropy) / n;
    (loss, grad)
}

/// Runs `cfg.epochs` passes of minibatch PPO over `buf`. On a non-finite
/// loss or gradient the parameters and optimizer are restored and an error
/// is returned.
pub fn ppo_update(
    params: &mut AgentParams,
    adam: &mut Adam,
    buf: &RolloutBuffer,
    cfg: &PpoConfig,
    round: usize,
) -> Result<UpdateStats> {
    let backup = (params.data.clone(), adam.clone());
    let result = ppo_update_inner(params, adam, buf, cfg, round);
    if result.is_err() {
        params.data = backup.0;
        *adam = backup.1;
    }
    result
}

fn ppo_update_inner(
    params: &mut AgentParams,
    adam: &mut Adam,
    buf: &RolloutBuffer,
    cfg: &PpoConfig,
    round: usize,
) -> Result<UpdateStats> {
    let norm_adv = normalized_advantages(buf);
    let mut order = chunks(buf, cfg.seq_len);
    let mut rng = seed::rng(cfg.seed, &format!("ppo/{round}"));
    let mut total = LossSums::default();
    let mut stats = UpdateStats::default();
    let mut grad_norms = Vec::new();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sums = LossSums::default();
        let per = order.len().div_ceil(cfg.minibatches);
        for mb in order.chunks(per) {
            let n: usize = mb.iter().map(|c| c.2 - c.1).sum();
            let scale = 1.0 / n as f64;
            let p: &AgentParams = params;
            let parts = par::map_range(mb.len(), |i| {
                let mut g = vec![0.0; p.len()];
                let s = chunk_loss_grad(p, buf, &norm_adv, mb[i], cfg, scale, &mut g);
                (g, s)
            });
            let mut grad = vec![0.0; params.len()];
            let mut sums = LossSums::default();
            for (g, s) in &parts {
                grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                sums.add(s);
            }
            let loss = sums.policy + cfg.value_coef * sums.value - cfg.entropy_coef * sums.entropy;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "PPO loss at round {round} epoch {epoch}: policy {} value {} entropy {} over {n} steps",
                    sums.policy, sums.value, sums.entropy
                )));
            }
            grad_norms.push(nn::clip_grad_norm(&mut grad, cfg.max_grad_norm));
            adam.step(&mut params.data, &grad, cfg.learning_rate);
            epoch_sums.add(&sums);
        }
        stats
            .epoch_value_loss
            .push(epoch_sums.value / epoch_sums.steps.max(1.0));
        total.add(&epoch_sums);
    }
    let n = total.steps.max(1.0);
    stats.policy_loss = total.policy / n;
    stats.value_loss = total.value / n;
    stats.entropy = total.entropy / n;
    stats.clip_fraction = total.clipped / n;
    stats.grad_norm = math::mean(&grad_norms);
    params.check_finite()?;
    Ok(stats)
}

/// One line of the training progress log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgressRow {
    pub round: usize,
    pub step: usize,
    pub episodes: usize,
    /// success rate over episodes that finished this round
    pub success_rate: f64,
    pub mean_reward: f64,
    pub mean_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

pub const PROGRESS_HEADER: &str =
    "round,step,episodes,success_rate,mean_reward,mean_return,policy_loss,value_loss,entropy,clip_fraction";

impl ProgressRow {
    pub fn csv_line(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.round,
            self.step,
            self.episodes,
            self.success_rate,
            self.mean_reward,
            self.mean_return,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.clip_fraction
        );
        s
    }
}

pub fn progress_csv(rows: &[ProgressRow]) -> String {
    let mut s = String::from(PROGRESS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

/// Called after every round with the fresh row, the updated parameters and
/// any trajectory rows collected that round.
pub type Observer<'o> = dyn FnMut(&ProgressRow, &AgentParams, &[TrajectoryRow]) -> Result<()> + 'o;

/// Trains `params` in place until `cfg.total_steps` environment steps.
pub fn train(
    params: &mut AgentParams,
    nav: &NavWorld,
    episodes: &[Episode],
    cfg: &PpoConfig,
    log_trajectories: bool,
    observer: &mut Observer,
) -> Result<Vec<ProgressRow>> {
    cfg.validate()?;
    if episodes.is_empty() {
        return Err(Error::Exhausted(0));
    }
    nav.check_episodes(episodes)?;
    let frozen = nav.codebook.fingerprint();
    let hd = params.config().hidden_dim;
    let mut workers: Vec<EnvWorker> = (0..cfg.n_envs).map(|i| EnvWorker::new(i, cfg.seed, hd)).collect();
    let mut adam = Adam::new(params.len(), cfg.adam);
    let mut rows = Vec::new();
    let mut step = 0;
    let mut round = 0;
    while step < cfg.total_steps {
        let buf = collect_rollouts(&mut workers, nav, episodes, params, cfg, round, log_trajectories)?;
        step += buf.len();
        let stats = ppo_update(params, &mut adam, &buf, cfg, round)?;
        if nav.codebook.fingerprint() != frozen {
            return Err(Error::input("frozen semantic encoder changed during training"));
        }
        let finished: Vec<&FinishedEpisode> = buf.finished().collect();
        let successes = finished.iter().filter(|f| f.success).count();
        let row = ProgressRow {
            round,
            step,
            episodes: finished.len(),
            success_rate: if finished.is_empty() {
                0.0
            } else {
                successes as f64 / finished.len() as f64
            },
            mean_reward: buf.mean_reward(),
            mean_return: math::mean(&finished.iter().map(|f| f.episode_return).collect::<Vec<_>>()),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
        };
        let traj: Vec<TrajectoryRow> = buf.segments.iter().flat_map(|s| s.trajectory.iter().cloned()).collect();
        observer(&row, params, &traj)?;
        rows.push(row);
        round += 1;
    }
    Ok(rows)
}
