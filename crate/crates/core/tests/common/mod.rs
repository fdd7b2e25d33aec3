#![allow(dead_code)]

use semnav::agent::{AgentParams, Variant};
use semnav::config::RunConfig;
use semnav::nn::Adam;
use semnav::par;
use semnav::pipeline::{self, Suite};
use semnav::train::{self, EnvWorker, PpoConfig, RolloutBuffer};

/// Easy preset shrunk so one rollout round takes milliseconds.
pub fn small_config() -> RunConfig {
    let mut cfg = RunConfig::easy();
    cfg.suite.scenes = 4;
    cfg.suite.train_episodes = 40;
    cfg.suite.eval_episodes = 20;
    cfg.agent.hidden_dim = 16;
    cfg.agent.spm_dim = 16;
    cfg.agent.obs_encoder_dims = vec![16, 16];
    cfg.ppo.n_envs = 4;
    cfg.ppo.horizon = 32;
    cfg.ppo.seq_len = 8;
    cfg.ppo.minibatches = 2;
    cfg
}

pub fn suite(cfg: &RunConfig) -> Suite {
    Suite::build(cfg).expect("suite builds")
}

pub fn workers(cfg: &PpoConfig, hidden: usize) -> Vec<EnvWorker> {
    (0..cfg.n_envs).map(|i| EnvWorker::new(i, cfg.seed, hidden)).collect()
}

/// Fresh agent of `variant` and one rollout round collected with it.
pub fn rollout(cfg: &RunConfig, variant: Variant, threads: usize) -> (AgentParams, RolloutBuffer) {
    let s = suite(cfg);
    let nav = s.nav(cfg);
    let c = pipeline::seeded(cfg, variant, 5);
    let params = AgentParams::new(&c.agent).unwrap();
    let mut ws = workers(&c.ppo, c.agent.hidden_dim);
    let buf = par::with_threads(threads, || {
        train::collect_rollouts(&mut ws, &nav, &s.train, &params, &c.ppo, 0, true).unwrap()
    });
    (params, buf)
}

/// Worst relative error between the analytic gradient and central finite
/// differences, per parameter segment, probing up to `per_segment` entries
/// of each.
pub fn finite_difference_errors(
    params: &mut AgentParams,
    buf: &RolloutBuffer,
    cfg: &PpoConfig,
    per_segment: usize,
) -> Vec<(String, f64)> {
    let (_, grad) = train::ppo_loss_and_grad(params, buf, cfg);
    let h = 1e-6;
    let segments = params.segments().to_vec();
    segments
        .iter()
        .map(|seg| {
            let stride = (seg.len() / per_segment).max(1);
            let mut worst = 0.0f64;
            for i in seg.range().step_by(stride) {
                let x = params.data[i];
                params.data[i] = x + h;
                let (lp, _) = train::ppo_loss_and_grad(params, buf, cfg);
                params.data[i] = x - h;
                let (lm, _) = train::ppo_loss_and_grad(params, buf, cfg);
                params.data[i] = x;
                let fd = (lp - lm) / (2.0 * h);
                let scale = fd.abs().max(grad[i].abs()).max(1e-6);
                worst = worst.max((fd - grad[i]).abs() / scale);
            }
            (seg.name.clone(), worst)
        })
        .collect()
}

/// Per-epoch value loss of a pure value regression (advantages zeroed,
/// one full-batch minibatch) on a frozen buffer.
pub fn value_fit_curve(cfg: &RunConfig, epochs: usize) -> Vec<f64> {
    let mut cfg = cfg.clone();
    cfg.ppo.epochs = epochs;
    cfg.ppo.minibatches = 1;
    cfg.ppo.learning_rate = 3e-4;
    cfg.ppo.entropy_coef = 0.0;
    let (mut params, mut buf) = rollout(&cfg, Variant::Zson, 0);
    for a in buf.advantages.iter_mut() {
        a.iter_mut().for_each(|x| *x = 0.0);
    }
    let mut adam = Adam::new(params.len(), cfg.ppo.adam);
    train::ppo_update(&mut params, &mut adam, &buf, &cfg.ppo, 0)
        .unwrap()
        .epoch_value_loss
}
