//! Recurrent actor-critic navigation agent and its variant matrix.
//!
//! Every variant shares the same trunk: a gated recurrent cell fed with
//! `z_SP ⊕ z_O ⊕ onehot(a_{t-1})`, followed by a 6-way actor head and a
//! scalar critic head. Variants differ in how `z_O` and `z_SP` are built:
//!
//! | variant | `z_O`                           | `z_SP`                          |
//! |---------|---------------------------------|---------------------------------|
//! | PSL     | MLP(layout ⊕ semantic)          | SPM(goal ⊕ semantic)            |
//! | ZSON    | MLP(layout ⊕ semantic)          | goal                            |
//! | LO      | MLP(layout)                     | goal-view layout                |
//! | SO      | semantic                        | goal                            |
//!
//! The semantic observation and the goal embedding come from the frozen
//! codebook, so they carry no trainable parameters here. All trainable
//! parameters live in one flat `f64` vector with a named layout.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn;
use crate::{io, math, seed};

pub const N_ACTIONS: usize = 6;
const ACTOR_INIT_SCALE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Psl,
    Zson,
    Lo,
    So,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Psl, Variant::Zson, Variant::Lo, Variant::So];

    /// Whether the goal is a layout profile rather than an embedding.
    pub fn layout_goal(self) -> bool {
        self == Variant::Lo
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Psl => "psl",
            Variant::Zson => "zson",
            Variant::Lo => "lo",
            Variant::So => "so",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "psl" => Ok(Variant::Psl),
            "zson" => Ok(Variant::Zson),
            "lo" => Ok(Variant::Lo),
            "so" => Ok(Variant::So),
            other => Err(Error::input(format!("unknown variant `{other}` (psl, zson, lo, so)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub variant: Variant,
    /// C1, the embedding width of the semantic space
    pub embed_dim: usize,
    /// number of layout rays
    pub layout_dim: usize,
    /// C2, the SPM output width
    pub spm_dim: usize,
    /// widths of the two observation-encoder layers
    pub obs_encoder_dims: Vec<usize>,
    pub hidden_dim: usize,
    pub n_actions: usize,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Psl,
            embed_dim: 64,
            layout_dim: 16,
            spm_dim: 64,
            obs_encoder_dims: vec![64, 64],
            hidden_dim: 128,
            n_actions: N_ACTIONS,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_actions != N_ACTIONS {
            return Err(Error::config(format!("agent.n_actions must be {N_ACTIONS}")));
        }
        if self.embed_dim == 0 || self.layout_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::config("agent dimensions must be positive"));
        }
        if self.spm_dim == 0 || self.spm_dim >= 2 * self.embed_dim {
            return Err(Error::config(format!(
                "agent.spm_dim must satisfy 0 < C2 < 2*C1 = {}, got {}",
                2 * self.embed_dim,
                self.spm_dim
            )));
        }
        if self.obs_encoder_dims.len() != 2 || self.obs_encoder_dims.contains(&0) {
            return Err(Error::config("agent.obs_encoder_dims must list two positive widths"));
        }
        Ok(())
    }

    pub fn goal_dim(&self) -> usize {
        if self.variant.layout_goal() {
            self.layout_dim
        } else {
            self.embed_dim
        }
    }

    fn encoder_in(&self) -> usize {
        match self.variant {
            Variant::Psl | Variant::Zson => self.layout_dim + self.embed_dim,
            Variant::Lo => self.layout_dim,
            Variant::So => 0,
        }
    }

    pub fn z_o_dim(&self) -> usize {
        match self.variant {
            Variant::So => self.embed_dim,
            _ => self.obs_encoder_dims[1],
        }
    }

    pub fn z_sp_dim(&self) -> usize {
        match self.variant {
            Variant::Psl => self.spm_dim,
            Variant::Zson | Variant::So => self.embed_dim,
            Variant::Lo => self.layout_dim,
        }
    }

    fn gru_in(&self) -> usize {
        self.z_sp_dim() + self.z_o_dim() + self.n_actions
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Span {
    off: usize,
    len: usize,
}

impl Span {
    fn of<'a>(&self, v: &'a [f64]) -> &'a [f64] {
        &v[self.off..self.off + self.len]
    }

    fn of_mut<'a>(&self, v: &'a mut [f64]) -> &'a mut [f64] {
        &mut v[self.off..self.off + self.len]
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Offsets {
    enc1_w: Span,
    enc1_b: Span,
    enc2_w: Span,
    enc2_b: Span,
    spm_w: Span,
    spm_b: Span,
    gru_wx: Span,
    gru_wh: Span,
    gru_b: Span,
    gru_bhn: Span,
    actor_w: Span,
    actor_b: Span,
    critic_w: Span,
    critic_b: Span,
}

fn build_layout(cfg: &AgentConfig) -> (Vec<Segment>, Offsets) {
    let mut segs = Vec::new();
    let mut off = 0;
    let mut add = |name: &str, shape: Vec<usize>| {
        let s = Segment {
            name: name.to_string(),
            shape,
            offset: off,
        };
        let span = Span { off, len: s.len() };
        off += s.len();
        segs.push(s);
        span
    };
    let mut o = Offsets::default();
    let h = cfg.hidden_dim;
    if cfg.variant != Variant::So {
        let [e1, e2] = [cfg.obs_encoder_dims[0], cfg.obs_encoder_dims[1]];
        o.enc1_w = add("encoder.0.weight", vec![e1, cfg.encoder_in()]);
        o.enc1_b = add("encoder.0.bias", vec![e1]);
        o.enc2_w = add("encoder.1.weight", vec![e2, e1]);
        o.enc2_b = add("encoder.1.bias", vec![e2]);
    }
    if cfg.variant == Variant::Psl {
        o.spm_w = add("spm.weight", vec![cfg.spm_dim, 2 * cfg.embed_dim]);
        o.spm_b = add("spm.bias", vec![cfg.spm_dim]);
    }
    o.gru_wx = add("gru.weight_ih", vec![3 * h, cfg.gru_in()]);
    o.gru_wh = add("gru.weight_hh", vec![3 * h, h]);
    o.gru_b = add("gru.bias", vec![3 * h]);
    o.gru_bhn = add("gru.bias_hn", vec![h]);
    o.actor_w = add("actor.weight", vec![cfg.n_actions, h]);
    o.actor_b = add("actor.bias", vec![cfg.n_actions]);
    o.critic_w = add("critic.weight", vec![1, h]);
    o.critic_b = add("critic.bias", vec![1]);
    (segs, o)
}

/// Per-step network input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentInput {
    pub layout: Vec<f64>,
    /// frozen semantic observation `z_S`
    pub semantic: Vec<f64>,
    /// goal embedding, or the goal-view layout for the LO variant
    pub goal: Vec<f64>,
    pub prev_action: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyState {
    pub h: Vec<f64>,
    pub prev_action: Option<usize>,
}

impl PolicyState {
    pub fn initial(hidden_dim: usize) -> Self {
        Self {
            h: vec![0.0; hidden_dim],
            prev_action: None,
        }
    }

    pub fn prev_action_onehot(&self) -> [f64; N_ACTIONS] {
        onehot(self.prev_action)
    }

    /// Records the action taken after a step.
    pub fn with_action(mut self, action: usize) -> Self {
        self.prev_action = Some(action);
        self
    }
}

fn onehot(a: Option<usize>) -> [f64; N_ACTIONS] {
    let mut v = [0.0; N_ACTIONS];
    if let Some(a) = a {
        v[a] = 1.0;
    }
    v
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub logits: Vec<f64>,
    pub value: f64,
    pub state: PolicyState,
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug, Default)]
pub struct StepTrace {
    enc_x: Vec<f64>,
    enc_h1: Vec<f64>,
    spm_x: Vec<f64>,
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    hn: Vec<f64>,
    pub h: Vec<f64>,
    pub logits: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActMode {
    Sample,
    Greedy,
}

/// Picks an action from logits; greedy ties go to the lowest index.
pub fn act(logits: &[f64], mode: ActMode, rng: &mut seed::Rng) -> usize {
    match mode {
        ActMode::Greedy => math::argmax(logits),
        ActMode::Sample => {
            let p = math::softmax(logits);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, pi) in p.iter().enumerate() {
                acc += pi;
                if u < acc {
                    return i;
                }
            }
            p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentParams {
    config: AgentConfig,
    segments: Vec<Segment>,
    offsets: Offsets,
    pub data: Vec<f64>,
}

fn uniform(rng: &mut seed::Rng, out: &mut [f64], bound: f64) {
    out.iter_mut().for_each(|v| *v = rng.random_range(-bound..=bound));
}

/// Rows of an `n × n` orthonormal matrix via Gram-Schmidt on Gaussian rows.
fn orthogonal(rng: &mut seed::Rng, n: usize) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for r in &rows {
            let p = math::dot(&v, r);
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= p * b);
        }
        let norm = math::norm(&v);
        if norm > 1e-6 {
            v.iter_mut().for_each(|a| *a /= norm);
            rows.push(v);
        }
    }
    rows.concat()
}

impl AgentParams {
    pub fn new(config: &AgentConfig) -> Result<Self> {
        config.validate()?;
        let (segments, offsets) = build_layout(config);
        let total = segments.last().map(|s| s.offset + s.len()).unwrap_or(0);
        let mut p = Self {
            config: config.clone(),
            segments,
            offsets,
            data: vec![0.0; total],
        };
        let mut rng = seed::rng(config.seed, "agent-init");
        let o = p.offsets.clone();
        let h = config.hidden_dim;
        if config.variant != Variant::So {
            let e1 = config.obs_encoder_dims[0];
            uniform(
                &mut rng,
                o.enc1_w.of_mut(&mut p.data),
                1.0 / (config.encoder_in() as f64).sqrt(),
            );
            uniform(&mut rng, o.enc2_w.of_mut(&mut p.data), 1.0 / (e1 as f64).sqrt());
        }
        if config.variant == Variant::Psl {
            uniform(
                &mut rng,
                o.spm_w.of_mut(&mut p.data),
                1.0 / ((2 * config.embed_dim) as f64).sqrt(),
            );
        }
        uniform(
            &mut rng,
            o.gru_wx.of_mut(&mut p.data),
            1.0 / (config.gru_in() as f64).sqrt(),
        );
        let wh = o.gru_wh.of_mut(&mut p.data);
        for gate in 0..3 {
            wh[gate * h * h..(gate + 1) * h * h].copy_from_slice(&orthogonal(&mut rng, h));
        }
        let bound = 1.0 / (h as f64).sqrt();
        uniform(&mut rng, o.actor_w.of_mut(&mut p.data), bound * ACTOR_INIT_SCALE);
        uniform(&mut rng, o.critic_w.of_mut(&mut p.data), bound);
        Ok(p)
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fingerprint(&self) -> String {
        seed::fingerprint([self.data.as_slice()])
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => {
                let seg = self
                    .segments
                    .iter()
                    .find(|s| s.range().contains(&i))
                    .map(|s| s.name.as_str())
                    .unwrap_or("?");
                Err(Error::NonFinite(format!("parameter {seg}[{}]", i)))
            }
        }
    }

    fn check_input(&self, input: &AgentInput) -> Result<()> {
        let c = &self.config;
        let check = |what: &'static str, expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::Dimension {
                    context: what,
                    expected,
                    actual,
                })
            }
        };
        check("layout", c.layout_dim, input.layout.len())?;
        check("semantic observation", c.embed_dim, input.semantic.len())?;
        check("goal", c.goal_dim(), input.goal.len())?;
        if let Some(a) = input.prev_action {
            if a >= c.n_actions {
                return Err(Error::input(format!("previous action {a} out of range")));
            }
        }
        Ok(())
    }

    /// `(z_O, z_SP)` for one input.
    pub fn encode_inputs(&self, input: &AgentInput) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(input)?;
        let mut t = StepTrace::default();
        let (z_o, z_sp) = self.encode(input, &mut t);
        Ok((z_o, z_sp))
    }

    fn encode(&self, input: &AgentInput, t: &mut StepTrace) -> (Vec<f64>, Vec<f64>) {
        let c = &self.config;
        let o = &self.offsets;
        let d = &self.data;
        let k = (c.embed_dim as f64).sqrt();
        let semantic: Vec<f64> = input.semantic.iter().map(|v| v * k).collect();
        let goal: Vec<f64> = if c.variant.layout_goal() {
            input.goal.clone()
        } else {
            input.goal.iter().map(|v| v * k).collect()
        };
        let z_o = match c.variant {
            Variant::So => semantic.clone(),
            v => {
                t.enc_x = input.layout.clone();
                if v != Variant::Lo {
                    t.enc_x.extend_from_slice(&semantic);
                }
                let mut h1 = vec![0.0; c.obs_encoder_dims[0]];
                nn::affine(o.enc1_w.of(d), o.enc1_b.of(d), &t.enc_x, &mut h1);
                h1.iter_mut().for_each(|v| *v = v.tanh());
                let mut h2 = vec![0.0; c.obs_encoder_dims[1]];
                nn::affine(o.enc2_w.of(d), o.enc2_b.of(d), &h1, &mut h2);
                h2.iter_mut().for_each(|v| *v = v.tanh());
                t.enc_h1 = h1;
                h2
            }
        };
        let z_sp = match c.variant {
            Variant::Psl => {
                t.spm_x = goal;
                t.spm_x.extend_from_slice(&semantic);
                let mut y = vec![0.0; c.spm_dim];
                nn::affine(o.spm_w.of(d), o.spm_b.of(d), &t.spm_x, &mut y);
                y.iter_mut().for_each(|v| *v = v.tanh());
                y
            }
            _ => goal,
        };
        (z_o, z_sp)
    }

    /// Full forward step from an explicit previous hidden state.
    pub fn forward(&self, input: &AgentInput, h_prev: &[f64]) -> StepTrace {
        let c = &self.config;
        let o = &self.offsets;
        let d = &self.data;
        let hd = c.hidden_dim;
        let mut t = StepTrace::default();
        let (z_o, z_sp) = self.encode(input, &mut t);
        let mut x = z_sp;
        x.extend_from_slice(&z_o);
        x.extend_from_slice(&onehot(input.prev_action));

        let mut gx = vec![0.0; 3 * hd];
        nn::affine(o.gru_wx.of(d), o.gru_b.of(d), &x, &mut gx);
        let mut gh = vec![0.0; 3 * hd];
        nn::matvec_add(o.gru_wh.of(d), h_prev, &mut gh);
        let bhn = o.gru_bhn.of(d);
        let mut r = vec![0.0; hd];
        let mut z = vec![0.0; hd];
        let mut n = vec![0.0; hd];
        let mut hn = vec![0.0; hd];
        let mut h = vec![0.0; hd];
        for i in 0..hd {
            r[i] = math::sigmoid(gx[i] + gh[i]);
            z[i] = math::sigmoid(gx[hd + i] + gh[hd + i]);
            hn[i] = gh[2 * hd + i] + bhn[i];
            n[i] = (gx[2 * hd + i] + r[i] * hn[i]).tanh();
            h[i] = (1.0 - z[i]) * n[i] + z[i] * h_prev[i];
        }
        let mut logits = vec![0.0; c.n_actions];
        nn::affine(o.actor_w.of(d), o.actor_b.of(d), &h, &mut logits);
        let mut v = [0.0];
        nn::affine(o.critic_w.of(d), o.critic_b.of(d), &h, &mut v);

        t.x = x;
        t.h_prev = h_prev.to_vec();
        t.r = r;
        t.z = z;
        t.n = n;
        t.hn = hn;
        t.h = h;
        t.logits = logits;
        t.value = v[0];
        t
    }

    /// Backpropagates one step. `dh_next` is the gradient arriving at this
    /// step's output hidden state from later steps. Gradients accumulate
    /// into `grad`; returns the gradient w.r.t. `h_prev`.
    pub fn backward(&self, t: &StepTrace, dlogits: &[f64], dvalue: f64, dh_next: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let c = &self.config;
        let o = &self.offsets;
        let d = &self.data;
        let hd = c.hidden_dim;

        let mut dh = dh_next.to_vec();
        nn::affine_backward(o.actor_w.of(d), &t.h, dlogits, o.actor_w.of_mut(grad), Some(&mut dh));
        o.actor_b
            .of_mut(grad)
            .iter_mut()
            .zip(dlogits)
            .for_each(|(g, v)| *g += v);
        nn::affine_backward(
            o.critic_w.of(d),
            &t.h,
            &[dvalue],
            o.critic_w.of_mut(grad),
            Some(&mut dh),
        );
        o.critic_b.of_mut(grad)[0] += dvalue;

        let mut dgx = vec![0.0; 3 * hd];
        let mut dgh = vec![0.0; 3 * hd];
        let mut dh_prev = vec![0.0; hd];
        {
            let dbhn = o.gru_bhn.of_mut(grad);
            for i in 0..hd {
                let (r, z, n, hn) = (t.r[i], t.z[i], t.n[i], t.hn[i]);
                let dn = dh[i] * (1.0 - z);
                let dz = dh[i] * (t.h_prev[i] - n);
                dh_prev[i] = dh[i] * z;
                let dan = dn * (1.0 - n * n);
                let dr = dan * hn;
                let dhn = dan * r;
                let dar = dr * r * (1.0 - r);
                let daz = dz * z * (1.0 - z);
                dgx[i] = dar;
                dgx[hd + i] = daz;
                dgx[2 * hd + i] = dan;
                dgh[i] = dar;
                dgh[hd + i] = daz;
                dgh[2 * hd + i] = dhn;
                dbhn[i] += dhn;
            }
        }
        let mut dx = vec![0.0; t.x.len()];
        nn::affine_backward(o.gru_wx.of(d), &t.x, &dgx, o.gru_wx.of_mut(grad), Some(&mut dx));
        o.gru_b.of_mut(grad).iter_mut().zip(&dgx).for_each(|(g, v)| *g += v);
        nn::affine_backward(
            o.gru_wh.of(d),
            &t.h_prev,
            &dgh,
            o.gru_wh.of_mut(grad),
            Some(&mut dh_prev),
        );

        let zsp = c.z_sp_dim();
        let zo = c.z_o_dim();
        let dz_sp = &dx[..zsp];
        let dz_o = &dx[zsp..zsp + zo];

        if c.variant == Variant::Psl {
            // z_sp = tanh(W [goal; semantic] + b); recover tanh output from x
            let dpre: Vec<f64> = dz_sp.iter().zip(&t.x[..zsp]).map(|(g, y)| g * (1.0 - y * y)).collect();
            nn::affine_backward(o.spm_w.of(d), &t.spm_x, &dpre, o.spm_w.of_mut(grad), None);
            o.spm_b.of_mut(grad).iter_mut().zip(&dpre).for_each(|(g, v)| *g += v);
        }
        if c.variant != Variant::So {
            let y2 = &t.x[zsp..zsp + zo];
            let dpre2: Vec<f64> = dz_o.iter().zip(y2).map(|(g, y)| g * (1.0 - y * y)).collect();
            let mut dh1 = vec![0.0; t.enc_h1.len()];
            nn::affine_backward(o.enc2_w.of(d), &t.enc_h1, &dpre2, o.enc2_w.of_mut(grad), Some(&mut dh1));
            o.enc2_b.of_mut(grad).iter_mut().zip(&dpre2).for_each(|(g, v)| *g += v);
            let dpre1: Vec<f64> = dh1.iter().zip(&t.enc_h1).map(|(g, y)| g * (1.0 - y * y)).collect();
            nn::affine_backward(o.enc1_w.of(d), &t.enc_x, &dpre1, o.enc1_w.of_mut(grad), None);
            o.enc1_b.of_mut(grad).iter_mut().zip(&dpre1).for_each(|(g, v)| *g += v);
        }
        dh_prev
    }

    /// One recurrent step: `(logits, value, state')`. The returned state
    /// keeps the old `prev_action` until [`PolicyState::with_action`].
    pub fn policy_step(
        &self,
        input_goal: &[f64],
        layout: &[f64],
        semantic: &[f64],
        state: &PolicyState,
    ) -> Result<PolicyOutput> {
        let input = AgentInput {
            layout: layout.to_vec(),
            semantic: semantic.to_vec(),
            goal: input_goal.to_vec(),
            prev_action: state.prev_action,
        };
        self.step_input(&input, &state.h).map(|t| PolicyOutput {
            logits: t.logits,
            value: t.value,
            state: PolicyState {
                h: t.h,
                prev_action: state.prev_action,
            },
        })
    }

    /// Checked forward step on an owned input.
    pub fn step_input(&self, input: &AgentInput, h_prev: &[f64]) -> Result<StepTrace> {
        self.check_input(input)?;
        if h_prev.len() != self.config.hidden_dim {
            return Err(Error::Dimension {
                context: "hidden state",
                expected: self.config.hidden_dim,
                actual: h_prev.len(),
            });
        }
        let t = self.forward(input, h_prev);
        if t.logits.iter().any(|v| !v.is_finite()) || !t.value.is_finite() {
            self.check_finite()?;
            return Err(Error::NonFinite("policy output".into()));
        }
        Ok(t)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            arrays: self
                .segments
                .iter()
                .map(|s| NamedArray {
                    name: s.name.clone(),
                    shape: s.shape.clone(),
                    values: self.data[s.range()].iter().map(|&v| io::round_sig9(v)).collect(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let mut p = Self::new(&ck.config)?;
        if ck.arrays.len() != p.segments.len() {
            return Err(Error::input(format!(
                "checkpoint has {} arrays, config expects {}",
                ck.arrays.len(),
                p.segments.len()
            )));
        }
        for (a, s) in ck.arrays.iter().zip(&p.segments) {
            if a.name != s.name || a.shape != s.shape || a.values.len() != s.len() {
                return Err(Error::input(format!(
                    "checkpoint array `{}` {:?} does not match expected `{}` {:?}",
                    a.name, a.shape, s.name, s.shape
                )));
            }
        }
        for (a, s) in ck.arrays.into_iter().zip(p.segments.clone()) {
            p.data[s.range()].copy_from_slice(&a.values);
        }
        p.check_finite()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, &self.to_checkpoint())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = io::read_json(path)?;
        Self::from_checkpoint(ck).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub config: AgentConfig,
    pub arrays: Vec<NamedArray>,
}
