//! Zero-shot evaluation: support set, semantic expansion of text goals,
//! goal-mode dispatch, policy rollouts and SR/SPL metrics.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::agent::{self, ActMode, AgentParams, PolicyState, Variant};
use crate::env::{self, NavWorld, Running, Target};
use crate::episodes::Episode;
use crate::error::{Error, Result};
use crate::semspace::{Codebook, Embedding};
use crate::world::{Action, AgentPose, SceneAssets, UNREACHABLE};
use crate::{io, math, par, seed};

const UNIT_TOL: f64 = 1e-4;

/// Deduplicated store of training goal embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportSet {
    pub lambda: f64,
    pub vectors: Vec<Embedding>,
    /// `episode_id#candidate` of each stored vector
    pub provenance: Vec<String>,
}

impl SupportSet {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > -1.0 && lambda <= 1.0) {
            return Err(Error::config(format!(
                "support lambda must be in (-1, 1], got {lambda}"
            )));
        }
        Ok(Self {
            lambda,
            vectors: Vec::new(),
            provenance: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Inserts `s` iff its raw cosine to every stored vector is below λ.
    pub fn insert(&mut self, s: &Embedding, provenance: impl Into<String>) -> Result<bool> {
        if !s.is_unit(UNIT_TOL) {
            return Err(Error::input(format!(
                "support vectors must be unit-norm, got norm {}",
                s.norm()
            )));
        }
        let keep = self.vectors.iter().all(|v| v.cosine(s) < self.lambda);
        if keep {
            self.vectors.push(s.clone());
            self.provenance.push(provenance.into());
        }
        Ok(keep)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let set: SupportSet = io::read_json(path)?;
        if set.vectors.len() != set.provenance.len() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: "vectors and provenance differ in length".into(),
            });
        }
        Ok(set)
    }
}

/// Streams every training goal view, in episode order, through
/// [`SupportSet::insert`].
pub fn build_support_set(episodes: &[Episode], lambda: f64) -> Result<SupportSet> {
    if episodes.is_empty() {
        return Err(Error::input("support set needs at least one episode"));
    }
    let mut set = SupportSet::new(lambda)?;
    for ep in episodes {
        for &v in &ep.goal_views {
            let c = &ep.all_candidates[v];
            set.insert(&c.embedding, format!("{}#{}", ep.episode_id, c.index))?;
        }
    }
    Ok(set)
}

/// Retrieval weights `softmax_i(τ · cos(z_T, s_i))`.
pub fn expansion_weights(z_t: &Embedding, set: &SupportSet, temperature: f64) -> Result<Vec<f64>> {
    if set.is_empty() {
        return Err(Error::input("cannot expand a text goal with an empty support set"));
    }
    let logits: Vec<f64> = set.vectors.iter().map(|s| temperature * z_t.cosine(s)).collect();
    Ok(math::softmax(&logits))
}

/// `z_R = normalize(Σ_i w_i s_i)`.
pub fn expand_text_goal(z_t: &Embedding, set: &SupportSet, temperature: f64) -> Result<Embedding> {
    let w = expansion_weights(z_t, set, temperature)?;
    let dim = z_t.dim();
    let mut acc = vec![0.0; dim];
    for (s, wi) in set.vectors.iter().zip(&w) {
        if s.dim() != dim {
            return Err(Error::Dimension {
                context: "support vector",
                expected: dim,
                actual: s.dim(),
            });
        }
        acc.iter_mut().zip(s.values()).for_each(|(a, &v)| *a += wi * v as f64);
    }
    Embedding::normalized(&acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalMode {
    Image,
    Text,
    TextExpanded,
}

impl GoalMode {
    pub const ALL: [GoalMode; 3] = [GoalMode::Image, GoalMode::Text, GoalMode::TextExpanded];

    pub fn name(self) -> &'static str {
        match self {
            GoalMode::Image => "image",
            GoalMode::Text => "text",
            GoalMode::TextExpanded => "text-expanded",
        }
    }
}

impl fmt::Display for GoalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GoalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(GoalMode::Image),
            "text" => Ok(GoalMode::Text),
            "text-expanded" | "text_expanded" => Ok(GoalMode::TextExpanded),
            other => Err(Error::input(format!(
                "unknown goal mode `{other}` (image, text, text-expanded)"
            ))),
        }
    }
}

pub fn text_goal(ep: &Episode, codebook: &Codebook) -> Result<Embedding> {
    let t = &ep.text_goal;
    codebook.text_embed(&t.category, &t.attributes, &t.context_tags)
}

/// Goal embedding for `ep` under `mode`.
pub fn make_goal(ep: &Episode, mode: GoalMode, codebook: &Codebook, set: Option<&SupportSet>) -> Result<Embedding> {
    match mode {
        GoalMode::Image => Ok(ep.all_candidates[ep.heldout_view].embedding.clone()),
        GoalMode::Text => text_goal(ep, codebook),
        GoalMode::TextExpanded => {
            let set = set.ok_or_else(|| Error::input("text-expanded goals need a support set"))?;
            expand_text_goal(&text_goal(ep, codebook)?, set, codebook.temperature())
        }
    }
}

/// Goal vector handed to an agent of `variant`. Layout-only agents get the
/// held-out view's layout for image goals and zeros for text goals.
pub fn agent_goal(
    ep: &Episode,
    mode: GoalMode,
    variant: Variant,
    codebook: &Codebook,
    set: Option<&SupportSet>,
) -> Result<Vec<f64>> {
    if variant.layout_goal() {
        let layout = &ep.all_candidates[ep.heldout_view].layout;
        return Ok(match mode {
            GoalMode::Image => layout.clone(),
            _ => vec![0.0; layout.len()],
        });
    }
    Ok(make_goal(ep, mode, codebook, set)?.to_f64())
}

/// Policies that can be evaluated.
#[derive(Clone, Copy, Debug)]
pub enum EvalPolicy<'a> {
    Agent(&'a AgentParams),
    /// follows the shortest path to the nearest goal viewpoint, then stops
    Oracle,
    /// uniform over all six actions
    RandomWalk,
}

/// Shortest-path action toward the nearest viewpoint of `obj`. Needs a
/// heading count divisible by four so every axis direction is reachable.
pub fn oracle_action(assets: &SceneAssets, obj: usize, pose: &AgentPose, headings: u32) -> Action {
    let scene = &assets.scene;
    let field = assets.fields.field(obj);
    let here = pose.cell();
    let d = scene.field_at(field, here);
    if d == 0 || d == UNREACHABLE {
        return Action::Stop;
    }
    let q = headings / 4;
    let dirs: [(i64, i64, u32); 4] = [(1, 0, 0), (0, 1, q), (-1, 0, 2 * q), (0, -1, 3 * q)];
    let next = dirs.iter().find(|(dx, dy, _)| {
        let (nx, ny) = (here.0 as i64 + dx, here.1 as i64 + dy);
        nx >= 0 && ny >= 0 && scene.field_at(field, crate::world::GridPos(nx as usize, ny as usize)) == d - 1
    });
    let Some(&(_, _, want)) = next else {
        return Action::Stop;
    };
    if pose.yaw == want {
        return Action::MoveForward;
    }
    let left = (want + headings - pose.yaw) % headings;
    if left <= headings / 2 {
        Action::TurnLeft
    } else {
        Action::TurnRight
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub max_steps: usize,
    pub support_lambda: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            max_steps: 200,
            support_lambda: 0.8,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::config("eval.max_steps must be positive"));
        }
        SupportSet::new(self.support_lambda).map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub mode: GoalMode,
    pub success: bool,
    pub path_length: f64,
    pub optimal_length: f64,
    pub steps: usize,
}

impl EpisodeResult {
    /// `SR_i · l*_i / max(l_i, l*_i)`.
    pub fn spl(&self) -> f64 {
        if !self.success {
            return 0.0;
        }
        let denom = self.path_length.max(self.optimal_length);
        if denom <= 0.0 {
            1.0
        } else {
            self.optimal_length / denom
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: GoalMode,
    pub results: Vec<EpisodeResult>,
    pub success_rate: f64,
    pub spl: f64,
}

impl EvalReport {
    pub fn from_results(mode: GoalMode, results: Vec<EpisodeResult>) -> Self {
        let n = results.len();
        let (sr, spl) = if n == 0 {
            (0.0, 0.0)
        } else {
            (
                results.iter().filter(|r| r.success).count() as f64 / n as f64,
                results.iter().map(|r| r.spl()).sum::<f64>() / n as f64,
            )
        };
        Self {
            mode,
            results,
            success_rate: sr,
            spl,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("episode_id,mode,success,l,l_star,steps\n");
        for r in &self.results {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.episode_id, r.mode, r.success as u8, r.path_length, r.optimal_length, r.steps
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "mode={} episodes={} SR={:.4} SPL={:.4}",
            self.mode,
            self.results.len(),
            self.success_rate,
            self.spl
        )
    }
}

fn run_episode(
    policy: EvalPolicy,
    nav: &NavWorld,
    ep: &Episode,
    goal: Vec<f64>,
    mode: GoalMode,
    cfg: &EvalConfig,
) -> Result<EpisodeResult> {
    let (assets, obj) = nav.resolve(ep)?;
    let target = Target {
        obj,
        view_pose: ep.all_candidates[ep.heldout_view].pose,
        goal,
    };
    let mut run = Running::start(nav, ep, target)?;
    let mut rng = seed::rng(cfg.seed, &format!("eval/{}", ep.episode_id));
    let mut state = match policy {
        EvalPolicy::Agent(p) => Some(PolicyState::initial(p.config().hidden_dim)),
        _ => None,
    };
    let headings = nav.world.headings;
    loop {
        let action = match policy {
            EvalPolicy::Agent(p) => {
                let st = state.as_mut().expect("agent state");
                let obs = run.observe(nav);
                let input = env::agent_input(&obs, &run.target.goal, st.prev_action);
                let t = p.step_input(&input, &st.h)?;
                let a = agent::act(&t.logits, ActMode::Greedy, &mut rng);
                *st = PolicyState {
                    h: t.h,
                    prev_action: Some(a),
                };
                Action::from_index(a).expect("valid action")
            }
            EvalPolicy::Oracle => oracle_action(assets, obj, &run.pose, headings),
            EvalPolicy::RandomWalk => Action::ALL[rng.random_range(0..Action::COUNT)],
        };
        let tr = run.step(nav, action, cfg.max_steps);
        if tr.done {
            return Ok(EpisodeResult {
                episode_id: ep.episode_id.clone(),
                mode,
                success: tr.success,
                path_length: run.path_length,
                optimal_length: ep.optimal_length,
                steps: run.steps,
            });
        }
    }
}

/// Rolls out `policy` on every episode (in parallel) and aggregates SR/SPL.
pub fn evaluate(
    policy: EvalPolicy,
    nav: &NavWorld,
    episodes: &[Episode],
    mode: GoalMode,
    set: Option<&SupportSet>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    if mode == GoalMode::TextExpanded && set.is_none() {
        return Err(Error::input("text-expanded evaluation needs a support set"));
    }
    let variant = match policy {
        EvalPolicy::Agent(p) => Some(p.config().variant),
        _ => None,
    };
    let results = par::map_range(episodes.len(), |i| {
        let ep = &episodes[i];
        let goal = match variant {
            Some(v) => agent_goal(ep, mode, v, nav.codebook, set)?,
            None => Vec::new(),
        };
        run_episode(policy, nav, ep, goal, mode, cfg)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_results(mode, results))
}

/// One embedding in an external-visualization dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub episode_id: String,
    pub kind: String,
    pub category: String,
    pub vector: Vec<f32>,
}

/// Image, text and (with a support set) expanded goal embeddings per episode.
pub fn embedding_dump(
    episodes: &[Episode],
    codebook: &Codebook,
    set: Option<&SupportSet>,
) -> Result<Vec<EmbeddingRow>> {
    let mut rows = Vec::new();
    for ep in episodes {
        let row = |kind: &str, e: Embedding| EmbeddingRow {
            episode_id: ep.episode_id.clone(),
            kind: kind.to_string(),
            category: ep.text_goal.category.clone(),
            vector: e.values().to_vec(),
        };
        rows.push(row("image", make_goal(ep, GoalMode::Image, codebook, None)?));
        rows.push(row("text", make_goal(ep, GoalMode::Text, codebook, None)?));
        if set.is_some() {
            rows.push(row(
                "text_expanded",
                make_goal(ep, GoalMode::TextExpanded, codebook, set)?,
            ));
        }
    }
    Ok(rows)
}

/// Mean agreement of text and expanded goals with the image goal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapClosure {
    pub episodes: usize,
    pub text_cosine: f64,
    pub expanded_cosine: f64,
}

impl GapClosure {
    pub fn improvement(&self) -> f64 {
        self.expanded_cosine - self.text_cosine
    }
}

pub fn gap_closure(episodes: &[Episode], codebook: &Codebook, set: &SupportSet) -> Result<GapClosure> {
    if episodes.is_empty() {
        return Err(Error::input("gap closure needs at least one episode"));
    }
    let mut text = Vec::with_capacity(episodes.len());
    let mut expanded = Vec::with_capacity(episodes.len());
    for ep in episodes {
        let image = make_goal(ep, GoalMode::Image, codebook, None)?;
        let z_t = text_goal(ep, codebook)?;
        let z_r = expand_text_goal(&z_t, set, codebook.temperature())?;
        text.push(z_t.cosine(&image));
        expanded.push(z_r.cosine(&image));
    }
    Ok(GapClosure {
        episodes: episodes.len(),
        text_cosine: math::mean(&text),
        expanded_cosine: math::mean(&expanded),
    })
}
