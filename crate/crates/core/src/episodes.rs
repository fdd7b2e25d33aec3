//! Episode generation with entropy-prioritized goal views.
//!
//! At the goal point the agent is rotated through every yaw heading at
//! every pitch level. Each rendered view is zero-shot classified against
//! the category queries; views whose class distribution has the lowest
//! normalized entropy form the pool from which goal views are drawn.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::semspace::{Codebook, Embedding};
use crate::world::{self, AgentPose, GridPos, SceneAssets, WorldConfig};
use crate::{io, math, par, seed};

/// Pitch of candidate circle `i`: level first, then down, then up.
pub const PITCH_ORDER: [i8; 3] = [0, -1, 1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Entropy,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// accepted optimal path length band, meters
    pub distance_band_m: [f64; 2],
    pub selection: Selection,
    pub pitch_levels: usize,
    pub k_pool: usize,
    pub k_pick: usize,
    /// goal views above this entropy count as "ambiguous"
    pub ambiguous_threshold: f64,
    pub max_retries: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            distance_band_m: [1.5, 10.0],
            selection: Selection::Entropy,
            pitch_levels: 3,
            k_pool: 10,
            k_pick: 4,
            ambiguous_threshold: 0.9,
            max_retries: 500,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self, headings: u32) -> Result<()> {
        let [lo, hi] = self.distance_band_m;
        if !(lo >= 0.0 && hi >= lo) {
            return Err(Error::config("episodes.distance_band_m must satisfy 0 <= min <= max"));
        }
        if !(1..=3).contains(&self.pitch_levels) {
            return Err(Error::config("episodes.pitch_levels must be 1, 2 or 3"));
        }
        if self.k_pick == 0 || self.k_pick > self.k_pool {
            return Err(Error::config("episodes: need 1 <= k_pick <= k_pool"));
        }
        if self.k_pool > headings as usize * self.pitch_levels {
            return Err(Error::config("episodes.k_pool exceeds the number of candidate views"));
        }
        Ok(())
    }
}

/// One rendered view at the goal point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewCandidate {
    /// `pitch_circle · Ω + yaw`
    pub index: usize,
    pub pose: AgentPose,
    pub embedding: Embedding,
    pub layout: Vec<f64>,
    pub class_probs: Vec<f64>,
    pub entropy: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextGoal {
    pub category: String,
    pub attributes: BTreeMap<String, String>,
    pub context_tags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: String,
    pub scene_id: String,
    pub start: AgentPose,
    pub goal_instance: String,
    pub goal_point: GridPos,
    /// indices into `all_candidates` used as training goals
    pub goal_views: Vec<usize>,
    /// candidate used as the instance-image goal at evaluation time
    pub heldout_view: usize,
    pub all_candidates: Vec<ViewCandidate>,
    /// geodesic start → nearest goal viewpoint, meters
    pub optimal_length: f64,
    pub text_goal: TextGoal,
    pub selection: Selection,
}

impl Episode {
    pub fn goal_view(&self, k: usize) -> &ViewCandidate {
        &self.all_candidates[self.goal_views[k]]
    }

    pub fn mean_goal_entropy(&self) -> f64 {
        math::mean(
            &self
                .goal_views
                .iter()
                .map(|&i| self.all_candidates[i].entropy)
                .collect::<Vec<_>>(),
        )
    }
}

/// `−(1/log|C|) Σ p log p`, with `0 · log 0 = 0`.
pub fn normalized_entropy(probs: &[f64]) -> Result<f64> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::input("probabilities must be finite and non-negative"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::input(format!("probabilities sum to {total}, not 1")));
    }
    if probs.len() < 2 {
        return Ok(0.0);
    }
    let h: f64 = probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
    Ok((h / (probs.len() as f64).ln()).clamp(0.0, 1.0))
}

/// Zero-shot class distribution `softmax_c(g(v, q_c))`.
pub fn class_probs(view: &Embedding, queries: &[Embedding], temperature: f64) -> Vec<f64> {
    let logits: Vec<f64> = queries.iter().map(|q| temperature * view.cosine(q)).collect();
    math::softmax(&logits)
}

pub fn score_views(
    assets: &SceneAssets,
    goal_cell: GridPos,
    codebook: &Codebook,
    queries: &[Embedding],
    world: &WorldConfig,
    pitch_levels: usize,
) -> Result<Vec<ViewCandidate>> {
    if !assets.scene.is_floor(goal_cell) {
        return Err(Error::input(format!("goal cell {goal_cell:?} is not floor")));
    }
    let omega = world.headings as usize;
    let mut out = Vec::with_capacity(omega * pitch_levels);
    for (circle, &pitch) in PITCH_ORDER.iter().take(pitch_levels).enumerate() {
        for yaw in 0..world.headings {
            let pose = AgentPose::at_cell(goal_cell, yaw, pitch);
            let obs = assets.render(&pose, codebook, world);
            let class_probs = class_probs(&obs.semantic, queries, codebook.temperature());
            let entropy = normalized_entropy(&class_probs)?;
            out.push(ViewCandidate {
                index: circle * omega + yaw as usize,
                pose,
                embedding: obs.semantic,
                layout: obs.layout,
                class_probs,
                entropy,
            });
        }
    }
    Ok(out)
}

/// The `k_pool` lowest-entropy candidates, ties broken by lower index.
/// Returns candidate `index` values.
pub fn entropy_pool(candidates: &[ViewCandidate], k_pool: usize) -> Result<Vec<usize>> {
    if candidates.len() < k_pool {
        return Err(Error::input(format!(
            "need {k_pool} candidates for the pool, got {}",
            candidates.len()
        )));
    }
    let mut order: Vec<(f64, usize)> = candidates.iter().map(|c| (c.entropy, c.index)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(order.into_iter().take(k_pool).map(|(_, i)| i).collect())
}

/// Samples `k_pick` of the entropy pool uniformly without replacement.
/// Returned candidate indices are sorted ascending.
pub fn select_goal_views(
    candidates: &[ViewCandidate],
    k_pool: usize,
    k_pick: usize,
    rng: &mut seed::Rng,
) -> Result<Vec<usize>> {
    if k_pick > k_pool {
        return Err(Error::input("k_pick exceeds k_pool"));
    }
    let pool = entropy_pool(candidates, k_pool)?;
    let mut picked: Vec<usize> = index::sample(rng, pool.len(), k_pick)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

fn position_of(candidates: &[ViewCandidate], index: usize) -> usize {
    candidates
        .iter()
        .position(|c| c.index == index)
        .expect("candidate index present")
}

/// Samples one episode; `rng` should be owned by this episode alone.
pub fn generate_episode(
    assets: &SceneAssets,
    codebook: &Codebook,
    queries: &[Embedding],
    rng: &mut seed::Rng,
    cfg: &EpisodeConfig,
    world: &WorldConfig,
    episode_id: String,
) -> Result<Episode> {
    let scene = &assets.scene;
    if scene.objects.is_empty() {
        return Err(Error::input(format!("{}: scene has no objects", scene.scene_id)));
    }
    let floor = scene.floor_cells();
    let [lo, hi] = cfg.distance_band_m;
    let mut found = None;
    for _ in 0..cfg.max_retries {
        let obj = rng.random_range(0..scene.objects.len());
        let id = &scene.objects[obj].descriptor.instance_id;
        let vps = &scene.viewpoints[id];
        let goal_point = vps[rng.random_range(0..vps.len())];
        let start = floor[rng.random_range(0..floor.len())];
        let l_star = assets.fields.distance(scene, obj, start);
        if l_star.is_finite() && l_star > 0.0 && l_star >= lo - 1e-9 && l_star <= hi + 1e-9 {
            found = Some((obj, goal_point, start, l_star));
            break;
        }
    }
    let Some((obj, goal_point, start_cell, l_star)) = found else {
        return Err(Error::Generation {
            attempts: cfg.max_retries,
            reason: format!("{}: no start/goal pair within [{lo}, {hi}] m", scene.scene_id),
        });
    };
    let start = AgentPose::at_cell(start_cell, rng.random_range(0..world.headings), 0);

    let candidates = score_views(assets, goal_point, codebook, queries, world, cfg.pitch_levels)?;
    let chosen = match cfg.selection {
        Selection::Entropy => select_goal_views(&candidates, cfg.k_pool, cfg.k_pick, rng)?,
        Selection::Random => {
            let mut v: Vec<usize> = index::sample(rng, candidates.len(), cfg.k_pick)
                .into_iter()
                .map(|i| candidates[i].index)
                .collect();
            v.sort_unstable();
            v
        }
    };
    let goal_views: Vec<usize> = chosen.iter().map(|&i| position_of(&candidates, i)).collect();
    let heldout_view = pick_heldout(assets, obj, &candidates, &goal_views, world);

    let desc = &scene.objects[obj].descriptor;
    Ok(Episode {
        episode_id,
        scene_id: scene.scene_id.clone(),
        start,
        goal_instance: desc.instance_id.clone(),
        goal_point,
        goal_views,
        heldout_view,
        all_candidates: candidates,
        optimal_length: l_star,
        text_goal: TextGoal {
            category: desc.category.clone(),
            attributes: desc.attributes.clone(),
            context_tags: desc.context_tags.clone(),
        },
        selection: cfg.selection,
    })
}

/// Held-out instance image: an unselected view, preferring pitches no
/// training goal view uses, that shows the most of the goal instance.
fn pick_heldout(
    assets: &SceneAssets,
    obj: usize,
    candidates: &[ViewCandidate],
    goal_views: &[usize],
    world: &WorldConfig,
) -> usize {
    let used_pitch: Vec<i8> = goal_views.iter().map(|&i| candidates[i].pose.pitch).collect();
    let unselected: Vec<usize> = (0..candidates.len()).filter(|i| !goal_views.contains(i)).collect();
    let fresh: Vec<usize> = unselected
        .iter()
        .copied()
        .filter(|&i| !used_pitch.contains(&candidates[i].pose.pitch))
        .collect();
    let pool = if fresh.is_empty() { &unselected } else { &fresh };
    let share = |i: usize| {
        let geo = world::view_geometry(&assets.scene, &candidates[i].pose, world.headings, &world.fov);
        let total: f64 = geo.visible.iter().map(|v| v.1).sum();
        let mine: f64 = geo.visible.iter().filter(|v| v.0 == obj).map(|v| v.1).sum();
        if total > 0.0 {
            mine / total
        } else {
            0.0
        }
    };
    let mut best = pool.first().copied().unwrap_or(0);
    let mut best_key = (f64::NEG_INFINITY, f64::INFINITY);
    for &i in pool {
        let key = (share(i), candidates[i].entropy);
        if key.0 > best_key.0 + 1e-12 || ((key.0 - best_key.0).abs() <= 1e-12 && key.1 < best_key.1) {
            best = i;
            best_key = key;
        }
    }
    best
}

/// Generates `count` episodes round-robin over `scenes`, each with its own
/// seeded stream, in parallel. Episode `k` is named `{id_prefix}-{k}`.
pub fn generate_episodes(
    scenes: &[SceneAssets],
    codebook: &Codebook,
    cfg: &EpisodeConfig,
    world: &WorldConfig,
    count: usize,
    seed: u64,
    id_prefix: &str,
) -> Result<Vec<Episode>> {
    if scenes.is_empty() && count > 0 {
        return Err(Error::input("no scenes to generate episodes from"));
    }
    cfg.validate(world.headings)?;
    let queries = codebook.category_queries();
    par::map_range(count, |k| {
        let assets = &scenes[k % scenes.len()];
        let mut rng = seed::rng(seed, &format!("episode/{}/{k}", assets.scene.scene_id));
        let id = format!("{id_prefix}-{k}");
        generate_episode(assets, codebook, &queries, &mut rng, cfg, world, id)
    })
    .into_iter()
    .collect()
}

pub fn save_episodes(path: &Path, episodes: &[Episode]) -> Result<()> {
    io::write_json(path, episodes)
}

pub fn load_episodes(path: &Path) -> Result<Vec<Episode>> {
    io::read_json(path)
}

pub const AMBIGUOUS: &str = "ambiguous";

/// Histogram of goal views over categories plus `ambiguous`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalDistribution {
    pub counts: Vec<(String, usize)>,
    pub threshold: f64,
}

impl GoalDistribution {
    pub fn total(&self) -> usize {
        self.counts.iter().map(|c| c.1).sum()
    }

    pub fn count(&self, label: &str) -> usize {
        self.counts.iter().find(|c| c.0 == label).map(|c| c.1).unwrap_or(0)
    }

    pub fn ambiguous_fraction(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.count(AMBIGUOUS) as f64 / t as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("category,count\n");
        for (label, n) in &self.counts {
            let _ = writeln!(s, "{label},{n}");
        }
        s
    }

    pub fn bar_chart(&self, width: usize) -> String {
        let max = self.counts.iter().map(|c| c.1).max().unwrap_or(0).max(1);
        let label_w = self.counts.iter().map(|c| c.0.len()).max().unwrap_or(0);
        let mut s = String::new();
        for (label, n) in &self.counts {
            let bar = "#".repeat(n * width / max);
            let _ = writeln!(s, "{label:>label_w$} | {bar} {n}");
        }
        s
    }
}

pub fn goal_distribution_report(
    episodes: &[Episode],
    categories: &[String],
    ambiguous_threshold: f64,
) -> Result<GoalDistribution> {
    if episodes.is_empty() {
        return Err(Error::input("goal distribution needs at least one episode"));
    }
    let mut counts: Vec<(String, usize)> = categories.iter().map(|c| (c.clone(), 0)).collect();
    let mut ambiguous = 0;
    for ep in episodes {
        for &v in &ep.goal_views {
            let c = &ep.all_candidates[v];
            if c.entropy > ambiguous_threshold {
                ambiguous += 1;
            } else {
                counts[math::argmax(&c.class_probs)].1 += 1;
            }
        }
    }
    counts.push((AMBIGUOUS.to_string(), ambiguous));
    Ok(GoalDistribution {
        counts,
        threshold: ambiguous_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semspace::{InstanceDescriptor, SemanticSpaceConfig};
    use crate::world::{generate_scene, PlacedObject, Scene};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    fn fake(entropies: &[f64]) -> Vec<ViewCandidate> {
        entropies
            .iter()
            .enumerate()
            .map(|(i, &e)| ViewCandidate {
                index: i,
                pose: AgentPose::at_cell(GridPos(1, 1), 0, 0),
                embedding: Embedding::from_raw(vec![1.0]),
                layout: vec![],
                class_probs: vec![1.0],
                entropy: e,
            })
            .collect()
    }

    #[test]
    fn entropy_examples() {
        assert!((normalized_entropy(&[1.0 / 6.0; 6]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(normalized_entropy(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        let h = normalized_entropy(&[0.5, 0.5, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((h - 0.38685).abs() < 1e-4);
        assert!((h - 2f64.ln() / 6f64.ln()).abs() < 1e-12);
        assert!(normalized_entropy(&[0.5, 0.6]).is_err());
        assert!(normalized_entropy(&[1.5, -0.5]).is_err());
    }

    #[test]
    fn selection_examples() {
        let mut rng = seed::rng(0, "t");
        assert_eq!(
            select_goal_views(&fake(&[0.9, 0.2, 0.5]), 1, 1, &mut rng).unwrap(),
            vec![1]
        );
        assert_eq!(
            entropy_pool(&fake(&[0.4; 12]), 10).unwrap(),
            (0..10).collect::<Vec<_>>()
        );
        assert!(select_goal_views(&fake(&[0.1; 5]), 10, 4, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn pool_matches_full_sort(entropies in proptest::collection::vec(0.0f64..1.0, 10..40), seed in 0u64..100) {
            let c = fake(&entropies);
            let pool = entropy_pool(&c, 10).unwrap();
            // oracle: sort every (entropy, index) pair and keep the first ten
            let mut all: Vec<(f64, usize)> = entropies.iter().copied().zip(0..).collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let oracle: Vec<usize> = all[..10].iter().map(|p| p.1).collect();
            prop_assert_eq!(&pool, &oracle);

            let kth = all[9].0;
            let mut rng = seed::rng(seed, "p");
            for i in select_goal_views(&c, 10, 4, &mut rng).unwrap() {
                prop_assert!(entropies[i] <= kth);
            }

            let mut shuffled = c.clone();
            shuffled.shuffle(&mut seed::rng(seed, "shuffle"));
            prop_assert_eq!(entropy_pool(&shuffled, 10).unwrap(), pool);
            let a = select_goal_views(&c, 10, 4, &mut seed::rng(seed, "s")).unwrap();
            let b = select_goal_views(&shuffled, 10, 4, &mut seed::rng(seed, "s")).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn entropy_ignores_similarity_offsets(sims in proptest::collection::vec(-1.0f64..1.0, 6), shift in -50.0f64..50.0) {
            let a: Vec<f64> = sims.iter().map(|s| 100.0 * s).collect();
            let b: Vec<f64> = a.iter().map(|s| s + shift).collect();
            let ha = normalized_entropy(&math::softmax(&a)).unwrap();
            let hb = normalized_entropy(&math::softmax(&b)).unwrap();
            prop_assert!((ha - hb).abs() < 1e-9);
        }
    }

    fn corridor_scene(objects: Vec<(GridPos, &str)>) -> SceneAssets {
        let rows = ["##########", "#........#", "#........#", "##########"];
        let (w, h, cells) = Scene::from_rows("c", &rows).unwrap();
        let probe = Scene::new("c", w, h, cells.clone(), vec![], BTreeMap::new()).unwrap();
        let mut placed = vec![];
        let mut vps = BTreeMap::new();
        for (i, (cell, cat)) in objects.into_iter().enumerate() {
            let id = format!("o{i}");
            vps.insert(id.clone(), probe.compute_viewpoints(cell, 0.5));
            let mut attributes = BTreeMap::new();
            attributes.insert("color".to_string(), "white".to_string());
            placed.push(PlacedObject {
                descriptor: InstanceDescriptor {
                    instance_id: id,
                    category: cat.into(),
                    attributes,
                    context_tags: vec![],
                },
                cell,
                elevation: 0,
            });
        }
        let scene = Scene::new("c", w, h, cells, placed, vps).unwrap();
        SceneAssets::new(scene, &Codebook::build(&SemanticSpaceConfig::default()).unwrap()).unwrap()
    }

    #[test]
    fn score_views_cases() {
        let cb = Codebook::build(&SemanticSpaceConfig::default()).unwrap();
        let q = cb.category_queries();
        let world = WorldConfig::default();
        let assets = corridor_scene(vec![(GridPos(9, 1), "bed")]);
        let views = score_views(&assets, GridPos(8, 1), &cb, &q, &world, 3).unwrap();
        assert_eq!(views.len(), 36);
        assert!(views
            .iter()
            .all(|v| (v.class_probs.iter().sum::<f64>() - 1.0).abs() < 1e-6));

        // yaw 0 at (8,1) faces the bed in the end wall
        let facing = &views[0];
        assert_eq!(cb.categories()[math::argmax(&facing.class_probs)], "bed");
        assert!(facing.entropy < 0.1);

        // yaw 6 faces down the empty corridor toward the far wall
        let away = &views[6];
        assert_eq!(away.embedding, cb.null_content());
        for p in &away.class_probs {
            assert!((p - 1.0 / 6.0).abs() < 1e-6);
        }
        assert!((away.entropy - 1.0).abs() < 1e-6);
        assert!(score_views(&assets, GridPos(0, 0), &cb, &q, &world, 3).is_err());
    }

    #[test]
    fn episodes_respect_band_and_seed() {
        let cb = Codebook::build(&SemanticSpaceConfig::default()).unwrap();
        let q = cb.category_queries();
        let world = WorldConfig::default();
        let assets = corridor_scene(vec![(GridPos(9, 1), "bed")]);
        let cfg = EpisodeConfig {
            distance_band_m: [1.0, 2.0],
            ..Default::default()
        };
        for k in 0..20 {
            let mut rng = seed::rng(k, "ep");
            let ep = generate_episode(&assets, &cb, &q, &mut rng, &cfg, &world, format!("e{k}")).unwrap();
            assert!(ep.optimal_length >= 1.0 && ep.optimal_length <= 2.0);
            assert_eq!(ep.goal_views.len(), 4);
            assert!(!ep.goal_views.contains(&ep.heldout_view));
            let mut rng = seed::rng(k, "ep");
            let again = generate_episode(&assets, &cb, &q, &mut rng, &cfg, &world, format!("e{k}")).unwrap();
            assert_eq!(ep, again);
        }
        let empty = corridor_scene(vec![]);
        let mut rng = seed::rng(0, "ep");
        assert!(generate_episode(&empty, &cb, &q, &mut rng, &cfg, &world, "x".into()).is_err());
    }

    #[test]
    fn entropy_selection_beats_random() {
        let space = SemanticSpaceConfig::default();
        let cb = Codebook::build(&space).unwrap();
        let world = WorldConfig::default();
        let scenes: Vec<SceneAssets> = (0..5)
            .map(|s| SceneAssets::new(generate_scene(s, &world.generation, &space).unwrap(), &cb).unwrap())
            .collect();
        let ent_cfg = EpisodeConfig::default();
        let rnd_cfg = EpisodeConfig {
            selection: Selection::Random,
            ..Default::default()
        };
        let ent = generate_episodes(&scenes, &cb, &ent_cfg, &world, 100, 3, "t").unwrap();
        let rnd = generate_episodes(&scenes, &cb, &rnd_cfg, &world, 100, 3, "t").unwrap();
        for (a, b) in ent.iter().zip(&rnd) {
            assert_eq!(a.start, b.start);
            assert_eq!(a.goal_instance, b.goal_instance);
        }
        let mean = |eps: &[Episode]| math::mean(&eps.iter().map(|e| e.mean_goal_entropy()).collect::<Vec<_>>());
        assert!(mean(&ent) <= mean(&rnd));

        let cats = cb.categories();
        let de = goal_distribution_report(&ent, cats, 0.9).unwrap();
        let dr = goal_distribution_report(&rnd, cats, 0.9).unwrap();
        assert!(de.ambiguous_fraction() < dr.ambiguous_fraction());
        assert_eq!(de.total(), 400);
    }

    #[test]
    fn distribution_edge_cases() {
        let cats = vec!["chair".to_string(), "bed".to_string()];
        assert!(goal_distribution_report(&[], &cats, 0.9).is_err());
        let assets = corridor_scene(vec![(GridPos(9, 1), "chair")]);
        let cb = Codebook::build(&SemanticSpaceConfig::default()).unwrap();
        let q = cb.category_queries();
        let world = WorldConfig::default();
        let views = score_views(&assets, GridPos(8, 1), &cb, &q, &world, 1).unwrap();
        let mut ep = Episode {
            episode_id: "e".into(),
            scene_id: "c".into(),
            start: AgentPose::at_cell(GridPos(1, 1), 0, 0),
            goal_instance: "o0".into(),
            goal_point: GridPos(8, 1),
            goal_views: vec![0],
            heldout_view: 1,
            all_candidates: views,
            optimal_length: 1.75,
            text_goal: TextGoal {
                category: "chair".into(),
                attributes: BTreeMap::new(),
                context_tags: vec![],
            },
            selection: Selection::Entropy,
        };
        let all = cb.categories().to_vec();
        let d = goal_distribution_report(std::slice::from_ref(&ep), &all, 0.9).unwrap();
        assert_eq!(d.count("chair"), 1);
        assert_eq!(d.total(), 1);
        ep.goal_views = vec![6];
        let d = goal_distribution_report(&[ep], &all, 0.9).unwrap();
        assert_eq!(d.ambiguous_fraction(), 1.0);
        assert!(d.to_csv().starts_with("category,count\n"));
    }
}
