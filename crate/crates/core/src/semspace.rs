//! Synthetic vision-language embedding space.
//!
//! A seeded codebook assigns a unit direction to every category and
//! attribute name. Image-side embeddings are weighted mixtures of
//! per-instance embeddings; text-side embeddings add a shared modality-gap
//! direction. The gap and "null content" directions are orthogonal to every
//! content direction, so an empty view scores exactly zero against every
//! category query and the gap only ever lowers text-image agreement.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{io, math, seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemanticSpaceConfig {
    pub dim: usize,
    pub categories: Vec<String>,
    /// facet → attribute names (e.g. `color → [red, green, ...]`)
    pub attribute_vocab: BTreeMap<String, Vec<String>>,
    pub temperature: f64,
    pub gap_magnitude: f64,
    pub instance_noise: f64,
    pub seed: u64,
}

impl Default for SemanticSpaceConfig {
    fn default() -> Self {
        let vocab = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let mut attribute_vocab = BTreeMap::new();
        attribute_vocab.insert(
            "color".to_string(),
            vocab(&["red", "green", "blue", "white", "black", "brown"]),
        );
        attribute_vocab.insert("material".to_string(), vocab(&["wood", "metal", "fabric", "leather"]));
        attribute_vocab.insert("shape".to_string(), vocab(&["round", "square", "tall", "wide"]));
        Self {
            dim: 64,
            categories: vocab(&["chair", "bed", "plant", "toilet", "tv_monitor", "sofa"]),
            attribute_vocab,
            temperature: 100.0,
            gap_magnitude: 0.15,
            instance_noise: 0.05,
            seed: 0,
        }
    }
}

impl SemanticSpaceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 8 {
            return Err(Error::config(format!("semspace.dim must be >= 8, got {}", self.dim)));
        }
        if self.categories.len() < 2 {
            return Err(Error::config("semspace.categories needs at least 2 names"));
        }
        check_unique("semspace.categories", &self.categories)?;
        for (facet, names) in &self.attribute_vocab {
            if names.is_empty() {
                return Err(Error::config(format!("attribute facet `{facet}` is empty")));
            }
            check_unique(facet, names)?;
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config("semspace.temperature must be positive"));
        }
        if !(self.gap_magnitude >= 0.0 && self.gap_magnitude.is_finite()) {
            return Err(Error::config("semspace.gap_magnitude must be non-negative"));
        }
        if !(self.instance_noise >= 0.0 && self.instance_noise.is_finite()) {
            return Err(Error::config("semspace.instance_noise must be non-negative"));
        }
        Ok(())
    }
}

fn check_unique(what: &str, names: &[String]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::config(format!("duplicate name `{n}` in {what}")));
        }
    }
    Ok(())
}

/// Unit-norm embedding vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// Normalizes `values`; fails on a zero or non-finite vector.
    pub fn normalized(values: &[f64]) -> Result<Self> {
        let n = math::norm(values);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::input("cannot normalize a zero or non-finite vector"));
        }
        Ok(Self(values.iter().map(|v| (v / n) as f32).collect()))
    }

    /// Wraps raw values without normalizing them.
    pub fn from_raw(values: Vec<f32>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(&a, &b)| a as f64 * b as f64).sum()
    }

    /// Raw cosine similarity (zero when either side is the zero vector).
    pub fn cosine(&self, other: &Embedding) -> f64 {
        let d = self.norm() * other.norm();
        if d == 0.0 {
            0.0
        } else {
            self.dot(other) / d
        }
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }
}

/// `g(a, b) = τ · aᵀb / (‖a‖‖b‖)`.
pub fn scaled_cosine(a: &Embedding, b: &Embedding, temperature: f64) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            context: "scaled_cosine",
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::input("scaled_cosine of a zero vector"));
    }
    Ok(temperature * a.dot(b) / (na * nb))
}

/// Object instance with intrinsic attributes and extrinsic context.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceDescriptor {
    pub instance_id: String,
    pub category: String,
    /// facet → attribute name
    pub attributes: BTreeMap<String, String>,
    /// categories of nearby objects, nearest first
    pub context_tags: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Codebook {
    config: SemanticSpaceConfig,
    categories: Vec<Vec<f32>>,
    category_index: HashMap<String, usize>,
    attributes: BTreeMap<String, BTreeMap<String, Vec<f32>>>,
    gap: Vec<f32>,
    null: Vec<f32>,
}

fn random_direction(rng: &mut seed::Rng, dim: usize, exclude: &[&[f32]]) -> Vec<f32> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for e in exclude {
            let e: Vec<f64> = e.iter().map(|&x| x as f64).collect();
            let p = math::dot(&v, &e);
            v.iter_mut().zip(&e).for_each(|(x, y)| *x -= p * y);
        }
        let n = math::norm(&v);
        if n > 1e-3 {
            return v.iter().map(|x| (x / n) as f32).collect();
        }
    }
}

fn add_scaled(acc: &mut [f64], dir: &[f32], scale: f64) {
    acc.iter_mut().zip(dir).for_each(|(a, &d)| *a += scale * d as f64);
}

impl Codebook {
    pub fn build(config: &SemanticSpaceConfig) -> Result<Self> {
        config.validate()?;
        let dim = config.dim;
        let mut rng = seed::rng(config.seed, "codebook");
        let null = random_direction(&mut rng, dim, &[]);
        let gap = random_direction(&mut rng, dim, &[&null]);
        let reserved: [&[f32]; 2] = [&null, &gap];
        let categories: Vec<Vec<f32>> = config
            .categories
            .iter()
            .map(|_| random_direction(&mut rng, dim, &reserved))
            .collect();
        let mut attributes = BTreeMap::new();
        for (facet, names) in &config.attribute_vocab {
            let dirs: BTreeMap<String, Vec<f32>> = names
                .iter()
                .map(|n| (n.clone(), random_direction(&mut rng, dim, &reserved)))
                .collect();
            attributes.insert(facet.clone(), dirs);
        }
        Ok(Self::assemble(config.clone(), categories, attributes, gap, null))
    }

    fn assemble(
        config: SemanticSpaceConfig,
        categories: Vec<Vec<f32>>,
        attributes: BTreeMap<String, BTreeMap<String, Vec<f32>>>,
        gap: Vec<f32>,
        null: Vec<f32>,
    ) -> Self {
        let category_index = config
            .categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Self {
            config,
            categories,
            category_index,
            attributes,
            gap,
            null,
        }
    }

    pub fn config(&self) -> &SemanticSpaceConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn temperature(&self) -> f64 {
        self.config.temperature
    }

    pub fn categories(&self) -> &[String] {
        &self.config.categories
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.category_index.get(name).copied()
    }

    pub fn category_direction(&self, name: &str) -> Result<Embedding> {
        let i = self
            .category_index(name)
            .ok_or_else(|| Error::UnknownCategory(name.to_string()))?;
        Ok(Embedding(self.categories[i].clone()))
    }

    pub fn null_content(&self) -> Embedding {
        Embedding(self.null.clone())
    }

    pub fn gap_direction(&self) -> Embedding {
        Embedding(self.gap.clone())
    }

    fn attribute_dir(&self, facet: &str, name: &str) -> Result<&[f32]> {
        self.attributes
            .get(facet)
            .and_then(|m| m.get(name))
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::input(format!("unknown attribute `{facet}={name}`")))
    }

    /// Unit direction unique to one instance id, orthogonal to gap and null.
    pub fn instance_noise_direction(&self, instance_id: &str) -> Vec<f32> {
        let base = seed::derive(self.config.seed, "instance-noise");
        let mut rng = seed::rng(base, instance_id);
        random_direction(&mut rng, self.dim(), &[&self.null, &self.gap])
    }

    fn content_sum(&self, category: &str, attributes: &BTreeMap<String, String>) -> Result<Vec<f64>> {
        let ci = self
            .category_index(category)
            .ok_or_else(|| Error::UnknownCategory(category.to_string()))?;
        let mut acc = vec![0.0; self.dim()];
        add_scaled(&mut acc, &self.categories[ci], 1.0);
        for (facet, name) in attributes {
            add_scaled(&mut acc, self.attribute_dir(facet, name)?, 1.0);
        }
        Ok(acc)
    }

    /// `normalize(category + Σ attributes + noise · instance_dir)`.
    pub fn instance_embedding(&self, desc: &InstanceDescriptor) -> Result<Embedding> {
        let mut acc = self.content_sum(&desc.category, &desc.attributes)?;
        if self.config.instance_noise > 0.0 {
            let noise = self.instance_noise_direction(&desc.instance_id);
            add_scaled(&mut acc, &noise, self.config.instance_noise);
        }
        Embedding::normalized(&acc)
    }

    /// Image-side encoder over a weighted set of visible instances.
    pub fn image_embed(&self, visible: &[(&InstanceDescriptor, f64)]) -> Result<Embedding> {
        let embedded = visible
            .iter()
            .map(|(d, w)| Ok((self.instance_embedding(d)?, *w)))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<(&Embedding, f64)> = embedded.iter().map(|(e, w)| (e, *w)).collect();
        self.mix(&refs)
    }

    /// Weighted mixture of precomputed instance embeddings.
    pub fn mix(&self, visible: &[(&Embedding, f64)]) -> Result<Embedding> {
        if visible.is_empty() {
            return Ok(self.null_content());
        }
        let mut acc = vec![0.0; self.dim()];
        for (e, w) in visible {
            if !(*w > 0.0 && w.is_finite()) {
                return Err(Error::input(format!("visibility weight must be positive, got {w}")));
            }
            add_scaled(&mut acc, e.values(), *w);
        }
        match Embedding::normalized(&acc) {
            Ok(e) => Ok(e),
            Err(_) => Ok(self.null_content()),
        }
    }

    /// Text-side encoder: `normalize(category + Σ attributes + Σ context + gap · δ)`.
    pub fn text_embed(
        &self,
        category: &str,
        attributes: &BTreeMap<String, String>,
        context_tags: &[String],
    ) -> Result<Embedding> {
        let mut acc = self.content_sum(category, attributes)?;
        for tag in context_tags {
            let ci = self
                .category_index(tag)
                .ok_or_else(|| Error::UnknownCategory(tag.clone()))?;
            add_scaled(&mut acc, &self.categories[ci], 1.0);
        }
        add_scaled(&mut acc, &self.gap, self.config.gap_magnitude);
        Embedding::normalized(&acc)
    }

    /// Category query vectors `q_c` (bare category text, gap included).
    pub fn category_queries(&self) -> Vec<Embedding> {
        let none = BTreeMap::new();
        self.config
            .categories
            .iter()
            .map(|c| self.text_embed(c, &none, &[]).expect("known category"))
            .collect()
    }

    /// Hash of every direction; unchanged for the lifetime of a codebook.
    pub fn fingerprint(&self) -> String {
        let dirs: Vec<Vec<f64>> = self
            .to_file()
            .directions
            .values()
            .map(|v| v.iter().map(|&x| x as f64).collect())
            .collect();
        seed::fingerprint(dirs.iter().map(|v| v.as_slice()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, &self.to_file())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: CodebookFile = io::read_json(path)?;
        Self::from_file(file).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_file(&self) -> CodebookFile {
        let mut directions = BTreeMap::new();
        directions.insert("null".to_string(), self.null.clone());
        directions.insert("gap".to_string(), self.gap.clone());
        for (name, dir) in self.config.categories.iter().zip(&self.categories) {
            directions.insert(format!("category/{name}"), dir.clone());
        }
        for (facet, names) in &self.attributes {
            for (name, dir) in names {
                directions.insert(format!("attribute/{facet}/{name}"), dir.clone());
            }
        }
        CodebookFile {
            config: self.config.clone(),
            directions,
        }
    }

    pub fn from_file(mut file: CodebookFile) -> Result<Self> {
        let config = file.config;
        config.validate()?;
        let mut take = |key: String| -> Result<Vec<f32>> {
            let v = file
                .directions
                .remove(&key)
                .ok_or_else(|| Error::input(format!("codebook file lacks direction `{key}`")))?;
            if v.len() != config.dim {
                return Err(Error::Dimension {
                    context: "codebook direction",
                    expected: config.dim,
                    actual: v.len(),
                });
            }
            Ok(v)
        };
        let null = take("null".into())?;
        let gap = take("gap".into())?;
        let categories = config
            .categories
            .iter()
            .map(|c| take(format!("category/{c}")))
            .collect::<Result<Vec<_>>>()?;
        let mut attributes = BTreeMap::new();
        for (facet, names) in &config.attribute_vocab {
            let mut dirs = BTreeMap::new();
            for n in names {
                dirs.insert(n.clone(), take(format!("attribute/{facet}/{n}"))?);
            }
            attributes.insert(facet.clone(), dirs);
        }
        Ok(Self::assemble(config, categories, attributes, gap, null))
    }
}

/// On-disk codebook layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodebookFile {
    pub config: SemanticSpaceConfig,
    pub directions: BTreeMap<String, Vec<f32>>,
}
