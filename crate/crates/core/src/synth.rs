//! Deterministic synthetic ensembles.
//!
//! Model `m` has a skill `s_m` and a temperature `τ_m` drawn uniformly from
//! the configured ranges. On a split with shift severity `σ`, a sample with
//! label `y` yields evidence `z = s_m·onehot(y) + √(1 + σ²)·g` with `g`
//! standard normal: unit baseline noise plus the shift. The model's logits
//! are the log-likelihood of that evidence, `s_m·z / (1 + σ²)`, and its
//! probabilities are `softmax(logits / τ_m)`. With `τ = 1` predictions are
//! calibrated on every split; `τ < 1` makes a model overconfident. Larger
//! `σ` lowers both accuracy and confidence.
//!
//! Randomness comes from [`rand_chacha::ChaCha8Rng`] seeded with the config
//! seed; every (model, split) and every label vector reads its own ChaCha
//! stream, so outputs are a pure function of the config. Normals use
//! `rand_distr::StandardNormal`. Matrices are rounded to `f32`, the storage
//! precision of prediction files, so in-memory and on-disk worlds agree.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::domain::{EnsembleManifest, LabelVector, ManifestOptions, ModelEntry, Pairing, PredictionSet};
use crate::error::{Error, Result};
use crate::io::{self, PredictionFile};

/// Identifies the random generator; recorded in written manifests.
pub const GENERATOR: &str = "rand_chacha-0.3/ChaCha8Rng + rand_distr-0.4/StandardNormal";

pub const ID_SPLIT: &str = "id";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_models: usize,
    pub n_samples: usize,
    pub n_classes: usize,
    pub skill: (f64, f64),
    pub temperature: (f64, f64),
    /// Shift severity of the in-distribution split (usually 0).
    pub id_noise: f64,
    /// Shift severities of the splits `shift1`, `shift2`, ...
    pub severities: Vec<f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_models: 20,
            n_samples: 2000,
            n_classes: 10,
            skill: (2.5, 5.0),
            temperature: (0.8, 1.2),
            id_noise: 0.0,
            severities: vec![0.3, 0.6, 0.9, 1.2, 1.5],
            seed: 20240601,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_models < 1 || self.n_samples < 1 || self.n_classes < 2 {
            return bad(format!(
                "need >= 1 model, >= 1 sample, >= 2 classes (got {}, {}, {})",
                self.n_models, self.n_samples, self.n_classes
            ));
        }
        let (s_lo, s_hi) = self.skill;
        if !(s_lo > 0.0 && s_lo <= s_hi && s_hi.is_finite()) {
            return bad(format!("invalid skill range [{s_lo}, {s_hi}]"));
        }
        let (t_lo, t_hi) = self.temperature;
        if !(t_lo > 0.0 && t_lo <= t_hi && t_hi.is_finite()) {
            return bad(format!("invalid temperature range [{t_lo}, {t_hi}]"));
        }
        if std::iter::once(&self.id_noise)
            .chain(&self.severities)
            .any(|s| !(*s >= 0.0 && s.is_finite()))
        {
            return bad("noise scales must be finite and >= 0".into());
        }
        Ok(())
    }

    /// Split ids with their noise scales, ID split first.
    pub fn splits(&self) -> Vec<(String, f64)> {
        std::iter::once((ID_SPLIT.to_string(), self.id_noise))
            .chain(
                self.severities
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| (format!("shift{}", i + 1), s)),
            )
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub skill: f64,
    pub temperature: f64,
}

/// A generated ensemble: labels per split and raw prediction matrices per
/// (model, split).
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub k: usize,
    pub model_ids: Vec<String>,
    pub params: Vec<ModelParams>,
    pub splits: Vec<String>,
    pub labels: BTreeMap<String, LabelVector>,
    pub files: BTreeMap<(String, String), PredictionFile>,
}

impl World {
    pub fn id_split(&self) -> &str {
        &self.splits[0]
    }

    pub fn ood_splits(&self) -> &[String] {
        &self.splits[1..]
    }

    /// Validated prediction set of one model on one split.
    pub fn prediction_set(&self, model: &str, split: &str) -> Result<PredictionSet> {
        self.files
            .get(&(model.to_string(), split.to_string()))
            .ok_or_else(|| Error::MissingSplit {
                split: split.to_string(),
                owner: format!("model `{model}`"),
            })?
            .to_prediction_set(model, split)
    }

    /// Writes prediction files, label files and `manifest.json` under `dir`.
    pub fn write(&self, dir: &Path, pairing: Pairing, force: bool) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut models = Vec::new();
        for model in &self.model_ids {
            let mut predictions = BTreeMap::new();
            for split in &self.splits {
                let rel = PathBuf::from(model).join(format!("{split}.ddpm"));
                let path = dir.join(&rel);
                io::ensure_writable(&path, force)?;
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                io::write_prediction_file(&self.files[&(model.clone(), split.clone())], &path)?;
                predictions.insert(split.clone(), rel);
            }
            models.push(ModelEntry {
                id: model.clone(),
                predictions,
            });
        }
        let mut labels = BTreeMap::new();
        std::fs::create_dir_all(dir.join("labels")).map_err(|e| Error::io(dir, e))?;
        for (split, lv) in &self.labels {
            let rel = PathBuf::from("labels").join(format!("{split}.csv"));
            let path = dir.join(&rel);
            io::ensure_writable(&path, force)?;
            io::write_labels(lv, &path)?;
            labels.insert(split.clone(), rel);
        }
        let manifest = EnsembleManifest {
            k: self.k,
            id_split: self.id_split().to_string(),
            ood_splits: self.ood_splits().to_vec(),
            models,
            pairing,
            labels,
            options: ManifestOptions {
                severity: BTreeMap::new(),
                generator: Some(GENERATOR.to_string()),
            },
        };
        let path = dir.join("manifest.json");
        io::ensure_writable(&path, force)?;
        io::write_manifest(&manifest, &path)?;
        Ok(path)
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const PARAM_STREAM: u64 = 0;

fn label_stream(split_index: usize) -> u64 {
    1 + split_index as u64
}

fn prediction_stream(model: usize, split_index: usize) -> u64 {
    ((model as u64 + 1) << 32) | split_index as u64
}

fn model_id(i: usize) -> String {
    format!("m{i:02}")
}

/// Softmax of `z / temperature`, written to `out`.
fn softmax_into(z: &[f64], temperature: f64, logits: &mut [f64], out: &mut [f64]) {
    for (l, v) in logits.iter_mut().zip(z) {
        *l = v / temperature;
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, l) in out.iter_mut().zip(logits.iter()) {
        *o = (l - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

fn draw_labels(cfg: &SynthConfig, split_index: usize) -> Vec<u32> {
    let mut rng = rng_for(cfg.seed, label_stream(split_index));
    (0..cfg.n_samples)
        .map(|_| rng.gen_range(0..cfg.n_classes as u32))
        .collect()
}

fn draw_params(cfg: &SynthConfig) -> Vec<ModelParams> {
    let mut rng = rng_for(cfg.seed, PARAM_STREAM);
    let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..hi)
        }
    };
    (0..cfg.n_models)
        .map(|_| {
            let skill = uniform(&mut rng, cfg.skill);
            let temperature = uniform(&mut rng, cfg.temperature);
            ModelParams { skill, temperature }
        })
        .collect()
}

fn generate_matrix(cfg: &SynthConfig, params: ModelParams, labels: &[u32], sigma: f64, stream: u64) -> PredictionFile {
    let k = cfg.n_classes;
    let mut rng = rng_for(cfg.seed, stream);
    let variance = 1.0 + sigma * sigma;
    let noise = variance.sqrt();
    let scale = params.skill / variance;
    let mut probs = Vec::with_capacity(labels.len() * k);
    let mut logits_out = Vec::with_capacity(labels.len() * k);
    let mut z = vec![0.0; k];
    let mut logits = vec![0.0; k];
    let mut p = vec![0.0; k];
    for &y in labels {
        for (c, zc) in z.iter_mut().enumerate() {
            let g: f64 = rng.sample(StandardNormal);
            let evidence = noise * g + if c == y as usize { params.skill } else { 0.0 };
            *zc = scale * evidence;
        }
        softmax_into(&z, params.temperature, &mut logits, &mut p);
        probs.extend(p.iter().map(|&v| v as f32));
        logits_out.extend(logits.iter().map(|&v| v as f32));
    }
    PredictionFile {
        n: labels.len() as u32,
        k: k as u32,
        probs,
        logits: Some(logits_out),
    }
}

/// Generates the full world for `cfg`.
pub fn generate_world(cfg: &SynthConfig) -> Result<World> {
    cfg.validate()?;
    let params = draw_params(cfg);
    let splits = cfg.splits();
    let mut labels = BTreeMap::new();
    let mut files = BTreeMap::new();
    for (si, (split, sigma)) in splits.iter().enumerate() {
        let lv = draw_labels(cfg, si);
        for (m, &p) in params.iter().enumerate() {
            let file = generate_matrix(cfg, p, &lv, *sigma, prediction_stream(m, si));
            files.insert((model_id(m), split.clone()), file);
        }
        labels.insert(split.clone(), LabelVector::new(split.clone(), lv));
    }
    Ok(World {
        k: cfg.n_classes,
        model_ids: (0..cfg.n_models).map(model_id).collect(),
        params,
        splits: splits.into_iter().map(|(s, _)| s).collect(),
        labels,
        files,
    })
}

/// A world whose single shifted split `planted1` is the ID split followed
/// by `n_extra` samples on which every model predicts the true class with
/// probability one.
///
/// Every ID→OOD metric, disagreement or error under any notion, is then
/// multiplied by `n_id / (n_id + n_extra)`: agreement and accuracy lines
/// coincide and pass through the origin.
pub fn planted_world(cfg: &SynthConfig, n_extra: usize) -> Result<World> {
    let base = SynthConfig {
        severities: Vec::new(),
        ..cfg.clone()
    };
    let mut world = generate_world(&base)?;
    let split = "planted1".to_string();
    let id_labels = world.labels[ID_SPLIT].labels.clone();
    let mut rng = rng_for(cfg.seed, label_stream(1));
    let extra: Vec<u32> = (0..n_extra).map(|_| rng.gen_range(0..cfg.n_classes as u32)).collect();
    let k = cfg.n_classes;
    for model in &world.model_ids {
        let id = &world.files[&(model.clone(), ID_SPLIT.to_string())];
        let mut probs = id.probs.clone();
        let mut logits = id.logits.clone().unwrap_or_default();
        for &y in &extra {
            for c in 0..k {
                let hit = c == y as usize;
                probs.push(if hit { 1.0 } else { 0.0 });
                logits.push(if hit { 30.0 } else { 0.0 });
            }
        }
        let file = PredictionFile {
            n: (id_labels.len() + n_extra) as u32,
            k: k as u32,
            probs,
            logits: id.logits.as_ref().map(|_| logits),
        };
        world.files.insert((model.clone(), split.clone()), file);
    }
    let mut all = id_labels;
    all.extend(extra);
    world.labels.insert(split.clone(), LabelVector::new(split.clone(), all));
    world.splits.push(split);
    Ok(world)
}
