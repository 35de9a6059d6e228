//! Shared domain types: prediction matrices, labels, manifests and model pairing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::divergence::Notion;
use crate::error::{Error, Result};
use crate::numeric;

/// Absolute tolerance on a row sum before a row is rejected.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

/// Rows whose sum is this close to 1 are left untouched, which makes
/// validation a fixed point.
const RENORMALIZE_SLACK: f64 = 8.0 * f64::EPSILON;

/// Per-sample class probabilities of one model on one split.
///
/// Stored row-major in 64-bit floats. Every row sums to one (after the
/// renormalization performed at construction).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    model_id: String,
    split_id: String,
    n_samples: usize,
    n_classes: usize,
    probs: Vec<f64>,
    logits: Option<Vec<f64>>,
}

impl PredictionSet {
    /// Validates a row-major `n x k` probability matrix and renormalizes its rows.
    pub fn new(
        model_id: impl Into<String>,
        split_id: impl Into<String>,
        n_samples: usize,
        n_classes: usize,
        mut probs: Vec<f64>,
        logits: Option<Vec<f64>>,
    ) -> Result<Self> {
        if n_samples == 0 || n_classes == 0 {
            return Err(Error::ShapeMismatch(format!(
                "prediction matrix must be non-empty, got {n_samples}x{n_classes}"
            )));
        }
        if probs.len() != n_samples * n_classes {
            return Err(Error::ShapeMismatch(format!(
                "{} probabilities for a {n_samples}x{n_classes} matrix",
                probs.len()
            )));
        }
        if let Some(l) = &logits {
            if l.len() != probs.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} logits for a {n_samples}x{n_classes} matrix",
                    l.len()
                )));
            }
            if let Some(pos) = l.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    row: pos / n_classes,
                    col: pos % n_classes,
                });
            }
        }
        for (row, chunk) in probs.chunks_exact_mut(n_classes).enumerate() {
            renormalize_row(row, chunk)?;
        }
        Ok(Self {
            model_id: model_id.into(),
            split_id: split_id.into(),
            n_samples,
            n_classes,
            probs,
            logits,
        })
    }

    /// Builds a set from nested rows, checking that every row has `k` entries.
    pub fn from_rows(
        model_id: impl Into<String>,
        split_id: impl Into<String>,
        k: usize,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        validate_prediction_set(model_id, split_id, rows, k)
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn split_id(&self) -> &str {
        &self.split_id
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.probs.chunks_exact(self.n_classes)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn logits(&self) -> Option<&[f64]> {
        self.logits.as_deref()
    }

    pub fn logit_row(&self, i: usize) -> Option<&[f64]> {
        self.logits
            .as_ref()
            .map(|l| &l[i * self.n_classes..(i + 1) * self.n_classes])
    }

    pub fn has_logits(&self) -> bool {
        self.logits.is_some()
    }

    /// Returns a copy carrying different identifiers.
    pub fn relabeled(&self, model_id: impl Into<String>, split_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            split_id: split_id.into(),
            ..self.clone()
        }
    }

    /// Fails unless `other` covers the same split with the same shape.
    pub fn check_compatible(&self, other: &PredictionSet) -> Result<()> {
        if self.split_id != other.split_id {
            return Err(Error::ShapeMismatch(format!(
                "split `{}` vs `{}`",
                self.split_id, other.split_id
            )));
        }
        if self.n_samples != other.n_samples || self.n_classes != other.n_classes {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{} on split `{}`",
                self.n_samples, self.n_classes, other.n_samples, other.n_classes, self.split_id
            )));
        }
        Ok(())
    }
}

fn renormalize_row(row: usize, values: &mut [f64]) -> Result<()> {
    for (col, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row, col });
        }
        if v < 0.0 {
            return Err(Error::NegativeEntry { row, col, value: v });
        }
    }
    let sum = numeric::sum(values.iter().copied());
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::RowSumViolation { row, sum });
    }
    if (sum - 1.0).abs() > RENORMALIZE_SLACK {
        values.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(())
}

/// Validates raw rows against the expected class count.
pub fn validate_prediction_set(
    model_id: impl Into<String>,
    split_id: impl Into<String>,
    rows: &[Vec<f64>],
    k: usize,
) -> Result<PredictionSet> {
    let mut flat = Vec::with_capacity(rows.len() * k);
    for row in rows {
        if row.len() != k {
            return Err(Error::ClassCountMismatch {
                expected: k,
                found: row.len(),
            });
        }
        flat.extend_from_slice(row);
    }
    PredictionSet::new(model_id, split_id, rows.len(), k, flat, None)
}

/// Ground-truth class indices for one split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    pub split_id: String,
    pub labels: Vec<u32>,
}

impl LabelVector {
    pub fn new(split_id: impl Into<String>, labels: Vec<u32>) -> Self {
        Self {
            split_id: split_id.into(),
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Checks every label against the class count `k`.
    pub fn validate(&self, k: usize) -> Result<()> {
        for (index, &label) in self.labels.iter().enumerate() {
            if label as usize >= k {
                return Err(Error::LabelOutOfRange { index, label, k });
            }
        }
        Ok(())
    }

    /// Checks length and range against a prediction set.
    pub fn check_against(&self, set: &PredictionSet) -> Result<()> {
        if self.labels.len() != set.n_samples() {
            return Err(Error::LengthMismatch {
                left: self.labels.len(),
                right: set.n_samples(),
            });
        }
        self.validate(set.n_classes())
    }

    /// One-hot encoding of sample `i`.
    pub fn one_hot(&self, i: usize, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; k];
        v[self.labels[i] as usize] = 1.0;
        v
    }
}

/// How model pairs are formed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Every unordered pair of models.
    AllPairs,
    /// Each model paired with one fixed anchor model.
    Anchor(String),
}

/// An unordered model pair. For anchor pairing `first` is the anchor.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ModelPair {
    pub first: String,
    pub second: String,
}

impl ModelPair {
    pub fn new(first: impl Into<String>, second: impl Into<String>) -> Self {
        Self {
            first: first.into(),
            second: second.into(),
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.first == id || self.second == id
    }
}

impl fmt::Display for ModelPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.first, self.second)
    }
}

impl Pairing {
    /// Pairs for the given model ids.
    ///
    /// `AllPairs` orders models lexicographically and emits `(a, b)` with
    /// `a < b`. `Anchor` emits `(anchor, m)` for every other model in input order.
    pub fn pairs(&self, model_ids: &[String]) -> Result<Vec<ModelPair>> {
        if model_ids.len() < 2 {
            return Err(Error::TooFew {
                what: "models",
                needed: 2,
                got: model_ids.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for id in model_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateModel(id.clone()));
            }
        }
        match self {
            Pairing::AllPairs => {
                let sorted: Vec<&str> = seen.into_iter().collect();
                let mut out = Vec::with_capacity(sorted.len() * (sorted.len() - 1) / 2);
                for (i, a) in sorted.iter().enumerate() {
                    for b in &sorted[i + 1..] {
                        out.push(ModelPair::new(*a, *b));
                    }
                }
                Ok(out)
            }
            Pairing::Anchor(anchor) => {
                if !seen.contains(anchor.as_str()) {
                    return Err(Error::AnchorNotFound(anchor.clone()));
                }
                Ok(model_ids
                    .iter()
                    .filter(|m| *m != anchor)
                    .map(|m| ModelPair::new(anchor.as_str(), m.as_str()))
                    .collect())
            }
        }
    }

    /// Models whose OOD error is being estimated: all of them, minus the anchor.
    pub fn estimated_models(&self, model_ids: &[String]) -> Vec<String> {
        let mut ids: Vec<String> = match self {
            Pairing::AllPairs => model_ids.to_vec(),
            Pairing::Anchor(anchor) => model_ids.iter().filter(|m| *m != anchor).cloned().collect(),
        };
        ids.sort();
        ids
    }

    pub fn is_anchor(&self) -> bool {
        matches!(self, Pairing::Anchor(_))
    }
}

/// One model's prediction files, keyed by split id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub id: String,
    pub predictions: BTreeMap<String, PathBuf>,
}

/// Optional manifest settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestOptions {
    /// Explicit severity per OOD split; overrides the trailing-integer rule.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub severity: BTreeMap<String, u32>,
    /// Free-form description of the generator that produced the files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
}

/// A run description: models, splits, label files and pairing mode.
///
/// Paths are stored as written in the manifest; [`crate::io::load_manifest`]
/// resolves them against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleManifest {
    pub k: usize,
    pub id_split: String,
    pub ood_splits: Vec<String>,
    pub models: Vec<ModelEntry>,
    pub pairing: Pairing,
    #[serde(default)]
    pub labels: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub options: ManifestOptions,
}

impl EnsembleManifest {
    pub fn model_ids(&self) -> Vec<String> {
        self.models.iter().map(|m| m.id.clone()).collect()
    }

    /// All splits, ID first.
    pub fn splits(&self) -> Vec<String> {
        std::iter::once(self.id_split.clone())
            .chain(self.ood_splits.iter().cloned())
            .collect()
    }

    pub fn severity_of(&self, split: &str) -> Option<u32> {
        self.options
            .severity
            .get(split)
            .copied()
            .or_else(|| parse_severity(split))
    }
}

/// Pairs named by the manifest's pairing mode.
pub fn enumerate_pairs(manifest: &EnsembleManifest) -> Result<Vec<ModelPair>> {
    manifest.pairing.pairs(&manifest.model_ids())
}

/// Trailing integer of a split id: `fog3` and `fog_3` both give 3.
pub fn parse_severity(split: &str) -> Option<u32> {
    let digits = split.len() - split.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return None;
    }
    split[split.len() - digits..].parse().ok()
}

/// Mean disagreement of one model pair on one split under one notion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisagreementRecord {
    pub pair: ModelPair,
    pub split_id: String,
    pub notion: Notion,
    pub value: f64,
}
