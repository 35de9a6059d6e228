//! End-to-end analyses over a loaded ensemble.
//!
//! Work fans out across model pairs (or models); every per-pair reduction
//! runs sequentially in sample order, and results are collected back in
//! pair order, so outputs do not depend on the thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::{self, CalibrationConfig};
use crate::detect::{self, DetectionResult, ScoreKind};
use crate::divergence::{self, EpsilonPolicy, Notion};
use crate::domain::{DisagreementRecord, EnsembleManifest, LabelVector, ModelPair, Pairing, PredictionSet};
use crate::error::{Error, Result};
use crate::estimate::{self, EstimationConfig, EstimationReport, Method};
use crate::io;
use crate::linefit::{self, Cubic, LineFit};
use crate::synth::World;
use crate::transform::TransformKind;

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Every prediction set and label vector of a run, in memory.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub k: usize,
    pub id_split: String,
    pub ood_splits: Vec<String>,
    /// Model ids in manifest order.
    pub model_ids: Vec<String>,
    pub pairing: Pairing,
    pub predictions: BTreeMap<(String, String), PredictionSet>,
    pub labels: BTreeMap<String, LabelVector>,
    pub severity: BTreeMap<String, Option<u32>>,
}

impl Ensemble {
    /// Reads every file named by a manifest previously checked by
    /// [`io::load_manifest`].
    pub fn load(manifest: &EnsembleManifest) -> Result<Self> {
        let jobs: Vec<(String, String, std::path::PathBuf)> = manifest
            .models
            .iter()
            .flat_map(|m| {
                manifest
                    .splits()
                    .into_iter()
                    .map(move |s| (m.id.clone(), s.clone(), m.predictions[&s].clone()))
            })
            .collect();
        let sets = jobs
            .par_iter()
            .map(|(model, split, path)| {
                io::read_predictions(path, model, split).map(|set| ((model.clone(), split.clone()), set))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut labels = BTreeMap::new();
        for (split, path) in &manifest.labels {
            labels.insert(split.clone(), io::read_labels(path, split)?);
        }
        Self::assemble(
            manifest.k,
            manifest.id_split.clone(),
            manifest.ood_splits.clone(),
            manifest.model_ids(),
            manifest.pairing.clone(),
            sets.into_iter().collect(),
            labels,
            manifest
                .ood_splits
                .iter()
                .map(|s| (s.clone(), manifest.severity_of(s)))
                .collect(),
        )
    }

    /// Wraps a synthetic world.
    pub fn from_world(world: &World, pairing: Pairing) -> Result<Self> {
        let mut predictions = BTreeMap::new();
        for ((model, split), file) in &world.files {
            predictions.insert((model.clone(), split.clone()), file.to_prediction_set(model, split)?);
        }
        Self::assemble(
            world.k,
            world.id_split().to_string(),
            world.ood_splits().to_vec(),
            world.model_ids.clone(),
            pairing,
            predictions,
            world.labels.clone(),
            world
                .ood_splits()
                .iter()
                .map(|s| (s.clone(), crate::domain::parse_severity(s)))
                .collect(),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        k: usize,
        id_split: String,
        ood_splits: Vec<String>,
        model_ids: Vec<String>,
        pairing: Pairing,
        predictions: BTreeMap<(String, String), PredictionSet>,
        labels: BTreeMap<String, LabelVector>,
        severity: BTreeMap<String, Option<u32>>,
    ) -> Result<Self> {
        let ens = Self {
            k,
            id_split,
            ood_splits,
            model_ids,
            pairing,
            predictions,
            labels,
            severity,
        };
        ens.pairing.pairs(&ens.model_ids)?;
        for split in ens.splits() {
            let mut n = None;
            for model in &ens.model_ids {
                let set = ens.prediction(model, &split)?;
                if set.n_classes() != k {
                    return Err(Error::ClassCountMismatch {
                        expected: k,
                        found: set.n_classes(),
                    });
                }
                match n {
                    None => n = Some(set.n_samples()),
                    Some(n) if n != set.n_samples() => {
                        return Err(Error::ShapeMismatch(format!(
                            "split `{split}`: {n} vs {} samples",
                            set.n_samples()
                        )))
                    }
                    _ => {}
                }
                if let Some(lv) = ens.labels.get(&split) {
                    lv.check_against(set)?;
                }
            }
        }
        Ok(ens)
    }

    pub fn splits(&self) -> Vec<String> {
        std::iter::once(self.id_split.clone())
            .chain(self.ood_splits.iter().cloned())
            .collect()
    }

    pub fn pairs(&self) -> Vec<ModelPair> {
        self.pairing
            .pairs(&self.model_ids)
            .expect("pairing validated at construction")
    }

    pub fn estimated_models(&self) -> Vec<String> {
        self.pairing.estimated_models(&self.model_ids)
    }

    /// All models, lexicographic.
    pub fn sorted_models(&self) -> Vec<String> {
        let mut ids = self.model_ids.clone();
        ids.sort();
        ids
    }

    pub fn prediction(&self, model: &str, split: &str) -> Result<&PredictionSet> {
        self.predictions
            .get(&(model.to_string(), split.to_string()))
            .ok_or_else(|| Error::MissingSplit {
                split: split.to_string(),
                owner: format!("model `{model}`"),
            })
    }

    pub fn has_labels(&self, split: &str) -> bool {
        self.labels.contains_key(split)
    }
}

/// Mean pairwise disagreement for every (split, notion), aligned with `pairs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisagreementTable {
    pub pairs: Vec<ModelPair>,
    pub values: BTreeMap<(String, Notion), Vec<f64>>,
}

impl DisagreementTable {
    pub fn get(&self, split: &str, notion: Notion) -> Result<&[f64]> {
        self.values
            .get(&(split.to_string(), notion))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingNotionFit {
                split: split.to_string(),
                notion: notion.to_string(),
            })
    }

    /// Flattened records ordered by split (as given), notion, then pair.
    pub fn records(&self, splits: &[String], notions: &[Notion]) -> Vec<DisagreementRecord> {
        let mut out = Vec::new();
        for split in splits {
            for &notion in notions {
                if let Some(values) = self.values.get(&(split.clone(), notion)) {
                    for (pair, &value) in self.pairs.iter().zip(values) {
                        out.push(DisagreementRecord {
                            pair: pair.clone(),
                            split_id: split.clone(),
                            notion,
                            value,
                        });
                    }
                }
            }
        }
        out
    }
}

pub fn disagreement_table(ens: &Ensemble, notions: &[Notion], eps: EpsilonPolicy) -> Result<DisagreementTable> {
    let pairs = ens.pairs();
    let splits = ens.splits();
    let per_pair: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|pair| {
            let mut out = Vec::with_capacity(splits.len() * notions.len());
            for split in &splits {
                let p = ens.prediction(&pair.first, split)?;
                let q = ens.prediction(&pair.second, split)?;
                for &notion in notions {
                    out.push(divergence::aggregate_disagreement(notion, p, q, eps)?.value);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut values = BTreeMap::new();
    for (si, split) in splits.iter().enumerate() {
        for (ni, &notion) in notions.iter().enumerate() {
            let column = per_pair.iter().map(|v| v[si * notions.len() + ni]).collect();
            values.insert((split.clone(), notion), column);
        }
    }
    Ok(DisagreementTable { pairs, values })
}

/// Mean error per model for every labelled (split, notion), aligned with `models`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub models: Vec<String>,
    pub values: BTreeMap<(String, Notion), Vec<f64>>,
}

impl ErrorTable {
    pub fn get(&self, split: &str, notion: Notion) -> Option<&[f64]> {
        self.values.get(&(split.to_string(), notion)).map(Vec::as_slice)
    }

    pub fn of(&self, model: &str, split: &str, notion: Notion) -> Option<f64> {
        let i = self.models.iter().position(|m| m == model)?;
        self.get(split, notion).map(|v| v[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub model_id: String,
    pub split_id: String,
    pub notion: Notion,
    pub value: f64,
}

impl ErrorTable {
    pub fn records(&self, splits: &[String], notions: &[Notion]) -> Vec<ErrorRecord> {
        let mut out = Vec::new();
        for split in splits {
            for &notion in notions {
                if let Some(values) = self.get(split, notion) {
                    for (model, &value) in self.models.iter().zip(values) {
                        out.push(ErrorRecord {
                            model_id: model.clone(),
                            split_id: split.clone(),
                            notion,
                            value,
                        });
                    }
                }
            }
        }
        out
    }
}

pub fn error_table(ens: &Ensemble, notions: &[Notion], eps: EpsilonPolicy) -> Result<ErrorTable> {
    let models = ens.sorted_models();
    let labelled: Vec<String> = ens.splits().into_iter().filter(|s| ens.has_labels(s)).collect();
    let per_model: Vec<Vec<f64>> = models
        .par_iter()
        .map(|model| {
            let mut out = Vec::with_capacity(labelled.len() * notions.len());
            for split in &labelled {
                let set = ens.prediction(model, split)?;
                for &notion in notions {
                    out.push(divergence::aggregate_error(notion, set, &ens.labels[split], eps)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut values = BTreeMap::new();
    for (si, split) in labelled.iter().enumerate() {
        for (ni, &notion) in notions.iter().enumerate() {
            let column = per_model.iter().map(|v| v[si * notions.len() + ni]).collect();
            values.insert((split.clone(), notion), column);
        }
    }
    Ok(ErrorTable { models, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LineKind {
    /// ID vs OOD disagreement over model pairs.
    Agreement,
    /// ID vs OOD error over estimated models.
    Accuracy,
}

impl LineKind {
    pub fn name(self) -> &'static str {
        match self {
            LineKind::Agreement => "agreement",
            LineKind::Accuracy => "accuracy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineRecord {
    pub kind: LineKind,
    pub split_id: String,
    pub fit: LineFit,
}

fn errors_for(errs: &ErrorTable, models: &[String], split: &str, notion: Notion) -> Option<Vec<f64>> {
    models.iter().map(|m| errs.of(m, split, notion)).collect()
}

/// Agreement line for one OOD split.
pub fn agreement_line(
    dis: &DisagreementTable,
    id_split: &str,
    ood_split: &str,
    notion: Notion,
    transform: TransformKind,
) -> Result<LineFit> {
    linefit::fit_line(
        notion,
        transform,
        dis.get(id_split, notion)?,
        dis.get(ood_split, notion)?,
    )
}

/// Accuracy line for one OOD split; `None` without OOD labels.
pub fn accuracy_line(
    ens: &Ensemble,
    errs: &ErrorTable,
    ood_split: &str,
    notion: Notion,
    transform: TransformKind,
) -> Result<Option<LineFit>> {
    let models = ens.estimated_models();
    let (Some(xs), Some(ys)) = (
        errors_for(errs, &models, &ens.id_split, notion),
        errors_for(errs, &models, ood_split, notion),
    ) else {
        return Ok(None);
    };
    linefit::fit_line(notion, transform, &xs, &ys).map(Some)
}

/// Agreement and (where labels allow) accuracy lines for every OOD split and notion.
pub fn line_fits(
    ens: &Ensemble,
    dis: &DisagreementTable,
    errs: &ErrorTable,
    notions: &[Notion],
    transform: TransformKind,
) -> Result<Vec<LineRecord>> {
    let mut out = Vec::new();
    for split in &ens.ood_splits {
        for &notion in notions {
            out.push(LineRecord {
                kind: LineKind::Agreement,
                split_id: split.clone(),
                fit: agreement_line(dis, &ens.id_split, split, notion, transform)?,
            });
            if let Some(fit) = accuracy_line(ens, errs, split, notion, transform)? {
                out.push(LineRecord {
                    kind: LineKind::Accuracy,
                    split_id: split.clone(),
                    fit,
                });
            }
        }
    }
    Ok(out)
}

/// Estimates OOD error on every OOD split for `cfg.notion`.
pub fn estimate_all(
    ens: &Ensemble,
    dis: &DisagreementTable,
    errs: &ErrorTable,
    cfg: &EstimationConfig,
) -> Result<Vec<EstimationReport>> {
    cfg.validate()?;
    let estimated = ens.estimated_models();
    let all_models = ens.sorted_models();
    let mut reports = Vec::new();
    for split in &ens.ood_splits {
        let fit = agreement_line(dis, &ens.id_split, split, cfg.notion, cfg.transform)?;
        let with_errors = |models: &[String]| -> Result<Vec<(String, f64)>> {
            models
                .iter()
                .map(|m| {
                    errs.of(m, &ens.id_split, cfg.notion)
                        .map(|e| (m.clone(), e))
                        .ok_or_else(|| Error::MissingSplit {
                            split: ens.id_split.clone(),
                            owner: "labels".into(),
                        })
                })
                .collect()
        };
        let mut estimates = match cfg.method {
            Method::AlineS => estimate::aline_s(&fit, &with_errors(&estimated)?, cfg.transform)?,
            Method::AlineD => {
                let ood: Vec<(ModelPair, f64)> = dis
                    .pairs
                    .iter()
                    .cloned()
                    .zip(dis.get(split, cfg.notion)?.iter().copied())
                    .collect();
                let all = estimate::aline_d(&fit, &with_errors(&all_models)?, &ood, cfg.transform, cfg.anchor_weight)?;
                all.into_iter().filter(|e| estimated.contains(&e.model_id)).collect()
            }
        };
        let mut mape = None;
        if ens.has_labels(split) {
            for e in estimates.iter_mut() {
                e.truth = errs.of(&e.model_id, split, cfg.notion);
            }
            let est: Vec<f64> = estimates.iter().map(|e| e.estimate).collect();
            let truth: Vec<f64> = estimates.iter().filter_map(|e| e.truth).collect();
            mape = Some(estimate::mape(&est, &truth)?);
        }
        reports.push(EstimationReport {
            split_id: split.clone(),
            notion: cfg.notion,
            method: cfg.method,
            estimates,
            mape,
            passes_r2_gate: fit.r2 > cfg.r2_gate,
            fit,
        });
    }
    Ok(reports)
}

/// Agreement-line R² per OOD split and notion, the input of [`estimate::gate_by_r2`].
pub fn agreement_r2(
    ens: &Ensemble,
    dis: &DisagreementTable,
    notions: &[Notion],
    transform: TransformKind,
) -> Result<BTreeMap<String, BTreeMap<Notion, f64>>> {
    let mut out = BTreeMap::new();
    for split in &ens.ood_splits {
        let mut per = BTreeMap::new();
        for &notion in notions {
            per.insert(notion, agreement_line(dis, &ens.id_split, split, notion, transform)?.r2);
        }
        out.insert(split.clone(), per);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DetectionMode {
    /// One AUC per pair (or model), then averaged.
    #[default]
    PerSubject,
    /// One AUC on the sample scores averaged over pairs (or models).
    Pooled,
}

fn subject_scores(
    ens: &Ensemble,
    kind: ScoreKind,
    subject: &Subject,
    split: &str,
    eps: EpsilonPolicy,
) -> Result<Vec<f64>> {
    match subject {
        Subject::Model(m) => detect::model_scores(kind, ens.prediction(m, split)?),
        Subject::Pair(pair) => detect::pair_scores(
            kind,
            ens.prediction(&pair.first, split)?,
            ens.prediction(&pair.second, split)?,
            eps,
        ),
    }
}

#[derive(Debug, Clone)]
enum Subject {
    Model(String),
    Pair(ModelPair),
}

impl Subject {
    fn name(&self) -> String {
        match self {
            Subject::Model(m) => m.clone(),
            Subject::Pair(p) => p.to_string(),
        }
    }
}

/// AUC of every (kind, subject, OOD split). Results are ordered by kind (as
/// given), OOD split (manifest order), then subject.
pub fn detection(
    ens: &Ensemble,
    kinds: &[ScoreKind],
    mode: DetectionMode,
    eps: EpsilonPolicy,
) -> Result<Vec<DetectionResult>> {
    let pairs = ens.pairs();
    let models = ens.estimated_models();
    let mut out = Vec::new();
    for &kind in kinds {
        let subjects: Vec<Subject> = if kind.is_pairwise() {
            pairs.iter().cloned().map(Subject::Pair).collect()
        } else {
            models.iter().cloned().map(Subject::Model).collect()
        };
        // per-subject ID scores are shared across OOD splits
        let id_scores: Vec<Vec<f64>> = subjects
            .par_iter()
            .map(|s| subject_scores(ens, kind, s, &ens.id_split, eps))
            .collect::<Result<_>>()?;
        for split in &ens.ood_splits {
            let ood_scores: Vec<Vec<f64>> = subjects
                .par_iter()
                .map(|s| subject_scores(ens, kind, s, split, eps))
                .collect::<Result<_>>()?;
            let severity = ens.severity.get(split).copied().flatten();
            match mode {
                DetectionMode::PerSubject => {
                    let aucs: Vec<f64> = id_scores
                        .par_iter()
                        .zip(&ood_scores)
                        .map(|(i, o)| detect::roc_auc(i, o))
                        .collect::<Result<_>>()?;
                    for ((subject, auc), (i, o)) in subjects.iter().zip(aucs).zip(id_scores.iter().zip(&ood_scores)) {
                        out.push(DetectionResult {
                            kind,
                            subject: subject.name(),
                            id_split: ens.id_split.clone(),
                            ood_split: split.clone(),
                            severity,
                            auc,
                            n_id: i.len(),
                            n_ood: o.len(),
                        });
                    }
                }
                DetectionMode::Pooled => {
                    let i = mean_columns(&id_scores);
                    let o = mean_columns(&ood_scores);
                    out.push(DetectionResult {
                        kind,
                        subject: "pooled".into(),
                        id_split: ens.id_split.clone(),
                        ood_split: split.clone(),
                        severity,
                        auc: detect::roc_auc(&i, &o)?,
                        n_id: i.len(),
                        n_ood: o.len(),
                    });
                }
            }
        }
    }
    Ok(out)
}

fn mean_columns(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.first().map_or(0, Vec::len);
    (0..n)
        .map(|j| crate::numeric::mean(rows.iter().map(|r| r[j])).unwrap_or(0.0))
        .collect()
}

/// One OOD split of the calibration study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub split_id: String,
    pub notion: Notion,
    pub ensemble_cace: f64,
    pub agreement_r2: f64,
    pub accuracy_r2: f64,
}

/// Cubic trend of line R² against ensemble CACE across splits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationTrend {
    pub notion: Notion,
    pub kind: LineKind,
    pub cubic: Cubic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationStudy {
    pub rows: Vec<CalibrationRow>,
    pub trends: Vec<CalibrationTrend>,
}

/// Ensemble CACE of one split over all models.
pub fn split_cace(ens: &Ensemble, split: &str, cfg: CalibrationConfig) -> Result<f64> {
    let labels = ens.labels.get(split).ok_or_else(|| Error::MissingSplit {
        split: split.to_string(),
        owner: "labels".into(),
    })?;
    let sets = ens
        .model_ids
        .iter()
        .map(|m| ens.prediction(m, split))
        .collect::<Result<Vec<_>>>()?;
    calibration::ensemble_cace(sets, labels, cfg)
}

/// Relates miscalibration to line quality: for every labelled OOD split,
/// the ensemble CACE next to the agreement and accuracy R² per notion, plus
/// a cubic trend per (notion, line) when at least four splits exist.
pub fn calibration_study(
    ens: &Ensemble,
    dis: &DisagreementTable,
    errs: &ErrorTable,
    notions: &[Notion],
    transform: TransformKind,
    cfg: CalibrationConfig,
) -> Result<CalibrationStudy> {
    let mut rows = Vec::new();
    for split in ens.ood_splits.iter().filter(|s| ens.has_labels(s)) {
        let cace = split_cace(ens, split, cfg)?;
        for &notion in notions {
            let agreement = agreement_line(dis, &ens.id_split, split, notion, transform)?;
            let accuracy =
                accuracy_line(ens, errs, split, notion, transform)?.expect("labelled split has an accuracy line");
            rows.push(CalibrationRow {
                split_id: split.clone(),
                notion,
                ensemble_cace: cace,
                agreement_r2: agreement.r2,
                accuracy_r2: accuracy.r2,
            });
        }
    }
    let mut trends = Vec::new();
    for &notion in notions {
        let sel: Vec<&CalibrationRow> = rows.iter().filter(|r| r.notion == notion).collect();
        if sel.len() < 4 {
            continue;
        }
        let xs: Vec<f64> = sel.iter().map(|r| r.ensemble_cace).collect();
        for kind in [LineKind::Agreement, LineKind::Accuracy] {
            let ys: Vec<f64> = sel
                .iter()
                .map(|r| match kind {
                    LineKind::Agreement => r.agreement_r2,
                    LineKind::Accuracy => r.accuracy_r2,
                })
                .collect();
            trends.push(CalibrationTrend {
                notion,
                kind,
                cubic: linefit::polyfit3(&xs, &ys)?,
            });
        }
    }
    Ok(CalibrationStudy { rows, trends })
}
