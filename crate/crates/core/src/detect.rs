//! OOD detection scores and ROC-AUC.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::divergence::{EpsilonPolicy, Notion};
use crate::domain::PredictionSet;
use crate::error::{Error, Result};
use crate::numeric;

/// A per-sample OOD score. Higher means more likely OOD for every kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ScoreKind {
    NegMsp,
    NegMaxLogit,
    PairDisagreement(Notion),
}

impl ScoreKind {
    pub fn name(self) -> String {
        match self {
            ScoreKind::NegMsp => "neg-msp".into(),
            ScoreKind::NegMaxLogit => "neg-maxlogit".into(),
            ScoreKind::PairDisagreement(n) => format!("pair-{n}"),
        }
    }

    pub fn is_pairwise(self) -> bool {
        matches!(self, ScoreKind::PairDisagreement(_))
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neg-msp" | "msp" => Ok(ScoreKind::NegMsp),
            "neg-maxlogit" | "maxlogit" => Ok(ScoreKind::NegMaxLogit),
            other => match other.strip_prefix("pair-") {
                Some(n) => Ok(ScoreKind::PairDisagreement(n.parse()?)),
                None => Err(Error::InvalidConfig(format!("unknown score kind `{other}`"))),
            },
        }
    }
}

/// Score of a single sample.
pub fn sample_score(
    kind: ScoreKind,
    row_p: &[f64],
    row_q: Option<&[f64]>,
    row_logits: Option<&[f64]>,
    eps: EpsilonPolicy,
) -> Result<f64> {
    match kind {
        ScoreKind::NegMsp => Ok(-max(row_p)),
        ScoreKind::NegMaxLogit => row_logits
            .map(|l| -max(l))
            .ok_or_else(|| Error::MissingLogits(kind.name())),
        ScoreKind::PairDisagreement(notion) => {
            let q = row_q.ok_or(Error::MissingSecondRow)?;
            notion.disagreement(row_p, q, eps)
        }
    }
}

fn max(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Scores of every sample of one model (single-model kinds).
pub fn model_scores(kind: ScoreKind, set: &PredictionSet) -> Result<Vec<f64>> {
    match kind {
        ScoreKind::NegMsp => Ok(set.rows().map(|r| -max(r)).collect()),
        ScoreKind::NegMaxLogit => {
            let logits = set.logits().ok_or_else(|| Error::MissingLogits(kind.name()))?;
            Ok(logits.chunks_exact(set.n_classes()).map(|r| -max(r)).collect())
        }
        ScoreKind::PairDisagreement(_) => Err(Error::MissingSecondRow),
    }
}

/// Scores of every sample for a model pair (pairwise kinds).
pub fn pair_scores(kind: ScoreKind, p: &PredictionSet, q: &PredictionSet, eps: EpsilonPolicy) -> Result<Vec<f64>> {
    match kind {
        ScoreKind::PairDisagreement(notion) => crate::divergence::pointwise_disagreement(notion, p, q, eps),
        _ => model_scores(kind, p),
    }
}

/// ROC-AUC with OOD as the positive class, via midranks (Mann–Whitney U).
///
/// Ties between an OOD and an ID score count one half.
pub fn roc_auc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    let u2 = mann_whitney_u2(id_scores, ood_scores)?;
    Ok(auc_from_u2(u2, id_scores.len(), ood_scores.len()))
}

/// Twice the Mann–Whitney U of the OOD scores: the number of (OOD, ID)
/// pairs with the OOD score larger, ties counted one half, times two.
pub fn mann_whitney_u2(id_scores: &[f64], ood_scores: &[f64]) -> Result<u128> {
    if id_scores.is_empty() || ood_scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    let mut all: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, false))
        .chain(ood_scores.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));

    // Twice the OOD rank sum, so midranks stay integral.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i + 1;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j share midrank (i + 1 + j) / 2
        let midrank2 = (i + 1 + j) as u128;
        let positives = all[i..j].iter().filter(|(_, ood)| *ood).count() as u128;
        rank_sum2 += midrank2 * positives;
        i = j;
    }
    let n_ood = ood_scores.len() as u128;
    // 2U = 2R − n(n+1)
    Ok(rank_sum2 - n_ood * (n_ood + 1))
}

/// Maps `2U` to the AUC `U / (n_id · n_ood)`.
///
/// The smaller of `AUC` and `1 − AUC` is rounded to a multiple of 2^-53 and
/// the larger is one minus it, so both are exact and swapping the roles of
/// ID and OOD yields exactly `1 − AUC`. The result is within 2^-53 of the
/// true ratio.
pub fn auc_from_u2(u2: u128, n_id: usize, n_ood: usize) -> f64 {
    let total2 = 2 * n_id as u128 * n_ood as u128;
    let low = u2.min(total2 - u2);
    let scale = (1u64 << 53) as f64;
    let v = (low as f64 / total2 as f64 * scale).round() / scale;
    if u2 <= total2 - u2 {
        v
    } else {
        1.0 - v
    }
}

/// One AUC: a score kind applied to one model or pair, ID split vs one OOD split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionResult {
    pub kind: ScoreKind,
    /// Model id, or `a|b` for a pair, or `pooled`.
    pub subject: String,
    pub id_split: String,
    pub ood_split: String,
    pub severity: Option<u32>,
    pub auc: f64,
    pub n_id: usize,
    pub n_ood: usize,
}

/// Mean AUC per (kind, severity) across OOD splits, after averaging over
/// subjects within each split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeverityAggregate {
    pub kind: ScoreKind,
    pub severity: Option<u32>,
    pub auc: f64,
    pub n_splits: usize,
}

/// Mean AUC per (kind, OOD split) over subjects.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitAggregate {
    pub kind: ScoreKind,
    pub ood_split: String,
    pub severity: Option<u32>,
    pub auc: f64,
    pub n_subjects: usize,
}

/// Averages results per (kind, split), then per (kind, severity).
pub fn aggregate(results: &[DetectionResult]) -> (Vec<SplitAggregate>, Vec<SeverityAggregate>) {
    use std::collections::BTreeMap;

    let mut per_split: BTreeMap<(ScoreKind, Option<u32>, String), Vec<f64>> = BTreeMap::new();
    for r in results {
        per_split
            .entry((r.kind, r.severity, r.ood_split.clone()))
            .or_default()
            .push(r.auc);
    }
    let splits: Vec<SplitAggregate> = per_split
        .into_iter()
        .map(|((kind, severity, ood_split), aucs)| SplitAggregate {
            kind,
            ood_split,
            severity,
            n_subjects: aucs.len(),
            auc: numeric::mean(aucs).unwrap_or(f64::NAN),
        })
        .collect();

    let mut per_severity: BTreeMap<(ScoreKind, Option<u32>), Vec<f64>> = BTreeMap::new();
    for s in &splits {
        per_severity.entry((s.kind, s.severity)).or_default().push(s.auc);
    }
    let severities = per_severity
        .into_iter()
        .map(|((kind, severity), aucs)| SeverityAggregate {
            kind,
            severity,
            n_splits: aucs.len(),
            auc: numeric::mean(aucs).unwrap_or(f64::NAN),
        })
        .collect();
    (splits, severities)
}
