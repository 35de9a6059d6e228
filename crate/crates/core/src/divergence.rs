//! Per-sample disagreement and error notions over categorical distributions.
//!
//! All logarithms are natural. Every disagreement is exactly symmetric in its
//! two arguments: each per-class term is computed from commutative operations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{DisagreementRecord, LabelVector, ModelPair, PredictionSet};
use crate::error::{Error, Result};
use crate::numeric::{self, KahanSum};

const LN_2: f64 = std::f64::consts::LN_2;

/// A disagreement notion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Notion {
    Top1,
    Hd,
    Jsd,
    Kld,
}

impl Notion {
    pub const ALL: [Notion; 4] = [Notion::Top1, Notion::Hd, Notion::Jsd, Notion::Kld];

    /// Upper bound of the notion's values: 1, 1, ln 2, or infinity.
    pub fn bound(self) -> f64 {
        match self {
            Notion::Top1 | Notion::Hd => 1.0,
            Notion::Jsd => LN_2,
            Notion::Kld => f64::INFINITY,
        }
    }

    pub fn is_bounded(self) -> bool {
        self.bound().is_finite()
    }

    pub fn name(self) -> &'static str {
        match self {
            Notion::Top1 => "top1",
            Notion::Hd => "hd",
            Notion::Jsd => "jsd",
            Notion::Kld => "kld",
        }
    }

    /// Pointwise disagreement between two distributions.
    pub fn disagreement(self, p: &[f64], q: &[f64], eps: EpsilonPolicy) -> Result<f64> {
        check_lengths(p, q)?;
        Ok(self.disagreement_unchecked(p, q, eps))
    }

    pub(crate) fn disagreement_unchecked(self, p: &[f64], q: &[f64], eps: EpsilonPolicy) -> f64 {
        match self {
            Notion::Top1 => top1(p, q),
            Notion::Hd => hellinger(p, q),
            Notion::Jsd => jensen_shannon(p, q),
            Notion::Kld => symmetric_kl(p, q, eps.eps()),
        }
    }
}

impl fmt::Display for Notion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Notion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "top1" | "top-1" => Ok(Notion::Top1),
            "hd" | "hellinger" => Ok(Notion::Hd),
            "jsd" | "js" => Ok(Notion::Jsd),
            "kld" | "kl" => Ok(Notion::Kld),
            other => Err(Error::InvalidConfig(format!("unknown notion `{other}`"))),
        }
    }
}

/// Floor applied before taking logarithms in the KL-based notions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonPolicy(f64);

impl EpsilonPolicy {
    pub const DEFAULT_EPS: f64 = 1e-12;

    pub fn new(eps: f64) -> Result<Self> {
        if eps > 0.0 && eps < 1e-3 {
            Ok(Self(eps))
        } else {
            Err(Error::InvalidConfig(format!(
                "epsilon must lie in (0, 1e-3), got {eps}"
            )))
        }
    }

    pub fn eps(self) -> f64 {
        self.0
    }
}

impl Default for EpsilonPolicy {
    fn default() -> Self {
        Self(Self::DEFAULT_EPS)
    }
}

fn check_lengths(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(())
}

fn top1(p: &[f64], q: &[f64]) -> f64 {
    if numeric::argmax(p) != numeric::argmax(q) {
        1.0
    } else {
        0.0
    }
}

fn hellinger(p: &[f64], q: &[f64]) -> f64 {
    let ss = numeric::sum(p.iter().zip(q).map(|(a, b)| {
        let d = a.sqrt() - b.sqrt();
        d * d
    }));
    (0.5 * ss).sqrt().min(1.0)
}

/// `x ln(x / m)` with the convention `0 ln 0 = 0`.
fn xlog_ratio(x: f64, m: f64) -> f64 {
    if x > 0.0 {
        x * (x / m).ln()
    } else {
        0.0
    }
}

fn jensen_shannon(p: &[f64], q: &[f64]) -> f64 {
    let total = numeric::sum(p.iter().zip(q).map(|(&a, &b)| {
        let m = 0.5 * (a + b);
        xlog_ratio(a, m) + xlog_ratio(b, m)
    }));
    (0.5 * total).clamp(0.0, LN_2)
}

fn symmetric_kl(p: &[f64], q: &[f64], eps: f64) -> f64 {
    let sp = numeric::sum(p.iter().map(|&v| v.max(eps)));
    let sq = numeric::sum(q.iter().map(|&v| v.max(eps)));
    // ½[KL(p‖q) + KL(q‖p)] = ½ Σ (p_k − q_k)(ln p_k − ln q_k)
    let total = numeric::sum(p.iter().zip(q).map(|(&a, &b)| {
        let a = a.max(eps) / sp;
        let b = b.max(eps) / sq;
        (a - b) * (a.ln() - b.ln())
    }));
    (0.5 * total).max(0.0)
}

/// 1 when the two argmax classes differ, else 0. Ties go to the lowest index.
pub fn dis_top1(p: &[f64], q: &[f64]) -> Result<f64> {
    Notion::Top1.disagreement(p, q, EpsilonPolicy::default())
}

/// Hellinger distance, in `[0, 1]`.
pub fn dis_hellinger(p: &[f64], q: &[f64]) -> Result<f64> {
    Notion::Hd.disagreement(p, q, EpsilonPolicy::default())
}

/// Jensen–Shannon divergence in nats, in `[0, ln 2]`.
pub fn dis_jsd(p: &[f64], q: &[f64], eps: EpsilonPolicy) -> Result<f64> {
    Notion::Jsd.disagreement(p, q, eps)
}

/// Mean of forward and reverse KL after flooring both arguments at `eps`
/// and renormalizing.
pub fn dis_kld_sym(p: &[f64], q: &[f64], eps: EpsilonPolicy) -> Result<f64> {
    Notion::Kld.disagreement(p, q, eps)
}

/// Error of prediction `p` against true class `y`: the notion evaluated
/// between the one-hot label and `p`.
///
/// HD and JSD use their closed forms; KLD is the forward divergence from the
/// one-hot label, i.e. `-ln p_y`.
pub fn error_pointwise(notion: Notion, p: &[f64], y: usize, eps: EpsilonPolicy) -> Result<f64> {
    if y >= p.len() {
        return Err(Error::LabelOutOfRange {
            index: 0,
            label: y as u32,
            k: p.len(),
        });
    }
    Ok(error_unchecked(notion, p, y, eps))
}

pub(crate) fn error_unchecked(notion: Notion, p: &[f64], y: usize, eps: EpsilonPolicy) -> f64 {
    let py = p[y];
    let rest = || numeric::sum(p.iter().enumerate().filter(|&(k, _)| k != y).map(|(_, &v)| v));
    match notion {
        Notion::Top1 => {
            if numeric::argmax(p) != y {
                1.0
            } else {
                0.0
            }
        }
        Notion::Hd => {
            let d = py.sqrt() - 1.0;
            (0.5 * (d * d + rest())).sqrt().min(1.0)
        }
        Notion::Jsd => {
            let head = (2.0 / (1.0 + py)).ln();
            let own = if py > 0.0 {
                py * (2.0 * py / (1.0 + py)).ln()
            } else {
                0.0
            };
            (0.5 * (head + own + rest() * LN_2)).clamp(0.0, LN_2)
        }
        Notion::Kld => -(py.max(eps.eps())).ln(),
    }
}

/// Pointwise disagreement for every sample of two aligned prediction sets.
pub fn pointwise_disagreement(
    notion: Notion,
    p: &PredictionSet,
    q: &PredictionSet,
    eps: EpsilonPolicy,
) -> Result<Vec<f64>> {
    p.check_compatible(q)?;
    Ok(p.rows()
        .zip(q.rows())
        .map(|(a, b)| notion.disagreement_unchecked(a, b, eps))
        .collect())
}

/// Mean pointwise disagreement over a split, summed in row order with
/// compensation.
pub fn aggregate_disagreement(
    notion: Notion,
    p: &PredictionSet,
    q: &PredictionSet,
    eps: EpsilonPolicy,
) -> Result<DisagreementRecord> {
    p.check_compatible(q)?;
    let mut acc = KahanSum::new();
    for (a, b) in p.rows().zip(q.rows()) {
        acc.add(notion.disagreement_unchecked(a, b, eps));
    }
    Ok(DisagreementRecord {
        pair: ModelPair::new(p.model_id(), q.model_id()),
        split_id: p.split_id().to_string(),
        notion,
        value: acc.total() / p.n_samples() as f64,
    })
}

/// Pointwise error of every sample against its label.
pub fn pointwise_errors(
    notion: Notion,
    p: &PredictionSet,
    labels: &LabelVector,
    eps: EpsilonPolicy,
) -> Result<Vec<f64>> {
    labels.check_against(p)?;
    Ok(p.rows()
        .zip(&labels.labels)
        .map(|(row, &y)| error_unchecked(notion, row, y as usize, eps))
        .collect())
}

/// Mean error over a split. For `Top1` this is one minus top-1 accuracy.
pub fn aggregate_error(notion: Notion, p: &PredictionSet, labels: &LabelVector, eps: EpsilonPolicy) -> Result<f64> {
    labels.check_against(p)?;
    let mut acc = KahanSum::new();
    for (row, &y) in p.rows().zip(&labels.labels) {
        acc.add(error_unchecked(notion, row, y as usize, eps));
    }
    Ok(acc.total() / p.n_samples() as f64)
}
