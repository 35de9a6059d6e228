//! Label-free OOD error estimation from agreement lines.
//!
//! Both estimators start from a line fitted to (ID disagreement, OOD
//! disagreement) over model pairs on transformed axes.
//!
//! * ALine-S maps each model's ID error through that line.
//! * ALine-D solves a least-squares system over the unknown transformed OOD
//!   errors `v_i`: one equation `(v_i + v_j) / 2 = T(Dis_OOD(i, j))` per pair,
//!   plus one anchor equation `v_i = a·T(err_ID,i) + b` per model scaled by
//!   the anchor weight. Large weights reduce it to ALine-S.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::divergence::Notion;
use crate::domain::ModelPair;
use crate::error::{Error, Result};
use crate::linalg;
use crate::linefit::LineFit;
use crate::numeric;
use crate::transform::TransformKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "aline-s")]
    AlineS,
    #[serde(rename = "aline-d")]
    AlineD,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::AlineS => "aline-s",
            Method::AlineD => "aline-d",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aline-s" | "alines" => Ok(Method::AlineS),
            "aline-d" | "alined" => Ok(Method::AlineD),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationConfig {
    pub notion: Notion,
    pub transform: TransformKind,
    pub method: Method,
    pub r2_gate: f64,
    pub anchor_weight: f64,
}

impl EstimationConfig {
    pub const DEFAULT_R2_GATE: f64 = 0.95;

    pub fn new(notion: Notion, method: Method) -> Self {
        Self {
            notion,
            transform: TransformKind::Identity,
            method,
            r2_gate: Self::DEFAULT_R2_GATE,
            anchor_weight: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r2_gate > 0.0 && self.r2_gate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "r2 gate must lie in (0, 1], got {}",
                self.r2_gate
            )));
        }
        if !(self.anchor_weight >= 0.0 && self.anchor_weight.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "anchor weight must be finite and non-negative, got {}",
                self.anchor_weight
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelEstimate {
    pub model_id: String,
    pub estimate: f64,
    pub truth: Option<f64>,
    /// The raw extrapolation fell outside the notion's range and was clamped.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationReport {
    pub split_id: String,
    pub notion: Notion,
    pub method: Method,
    pub estimates: Vec<ModelEstimate>,
    pub mape: Option<f64>,
    pub fit: LineFit,
    /// Whether the agreement line's R² clears the configured gate.
    pub passes_r2_gate: bool,
}

fn clamp_to_range(notion: Notion, value: f64) -> (f64, bool) {
    let clamped = value.clamp(0.0, notion.bound());
    (clamped, clamped != value)
}

fn check_transform(fit: &LineFit, transform: TransformKind) -> Result<()> {
    let (resolved, _) = transform.resolve(fit.notion);
    if resolved != fit.transform {
        return Err(Error::TransformMismatch {
            fit: fit.transform.to_string(),
            inputs: resolved.to_string(),
        });
    }
    Ok(())
}

/// ALine-S: `T⁻¹(a·T(err_ID) + b)` for each model, clamped into range.
pub fn aline_s(fit: &LineFit, id_errors: &[(String, f64)], transform: TransformKind) -> Result<Vec<ModelEstimate>> {
    check_transform(fit, transform)?;
    Ok(id_errors
        .iter()
        .map(|(id, err)| {
            let (estimate, clamped) = clamp_to_range(fit.notion, fit.extrapolate(*err));
            ModelEstimate {
                model_id: id.clone(),
                estimate,
                truth: None,
                clamped,
            }
        })
        .collect())
}

/// ALine-D over the models in `id_errors`, using every pair in `ood_pairs`.
pub fn aline_d(
    fit: &LineFit,
    id_errors: &[(String, f64)],
    ood_pairs: &[(ModelPair, f64)],
    transform: TransformKind,
    anchor_weight: f64,
) -> Result<Vec<ModelEstimate>> {
    check_transform(fit, transform)?;
    if !(anchor_weight >= 0.0 && anchor_weight.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "anchor weight must be finite and non-negative, got {anchor_weight}"
        )));
    }
    let index: HashMap<&str, usize> = id_errors
        .iter()
        .enumerate()
        .map(|(i, (id, _))| (id.as_str(), i))
        .collect();
    let m = id_errors.len();
    let lookup = |id: &str| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownModel(id.to_string()))
    };

    let mut covered = vec![false; m];
    let mut rows: Vec<f64> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for (pair, dis) in ood_pairs {
        let (i, j) = (lookup(&pair.first)?, lookup(&pair.second)?);
        let mut row = vec![0.0; m];
        row[i] += 0.5;
        row[j] += 0.5;
        covered[i] = true;
        covered[j] = true;
        rows.extend(row);
        rhs.push(fit.transform.apply(fit.notion, *dis));
    }
    if anchor_weight == 0.0 {
        if let Some(i) = covered.iter().position(|c| !c) {
            return Err(Error::Underdetermined(id_errors[i].0.clone()));
        }
    } else {
        for (i, (_, err)) in id_errors.iter().enumerate() {
            let mut row = vec![0.0; m];
            row[i] = anchor_weight;
            rows.extend(row);
            let target = fit.slope * fit.transform.apply(fit.notion, *err) + fit.intercept;
            rhs.push(anchor_weight * target);
        }
    }
    let v = linalg::least_squares(&rows, rhs.len(), m, &rhs)?;
    Ok(id_errors
        .iter()
        .zip(v)
        .map(|((id, _), vi)| {
            let (estimate, clamped) = clamp_to_range(fit.notion, fit.transform.invert(fit.notion, vi));
            ModelEstimate {
                model_id: id.clone(),
                estimate,
                truth: None,
                clamped,
            }
        })
        .collect())
}

/// Mean absolute percentage error, in percent.
pub fn mape(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: estimates.len(),
            right: truths.len(),
        });
    }
    if let Some((index, &value)) = truths.iter().enumerate().find(|(_, &t)| t.is_nan() || t <= 0.0) {
        return Err(Error::ZeroTruth { index, value });
    }
    numeric::mean(estimates.iter().zip(truths).map(|(e, t)| (e - t).abs() / t))
        .map(|m| 100.0 * m)
        .ok_or(Error::TooFew {
            what: "estimates",
            needed: 1,
            got: 0,
        })
}

/// Splits whose agreement-line R² exceeds `gate` for every notion in `notions`.
///
/// A gate of 0 or below admits every split.
pub fn gate_by_r2(
    r2_by_split: &BTreeMap<String, BTreeMap<Notion, f64>>,
    gate: f64,
    notions: &[Notion],
) -> Result<Vec<String>> {
    let mut admitted = Vec::new();
    for (split, fits) in r2_by_split {
        let mut min_r2 = f64::INFINITY;
        for notion in notions {
            let r2 = fits.get(notion).ok_or_else(|| Error::MissingNotionFit {
                split: split.clone(),
                notion: notion.to_string(),
            })?;
            min_r2 = min_r2.min(*r2);
        }
        if gate <= 0.0 || min_r2 > gate {
            admitted.push(split.clone());
        }
    }
    Ok(admitted)
}
