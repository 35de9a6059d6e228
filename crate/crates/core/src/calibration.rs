//! Class-aggregated calibration error (CACE).
//!
//! For every class `k` the samples are binned by their predicted `p_k` on
//! equal-width bins over `[0, 1]` (the last bin is closed). Each non-empty
//! bin contributes `n_bin / N` times the gap between the mean predicted
//! `p_k` and the observed frequency of label `k` in that bin. Contributions
//! are summed over bins and classes, so the value lies in `[0, K]`.

use serde::{Deserialize, Serialize};

use crate::domain::{LabelVector, PredictionSet};
use crate::error::{Error, Result};
use crate::numeric::{self, KahanSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub n_bins: usize,
}

impl CalibrationConfig {
    pub const DEFAULT_BINS: usize = 15;

    pub fn new(n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 bins, got {n_bins}")));
        }
        Ok(Self { n_bins })
    }

    fn bin_of(&self, p: f64) -> usize {
        ((p * self.n_bins as f64) as usize).min(self.n_bins - 1)
    }
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            n_bins: Self::DEFAULT_BINS,
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Cell {
    count: usize,
    confidence: KahanSum,
    hits: usize,
}

/// CACE of one model on one labelled split.
pub fn cace(set: &PredictionSet, labels: &LabelVector, cfg: CalibrationConfig) -> Result<f64> {
    labels.check_against(set)?;
    let k = set.n_classes();
    let mut cells = vec![Cell::default(); k * cfg.n_bins];
    for (row, &y) in set.rows().zip(&labels.labels) {
        for (class, &p) in row.iter().enumerate() {
            let cell = &mut cells[class * cfg.n_bins + cfg.bin_of(p)];
            cell.count += 1;
            cell.confidence.add(p);
            if y as usize == class {
                cell.hits += 1;
            }
        }
    }
    let n = set.n_samples() as f64;
    Ok(numeric::sum(cells.iter().filter(|c| c.count > 0).map(|c| {
        let m = c.count as f64;
        let gap = (c.confidence.total() / m - c.hits as f64 / m).abs();
        m / n * gap
    })))
}

/// Mean CACE over the models of an ensemble, all evaluated on the same labels.
pub fn ensemble_cace<'a, I>(sets: I, labels: &LabelVector, cfg: CalibrationConfig) -> Result<f64>
where
    I: IntoIterator<Item = &'a PredictionSet>,
{
    let values = sets
        .into_iter()
        .map(|s| cace(s, labels, cfg))
        .collect::<Result<Vec<_>>>()?;
    numeric::mean(values).ok_or(Error::TooFew {
        what: "models",
        needed: 1,
        got: 0,
    })
}
