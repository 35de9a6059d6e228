//! Plot-ready grids: notion values over the 3-class simplex and binary error curves.

use serde::Serialize;

use crate::divergence::{error_unchecked, EpsilonPolicy, Notion};
use crate::error::{Error, Result};

/// Anchor distribution used for the simplex disagreement heatmap.
pub const DEFAULT_ANCHOR: [f64; 3] = [0.35, 0.325, 0.325];

/// What a simplex grid point is compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridMode {
    /// Disagreement against a fixed distribution.
    DisagreementAgainst([f64; 3]),
    /// Error with respect to a fixed true class.
    ErrorForClass(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimplexPoint {
    pub p1: f64,
    pub p2: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub t: f64,
    pub value: f64,
}

/// Evaluates `notion` at every point `(i/R, j/R, (R-i-j)/R)` of the 3-simplex.
///
/// Points are emitted with `p1` as the outer loop and `p2` as the inner one.
pub fn simplex_grid(
    notion: Notion,
    mode: GridMode,
    resolution: usize,
    eps: EpsilonPolicy,
) -> Result<Vec<SimplexPoint>> {
    if resolution < 2 {
        return Err(Error::InvalidConfig(format!(
            "grid resolution must be at least 2, got {resolution}"
        )));
    }
    if let GridMode::ErrorForClass(y) = mode {
        if y >= 3 {
            return Err(Error::LabelOutOfRange {
                index: 0,
                label: y as u32,
                k: 3,
            });
        }
    }
    let r = resolution as f64;
    let mut out = Vec::with_capacity((resolution + 1) * (resolution + 2) / 2);
    for i in 0..=resolution {
        for j in 0..=(resolution - i) {
            let p = [i as f64 / r, j as f64 / r, (resolution - i - j) as f64 / r];
            let value = match mode {
                GridMode::DisagreementAgainst(q) => notion.disagreement_unchecked(&p, &q, eps),
                GridMode::ErrorForClass(y) => error_unchecked(notion, &p, y, eps),
            };
            out.push(SimplexPoint {
                p1: p[0],
                p2: p[1],
                value,
            });
        }
    }
    Ok(out)
}

/// Binary error curve: error of `p = (t, 1 - t)` for true class 0, with `t`
/// on `R + 1` evenly spaced points of `[0, 1]`.
pub fn binary_error_curve(notion: Notion, resolution: usize, eps: EpsilonPolicy) -> Result<Vec<CurvePoint>> {
    if resolution < 2 {
        return Err(Error::InvalidConfig(format!(
            "curve resolution must be at least 2, got {resolution}"
        )));
    }
    let r = resolution as f64;
    Ok((0..=resolution)
        .map(|i| {
            let t = i as f64 / r;
            let p = [t, (resolution - i) as f64 / r];
            CurvePoint {
                t,
                value: error_unchecked(notion, &p, 0, eps),
            }
        })
        .collect())
}
