//! Least-squares lines with R², and cubic trend fits.

use serde::Serialize;

use crate::divergence::Notion;
use crate::error::{Error, Result};
use crate::linalg;
use crate::numeric;
use crate::transform::TransformKind;

/// Result of a plain least-squares line fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ols {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n_points: usize,
}

impl Ols {
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
///
/// R² is `1 - SS_res / SS_tot`, clamped to `[0, 1]`; when the ordinates are
/// constant it is 1 for an exact fit and 0 otherwise.
pub fn ols_fit(xs: &[f64], ys: &[f64]) -> Result<Ols> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::TooFew {
            what: "points",
            needed: 2,
            got: xs.len(),
        });
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(Error::DegenerateAbscissa);
    }
    let n = xs.len();
    let mx = numeric::mean(xs.iter().copied()).unwrap_or(0.0);
    let my = numeric::mean(ys.iter().copied()).unwrap_or(0.0);
    let sxx = numeric::sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    let sxy = numeric::sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    if sxx == 0.0 {
        return Err(Error::DegenerateAbscissa);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot = numeric::sum(ys.iter().map(|y| (y - my) * (y - my)));
    let ss_res = numeric::sum(xs.iter().zip(ys).map(|(x, y)| {
        let r = y - (slope * x + intercept);
        r * r
    }));
    let r2 = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(Ols {
        slope,
        intercept,
        r2,
        n_points: n,
    })
}

/// A line fitted on transformed axes for one notion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n_points: usize,
    pub transform: TransformKind,
    pub notion: Notion,
    /// Set when a probit request was downgraded to identity (unbounded notion).
    pub transform_downgraded: bool,
}

impl LineFit {
    /// Maps a raw x value through the fitted line, returning a raw y value.
    pub fn extrapolate(&self, x: f64) -> f64 {
        let t = self.transform.apply(self.notion, x);
        self.transform.invert(self.notion, self.slope * t + self.intercept)
    }
}

/// Transforms both axes with `transform` (resolved for `notion`), then fits.
pub fn fit_line(notion: Notion, transform: TransformKind, xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let (resolved, downgraded) = transform.resolve(notion);
    let tx: Vec<f64> = xs.iter().map(|&x| resolved.apply(notion, x)).collect();
    let ty: Vec<f64> = ys.iter().map(|&y| resolved.apply(notion, y)).collect();
    let ols = ols_fit(&tx, &ty)?;
    Ok(LineFit {
        slope: ols.slope,
        intercept: ols.intercept,
        r2: ols.r2,
        n_points: ols.n_points,
        transform: resolved,
        notion,
        transform_downgraded: downgraded,
    })
}

/// Cubic `c0 + c1 x + c2 x² + c3 x³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cubic(pub [f64; 4]);

impl Cubic {
    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn coefficients(&self) -> [f64; 4] {
        self.0
    }
}

/// Least-squares cubic through `(xs, ys)`, solved by QR on the Vandermonde matrix.
pub fn polyfit3(xs: &[f64], ys: &[f64]) -> Result<Cubic> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 4 {
        return Err(Error::TooFew {
            what: "points",
            needed: 4,
            got: xs.len(),
        });
    }
    let vander: Vec<f64> = xs.iter().flat_map(|&x| [1.0, x, x * x, x * x * x]).collect();
    let c = linalg::least_squares(&vander, xs.len(), 4, ys)?;
    Ok(Cubic([c[0], c[1], c[2], c[3]]))
}
