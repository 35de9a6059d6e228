//! Axis transforms for line fits, and the standard normal CDF / quantile they use.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::divergence::Notion;
use crate::error::{Error, Result};

/// Transform applied to both axes before a line fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Identity,
    /// Normal quantile of the value scaled to `[0, 1]` by the notion's bound,
    /// clamped to `[eps, 1 - eps]`.
    Probit {
        eps: f64,
    },
}

impl TransformKind {
    pub const DEFAULT_PROBIT_EPS: f64 = 1e-4;

    pub fn probit() -> Self {
        TransformKind::Probit {
            eps: Self::DEFAULT_PROBIT_EPS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Identity => "identity",
            TransformKind::Probit { .. } => "probit",
        }
    }

    /// The transform actually used for `notion`. Probit needs a bounded
    /// notion; for KLD it degrades to identity and the flag is set.
    pub fn resolve(self, notion: Notion) -> (TransformKind, bool) {
        match self {
            TransformKind::Probit { .. } if !notion.is_bounded() => (TransformKind::Identity, true),
            other => (other, false),
        }
    }

    /// Forward transform. Callers should pass a kind already resolved for `notion`.
    pub fn apply(self, notion: Notion, value: f64) -> f64 {
        match self.resolve(notion).0 {
            TransformKind::Identity => value,
            TransformKind::Probit { eps } => normal_quantile((value / notion.bound()).clamp(eps, 1.0 - eps)),
        }
    }

    /// Inverse of [`TransformKind::apply`] (up to the clamp).
    pub fn invert(self, notion: Notion, value: f64) -> f64 {
        match self.resolve(notion).0 {
            TransformKind::Identity => value,
            TransformKind::Probit { .. } => normal_cdf(value) * notion.bound(),
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(TransformKind::Identity),
            "probit" => Ok(TransformKind::probit()),
            other => Err(Error::InvalidConfig(format!("unknown transform `{other}`"))),
        }
    }
}

/// A transformed value and whether the requested transform had to be downgraded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transformed {
    pub value: f64,
    pub downgraded: bool,
}

pub fn apply_transform(kind: TransformKind, notion: Notion, value: f64) -> Transformed {
    let (resolved, downgraded) = kind.resolve(notion);
    Transformed {
        value: resolved.apply(notion, value),
        downgraded,
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile, Wichura's AS 241 (PPND16), relative accuracy
/// about 1e-16.
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

fn poly(coeffs: &[f64; 8], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_7e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_88e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_8e-15,
];

#[cfg(test)]
mod tests {
    use super::*;

    /// Bisection on the CDF: independent of the rational approximation.
    /// Upper-tail probabilities bisect on `1 - p` to keep precision.
    fn quantile_by_bisection(p: f64) -> f64 {
        if p > 0.5 {
            return -quantile_by_bisection(1.0 - p);
        }
        let (mut lo, mut hi) = (-40.0f64, 40.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn probit_examples() {
        let t = TransformKind::probit();
        assert_eq!(t.apply(Notion::Top1, 0.5), 0.0);
        let v = t.apply(Notion::Top1, 0.975);
        assert!((v - quantile_by_bisection(0.975)).abs() < 1e-12);
        assert!((v - 1.959964).abs() < 1e-6);
        assert_eq!(TransformKind::Identity.apply(Notion::Kld, 0.44), 0.44);
    }

    #[test]
    fn quantile_matches_bisection_across_regions() {
        for &p in &[
            1e-300,
            1e-20,
            1e-8,
            0.001,
            0.02425,
            0.07,
            0.3,
            0.5,
            0.6,
            0.9,
            0.999,
            1.0 - 1e-12,
        ] {
            let got = normal_quantile(p);
            let oracle = quantile_by_bisection(p);
            assert!(
                (got - oracle).abs() <= 1e-9 * oracle.abs().max(1.0),
                "p={p}: {got} vs {oracle}"
            );
        }
    }

    #[test]
    fn probit_round_trips_within_clamp() {
        let t = TransformKind::probit();
        for &v in &[0.01, 0.2, 0.5, 0.61] {
            let back = t.invert(Notion::Jsd, t.apply(Notion::Jsd, v));
            assert!((back - v).abs() < 1e-12);
        }
    }

    #[test]
    fn probit_on_kld_degrades() {
        let out = apply_transform(TransformKind::probit(), Notion::Kld, 0.44);
        assert!(out.downgraded);
        assert_eq!(out.value, 0.44);
        assert!(!apply_transform(TransformKind::probit(), Notion::Hd, 0.44).downgraded);
    }

    #[test]
    fn jsd_is_scaled_by_ln2() {
        let t = TransformKind::probit();
        assert!(t.apply(Notion::Jsd, 0.5 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn clamp_keeps_probit_finite() {
        let t = TransformKind::probit();
        assert!(t.apply(Notion::Hd, 0.0).is_finite());
        assert!(t.apply(Notion::Hd, 1.0).is_finite());
    }
}
