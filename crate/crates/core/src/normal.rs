//! Standard normal primitives.
//!
//! Naming follows the multiple-testing convention used throughout the crate:
//! [`upper_tail`] is `P(Z >= z)`, so `upper_tail(y)` is the one-sided p-value
//! of a test statistic `y`. All inversions go through the lower-tail CDF via
//! [`quantile`], with the complement made explicit at the call site.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1/sqrt(2*pi)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// A value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(Error::OutOfDomain {
                what: "probability",
                value,
            })
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// Standard Gaussian density.
#[inline]
pub fn phi(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `P(Z >= z)` for a standard normal `Z`.
#[inline]
pub fn upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z * std::f64::consts::FRAC_1_SQRT_2)
}

/// `P(Z <= x)` for a standard normal `Z`.
#[inline]
pub fn lower_cdf(x: f64) -> f64 {
    upper_tail(-x)
}

/// Inverse of the lower-tail CDF on `(0, 1)`.
///
/// Wichura's AS241 rational approximation followed by one Newton step on the
/// lower half; the upper half is obtained by reflection so the Newton residual
/// never suffers cancellation against a value close to one.
pub fn quantile(t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::OutOfDomain {
            what: "quantile argument",
            value: t,
        });
    }
    if t > 0.5 {
        // 1 - t is exact here (Sterbenz).
        return Ok(-lower_half_quantile(1.0 - t));
    }
    Ok(lower_half_quantile(t))
}

/// Inverse of [`upper_tail`]: the `z` with `P(Z >= z) = t`.
#[inline]
pub fn upper_tail_inverse(t: f64) -> Result<f64> {
    quantile(t).map(|x| -x)
}

fn lower_half_quantile(t: f64) -> f64 {
    debug_assert!(t > 0.0 && t <= 0.5);
    let x = as241(t);
    let resid = lower_cdf(x) - t;
    let d = phi(x);
    if d > 0.0 {
        x - resid / d
    } else {
        x
    }
}

fn poly(coef: &[f64; 8], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[allow(clippy::excessive_precision)]
fn as241(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        133.141_667_891_784_377_45,
        1_971.590_950_306_551_442_7,
        13_731.693_765_509_461_125,
        45_921.953_931_549_871_457,
        67_265.770_927_008_700_853,
        33_430.575_583_588_128_105,
        2_509.080_928_730_122_672_7,
    ];
    const B: [f64; 8] = [
        1.0,
        42.313_330_701_600_911_252,
        687.187_007_492_057_908_3,
        5_394.196_021_424_751_107_7,
        21_213.794_301_586_595_867,
        39_307.895_800_092_710_61,
        28_729.085_735_721_942_674,
        5_226.495_278_852_854_561,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        0.241_780_725_177_450_611_77,
        0.022_723_844_989_269_184_583_3,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        0.689_767_334_985_100_004_55,
        0.148_103_976_427_480_074_59,
        0.015_198_666_563_616_457_196_6,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        0.296_560_571_828_504_891_23,
        0.026_532_189_526_576_123_093,
        0.001_242_660_947_388_078_438_6,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599_832_206_555_887_937_69,
        0.136_929_880_922_735_805_31,
        0.014_875_361_290_850_614_852_5,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_values() {
        assert_eq!(phi(0.0), INV_SQRT_2PI);
        assert!((phi(0.0) - 0.398_942_280_401_432_7).abs() <= 1e-15);
        assert!((phi(1.0) - 0.241_970_724_519_143_37).abs() <= 1e-15);
        assert!(phi(40.0) < 1e-300);
    }

    #[test]
    fn phi_is_even() {
        for i in -80..=80 {
            let x = i as f64 * 0.1;
            assert_eq!(phi(x), phi(-x));
        }
    }

    #[test]
    fn upper_tail_values() {
        assert_eq!(upper_tail(0.0), 0.5);
        // mpmath: 0.5*erfc(1.959964/sqrt(2))
        assert!((upper_tail(1.959_964) - 0.024_999_999_096_442_404).abs() < 1e-12);
        assert!((upper_tail(1.959_964) - 0.025).abs() <= 1e-6);
        assert!((upper_tail(-1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
    }

    #[test]
    fn upper_tail_symmetry_and_monotonicity() {
        let mut prev = f64::INFINITY;
        for i in -100..=100 {
            let z = i as f64 * 0.08;
            let v = upper_tail(z);
            assert!((v - (1.0 - upper_tail(-z))).abs() <= 1e-15);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn quantile_values() {
        assert_eq!(quantile(0.5).unwrap(), 0.0);
        assert!((quantile(0.975).unwrap() - 1.959_964).abs() <= 1e-6);
        assert!((quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() <= 1e-12);
        assert!((quantile(1e-10).unwrap() + 6.361_340_902_404_056).abs() <= 1e-9);
    }

    #[test]
    fn quantile_domain() {
        assert!(matches!(quantile(0.0), Err(Error::OutOfDomain { .. })));
        assert!(matches!(quantile(1.0), Err(Error::OutOfDomain { .. })));
        assert!(quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_round_trips() {
        let mut ts = vec![1e-8, 1e-7, 1e-5, 1e-3, 1.0 - 1e-8, 1.0 - 1e-5];
        ts.extend((1..1000).map(|i| i as f64 / 1000.0));
        for t in ts {
            let x = quantile(t).unwrap();
            assert!((lower_cdf(x) - t).abs() <= 1e-9, "t={t}");
            assert!((upper_tail(quantile(1.0 - t).unwrap()) - t).abs() <= 1e-9, "t={t}");
            assert!((upper_tail(upper_tail_inverse(t).unwrap()) - t).abs() <= 1e-9);
        }
    }

    #[test]
    fn probability_newtype() {
        assert!(Probability::new(0.0).is_ok());
        assert!(Probability::new(1.0).is_ok());
        assert!(Probability::new(1.5).is_err());
        let p: Probability = serde_json::from_str("0.25").unwrap();
        assert_eq!(p.get(), 0.25);
        assert!(serde_json::from_str::<Probability>("-0.1").is_err());
    }
}
