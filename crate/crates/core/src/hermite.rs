//! Hermite coordinates of the p-value indicator and the covariance kernels
//! built from them.
//!
//! For `x = upper_tail_inverse(t)` the indicator `1{upper_tail(X) <= t}` has
//! Hermite coordinates `c_l(t) = H_{l-1}(x) phi(x)`. Everything in here works
//! with the normalized coordinates `a_l(t) = c_l(t) / sqrt(l!)`, which stay
//! bounded for large `l` and satisfy `sum_l a_l(t)^2 = t(1-t)`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::normal::{phi, upper_tail_inverse};

/// Truncation policy for the Hermite series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HermiteSeriesConfig {
    pub tail_tolerance: f64,
    pub max_terms: usize,
}

impl Default for HermiteSeriesConfig {
    fn default() -> Self {
        HermiteSeriesConfig {
            tail_tolerance: 1e-12,
            max_terms: 1000,
        }
    }
}

impl HermiteSeriesConfig {
    pub fn new(tail_tolerance: f64, max_terms: usize) -> Result<Self> {
        let cfg = HermiteSeriesConfig {
            tail_tolerance,
            max_terms,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tail_tolerance > 0.0) {
            return Err(Error::invalid("tail_tolerance must be > 0"));
        }
        if self.max_terms < 2 {
            return Err(Error::invalid("max_terms must be >= 2"));
        }
        Ok(())
    }
}

/// The limit `theta` of `m * gamma_m`, in `[-1, +inf]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Theta {
    Finite(f64),
    Infinite,
}

impl Theta {
    pub fn finite(theta: f64) -> Result<Self> {
        let t = Theta::Finite(theta);
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Theta::Finite(v) if v.is_finite() && v >= -1.0 => Ok(()),
            Theta::Finite(v) => Err(Error::OutOfDomain {
                what: "theta",
                value: v,
            }),
            Theta::Infinite => Ok(()),
        }
    }

    /// `1 / (1 + |theta|)`, zero at infinity.
    pub fn bridge_weight(&self) -> f64 {
        match *self {
            Theta::Finite(v) => 1.0 / (1.0 + v.abs()),
            Theta::Infinite => 0.0,
        }
    }

    /// `theta / (1 + |theta|)`, one at infinity.
    pub fn spike_weight(&self) -> f64 {
        match *self {
            Theta::Finite(v) => v / (1.0 + v.abs()),
            Theta::Infinite => 1.0,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Theta::Infinite)
    }
}

impl fmt::Display for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Theta::Finite(v) => write!(f, "{v}"),
            Theta::Infinite => f.write_str("inf"),
        }
    }
}

// JSON has no infinity: finite values are numbers, +inf is the string "inf".
impl Serialize for Theta {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Theta::Finite(v) => s.serialize_f64(v),
            Theta::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Theta {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        let theta = match Raw::deserialize(d)? {
            Raw::Num(v) => Theta::Finite(v),
            Raw::Str(s) => match s.as_str() {
                "inf" | "+inf" | "infinity" | "Infinity" => Theta::Infinite,
                other => {
                    return Err(serde::de::Error::custom(format!(
                        "theta must be a number or \"inf\", got {other:?}"
                    )))
                }
            },
        };
        theta.validate().map_err(serde::de::Error::custom)?;
        Ok(theta)
    }
}

/// Probabilists' Hermite polynomial `H_l(x)`.
pub fn hermite(l: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if l == 0 {
        return prev;
    }
    for k in 1..l {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `H_l(x) / sqrt(l!)`, computed by the normalized recurrence so it does not
/// overflow for large `l`.
pub fn hermite_normalized(l: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if l == 0 {
        return prev;
    }
    for k in 1..l {
        let kf = k as f64;
        let next = (x * cur - kf.sqrt() * prev) / (kf + 1.0).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// `c_l(t) = H_{l-1}(x) phi(x)` with `x` the upper-tail inverse of `t`;
/// zero at `t` in `{0, 1}`.
pub fn c_coeff(l: usize, t: f64) -> f64 {
    assert!(l >= 1, "c_l is defined for l >= 1");
    match point(t) {
        Some(x) => hermite(l - 1, x) * phi(x),
        None => 0.0,
    }
}

/// `c_1(t) = phi(upper_tail_inverse(t))`.
#[inline]
pub fn c1(t: f64) -> f64 {
    match point(t) {
        Some(x) => phi(x),
        None => 0.0,
    }
}

fn point(t: f64) -> Option<f64> {
    if t <= 0.0 || t >= 1.0 {
        None
    } else {
        upper_tail_inverse(t).ok()
    }
}

/// Lazily generated normalized coordinates `a_1(t), a_2(t), ...` together with
/// the Parseval residual `t(1-t) - sum_{l<=L} a_l(t)^2`.
#[derive(Debug, Clone)]
pub struct CoordinateStream {
    x: f64,
    density: f64,
    // normalized Hermite values h_{l-2}, h_{l-1}
    prev: f64,
    cur: f64,
    next_l: usize,
    residual: f64,
    variance: f64,
}

impl CoordinateStream {
    pub fn new(t: f64) -> Self {
        let (x, density) = match point(t) {
            Some(x) => (x, phi(x)),
            None => (0.0, 0.0),
        };
        let variance = if (0.0..=1.0).contains(&t) { t * (1.0 - t) } else { 0.0 };
        CoordinateStream {
            x,
            density,
            prev: 0.0,
            cur: 1.0,
            next_l: 1,
            residual: variance,
            variance,
        }
    }

    /// Returns `a_l(t)` for the next `l`.
    #[inline]
    pub fn next_coord(&mut self) -> f64 {
        let l = self.next_l;
        // cur = h_{l-1}(x)
        let a = self.cur * self.density / (l as f64).sqrt();
        let lf = (l - 1) as f64;
        let next = (self.x * self.cur - lf.sqrt() * self.prev) / (lf + 1.0).sqrt();
        self.prev = self.cur;
        self.cur = next;
        self.next_l += 1;
        self.residual -= a * a;
        a
    }

    /// Upper bound on `sum_{l > L} a_l(t)^2` after `L` coordinates.
    #[inline]
    pub fn residual(&self) -> f64 {
        // Cancellation floor; the true residual is nonnegative.
        self.residual.max(0.0) + 4.0 * f64::EPSILON * self.variance
    }
}

/// `sum_{l>=1} c_l(t) c_l(s) r^l / l!`, the covariance of
/// `1{upper_tail(U) <= t}` and `1{upper_tail(V) <= s}` for standard normals
/// with correlation `r`.
///
/// Terms are added until `|r|^{L+1} sqrt(R_t(L) R_s(L))` drops below the
/// tolerance, where `R` is the Parseval residual; by Cauchy-Schwarz this
/// bounds the remaining tail.
pub fn pair_cov(t: f64, s: f64, r: f64, cfg: &HermiteSeriesConfig) -> Result<f64> {
    if !(-1.0..=1.0).contains(&r) {
        return Err(Error::OutOfDomain {
            what: "correlation",
            value: r,
        });
    }
    check_prob(t)?;
    check_prob(s)?;
    if r == 1.0 {
        return Ok(t.min(s) - t * s);
    }
    if r == -1.0 {
        return Ok((t + s - 1.0).max(0.0) - t * s);
    }
    let mut at = CoordinateStream::new(t);
    let mut as_ = CoordinateStream::new(s);
    let mut sum = 0.0;
    let mut rpow = 1.0;
    let ar = r.abs();
    for l in 1..=cfg.max_terms {
        rpow *= r;
        sum += at.next_coord() * as_.next_coord() * rpow;
        let bound = ar.powi(l as i32 + 1) * (at.residual() * as_.residual()).sqrt();
        if bound < cfg.tail_tolerance {
            return Ok(sum);
        }
        if l == cfg.max_terms {
            return Err(Error::TruncationFailure { terms: l, bound });
        }
    }
    unreachable!("max_terms >= 2")
}

fn check_prob(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::OutOfDomain {
            what: "probability",
            value: t,
        })
    }
}

/// Off-diagonal moment sums of a correlation matrix:
/// `offdiag[l-1] = m^{-2} sum_{i != j} Gamma_{i,j}^l`.
///
/// `max_abs_offdiag` bounds `|Gamma_{i,j}|` for `i != j` and drives the
/// truncation of [`edf_cov_exact`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaMoments {
    pub m: usize,
    pub offdiag: Vec<f64>,
    pub max_abs_offdiag: f64,
}

impl GammaMoments {
    pub fn new(m: usize, offdiag: Vec<f64>, max_abs_offdiag: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("m must be positive"));
        }
        if !(0.0..=1.0).contains(&max_abs_offdiag) {
            return Err(Error::OutOfDomain {
                what: "max |Gamma_ij|",
                value: max_abs_offdiag,
            });
        }
        let gm = GammaMoments {
            m,
            offdiag,
            max_abs_offdiag,
        };
        for l in 1..=gm.offdiag.len() {
            let full = gm.full(l);
            // each full moment is a rescaled variance
            if !(-1e-12..=1.0 + 1e-12).contains(&full) {
                return Err(Error::InvalidMoments {
                    order: l,
                    value: full,
                });
            }
        }
        Ok(gm)
    }

    /// Moments of the identity matrix: all off-diagonal sums vanish.
    pub fn independent(m: usize) -> Self {
        GammaMoments {
            m,
            offdiag: Vec::new(),
            max_abs_offdiag: 0.0,
        }
    }

    /// `m^{-2} sum_{i,j} Gamma_{i,j}^l`, including the diagonal.
    pub fn full(&self, l: usize) -> f64 {
        1.0 / self.m as f64 + self.offdiag.get(l - 1).copied().unwrap_or(0.0)
    }

    /// Orders needed so that `rho^{L+1} * 0.25 < tol`.
    pub fn orders_needed(max_abs_offdiag: f64, cfg: &HermiteSeriesConfig) -> usize {
        if max_abs_offdiag == 0.0 {
            return 1;
        }
        if max_abs_offdiag >= 1.0 {
            return cfg.max_terms;
        }
        let l = ((cfg.tail_tolerance / 0.25).ln() / max_abs_offdiag.ln()).ceil() as usize;
        l.clamp(1, cfg.max_terms)
    }
}

/// Exact finite-m covariance `Cov(F_m(t), F_m(s))` of the e.d.f. of the
/// p-values.
///
/// The diagonal of `Gamma` contributes `(t^s - ts)/m` in closed form; the
/// off-diagonal moments enter through the Hermite series.
pub fn edf_cov_exact(
    t: f64,
    s: f64,
    moments: &GammaMoments,
    cfg: &HermiteSeriesConfig,
) -> Result<f64> {
    check_prob(t)?;
    check_prob(s)?;
    let diag = (t.min(s) - t * s) / moments.m as f64;
    let rho = moments.max_abs_offdiag;
    if rho == 0.0 {
        return Ok(diag);
    }
    let frac = (moments.m as f64 - 1.0) / moments.m as f64;
    let mut at = CoordinateStream::new(t);
    let mut as_ = CoordinateStream::new(s);
    let mut sum = 0.0;
    let limit = cfg.max_terms.min(moments.offdiag.len());
    for l in 1..=limit {
        sum += at.next_coord() * as_.next_coord() * moments.offdiag[l - 1];
        let bound = frac * rho.powi(l as i32 + 1) * (at.residual() * as_.residual()).sqrt();
        if bound < cfg.tail_tolerance {
            return Ok(diag + sum);
        }
        if l == limit {
            return Err(Error::TruncationFailure { terms: l, bound });
        }
    }
    Err(Error::TruncationFailure {
        terms: 0,
        bound: f64::INFINITY,
    })
}

/// Limit covariance `K(t,s) = (t^s - ts)/(1+|theta|) + theta c_1(t)c_1(s)/(1+|theta|)`.
pub fn limit_kernel(t: f64, s: f64, theta: Theta) -> f64 {
    theta.bridge_weight() * (t.min(s) - t * s) + theta.spike_weight() * c1(t) * c1(s)
}

/// `K~(t,s) = t^s - ts - c_1(t)c_1(s)`: the bridge kernel with the `c_1`
/// direction projected out.
pub fn centered_kernel(t: f64, s: f64) -> f64 {
    t.min(s) - t * s - c1(t) * c1(s)
}
