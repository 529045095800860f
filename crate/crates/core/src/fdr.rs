//! Two-group model, the Benjamini-Hochberg procedure and the Gaussian
//! approximation of its false discovery proportion.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corr::{CorrelationStructure, ModelSpec, Representation};
use crate::diagnostics::{gamma_m, rate, rate_from};
use crate::error::{Error, Result};
use crate::hermite::c1;
use crate::mc::{check_schema, SCHEMA_VERSION};
use crate::normal::{lower_cdf, upper_tail, upper_tail_inverse};
use crate::sampler::{plan, RngStream, SamplerPlan};

/// How the hypothesis labels `H_i` (1 = non-null) are set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HypothesisMode {
    /// `H_i` i.i.d. Bernoulli(1 - pi0), drawn afresh in every replication.
    #[default]
    Mixture,
    /// An explicit 0/1 vector of length `m`.
    Fixed { h: Vec<u8> },
    /// The first `round((1 - pi0) m)` coordinates are non-null.
    FixedFraction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoGroupConfig {
    pub model: ModelSpec,
    pub delta: f64,
    pub pi0: f64,
    pub alpha: f64,
    #[serde(default)]
    pub hypotheses: HypothesisMode,
}

impl TwoGroupConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::OutOfDomain {
                what: "delta",
                value: self.delta,
            });
        }
        for (what, v) in [("pi0", self.pi0), ("alpha", self.alpha)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::OutOfDomain { what, value: v });
            }
        }
        if let HypothesisMode::Fixed { h } = &self.hypotheses {
            if h.len() != self.model.m {
                return Err(Error::invalid(format!(
                    "hypothesis vector has length {} but m = {}",
                    h.len(),
                    self.model.m
                )));
            }
            if h.iter().any(|&v| v > 1) {
                return Err(Error::invalid("hypothesis entries must be 0 or 1"));
            }
        }
        Ok(())
    }

    /// Labels for the fixed modes; `None` under the mixture.
    pub fn fixed_labels(&self) -> Option<Vec<bool>> {
        let m = self.model.m;
        match &self.hypotheses {
            HypothesisMode::Mixture => None,
            HypothesisMode::Fixed { h } => Some(h.iter().map(|&v| v == 1).collect()),
            HypothesisMode::FixedFraction => {
                let m1 = ((1.0 - self.pi0) * m as f64).round() as usize;
                Some((0..m).map(|i| i < m1).collect())
            }
        }
    }
}

/// Draws `(H, X)` with `X = delta H + Y` and `Y ~ N(0, Gamma)` from `plan`.
/// Under the mixture the labels are drawn first, from the same stream.
pub fn two_group_sample<R: Rng + ?Sized>(
    cfg: &TwoGroupConfig,
    plan: &SamplerPlan,
    rng: &mut R,
) -> (Vec<bool>, Vec<f64>) {
    let h = cfg
        .fixed_labels()
        .unwrap_or_else(|| (0..cfg.model.m).map(|_| rng.gen::<f64>() >= cfg.pi0).collect());
    let mut x = plan.sample(rng);
    for (xi, &hi) in x.iter_mut().zip(&h) {
        if hi {
            *xi += cfg.delta;
        }
    }
    (h, x)
}

#[inline]
fn step_up_line(alpha: f64, k: usize, m: usize) -> f64 {
    alpha * k as f64 / m as f64
}

/// Step-up BH: `k* = max{k : p_(k) <= alpha k / m}` (0 if none); returns
/// `(alpha k* / m, k*)`.
pub fn bh_threshold(pvalues: &[f64], alpha: f64) -> (f64, usize) {
    let m = pvalues.len();
    if m == 0 {
        return (0.0, 0);
    }
    let mut p = pvalues.to_vec();
    p.sort_unstable_by(f64::total_cmp);
    bh_threshold_sorted(&p, alpha)
}

pub fn bh_threshold_sorted(sorted: &[f64], alpha: f64) -> (f64, usize) {
    let m = sorted.len();
    let k = (1..=m)
        .rev()
        .find(|&k| sorted[k - 1] <= step_up_line(alpha, k, m))
        .unwrap_or(0);
    (step_up_line(alpha, k, m), k)
}

/// `T(G_m) = sup{t in [0, 1] : G_m(t) >= t / alpha}` for the e.d.f. `G_m`
/// of the p-values, with `sup {} = 0`.
///
/// `G_m` is constant on `[p_(k), p_(k+1))`, so the supremum over that piece
/// is `alpha G_m(p_(k))` whenever this is at least `p_(k)`.
pub fn bh_functional(pvalues: &[f64], alpha: f64) -> f64 {
    let m = pvalues.len();
    let mut p = pvalues.to_vec();
    p.sort_unstable_by(f64::total_cmp);
    let mut best = 0.0f64;
    for (i, &pi) in p.iter().enumerate() {
        let count = p[i..].partition_point(|&q| q <= pi) + i;
        let cand = step_up_line(alpha, count, m);
        if cand >= pi {
            best = best.max(cand);
        }
    }
    best
}

/// The same supremum restricted to `t in {p_i} u {0}`; it selects the same
/// rejection set as [`bh_functional`].
pub fn bh_functional_on_pvalues(pvalues: &[f64], alpha: f64) -> f64 {
    let m = pvalues.len();
    let mut best = 0.0f64;
    for &t in pvalues {
        let count = pvalues.iter().filter(|&&q| q <= t).count();
        if step_up_line(alpha, count, m) >= t {
            best = best.max(t);
        }
    }
    best
}

/// False discovery proportion of BH: false rejections over rejections,
/// with `0/0 = 0`. `non_null[i]` is `H_i = 1`.
pub fn fdp(pvalues: &[f64], non_null: &[bool], alpha: f64) -> Result<f64> {
    if pvalues.len() != non_null.len() {
        return Err(Error::invalid("p-values and labels must have the same length"));
    }
    let (thr, k) = bh_threshold(pvalues, alpha);
    Ok(fdp_at(pvalues, non_null, thr, k))
}

fn fdp_at(pvalues: &[f64], non_null: &[bool], thr: f64, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let false_rej = pvalues
        .iter()
        .zip(non_null)
        .filter(|(p, h)| !**h && **p <= thr)
        .count();
    false_rej as f64 / k as f64
}

/// The FDP written through the null e.d.f.: `alpha (m0/m) F_0(T) / T`.
pub fn fdp_functional_form(pvalues: &[f64], non_null: &[bool], alpha: f64) -> f64 {
    let m = pvalues.len() as f64;
    let t = bh_functional(pvalues, alpha);
    if t == 0.0 {
        return 0.0;
    }
    let null_below = pvalues
        .iter()
        .zip(non_null)
        .filter(|(p, h)| !**h && **p <= t)
        .count() as f64;
    alpha * (null_below / m) / t
}

/// `G(t) = pi0 t + (1 - pi0) upper_tail(upper_tail_inverse(t) - delta)`.
pub fn limit_pvalue_cdf(t: f64, pi0: f64, delta: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let x = upper_tail_inverse(t).expect("t in (0, 1)");
    pi0 * t + (1.0 - pi0) * upper_tail(x - delta)
}

/// The solution of `G(t) = t / alpha` in `(0, 1)`, by bisection.
pub fn t_star(pi0: f64, delta: f64, alpha: f64) -> Result<f64> {
    for (what, v) in [("pi0", pi0), ("alpha", alpha)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::OutOfDomain { what, value: v });
        }
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::OutOfDomain {
            what: "delta",
            value: delta,
        });
    }
    let f = |t: f64| limit_pvalue_cdf(t, pi0, delta) - t / alpha;
    let (mut lo, mut hi) = (1e-12, 1.0 - 1e-12);
    if !(f(lo) > 0.0 && f(hi) < 0.0) {
        return Err(Error::NoRoot);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `h(t) = (phi(upper_tail_inverse(t)) / t)^2`.
pub fn h_of(t: f64) -> f64 {
    (c1(t) / t).powi(2)
}

/// `sum_{i != j in S} Gamma_{i,j}` over the index set `S = {i : mask[i]}`.
fn subset_offdiag_sum(c: &CorrelationStructure, mask: &[bool]) -> f64 {
    let idx: Vec<usize> = (0..c.m()).filter(|&i| mask[i]).collect();
    match c.representation() {
        Representation::DiagPlusLowRank { loadings, .. } => {
            let k = loadings.ncols();
            let mut total = vec![0.0; k];
            let mut diag = 0.0;
            for &i in &idx {
                let row = loadings.row(i);
                for r in 0..k {
                    total[r] += row[r];
                }
                diag += row.norm_squared();
            }
            total.iter().map(|v| v * v).sum::<f64>() - diag
        }
        _ => {
            let mut s = 0.0;
            for (a, &i) in idx.iter().enumerate() {
                for &j in &idx[a + 1..] {
                    s += 2.0 * c.entry(i, j);
                }
            }
            s
        }
    }
}

/// `gamma_{0,m} = m0^{-2} sum_{i != j} (1 - H_i)(1 - H_j) Gamma_{i,j}`.
pub fn gamma0(c: &CorrelationStructure, non_null: &[bool]) -> Result<f64> {
    let null: Vec<bool> = non_null.iter().map(|h| !h).collect();
    subset_gamma(c, &null, "m0")
}

/// `gamma_{1,m}`, the same average over the non-null pairs.
pub fn gamma1(c: &CorrelationStructure, non_null: &[bool]) -> Result<f64> {
    subset_gamma(c, non_null, "m1")
}

fn subset_gamma(c: &CorrelationStructure, mask: &[bool], name: &str) -> Result<f64> {
    if mask.len() != c.m() {
        return Err(Error::invalid("label vector length must equal m"));
    }
    let n = mask.iter().filter(|&&b| b).count();
    if n < 2 {
        return Err(Error::Undefined(format!("{name} = {n} < 2: the average is undefined")));
    }
    Ok(subset_offdiag_sum(c, mask) / (n * n) as f64)
}

/// The rates `r_m`, `r_{0,m}` and `r_{1,m}` for fixed labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub r_m: f64,
    pub r0: f64,
    pub r1: f64,
    pub gamma0: f64,
    pub gamma1: f64,
}

pub fn group_rates(c: &CorrelationStructure, non_null: &[bool]) -> Result<GroupRates> {
    let m0 = non_null.iter().filter(|h| !**h).count();
    let m1 = non_null.len() - m0;
    let g0 = gamma0(c, non_null)?;
    let g1 = gamma1(c, non_null)?;
    Ok(GroupRates {
        r_m: rate(c),
        r0: rate_from(m0, g0),
        r1: rate_from(m1, g1),
        gamma0: g0,
        gamma1: g1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproxVariant {
    Fixed,
    Mixture,
}

/// Mean and standard deviation of the Gaussian FDP approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdpApprox {
    pub variant: ApproxVariant,
    pub t_star: f64,
    pub h_tstar: f64,
    pub mean: f64,
    pub sd: f64,
    pub pi0: f64,
    pub alpha: f64,
    /// `gamma_{0,m}` (fixed) or `gamma_m` (mixture).
    pub gamma: f64,
    /// `m0` (fixed) or `m` (mixture).
    pub count: usize,
}

/// Fixed labels: `sd = pi0 alpha {(1/t* - 1)/m0 + h(t*) gamma_{0,m}}^{1/2}`.
pub fn fdp_approx_fixed(pi0: f64, alpha: f64, delta: f64, m0: usize, gamma0: f64) -> Result<FdpApprox> {
    let ts = t_star(pi0, delta, alpha)?;
    let h = h_of(ts);
    let radicand = (1.0 / ts - 1.0) / m0 as f64 + h * gamma0;
    finish(ApproxVariant::Fixed, ts, h, pi0, alpha, gamma0, m0, radicand)
}

/// Mixture: `sd = pi0 alpha {(1/t* - pi0)/(pi0 m) + h(t*) gamma_m}^{1/2}`.
pub fn fdp_approx_mixture(pi0: f64, alpha: f64, delta: f64, m: usize, gamma: f64) -> Result<FdpApprox> {
    let ts = t_star(pi0, delta, alpha)?;
    let h = h_of(ts);
    let radicand = (1.0 / ts - pi0) / (pi0 * m as f64) + h * gamma;
    finish(ApproxVariant::Mixture, ts, h, pi0, alpha, gamma, m, radicand)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    variant: ApproxVariant,
    t_star: f64,
    h: f64,
    pi0: f64,
    alpha: f64,
    gamma: f64,
    count: usize,
    radicand: f64,
) -> Result<FdpApprox> {
    if !(radicand > 0.0) {
        return Err(Error::ApproximationInvalid { radicand });
    }
    Ok(FdpApprox {
        variant,
        t_star,
        h_tstar: h,
        mean: pi0 * alpha,
        sd: pi0 * alpha * radicand.sqrt(),
        pi0,
        alpha,
        gamma,
        count,
    })
}

fn default_bins() -> usize {
    50
}

fn schema_v1() -> String {
    SCHEMA_VERSION.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdpExperimentConfig {
    #[serde(default = "schema_v1")]
    pub schema: String,
    pub two_group: TwoGroupConfig,
    pub reps: usize,
    pub master_seed: u64,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
}

impl FdpExperimentConfig {
    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let cfg: FdpExperimentConfig = serde_json::from_slice(bytes)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_schema(&self.schema)?;
        self.two_group.validate()?;
        if self.reps < 2 {
            return Err(Error::invalid("an FDP experiment needs at least 2 replications"));
        }
        if self.histogram_bins == 0 {
            return Err(Error::invalid("histogram_bins must be positive"));
        }
        Ok(())
    }
}

/// Simulated FDP values together with the matching Gaussian approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdpExperiment {
    pub schema: String,
    pub config: FdpExperimentConfig,
    pub samples: Vec<f64>,
    pub reject_counts: Vec<usize>,
    pub gamma_m: f64,
    /// Rates for fixed labels.
    pub rates: Option<GroupRates>,
    pub approx: Option<FdpApprox>,
    /// Why the approximation is missing, if it is.
    pub approx_error: Option<String>,
    pub mean: f64,
    pub sd: f64,
    pub se_mean: f64,
    pub se_sd: f64,
    pub ks_distance: Option<f64>,
}

/// Replicates the two-group model and BH on `workers` threads. Replication
/// `i` uses stream `(master_seed, i)`, so results do not depend on `workers`.
pub fn run_fdp_experiment(cfg: &FdpExperimentConfig, workers: usize) -> Result<FdpExperiment> {
    cfg.validate()?;
    let tg = &cfg.two_group;
    let c = tg.model.build()?;
    let p = plan(&c)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let out: Vec<(f64, usize)> = pool.install(|| {
        (0..cfg.reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = RngStream::new(cfg.master_seed, rep as u64).rng();
                let (h, x) = two_group_sample(tg, &p, &mut rng);
                let mut pv: Vec<f64> = x.iter().map(|&v| upper_tail(v)).collect();
                let mut sorted = pv.clone();
                sorted.sort_unstable_by(f64::total_cmp);
                let (thr, k) = bh_threshold_sorted(&sorted, tg.alpha);
                let v = fdp_at(&pv, &h, thr, k);
                pv.clear();
                (v, k)
            })
            .collect()
    });
    let samples: Vec<f64> = out.iter().map(|o| o.0).collect();
    let reject_counts: Vec<usize> = out.iter().map(|o| o.1).collect();
    let gamma = gamma_m(&c);
    let m = c.m();

    let (rates, approx) = match tg.fixed_labels() {
        Some(h) => {
            let m0 = h.iter().filter(|v| !**v).count();
            let rates = group_rates(&c, &h).ok();
            let approx = match gamma0(&c, &h) {
                Ok(g0) => fdp_approx_fixed(m0 as f64 / m as f64, tg.alpha, tg.delta, m0, g0),
                Err(e) => Err(e),
            };
            (rates, approx)
        }
        None => (None, fdp_approx_mixture(tg.pi0, tg.alpha, tg.delta, m, gamma)),
    };
    let (approx, approx_error) = match approx {
        Ok(a) => (Some(a), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m2 = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = samples.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    let sd = var.sqrt();
    let se_mean = (var / n).sqrt();
    // delta method: Var(s^2) ~ (mu4 - sigma^4)/n and se(s) = se(s^2)/(2s)
    let se_sd = if sd > 0.0 {
        ((m4 - m2 * m2).max(0.0) / n).sqrt() / (2.0 * sd)
    } else {
        0.0
    };
    let ks_distance = approx.as_ref().map(|a| ks_distance(&samples, a.mean, a.sd));
    Ok(FdpExperiment {
        schema: schema_v1(),
        config: cfg.clone(),
        samples,
        reject_counts,
        gamma_m: gamma,
        rates,
        approx,
        approx_error,
        mean,
        sd,
        se_mean,
        se_sd,
        ks_distance,
    })
}

/// Kolmogorov-Smirnov distance between the sample and `N(mean, sd^2)`.
pub fn ks_distance(samples: &[f64], mean: f64, sd: f64) -> f64 {
    let mut x = samples.to_vec();
    x.sort_unstable_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < x.len() {
        // treat ties as one jump
        let mut j = i;
        while j + 1 < x.len() && x[j + 1] == x[i] {
            j += 1;
        }
        let f = lower_cdf((x[i] - mean) / sd);
        d = d.max((i as f64 / n - f).abs()).max(((j + 1) as f64 / n - f).abs());
        i = j + 1;
    }
    d
}

impl FdpExperiment {
    /// One FDP value per row.
    pub fn samples_csv(&self) -> String {
        let mut s = String::from("fdp,rejections\n");
        for (v, k) in self.samples.iter().zip(&self.reject_counts) {
            s.push_str(&format!("{v},{k}\n"));
        }
        s
    }

    /// Histogram on `[0, 1]` with the approximating Gaussian density per bin.
    pub fn histogram_csv(&self) -> String {
        let bins = self.config.histogram_bins;
        let mut counts = vec![0usize; bins];
        for &v in &self.samples {
            let b = ((v * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let n = self.samples.len() as f64;
        let width = 1.0 / bins as f64;
        let mut s = String::from("bin_lo,bin_hi,count,density,approx_density\n");
        for (b, &c) in counts.iter().enumerate() {
            let lo = b as f64 * width;
            let hi = if b + 1 == bins { 1.0 } else { (b + 1) as f64 * width };
            let approx = self
                .approx
                .as_ref()
                .map(|a| (lower_cdf((hi - a.mean) / a.sd) - lower_cdf((lo - a.mean) / a.sd)) / (hi - lo))
                .map(|v| v.to_string())
                .unwrap_or_default();
            s.push_str(&format!("{lo},{hi},{c},{},{approx}\n", c as f64 / (n * (hi - lo))));
        }
        s
    }
}

pub const FIGURE2_M: usize = 5000;
pub const FIGURE2_M_RHO: [f64; 4] = [0.0, 10.0, 100.0, 1000.0];
pub const FIGURE2_PI0: f64 = 0.9;
pub const FIGURE2_DELTA: f64 = 3.0;
pub const FIGURE2_ALPHA: f64 = 0.25;

/// The three-factor FDP experiment with `m rho_m = m_rho`.
pub fn figure2_config(m: usize, m_rho: f64, reps: usize, master_seed: u64) -> FdpExperimentConfig {
    FdpExperimentConfig {
        schema: schema_v1(),
        two_group: TwoGroupConfig {
            model: ModelSpec::three_factor_reference(m, m_rho),
            delta: FIGURE2_DELTA,
            pi0: FIGURE2_PI0,
            alpha: FIGURE2_ALPHA,
            hypotheses: HypothesisMode::Mixture,
        },
        reps,
        master_seed,
        histogram_bins: 50,
    }
}

fn default_figure2_m() -> usize {
    FIGURE2_M
}

fn default_figure2_m_rho() -> Vec<f64> {
    FIGURE2_M_RHO.to_vec()
}

fn default_figure2_reps() -> usize {
    2000
}

fn default_figure2_seed() -> u64 {
    1
}

/// Parameters of the three-factor FDP panels; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure2Config {
    #[serde(default = "schema_v1")]
    pub schema: String,
    #[serde(default = "default_figure2_m")]
    pub m: usize,
    #[serde(default = "default_figure2_m_rho")]
    pub m_rho: Vec<f64>,
    #[serde(default = "default_figure2_reps")]
    pub reps: usize,
    #[serde(default = "default_figure2_seed")]
    pub master_seed: u64,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
}

impl Default for Figure2Config {
    fn default() -> Self {
        Figure2Config {
            schema: schema_v1(),
            m: FIGURE2_M,
            m_rho: default_figure2_m_rho(),
            reps: default_figure2_reps(),
            master_seed: 1,
            histogram_bins: default_bins(),
        }
    }
}

impl Figure2Config {
    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let cfg: Figure2Config = serde_json::from_slice(bytes)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// One experiment configuration per `m rho_m` value.
    pub fn experiments(&self) -> Vec<FdpExperimentConfig> {
        self.m_rho
            .iter()
            .map(|&v| FdpExperimentConfig {
                histogram_bins: self.histogram_bins,
                ..figure2_config(self.m, v, self.reps, self.master_seed)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        check_schema(&self.schema)?;
        if self.m_rho.is_empty() {
            return Err(Error::invalid("m_rho must not be empty"));
        }
        for e in self.experiments() {
            e.validate()?;
        }
        Ok(())
    }
}
