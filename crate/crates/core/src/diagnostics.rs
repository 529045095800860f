//! Finite-m diagnostics of a correlation structure: `gamma_m`, the rate
//! `r_m`, off-diagonal moment sums and the condition functionals, plus their
//! trends across a dimension grid.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corr::{CorrelationStructure, Family, ModelSpec, Representation};
use crate::error::{Error, Result};
use crate::hermite::{GammaMoments, HermiteSeriesConfig, Theta};
use crate::mc::{check_schema, SCHEMA_VERSION};

pub const DEFAULT_EPSILON0: f64 = 0.1;

// Largest k^p for which the tensor-power fast path is used.
const TENSOR_DIM_LIMIT: usize = 4096;

/// `sum_{i != j} Gamma_{i,j}^p` (not normalized).
pub fn offdiag_power_sum(c: &CorrelationStructure, p: u32) -> f64 {
    offdiag_power_sums(c, p as usize)[p as usize - 1]
}

/// `[sum_{i != j} Gamma_{i,j}^p for p in 1..=orders]`.
pub fn offdiag_power_sums(c: &CorrelationStructure, orders: usize) -> Vec<f64> {
    assert!(orders >= 1);
    let m = c.m();
    match c.representation() {
        Representation::Toeplitz(row) => {
            let mut out = vec![0.0; orders];
            for (k, &r) in row.iter().enumerate().skip(1) {
                let w = 2.0 * (m - k) as f64;
                let mut pw = 1.0;
                for o in out.iter_mut() {
                    pw *= r;
                    *o += w * pw;
                }
            }
            out
        }
        Representation::DiagPlusLowRank { loadings, .. } => {
            let k = loadings.ncols();
            if k == 0 {
                return vec![0.0; orders];
            }
            if k.checked_pow(orders as u32).is_some_and(|d| d <= TENSOR_DIM_LIMIT) {
                (1..=orders).map(|p| low_rank_power_sum(loadings, p)).collect()
            } else {
                dense_pair_sums(c, orders)
            }
        }
        Representation::Dense(g) => dense_matrix_sums(g, orders),
    }
}

// sum_{i != j} (b_i . b_j)^p = |sum_i b_i^{(x)p}|^2 - sum_i |b_i|^{2p}
fn low_rank_power_sum(b: &DMatrix<f64>, p: usize) -> f64 {
    let (m, k) = b.shape();
    let dim = k.pow(p as u32);
    let mut acc = vec![0.0; dim];
    let mut tensor = vec![0.0; dim];
    let mut diag = 0.0;
    for i in 0..m {
        // tensor power of row i, built by repeated outer products
        tensor[0] = 1.0;
        let mut len = 1;
        for _ in 0..p {
            for idx in (0..len).rev() {
                let v = tensor[idx];
                for r in (0..k).rev() {
                    tensor[idx * k + r] = v * b[(i, r)];
                }
            }
            len *= k;
        }
        for (a, t) in acc.iter_mut().zip(&tensor) {
            *a += t;
        }
        diag += b.row(i).norm_squared().powi(p as i32);
    }
    acc.iter().map(|v| v * v).sum::<f64>() - diag
}

fn dense_matrix_sums(g: &DMatrix<f64>, orders: usize) -> Vec<f64> {
    let m = g.nrows();
    let mut out = vec![0.0; orders];
    for j in 0..m {
        let col = g.column(j);
        for i in (j + 1)..m {
            let r = col[i];
            let mut pw = 1.0;
            for o in out.iter_mut() {
                pw *= r;
                *o += 2.0 * pw;
            }
        }
    }
    out
}

fn dense_pair_sums(c: &CorrelationStructure, orders: usize) -> Vec<f64> {
    let m = c.m();
    let mut out = vec![0.0; orders];
    for i in 0..m {
        for j in (i + 1)..m {
            let r = c.entry(i, j);
            let mut pw = 1.0;
            for o in out.iter_mut() {
                pw *= r;
                *o += 2.0 * pw;
            }
        }
    }
    out
}

/// `gamma_m = m^{-2} sum_{i != j} Gamma_{i,j}`.
pub fn gamma_m(c: &CorrelationStructure) -> f64 {
    let m = c.m() as f64;
    offdiag_power_sum(c, 1) / (m * m)
}

/// `r_m = (1/m + |gamma_m|)^{-1/2}`.
pub fn rate(c: &CorrelationStructure) -> f64 {
    rate_from(c.m(), gamma_m(c))
}

pub fn rate_from(m: usize, gamma: f64) -> f64 {
    (1.0 / m as f64 + gamma.abs()).sqrt().recip()
}

/// `m^{-2} sum_{i != j} Gamma_{i,j}^p`.
pub fn moment_sum(c: &CorrelationStructure, p: u32) -> f64 {
    let m = c.m() as f64;
    offdiag_power_sum(c, p) / (m * m)
}

/// Moment sums for the exact covariance series, with enough orders for the
/// configured tolerance.
pub fn gamma_moments(c: &CorrelationStructure, cfg: &HermiteSeriesConfig) -> Result<GammaMoments> {
    let rho = c.max_abs_offdiag().min(1.0);
    let orders = GammaMoments::orders_needed(rho, cfg);
    let m = c.m() as f64;
    let sums = offdiag_power_sums(c, orders);
    GammaMoments::new(c.m(), sums.into_iter().map(|s| s / (m * m)).collect(), rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    FiniteTheta,
    InfiniteTheta,
    Undetermined,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::FiniteTheta => "finite-theta",
            Regime::InfiniteTheta => "infinite-theta",
            Regime::Undetermined => "undetermined",
        }
    }
}

/// Condition functionals at a single dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub m: usize,
    pub gamma_m: f64,
    pub rate_r_m: f64,
    pub moment2: f64,
    pub moment4: f64,
    pub cond_vanish2: f64,
    pub cond_h1: f64,
    pub cond_h3: f64,
    /// `m gamma_m^{1+eps0}`, only defined for `gamma_m > 0`.
    pub cond_h4: Option<f64>,
    pub m_gamma: f64,
    pub epsilon0: f64,
    /// Filled in by [`assess`]; a single dimension cannot decide it.
    pub regime: Regime,
}

impl DiagnosticsReport {
    pub fn compute(c: &CorrelationStructure, epsilon0: f64) -> Result<Self> {
        check_eps(epsilon0)?;
        let m = c.m();
        let mf = m as f64;
        let sums = offdiag_power_sums(c, 4);
        let gamma = sums[0] / (mf * mf);
        let moment2 = sums[1] / (mf * mf);
        let moment4 = sums[3] / (mf * mf);
        let r = rate_from(m, gamma);
        Ok(DiagnosticsReport {
            m,
            gamma_m: gamma,
            rate_r_m: r,
            moment2,
            moment4,
            cond_vanish2: r * r * moment2,
            cond_h1: r.powf(4.0 + epsilon0) * moment4,
            cond_h3: r.powf(2.0 + epsilon0) * moment2,
            cond_h4: (gamma > 0.0).then(|| mf * gamma.powf(1.0 + epsilon0)),
            m_gamma: mf * gamma,
            epsilon0,
            regime: Regime::Undetermined,
        })
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfDomain {
            what: "epsilon0",
            value: eps,
        })
    }
}

/// Log-log slopes of the condition sequences; `None` where a sequence has
/// nonpositive entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSlopes {
    pub m_gamma: Option<f64>,
    pub rate_r_m: Option<f64>,
    pub cond_vanish2: Option<f64>,
    pub cond_h1: Option<f64>,
    pub cond_h3: Option<f64>,
    pub cond_h4: Option<f64>,
}

/// Thresholds used to turn trends into a regime label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeRules {
    /// Largest relative change of `m gamma_m` over the top half of the grid
    /// still counted as stabilized.
    pub stabilization: f64,
    /// Smallest log-log slope of `m gamma_m` counted as divergence.
    pub divergence_slope: f64,
}

impl Default for RegimeRules {
    fn default() -> Self {
        RegimeRules {
            stabilization: 0.10,
            divergence_slope: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub model: ModelSpec,
    pub m_grid: Vec<usize>,
    pub epsilon0: f64,
    pub reports: Vec<DiagnosticsReport>,
    pub slopes: TrendSlopes,
    pub regime: Regime,
    pub theta_estimate: Option<Theta>,
}

impl TrendReport {
    /// One row per dimension.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from(
            "m,gamma_m,m_gamma,rate_r_m,moment2,moment4,cond_vanish2,cond_h1,cond_h3,cond_h4,regime\n",
        );
        for r in &self.reports {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.m,
                r.gamma_m,
                r.m_gamma,
                r.rate_r_m,
                r.moment2,
                r.moment4,
                r.cond_vanish2,
                r.cond_h1,
                r.cond_h3,
                opt(r.cond_h4),
                r.regime.as_str()
            ));
        }
        s
    }
}

fn default_eps() -> f64 {
    DEFAULT_EPSILON0
}

fn schema_v1() -> String {
    SCHEMA_VERSION.to_string()
}

/// A regime assessment request: one model family, or a sweep of several,
/// evaluated on a common dimension grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    #[serde(default = "schema_v1")]
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<Family>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<Family>,
    pub m_grid: Vec<usize>,
    #[serde(default = "default_eps")]
    pub epsilon0: f64,
}

impl DiagnoseConfig {
    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let cfg: DiagnoseConfig = serde_json::from_slice(bytes)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_schema(&self.schema)?;
        check_eps(self.epsilon0)?;
        if self.model.is_some() == !self.sweep.is_empty() {
            return Err(Error::invalid("give exactly one of `model` and `sweep`"));
        }
        if self.m_grid.len() < 3 {
            return Err(Error::invalid("the m-grid needs at least 3 dimensions"));
        }
        if self.m_grid.windows(2).any(|w| w[0] >= w[1]) || self.m_grid[0] == 0 {
            return Err(Error::invalid("the m-grid must be positive and strictly increasing"));
        }
        for spec in self.models() {
            for &m in &self.m_grid {
                spec.with_m(m).validate()?;
            }
        }
        Ok(())
    }

    /// The models to assess, at the first grid dimension.
    pub fn models(&self) -> Vec<ModelSpec> {
        let m = self.m_grid.first().copied().unwrap_or(1);
        self.model
            .iter()
            .chain(&self.sweep)
            .map(|f| ModelSpec::new(m, f.clone()))
            .collect()
    }

    pub fn run(&self) -> Result<Vec<TrendReport>> {
        self.validate()?;
        self.models()
            .iter()
            .map(|spec| assess(spec, &self.m_grid, self.epsilon0))
            .collect()
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || y.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Builds the model at each dimension and classifies the regime.
///
/// Toeplitz families are built without the PSD check, since the
/// functionals only depend on the entries.
pub fn assess(spec: &ModelSpec, m_grid: &[usize], epsilon0: f64) -> Result<TrendReport> {
    assess_with(spec, m_grid, epsilon0, RegimeRules::default())
}

pub fn assess_with(
    spec: &ModelSpec,
    m_grid: &[usize],
    epsilon0: f64,
    rules: RegimeRules,
) -> Result<TrendReport> {
    check_eps(epsilon0)?;
    if m_grid.len() < 3 {
        return Err(Error::invalid("the m-grid needs at least 3 dimensions"));
    }
    if m_grid.windows(2).any(|w| w[0] >= w[1]) || m_grid[0] == 0 {
        return Err(Error::invalid("the m-grid must be positive and strictly increasing"));
    }
    let mut reports = Vec::with_capacity(m_grid.len());
    for &m in m_grid {
        let c = spec.with_m(m).build_unvalidated()?;
        reports.push(DiagnosticsReport::compute(&c, epsilon0)?);
    }
    let ms: Vec<f64> = m_grid.iter().map(|&m| m as f64).collect();
    let series = |f: &dyn Fn(&DiagnosticsReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    let h4: Option<Vec<f64>> = reports.iter().map(|r| r.cond_h4).collect();
    let slopes = TrendSlopes {
        m_gamma: log_log_slope(&ms, &series(&|r| r.m_gamma)),
        rate_r_m: log_log_slope(&ms, &series(&|r| r.rate_r_m)),
        cond_vanish2: log_log_slope(&ms, &series(&|r| r.cond_vanish2)),
        cond_h1: log_log_slope(&ms, &series(&|r| r.cond_h1)),
        cond_h3: log_log_slope(&ms, &series(&|r| r.cond_h3)),
        cond_h4: h4.and_then(|v| log_log_slope(&ms, &v)),
    };

    let m_gamma = series(&|r| r.m_gamma);
    let half = m_gamma.len() / 2;
    let top = &m_gamma[half..];
    let top_m = &ms[half..];
    let last = *top.last().unwrap();
    let rel_change = top
        .iter()
        .map(|v| (v - last).abs())
        .fold(0.0, f64::max)
        / last.abs().max(1e-300);
    let shrinking = top.windows(2).all(|w| w[1].abs() <= w[0].abs());
    let increasing = top.windows(2).all(|w| w[1] > w[0]);
    let top_slope = log_log_slope(top_m, top);
    let regime = if rel_change < rules.stabilization || shrinking {
        Regime::FiniteTheta
    } else if increasing
        && top_slope.is_some_and(|s| s >= rules.divergence_slope)
        && slopes.cond_h4.is_some_and(|s| s > 0.0)
    {
        Regime::InfiniteTheta
    } else {
        Regime::Undetermined
    };
    let theta_estimate = match regime {
        Regime::FiniteTheta => Some(Theta::Finite(last.max(-1.0))),
        Regime::InfiniteTheta => Some(Theta::Infinite),
        Regime::Undetermined => None,
    };
    for r in &mut reports {
        r.regime = regime;
    }
    Ok(TrendReport {
        model: spec.clone(),
        m_grid: m_grid.to_vec(),
        epsilon0,
        reports,
        slopes,
        regime,
        theta_estimate,
    })
}
