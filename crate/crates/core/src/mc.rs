//! Replicated experiments with deterministic parallel accumulation.
//!
//! Replications are split into fixed blocks of [`BLOCK_SIZE`]. Each block is
//! processed sequentially, and the block accumulators are merged by a
//! pairwise tree in block order. Replication `i` always draws from stream
//! `(master_seed, i)`. Together these make every summary bit-identical for
//! any number of worker threads.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corr::{build_equi, CorrelationStructure, ModelSpec};
use crate::diagnostics::{gamma_m, gamma_moments, rate};
use crate::edf::{edf_at_sorted, mean, rescale_in_place, PathKind, ProcessGrid, ProcessPath};
use crate::error::{Error, Result};
use crate::hermite::{c1, centered_kernel, edf_cov_exact, limit_kernel, HermiteSeriesConfig, Theta};
use crate::limit::{LimitDrawConfig, LimitSampler, DEFAULT_BROWNIAN_STEPS};
use crate::normal::upper_tail;
use crate::sampler::{plan, RngStream, SamplerPlan};

pub const SCHEMA_VERSION: &str = "v1";
pub const BLOCK_SIZE: usize = 64;
pub const MIN_REPS: usize = 100;

fn schema_v1() -> String {
    SCHEMA_VERSION.to_string()
}

/// Multiplier applied to `F_m - I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// `r_m = (1/m + |gamma_m|)^{-1/2}`
    #[default]
    Rate,
    SqrtM,
    /// `gamma_m^{-1/2}`, for `gamma_m > 0`.
    InvSqrtGamma,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PathChoice {
    /// `scale (F_m - I)`
    #[default]
    Rescaled,
    /// `scale (F~_m - I)`, with the `c_1` component of the sample mean removed.
    Modified,
}

/// What the empirical covariances are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    #[default]
    None,
    /// The exact finite-m covariance, scaled.
    ExactCov,
    /// The limit kernel; for modified paths this is `K~ / (1 + |theta|)`.
    LimitKernel { theta: Theta },
}

fn default_pairs() -> Vec<[f64; 2]> {
    let pts = [0.25, 0.5, 0.75];
    pts.iter().flat_map(|&t| pts.iter().map(move |&s| [t, s])).collect()
}

/// Configuration of an e.d.f. experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_v1")]
    pub schema: String,
    pub model: ModelSpec,
    pub reps: usize,
    #[serde(default)]
    pub grid: ProcessGrid,
    pub master_seed: u64,
    #[serde(default)]
    pub scale: Scale,
    #[serde(default)]
    pub path: PathChoice,
    #[serde(default)]
    pub target: Target,
    #[serde(default = "default_pairs")]
    pub compare_pairs: Vec<[f64; 2]>,
    #[serde(default)]
    pub series: HermiteSeriesConfig,
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec, reps: usize, master_seed: u64) -> Self {
        ExperimentConfig {
            schema: schema_v1(),
            model,
            reps,
            grid: ProcessGrid::default(),
            master_seed,
            scale: Scale::Rate,
            path: PathChoice::Rescaled,
            target: Target::None,
            compare_pairs: default_pairs(),
            series: HermiteSeriesConfig::default(),
        }
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_slice(bytes)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_schema(&self.schema)?;
        check_reps(self.reps)?;
        self.model.validate()?;
        self.series.validate()?;
        check_pairs(&self.compare_pairs)?;
        if let Scale::Fixed(v) = self.scale {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("fixed scale {v} must be positive")));
            }
        }
        if let Target::LimitKernel { theta } = self.target {
            theta.validate()?;
        }
        if self.target == Target::ExactCov && self.model.resamples() {
            return Err(Error::invalid(
                "the exact covariance target needs a fixed matrix; set resample to false",
            ));
        }
        Ok(())
    }
}

/// Configuration of a limit-process experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitExperimentConfig {
    #[serde(default = "schema_v1")]
    pub schema: String,
    pub theta: Theta,
    #[serde(default = "default_steps")]
    pub brownian_steps: usize,
    pub reps: usize,
    #[serde(default)]
    pub grid: ProcessGrid,
    pub master_seed: u64,
    #[serde(default = "default_pairs")]
    pub compare_pairs: Vec<[f64; 2]>,
}

fn default_steps() -> usize {
    DEFAULT_BROWNIAN_STEPS
}

impl LimitExperimentConfig {
    pub fn new(theta: Theta, reps: usize, master_seed: u64) -> Self {
        LimitExperimentConfig {
            schema: schema_v1(),
            theta,
            brownian_steps: DEFAULT_BROWNIAN_STEPS,
            reps,
            grid: ProcessGrid::default(),
            master_seed,
            compare_pairs: default_pairs(),
        }
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let cfg: LimitExperimentConfig = serde_json::from_slice(bytes)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_schema(&self.schema)?;
        check_reps(self.reps)?;
        check_pairs(&self.compare_pairs)?;
        self.theta.validate()
    }
}

pub(crate) fn check_schema(found: &str) -> Result<()> {
    if found == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(Error::Schema {
            expected: SCHEMA_VERSION.to_string(),
            found: found.to_string(),
        })
    }
}

fn check_reps(reps: usize) -> Result<()> {
    if reps < MIN_REPS {
        return Err(Error::invalid(format!(
            "reps = {reps} is below the minimum of {MIN_REPS}"
        )));
    }
    Ok(())
}

fn check_pairs(pairs: &[[f64; 2]]) -> Result<()> {
    for p in pairs {
        for &t in p {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::OutOfDomain {
                    what: "comparison point",
                    value: t,
                });
            }
        }
    }
    Ok(())
}

/// Empirical covariance at one `(t, s)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    pub t: f64,
    pub s: f64,
    pub cov: f64,
    /// Jackknife standard error.
    pub se: f64,
    pub target: Option<f64>,
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub schema: String,
    /// `"edf"` or `"limit"`.
    pub experiment: String,
    pub master_seed: u64,
    pub reps: usize,
    /// The resolved configuration.
    pub config: serde_json::Value,
    pub m: Option<usize>,
    pub gamma_m: Option<f64>,
    pub scale_factor: Option<f64>,
    pub sampler: Option<String>,
    pub jitter_used: Option<f64>,
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub pairs: Vec<PairEstimate>,
    pub max_abs_z: Option<f64>,
}

impl McSummary {
    pub fn pair(&self, t: f64, s: f64) -> Option<&PairEstimate> {
        self.pairs.iter().find(|p| p.t == t && p.s == s)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            schema: Option<String>,
        }
        let probe: Probe = serde_json::from_str(text)?;
        check_schema(probe.schema.as_deref().unwrap_or(""))?;
        Ok(serde_json::from_str(text)?)
    }
}

pub fn persist(summary: &McSummary, path: &Path) -> Result<()> {
    std::fs::write(path, summary.to_json()?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<McSummary> {
    McSummary::from_json_str(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// replication engine

/// Per-point running mean and sum of squared deviations.
#[derive(Debug, Clone)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments {
            n: 0.0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((mu, m2), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *mu;
            *mu += d / self.n;
            *m2 += d * (v - *mu);
        }
    }

    fn merge(mut self, other: Moments) -> Moments {
        if other.n == 0.0 {
            return self;
        }
        if self.n == 0.0 {
            return other;
        }
        let n = self.n + other.n;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * other.n / n;
            self.m2[i] += other.m2[i] + d * d * self.n * other.n / n;
        }
        self.n = n;
        self
    }
}

fn tree_merge(mut parts: Vec<Moments>) -> Moments {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().expect("at least one block")
}

struct EngineOutput {
    moments: Moments,
    /// Row-major `reps x n_points` values at the comparison points.
    compare: Vec<f64>,
}

/// Runs `reps` replications of `f(rep, state, eval_values)`, where
/// `eval_values` holds the path at the evaluation points. `grid_idx` and
/// `cmp_idx` select the grid and comparison points among them.
fn run_engine<S, F>(
    reps: usize,
    workers: usize,
    n_eval: usize,
    grid_idx: &[usize],
    cmp_idx: &[usize],
    f: F,
) -> Result<EngineOutput>
where
    S: Default + Send,
    F: Fn(u64, &mut S, &mut [f64]) -> Result<()> + Sync,
{
    let n_blocks = reps.div_ceil(BLOCK_SIZE);
    let run_block = |b: usize| -> Result<(Moments, Vec<f64>)> {
        let mut state = S::default();
        let mut eval = vec![0.0; n_eval];
        let mut grid_vals = vec![0.0; grid_idx.len()];
        let mut moments = Moments::new(grid_idx.len());
        let lo = b * BLOCK_SIZE;
        let hi = (lo + BLOCK_SIZE).min(reps);
        let mut cmp = Vec::with_capacity((hi - lo) * cmp_idx.len());
        for rep in lo..hi {
            f(rep as u64, &mut state, &mut eval).map_err(|e| Error::Replication {
                index: rep,
                source: Box::new(e),
            })?;
            for (g, &i) in grid_vals.iter_mut().zip(grid_idx) {
                *g = eval[i];
            }
            moments.push(&grid_vals);
            cmp.extend(cmp_idx.iter().map(|&i| eval[i]));
        }
        Ok((moments, cmp))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let blocks: Vec<(Moments, Vec<f64>)> =
        pool.install(|| (0..n_blocks).into_par_iter().map(run_block).collect::<Result<_>>())?;
    let mut compare = Vec::with_capacity(reps * cmp_idx.len());
    let mut parts = Vec::with_capacity(blocks.len());
    for (m, c) in blocks {
        parts.push(m);
        compare.extend(c);
    }
    Ok(EngineOutput {
        moments: tree_merge(parts),
        compare,
    })
}

/// Sample covariance of columns `a` and `b` and its jackknife SE.
fn cov_with_jackknife(values: &[f64], width: usize, a: usize, b: usize) -> (f64, f64) {
    let n = values.len() / width;
    let nf = n as f64;
    let col = |j: usize| values.iter().skip(j).step_by(width).copied();
    let mx = col(a).sum::<f64>() / nf;
    let my = col(b).sum::<f64>() / nf;
    let xs: Vec<f64> = col(a).map(|v| v - mx).collect();
    let ys: Vec<f64> = col(b).map(|v| v - my).collect();
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let cov = (sxy - sx * sy / nf) / (nf - 1.0);
    let loo: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (sxy - x * y - (sx - x) * (sy - y) / (nf - 1.0)) / (nf - 2.0))
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / nf;
    let ss: f64 = loo.iter().map(|c| (c - loo_mean) * (c - loo_mean)).sum();
    (cov, ((nf - 1.0) / nf * ss).sqrt())
}

/// Evaluation points: the grid merged with the comparison points.
fn eval_layout(grid: &ProcessGrid, pairs: &[[f64; 2]]) -> (Vec<f64>, Vec<usize>, Vec<f64>, Vec<usize>) {
    let mut cmp: Vec<f64> = pairs.iter().flat_map(|p| p.iter().copied()).collect();
    cmp.sort_by(f64::total_cmp);
    cmp.dedup();
    let mut eval: Vec<f64> = grid.points().iter().copied().chain(cmp.iter().copied()).collect();
    eval.sort_by(f64::total_cmp);
    eval.dedup();
    let index = |t: &f64| eval.partition_point(|x| x < t);
    let grid_idx = grid.points().iter().map(index).collect();
    let cmp_idx = cmp.iter().map(index).collect();
    (eval, grid_idx, cmp, cmp_idx)
}

fn pair_estimates(
    out: &EngineOutput,
    cmp: &[f64],
    pairs: &[[f64; 2]],
    target: impl Fn(f64, f64) -> Result<Option<f64>>,
) -> Result<(Vec<PairEstimate>, Option<f64>)> {
    let width = cmp.len();
    let pos = |t: f64| cmp.partition_point(|x| *x < t);
    let mut ests = Vec::with_capacity(pairs.len());
    let mut max_abs_z: Option<f64> = None;
    for &[t, s] in pairs {
        let (cov, se) = cov_with_jackknife(&out.compare, width, pos(t), pos(s));
        let target = target(t, s)?;
        let z = match target {
            Some(tv) if se > 0.0 => Some((cov - tv) / se),
            _ => None,
        };
        if let Some(z) = z {
            max_abs_z = Some(max_abs_z.map_or(z.abs(), |m| m.max(z.abs())));
        }
        ests.push(PairEstimate {
            t,
            s,
            cov,
            se,
            target,
            z,
        });
    }
    Ok((ests, max_abs_z))
}

fn variance(mo: &Moments) -> Vec<f64> {
    mo.m2.iter().map(|v| v / (mo.n - 1.0)).collect()
}

#[derive(Default)]
struct EdfState {
    y: Vec<f64>,
    scratch: Vec<f64>,
    p: Vec<f64>,
}

/// Runs an e.d.f. experiment on `workers` threads.
pub fn run_edf_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<McSummary> {
    cfg.validate()?;
    let base = cfg.model.build()?;
    let m = base.m();
    let gamma = gamma_m(&base);
    let scale = match cfg.scale {
        Scale::Rate => rate(&base),
        Scale::SqrtM => (m as f64).sqrt(),
        Scale::InvSqrtGamma => {
            if !(gamma > 0.0) {
                return Err(Error::invalid(format!(
                    "gamma_m^(-1/2) scaling needs gamma_m > 0, got {gamma}"
                )));
            }
            gamma.sqrt().recip()
        }
        Scale::Fixed(v) => v,
    };
    let base_plan = plan(&base)?;
    let (eval, grid_idx, cmp, cmp_idx) = eval_layout(&cfg.grid, &cfg.compare_pairs);
    let eval_c1: Vec<f64> = eval.iter().map(|&t| c1(t)).collect();
    let modified = cfg.path == PathChoice::Modified;
    let resample = cfg.model.resamples();

    let out = run_engine::<EdfState, _>(cfg.reps, workers, eval.len(), &grid_idx, &cmp_idx, |rep, st, vals| {
        let stream = RngStream::new(cfg.master_seed, rep);
        let owned: SamplerPlan;
        let p = if resample {
            owned = plan(&cfg.model.build_for_replication(rep)?)?;
            &owned
        } else {
            &base_plan
        };
        st.y.resize(m, 0.0);
        p.sample_into(&mut stream.rng(), &mut st.y, &mut st.scratch);
        st.p.clear();
        st.p.extend(st.y.iter().map(|&v| upper_tail(v)));
        st.p.sort_unstable_by(f64::total_cmp);
        edf_at_sorted(&st.p, &eval, vals);
        rescale_in_place(&eval, vals, scale);
        if modified {
            let shift = scale * mean(&st.y);
            for (v, c) in vals.iter_mut().zip(&eval_c1) {
                *v -= c * shift;
            }
        }
        Ok(())
    })?;

    let exact = if cfg.target == Target::ExactCov {
        Some(gamma_moments(&base, &cfg.series)?)
    } else {
        None
    };
    let v = 1.0 / m as f64 + gamma;
    let (pairs, max_abs_z) = pair_estimates(&out, &cmp, &cfg.compare_pairs, |t, s| {
        Ok(match cfg.target {
            Target::None => None,
            Target::ExactCov => {
                let mut c = edf_cov_exact(t, s, exact.as_ref().unwrap(), &cfg.series)?;
                if modified {
                    c -= c1(t) * c1(s) * v;
                }
                Some(scale * scale * c)
            }
            Target::LimitKernel { theta } => Some(if modified {
                theta.bridge_weight() * centered_kernel(t, s)
            } else {
                limit_kernel(t, s, theta)
            }),
        })
    })?;
    Ok(McSummary {
        schema: schema_v1(),
        experiment: "edf".to_string(),
        master_seed: cfg.master_seed,
        reps: cfg.reps,
        config: serde_json::to_value(cfg)?,
        m: Some(m),
        gamma_m: Some(gamma),
        scale_factor: Some(scale),
        sampler: Some(base_plan.label().to_string()),
        jitter_used: Some(base_plan.jitter_used()),
        grid: cfg.grid.points().to_vec(),
        variance: variance(&out.moments),
        mean: out.moments.mean,
        pairs,
        max_abs_z,
    })
}

#[derive(Default)]
struct LimitState {
    buf: Vec<f64>,
}

/// Draws the limit process and compares covariances with `K(., .; theta)`.
pub fn run_limit_experiment(cfg: &LimitExperimentConfig, workers: usize) -> Result<McSummary> {
    cfg.validate()?;
    let (eval, grid_idx, cmp, cmp_idx) = eval_layout(&cfg.grid, &cfg.compare_pairs);
    let sampler = LimitSampler::new(&LimitDrawConfig {
        theta: cfg.theta,
        brownian_steps: cfg.brownian_steps,
        grid: ProcessGrid::new(eval.clone())?,
    })?;
    let out = run_engine::<LimitState, _>(cfg.reps, workers, eval.len(), &grid_idx, &cmp_idx, |rep, st, vals| {
        let mut rng = RngStream::new(cfg.master_seed, rep).rng();
        sampler.sample_into(&mut rng, vals, &mut st.buf);
        Ok(())
    })?;
    let (pairs, max_abs_z) = pair_estimates(&out, &cmp, &cfg.compare_pairs, |t, s| {
        Ok(Some(limit_kernel(t, s, cfg.theta)))
    })?;
    Ok(McSummary {
        schema: schema_v1(),
        experiment: "limit".to_string(),
        master_seed: cfg.master_seed,
        reps: cfg.reps,
        config: serde_json::to_value(cfg)?,
        m: None,
        gamma_m: None,
        scale_factor: None,
        sampler: None,
        jitter_used: None,
        grid: cfg.grid.points().to_vec(),
        variance: variance(&out.moments),
        mean: out.moments.mean,
        pairs,
        max_abs_z,
    })
}

/// One panel of the equi-correlated path figure.
#[derive(Debug, Clone, PartialEq)]
pub struct Figure1Panel {
    pub m_gamma_target: f64,
    pub rho: f64,
    pub path: ProcessPath,
}

pub const FIGURE1_M: usize = 10_000;
pub const FIGURE1_TARGETS: [f64; 4] = [0.0, 2.0, 100.0, 1000.0];

/// One `sqrt(m)`-scaled path per target value of `m gamma_m`, under
/// equi-correlation with `rho = target / (m - 1)`. Panel `k` uses stream
/// `(seed, k)`.
pub fn figure1_data(m: usize, m_gamma_targets: &[f64], seed: u64, grid: &ProcessGrid) -> Result<Vec<Figure1Panel>> {
    if m < 2 {
        return Err(Error::invalid("figure paths need m >= 2"));
    }
    m_gamma_targets
        .iter()
        .enumerate()
        .map(|(k, &target)| {
            let rho = target / (m as f64 - 1.0);
            let c: CorrelationStructure = build_equi(m, rho)?;
            let y = plan(&c)?.sample(&mut RngStream::new(seed, k as u64).rng());
            let mut p: Vec<f64> = y.iter().map(|&v| upper_tail(v)).collect();
            p.sort_unstable_by(f64::total_cmp);
            let mut values = vec![0.0; grid.len()];
            edf_at_sorted(&p, grid.points(), &mut values);
            rescale_in_place(grid.points(), &mut values, (m as f64).sqrt());
            Ok(Figure1Panel {
                m_gamma_target: target,
                rho,
                path: ProcessPath {
                    grid: grid.clone(),
                    values,
                    kind: PathKind::RescaledEdf,
                },
            })
        })
        .collect()
}

fn default_figure1_m() -> usize {
    FIGURE1_M
}

fn default_figure1_targets() -> Vec<f64> {
    FIGURE1_TARGETS.to_vec()
}

fn default_figure_seed() -> u64 {
    1
}

/// Parameters of the equi-correlated path panels; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure1Config {
    #[serde(default = "schema_v1")]
    pub schema: String,
    #[serde(default = "default_figure1_m")]
    pub m: usize,
    #[serde(default = "default_figure1_targets")]
    pub m_gamma_targets: Vec<f64>,
    #[serde(default)]
    pub grid: ProcessGrid,
    #[serde(default = "default_figure_seed")]
    pub master_seed: u64,
}

impl Default for Figure1Config {
    fn default() -> Self {
        Figure1Config {
            schema: schema_v1(),
            m: FIGURE1_M,
            m_gamma_targets: default_figure1_targets(),
            grid: ProcessGrid::default(),
            master_seed: 1,
        }
    }
}

impl Figure1Config {
    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let cfg: Figure1Config = serde_json::from_slice(bytes)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_schema(&self.schema)?;
        if self.m < 2 {
            return Err(Error::invalid("figure paths need m >= 2"));
        }
        if self.m_gamma_targets.is_empty() {
            return Err(Error::invalid("m_gamma_targets must not be empty"));
        }
        let lo = -1.0;
        let hi = self.m as f64 - 1.0;
        for &t in &self.m_gamma_targets {
            if !(t >= lo && t <= hi) {
                return Err(Error::OutOfDomain {
                    what: "m_gamma target",
                    value: t,
                });
            }
        }
        Ok(())
    }

    pub fn run(&self) -> Result<Vec<Figure1Panel>> {
        self.validate()?;
        figure1_data(self.m, &self.m_gamma_targets, self.master_seed, &self.grid)
    }
}
