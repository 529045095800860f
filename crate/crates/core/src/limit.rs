//! Sampling the limit process with covariance `K(., .; theta)`.
//!
//! For finite `theta`,
//!
//! `Z_t = (1+|theta|)^{-1/2} (W_t - t W_1) + (1+|theta|)^{-1/2} (sqrt(1+theta) - 1) c_1(t) I`
//!
//! with `I = int_0^1 g(u) dW_u` and `g` the upper-tail inverse. Since
//! `c_1' = g`, the mean of `g` over a step `[a, b]` is `(c_1(b) - c_1(a)) / (b - a)`;
//! the discretized integral uses these exact means, which keeps the
//! singularities of `g` at 0 and 1 harmless. For `theta = inf` the path is
//! `c_1(t) zeta`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::edf::{PathKind, ProcessGrid, ProcessPath};
use crate::error::{Error, Result};
use crate::hermite::{c1, Theta};

pub const DEFAULT_BROWNIAN_STEPS: usize = 4096;

fn default_steps() -> usize {
    DEFAULT_BROWNIAN_STEPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitDrawConfig {
    pub theta: Theta,
    #[serde(default = "default_steps")]
    pub brownian_steps: usize,
    #[serde(default)]
    pub grid: ProcessGrid,
}

impl LimitDrawConfig {
    pub fn new(theta: Theta) -> Self {
        LimitDrawConfig {
            theta,
            brownian_steps: DEFAULT_BROWNIAN_STEPS,
            grid: ProcessGrid::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.theta.validate()?;
        if self.brownian_steps == 0 || self.brownian_steps + 1 < self.grid.len() {
            return Err(Error::invalid(format!(
                "brownian_steps = {} must be at least the number of grid intervals ({})",
                self.brownian_steps,
                self.grid.len() - 1
            )));
        }
        Ok(())
    }
}

/// Precomputed lattice and weights for repeated draws.
#[derive(Debug, Clone)]
pub struct LimitSampler {
    theta: Theta,
    grid: ProcessGrid,
    sqrt_dt: Vec<f64>,
    weights: Vec<f64>,
    // lattice index of each grid point
    grid_index: Vec<usize>,
    grid_t: Vec<f64>,
    grid_c1: Vec<f64>,
    bridge_coef: f64,
    spike_coef: f64,
}

impl LimitSampler {
    pub fn new(cfg: &LimitDrawConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.brownian_steps;
        let mut lattice: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        lattice.extend_from_slice(cfg.grid.points());
        lattice.sort_by(f64::total_cmp);
        lattice.dedup();
        let sqrt_dt: Vec<f64> = lattice.windows(2).map(|w| (w[1] - w[0]).sqrt()).collect();
        let weights = interval_means(&lattice);
        let grid_index = cfg
            .grid
            .points()
            .iter()
            .map(|t| lattice.partition_point(|x| x < t))
            .collect();
        let grid_t = cfg.grid.points().to_vec();
        let grid_c1 = grid_t.iter().map(|&t| c1(t)).collect();
        let (bridge_coef, spike_coef) = match cfg.theta {
            Theta::Finite(th) => {
                let a = (1.0 + th.abs()).sqrt().recip();
                (a, a * ((1.0 + th).sqrt() - 1.0))
            }
            Theta::Infinite => (0.0, 1.0),
        };
        Ok(LimitSampler {
            theta: cfg.theta,
            grid: cfg.grid.clone(),
            sqrt_dt,
            weights,
            grid_index,
            grid_t,
            grid_c1,
            bridge_coef,
            spike_coef,
        })
    }

    pub fn grid(&self) -> &ProcessGrid {
        &self.grid
    }

    /// `sum_k w_k^2 dt_k`: the variance of the discretized stochastic integral.
    pub fn integral_variance(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.sqrt_dt)
            .map(|(w, s)| w * w * s * s)
            .sum()
    }

    /// Writes one draw on the grid into `out`; `w_buf` is workspace.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64], w_buf: &mut Vec<f64>) {
        assert_eq!(out.len(), self.grid_t.len());
        if self.theta.is_infinite() {
            let zeta: f64 = rng.sample(StandardNormal);
            for (o, c) in out.iter_mut().zip(&self.grid_c1) {
                *o = c * zeta;
            }
            return;
        }
        // W at lattice points and I accumulated along the way
        w_buf.clear();
        w_buf.push(0.0);
        let mut w = 0.0;
        let mut integral = 0.0;
        for (s, g) in self.sqrt_dt.iter().zip(&self.weights) {
            let dw = s * rng.sample::<f64, _>(StandardNormal);
            w += dw;
            integral += g * dw;
            w_buf.push(w);
        }
        let w1 = w;
        for (k, o) in out.iter_mut().enumerate() {
            let t = self.grid_t[k];
            let bridge = w_buf[self.grid_index[k]] - t * w1;
            *o = self.bridge_coef * bridge + self.spike_coef * self.grid_c1[k] * integral;
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ProcessPath {
        let mut values = vec![0.0; self.grid_t.len()];
        let mut buf = Vec::new();
        self.sample_into(rng, &mut values, &mut buf);
        ProcessPath {
            grid: self.grid.clone(),
            values,
            kind: PathKind::LimitDraw,
        }
    }
}

/// Means of the upper-tail inverse over consecutive lattice intervals.
fn interval_means(lattice: &[f64]) -> Vec<f64> {
    let c: Vec<f64> = lattice.iter().map(|&t| c1(t)).collect();
    lattice
        .windows(2)
        .zip(c.windows(2))
        .map(|(t, c)| (c[1] - c[0]) / (t[1] - t[0]))
        .collect()
}

/// One draw of the limit process.
pub fn sample_limit<R: Rng + ?Sized>(cfg: &LimitDrawConfig, rng: &mut R) -> Result<ProcessPath> {
    Ok(LimitSampler::new(cfg)?.sample(rng))
}

/// Discretized `int_0^1 g(u)^2 du` (exactly 1) on `steps` equal steps.
pub fn integral_weight_check(steps: usize) -> f64 {
    assert!(steps > 0, "steps must be positive");
    let lattice: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
    let dt = 1.0 / steps as f64;
    interval_means(&lattice).iter().map(|w| w * w * dt).sum()
}
