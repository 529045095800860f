//! Sampling `Y ~ N(0, Gamma)` with reproducible per-replication streams.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corr::{
    smallest_eigenvalue, CorrelationStructure, Family, ModelSpec, Representation, DEFAULT_DENSE_CAP,
    EIGEN_CHECK_LIMIT,
};
use crate::error::{Error, Result};

/// Diagonal jitter levels tried, in order, when a dense factorization fails.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// A counter-based random stream identified by `(master_seed, stream_index)`.
///
/// Streams with different indices are independent ChaCha8 streams under the
/// same key, so replication `i` always sees the same numbers no matter which
/// thread runs it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        RngStream {
            master_seed,
            stream_index,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanKind {
    /// Lower Cholesky factor of a dense matrix.
    CholeskyDense(DMatrix<f64>),
    /// `Y = sqrt(a) xi + B w`.
    LowRank { sqrt_a: f64, loadings: DMatrix<f64> },
    /// Lower Cholesky factor of a Toeplitz matrix.
    ToeplitzDense(DMatrix<f64>),
}

/// How to draw from `N(0, Gamma)` for a fixed structure.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerPlan {
    m: usize,
    kind: PlanKind,
    jitter_used: f64,
}

impl SamplerPlan {
    pub fn kind(&self) -> &PlanKind {
        &self.kind
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            PlanKind::CholeskyDense(_) => "cholesky_dense",
            PlanKind::LowRank { .. } => "low_rank",
            PlanKind::ToeplitzDense(_) => "toeplitz_dense",
        }
    }

    /// Diagonal jitter that was needed for the factorization.
    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of standard normals consumed per draw.
    pub fn normals_per_draw(&self) -> usize {
        match &self.kind {
            PlanKind::LowRank { loadings, .. } => self.m + loadings.ncols(),
            _ => self.m,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        let mut scratch = Vec::new();
        self.sample_into(rng, &mut y, &mut scratch);
        y
    }

    /// Writes one draw into `out` (length `m`), using `scratch` as workspace.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64], scratch: &mut Vec<f64>) {
        let m = self.m;
        assert_eq!(out.len(), m, "output length must equal the dimension");
        match &self.kind {
            PlanKind::LowRank { sqrt_a, loadings } => {
                for y in out.iter_mut() {
                    let xi: f64 = rng.sample(StandardNormal);
                    *y = sqrt_a * xi;
                }
                let data = loadings.as_slice();
                for r in 0..loadings.ncols() {
                    let w: f64 = rng.sample(StandardNormal);
                    let col = &data[r * m..(r + 1) * m];
                    for (y, b) in out.iter_mut().zip(col) {
                        *y += b * w;
                    }
                }
            }
            PlanKind::CholeskyDense(l) | PlanKind::ToeplitzDense(l) => {
                scratch.clear();
                scratch.extend((0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
                out.fill(0.0);
                let data = l.as_slice();
                for (j, &z) in scratch.iter().enumerate() {
                    let col = &data[j * m + j..(j + 1) * m];
                    for (y, v) in out[j..].iter_mut().zip(col) {
                        *y += v * z;
                    }
                }
            }
        }
    }
}

/// Chooses the sampling strategy for `c`.
///
/// Diagonal-plus-low-rank structures are sampled in `O(m k)`; everything
/// else goes through a dense Cholesky factor, escalating the diagonal jitter
/// along [`JITTER_LADDER`] until the factorization succeeds.
pub fn plan(c: &CorrelationStructure) -> Result<SamplerPlan> {
    plan_with_cap(c, DEFAULT_DENSE_CAP)
}

pub fn plan_with_cap(c: &CorrelationStructure, cap: usize) -> Result<SamplerPlan> {
    let m = c.m();
    match c.representation() {
        Representation::DiagPlusLowRank { a, loadings } if *a >= 0.0 => Ok(SamplerPlan {
            m,
            kind: PlanKind::LowRank {
                sqrt_a: a.sqrt(),
                loadings: loadings.clone(),
            },
            jitter_used: 0.0,
        }),
        repr => {
            let g = c.to_dense(cap)?;
            let (l, jitter) = cholesky_with_jitter(&g)?;
            let kind = if matches!(repr, Representation::Toeplitz(_)) {
                PlanKind::ToeplitzDense(l)
            } else {
                PlanKind::CholeskyDense(l)
            };
            Ok(SamplerPlan {
                m,
                kind,
                jitter_used: jitter,
            })
        }
    }
}

fn cholesky_with_jitter(g: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    for &jitter in &JITTER_LADDER {
        let mut h = g.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += jitter;
        }
        if let Some(ch) = h.cholesky() {
            return Ok((ch.unpack(), jitter));
        }
    }
    let min_eigenvalue = (g.nrows() <= EIGEN_CHECK_LIMIT).then(|| smallest_eigenvalue(g));
    Err(Error::NotPsd { min_eigenvalue })
}

/// Realizes a sample-correlation matrix and then one vector from it.
///
/// The matrix comes from the model's own seed (per replication when the
/// model resamples, once otherwise); the vector comes from `stream`.
pub fn sample_two_level(spec: &ModelSpec, stream: RngStream) -> Result<(CorrelationStructure, Vec<f64>)> {
    if !matches!(spec.family, Family::SampleCorr { .. }) {
        return Err(Error::invalid("two-level sampling needs a sample_corr model"));
    }
    let c = spec.build_for_replication(stream.stream_index)?;
    let p = plan(&c)?;
    let y = p.sample(&mut stream.rng());
    Ok((c, y))
}
