//! Correlation-matrix families and their structured representations.
//!
//! Every constructor returns a [`CorrelationStructure`] with unit diagonal
//! that has been checked to be positive semidefinite. The representation is
//! chosen so the sampler and the diagnostics can exploit it: equi-correlated,
//! sign-factor and factor models with `rho >= 0` are kept as
//! `a I + B B^T`, stationary families as a Toeplitz first row.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{ChiSquared, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::RngStream;

/// Default cap on the dimension of materialized dense matrices.
pub const DEFAULT_DENSE_CAP: usize = 20_000;

/// Dense eigenvalue checks are only run up to this dimension.
pub const EIGEN_CHECK_LIMIT: usize = 2_000;

/// Smallest admissible eigenvalue for a matrix to count as PSD.
pub const PSD_TOLERANCE: f64 = -1e-8;

const UNIT_DIAGONAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    Dense(DMatrix<f64>),
    /// First row `(1, r_1, ..., r_{m-1})` of a symmetric Toeplitz matrix.
    Toeplitz(Vec<f64>),
    /// `Gamma = a I + B B^T` with `B` of shape `m x k`.
    DiagPlusLowRank { a: f64, loadings: DMatrix<f64> },
}

/// A realized `m x m` correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationStructure {
    m: usize,
    repr: Representation,
    min_eigenvalue: Option<f64>,
}

impl CorrelationStructure {
    pub fn identity(m: usize) -> Self {
        CorrelationStructure {
            m,
            repr: Representation::DiagPlusLowRank {
                a: 1.0,
                loadings: DMatrix::zeros(m, 0),
            },
            min_eigenvalue: Some(1.0),
        }
    }

    /// Wraps a dense matrix after checking symmetry, unit diagonal and PSD.
    pub fn from_dense(matrix: DMatrix<f64>) -> Result<Self> {
        let m = matrix.nrows();
        if m == 0 || matrix.ncols() != m {
            return Err(Error::invalid("correlation matrix must be square and nonempty"));
        }
        for i in 0..m {
            if !((matrix[(i, i)] - 1.0).abs() <= UNIT_DIAGONAL_TOL) {
                return Err(Error::invalid(format!(
                    "diagonal entry {i} is {} instead of 1",
                    matrix[(i, i)]
                )));
            }
            for j in 0..i {
                let v = matrix[(i, j)];
                if v != matrix[(j, i)] {
                    return Err(Error::invalid(format!("matrix is not symmetric at ({i}, {j})")));
                }
                if !v.is_finite() || v.abs() > 1.0 {
                    return Err(Error::invalid(format!("entry ({i}, {j}) = {v} is not a correlation")));
                }
            }
        }
        let min_eigenvalue = validate_dense_psd(&matrix)?;
        Ok(CorrelationStructure {
            m,
            repr: Representation::Dense(matrix),
            min_eigenvalue,
        })
    }

    /// Toeplitz structure with its first row, validated to be PSD.
    pub fn from_toeplitz_row(row: Vec<f64>) -> Result<Self> {
        let mut c = Self::toeplitz_unchecked(row)?;
        c.min_eigenvalue = validate_toeplitz_psd(c.toeplitz_row().unwrap())?;
        Ok(c)
    }

    /// Toeplitz structure without the PSD check.
    ///
    /// Only the entries are validated. Diagnostics such as `gamma_m` are
    /// well defined for any symmetric unit-diagonal matrix, but a structure
    /// built this way may fail to produce a sampler plan.
    pub fn toeplitz_unchecked(row: Vec<f64>) -> Result<Self> {
        if row.is_empty() {
            return Err(Error::invalid("Toeplitz row must be nonempty"));
        }
        if row[0] != 1.0 {
            return Err(Error::invalid("Toeplitz row must start with 1"));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(Error::invalid(format!("Toeplitz entry {v} is not a correlation")));
        }
        Ok(CorrelationStructure {
            m: row.len(),
            repr: Representation::Toeplitz(row),
            min_eigenvalue: None,
        })
    }

    /// `a I + B B^T`; requires `a >= 0` and unit diagonal.
    pub fn from_low_rank(a: f64, loadings: DMatrix<f64>) -> Result<Self> {
        let m = loadings.nrows();
        if m == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if !(a >= 0.0) {
            return Err(Error::invalid(format!("diagonal scale a = {a} must be >= 0")));
        }
        for i in 0..m {
            let d = a + loadings.row(i).norm_squared();
            if !((d - 1.0).abs() <= UNIT_DIAGONAL_TOL) {
                return Err(Error::invalid(format!("diagonal entry {i} is {d} instead of 1")));
            }
        }
        Ok(CorrelationStructure {
            m,
            repr: Representation::DiagPlusLowRank { a, loadings },
            min_eigenvalue: None,
        })
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    /// Smallest eigenvalue, when the validation path computed it.
    pub fn min_eigenvalue(&self) -> Option<f64> {
        self.min_eigenvalue
    }

    pub fn toeplitz_row(&self) -> Option<&[f64]> {
        match &self.repr {
            Representation::Toeplitz(r) => Some(r),
            _ => None,
        }
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.repr {
            Representation::Dense(g) => g[(i, j)],
            Representation::Toeplitz(row) => row[i.abs_diff(j)],
            Representation::DiagPlusLowRank { loadings, .. } => {
                if i == j {
                    1.0
                } else {
                    loadings.row(i).dot(&loadings.row(j))
                }
            }
        }
    }

    /// An upper bound on `|Gamma_{i,j}|` over `i != j` (exact for dense and
    /// Toeplitz forms).
    pub fn max_abs_offdiag(&self) -> f64 {
        match &self.repr {
            Representation::Dense(g) => {
                let mut mx: f64 = 0.0;
                for j in 0..self.m {
                    for i in 0..self.m {
                        if i != j {
                            mx = mx.max(g[(i, j)].abs());
                        }
                    }
                }
                mx
            }
            Representation::Toeplitz(row) => row[1..].iter().fold(0.0, |mx, v| mx.max(v.abs())),
            Representation::DiagPlusLowRank { a, loadings } => {
                if loadings.ncols() == 1 {
                    let mx = loadings.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
                    mx * mx
                } else {
                    (1.0 - a).clamp(0.0, 1.0)
                }
            }
        }
    }

    /// Materializes `Gamma`.
    pub fn to_dense(&self, cap: usize) -> Result<DMatrix<f64>> {
        if self.m > cap {
            return Err(Error::DenseCapExceeded { m: self.m, cap });
        }
        Ok(match &self.repr {
            Representation::Dense(g) => g.clone(),
            Representation::Toeplitz(row) => {
                DMatrix::from_fn(self.m, self.m, |i, j| row[i.abs_diff(j)])
            }
            Representation::DiagPlusLowRank { a, loadings } => {
                let mut g = loadings * loadings.transpose();
                for i in 0..self.m {
                    g[(i, i)] += a;
                }
                // exact symmetry and unit diagonal
                for i in 0..self.m {
                    g[(i, i)] = 1.0;
                    for j in 0..i {
                        g[(j, i)] = g[(i, j)];
                    }
                }
                g
            }
        })
    }
}

/// Returns the smallest eigenvalue when it was computed.
fn validate_dense_psd(g: &DMatrix<f64>) -> Result<Option<f64>> {
    if g.nrows() <= EIGEN_CHECK_LIMIT {
        let min = smallest_eigenvalue(g);
        if min < PSD_TOLERANCE {
            return Err(Error::NotPsd {
                min_eigenvalue: Some(min),
            });
        }
        return Ok(Some(min));
    }
    let mut shifted = g.clone();
    for i in 0..g.nrows() {
        shifted[(i, i)] += -PSD_TOLERANCE;
    }
    if shifted.cholesky().is_none() {
        return Err(Error::NotPsd {
            min_eigenvalue: None,
        });
    }
    Ok(None)
}

pub(crate) fn smallest_eigenvalue(g: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(g.clone())
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Durbin-Levinson: a unit-diagonal symmetric Toeplitz matrix is positive
/// definite iff every reflection coefficient lies strictly inside (-1, 1).
/// Near-singular cases fall back to an eigenvalue check.
fn validate_toeplitz_psd(row: &[f64]) -> Result<Option<f64>> {
    let m = row.len();
    let mut coef: Vec<f64> = Vec::with_capacity(m);
    let mut scratch: Vec<f64> = Vec::with_capacity(m);
    let mut v = 1.0;
    let mut definite = true;
    for k in 1..m {
        let mut num = row[k];
        for (j, c) in coef.iter().enumerate() {
            num -= c * row[k - 1 - j];
        }
        let kappa = num / v;
        if !(kappa.abs() < 1.0 - 1e-12) {
            definite = false;
            break;
        }
        scratch.clear();
        for j in 0..coef.len() {
            scratch.push(coef[j] - kappa * coef[coef.len() - 1 - j]);
        }
        scratch.push(kappa);
        std::mem::swap(&mut coef, &mut scratch);
        v *= 1.0 - kappa * kappa;
        if v < 1e-12 {
            definite = false;
            break;
        }
    }
    if definite {
        return Ok(None);
    }
    if m > EIGEN_CHECK_LIMIT {
        return Err(Error::NotPsd {
            min_eigenvalue: None,
        });
    }
    let g = DMatrix::from_fn(m, m, |i, j| row[i.abs_diff(j)]);
    let min = smallest_eigenvalue(&g);
    if min < PSD_TOLERANCE {
        return Err(Error::NotPsd {
            min_eigenvalue: Some(min),
        });
    }
    Ok(Some(min))
}

fn check_m(m: usize) -> Result<()> {
    if m == 0 {
        Err(Error::invalid("dimension m must be positive"))
    } else {
        Ok(())
    }
}

fn check_rho_range(m: usize, rho: f64) -> Result<()> {
    let lo = if m > 1 { -1.0 / (m as f64 - 1.0) } else { -1.0 };
    // tolerate rounding in -1/(m-1) computed by the caller
    if !(rho.is_finite() && rho >= lo * (1.0 + 1e-12) && rho <= 1.0) {
        return Err(Error::invalid(format!(
            "rho = {rho} outside [-1/(m-1), 1] for m = {m}"
        )));
    }
    Ok(())
}

/// `Gamma = (1 - rho) I + rho xi xi^T` for a sign vector `xi`.
fn sign_rank_one(xi: &[f64], rho: f64) -> Result<CorrelationStructure> {
    let m = xi.len();
    if rho >= 0.0 {
        let s = rho.sqrt();
        let b = DMatrix::from_iterator(m, 1, xi.iter().map(|x| s * x));
        let mut c = CorrelationStructure::from_low_rank(1.0 - rho, b)?;
        c.min_eigenvalue = Some(1.0 - rho);
        return Ok(c);
    }
    // Eigenvalues are 1 - rho (m - 1 times) and 1 + (m - 1) rho >= 0 by the range check.
    let g = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { rho * xi[i] * xi[j] });
    Ok(CorrelationStructure {
        m,
        repr: Representation::Dense(g),
        min_eigenvalue: Some((1.0 + (m as f64 - 1.0) * rho).min(1.0 - rho)),
    })
}

/// Equi-correlation: every off-diagonal entry equals `rho`.
pub fn build_equi(m: usize, rho: f64) -> Result<CorrelationStructure> {
    check_m(m)?;
    check_rho_range(m, rho)?;
    if rho == 0.0 {
        return Ok(CorrelationStructure::identity(m));
    }
    sign_rank_one(&vec![1.0; m], rho)
}

/// Alternate equi-correlation: `Gamma_{i,j} = rho (-1)^{i+j}` off the diagonal.
pub fn build_alternate(m: usize, rho: f64) -> Result<CorrelationStructure> {
    check_m(m)?;
    check_rho_range(m, rho)?;
    if rho == 0.0 {
        return Ok(CorrelationStructure::identity(m));
    }
    sign_rank_one(&alternating_signs(m), rho)
}

/// `Gamma = (1 - rho) I + rho xi xi^T` with `xi` in `{-1, +1}^m`.
pub fn build_sign_factor(xi: &[f64], rho: f64) -> Result<CorrelationStructure> {
    let m = xi.len();
    check_m(m)?;
    if let Some(v) = xi.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(Error::invalid(format!("sign vector entry {v} is not +1 or -1")));
    }
    check_rho_range(m, rho)?;
    if rho == 0.0 {
        return Ok(CorrelationStructure::identity(m));
    }
    sign_rank_one(xi, rho)
}

pub fn alternating_signs(m: usize) -> Vec<f64> {
    (0..m).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect()
}

/// First row `k -> k^{-d}` (with `r(0) = 1`).
pub fn long_range_row(m: usize, d: f64) -> Vec<f64> {
    (0..m)
        .map(|k| if k == 0 { 1.0 } else { (k as f64).powf(-d) })
        .collect()
}

/// First row `k -> rho k^{-d}` (with `r(0) = 1`).
pub fn weak_range_row(m: usize, d: f64, rho: f64) -> Vec<f64> {
    (0..m)
        .map(|k| if k == 0 { 1.0 } else { rho * (k as f64).powf(-d) })
        .collect()
}

/// Stationary long-range correlations `|i - j|^{-d}`, validated PSD.
///
/// The distance-one entry is `1` for every `d`, so the matrix is singular
/// for `m = 2` and indefinite for every `m >= 3`; such inputs are rejected
/// with the smallest eigenvalue. Use [`long_range_row`] with
/// [`CorrelationStructure::toeplitz_unchecked`] to study the entries alone.
pub fn build_long_range(m: usize, d: f64) -> Result<CorrelationStructure> {
    check_m(m)?;
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::invalid(format!("D = {d} must be > 0")));
    }
    CorrelationStructure::from_toeplitz_row(long_range_row(m, d))
}

/// Weak short/long range correlations `rho |i - j|^{-d}`, validated PSD.
pub fn build_weak_range(m: usize, d: f64, rho: f64) -> Result<CorrelationStructure> {
    check_m(m)?;
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::invalid(format!("D = {d} must be > 0")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho = {rho} must lie in [0, 1]")));
    }
    if rho == 0.0 {
        return Ok(CorrelationStructure::identity(m));
    }
    CorrelationStructure::from_toeplitz_row(weak_range_row(m, d, rho))
}

/// How `build_factor` treats a `P H P^T` whose diagonal is not exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalMode {
    /// Reject unless `diag(P H P^T) = 1` within 1e-8.
    #[default]
    Strict,
    /// Rescale `P H P^T` to `D^{-1/2} P H P^T D^{-1/2}` with `D` its diagonal.
    Normalize,
}

/// Factor ("spiked") model `Gamma = (1 - rho) I + rho P H P^T`.
///
/// `h` holds the `k` eigen-weights and `p` the `m x k` loadings with
/// orthonormal columns.
pub fn build_factor(
    h: &[f64],
    p: &DMatrix<f64>,
    rho: f64,
    mode: DiagonalMode,
) -> Result<CorrelationStructure> {
    let (m, k) = p.shape();
    check_m(m)?;
    if k == 0 || h.len() != k {
        return Err(Error::invalid(format!(
            "need k >= 1 weights matching the {k} loading columns, got {}",
            h.len()
        )));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho = {rho} must lie in [-1, 1]")));
    }
    if let Some(v) = h.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::invalid(format!("eigen-weight {v} must be finite and >= 0")));
    }
    let gram = p.transpose() * p;
    let ortho_err = (&gram - DMatrix::<f64>::identity(k, k)).amax();
    if ortho_err > 1e-10 {
        return Err(Error::invalid(format!(
            "loadings are not orthonormal: max |P^T P - I| = {ortho_err:e}"
        )));
    }
    // B0 = P H^{1/2}, so P H P^T = B0 B0^T.
    let mut b0 = p.clone();
    for (r, &hr) in h.iter().enumerate() {
        b0.column_mut(r).scale_mut(hr.sqrt());
    }
    let diag: Vec<f64> = (0..m).map(|i| b0.row(i).norm_squared()).collect();
    match mode {
        DiagonalMode::Strict => {
            if let Some((i, d)) = diag.iter().enumerate().find(|(_, d)| (*d - 1.0).abs() > 1e-8) {
                return Err(Error::invalid(format!(
                    "diagonal of P H P^T is {d} at row {i}, not 1 (weights must sum to m)"
                )));
            }
            for (r, &hr) in h.iter().enumerate() {
                if 1.0 - rho + rho * hr < 0.0 {
                    return Err(Error::invalid(format!(
                        "eigenvalue 1 - rho + rho h_{} = {} is negative",
                        r + 1,
                        1.0 - rho + rho * hr
                    )));
                }
            }
        }
        DiagonalMode::Normalize => {
            if let Some(i) = diag.iter().position(|d| !(*d > 0.0)) {
                return Err(Error::invalid(format!(
                    "row {i} of the loadings is zero; cannot normalize the diagonal"
                )));
            }
        }
    }
    for (i, d) in diag.iter().enumerate() {
        let scale = match mode {
            DiagonalMode::Strict => 1.0,
            DiagonalMode::Normalize => 1.0 / d.sqrt(),
        };
        b0.row_mut(i).scale_mut(scale);
    }
    if rho >= 0.0 {
        let mut b = b0;
        b.scale_mut(rho.sqrt());
        let mut c = CorrelationStructure::from_low_rank(1.0 - rho, b)?;
        if mode == DiagonalMode::Strict {
            let h_min = h.iter().fold(f64::INFINITY, |x, &y| x.min(y));
            c.min_eigenvalue = Some((1.0 - rho).min(1.0 - rho + rho * h_min));
        }
        return Ok(c);
    }
    let mut g = &b0 * b0.transpose();
    g.scale_mut(rho);
    for i in 0..m {
        g[(i, i)] = 1.0;
        for j in 0..i {
            g[(j, i)] = g[(i, j)];
        }
    }
    let min_eigenvalue = match mode {
        DiagonalMode::Strict => Some(
            h.iter()
                .map(|&hr| 1.0 - rho + rho * hr)
                .fold(1.0 - rho, f64::min),
        ),
        DiagonalMode::Normalize => validate_dense_psd(&g)?,
    };
    Ok(CorrelationStructure {
        m,
        repr: Representation::Dense(g),
        min_eigenvalue,
    })
}

/// Gaussian sample correlation matrix `D^{-1} S D^{-1}` with `S = X^T X`
/// for an `n x m` matrix `X` of independent standard normals.
///
/// For `n >= m`, `S` is drawn through the Bartlett decomposition `S = A A^T`
/// (`A` lower triangular, `A_ii^2 ~ chi^2(n - i)`, `A_ij ~ N(0, 1)` below the
/// diagonal), which has the same Wishart law at `O(m^3)` cost.
pub fn build_sample_corr<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Result<CorrelationStructure> {
    check_m(m)?;
    if n < 2 {
        return Err(Error::invalid(format!("sample size n = {n} must be >= 2")));
    }
    let s = if n >= m {
        let mut a = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            let chi = ChiSquared::new((n - i) as f64).expect("positive degrees of freedom");
            a[(i, i)] = rng.sample(chi).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.sample(StandardNormal);
            }
        }
        &a * a.transpose()
    } else {
        loop {
            let x = DMatrix::<f64>::from_fn(n, m, |_, _| rng.sample(StandardNormal));
            let s = x.tr_mul(&x);
            // a zero column has no correlation; draw again
            if (0..m).all(|i| s[(i, i)] > 0.0) {
                break s;
            }
        }
    };
    let d: Vec<f64> = (0..m).map(|i| s[(i, i)].sqrt()).collect();
    let g = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            1.0
        } else {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            (s[(a, b)] / (d[a] * d[b])).clamp(-1.0, 1.0)
        }
    });
    Ok(CorrelationStructure {
        m,
        repr: Representation::Dense(g),
        min_eigenvalue: None,
    })
}

/// Correlation parameter, possibly depending on the dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoSchedule {
    Fixed(f64),
    /// `coef * m^exponent`
    Power { coef: f64, exponent: f64 },
    /// `m_gamma / (m - 1)`: gives `m * gamma_m = m_gamma` for equi-correlation.
    PerPair { m_gamma: f64 },
}

impl RhoSchedule {
    pub fn at(&self, m: usize) -> f64 {
        match *self {
            RhoSchedule::Fixed(v) => v,
            RhoSchedule::Power { coef, exponent } => coef * (m as f64).powf(exponent),
            RhoSchedule::PerPair { m_gamma } => {
                if m > 1 {
                    m_gamma / (m as f64 - 1.0)
                } else {
                    0.0
                }
            }
        }
    }
}

/// A loading column of a factor model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadingColumn {
    /// `(1, ..., 1) / sqrt(m)`
    Constant,
    /// `(1, -1, 1, -1, ...) / sqrt(m)`
    Alternating,
    /// `(1, ..., 1, -1, ..., -1) / sqrt(m)`, sign change at `m / 2`
    HalfSplit,
    /// Explicit column of length `m`.
    Explicit(Vec<f64>),
}

impl LoadingColumn {
    pub fn column(&self, m: usize) -> Result<Vec<f64>> {
        let s = 1.0 / (m as f64).sqrt();
        Ok(match self {
            LoadingColumn::Constant => vec![s; m],
            LoadingColumn::Alternating => alternating_signs(m).into_iter().map(|v| v * s).collect(),
            LoadingColumn::HalfSplit => (0..m).map(|i| if i < m / 2 { s } else { -s }).collect(),
            LoadingColumn::Explicit(v) => {
                if v.len() != m {
                    return Err(Error::invalid(format!(
                        "explicit loading column has length {} but m = {m}",
                        v.len()
                    )));
                }
                v.clone()
            }
        })
    }
}

/// The sign vector of a sign-factor model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignPattern {
    AllPlus,
    Alternating,
    /// Independent fair signs from the given seed.
    Random { seed: u64 },
    Explicit(Vec<f64>),
}

impl SignPattern {
    pub fn signs(&self, m: usize) -> Result<Vec<f64>> {
        Ok(match self {
            SignPattern::AllPlus => vec![1.0; m],
            SignPattern::Alternating => alternating_signs(m),
            SignPattern::Random { seed } => {
                let mut rng = RngStream::new(*seed, 0).rng();
                (0..m).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect()
            }
            SignPattern::Explicit(v) => {
                if v.len() != m {
                    return Err(Error::invalid(format!(
                        "sign vector has length {} but m = {m}",
                        v.len()
                    )));
                }
                v.clone()
            }
        })
    }
}

/// Family tag and parameters of a correlation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Identity,
    Equi {
        rho: RhoSchedule,
    },
    Alternate {
        rho: RhoSchedule,
    },
    LongRange {
        #[serde(rename = "D")]
        d: f64,
    },
    WeakRange {
        #[serde(rename = "D")]
        d: f64,
        rho: RhoSchedule,
    },
    Factor {
        /// Eigen-weights relative to `m`: `h_r = h_over_m[r] * m`.
        h_over_m: Vec<f64>,
        loadings: Vec<LoadingColumn>,
        rho: RhoSchedule,
        #[serde(default)]
        diagonal: DiagonalMode,
    },
    SignFactor {
        xi: SignPattern,
        rho: RhoSchedule,
    },
    SampleCorr {
        n: usize,
        seed: u64,
        /// Draw a fresh matrix for every replication instead of conditioning
        /// on one realization.
        #[serde(default)]
        resample: bool,
    },
    /// A user-supplied matrix, given as rows.
    Dense {
        rows: Vec<Vec<f64>>,
    },
}

/// A correlation model at a given dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub m: usize,
    #[serde(flatten)]
    pub family: Family,
}

impl ModelSpec {
    pub fn new(m: usize, family: Family) -> Self {
        ModelSpec { m, family }
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_slice(bytes)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_m(&self, m: usize) -> Self {
        ModelSpec {
            m,
            family: self.family.clone(),
        }
    }

    /// The Figure-2 three-factor model with `m * rho_m = m_rho`.
    pub fn three_factor_reference(m: usize, m_rho: f64) -> Self {
        ModelSpec {
            m,
            family: Family::Factor {
                h_over_m: vec![0.4, 0.3, 0.6],
                loadings: vec![
                    LoadingColumn::Constant,
                    LoadingColumn::Alternating,
                    LoadingColumn::HalfSplit,
                ],
                rho: RhoSchedule::Power {
                    coef: m_rho,
                    exponent: -1.0,
                },
                diagonal: DiagonalMode::Normalize,
            },
        }
    }

    pub fn rho(&self) -> Option<f64> {
        match &self.family {
            Family::Equi { rho }
            | Family::Alternate { rho }
            | Family::WeakRange { rho, .. }
            | Family::Factor { rho, .. }
            | Family::SignFactor { rho, .. } => Some(rho.at(self.m)),
            _ => None,
        }
    }

    /// Cheap structural checks that do not build the matrix.
    pub fn validate(&self) -> Result<()> {
        check_m(self.m)?;
        let finite = |v: f64, what: &str| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} must be finite")))
            }
        };
        if let Some(rho) = self.rho() {
            finite(rho, "rho")?;
        }
        match &self.family {
            Family::Identity => {}
            Family::Equi { .. } | Family::Alternate { .. } | Family::SignFactor { .. } => {
                check_rho_range(self.m, self.rho().unwrap())?;
            }
            Family::LongRange { d } | Family::WeakRange { d, .. } => {
                if !(*d > 0.0 && d.is_finite()) {
                    return Err(Error::invalid(format!("D = {d} must be > 0")));
                }
            }
            Family::Factor {
                h_over_m, loadings, ..
            } => {
                if h_over_m.is_empty() || h_over_m.len() != loadings.len() {
                    return Err(Error::invalid(
                        "factor model needs as many h_over_m weights as loading columns",
                    ));
                }
                for h in h_over_m {
                    finite(*h, "h_over_m")?;
                }
            }
            Family::SampleCorr { n, .. } => {
                if *n < 2 {
                    return Err(Error::invalid(format!("sample size n = {n} must be >= 2")));
                }
            }
            Family::Dense { rows } => {
                if rows.len() != self.m || rows.iter().any(|r| r.len() != self.m) {
                    return Err(Error::invalid("dense matrix must be m x m"));
                }
            }
        }
        Ok(())
    }

    /// Builds and validates the matrix.
    pub fn build(&self) -> Result<CorrelationStructure> {
        self.build_inner(true, 0)
    }

    /// Like [`ModelSpec::build`], but Toeplitz families skip the PSD check.
    /// Meant for entry-only diagnostics.
    pub fn build_unvalidated(&self) -> Result<CorrelationStructure> {
        self.build_inner(false, 0)
    }

    /// The realization used by replication `index` (only differs from
    /// [`ModelSpec::build`] for resampled sample-correlation models).
    pub fn build_for_replication(&self, index: u64) -> Result<CorrelationStructure> {
        self.build_inner(true, index)
    }

    pub fn resamples(&self) -> bool {
        matches!(self.family, Family::SampleCorr { resample: true, .. })
    }

    fn build_inner(&self, validate: bool, replication: u64) -> Result<CorrelationStructure> {
        self.validate()?;
        let m = self.m;
        match &self.family {
            Family::Identity => Ok(CorrelationStructure::identity(m)),
            Family::Equi { rho } => build_equi(m, rho.at(m)),
            Family::Alternate { rho } => build_alternate(m, rho.at(m)),
            Family::LongRange { d } => {
                if validate {
                    build_long_range(m, *d)
                } else {
                    CorrelationStructure::toeplitz_unchecked(long_range_row(m, *d))
                }
            }
            Family::WeakRange { d, rho } => {
                let rho = rho.at(m);
                if validate {
                    build_weak_range(m, *d, rho)
                } else {
                    if !(0.0..=1.0).contains(&rho) {
                        return Err(Error::invalid(format!("rho = {rho} must lie in [0, 1]")));
                    }
                    CorrelationStructure::toeplitz_unchecked(weak_range_row(m, *d, rho))
                }
            }
            Family::Factor {
                h_over_m,
                loadings,
                rho,
                diagonal,
            } => {
                let k = loadings.len();
                let mut p = DMatrix::zeros(m, k);
                for (r, col) in loadings.iter().enumerate() {
                    for (i, v) in col.column(m)?.into_iter().enumerate() {
                        p[(i, r)] = v;
                    }
                }
                let h: Vec<f64> = h_over_m.iter().map(|x| x * m as f64).collect();
                build_factor(&h, &p, rho.at(m), *diagonal)
            }
            Family::SignFactor { xi, rho } => build_sign_factor(&xi.signs(m)?, rho.at(m)),
            Family::SampleCorr { n, seed, resample } => {
                let index = if *resample { replication } else { 0 };
                let mut rng = RngStream::new(*seed, index).rng();
                build_sample_corr(m, *n, &mut rng)
            }
            Family::Dense { rows } => {
                let g = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
                CorrelationStructure::from_dense(g)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_unit_diag_psd(c: &CorrelationStructure) {
        let g = c.to_dense(DEFAULT_DENSE_CAP).unwrap();
        for i in 0..c.m() {
            assert!((g[(i, i)] - 1.0).abs() <= 1e-12);
            for j in 0..c.m() {
                assert_eq!(g[(i, j)], g[(j, i)]);
            }
        }
        assert!(smallest_eigenvalue(&g) >= -1e-8);
    }

    #[test]
    fn equi_identity_and_boundary() {
        let c = build_equi(3, 0.0).unwrap();
        assert_eq!(c.to_dense(10).unwrap(), DMatrix::identity(3, 3));
        let c = build_equi(3, -0.5).unwrap();
        assert!(matches!(c.representation(), Representation::Dense(_)));
        let g = c.to_dense(10).unwrap();
        assert_eq!(g[(0, 1)], -0.5);
        assert!(smallest_eigenvalue(&g).abs() < 1e-12);
        assert_unit_diag_psd(&c);
        assert!(build_equi(3, -0.6).is_err());
        assert!(build_equi(3, 1.1).is_err());
    }

    #[test]
    fn equi_low_rank_dense_form() {
        let c = build_equi(3, 0.5).unwrap();
        match c.representation() {
            Representation::DiagPlusLowRank { a, loadings } => {
                assert_eq!(*a, 0.5);
                assert_eq!(loadings.ncols(), 1);
            }
            _ => panic!("expected low-rank form"),
        }
        let g = c.to_dense(10).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[1., 0.5, 0.5, 0.5, 1., 0.5, 0.5, 0.5, 1.]);
        assert!((g - want).amax() < 1e-15);
    }

    #[test]
    fn alternate_entries() {
        let g = build_alternate(2, 0.3).unwrap().to_dense(10).unwrap();
        assert!((g[(0, 1)] + 0.3).abs() < 1e-15);
        let g = build_alternate(4, 0.1).unwrap().to_dense(10).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    assert!((g[(i, j)] - 0.1 * sign).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn long_range_rows_and_validation() {
        assert_eq!(long_range_row(3, 1.0), vec![1.0, 1.0, 0.5]);
        // [[1,1],[1,1]] is singular but PSD
        let c = build_long_range(2, 0.5).unwrap();
        assert!(c.min_eigenvalue().unwrap().abs() < 1e-12);
        match build_long_range(3, 1.0) {
            Err(Error::NotPsd { min_eigenvalue: Some(v) }) => assert!(v < -0.1),
            other => panic!("expected NotPsd, got {other:?}"),
        }
        let unchecked = CorrelationStructure::toeplitz_unchecked(long_range_row(3, 1.0)).unwrap();
        let g = unchecked.to_dense(10).unwrap();
        assert_eq!(g[(0, 2)], 0.5);
        assert_eq!(g[(2, 1)], 1.0);
    }

    #[test]
    fn weak_range_is_psd() {
        let c = build_weak_range(200, 2.0, 0.1).unwrap();
        assert_unit_diag_psd(&c);
        assert_eq!(build_weak_range(10, 0.5, 0.0).unwrap(), CorrelationStructure::identity(10));
        assert!(build_weak_range(10, 0.5, 1.5).is_err());
    }

    #[test]
    fn durbin_agrees_with_eigen_on_small_rows() {
        for &(d, rho) in &[(0.3, 0.5), (0.1, 0.9), (1.5, 0.99), (0.05, 1.0)] {
            let row = weak_range_row(60, d, rho);
            let g = DMatrix::from_fn(60, 60, |i, j| row[i.abs_diff(j)]);
            let min = smallest_eigenvalue(&g);
            let res = CorrelationStructure::from_toeplitz_row(row);
            assert_eq!(res.is_ok(), min >= PSD_TOLERANCE, "d={d} rho={rho} min={min}");
        }
    }

    #[test]
    fn factor_reproduces_equi() {
        let m = 6;
        let p = DMatrix::from_element(m, 1, 1.0 / (m as f64).sqrt());
        let f = build_factor(&[m as f64], &p, 0.3, DiagonalMode::Strict).unwrap();
        let e = build_equi(m, 0.3).unwrap();
        let diff = (f.to_dense(100).unwrap() - e.to_dense(100).unwrap()).amax();
        assert!(diff < 1e-14);
    }

    #[test]
    fn factor_rejects_bad_inputs() {
        let m = 8;
        let p = DMatrix::from_element(m, 1, 1.0 / (m as f64).sqrt());
        // weights not summing to m
        assert!(build_factor(&[4.0], &p, 0.3, DiagonalMode::Strict).is_err());
        let q = DMatrix::from_element(m, 1, 1.0);
        assert!(build_factor(&[m as f64], &q, 0.3, DiagonalMode::Strict).is_err());
        assert!(build_factor(&[m as f64], &p, 1.3, DiagonalMode::Strict).is_err());
        // 1 - rho + rho h < 0 for rho = -1, h = 8
        assert!(build_factor(&[m as f64], &p, -1.0, DiagonalMode::Strict).is_err());
    }

    #[test]
    fn reference_three_factor_loadings_are_orthonormal() {
        for m in [20usize, 40, 5000] {
            let spec = ModelSpec::three_factor_reference(m, 10.0);
            let Family::Factor { loadings, .. } = &spec.family else { unreachable!() };
            let cols: Vec<Vec<f64>> = loadings.iter().map(|l| l.column(m).unwrap()).collect();
            for a in 0..3 {
                for b in 0..3 {
                    let dot: f64 = cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-12);
                }
            }
            let c = spec.build().unwrap();
            assert_eq!(c.m(), m);
            if m <= 40 {
                assert_unit_diag_psd(&c);
            }
        }
    }

    #[test]
    fn sign_factor_specializations() {
        let m = 5;
        let a = build_sign_factor(&vec![1.0; m], 0.2).unwrap();
        let b = build_equi(m, 0.2).unwrap();
        assert_eq!(a.to_dense(9).unwrap(), b.to_dense(9).unwrap());
        let a = build_sign_factor(&alternating_signs(m), 0.2).unwrap();
        let b = build_alternate(m, 0.2).unwrap();
        assert_eq!(a.to_dense(9).unwrap(), b.to_dense(9).unwrap());
        assert!(build_sign_factor(&[1.0, 0.5], 0.1).is_err());
    }

    #[test]
    fn sample_corr_is_exact_correlation() {
        let mut rng = RngStream::new(3, 0).rng();
        let c = build_sample_corr(12, 40, &mut rng).unwrap();
        let g = c.to_dense(100).unwrap();
        for i in 0..12 {
            assert_eq!(g[(i, i)], 1.0);
            for j in 0..12 {
                assert_eq!(g[(i, j)], g[(j, i)]);
            }
        }
        assert!(smallest_eigenvalue(&g) > -1e-10);
        assert!(build_sample_corr(3, 1, &mut rng).is_err());
        let c = build_sample_corr(8, 5, &mut rng).unwrap();
        assert_eq!(c.to_dense(100).unwrap()[(3, 3)], 1.0);
    }

    #[test]
    fn sample_corr_entry_variance() {
        // off-diagonal sample correlations have variance close to 1/n
        let (m, n, draws) = (6, 50, 4000);
        for (k, n) in [(0u64, n), (1, 4usize)] {
            let mut rng = RngStream::new(17, k).rng();
            let mut acc = 0.0;
            for _ in 0..draws {
                let g = build_sample_corr(m, n, &mut rng).unwrap().to_dense(100).unwrap();
                acc += g[(0, 1)].powi(2) + g[(2, 5)].powi(2);
            }
            let v = acc / (2 * draws) as f64;
            // exact: E r^2 = 1/n for independent normals without centering
            assert!((v * n as f64 - 1.0).abs() < 0.08, "n={n}: {v}");
        }
    }

    #[test]
    fn dense_cap_and_round_trip() {
        let c = build_equi(5, 0.1).unwrap();
        assert!(matches!(c.to_dense(4), Err(Error::DenseCapExceeded { m: 5, cap: 4 })));
        let g = c.to_dense(5).unwrap();
        let d = CorrelationStructure::from_dense(g.clone()).unwrap();
        assert_eq!(d.to_dense(5).unwrap(), g);
    }

    #[test]
    fn model_spec_json() {
        let spec: ModelSpec =
            serde_json::from_str(r#"{"family":"equi","m":11,"rho":0.1}"#).unwrap();
        assert_eq!(spec.family, Family::Equi { rho: RhoSchedule::Fixed(0.1) });
        let spec: ModelSpec = serde_json::from_str(
            r#"{"family":"equi","m":1000,"rho":{"coef":1.0,"exponent":-0.6666666666666666}}"#,
        )
        .unwrap();
        assert!((spec.rho().unwrap() - 1000f64.powf(-2.0 / 3.0)).abs() < 1e-15);
        let spec: ModelSpec =
            serde_json::from_str(r#"{"family":"weak_range","m":50,"D":0.5,"rho":{"m_gamma":2}}"#)
                .unwrap();
        assert!(matches!(spec.family, Family::WeakRange { .. }));
        let back: ModelSpec =
            serde_json::from_str(&serde_json::to_string(&ModelSpec::three_factor_reference(8, 10.0)).unwrap())
                .unwrap();
        assert_eq!(back, ModelSpec::three_factor_reference(8, 10.0));
        let err = serde_json::from_str::<ModelSpec>(r#"{"m":3,"rho":0.1}"#).unwrap_err();
        assert!(err.to_string().contains("family"));
    }
}
