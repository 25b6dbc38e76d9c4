//! Ising model representation and single-model diagnostics.
//!
//! The law on `{-1, +1}^n` is proportional to `exp(½ xᵀAx + hᵀx)`. Adding a
//! multiple of the identity to `A` leaves the law unchanged, so models are
//! stored with a zero diagonal; the diagonal that was supplied is kept for
//! auditing only.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;

/// Absolute tolerance used when checking that a raw matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Largest dimension handled by the dense eigensolver in [`spectral_report`].
pub const DENSE_EIGEN_MAX: usize = 64;

const POWER_MAX_ITERATIONS: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct IsingModel {
    n: usize,
    /// Row-major, symmetric, zero diagonal.
    a: Vec<f64>,
    h: Vec<f64>,
    discarded_diagonal: Vec<f64>,
    neighbors: Vec<Vec<(usize, f64)>>,
    label: Option<String>,
}

/// Canonicalize a raw interaction matrix and field into a model.
///
/// The matrix must be square, match `h` in dimension, contain only finite
/// values, and be symmetric to within [`SYMMETRY_TOL`]. The stored matrix is
/// `(A + Aᵀ)/2` with its diagonal removed.
pub fn validate_model(a_raw: &[Vec<f64>], h: &[f64]) -> Result<IsingModel> {
    let n = h.len();
    if n == 0 {
        return Err(Error::Dimension("model must have at least one spin".into()));
    }
    if a_raw.len() != n {
        return Err(Error::Dimension(format!(
            "A has {} rows but h has length {n}",
            a_raw.len()
        )));
    }
    for (i, row) in a_raw.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Dimension(format!(
                "row {i} of A has length {} (expected {n})",
                row.len()
            )));
        }
    }
    let flat: Vec<f64> = a_raw.iter().flatten().copied().collect();
    validate_dense(n, &flat, h)
}

/// Same as [`validate_model`] for a row-major `n × n` slice.
pub fn validate_dense(n: usize, a_raw: &[f64], h: &[f64]) -> Result<IsingModel> {
    if n == 0 || h.len() != n || a_raw.len() != n * n {
        return Err(Error::Dimension(format!(
            "expected {n}×{n} matrix and length-{n} field, got {} entries and length {}",
            a_raw.len(),
            h.len()
        )));
    }
    if let Some(pos) = a_raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("A[{}][{}]", pos / n, pos % n)));
    }
    if let Some(pos) = h.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("h[{pos}]")));
    }
    let mut a = vec![0.0; n * n];
    let mut diag = vec![0.0; n];
    for i in 0..n {
        diag[i] = a_raw[i * n + i];
        for j in (i + 1)..n {
            let (x, y) = (a_raw[i * n + j], a_raw[j * n + i]);
            let diff = (x - y).abs();
            if diff > SYMMETRY_TOL {
                return Err(Error::Asymmetric { i, j, diff });
            }
            let s = 0.5 * (x + y);
            a[i * n + j] = s;
            a[j * n + i] = s;
        }
    }
    let mut model = IsingModel::from_canonical(n, a, h.to_vec());
    model.discarded_diagonal = diag;
    Ok(model)
}

impl IsingModel {
    /// Build from an already symmetric, zero-diagonal row-major matrix.
    pub(crate) fn from_canonical(n: usize, a: Vec<f64>, h: Vec<f64>) -> Self {
        debug_assert_eq!(a.len(), n * n);
        debug_assert_eq!(h.len(), n);
        let neighbors = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && a[i * n + j] != 0.0)
                    .map(|j| (j, a[i * n + j]))
                    .collect()
            })
            .collect();
        IsingModel {
            n,
            a,
            h,
            discarded_diagonal: vec![0.0; n],
            neighbors,
            label: None,
        }
    }

    /// Independent spins with the given field.
    pub fn product(h: Vec<f64>) -> Result<Self> {
        let n = h.len();
        validate_dense(n, &vec![0.0; n * n], &h)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    /// Row `i` of the interaction matrix.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    /// Row-major interaction matrix.
    pub fn interaction(&self) -> &[f64] {
        &self.a
    }

    pub fn interaction_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn field(&self) -> &[f64] {
        &self.h
    }

    /// Nonzero off-diagonal couplings of site `i`.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn discarded_diagonal(&self) -> &[f64] {
        &self.discarded_diagonal
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Same interactions with a different external field.
    pub fn with_field(&self, h: Vec<f64>) -> Result<Self> {
        if h.len() != self.n {
            return Err(Error::Dimension(format!(
                "field has length {} but model has {} spins",
                h.len(),
                self.n
            )));
        }
        if let Some(pos) = h.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("h[{pos}]")));
        }
        Ok(IsingModel { h, ..self.clone() })
    }

    pub fn is_product(&self) -> bool {
        self.a.iter().all(|&v| v == 0.0)
    }

    pub fn is_ferromagnetic(&self) -> bool {
        self.a.iter().all(|&v| v >= 0.0)
    }

    /// `h_i + Σ_j A_ij x_j`.
    #[inline]
    pub fn local_field(&self, spins: &[i8], i: usize) -> f64 {
        self.h[i]
            + self.neighbors[i]
                .iter()
                .map(|&(j, a)| a * spins[j] as f64)
                .sum::<f64>()
    }

    /// `½ xᵀAx + hᵀx`.
    pub fn energy(&self, spins: &[i8]) -> f64 {
        let mut u = 0.0;
        for i in 0..self.n {
            let xi = spins[i] as f64;
            u += self.h[i] * xi;
            for &(j, a) in &self.neighbors[i] {
                if j > i {
                    u += a * xi * spins[j] as f64;
                }
            }
        }
        u
    }
}

/// A spin configuration in `{-1, +1}^n`.
///
/// Bit-packed indices used by the exact engine follow the convention
/// "bit `i` set ⇔ spin `i` is `+1`".
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct SpinConfig(Vec<i8>);

impl SpinConfig {
    pub fn new(values: Vec<i8>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|&v| v != 1 && v != -1) {
            return Err(Error::OutOfRange(format!(
                "spin {pos} has value {} (expected ±1)",
                values[pos]
            )));
        }
        Ok(SpinConfig(values))
    }

    pub fn all(n: usize, spin: i8) -> Self {
        assert!(spin == 1 || spin == -1);
        SpinConfig(vec![spin; n])
    }

    pub fn from_bits(bits: u64, n: usize) -> Self {
        SpinConfig(
            (0..n)
                .map(|i| if bits >> i & 1 == 1 { 1 } else { -1 })
                .collect(),
        )
    }

    pub fn to_bits(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 1)
            .fold(0u64, |acc, (i, _)| acc | 1 << i)
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        SpinConfig(
            (0..n)
                .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> i8 {
        self.0[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, spin: i8) {
        debug_assert!(spin == 1 || spin == -1);
        self.0[i] = spin;
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn flipped(&self) -> Self {
        SpinConfig(self.0.iter().map(|&s| -s).collect())
    }

    pub fn magnetization(&self) -> i64 {
        self.0.iter().map(|&s| s as i64).sum()
    }
}

/// Numerically stable logistic `1 / (1 + e^{-z})`.
#[inline]
pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `P(X_i = +1 | X_{~i} = x_{~i})`, i.e. `(1 + tanh L)/2` with local field `L`.
pub fn conditional_prob_plus(model: &IsingModel, config: &SpinConfig, i: usize) -> Result<f64> {
    if i >= model.n {
        return Err(Error::SiteOutOfRange {
            index: i,
            n: model.n,
        });
    }
    if config.len() != model.n {
        return Err(Error::Dimension(format!(
            "configuration has {} spins but model has {}",
            config.len(),
            model.n
        )));
    }
    Ok(logistic(2.0 * model.local_field(config.as_slice(), i)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub spread: f64,
    /// Smallest shift making `A + shift·I` positive semidefinite.
    pub psd_shift: f64,
    /// `1 - spread`; positive exactly in the high-temperature regime.
    pub high_temp_margin: f64,
    /// `1 / high_temp_margin` when the margin is positive.
    pub poincare_constant: Option<f64>,
    pub method: EigenMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenMethod {
    Dense,
    PowerIteration,
}

impl SpectralReport {
    fn from_extremes(lambda_min: f64, lambda_max: f64, method: EigenMethod) -> Self {
        let spread = lambda_max - lambda_min;
        let margin = 1.0 - spread;
        SpectralReport {
            lambda_min,
            lambda_max,
            spread,
            psd_shift: (-lambda_min).max(0.0),
            high_temp_margin: margin,
            poincare_constant: (margin > 0.0).then(|| 1.0 / margin),
            method,
        }
    }
}

/// Extremal eigenvalues of the (zero-diagonal) interaction matrix.
///
/// Dense symmetric eigendecomposition up to [`DENSE_EIGEN_MAX`] spins,
/// shifted power iteration beyond, stopping once the eigen-residual norm
/// falls below `tolerance`.
pub fn spectral_report(model: &IsingModel, tolerance: f64) -> Result<SpectralReport> {
    if model.n <= DENSE_EIGEN_MAX {
        let m = DMatrix::from_row_slice(model.n, model.n, &model.a);
        let eig = SymmetricEigen::new(m);
        let lo = eig
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let hi = eig
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(SpectralReport::from_extremes(lo, hi, EigenMethod::Dense))
    } else {
        let (lo, hi) = extremal_eigenvalues_iterative(model, tolerance, POWER_MAX_ITERATIONS)?;
        Ok(SpectralReport::from_extremes(
            lo,
            hi,
            EigenMethod::PowerIteration,
        ))
    }
}

/// `(λ_min, λ_max)` of `A` by power iteration on the Gershgorin-shifted
/// matrices `A + RI` and `RI - A`, both positive semidefinite.
pub fn extremal_eigenvalues_iterative(
    model: &IsingModel,
    tolerance: f64,
    max_iterations: usize,
) -> Result<(f64, f64)> {
    let radius = (0..model.n)
        .map(|i| {
            model
                .neighbors(i)
                .iter()
                .map(|&(_, a)| a.abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    if radius == 0.0 {
        return Ok((0.0, 0.0));
    }
    let top = shifted_power_iteration(model, radius, 1.0, tolerance, max_iterations)?;
    let bottom = shifted_power_iteration(model, radius, -1.0, tolerance, max_iterations)?;
    Ok((radius - bottom, top - radius))
}

/// Dominant eigenvalue of `shift·I + sign·A`.
fn shifted_power_iteration(
    model: &IsingModel,
    shift: f64,
    sign: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<f64> {
    let n = model.n;
    let mut start = rng::stream(0x5eed_e16e, 0);
    let mut v: Vec<f64> = (0..n).map(|_| start.random::<f64>() + 0.5).collect();
    normalize(&mut v);
    let mut w = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iterations {
        for i in 0..n {
            w[i] = shift * v[i]
                + sign
                    * model
                        .neighbors(i)
                        .iter()
                        .map(|&(j, a)| a * v[j])
                        .sum::<f64>();
        }
        let rho: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        residual = v
            .iter()
            .zip(&w)
            .map(|(vi, wi)| (wi - rho * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tolerance {
            return Ok(rho);
        }
        std::mem::swap(&mut v, &mut w);
        normalize(&mut v);
    }
    Err(Error::NoConvergence {
        iterations: max_iterations,
        residual,
    })
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DobrushinReport {
    /// `max_i Σ_{j≠i} |A_ij|`.
    pub alpha: f64,
    pub row_sums: Vec<f64>,
    pub col_sums: Vec<f64>,
    /// `tanh |A_ij|`, an upper bound on the interdependence coefficient.
    pub c_tanh: Vec<Vec<f64>>,
    /// Largest column sum of `c_tanh`.
    pub beta: f64,
    /// Largest row sum of `c_tanh`.
    pub gamma: f64,
}

pub fn dobrushin_report(model: &IsingModel) -> DobrushinReport {
    let n = model.n;
    let row_sums: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| model.coupling(i, j).abs())
                .sum()
        })
        .collect();
    let col_sums: Vec<f64> = (0..n)
        .map(|j| {
            (0..n)
                .filter(|&i| i != j)
                .map(|i| model.coupling(i, j).abs())
                .sum()
        })
        .collect();
    let c_tanh: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| model.coupling(i, j).abs().tanh()).collect())
        .collect();
    let gamma = c_tanh
        .iter()
        .map(|row| row.iter().sum::<f64>())
        .fold(0.0, f64::max);
    let beta = (0..n)
        .map(|j| c_tanh.iter().map(|row| row[j]).sum::<f64>())
        .fold(0.0, f64::max);
    DobrushinReport {
        alpha: row_sums.iter().copied().fold(0.0, f64::max),
        row_sums,
        col_sums,
        c_tanh,
        beta,
        gamma,
    }
}

/// Random model with couplings uniform in `[-coupling, coupling]` on every
/// pair and fields uniform in `[-field, field]`.
pub fn random_model<R: Rng + ?Sized>(
    n: usize,
    coupling: f64,
    field: f64,
    rng: &mut R,
) -> IsingModel {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = coupling * (2.0 * rng.random::<f64>() - 1.0);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    let h = (0..n)
        .map(|_| field * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    IsingModel::from_canonical(n, a, h)
}
