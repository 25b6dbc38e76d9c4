//! Exact enumeration over `{-1, +1}^n`.
//!
//! Configurations are visited in reflected Gray-code order so consecutive
//! configurations differ in one spin and the energy and local fields update in
//! `O(n)`. The sequence is cut into a fixed number of contiguous blocks (a
//! function of `n` only); blocks run on the rayon pool and their partial
//! accumulators are combined in block order, so results do not depend on the
//! number of worker threads.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{IsingModel, SpinConfig};
use crate::rng;

pub const DEFAULT_ENUMERATION_CAP: usize = 24;
pub const DEFAULT_MERGE_TOL: f64 = 1e-9;
const MAX_BLOCK_BITS: usize = 8;
const UNIT_NORM_TOL: f64 = 1e-12;

/// A unit vector `θ` defining the projection `W = θᵀX`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionVector(Vec<f64>);

impl DirectionVector {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if let Some(pos) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("theta[{pos}]")));
        }
        let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::NotUnitVector(norm));
        }
        Ok(DirectionVector(theta))
    }

    /// Rescale an arbitrary nonzero vector to unit length.
    pub fn normalized(v: Vec<f64>) -> Result<Self> {
        let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::OutOfRange(
                "direction must be a finite nonzero vector".into(),
            ));
        }
        DirectionVector::new(v.into_iter().map(|t| t / norm).collect())
    }

    /// `θ_i = 1/√n`.
    pub fn uniform(n: usize) -> Self {
        DirectionVector(vec![1.0 / (n as f64).sqrt(); n])
    }

    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        DirectionVector(v)
    }

    pub fn negated(&self) -> Self {
        DirectionVector(self.0.iter().map(|t| -t).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn project(&self, spins: &[i8]) -> f64 {
        self.0.iter().zip(spins).map(|(t, &x)| t * x as f64).sum()
    }
}

/// Exact moments of a model along a direction `θ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSummary {
    /// `E X_i`.
    pub mean: Vec<f64>,
    /// `B_ij = Cov(X_i, X_j)`.
    pub cov: Vec<Vec<f64>>,
    /// `v_i = Σ_j θ_j B_ij = Cov(X_i, θᵀX)`.
    pub v: Vec<f64>,
    /// `M_ik = Σ_l θ_l B_ilk`, the third central moment contracted with `θ`.
    pub m: Vec<Vec<f64>>,
    pub mu_n: f64,
    pub sigma2_n: f64,
    pub log_partition: f64,
    /// `E X_i X_j`.
    pub raw_pair: Vec<Vec<f64>>,
    /// `E[X_i X_k θᵀX]`.
    pub raw_triple: Vec<Vec<f64>>,
}

/// Law of `θᵀX` as a sorted list of `(value, probability)` atoms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionPmf {
    atoms: Vec<(f64, f64)>,
}

impl ProjectionPmf {
    /// Validates sortedness, positivity and normalization (to `1e-12`).
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Degenerate("empty pmf".into()));
        }
        if atoms.iter().any(|&(v, p)| !v.is_finite() || !(p > 0.0)) {
            return Err(Error::OutOfRange(
                "atoms need finite values and positive mass".into(),
            ));
        }
        if atoms.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::OutOfRange(
                "atom values must be strictly increasing".into(),
            ));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::OutOfRange(format!("probabilities sum to {total}")));
        }
        Ok(ProjectionPmf { atoms })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(v, p)| v * p).sum()
    }

    pub fn variance(&self) -> f64 {
        self.central_moment(2)
    }

    pub fn central_moment(&self, k: i32) -> f64 {
        let mu = self.mean();
        self.atoms.iter().map(|&(v, p)| p * (v - mu).powi(k)).sum()
    }
}

/// Enumeration driver with a configurable size cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactEngine {
    cap: usize,
}

impl Default for ExactEngine {
    fn default() -> Self {
        ExactEngine {
            cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

/// State handed to a visitor for each enumerated configuration.
struct Visit<'a> {
    spins: &'a [i8],
    energy: f64,
}

fn block_layout(n: usize) -> (usize, u64) {
    let block_bits = MAX_BLOCK_BITS.min(n / 2);
    (1usize << block_bits, 1u64 << (n - block_bits))
}

/// Runs `visit` over every configuration, one accumulator per block, and
/// returns the accumulators in block order.
fn enumerate<A, I, F>(model: &IsingModel, init: I, visit: F) -> Vec<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &Visit<'_>) + Sync,
{
    let n = model.n();
    let (blocks, block_len) = block_layout(n);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = init();
            let start = b as u64 * block_len;
            let bits = start ^ (start >> 1);
            let mut spins: Vec<i8> = (0..n)
                .map(|i| if bits >> i & 1 == 1 { 1 } else { -1 })
                .collect();
            let mut fields: Vec<f64> = (0..n).map(|i| model.local_field(&spins, i)).collect();
            let mut energy = model.energy(&spins);
            visit(
                &mut acc,
                &Visit {
                    spins: &spins,
                    energy,
                },
            );
            for m in (start + 1)..(start + block_len) {
                let i = m.trailing_zeros() as usize;
                let old = spins[i] as f64;
                energy -= 2.0 * old * fields[i];
                spins[i] = -spins[i];
                let delta = -2.0 * old;
                for (f, &a) in fields.iter_mut().zip(model.row(i)) {
                    *f += delta * a;
                }
                visit(
                    &mut acc,
                    &Visit {
                        spins: &spins,
                        energy,
                    },
                );
            }
            acc
        })
        .collect()
}

struct MomentAcc {
    z: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
    t1: Vec<f64>,
    ss: f64,
    ss2: f64,
}

impl MomentAcc {
    fn new(n: usize) -> Self {
        MomentAcc {
            z: 0.0,
            s1: vec![0.0; n],
            s2: vec![0.0; n * n],
            s3: vec![0.0; n * n],
            t1: vec![0.0; n],
            ss: 0.0,
            ss2: 0.0,
        }
    }

    fn merge(&mut self, other: &MomentAcc) {
        self.z += other.z;
        self.ss += other.ss;
        self.ss2 += other.ss2;
        for (a, b) in self.s1.iter_mut().zip(&other.s1) {
            *a += b;
        }
        for (a, b) in self.t1.iter_mut().zip(&other.t1) {
            *a += b;
        }
        for (a, b) in self.s2.iter_mut().zip(&other.s2) {
            *a += b;
        }
        for (a, b) in self.s3.iter_mut().zip(&other.s3) {
            *a += b;
        }
    }
}

impl ExactEngine {
    pub fn with_cap(cap: usize) -> Self {
        ExactEngine { cap }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    fn check(&self, model: &IsingModel) -> Result<()> {
        if model.n() > self.cap || model.n() > 62 {
            return Err(Error::CapExceeded {
                n: model.n(),
                cap: self.cap.min(62),
            });
        }
        Ok(())
    }

    fn check_theta(model: &IsingModel, theta: &DirectionVector) -> Result<()> {
        if theta.len() != model.n() {
            return Err(Error::Dimension(format!(
                "theta has length {} but model has {} spins",
                theta.len(),
                model.n()
            )));
        }
        Ok(())
    }

    fn max_energy(&self, model: &IsingModel) -> f64 {
        enumerate(
            model,
            || f64::NEG_INFINITY,
            |acc, v| *acc = acc.max(v.energy),
        )
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `log Σ_x exp(½xᵀAx + hᵀx)` by streaming log-sum-exp.
    pub fn log_partition(&self, model: &IsingModel) -> Result<f64> {
        self.check(model)?;
        let parts = enumerate(
            model,
            || (f64::NEG_INFINITY, 0.0f64),
            |(max, sum), v| {
                if v.energy > *max {
                    *sum = *sum * (*max - v.energy).exp() + 1.0;
                    *max = v.energy;
                } else {
                    *sum += (v.energy - *max).exp();
                }
            },
        );
        let max = parts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = parts.iter().map(|&(m, s)| s * (m - max).exp()).sum();
        Ok(max + sum.ln())
    }

    /// Means, covariances and `θ`-contracted third central moments.
    pub fn moments(&self, model: &IsingModel, theta: &DirectionVector) -> Result<MomentSummary> {
        self.check(model)?;
        Self::check_theta(model, theta)?;
        let n = model.n();
        let umax = self.max_energy(model);
        let th = theta.as_slice();
        let parts = enumerate(
            model,
            || (MomentAcc::new(n), vec![0.0; n]),
            |(acc, wx), v| {
                let w = (v.energy - umax).exp();
                let s: f64 = th.iter().zip(v.spins).map(|(t, &x)| t * x as f64).sum();
                acc.z += w;
                acc.ss += w * s;
                acc.ss2 += w * s * s;
                for i in 0..n {
                    wx[i] = if v.spins[i] > 0 { w } else { -w };
                }
                for i in 0..n {
                    let wxi = wx[i];
                    let wxis = wxi * s;
                    acc.s1[i] += wxi;
                    acc.t1[i] += wxis;
                    let row2 = &mut acc.s2[i * n..(i + 1) * n];
                    for k in i..n {
                        row2[k] += if v.spins[k] > 0 { wxi } else { -wxi };
                    }
                    let row3 = &mut acc.s3[i * n..(i + 1) * n];
                    for k in i..n {
                        row3[k] += if v.spins[k] > 0 { wxis } else { -wxis };
                    }
                }
            },
        );
        let mut total = MomentAcc::new(n);
        for (p, _) in &parts {
            total.merge(p);
        }
        let z = total.z;
        let mean: Vec<f64> = total.s1.iter().map(|s| s / z).collect();
        let t: Vec<f64> = total.t1.iter().map(|s| s / z).collect();
        let mu = total.ss / z;
        let mut raw_pair = vec![vec![0.0; n]; n];
        let mut raw_triple = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in i..n {
                let p = total.s2[i * n + k] / z;
                let r = total.s3[i * n + k] / z;
                raw_pair[i][k] = p;
                raw_pair[k][i] = p;
                raw_triple[i][k] = r;
                raw_triple[k][i] = r;
            }
        }
        let mut cov = vec![vec![0.0; n]; n];
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in i..n {
                let c = raw_pair[i][k] - mean[i] * mean[k];
                let b = raw_triple[i][k] - mu * raw_pair[i][k] - mean[k] * t[i] - mean[i] * t[k]
                    + 2.0 * mean[i] * mean[k] * mu;
                cov[i][k] = c;
                cov[k][i] = c;
                m[i][k] = b;
                m[k][i] = b;
            }
        }
        let v: Vec<f64> = cov
            .iter()
            .map(|row| row.iter().zip(th).map(|(c, t)| c * t).sum())
            .collect();
        Ok(MomentSummary {
            mean,
            cov,
            v,
            m,
            mu_n: mu,
            sigma2_n: total.ss2 / z - mu * mu,
            log_partition: umax + z.ln(),
            raw_pair,
            raw_triple,
        })
    }

    /// Mean vector and row-major covariance matrix only. The covariance is
    /// accumulated about the mean in a second pass, so it stays accurate
    /// when the law is close to a point mass.
    pub fn covariance(&self, model: &IsingModel) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(model)?;
        let n = model.n();
        let umax = self.max_energy(model);
        let parts = enumerate(
            model,
            || (0.0f64, vec![0.0; n]),
            |(z, s1), v| {
                let w = (v.energy - umax).exp();
                *z += w;
                for (s, &x) in s1.iter_mut().zip(v.spins) {
                    *s += if x > 0 { w } else { -w };
                }
            },
        );
        let mut z = 0.0;
        let mut s1 = vec![0.0; n];
        for (pz, p1) in &parts {
            z += pz;
            s1.iter_mut().zip(p1).for_each(|(a, b)| *a += b);
        }
        let mean: Vec<f64> = s1.iter().map(|s| s / z).collect();
        let parts = enumerate(
            model,
            || (vec![0.0; n], vec![0.0; n * n]),
            |(dx, s2), v| {
                let w = (v.energy - umax).exp();
                for ((d, &x), m) in dx.iter_mut().zip(v.spins).zip(&mean) {
                    *d = x as f64 - m;
                }
                for i in 0..n {
                    let wdi = w * dx[i];
                    let row = &mut s2[i * n..(i + 1) * n];
                    for k in i..n {
                        row[k] += wdi * dx[k];
                    }
                }
            },
        );
        let mut s2 = vec![0.0; n * n];
        for (_, p2) in &parts {
            s2.iter_mut().zip(p2).for_each(|(a, b)| *a += b);
        }
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            for k in i..n {
                let c = s2[i * n + k] / z;
                cov[i * n + k] = c;
                cov[k * n + i] = c;
            }
        }
        Ok((mean, cov))
    }

    /// Probability of every configuration, indexed by its bit pattern.
    pub fn joint_pmf(&self, model: &IsingModel) -> Result<Vec<f64>> {
        self.check(model)?;
        let n = model.n();
        let logz = self.log_partition(model)?;
        let mut pmf = vec![0.0; 1usize << n];
        for bits in 0..(1u64 << n) {
            let x = SpinConfig::from_bits(bits, n);
            pmf[bits as usize] = (model.energy(x.as_slice()) - logz).exp();
        }
        Ok(pmf)
    }

    /// Exact law of `θᵀX`; values closer than `merge_tol` share an atom.
    pub fn exact_pmf_of_projection(
        &self,
        model: &IsingModel,
        theta: &DirectionVector,
        merge_tol: f64,
    ) -> Result<ProjectionPmf> {
        self.check(model)?;
        Self::check_theta(model, theta)?;
        if !(merge_tol >= 0.0) {
            return Err(Error::OutOfRange(format!("merge tolerance {merge_tol}")));
        }
        let umax = self.max_energy(model);
        let th = theta.as_slice();
        let parts = enumerate(model, Vec::new, |acc: &mut Vec<(f64, f64)>, v| {
            let s: f64 = th.iter().zip(v.spins).map(|(t, &x)| t * x as f64).sum();
            acc.push((s, (v.energy - umax).exp()));
        });
        let merged: Vec<(f64, f64)> = parts
            .into_par_iter()
            .map(|block| merge_atoms(block, merge_tol))
            .flatten()
            .collect();
        let merged = merge_atoms(merged, merge_tol);
        let total: f64 = merged.iter().map(|a| a.1).sum();
        let atoms = merged
            .into_iter()
            .map(|(v, w)| (v, w / total))
            .filter(|&(_, p)| p > 0.0)
            .collect();
        Ok(ProjectionPmf { atoms })
    }

    /// Inverse-cdf sampler over the enumerated configurations.
    pub fn sampler(&self, model: &IsingModel) -> Result<ExactSampler> {
        self.check(model)?;
        let umax = self.max_energy(model);
        let parts = enumerate(model, Vec::new, |acc: &mut Vec<f64>, v| {
            acc.push((v.energy - umax).exp());
        });
        let mut cumulative = Vec::with_capacity(1usize << model.n());
        let mut running = 0.0;
        for w in parts.into_iter().flatten() {
            running += w;
            cumulative.push(running);
        }
        Ok(ExactSampler {
            n: model.n(),
            cumulative,
        })
    }

    /// `count` i.i.d. draws from the model, reproducible from `seed`.
    pub fn sample_exact(
        &self,
        model: &IsingModel,
        count: usize,
        seed: u64,
    ) -> Result<Vec<SpinConfig>> {
        let sampler = self.sampler(model)?;
        let mut rng = rng::stream(seed, 0);
        Ok((0..count).map(|_| sampler.sample(&mut rng)).collect())
    }
}

/// Sort by value and merge runs whose consecutive gaps are within `tol`.
/// A merged atom sits at the probability-weighted mean of its members.
fn merge_atoms(mut atoms: Vec<(f64, f64)>, tol: f64) -> Vec<(f64, f64)> {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    let mut moment = 0.0;
    for (v, w) in atoms {
        match out.last_mut() {
            Some(atom) if v - last <= tol => {
                moment += v * w;
                atom.1 += w;
                if atom.1 > 0.0 {
                    atom.0 = moment / atom.1;
                }
            }
            _ => {
                out.push((v, w));
                moment = v * w;
            }
        }
        last = v;
    }
    out
}

/// Draws configurations by inverting the cumulative weight over Gray-code order.
#[derive(Debug, Clone)]
pub struct ExactSampler {
    n: usize,
    cumulative: Vec<f64>,
}

impl ExactSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SpinConfig {
        let total = *self.cumulative.last().expect("nonempty");
        let u = rng.random::<f64>() * total;
        let m = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1) as u64;
        SpinConfig::from_bits(m ^ (m >> 1), self.n)
    }
}

/// Reduced model on the unpinned sites (kept in ascending order).
///
/// Pinned spins enter the remaining sites as the extra field
/// `Σ_{i pinned} A_ji s_i`.
pub fn clamp(model: &IsingModel, pins: &[(usize, i8)]) -> Result<IsingModel> {
    let n = model.n();
    let mut pinned = vec![None; n];
    for &(site, spin) in pins {
        if site >= n {
            return Err(Error::SiteOutOfRange { index: site, n });
        }
        if spin != 1 && spin != -1 {
            return Err(Error::InvalidPins(format!("spin {spin} at site {site}")));
        }
        if pinned[site].replace(spin).is_some() {
            return Err(Error::InvalidPins(format!("site {site} pinned twice")));
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| pinned[i].is_none()).collect();
    if free.is_empty() {
        return Err(Error::InvalidPins("every site is pinned".into()));
    }
    let m = free.len();
    let mut a = vec![0.0; m * m];
    let mut h = vec![0.0; m];
    for (p, &j) in free.iter().enumerate() {
        h[p] = model.field()[j]
            + pins
                .iter()
                .map(|&(i, s)| model.coupling(j, i) * s as f64)
                .sum::<f64>();
        for (q, &k) in free.iter().enumerate() {
            a[p * m + q] = model.coupling(j, k);
        }
    }
    Ok(IsingModel::from_canonical(m, a, h))
}

/// Sites left free by `pins`, ascending.
pub fn free_sites(n: usize, pins: &[(usize, i8)]) -> Vec<usize> {
    (0..n).filter(|i| !pins.iter().any(|p| p.0 == *i)).collect()
}

pub fn log_partition(model: &IsingModel) -> Result<f64> {
    ExactEngine::default().log_partition(model)
}

pub fn moments(model: &IsingModel, theta: &DirectionVector) -> Result<MomentSummary> {
    ExactEngine::default().moments(model, theta)
}

pub fn exact_pmf_of_projection(
    model: &IsingModel,
    theta: &DirectionVector,
    merge_tol: f64,
) -> Result<ProjectionPmf> {
    ExactEngine::default().exact_pmf_of_projection(model, theta, merge_tol)
}

pub fn sample_exact(model: &IsingModel, count: usize, seed: u64) -> Result<Vec<SpinConfig>> {
    ExactEngine::default().sample_exact(model, count, seed)
}
