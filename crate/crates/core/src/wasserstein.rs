//! 2-Wasserstein distances between laws on the real line.
//!
//! On the line the optimal coupling is the quantile coupling, so
//! `W₂²(P, N(m, s²)) = ∫₀¹ (F_P⁻¹(u) − m − sΦ⁻¹(u))² du`. For a discrete `P`
//! this splits into one closed-form integral per atom.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::exact::ProjectionPmf;

/// Quantile arguments are clamped to `[U_CLAMP, 1 − U_CLAMP]`.
pub const U_CLAMP: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalParams {
    pub mean: f64,
    pub sd: f64,
}

impl NormalParams {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() || !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::OutOfRange(format!(
                "normal with mean {mean} and sd {sd}"
            )));
        }
        Ok(NormalParams { mean, sd })
    }

    pub fn standard() -> Self {
        NormalParams { mean: 0.0, sd: 1.0 }
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `Φ⁻¹(u)` for `0 < u < 1`.
pub fn normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::OutOfRange(format!(
            "quantile argument {u} outside (0, 1)"
        )));
    }
    Ok(quantile(u))
}

fn quantile(u: f64) -> f64 {
    if u > 0.5 {
        return -quantile(1.0 - u);
    }
    let x = acklam(u);
    // One Halley step; the cdf is evaluated through erfc so the lower
    // tail keeps full relative accuracy.
    let e = normal_cdf(x) - u;
    let step = e / normal_pdf(x);
    x - step / (1.0 + 0.5 * x * step)
}

/// Acklam's rational approximation (relative error about 1e-9), for `u ≤ ½`.
fn acklam(u: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.38357751867269e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    if u < 0.02425 {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Antiderivatives `(∫Φ⁻¹, ∫(Φ⁻¹)²)` at `u`, with their exact limits at 0 and 1.
pub fn quantile_antiderivatives(u: f64) -> (f64, f64) {
    if u <= 0.0 {
        return (0.0, 0.0);
    }
    if u >= 1.0 {
        return (0.0, 1.0);
    }
    let q = quantile(u.clamp(U_CLAMP, 1.0 - U_CLAMP));
    let phi = normal_pdf(q);
    (-phi, u - q * phi)
}

fn w2_atoms(atoms: impl Iterator<Item = (f64, f64)>, reference: NormalParams) -> f64 {
    let NormalParams { mean, sd } = reference;
    let mut lo = 0.0;
    let mut prev = quantile_antiderivatives(0.0);
    let mut total = 0.0;
    for (value, p) in atoms {
        let hi = (lo + p).min(1.0);
        let next = quantile_antiderivatives(hi);
        let c = value - mean;
        total += c * c * (hi - lo) - 2.0 * c * sd * (next.0 - prev.0) + sd * sd * (next.1 - prev.1);
        lo = hi;
        prev = next;
    }
    total.max(0.0).sqrt()
}

pub fn w2_discrete_vs_normal(pmf: &ProjectionPmf, reference: NormalParams) -> f64 {
    w2_atoms(pmf.atoms().iter().copied(), reference)
}

pub fn w2_normal_normal(p: NormalParams, q: NormalParams) -> f64 {
    (p.mean - q.mean).hypot(p.sd - q.sd)
}

/// Distance from the empirical law of `samples` (any order) to `reference`.
pub fn w2_empirical(samples: &[f64], reference: NormalParams) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::OutOfRange("need at least two samples".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sample value".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let weight = 1.0 / sorted.len() as f64;
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    for v in sorted {
        match atoms.last_mut() {
            Some(last) if last.0 == v => last.1 += weight,
            _ => atoms.push((v, weight)),
        }
    }
    Ok(w2_atoms(atoms.into_iter(), reference))
}

/// `√(2 − 2√(2/π))`, the distance from a fair ±1 coin to `N(0, 1)`.
pub fn coin_reference_value() -> f64 {
    (2.0 - 2.0 * (2.0 / std::f64::consts::PI).sqrt()).sqrt()
}
