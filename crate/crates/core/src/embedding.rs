//! The Gaussian interpolant `Y_t = tY₁ + √(t(1−t))Z` with `Y₁ ~ μ`, and the
//! conditional laws it induces.
//!
//! Given `Y_t = y`, the law of `Y₁` is again an Ising model with the same
//! interaction and field `h + y/(1−t)`, so every conditional quantity below
//! is an exact enumeration on a tilted model.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{DirectionVector, ExactEngine, ExactSampler};
use crate::model::{IsingModel, SpinConfig};
use crate::rng;
use crate::stats::gauss_legendre;

/// Finite-difference step used when none is given.
pub const DEFAULT_DELTA: f64 = 1e-5;

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("t = {t} outside (0, 1)")))
    }
}

fn draw<R: Rng + ?Sized>(sampler: &ExactSampler, t: f64, rng: &mut R) -> (SpinConfig, Vec<f64>) {
    let x = sampler.sample(rng);
    let s = (t * (1.0 - t)).sqrt();
    let y = x
        .as_slice()
        .iter()
        .map(|&xi| {
            let z: f64 = rng.sample(StandardNormal);
            t * xi as f64 + s * z
        })
        .collect();
    (x, y)
}

/// One draw `(Y₁, Y_t)`, reproducible from `seed`.
pub fn sample_interpolant(model: &IsingModel, t: f64, seed: u64) -> Result<(SpinConfig, Vec<f64>)> {
    check_t(t)?;
    let sampler = ExactEngine::default().sampler(model)?;
    Ok(draw(&sampler, t, &mut rng::stream(seed, 0)))
}

/// Conditional law of `Y₁` given `Y_t = y_t`.
pub fn tilted_model(model: &IsingModel, t: f64, y_t: &[f64]) -> Result<IsingModel> {
    check_t(t)?;
    if y_t.len() != model.n() {
        return Err(Error::Dimension(
            "y_t length differs from model size".into(),
        ));
    }
    if y_t.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("y_t".into()));
    }
    let field = model
        .field()
        .iter()
        .zip(y_t)
        .map(|(h, y)| h + y / (1.0 - t))
        .collect();
    model.with_field(field)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingPoint {
    pub t: f64,
    pub y_t: Vec<f64>,
    pub tilted_field: Vec<f64>,
    /// `|θᵀΓ_t|²` with `Γ_t = Cov(Y₁ | Y_t = y_t)/(1−t)`.
    pub gamma_dir_sq: f64,
}

/// `|θᵀ Cov(Y₁ | Y_t = y_t)|² / (1−t)²`.
pub fn gamma_direction(
    model: &IsingModel,
    t: f64,
    y_t: &[f64],
    theta: &DirectionVector,
) -> Result<f64> {
    Ok(embedding_point(model, t, y_t, theta)?.gamma_dir_sq)
}

pub fn embedding_point(
    model: &IsingModel,
    t: f64,
    y_t: &[f64],
    theta: &DirectionVector,
) -> Result<EmbeddingPoint> {
    let tilted = tilted_model(model, t, y_t)?;
    let m = ExactEngine::default().moments(&tilted, theta)?;
    let norm_sq: f64 = m.v.iter().map(|v| v * v).sum();
    Ok(EmbeddingPoint {
        t,
        y_t: y_t.to_vec(),
        tilted_field: tilted.field().to_vec(),
        gamma_dir_sq: norm_sq / (1.0 - t).powi(2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeCheck {
    /// Central difference of `Cov(Y₁ᵢ, Y₁ₗ | Y_t)` in `y_{t,k}`.
    pub fd: f64,
    /// Third central moment form divided by `1−t`.
    pub formula: f64,
    /// Covariance-expansion form divided by `1−t`.
    pub expansion: f64,
    pub rel_err: f64,
}

/// Compare `∂_k Cov(Y₁ᵢ, Y₁ₗ | Y_t = y_t)` against its closed forms.
#[allow(clippy::too_many_arguments)]
pub fn derivative_identity_check(
    model: &IsingModel,
    t: f64,
    y_t: &[f64],
    i: usize,
    l: usize,
    k: usize,
    delta: f64,
) -> Result<DerivativeCheck> {
    let n = model.n();
    for site in [i, l, k] {
        if site >= n {
            return Err(Error::SiteOutOfRange { index: site, n });
        }
    }
    if !(delta > 0.0) {
        return Err(Error::OutOfRange(format!("delta = {delta}")));
    }
    let engine = ExactEngine::default();
    let cov_at = |shift: f64| -> Result<f64> {
        let mut y = y_t.to_vec();
        y[k] += shift;
        let (_, cov) = engine.covariance(&tilted_model(model, t, &y)?)?;
        Ok(cov[i * n + l])
    };
    let fd = (cov_at(delta)? - cov_at(-delta)?) / (2.0 * delta);

    let tilted = tilted_model(model, t, y_t)?;
    let m = engine.moments(&tilted, &DirectionVector::basis(n, k))?;
    let scale = 1.0 / (1.0 - t);
    let formula = scale * m.m[i][l];
    let mean = &m.mean;
    let cov_il_k = m.raw_triple[i][l] - m.raw_pair[i][l] * mean[k];
    let expansion = scale * (cov_il_k - m.cov[i][k] * mean[l] - m.cov[l][k] * mean[i]);
    Ok(DerivativeCheck {
        fd,
        formula,
        expansion,
        rel_err: (fd - formula).abs() / formula.abs().max(1e-12),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceIdentity {
    /// Quadrature estimate of `∫₀^{t_max} E|θᵀΓ_t|² dt`.
    pub integral_estimate: f64,
    pub standard_error: f64,
    /// `4(1−t_max)/t_max`, the budget for the omitted interval.
    pub tail_bound: f64,
    pub sigma2_exact: f64,
    pub discrepancy: f64,
    pub t_max: f64,
    pub quad_nodes: usize,
    pub mc_reps: usize,
    /// `(t, mean, standard error)` of the integrand at each node.
    pub nodes: Vec<(f64, f64, f64)>,
}

impl VarianceIdentity {
    /// Estimate lies in `[σ² − tail − z·SE, σ² + z·SE]`.
    pub fn within(&self, z: f64) -> bool {
        let slack = z * self.standard_error;
        self.integral_estimate >= self.sigma2_exact - self.tail_bound - slack
            && self.integral_estimate <= self.sigma2_exact + slack
    }
}

/// Gauss–Legendre quadrature of `t ↦ E|θᵀΓ_t|²` on `[0, t_max]`, each node's
/// expectation estimated from `mc_reps` exact draws of `Y_t`.
pub fn variance_identity_estimate(
    model: &IsingModel,
    theta: &DirectionVector,
    quad_nodes: usize,
    mc_reps: usize,
    t_max: f64,
    seed: u64,
) -> Result<VarianceIdentity> {
    check_t(t_max)?;
    if quad_nodes == 0 || mc_reps < 2 {
        return Err(Error::OutOfRange(
            "need at least one node and two replicates".into(),
        ));
    }
    let engine = ExactEngine::default();
    let exact = engine.moments(model, theta)?;
    let sampler = engine.sampler(model)?;
    let (x, w) = gauss_legendre(quad_nodes);
    let half = 0.5 * t_max;
    let mut integral = 0.0;
    let mut variance = 0.0;
    let mut nodes = Vec::with_capacity(quad_nodes);
    for (node, (&xj, &wj)) in x.iter().zip(&w).enumerate() {
        let t = half * (xj + 1.0);
        let values: Vec<f64> = (0..mc_reps)
            .into_par_iter()
            .map(|rep| {
                let mut r = rng::stream(seed, ((node as u64) << 32) | rep as u64);
                let (_, y) = draw(&sampler, t, &mut r);
                gamma_direction(model, t, &y, theta)
            })
            .collect::<Result<_>>()?;
        let reps = mc_reps as f64;
        let mean = values.iter().sum::<f64>() / reps;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1.0);
        let se = (var / reps).sqrt();
        integral += half * wj * mean;
        variance += (half * wj * se).powi(2);
        nodes.push((t, mean, se));
    }
    Ok(VarianceIdentity {
        integral_estimate: integral,
        standard_error: variance.sqrt(),
        tail_bound: 4.0 * (1.0 - t_max) / t_max,
        sigma2_exact: exact.sigma2_n,
        discrepancy: integral - exact.sigma2_n,
        t_max,
        quad_nodes,
        mc_reps,
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{random_model, validate_model};

    fn normals(model: &IsingModel, t: f64, y: &[f64]) -> Vec<f64> {
        // Bayes: μ(x)·exp(−|y − t x|²/(2t(1−t))), normalized.
        let n = model.n();
        let prior = ExactEngine::default().joint_pmf(model).unwrap();
        let mut post: Vec<f64> = prior
            .iter()
            .enumerate()
            .map(|(bits, p)| {
                let x = SpinConfig::from_bits(bits as u64, n);
                let d2: f64 = (0..n).map(|i| (y[i] - t * x.get(i) as f64).powi(2)).sum();
                p * (-d2 / (2.0 * t * (1.0 - t))).exp()
            })
            .collect();
        let z: f64 = post.iter().sum();
        post.iter_mut().for_each(|p| *p /= z);
        post
    }

    #[test]
    fn tilt_examples() {
        let m = IsingModel::product(vec![0.3, -0.1]).unwrap();
        assert_eq!(
            tilted_model(&m, 0.4, &[0.0, 0.0]).unwrap().field(),
            m.field()
        );
        assert_eq!(
            tilted_model(&m, 0.5, &[1.0, 2.0]).unwrap().field(),
            &[2.3, 3.9]
        );
        assert!(tilted_model(&m, 1.0, &[0.0, 0.0]).is_err());
        assert!(tilted_model(&m, 0.0, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn tilted_law_is_the_bayes_posterior() {
        let mut r = rng::stream(51, 0);
        for n in 1..=6 {
            let model = random_model(n, 0.3, 0.5, &mut r);
            let t: f64 = r.random_range(0.05..0.95);
            let y: Vec<f64> = (0..n).map(|_| r.random_range(-1.5..1.5)).collect();
            let tilted = tilted_model(&model, t, &y).unwrap();
            let pmf = ExactEngine::default().joint_pmf(&tilted).unwrap();
            for (a, b) in pmf.iter().zip(normals(&model, t, &y)) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gamma_examples() {
        let free = IsingModel::product(vec![0.0; 3]).unwrap();
        let e1 = DirectionVector::basis(3, 0);
        assert!((gamma_direction(&free, 0.5, &[0.0; 3], &e1).unwrap() - 4.0).abs() < 1e-12);
        let frozen = gamma_direction(&free, 0.5, &[20.0, 0.0, 0.0], &e1).unwrap();
        assert!(frozen < 1e-12);
        let theta = DirectionVector::normalized(vec![0.3, -1.0, 0.5]).unwrap();
        let mut r = rng::stream(52, 0);
        let model = random_model(3, 0.4, 0.3, &mut r);
        let y = [0.2, -0.4, 0.9];
        let a = gamma_direction(&model, 0.3, &y, &theta).unwrap();
        let b = gamma_direction(&model, 0.3, &y, &theta.negated()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gamma_matches_bayes_covariance_for_two_spins() {
        let model = validate_model(&[vec![0.0, 0.35], vec![0.35, 0.0]], &[0.2, -0.4]).unwrap();
        let theta = DirectionVector::normalized(vec![1.0, 2.0]).unwrap();
        let (t, y) = (0.35, [0.4, -0.7]);
        let post = normals(&model, t, &y);
        let xs: Vec<[f64; 2]> = (0..4u64)
            .map(|b| {
                let x = SpinConfig::from_bits(b, 2);
                [x.get(0) as f64, x.get(1) as f64]
            })
            .collect();
        let e =
            |f: &dyn Fn(&[f64; 2]) -> f64| xs.iter().zip(&post).map(|(x, p)| p * f(x)).sum::<f64>();
        let m = [e(&|x| x[0]), e(&|x| x[1])];
        let cov = |i: usize, j: usize| e(&|x| (x[i] - m[i]) * (x[j] - m[j]));
        let th = theta.as_slice();
        let v0 = th[0] * cov(0, 0) + th[1] * cov(0, 1);
        let v1 = th[0] * cov(1, 0) + th[1] * cov(1, 1);
        let direct = (v0 * v0 + v1 * v1) / (1.0 - t).powi(2);
        assert!((gamma_direction(&model, t, &y, &theta).unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn interpolant_draws() {
        let model = IsingModel::product(vec![0.0; 4]).unwrap();
        let a = sample_interpolant(&model, 0.3, 7).unwrap();
        assert_eq!(a, sample_interpolant(&model, 0.3, 7).unwrap());
        assert!(sample_interpolant(&model, 1.2, 7).is_err());

        let sampler = ExactEngine::default().sampler(&model).unwrap();
        let spread = |t: f64| {
            let mut r = rng::stream(8, 0);
            let ys: Vec<f64> = (0..20_000)
                .map(|_| draw(&sampler, t, &mut r).1[0])
                .collect();
            let m = ys.iter().sum::<f64>() / ys.len() as f64;
            (
                m,
                ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (ys.len() - 1) as f64,
            )
        };
        let (m, v) = spread(0.5);
        assert!(m.abs() < 0.03);
        assert!((v - 0.5).abs() < 0.03);
        let (_, v1) = spread(0.1);
        let (_, v2) = spread(0.01);
        assert!(v2 < v1 && v1 < v);
    }

    #[test]
    fn derivative_identity_product_values() {
        let free = IsingModel::product(vec![0.0; 2]).unwrap();
        let c = derivative_identity_check(&free, 0.4, &[0.0, 0.0], 0, 0, 0, DEFAULT_DELTA).unwrap();
        assert!(c.formula.abs() < 1e-15);
        assert!(c.fd.abs() < 1e-9);

        let (t, y): (f64, [f64; 2]) = (0.4, [0.3, 0.0]);
        let big_h = 0.3 / (1.0 - t);
        let mg = big_h.tanh();
        let c = derivative_identity_check(&free, t, &y, 0, 0, 0, DEFAULT_DELTA).unwrap();
        let expect = -2.0 * mg * (1.0 - mg * mg) / (1.0 - t);
        assert!((c.formula - expect).abs() < 1e-12);
        assert!(c.rel_err < 1e-6);
    }

    #[test]
    fn derivative_identity_random_models() {
        let mut r = rng::stream(53, 0);
        for n in 2..=6 {
            let model = random_model(n, 0.25, 0.4, &mut r);
            for t in [0.3, 0.6] {
                let y: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
                for _ in 0..4 {
                    let (i, l, k) = (
                        r.random_range(0..n),
                        r.random_range(0..n),
                        r.random_range(0..n),
                    );
                    let c =
                        derivative_identity_check(&model, t, &y, i, l, k, DEFAULT_DELTA).unwrap();
                    assert!(c.rel_err <= 1e-4, "n={n} t={t} ({i},{l},{k}): {c:?}");
                    assert!((c.expansion - c.formula).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn variance_identity_for_a_free_spin() {
        let model = IsingModel::product(vec![0.0; 2]).unwrap();
        let e1 = DirectionVector::basis(2, 0);
        let est = variance_identity_estimate(&model, &e1, 16, 4000, 0.95, 3).unwrap();
        assert!((est.sigma2_exact - 1.0).abs() < 1e-12);
        assert!(est.within(3.0), "{est:?}");
        let neg = variance_identity_estimate(&model, &e1.negated(), 16, 4000, 0.95, 3).unwrap();
        assert_eq!(neg.integral_estimate, est.integral_estimate);
        let more = variance_identity_estimate(&model, &e1, 16, 8000, 0.95, 3).unwrap();
        let ratio = est.standard_error / more.standard_error;
        assert!((ratio - 2f64.sqrt()).abs() < 0.15, "ratio {ratio}");
    }
}
