//! Finite-range models on boxes of `Z^d`, random Dobrushin ferromagnets, and
//! the correlation-decay and CLT-convergence experiments built on them.
//!
//! Sites of a box with side lengths `(L_1, …, L_d)` are numbered row-major
//! with the last coordinate varying fastest: `(c_1, …, c_d)` has index
//! `Σ_k c_k Π_{m>k} L_m`. Distances are Chebyshev (max-coordinate).

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::{optimize_epsilon, sup_over_fields, SupStrategy};
use crate::error::{Error, Result};
use crate::exact::{DirectionVector, ExactEngine, DEFAULT_MERGE_TOL};
use crate::glauber::{run_chain, ChainConfig, Observables};
use crate::model::{spectral_report, IsingModel};
use crate::rng;
use crate::stats::{linear_fit, LinearFit};
use crate::wasserstein::{w2_discrete_vs_normal, w2_empirical, NormalParams};

/// Largest box `build_box_model` will materialize (the matrix is dense).
pub const MAX_BOX_SITES: usize = 2048;

/// Variance below which standardized outputs are suppressed.
pub const DEGENERATE_VARIANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    #[default]
    Free,
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(f64),
    PerSite(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub sides: Vec<usize>,
    pub range: usize,
    /// `coupling[r-1]` is the interaction at Chebyshev distance `r`.
    pub coupling: Vec<f64>,
    pub field: FieldSpec,
    #[serde(default)]
    pub boundary: Boundary,
}

impl LatticeSpec {
    /// Nearest-neighbor chain of `n` sites with free ends and zero field.
    pub fn chain(n: usize, beta: f64) -> Self {
        LatticeSpec {
            sides: vec![n],
            range: 1,
            coupling: vec![beta],
            field: FieldSpec::Constant(0.0),
            boundary: Boundary::Free,
        }
    }

    pub fn sites(&self) -> usize {
        self.sides.iter().product()
    }

    pub fn coords(&self, mut index: usize) -> Vec<usize> {
        let mut c = vec![0; self.sides.len()];
        for (k, &len) in self.sides.iter().enumerate().rev() {
            c[k] = index % len;
            index /= len;
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.sides)
            .fold(0, |acc, (&c, &len)| acc * len + c)
    }

    /// Chebyshev distance, with wraparound under periodic boundaries.
    pub fn distance(&self, i: usize, j: usize) -> usize {
        let (a, b) = (self.coords(i), self.coords(j));
        a.iter()
            .zip(&b)
            .zip(&self.sides)
            .map(|((&x, &y), &len)| {
                let d = x.abs_diff(y);
                match self.boundary {
                    Boundary::Free => d,
                    Boundary::Periodic => d.min(len - d),
                }
            })
            .max()
            .unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        if self.sides.is_empty() || self.sides.contains(&0) {
            return Err(Error::Dimension(
                "every side length must be positive".into(),
            ));
        }
        if self.range == 0 || self.coupling.len() != self.range {
            return Err(Error::Dimension(format!(
                "range {} needs exactly that many couplings, got {}",
                self.range,
                self.coupling.len()
            )));
        }
        if self.coupling.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("lattice coupling".into()));
        }
        let n = self
            .sides
            .iter()
            .try_fold(1usize, |acc, &s| acc.checked_mul(s))
            .filter(|&n| n <= MAX_BOX_SITES)
            .ok_or_else(|| Error::OutOfRange(format!("box exceeds {MAX_BOX_SITES} sites")))?;
        if let FieldSpec::PerSite(h) = &self.field {
            if h.len() != n {
                return Err(Error::Dimension(format!(
                    "field has length {} for {n} sites",
                    h.len()
                )));
            }
        }
        Ok(())
    }
}

pub fn build_box_model(spec: &LatticeSpec) -> Result<IsingModel> {
    spec.validate()?;
    let n = spec.sites();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = spec.distance(i, j);
            if (1..=spec.range).contains(&d) {
                a[i * n + j] = spec.coupling[d - 1];
                a[j * n + i] = spec.coupling[d - 1];
            }
        }
    }
    let h = match &spec.field {
        FieldSpec::Constant(c) => vec![*c; n],
        FieldSpec::PerSite(h) => h.clone(),
    };
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lattice field".into()));
    }
    let shape: Vec<String> = spec.sides.iter().map(|s| s.to_string()).collect();
    Ok(IsingModel::from_canonical(n, a, h).with_label(format!(
        "box {} r={}",
        shape.join("x"),
        spec.range
    )))
}

/// Ferromagnet on the union of `cycles` random Hamiltonian cycles, every
/// edge weighted `alpha / max degree` so the Dobrushin constant is `alpha`.
/// Fields are uniform on `[-field, field]`.
pub fn random_dobrushin_ferromagnet(
    n: usize,
    alpha: f64,
    cycles: usize,
    field: f64,
    seed: u64,
) -> Result<IsingModel> {
    if n < 3 || cycles == 0 {
        return Err(Error::Dimension(
            "need at least three sites and one cycle".into(),
        ));
    }
    if !(0.0..1.0).contains(&alpha) || !(field >= 0.0) || !field.is_finite() {
        return Err(Error::OutOfRange(format!("alpha {alpha} or field {field}")));
    }
    let mut r = rng::stream(seed, 0);
    let mut adjacent = vec![false; n * n];
    for _ in 0..cycles {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        for w in 0..n {
            let (i, j) = (order[w], order[(w + 1) % n]);
            adjacent[i * n + j] = true;
            adjacent[j * n + i] = true;
        }
    }
    let max_degree = (0..n)
        .map(|i| adjacent[i * n..(i + 1) * n].iter().filter(|&&e| e).count())
        .max()
        .unwrap_or(1);
    let weight = alpha / max_degree as f64;
    let a = adjacent
        .iter()
        .map(|&e| if e { weight } else { 0.0 })
        .collect();
    let h = (0..n).map(|_| r.random_range(-field..=field)).collect();
    Ok(IsingModel::from_canonical(n, a, h)
        .with_label(format!("dobrushin ferromagnet n={n} alpha={alpha}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Estimator {
    Exact,
    Mcmc { config: ChainConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub distance: usize,
    /// Site at this distance with the largest `|Cov(X_origin, X_j)|`.
    pub site: usize,
    pub max_abs_cov: f64,
    /// Standard error of that covariance; zero for exact values.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayProfile {
    pub origin: usize,
    pub rows: Vec<DecayRow>,
    /// Fit of `ln max|Cov|` on distance over rows above three standard errors.
    pub fit: Option<LinearFit>,
}

pub fn correlation_decay_profile(
    spec: &LatticeSpec,
    origin: usize,
    estimator: &Estimator,
) -> Result<DecayProfile> {
    let model = build_box_model(spec)?;
    let n = model.n();
    if origin >= n {
        return Err(Error::SiteOutOfRange { index: origin, n });
    }
    let (cov, se): (Vec<f64>, Vec<f64>) = match estimator {
        Estimator::Exact => {
            let (_, cov) = ExactEngine::default().covariance(&model)?;
            (cov[origin * n..(origin + 1) * n].to_vec(), vec![0.0; n])
        }
        Estimator::Mcmc { config } => {
            let obs = Observables {
                pair_correlations: true,
                ..Default::default()
            };
            let stats = run_chain(&model, config, &obs)?;
            let (cov, se) = (stats.cov.unwrap(), stats.cov_se.unwrap());
            (cov[origin].clone(), se[origin].clone())
        }
    };
    let max_distance = (0..n).map(|j| spec.distance(origin, j)).max().unwrap_or(0);
    let mut rows = Vec::new();
    for d in 1..=max_distance {
        let best = (0..n)
            .filter(|&j| spec.distance(origin, j) == d)
            .max_by(|&a, &b| cov[a].abs().total_cmp(&cov[b].abs()).then(b.cmp(&a)));
        if let Some(j) = best {
            rows.push(DecayRow {
                distance: d,
                site: j,
                max_abs_cov: cov[j].abs(),
                se: se[j],
            });
        }
    }
    let resolved: Vec<&DecayRow> = rows
        .iter()
        .filter(|r| r.max_abs_cov > 3.0 * r.se && r.max_abs_cov > 0.0)
        .collect();
    let x: Vec<f64> = resolved.iter().map(|r| r.distance as f64).collect();
    let y: Vec<f64> = resolved.iter().map(|r| r.max_abs_cov.ln()).collect();
    let fit = match estimator {
        Estimator::Exact => linear_fit(&x, &y, None),
        Estimator::Mcmc { .. } => {
            // Delta method: Var(ln c) ≈ (se/c)².
            let w: Vec<f64> = resolved
                .iter()
                .map(|r| (r.max_abs_cov / r.se).powi(2))
                .collect();
            linear_fit(&x, &y, Some(&w))
        }
    };
    Ok(DecayProfile { origin, rows, fit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CltEstimator {
    Exact,
    /// One chain per seed; the reference normal uses the pooled sample mean
    /// and variance.
    Mcmc {
        config: ChainConfig,
        seeds: Vec<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltRow {
    pub n: usize,
    pub mu_n: f64,
    pub sigma2_n: f64,
    pub sigma2_per_site: f64,
    pub w2: f64,
    /// Standard error across seeds (MCMC only).
    pub w2_se: Option<f64>,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
    pub degenerate: bool,
    pub bound: Option<f64>,
}

/// W₂ between `θᵀX` (θ uniform) and its normal approximation for each model.
pub fn clt_convergence_experiment(
    family: &[IsingModel],
    estimator: &CltEstimator,
    with_bound: bool,
) -> Result<Vec<CltRow>> {
    family
        .par_iter()
        .map(|model| match estimator {
            CltEstimator::Exact => clt_exact(model, with_bound),
            CltEstimator::Mcmc { config, seeds } => clt_mcmc(model, config, seeds),
        })
        .collect()
}

fn standardized(sigma2: f64, central: impl Fn(i32) -> f64) -> (Option<f64>, Option<f64>, bool) {
    if sigma2 < DEGENERATE_VARIANCE {
        return (None, None, true);
    }
    (
        Some(central(3) / sigma2.powf(1.5)),
        Some(central(4) / (sigma2 * sigma2)),
        false,
    )
}

fn clt_exact(model: &IsingModel, with_bound: bool) -> Result<CltRow> {
    let n = model.n();
    let theta = DirectionVector::uniform(n);
    let pmf = ExactEngine::default().exact_pmf_of_projection(model, &theta, DEFAULT_MERGE_TOL)?;
    let (mu, sigma2) = (pmf.mean(), pmf.variance());
    let (skewness, kurtosis, degenerate) = standardized(sigma2, |k| pmf.central_moment(k));
    let w2 = if degenerate {
        f64::NAN
    } else {
        w2_discrete_vs_normal(&pmf, NormalParams::new(mu, sigma2.sqrt())?)
    };
    let bound = if with_bound {
        let strategy = if model.is_product() {
            SupStrategy::ProductClosedForm
        } else {
            SupStrategy::uniform_scan()
        };
        let sup = sup_over_fields(model, &theta, &strategy)?;
        spectral_report(model, 1e-10)?
            .poincare_constant
            .map(|cp| optimize_epsilon(sup.value, cp).1)
    } else {
        None
    };
    Ok(CltRow {
        n,
        mu_n: mu,
        sigma2_n: sigma2,
        sigma2_per_site: sigma2 / n as f64,
        w2,
        w2_se: None,
        skewness,
        kurtosis,
        degenerate,
        bound,
    })
}

fn clt_mcmc(model: &IsingModel, config: &ChainConfig, seeds: &[u64]) -> Result<CltRow> {
    if seeds.len() < 2 {
        return Err(Error::OutOfRange(
            "the sampled estimator needs at least two seeds".into(),
        ));
    }
    let n = model.n();
    let theta = DirectionVector::uniform(n);
    let obs = Observables {
        projection: Some(theta),
        ..Default::default()
    };
    let series: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = ChainConfig {
                seed,
                ..config.clone()
            };
            Ok(run_chain(model, &cfg, &obs)?
                .projection_samples
                .unwrap_or_default())
        })
        .collect::<Result<_>>()?;
    let pooled: Vec<f64> = series.iter().flatten().copied().collect();
    let count = pooled.len() as f64;
    let mu = pooled.iter().sum::<f64>() / count;
    let central = |k: i32| pooled.iter().map(|w| (w - mu).powi(k)).sum::<f64>() / count;
    let sigma2 = central(2);
    let (skewness, kurtosis, degenerate) = standardized(sigma2, central);
    let (w2, w2_se) = if degenerate {
        (f64::NAN, None)
    } else {
        let reference = NormalParams::new(mu, sigma2.sqrt())?;
        let each: Vec<f64> = series
            .iter()
            .map(|s| w2_empirical(s, reference))
            .collect::<Result<_>>()?;
        let r = each.len() as f64;
        let m = each.iter().sum::<f64>() / r;
        let var = each.iter().map(|w| (w - m).powi(2)).sum::<f64>() / (r - 1.0);
        (m, Some((var / r).sqrt()))
    };
    Ok(CltRow {
        n,
        mu_n: mu,
        sigma2_n: sigma2,
        sigma2_per_site: sigma2 / n as f64,
        w2,
        w2_se,
        skewness,
        kurtosis,
        degenerate,
        bound: None,
    })
}
