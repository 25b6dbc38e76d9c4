//! The Gaussian approximation error bound
//! `W₂ ≤ 5√ε + √(4·S·C_p/ε⁶)` for `0 < ε < ½`, where
//! `S = sup_h Σ_k (Σ_i v_i M_ik)²` ranges over all external fields.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{DirectionVector, ExactEngine};
use crate::model::{spectral_report, IsingModel};
use crate::rng;
use crate::stats::golden_section_max;

/// `max_u 4u(1−u)⁴ = 4·(1/5)·(4/5)⁴`.
pub const PRODUCT_SUP: f64 = 1024.0 / 3125.0;

/// Largest admissible ε; the bound requires `ε < ½`.
pub const EPSILON_MAX: f64 = 0.5 * (1.0 - 1e-9);

/// `Σ_k (Σ_i v_i M_ik)² = |Mᵀv|²` at the model's own field.
pub fn contracted_statistic(model: &IsingModel, theta: &DirectionVector) -> Result<f64> {
    let m = ExactEngine::default().moments(model, theta)?;
    let n = model.n();
    Ok((0..n)
        .map(|k| (0..n).map(|i| m.v[i] * m.m[i][k]).sum::<f64>().powi(2))
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SupStrategy {
    /// Fields `c·1` for `c` on a grid over `[lo, hi]`, refined by golden section.
    UniformScan {
        lo: f64,
        hi: f64,
        points: usize,
    },
    Grid {
        fields: Vec<Vec<f64>>,
    },
    /// Finite-difference gradient ascent from random starts in `[-spread, spread]ⁿ`.
    MultistartAscent {
        starts: usize,
        spread: f64,
        seed: u64,
    },
    /// Exact value for interaction-free models.
    ProductClosedForm,
}

impl SupStrategy {
    pub fn uniform_scan() -> Self {
        SupStrategy::UniformScan {
            lo: -3.0,
            hi: 3.0,
            points: 121,
        }
    }

    pub fn multistart(seed: u64) -> Self {
        SupStrategy::MultistartAscent {
            starts: 16,
            spread: 2.0,
            seed,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SupStrategy::UniformScan { .. } => "uniform-scan",
            SupStrategy::Grid { .. } => "grid",
            SupStrategy::MultistartAscent { .. } => "multistart-ascent",
            SupStrategy::ProductClosedForm => "product-closed-form",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum SupCertainty {
    Exact,
    LowerBound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupEstimate {
    pub value: f64,
    pub field: Vec<f64>,
    pub strategy: &'static str,
    pub certainty: SupCertainty,
    pub evaluations: usize,
}

struct Objective<'a> {
    model: &'a IsingModel,
    theta: &'a DirectionVector,
}

impl Objective<'_> {
    fn at(&self, field: &[f64]) -> Result<f64> {
        contracted_statistic(&self.model.with_field(field.to_vec())?, self.theta)
    }
}

fn better(best: &mut (f64, Vec<f64>), value: f64, field: &[f64]) {
    if value > best.0 {
        *best = (value, field.to_vec());
    }
}

/// Estimate `sup_h` of the contracted statistic. Every strategy also
/// evaluates the model's own field; all but the closed form only certify a
/// lower bound on the supremum.
pub fn sup_over_fields(
    model: &IsingModel,
    theta: &DirectionVector,
    strategy: &SupStrategy,
) -> Result<SupEstimate> {
    let n = model.n();
    if theta.len() != n {
        return Err(Error::Dimension(
            "theta length differs from model size".into(),
        ));
    }
    if let SupStrategy::ProductClosedForm = strategy {
        if !model.is_product() {
            return Err(Error::NotProductModel);
        }
        let h = (1.0 / 5f64.sqrt()).atanh();
        return Ok(SupEstimate {
            value: PRODUCT_SUP * theta.as_slice().iter().map(|t| t.powi(4)).sum::<f64>(),
            field: vec![h; n],
            strategy: strategy.name(),
            certainty: SupCertainty::Exact,
            evaluations: 0,
        });
    }
    let objective = Objective { model, theta };
    let native = model.field().to_vec();
    let mut best = (objective.at(&native)?, native);
    let mut evaluations = 1;
    match strategy {
        SupStrategy::UniformScan { lo, hi, points } => {
            let (v, f, e) = uniform_scan(&objective, *lo, *hi, *points)?;
            better(&mut best, v, &f);
            evaluations += e;
        }
        SupStrategy::Grid { fields } => {
            for f in fields {
                if f.len() != n {
                    return Err(Error::Dimension(
                        "grid field length differs from model size".into(),
                    ));
                }
                better(&mut best, objective.at(f)?, f);
            }
            evaluations += fields.len();
        }
        SupStrategy::MultistartAscent {
            starts,
            spread,
            seed,
        } => {
            let (lo, hi, points) = (-3.0, 3.0, 121);
            let (_, scan_field, e) = uniform_scan(&objective, lo, hi, points)?;
            evaluations += e;
            let mut origins = vec![best.1.clone(), scan_field];
            origins.extend((0..*starts).map(|r| {
                let mut g = rng::replica_stream(*seed, r);
                (0..n)
                    .map(|_| g.random_range(-*spread..=*spread))
                    .collect::<Vec<f64>>()
            }));
            let runs: Vec<(f64, Vec<f64>, usize)> = origins
                .into_par_iter()
                .map(|start| ascend(&objective, start))
                .collect::<Result<_>>()?;
            for (v, f, e) in runs {
                better(&mut best, v, &f);
                evaluations += e;
            }
        }
        SupStrategy::ProductClosedForm => unreachable!(),
    }
    Ok(SupEstimate {
        value: best.0,
        field: best.1,
        strategy: strategy.name(),
        certainty: SupCertainty::LowerBound,
        evaluations,
    })
}

fn uniform_scan(
    objective: &Objective,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<(f64, Vec<f64>, usize)> {
    if points < 2 || !(hi > lo) {
        return Err(Error::OutOfRange(
            "uniform scan needs lo < hi and two points".into(),
        ));
    }
    let n = objective.model.n();
    let step = (hi - lo) / (points - 1) as f64;
    let mut best = (f64::NEG_INFINITY, lo);
    for j in 0..points {
        let c = lo + step * j as f64;
        let v = objective.at(&vec![c; n])?;
        if v > best.0 {
            best = (v, c);
        }
    }
    let calls = std::cell::Cell::new(0usize);
    let (c, v) = golden_section_max(
        |c| {
            calls.set(calls.get() + 1);
            objective.at(&vec![c; n]).unwrap_or(f64::NEG_INFINITY)
        },
        best.1 - step,
        best.1 + step,
        1e-9,
    );
    let evaluations = points + calls.get();
    Ok(if v > best.0 {
        (v, vec![c; n], evaluations)
    } else {
        (best.0, vec![best.1; n], evaluations)
    })
}

const FD_STEP: f64 = 1e-5;
const ASCENT_MAX_ITERATIONS: usize = 2000;

/// Steepest ascent along the central-difference gradient with step halving.
fn ascend(objective: &Objective, mut h: Vec<f64>) -> Result<(f64, Vec<f64>, usize)> {
    let n = h.len();
    let mut value = objective.at(&h)?;
    let mut evaluations = 1;
    let mut eta = 0.5;
    for _ in 0..ASCENT_MAX_ITERATIONS {
        let mut grad = vec![0.0; n];
        for k in 0..n {
            let mut probe = h.clone();
            probe[k] = h[k] + FD_STEP;
            let up = objective.at(&probe)?;
            probe[k] = h[k] - FD_STEP;
            let down = objective.at(&probe)?;
            grad[k] = (up - down) / (2.0 * FD_STEP);
        }
        evaluations += 2 * n;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        let mut accepted = None;
        while eta > 1e-12 {
            let trial: Vec<f64> = h
                .iter()
                .zip(&grad)
                .map(|(x, g)| x + eta * g / norm)
                .collect();
            let v = objective.at(&trial)?;
            evaluations += 1;
            if v > value {
                accepted = Some((v, trial));
                break;
            }
            eta *= 0.5;
        }
        let Some((v, trial)) = accepted else { break };
        let improvement = v - value;
        value = v;
        h = trial;
        if improvement < 1e-12 {
            break;
        }
        eta = (2.0 * eta).min(4.0);
    }
    Ok((value, h, evaluations))
}

/// `5√ε + √(4·S·C_p/ε⁶)`.
pub fn bound_value(epsilon: f64, sup_estimate: f64, poincare_constant: f64) -> f64 {
    5.0 * epsilon.sqrt() + (4.0 * sup_estimate * poincare_constant / epsilon.powi(6)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub epsilon: f64,
    pub sup_estimate: f64,
    pub sup_strategy: Option<&'static str>,
    pub sup_certainty: Option<SupCertainty>,
    pub achieving_field: Option<Vec<f64>>,
    pub poincare_constant: f64,
    /// Whether `C_p` came from the spectrum or was supplied by the caller.
    pub poincare_overridden: bool,
    pub bound_value: f64,
    pub exact_w2: Option<f64>,
}

impl BoundReport {
    pub fn with_sup(mut self, sup: &SupEstimate) -> Self {
        self.sup_strategy = Some(sup.strategy);
        self.sup_certainty = Some(sup.certainty);
        self.achieving_field = Some(sup.field.clone());
        self
    }

    pub fn with_exact_w2(mut self, w2: f64) -> Self {
        self.exact_w2 = Some(w2);
        self
    }
}

/// Evaluate the bound at `epsilon`. Without an override, `C_p` is
/// `1/(1 − spread)` and the model must be in the high-temperature regime.
pub fn theorem1_bound(
    model: &IsingModel,
    epsilon: f64,
    sup_estimate: f64,
    c_p_override: Option<f64>,
) -> Result<BoundReport> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::OutOfRange(format!(
            "epsilon = {epsilon} outside (0, 1/2)"
        )));
    }
    if !(sup_estimate >= 0.0) || !sup_estimate.is_finite() {
        return Err(Error::OutOfRange(format!("sup estimate {sup_estimate}")));
    }
    let poincare_constant = match c_p_override {
        Some(c) if c > 0.0 && c.is_finite() => c,
        Some(c) => return Err(Error::OutOfRange(format!("Poincaré constant {c}"))),
        None => {
            let report = spectral_report(model, 1e-10)?;
            report.poincare_constant.ok_or_else(|| {
                Error::OutOfRange(format!(
                    "spectral spread {} is not below 1; supply a Poincaré constant",
                    report.spread
                ))
            })?
        }
    };
    Ok(BoundReport {
        epsilon,
        sup_estimate,
        sup_strategy: None,
        sup_certainty: None,
        achieving_field: None,
        poincare_constant,
        poincare_overridden: c_p_override.is_some(),
        bound_value: bound_value(epsilon, sup_estimate, poincare_constant),
        exact_w2: None,
    })
}

/// Minimize `5√ε + c·ε⁻³` with `c = √(4·S·C_p)` over `0 < ε < ½`.
/// Returns `(ε*, bound)`; a zero `c` gives `(f64::MIN_POSITIVE, 0)`.
pub fn optimize_epsilon(sup_estimate: f64, poincare_constant: f64) -> (f64, f64) {
    let c = (4.0 * sup_estimate * poincare_constant).sqrt();
    if c == 0.0 {
        return (f64::MIN_POSITIVE, 0.0);
    }
    let eps = (1.2 * c).powf(2.0 / 7.0).min(EPSILON_MAX);
    (eps, bound_value(eps, sup_estimate, poincare_constant))
}
