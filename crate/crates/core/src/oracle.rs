//! Definition-level reference computations for small models.
//!
//! Nothing here shares code with the Gray-code engine: each configuration's
//! energy is recomputed from scratch and every central moment is taken
//! directly from its definition.

use crate::error::{Error, Result};
use crate::exact::{DirectionVector, MomentSummary};
use crate::model::IsingModel;

pub const ORACLE_MAX_SPINS: usize = 12;

struct Law {
    n: usize,
    configs: Vec<Vec<f64>>,
    probs: Vec<f64>,
    log_partition: f64,
}

fn law(model: &IsingModel) -> Result<Law> {
    let n = model.n();
    if n > ORACLE_MAX_SPINS {
        return Err(Error::CapExceeded {
            n,
            cap: ORACLE_MAX_SPINS,
        });
    }
    let a = model.interaction();
    let h = model.field();
    let mut configs = Vec::with_capacity(1 << n);
    let mut energies = Vec::with_capacity(1 << n);
    for bits in 0u32..(1 << n) {
        let x: Vec<f64> = (0..n)
            .map(|i| if bits & (1 << i) != 0 { 1.0 } else { -1.0 })
            .collect();
        let mut u = 0.0;
        for i in 0..n {
            u += h[i] * x[i];
            for j in 0..n {
                u += 0.5 * a[i * n + j] * x[i] * x[j];
            }
        }
        configs.push(x);
        energies.push(u);
    }
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = energies.iter().map(|u| (u - max).exp()).sum();
    let probs = energies.iter().map(|u| (u - max).exp() / z).collect();
    Ok(Law {
        n,
        configs,
        probs,
        log_partition: max + z.ln(),
    })
}

impl Law {
    fn expect(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.configs
            .iter()
            .zip(&self.probs)
            .map(|(x, p)| p * f(x))
            .sum()
    }
}

/// Same contract as [`crate::exact::ExactEngine::moments`], for `n ≤ 12`.
pub fn brute_force_oracle_moments(
    model: &IsingModel,
    theta: &DirectionVector,
) -> Result<MomentSummary> {
    let law = law(model)?;
    let n = law.n;
    if theta.len() != n {
        return Err(Error::Dimension(
            "theta length differs from model size".into(),
        ));
    }
    let th = theta.as_slice();
    let proj = |x: &[f64]| -> f64 { th.iter().zip(x).map(|(t, v)| t * v).sum() };
    let mean: Vec<f64> = (0..n).map(|i| law.expect(|x| x[i])).collect();
    let mu = law.expect(proj);
    let sigma2 = law.expect(|x| (proj(x) - mu).powi(2));
    let mut cov = vec![vec![0.0; n]; n];
    let mut raw_pair = vec![vec![0.0; n]; n];
    let mut raw_triple = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            cov[i][k] = law.expect(|x| (x[i] - mean[i]) * (x[k] - mean[k]));
            raw_pair[i][k] = law.expect(|x| x[i] * x[k]);
            raw_triple[i][k] = law.expect(|x| x[i] * x[k] * proj(x));
        }
    }
    let tensor = third_moment_tensor_of(&law, &mean);
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            m[i][k] = (0..n).map(|l| th[l] * tensor[(i * n + l) * n + k]).sum();
        }
    }
    let v = (0..n)
        .map(|i| (0..n).map(|j| th[j] * cov[i][j]).sum())
        .collect();
    Ok(MomentSummary {
        mean,
        cov,
        v,
        m,
        mu_n: mu,
        sigma2_n: sigma2,
        log_partition: law.log_partition,
        raw_pair,
        raw_triple,
    })
}

fn third_moment_tensor_of(law: &Law, mean: &[f64]) -> Vec<f64> {
    let n = law.n;
    let mut t = vec![0.0; n * n * n];
    for (x, p) in law.configs.iter().zip(&law.probs) {
        let c: Vec<f64> = x.iter().zip(mean).map(|(v, m)| v - m).collect();
        for i in 0..n {
            for l in 0..n {
                let cil = p * c[i] * c[l];
                for k in 0..n {
                    t[(i * n + l) * n + k] += cil * c[k];
                }
            }
        }
    }
    t
}

/// Full `B_ilk = E[(X_i - m_i)(X_l - m_l)(X_k - m_k)]`, flattened as
/// `[(i·n + l)·n + k]`.
pub fn brute_force_third_moment_tensor(model: &IsingModel) -> Result<Vec<f64>> {
    let law = law(model)?;
    let mean: Vec<f64> = (0..law.n).map(|i| law.expect(|x| x[i])).collect();
    Ok(third_moment_tensor_of(&law, &mean))
}
