//! Random-scan heat-bath Glauber dynamics and the monotone coupled pair.
//!
//! One step picks a site uniformly and resamples it from its conditional law
//! with a single uniform `u`: the new spin is `+1` iff `u < P(X_i = +1 | rest)`.
//! Two chains driven by the same `(site, u)` form the grand coupling, which
//! is the total-variation-minimal one-step coupling for single-site updates
//! and preserves the componentwise order on ferromagnetic models.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::DirectionVector;
use crate::model::{dobrushin_report, logistic, IsingModel, SpinConfig};
use crate::rng;
use crate::stats::{autocorrelation, batch_mean_se, linear_fit, LinearFit};

/// Number of contiguous batches used for batch-means standard errors.
pub const BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Total single-site updates, burn-in included.
    pub steps: u64,
    pub burn_in: u64,
    pub seed: u64,
    /// Sites held at a fixed spin.
    #[serde(default)]
    pub pins: Vec<(usize, i8)>,
    pub record_every: u64,
    /// RNG stream within `seed`; replicas use distinct streams.
    #[serde(default)]
    pub stream: u64,
}

impl ChainConfig {
    pub fn new(steps: u64, burn_in: u64, seed: u64) -> Self {
        ChainConfig {
            steps,
            burn_in,
            seed,
            pins: Vec::new(),
            record_every: 1,
            stream: 0,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn with_pins(mut self, pins: Vec<(usize, i8)>) -> Self {
        self.pins = pins;
        self
    }

    pub fn with_record_every(mut self, every: u64) -> Self {
        self.record_every = every;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.steps == 0 || self.record_every == 0 {
            return Err(Error::OutOfRange(
                "steps and record_every must be positive".into(),
            ));
        }
        if self.burn_in >= self.steps {
            return Err(Error::OutOfRange(format!(
                "burn-in {} must be smaller than steps {}",
                self.burn_in, self.steps
            )));
        }
        let mut seen = vec![false; n];
        for &(site, spin) in &self.pins {
            if site >= n {
                return Err(Error::SiteOutOfRange { index: site, n });
            }
            if spin != 1 && spin != -1 {
                return Err(Error::InvalidPins(format!("spin {spin} at site {site}")));
            }
            if std::mem::replace(&mut seen[site], true) {
                return Err(Error::InvalidPins(format!("site {site} pinned twice")));
            }
        }
        Ok(())
    }

    /// Number of post-burn-in samples a run records.
    pub fn recorded_samples(&self) -> usize {
        ((self.steps - self.burn_in) / self.record_every) as usize
    }
}

/// One heat-bath update of `site` driven by the uniform `u ∈ [0, 1)`.
pub fn heat_bath_step(model: &IsingModel, config: &SpinConfig, site: usize, u: f64) -> SpinConfig {
    let mut next = config.clone();
    next.set(site, heat_bath_spin(model, config.as_slice(), site, u));
    next
}

#[inline]
fn heat_bath_spin(model: &IsingModel, spins: &[i8], site: usize, u: f64) -> i8 {
    // The local field is summed afresh in a fixed neighbor order, which
    // keeps it monotone in the configuration under rounding.
    if u < logistic(2.0 * model.local_field(spins, site)) {
        1
    } else {
        -1
    }
}

/// Observables collected by [`run_chain`] besides spin means.
#[derive(Debug, Clone, Default)]
pub struct Observables {
    /// Lags (in recorded samples) for the magnetization autocorrelation.
    pub lags: Vec<usize>,
    /// Accumulate `E X_i X_j` and covariances with standard errors.
    pub pair_correlations: bool,
    /// Keep the series of `θᵀX` at every recorded sample.
    pub projection: Option<DirectionVector>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainStats {
    pub samples: usize,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    /// Mean of the total magnetization `Σ_i X_i`.
    pub magnetization_mean: f64,
    pub magnetization_se: f64,
    pub autocorrelation: Vec<(usize, f64)>,
    pub pair: Option<Vec<Vec<f64>>>,
    pub cov: Option<Vec<Vec<f64>>>,
    pub cov_se: Option<Vec<Vec<f64>>>,
    #[serde(skip)]
    pub projection_samples: Option<Vec<f64>>,
    pub final_state: SpinConfig,
}

fn initial_state(n: usize, pins: &[(usize, i8)], rng: &mut rng::StreamRng) -> SpinConfig {
    let mut x = SpinConfig::random(n, rng);
    for &(site, spin) in pins {
        x.set(site, spin);
    }
    x
}

/// Run a single chain and summarize its post-burn-in samples.
pub fn run_chain(
    model: &IsingModel,
    config: &ChainConfig,
    observables: &Observables,
) -> Result<ChainStats> {
    let n = model.n();
    config.validate(n)?;
    if let Some(theta) = &observables.projection {
        if theta.len() != n {
            return Err(Error::Dimension(
                "projection direction length differs from model".into(),
            ));
        }
    }
    let free: Vec<usize> = (0..n)
        .filter(|i| !config.pins.iter().any(|p| p.0 == *i))
        .collect();
    let mut rng = rng::stream(config.seed, config.stream);
    let mut x = initial_state(n, &config.pins, &mut rng);

    let total = config.recorded_samples();
    if total == 0 {
        return Err(Error::OutOfRange(
            "no samples would be recorded after burn-in".into(),
        ));
    }
    let batches = BATCHES.min(total);
    let mut batch_sum = vec![vec![0.0; n]; batches];
    let mut batch_pair = if observables.pair_correlations {
        vec![vec![0.0; n * n]; batches]
    } else {
        Vec::new()
    };
    let mut batch_count = vec![0usize; batches];
    let mut magnetization = Vec::new();
    let mut projection = observables
        .projection
        .as_ref()
        .map(|_| Vec::with_capacity(total));
    let keep_magnetization = !observables.lags.is_empty();
    let mut recorded = 0usize;

    for step in 1..=config.steps {
        if !free.is_empty() {
            let site = free[rng.random_range(0..free.len())];
            let u: f64 = rng.random();
            let spin = heat_bath_spin(model, x.as_slice(), site, u);
            x.set(site, spin);
        }
        if step <= config.burn_in || !(step - config.burn_in).is_multiple_of(config.record_every) {
            continue;
        }
        let b = recorded * batches / total;
        recorded += 1;
        batch_count[b] += 1;
        let spins = x.as_slice();
        for (acc, &s) in batch_sum[b].iter_mut().zip(spins) {
            *acc += s as f64;
        }
        if observables.pair_correlations {
            let pair = &mut batch_pair[b];
            for i in 0..n {
                let si = spins[i];
                let row = &mut pair[i * n..(i + 1) * n];
                for (k, &sk) in spins.iter().enumerate().skip(i) {
                    row[k] += (si * sk) as f64;
                }
            }
        }
        if keep_magnetization {
            magnetization.push(x.magnetization() as f64);
        }
        if let (Some(series), Some(theta)) = (projection.as_mut(), observables.projection.as_ref())
        {
            series.push(theta.project(spins));
        }
    }

    let samples = recorded;
    let batch_means: Vec<Vec<f64>> = batch_sum
        .iter()
        .zip(&batch_count)
        .map(|(s, &c)| s.iter().map(|v| v / c as f64).collect())
        .collect();
    let mean: Vec<f64> = (0..n)
        .map(|i| batch_sum.iter().map(|s| s[i]).sum::<f64>() / samples as f64)
        .collect();
    let spread = |values: &[f64]| -> f64 {
        let b = values.len();
        if b < 2 {
            return f64::NAN;
        }
        let m = values.iter().sum::<f64>() / b as f64;
        (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / ((b - 1) * b) as f64).sqrt()
    };
    let mean_se: Vec<f64> = (0..n)
        .map(|i| spread(&batch_means.iter().map(|m| m[i]).collect::<Vec<_>>()))
        .collect();
    let batch_mag: Vec<f64> = batch_means.iter().map(|m| m.iter().sum()).collect();

    let (pair, cov, cov_se) = if observables.pair_correlations {
        let mut pair = vec![vec![0.0; n]; n];
        let mut cov = vec![vec![0.0; n]; n];
        let mut cov_se = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in i..n {
                let p = batch_pair.iter().map(|bp| bp[i * n + k]).sum::<f64>() / samples as f64;
                let c = p - mean[i] * mean[k];
                let per_batch: Vec<f64> = (0..batches)
                    .map(|b| {
                        batch_pair[b][i * n + k] / batch_count[b] as f64
                            - batch_means[b][i] * batch_means[b][k]
                    })
                    .collect();
                let se = spread(&per_batch);
                pair[i][k] = p;
                pair[k][i] = p;
                cov[i][k] = c;
                cov[k][i] = c;
                cov_se[i][k] = se;
                cov_se[k][i] = se;
            }
        }
        (Some(pair), Some(cov), Some(cov_se))
    } else {
        (None, None, None)
    };

    Ok(ChainStats {
        samples,
        magnetization_mean: mean.iter().sum(),
        magnetization_se: spread(&batch_mag),
        mean,
        mean_se,
        autocorrelation: observables
            .lags
            .iter()
            .map(|&lag| (lag, autocorrelation(&magnetization, lag)))
            .collect(),
        pair,
        cov,
        cov_se,
        projection_samples: projection,
        final_state: x,
    })
}

/// States of a single chain after burn-in, one every `record_every` updates.
pub fn sample_chain(model: &IsingModel, config: &ChainConfig) -> Result<Vec<SpinConfig>> {
    let n = model.n();
    config.validate(n)?;
    let free: Vec<usize> = (0..n)
        .filter(|i| !config.pins.iter().any(|p| p.0 == *i))
        .collect();
    let mut rng = rng::stream(config.seed, config.stream);
    let mut x = initial_state(n, &config.pins, &mut rng);
    let mut out = Vec::with_capacity(config.recorded_samples());
    for step in 1..=config.steps {
        if !free.is_empty() {
            let site = free[rng.random_range(0..free.len())];
            let u: f64 = rng.random();
            let spin = heat_bath_spin(model, x.as_slice(), site, u);
            x.set(site, spin);
        }
        if step > config.burn_in && (step - config.burn_in).is_multiple_of(config.record_every) {
            out.push(x.clone());
        }
    }
    Ok(out)
}

/// Disagreement process of a monotone coupled pair.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingTrace {
    pub n: usize,
    /// Site held at `+1` in the upper chain and `-1` in the lower chain.
    pub k: usize,
    /// Further sites held oppositely (`+1` upper, `-1` lower).
    pub extra_pins: Vec<usize>,
    pub steps: u64,
    pub burn_in: u64,
    pub record_every: u64,
    /// `D_t` for `t = 0, r, 2r, …` where `r = record_every`.
    pub d_series: Vec<u32>,
    /// Post-burn-in one-step transition counts by level: `[down, stay, up]`.
    pub transitions: Vec<[u64; 3]>,
    /// `(upper, lower)` chains at the end of the run.
    pub final_states: (SpinConfig, SpinConfig),
    /// Steps after which some site had lower spin above upper spin.
    pub monotone_violations: u64,
    pub ferromagnetic: bool,
}

impl CouplingTrace {
    pub fn pinned_disagreements(&self) -> usize {
        self.extra_pins.len()
    }

    /// Post-burn-in part of `d_series`.
    pub fn stationary_samples(&self) -> &[u32] {
        let skip = self.burn_in.div_ceil(self.record_every) as usize;
        &self.d_series[skip.min(self.d_series.len())..]
    }

    /// Rows `t,D_t` with a header line.
    pub fn write_series_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,D_t")?;
        for (idx, d) in self.d_series.iter().enumerate() {
            writeln!(out, "{},{}", idx as u64 * self.record_every, d)?;
        }
        Ok(())
    }

    /// Rows `d,down,stay,up` with a header line.
    pub fn write_transitions_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "d,down,stay,up")?;
        for (d, [down, stay, up]) in self.transitions.iter().enumerate() {
            if down + stay + up > 0 {
                writeln!(out, "{d},{down},{stay},{up}")?;
            }
        }
        Ok(())
    }
}

/// Two heat-bath chains conditioned on `X_k = +1` and `X_k = -1`, updated
/// with shared `(site, u)`.
pub fn monotone_coupled_pair(
    model: &IsingModel,
    k: usize,
    config: &ChainConfig,
) -> Result<CouplingTrace> {
    coupled_pair(model, k, config, &[])
}

fn coupled_pair(
    model: &IsingModel,
    k: usize,
    config: &ChainConfig,
    extra: &[usize],
) -> Result<CouplingTrace> {
    let n = model.n();
    if n < 2 {
        return Err(Error::Dimension(
            "a coupled pair needs at least two spins".into(),
        ));
    }
    if k >= n {
        return Err(Error::SiteOutOfRange { index: k, n });
    }
    config.validate(n)?;
    let mut held = vec![false; n];
    held[k] = true;
    for &site in extra {
        if site >= n {
            return Err(Error::SiteOutOfRange { index: site, n });
        }
        if std::mem::replace(&mut held[site], true) {
            return Err(Error::InvalidPins(format!("site {site} pinned twice")));
        }
    }
    for &(site, _) in &config.pins {
        if std::mem::replace(&mut held[site], true) {
            return Err(Error::InvalidPins(format!("site {site} pinned twice")));
        }
    }

    let mut rng = rng::stream(config.seed, config.stream);
    let start = initial_state(n, &config.pins, &mut rng);
    let mut upper = start.clone();
    let mut lower = start;
    upper.set(k, 1);
    lower.set(k, -1);
    for &site in extra {
        upper.set(site, 1);
        lower.set(site, -1);
    }
    // Sites other than k; held ones are drawn but never change.
    let candidates: Vec<usize> = (0..n).filter(|&j| j != k).collect();
    let differs = |a: &SpinConfig, b: &SpinConfig, j: usize| (a.get(j) != b.get(j)) as i64;
    let mut d: i64 = candidates.iter().map(|&j| differs(&upper, &lower, j)).sum();
    let mut violating: i64 = (0..n).filter(|&j| lower.get(j) > upper.get(j)).count() as i64;

    let mut d_series = Vec::with_capacity((config.steps / config.record_every) as usize + 1);
    d_series.push(d as u32);
    let mut transitions = vec![[0u64; 3]; n];
    let mut monotone_violations = 0u64;

    for step in 1..=config.steps {
        let site = candidates[rng.random_range(0..candidates.len())];
        let u: f64 = rng.random();
        let before = d;
        if !held[site] {
            let was_diff = differs(&upper, &lower, site);
            let was_bad = (lower.get(site) > upper.get(site)) as i64;
            let up = heat_bath_spin(model, upper.as_slice(), site, u);
            let lo = heat_bath_spin(model, lower.as_slice(), site, u);
            upper.set(site, up);
            lower.set(site, lo);
            d += differs(&upper, &lower, site) - was_diff;
            violating += (lo > up) as i64 - was_bad;
        }
        assert!(
            (d - before).abs() <= 1,
            "disagreement jumped from {before} to {d}"
        );
        if violating > 0 {
            monotone_violations += 1;
        }
        if step > config.burn_in {
            transitions[before as usize][(d - before + 1) as usize] += 1;
        }
        if step % config.record_every == 0 {
            d_series.push(d as u32);
        }
    }

    Ok(CouplingTrace {
        n,
        k,
        extra_pins: extra.to_vec(),
        steps: config.steps,
        burn_in: config.burn_in,
        record_every: config.record_every,
        d_series,
        transitions,
        final_states: (upper, lower),
        monotone_violations,
        ferromagnetic: model.is_ferromagnetic(),
    })
}

/// Empirical one-step statistics of `D_t` at one level against the drift
/// and up-probability bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftRow {
    pub d: usize,
    pub visits: u64,
    pub mean_drift: f64,
    pub drift_se: f64,
    /// `(-(1-α)d + α + p)/(n-1)` with `p` pinned disagreements.
    pub drift_bound: f64,
    pub up_prob: f64,
    pub up_se: f64,
    /// `α(d+1)/(n-1)`.
    pub up_bound: f64,
}

/// Pool transition counts over traces and tabulate per level; levels never
/// visited are omitted.
pub fn drift_statistics(traces: &[CouplingTrace], model: &IsingModel) -> Result<Vec<DriftRow>> {
    let first = traces
        .first()
        .ok_or_else(|| Error::OutOfRange("no traces supplied".into()))?;
    let n = model.n();
    let pinned = first.pinned_disagreements();
    if traces
        .iter()
        .any(|t| t.n != n || t.pinned_disagreements() != pinned)
    {
        return Err(Error::Dimension(
            "traces must share the model size and number of pinned disagreements".into(),
        ));
    }
    let alpha = dobrushin_report(model).alpha;
    let scale = (n - 1) as f64;
    let mut rows = Vec::new();
    for d in 0..n {
        let [down, stay, up] = traces.iter().fold([0u64; 3], |acc, t| {
            let c = t.transitions[d];
            [acc[0] + c[0], acc[1] + c[1], acc[2] + c[2]]
        });
        let visits = down + stay + up;
        if visits == 0 {
            continue;
        }
        let v = visits as f64;
        let mean = (up as f64 - down as f64) / v;
        let second = (up + down) as f64 / v;
        let up_prob = up as f64 / v;
        rows.push(DriftRow {
            d,
            visits,
            mean_drift: mean,
            drift_se: ((second - mean * mean).max(0.0) / v).sqrt(),
            drift_bound: (-(1.0 - alpha) * d as f64 + alpha + pinned as f64) / scale,
            up_prob,
            up_se: (up_prob * (1.0 - up_prob) / v).sqrt(),
            up_bound: alpha * (d as f64 + 1.0) / scale,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometricFit {
    /// First level of the fitted tail.
    pub d1: usize,
    /// Prefactor `c` in `p_d ≈ c·rate^d`.
    pub c: f64,
    pub rate: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryDisagreement {
    pub pinned_disagreements: usize,
    pub samples: usize,
    pub counts: Vec<u64>,
    pub pmf: Vec<f64>,
    pub mean: f64,
    pub mean_se: f64,
    pub second_moment: f64,
    pub second_moment_se: f64,
    pub fit: Option<GeometricFit>,
    /// First- and second-half means of the post-burn-in samples.
    pub half_means: (f64, f64),
    pub half_se: f64,
    /// Half means agree within two standard errors.
    pub burn_in_ok: bool,
}

/// Stationary law of `D` for the pair conditioned on `X_k`, with the sites in
/// `extra_pins` held at `+1` in the upper chain and `-1` in the lower chain.
pub fn stationary_disagreement(
    model: &IsingModel,
    k: usize,
    config: &ChainConfig,
    extra_pins: &[usize],
) -> Result<(StationaryDisagreement, CouplingTrace)> {
    let trace = coupled_pair(model, k, config, extra_pins)?;
    let summary = summarize_disagreement(&trace)?;
    Ok((summary, trace))
}

pub fn summarize_disagreement(trace: &CouplingTrace) -> Result<StationaryDisagreement> {
    let samples = trace.stationary_samples();
    if samples.len() < 4 {
        return Err(Error::OutOfRange("too few post-burn-in samples".into()));
    }
    let max = *samples.iter().max().unwrap_or(&0) as usize;
    let mut counts = vec![0u64; max + 1];
    for &d in samples {
        counts[d as usize] += 1;
    }
    let total = samples.len() as f64;
    let pmf: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let series: Vec<f64> = samples.iter().map(|&d| d as f64).collect();
    let squares: Vec<f64> = series.iter().map(|d| d * d).collect();
    let (mean, mean_se) = batch_mean_se(&series, BATCHES);
    let (second_moment, second_moment_se) = batch_mean_se(&squares, BATCHES);
    let half = series.len() / 2;
    let (m1, se1) = batch_mean_se(&series[..half], BATCHES / 2);
    let (m2, se2) = batch_mean_se(&series[half..], BATCHES / 2);
    let half_se = (se1 * se1 + se2 * se2).sqrt();
    let burn_in_ok = (m1 - m2).abs() <= 2.0 * half_se || m1 == m2;

    Ok(StationaryDisagreement {
        pinned_disagreements: trace.pinned_disagreements(),
        samples: samples.len(),
        fit: geometric_tail_fit(&counts),
        counts,
        pmf,
        mean,
        mean_se,
        second_moment,
        second_moment_se,
        half_means: (m1, m2),
        half_se,
        burn_in_ok,
    })
}

/// Least-squares fit of `log p_d` on `d` (weighted by counts) over the tail
/// starting at the first level beyond the mode where `p_d < 0.1·p_mode`.
pub fn geometric_tail_fit(counts: &[u64]) -> Option<GeometricFit> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let (mode, &peak) = counts
        .iter()
        .enumerate()
        .max_by_key(|&(d, c)| (*c, usize::MAX - d))?;
    let d1 = (mode + 1..counts.len()).find(|&d| (counts[d] as f64) < 0.1 * peak as f64)?;
    let (xs, ys, ws): (Vec<f64>, Vec<f64>, Vec<f64>) = counts[d1..]
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(off, &c)| ((d1 + off) as f64, (c as f64 / total as f64).ln(), c as f64))
        .fold((vec![], vec![], vec![]), |mut acc, (x, y, w)| {
            acc.0.push(x);
            acc.1.push(y);
            acc.2.push(w);
            acc
        });
    let fit: LinearFit = linear_fit(&xs, &ys, Some(&ws))?;
    Some(GeometricFit {
        d1,
        c: fit.intercept.exp(),
        rate: fit.slope.exp(),
        points: fit.points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{clamp, moments, ExactEngine};
    use crate::lattice::random_dobrushin_ferromagnet;
    use crate::model::{random_model, validate_model};

    fn pair(a: f64, h: [f64; 2]) -> IsingModel {
        validate_model(&[vec![0.0, a], vec![a, 0.0]], &h).unwrap()
    }

    #[test]
    fn heat_bath_threshold_convention() {
        let free = IsingModel::product(vec![0.0; 2]).unwrap();
        let x = SpinConfig::all(2, -1);
        assert_eq!(heat_bath_step(&free, &x, 0, 0.49).get(0), 1);
        assert_eq!(heat_bath_step(&free, &x, 0, 0.5).get(0), -1);
        assert_eq!(heat_bath_step(&free, &x, 0, 0.5).get(1), -1);

        let strong = IsingModel::product(vec![20.0, 0.0]).unwrap();
        assert_eq!(heat_bath_step(&strong, &x, 0, 0.999).get(0), 1);

        let a = 0.3;
        let m = pair(a, [0.0, 0.0]);
        let x = SpinConfig::new(vec![-1, 1]).unwrap();
        let threshold = (1.0 + a.tanh()) / 2.0;
        assert_eq!(heat_bath_step(&m, &x, 0, threshold - 1e-9).get(0), 1);
        assert_eq!(heat_bath_step(&m, &x, 0, threshold + 1e-9).get(0), -1);
    }

    #[test]
    fn config_validation() {
        assert!(ChainConfig::new(10, 10, 0).validate(3).is_err());
        assert!(ChainConfig::new(10, 0, 0)
            .with_record_every(0)
            .validate(3)
            .is_err());
        assert!(ChainConfig::new(10, 0, 0)
            .with_pins(vec![(0, 1), (0, 1)])
            .validate(3)
            .is_err());
        assert!(ChainConfig::new(10, 0, 0)
            .with_pins(vec![(5, 1)])
            .validate(3)
            .is_err());
        assert!(ChainConfig::new(10, 0, 0)
            .with_pins(vec![(1, 1)])
            .validate(3)
            .is_ok());
    }

    #[test]
    fn free_spins_have_zero_magnetization() {
        let m = IsingModel::product(vec![0.0; 6]).unwrap();
        let cfg = ChainConfig::new(300_000, 1_000, 1).with_record_every(6);
        let s = run_chain(
            &m,
            &cfg,
            &Observables {
                lags: vec![1, 5],
                ..Default::default()
            },
        )
        .unwrap();
        assert!(s.magnetization_mean.abs() < 4.0 * s.magnetization_se);
        assert_eq!(s.autocorrelation.len(), 2);
    }

    #[test]
    fn chain_matches_exact_means_and_correlations() {
        let mut r = rng::stream(41, 0);
        let model = random_model(10, 0.08, 0.5, &mut r);
        let exact = moments(&model, &DirectionVector::uniform(10)).unwrap();
        let cfg = ChainConfig::new(2_000_000, 10_000, 2).with_record_every(10);
        let obs = Observables {
            pair_correlations: true,
            ..Default::default()
        };
        let s = run_chain(&model, &cfg, &obs).unwrap();
        let pair = s.pair.as_ref().unwrap();
        let cov = s.cov.as_ref().unwrap();
        let cov_se = s.cov_se.as_ref().unwrap();
        for i in 0..10 {
            assert!(
                (s.mean[i] - exact.mean[i]).abs() < 4.0 * s.mean_se[i],
                "site {i}"
            );
            for k in (i + 1)..10 {
                assert!(
                    (cov[i][k] - exact.cov[i][k]).abs() < 4.0 * cov_se[i][k],
                    "pair {i},{k}"
                );
                assert!(pair[i][k].abs() <= 1.0);
            }
        }
    }

    #[test]
    fn pinned_chain_matches_clamped_model() {
        let mut r = rng::stream(42, 0);
        let model = random_model(8, 0.15, 0.3, &mut r);
        let reduced = clamp(&model, &[(0, 1)]).unwrap();
        let exact = moments(&reduced, &DirectionVector::uniform(7)).unwrap();
        let cfg = ChainConfig::new(1_000_000, 10_000, 3)
            .with_pins(vec![(0, 1)])
            .with_record_every(7);
        let s = run_chain(&model, &cfg, &Observables::default()).unwrap();
        assert_eq!(s.mean[0], 1.0);
        for i in 1..8 {
            assert!(
                (s.mean[i] - exact.mean[i - 1]).abs() < 4.0 * s.mean_se[i],
                "site {i}"
            );
        }
    }

    #[test]
    fn sampled_states_match_run_chain() {
        let mut r = rng::stream(44, 0);
        let model = random_model(5, 0.2, 0.2, &mut r);
        let cfg = ChainConfig::new(5_000, 100, 2).with_record_every(7);
        let states = sample_chain(&model, &cfg).unwrap();
        let stats = run_chain(&model, &cfg, &Observables::default()).unwrap();
        assert_eq!(states.len(), stats.samples);
        let mean0 = states.iter().map(|x| x.get(0) as f64).sum::<f64>() / states.len() as f64;
        assert!((mean0 - stats.mean[0]).abs() < 1e-12);
    }

    #[test]
    fn chains_are_deterministic() {
        let mut r = rng::stream(43, 0);
        let model = random_model(6, 0.2, 0.2, &mut r);
        let cfg = ChainConfig::new(50_000, 100, 9);
        let a = monotone_coupled_pair(&model, 0, &cfg).unwrap();
        let b = monotone_coupled_pair(&model, 0, &cfg).unwrap();
        assert_eq!(a.d_series, b.d_series);
        assert_eq!(a.transitions, b.transitions);
        let obs = Observables::default();
        let a = run_chain(&model, &cfg, &obs).unwrap();
        let b = run_chain(&model, &cfg, &obs).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.final_state, b.final_state);
    }

    #[test]
    fn independent_spins_never_disagree() {
        let m = IsingModel::product(vec![0.1; 5]).unwrap();
        let t = monotone_coupled_pair(&m, 2, &ChainConfig::new(20_000, 0, 4)).unwrap();
        assert!(t.d_series.iter().all(|&d| d == 0));
        let (s, _) =
            stationary_disagreement(&m, 2, &ChainConfig::new(20_000, 1_000, 4), &[]).unwrap();
        assert_eq!(s.pmf, vec![1.0]);
        assert!(s.fit.is_none());
        assert_eq!(s.mean, 0.0);
    }

    #[test]
    fn two_spin_disagreement_matches_tanh_gap() {
        let (a, h1) = (0.6, 0.2);
        let m = pair(a, [h1, 0.0]);
        let cfg = ChainConfig::new(400_000, 1_000, 5);
        let (s, t) = stationary_disagreement(&m, 1, &cfg, &[]).unwrap();
        assert_eq!(t.monotone_violations, 0);
        let expect = 0.5 * ((h1 + a).tanh() - (h1 - a).tanh()).abs();
        let p1 = s.pmf.get(1).copied().unwrap_or(0.0);
        let se = (expect * (1.0 - expect) / s.samples as f64).sqrt();
        // Consecutive samples are correlated only through site-1 refreshes,
        // which happen every step here, so the binomial SE is accurate.
        assert!((p1 - expect).abs() < 4.0 * se, "{p1} vs {expect}");
    }

    #[test]
    fn ferromagnetic_pair_stays_ordered() {
        let m = random_dobrushin_ferromagnet(30, 0.5, 3, 0.2, 7).unwrap();
        let t = monotone_coupled_pair(&m, 4, &ChainConfig::new(1_000_000, 0, 8)).unwrap();
        assert!(t.ferromagnetic);
        assert_eq!(t.monotone_violations, 0);
        assert!(t
            .d_series
            .windows(2)
            .all(|w| (w[0] as i64 - w[1] as i64).abs() <= 1));
    }

    #[test]
    fn antiferromagnet_is_flagged() {
        let m = pair(-0.5, [0.0, 0.0]);
        let t = monotone_coupled_pair(&m, 0, &ChainConfig::new(10_000, 0, 1)).unwrap();
        assert!(!t.ferromagnetic);
        assert!(t.monotone_violations > 0);
    }

    #[test]
    fn drift_of_independent_spins_respects_bound() {
        let m = IsingModel::product(vec![0.0; 12]).unwrap();
        // Start with disagreements by pinning three sites oppositely.
        let cfg = ChainConfig::new(200_000, 0, 6);
        let (_, t) = stationary_disagreement(&m, 0, &cfg, &[1, 2, 3]).unwrap();
        let rows = drift_statistics(&[t], &m).unwrap();
        for r in &rows {
            assert!(r.mean_drift <= r.drift_bound + 3.0 * r.drift_se + 1e-12);
            assert!(r.up_prob <= r.up_bound + 3.0 * r.up_se + 1e-12);
            assert_eq!(r.up_prob, 0.0);
        }
    }

    #[test]
    fn drift_statistics_rejects_mixed_traces() {
        let m = IsingModel::product(vec![0.0; 4]).unwrap();
        let cfg = ChainConfig::new(100, 0, 1);
        let a = monotone_coupled_pair(&m, 0, &cfg).unwrap();
        let (_, b) = stationary_disagreement(&m, 0, &cfg, &[1]).unwrap();
        assert!(drift_statistics(&[a, b], &m).is_err());
        assert!(drift_statistics(&[], &m).is_err());
    }

    #[test]
    fn geometric_fit_recovers_rate() {
        let counts: Vec<u64> = (0..12)
            .map(|d| (1e6 * 0.5f64.powi(d)).round() as u64)
            .collect();
        let fit = geometric_tail_fit(&counts).unwrap();
        assert_eq!(fit.d1, 4);
        assert!((fit.rate - 0.5).abs() < 1e-3);
        assert!(geometric_tail_fit(&[10]).is_none());
    }

    #[test]
    fn trace_export() {
        let m = IsingModel::product(vec![0.0; 3]).unwrap();
        let t =
            monotone_coupled_pair(&m, 0, &ChainConfig::new(4, 0, 1).with_record_every(2)).unwrap();
        let mut buf = Vec::new();
        t.write_series_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,D_t\n0,0\n2,0\n4,0\n");
        let mut buf = Vec::new();
        t.write_transitions_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "d,down,stay,up\n0,0,4,0\n");
        let _ = ExactEngine::default();
    }
}
