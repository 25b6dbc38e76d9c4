//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use ising_clt::bound::{
    bound_value, contracted_statistic, optimize_epsilon, sup_over_fields, SupStrategy, EPSILON_MAX,
    PRODUCT_SUP,
};
use ising_clt::embedding::{
    derivative_identity_check, sample_interpolant, variance_identity_estimate,
};
use ising_clt::exact::{DirectionVector, ExactEngine, ProjectionPmf, DEFAULT_MERGE_TOL};
use ising_clt::glauber::{
    drift_statistics, monotone_coupled_pair, stationary_disagreement, ChainConfig,
};
use ising_clt::io::write_model;
use ising_clt::lattice::{
    build_box_model, clt_convergence_experiment, correlation_decay_profile,
    random_dobrushin_ferromagnet, CltEstimator, Estimator, LatticeSpec,
};
use ising_clt::model::random_model;
use ising_clt::oracle::brute_force_oracle_moments;
use ising_clt::stats::linear_fit;
use ising_clt::wasserstein::{
    normal_quantile, quantile_antiderivatives, w2_discrete_vs_normal, w2_normal_normal,
    NormalParams,
};
use ising_clt::{rng, IsingModel};
use rand::Rng;

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Outcome);

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn exact_w2(model: &IsingModel, theta: &DirectionVector) -> Result<f64, String> {
    let pmf = ExactEngine::default()
        .exact_pmf_of_projection(model, theta, DEFAULT_MERGE_TOL)
        .map_err(err)?;
    let reference = NormalParams::new(pmf.mean(), pmf.variance().sqrt()).map_err(err)?;
    Ok(w2_discrete_vs_normal(&pmf, reference))
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut g = rng::stream(101, 0);
    let mut worst: f64 = 0.0;
    for j in 0..200 {
        let n = 2 + j % 9;
        let model = random_model(
            n,
            g.random_range(0.0..1.0),
            g.random_range(0.0..1.5),
            &mut g,
        );
        let raw: Vec<f64> = (0..n).map(|_| g.random_range(-1.0..1.0)).collect();
        let theta = DirectionVector::normalized(raw).map_err(err)?;
        let fast = ExactEngine::default()
            .moments(&model, &theta)
            .map_err(err)?;
        let slow = brute_force_oracle_moments(&model, &theta).map_err(err)?;
        worst = worst
            .max((fast.log_partition - slow.log_partition).abs())
            .max((fast.mu_n - slow.mu_n).abs())
            .max((fast.sigma2_n - slow.sigma2_n).abs())
            .max(max_abs(&fast.mean, &slow.mean));
        for i in 0..n {
            worst = worst
                .max(max_abs(&fast.cov[i], &slow.cov[i]))
                .max(max_abs(&fast.m[i], &slow.m[i]));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst <= 1e-10 && secs < 60.0,
        format!("max abs diff {worst:.3e} over 200 models, {secs:.2} s"),
    ))
}

fn product_closed_forms() -> Outcome {
    let mut worst: f64 = 0.0;
    for &h in &[-1.7, -0.4, 0.0, 0.3, 0.9, 2.2] {
        let model = IsingModel::product(vec![h, 0.5 * h + 0.1]).map_err(err)?;
        let m = ExactEngine::default()
            .moments(&model, &DirectionVector::basis(2, 0))
            .map_err(err)?;
        let mean = h.tanh();
        worst = worst
            .max((m.mean[0] - mean).abs())
            .max((m.m[0][0] + 2.0 * mean * (1.0 - mean * mean)).abs());
    }
    let h_star = (0.2f64).sqrt().atanh();
    let at_star = IsingModel::product(vec![h_star, 0.0]).map_err(err)?;
    let stat = contracted_statistic(&at_star, &DirectionVector::basis(2, 0)).map_err(err)?;
    let scan = sup_over_fields(
        &IsingModel::product(vec![0.0]).map_err(err)?,
        &DirectionVector::uniform(1),
        &SupStrategy::uniform_scan(),
    )
    .map_err(err)?;
    let u_scan = scan.field[0].tanh().powi(2);
    worst = worst
        .max((stat - PRODUCT_SUP).abs())
        .max((scan.value - PRODUCT_SUP).abs());
    Ok((
        worst <= 1e-9 && (u_scan - 0.2).abs() < 1e-4,
        format!("max abs err {worst:.3e}, scanned maximizer u = {u_scan:.6}"),
    ))
}

fn bound_validity() -> Outcome {
    let mut min_gap = f64::INFINITY;
    for &n in &[2usize, 4, 8, 12, 16] {
        let model = IsingModel::product(vec![0.0; n]).map_err(err)?;
        let theta = DirectionVector::uniform(n);
        let w = exact_w2(&model, &theta)?;
        let sup = sup_over_fields(&model, &theta, &SupStrategy::ProductClosedForm)
            .map_err(err)?
            .value;
        let grid = (1..=50).map(|j| EPSILON_MAX * j as f64 / 50.0);
        for eps in grid.chain(std::iter::once(optimize_epsilon(sup, 1.0).0)) {
            min_gap = min_gap.min(bound_value(eps, sup, 1.0) - w);
        }
    }
    Ok((min_gap >= 0.0, format!("min(bound − W2) = {min_gap:.4}")))
}

fn bound_slope() -> Outcome {
    let ns: Vec<f64> = (4..=12).map(|k| 2f64.powi(k)).collect();
    let x: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let y: Vec<f64> = ns
        .iter()
        .map(|&n| optimize_epsilon(PRODUCT_SUP / n, 1.0).1.ln())
        .collect();
    let slope = linear_fit(&x, &y, None).ok_or("degenerate fit")?.slope;
    Ok((
        (slope + 1.0 / 7.0).abs() <= 0.03,
        format!("slope {slope:.4} over n = 2^4..2^12, target -1/7 ± 0.03"),
    ))
}

fn derivative_identity() -> Outcome {
    let start = Instant::now();
    let mut g = rng::stream(404, 0);
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for j in 0..12 {
        let n = 3 + j % 6;
        let model = random_model(n, 0.6, 0.8, &mut g);
        for (s, &t) in [0.3, 0.6].iter().enumerate() {
            let (_, y) = sample_interpolant(&model, t, 1000 * j as u64 + s as u64).map_err(err)?;
            for _ in 0..6 {
                let (i, l, k) = (
                    g.random_range(0..n),
                    g.random_range(0..n),
                    g.random_range(0..n),
                );
                let c = derivative_identity_check(&model, t, &y, i, l, k, 1e-5).map_err(err)?;
                worst = worst.max(c.rel_err);
                checks += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst <= 1e-4 && secs < 120.0,
        format!("max rel err {worst:.3e} over {checks} triples, {secs:.2} s"),
    ))
}

fn variance_identity() -> Outcome {
    let mut g = rng::stream(505, 0);
    let mut lines = Vec::new();
    let mut ok = true;
    for (j, &n) in [4usize, 6, 8].iter().enumerate() {
        let model = random_model(n, 0.5, 0.5, &mut g);
        let v = variance_identity_estimate(
            &model,
            &DirectionVector::uniform(n),
            16,
            400,
            0.95,
            50 + j as u64,
        )
        .map_err(err)?;
        ok &= v.within(3.0);
        lines.push(format!(
            "n={n}: {:.4} ± {:.4} vs σ² {:.4}",
            v.integral_estimate, v.standard_error, v.sigma2_exact
        ));
    }
    Ok((ok, lines.join("; ")))
}

fn ferromagnets() -> Result<Vec<IsingModel>, String> {
    (0..3)
        .map(|s| random_dobrushin_ferromagnet(30, 0.5, 3, 0.2, 600 + s).map_err(err))
        .collect()
}

fn coupling_monotonicity() -> Outcome {
    let mut updates = 0u64;
    let mut violations = 0u64;
    for (s, model) in ferromagnets()?.iter().enumerate() {
        let trace = monotone_coupled_pair(model, s, &ChainConfig::new(400_000, 1000, s as u64))
            .map_err(err)?;
        updates += trace.steps;
        violations += trace.monotone_violations;
    }
    Ok((
        violations == 0 && updates >= 1_000_000,
        format!("{violations} violations over {updates} coupled updates"),
    ))
}

fn drift_inequality() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut levels = 0;
    for (s, model) in ferromagnets()?.iter().enumerate() {
        let traces = (0..4)
            .map(|r| {
                monotone_coupled_pair(
                    model,
                    0,
                    &ChainConfig::new(200_000, 2000, 700 + s as u64).with_stream(r),
                )
                .map_err(err)
            })
            .collect::<Result<Vec<_>, _>>()?;
        for row in drift_statistics(&traces, model).map_err(err)? {
            if row.visits < 100 {
                continue;
            }
            levels += 1;
            worst = worst
                .max(
                    (row.mean_drift - row.drift_bound - 3.0 * row.drift_se)
                        / row.drift_bound.abs().max(1e-12),
                )
                .max((row.up_prob - row.up_bound - 3.0 * row.up_se) / row.up_bound);
        }
    }
    Ok((
        worst <= 0.0,
        format!("{levels} levels checked, worst relative excess {worst:.3}"),
    ))
}

fn geometric_tail() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for &alpha in &[0.2, 0.5] {
        let model = random_dobrushin_ferromagnet(50, alpha, 3, 0.2, 800).map_err(err)?;
        let cfg = ChainConfig::new(2_000_000, 20_000, 801);
        let mut means = Vec::new();
        for (j, extra) in [vec![], vec![10, 20], vec![10, 20, 30, 40]]
            .iter()
            .enumerate()
        {
            let (s, _) =
                stationary_disagreement(&model, 0, &cfg.clone().with_stream(j as u64), extra)
                    .map_err(err)?;
            if extra.is_empty() {
                let rate = s.fit.map(|f| f.rate);
                ok &= rate.is_some_and(|r| r < 1.0);
                notes.push(format!(
                    "α={alpha}: rate {:?}",
                    rate.map(|r| (r * 1e4).round() / 1e4)
                ));
            }
            let d = extra.len() as f64;
            ok &= s.mean <= (alpha + d) / (1.0 - alpha) + 3.0 * s.mean_se;
            means.push((s.mean, s.mean_se));
        }
        let curvature = means[2].0 - 2.0 * means[1].0 + means[0].0;
        let se = (means[2].1.powi(2) + 4.0 * means[1].1.powi(2) + means[0].1.powi(2)).sqrt();
        ok &= curvature <= 3.0 * se;
        notes.push(format!(
            "E D = {:.3}, {:.3}, {:.3} for d = 0, 2, 4",
            means[0].0, means[1].0, means[2].0
        ));
    }
    Ok((ok, notes.join("; ")))
}

fn correlation_decay() -> Outcome {
    let spec = LatticeSpec::chain(16, 0.2);
    let exact = correlation_decay_profile(&spec, 0, &Estimator::Exact).map_err(err)?;
    let fit = exact.fit.ok_or("no exact fit")?;
    let mcmc = correlation_decay_profile(
        &spec,
        0,
        &Estimator::Mcmc {
            config: ChainConfig::new(4_000_000, 40_000, 909).with_record_every(4),
        },
    )
    .map_err(err)?;
    let mfit = mcmc.fit.ok_or("no mcmc fit")?;
    let z = (mfit.slope - fit.slope).abs() / mfit.slope_se;
    Ok((
        fit.r_squared >= 0.95 && fit.slope < 0.0 && z <= 3.0,
        format!(
            "exact slope {:.4} R² {:.4}; mcmc slope {:.4} ± {:.4} ({z:.2} SE)",
            fit.slope, fit.r_squared, mfit.slope, mfit.slope_se
        ),
    ))
}

fn clt_trend() -> Outcome {
    let chain: Vec<IsingModel> = [8usize, 12, 16, 20]
        .iter()
        .map(|&n| build_box_model(&LatticeSpec::chain(n, 0.2)).map_err(err))
        .collect::<Result<_, _>>()?;
    let exact = clt_convergence_experiment(&chain, &CltEstimator::Exact, false).map_err(err)?;
    let exact_ok = exact.windows(2).all(|w| w[1].w2 < w[0].w2);
    let mut rows = Vec::new();
    for &n in &[64usize, 128, 256] {
        let model = random_dobrushin_ferromagnet(n, 0.5, 3, 0.0, 1000).map_err(err)?;
        let sweeps = 20_000u64;
        let cfg = ChainConfig::new((sweeps + 1000) * n as u64, 1000 * n as u64, 1001)
            .with_record_every(n as u64);
        let est = CltEstimator::Mcmc {
            config: cfg,
            seeds: vec![11, 12, 13, 14],
        };
        rows.extend(
            clt_convergence_experiment(std::slice::from_ref(&model), &est, false).map_err(err)?,
        );
    }
    let mcmc_ok = rows.windows(2).all(|w| {
        let se = (w[0].w2_se.unwrap_or(0.0).powi(2) + w[1].w2_se.unwrap_or(0.0).powi(2)).sqrt();
        w[1].w2 <= w[0].w2 + 2.0 * se
    });
    let fmt = |r: &[ising_clt::lattice::CltRow]| {
        r.iter()
            .map(|r| format!("{}:{:.4}", r.n, r.w2))
            .collect::<Vec<_>>()
            .join(" ")
    };
    Ok((
        exact_ok && mcmc_ok,
        format!("chain {} | ferromagnet {}", fmt(&exact), fmt(&rows)),
    ))
}

fn wasserstein_closed_forms() -> Outcome {
    let coin = ProjectionPmf::new(vec![(-1.0, 0.5), (1.0, 0.5)]).map_err(err)?;
    let w_coin = w2_discrete_vs_normal(&coin, NormalParams::standard());
    let mut nn: f64 = 0.0;
    for &(m1, s1, m2, s2) in &[
        (0.0, 1.0, 1.0, 2.0),
        (-3.0, 0.5, 2.5, 0.25),
        (1e3, 7.0, 1e3, 7.0),
    ] {
        let w = w2_normal_normal(
            NormalParams::new(m1, s1).map_err(err)?,
            NormalParams::new(m2, s2).map_err(err)?,
        );
        nn = nn.max((w - ((m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2)).sqrt()).abs());
    }
    let mut fd: f64 = 0.0;
    let h = 1e-6;
    for &u in &[0.01, 0.1, 0.3, 0.5, 0.77, 0.95, 0.99] {
        let (lo, hi) = (
            quantile_antiderivatives(u - h),
            quantile_antiderivatives(u + h),
        );
        let q = normal_quantile(u).map_err(err)?;
        fd = fd
            .max(((hi.0 - lo.0) / (2.0 * h) - q).abs())
            .max(((hi.1 - lo.1) / (2.0 * h) - q * q).abs());
    }
    Ok((
        (w_coin - 0.635792).abs() <= 1e-6 && nn <= 1e-12 && fd <= 1e-6,
        format!("coin {w_coin:.7}, normal-normal err {nn:.1e}, antiderivative fd err {fd:.1e}"),
    ))
}

fn run_cli(dir: &Path, threads: usize, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ising-clt"))
        .current_dir(dir)
        .env("ISING_CLT_THREADS", threads.to_string())
        .args(args)
        .output()
        .map_err(err)?;
    if !out.status.success() {
        return Err(format!(
            "{args:?} exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

fn scratch_dir() -> Result<PathBuf, String> {
    let dir = std::env::temp_dir().join(format!("ising-clt-validation-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(err)?;
    Ok(dir)
}

fn determinism() -> Outcome {
    let dir = scratch_dir()?;
    let mut g = rng::stream(1212, 0);
    write_model(&random_model(8, 0.1, 0.4, &mut g), dir.join("random.json")).map_err(err)?;
    write_model(
        &random_dobrushin_ferromagnet(16, 0.5, 3, 0.2, 1213).map_err(err)?,
        dir.join("ferro.json"),
    )
    .map_err(err)?;
    std::fs::write(
        dir.join("run.json"),
        r#"{"command": "exact-stats", "model": "random.json", "seed": 5, "args": {"pmf": true}}"#,
    )
    .map_err(err)?;
    let cases: Vec<Vec<&str>> = vec![
        vec!["--model", "random.json", "exact-stats", "--pmf"],
        vec!["--model", "random.json", "spectral"],
        vec!["--model", "random.json", "dobrushin"],
        vec![
            "--model",
            "random.json",
            "--seed",
            "3",
            "bound",
            "--strategy",
            "multistart",
            "--starts",
            "4",
            "--exact-w2",
        ],
        vec!["--model", "random.json", "w2"],
        vec!["w2", "--coin"],
        vec![
            "--model",
            "random.json",
            "--seed",
            "9",
            "sample",
            "--count",
            "50",
            "--method",
            "exact",
        ],
        vec![
            "--model",
            "random.json",
            "--seed",
            "9",
            "sample",
            "--count",
            "50",
            "--method",
            "glauber",
            "--pins",
            "0:+1",
        ],
        vec![
            "--model",
            "ferro.json",
            "--seed",
            "4",
            "couple",
            "--site",
            "0",
            "--steps",
            "50000",
            "--burn-in",
            "1000",
            "--replicas",
            "4",
        ],
        vec![
            "--model",
            "random.json",
            "--seed",
            "2",
            "embed",
            "--nodes",
            "4",
            "--reps",
            "40",
        ],
        vec!["lattice-decay", "--sides", "8", "--coupling", "0.3"],
        vec![
            "--seed",
            "8",
            "lattice-decay",
            "--sides",
            "4,4",
            "--estimator",
            "mcmc",
            "--steps",
            "100000",
            "--burn-in",
            "1000",
        ],
        vec![
            "clt-table",
            "--family",
            "chain",
            "--sizes",
            "6,8,10",
            "--with-bound",
        ],
        vec![
            "--seed",
            "6",
            "clt-table",
            "--family",
            "dobrushin",
            "--sizes",
            "16,32",
            "--estimator",
            "mcmc",
            "--sweeps",
            "500",
            "--burn-sweeps",
            "50",
        ],
        vec!["--seed", "7", "make-model", "--kind", "random", "--n", "5"],
        vec!["run", "--config", "run.json"],
    ];
    let mut mismatches = Vec::new();
    for args in &cases {
        let first = run_cli(&dir, 1, args)?;
        let again = run_cli(&dir, 1, args)?;
        let wide = run_cli(&dir, 4, args)?;
        if first.is_empty() || first != again || first != wide {
            mismatches.push(args.join(" "));
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok((
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!(
                "{} invocations identical across runs and 1/4 workers",
                cases.len()
            )
        } else {
            format!("differing output: {}", mismatches.join(" | "))
        },
    ))
}

fn main() -> ExitCode {
    let criteria: Vec<Criterion> = vec![
        ("1 oracle equivalence", oracle_equivalence),
        ("2 product-model closed forms", product_closed_forms),
        ("3a bound dominates exact W2", bound_validity),
        ("3b optimized bound slope", bound_slope),
        ("4 conditional covariance derivative", derivative_identity),
        ("5 variance identity", variance_identity),
        ("6 coupling monotonicity", coupling_monotonicity),
        ("7 drift and up-probability bounds", drift_inequality),
        ("8 geometric tail and linear growth", geometric_tail),
        ("9 correlation decay", correlation_decay),
        ("10 CLT trend", clt_trend),
        ("11 Wasserstein closed forms", wasserstein_closed_forms),
        ("12 determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
