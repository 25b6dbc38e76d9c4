use std::fmt;
use std::fs;

use clap::Parser;
use rayon::prelude::*;
use serde::Serialize;

use ising_clt::bound::{
    optimize_epsilon, sup_over_fields, theorem1_bound, SupStrategy, EPSILON_MAX,
};
use ising_clt::embedding::{
    derivative_identity_check, embedding_point, sample_interpolant, variance_identity_estimate,
};
use ising_clt::exact::{DirectionVector, ExactEngine, DEFAULT_MERGE_TOL};
use ising_clt::glauber::{
    drift_statistics, sample_chain, stationary_disagreement, ChainConfig, CouplingTrace,
    StationaryDisagreement,
};
use ising_clt::io::{model_to_json, parse_model, read_model};
use ising_clt::lattice::{
    build_box_model, clt_convergence_experiment, correlation_decay_profile,
    random_dobrushin_ferromagnet, Boundary, CltEstimator, Estimator, FieldSpec, LatticeSpec,
};
use ising_clt::model::{dobrushin_report, random_model, spectral_report, EigenMethod};
use ising_clt::wasserstein::{
    coin_reference_value, w2_discrete_vs_normal, w2_empirical, w2_normal_normal, NormalParams,
};
use ising_clt::{rng, IsingModel, ProjectionPmf};

use crate::output::{list, num, opt, Report};
use crate::{
    BoundArgs, Cli, CltTableArgs, Command, CoupleArgs, EmbedArgs, EstimatorArg, ExactStatsArgs,
    FamilyArg, LatticeDecayArgs, MakeModelArgs, ModelKind, SampleArgs, SampleMethod, SpectralArgs,
    StrategyArg, W2Args,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(ising_clt::Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<ising_clt::Error> for CliError {
    fn from(e: ising_clt::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Serialize)]
struct Resolved<'a, T: Serialize> {
    seed: u64,
    model: Option<String>,
    n: Option<usize>,
    model_label: Option<&'a str>,
    args: &'a T,
}

struct Ctx<'a> {
    cli: &'a Cli,
}

impl Ctx<'_> {
    fn model(&self) -> Result<IsingModel> {
        match (&self.cli.model, &self.cli.model_json) {
            (Some(path), None) => Ok(read_model(path)?),
            (None, Some(text)) => Ok(parse_model(text)?),
            (Some(_), Some(_)) => usage("give either --model or --model-json, not both"),
            (None, None) => usage("this command needs --model or --model-json"),
        }
    }

    fn report<T: Serialize>(&self, command: &str, model: Option<&IsingModel>, args: &T) -> Report {
        let resolved = Resolved {
            seed: self.cli.seed,
            model: self
                .cli
                .model
                .as_ref()
                .map(|p| p.display().to_string())
                .or_else(|| self.cli.model_json.as_ref().map(|_| "inline".to_string())),
            n: model.map(|m| m.n()),
            model_label: model.and_then(|m| m.label()),
            args,
        };
        let mut report = Report::new(self.cli.format, command, &resolved);
        report.note(format!("seed: {}", self.cli.seed));
        report
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.cli.out {
            Some(path) => fs::write(path, text)?,
            None => print!("{text}"),
        }
        Ok(())
    }
}

fn theta_for(n: usize, raw: &[f64]) -> Result<DirectionVector> {
    if raw.is_empty() {
        return Ok(DirectionVector::uniform(n));
    }
    if raw.len() != n {
        return usage(format!(
            "theta has {} entries for a model with {n} spins",
            raw.len()
        ));
    }
    Ok(DirectionVector::normalized(raw.to_vec())?)
}

fn parse_pins(raw: &[String]) -> Result<Vec<(usize, i8)>> {
    raw.iter()
        .map(|p| {
            let (site, spin) = p
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("pin {p:?} is not site:spin")))?;
            let site = site
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad pin site in {p:?}")))?;
            let spin = match spin.trim() {
                "+1" | "1" | "+" => 1,
                "-1" | "-" => -1,
                other => return usage(format!("bad pin spin {other:?}")),
            };
            Ok((site, spin))
        })
        .collect()
}

pub fn execute(cli: Cli) -> Result<()> {
    if let Command::Run(run) = &cli.command {
        let inner = config_to_cli(&fs::read_to_string(&run.config)?)?;
        if matches!(inner.command, Command::Run(_)) {
            return usage("a config document cannot invoke run");
        }
        return dispatch(&inner);
    }
    dispatch(&cli)
}

fn dispatch(cli: &Cli) -> Result<()> {
    let ctx = Ctx { cli };
    let text = match &cli.command {
        Command::ExactStats(a) => exact_stats(&ctx, a)?,
        Command::Spectral(a) => spectral(&ctx, a)?,
        Command::Dobrushin => dobrushin(&ctx)?,
        Command::Bound(a) => bound(&ctx, a)?,
        Command::W2(a) => w2(&ctx, a)?,
        Command::Sample(a) => sample(&ctx, a)?,
        Command::Couple(a) => couple(&ctx, a)?,
        Command::Embed(a) => embed(&ctx, a)?,
        Command::LatticeDecay(a) => lattice_decay(&ctx, a)?,
        Command::CltTable(a) => clt_table(&ctx, a)?,
        Command::MakeModel(a) => make_model(&ctx, a)?,
        Command::Run(_) => return usage("nested run"),
    };
    ctx.emit(&text)
}

/// Turn `{"command": c, "args": {...}, <global keys>}` into an argument list.
pub fn config_to_cli(text: &str) -> Result<Cli> {
    let doc: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config document: {e}")))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| CliError::Usage("config document must be an object".into()))?;
    let command = obj
        .get("command")
        .and_then(|c| c.as_str())
        .ok_or_else(|| CliError::Usage("config document needs a \"command\" string".into()))?;
    let mut argv = vec!["ising-clt".to_string()];
    let push = |argv: &mut Vec<String>, key: &str, value: &serde_json::Value| -> Result<()> {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            serde_json::Value::Bool(true) => argv.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                let parts: Vec<String> = items.iter().map(scalar_text).collect::<Result<_>>()?;
                argv.push(flag);
                argv.push(parts.join(","));
            }
            serde_json::Value::Object(_) if key == "model_json" || key == "model-json" => {
                argv.push(flag);
                argv.push(value.to_string());
            }
            other => {
                argv.push(flag);
                argv.push(scalar_text(other)?);
            }
        }
        Ok(())
    };
    for (key, value) in obj {
        if key != "command" && key != "args" {
            push(&mut argv, key, value)?;
        }
    }
    argv.push(command.to_string());
    if let Some(args) = obj.get("args") {
        let args = args
            .as_object()
            .ok_or_else(|| CliError::Usage("\"args\" must be an object".into()))?;
        for (key, value) in args {
            push(&mut argv, key, value)?;
        }
    }
    Cli::try_parse_from(&argv).map_err(|e| CliError::Usage(e.to_string()))
}

fn scalar_text(v: &serde_json::Value) -> Result<String> {
    match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        serde_json::Value::Bool(b) => Ok(b.to_string()),
        other => usage(format!("unsupported config value {other}")),
    }
}

fn pmf_rows(pmf: &ProjectionPmf) -> Vec<Vec<String>> {
    pmf.atoms()
        .iter()
        .map(|&(v, p)| vec![num(v), num(p)])
        .collect()
}

fn exact_stats(ctx: &Ctx, a: &ExactStatsArgs) -> Result<String> {
    let model = ctx.model()?;
    let theta = theta_for(model.n(), &a.theta)?;
    let engine = ExactEngine::with_cap(a.cap);
    let m = engine.moments(&model, &theta)?;
    let mut r = ctx.report("exact-stats", Some(&model), a);
    r.value("log_partition", m.log_partition);
    r.value("mu_n", m.mu_n);
    r.value("sigma2_n", m.sigma2_n);
    let n = model.n();
    r.table(
        "sites",
        &["i", "mean", "v"],
        (0..n)
            .map(|i| vec![i.to_string(), num(m.mean[i]), num(m.v[i])])
            .collect(),
    );
    let mut rows = Vec::new();
    for i in 0..n {
        for k in 0..n {
            rows.push(vec![
                i.to_string(),
                k.to_string(),
                num(m.cov[i][k]),
                num(m.m[i][k]),
            ]);
        }
    }
    r.table("pairs", &["i", "k", "cov", "m"], rows);
    if a.pmf {
        let pmf = engine.exact_pmf_of_projection(&model, &theta, DEFAULT_MERGE_TOL)?;
        r.table("projection_pmf", &["value", "probability"], pmf_rows(&pmf));
    }
    Ok(r.render())
}

fn spectral(ctx: &Ctx, a: &SpectralArgs) -> Result<String> {
    let model = ctx.model()?;
    let s = spectral_report(&model, a.tol)?;
    let mut r = ctx.report("spectral", Some(&model), a);
    r.value("lambda_min", s.lambda_min);
    r.value("lambda_max", s.lambda_max);
    r.value("spread", s.spread);
    r.value("psd_shift", s.psd_shift);
    r.value("high_temp_margin", s.high_temp_margin);
    r.scalar("poincare_constant", opt(s.poincare_constant));
    r.scalar(
        "method",
        match s.method {
            EigenMethod::Dense => "dense",
            EigenMethod::PowerIteration => "power-iteration",
        },
    );
    Ok(r.render())
}

fn dobrushin(ctx: &Ctx) -> Result<String> {
    let model = ctx.model()?;
    let d = dobrushin_report(&model);
    let mut r = ctx.report("dobrushin", Some(&model), &());
    r.value("alpha", d.alpha);
    r.value("beta", d.beta);
    r.value("gamma", d.gamma);
    r.table(
        "rows",
        &["i", "row_sum", "col_sum"],
        (0..model.n())
            .map(|i| vec![i.to_string(), num(d.row_sums[i]), num(d.col_sums[i])])
            .collect(),
    );
    Ok(r.render())
}

fn exact_w2_of(model: &IsingModel, theta: &DirectionVector) -> Result<(ProjectionPmf, f64)> {
    let pmf = ExactEngine::default().exact_pmf_of_projection(model, theta, DEFAULT_MERGE_TOL)?;
    let reference = NormalParams::new(pmf.mean(), pmf.variance().sqrt())?;
    let w = w2_discrete_vs_normal(&pmf, reference);
    Ok((pmf, w))
}

fn bound(ctx: &Ctx, a: &BoundArgs) -> Result<String> {
    let model = ctx.model()?;
    let theta = theta_for(model.n(), &a.theta)?;
    let strategy = match a.strategy {
        StrategyArg::UniformScan => SupStrategy::uniform_scan(),
        StrategyArg::Product => SupStrategy::ProductClosedForm,
        StrategyArg::Multistart => SupStrategy::MultistartAscent {
            starts: a.starts,
            spread: 2.0,
            seed: ctx.cli.seed,
        },
        StrategyArg::Grid => {
            let path = a
                .grid_file
                .as_ref()
                .ok_or_else(|| CliError::Usage("the grid strategy needs --grid-file".into()))?;
            let fields: Vec<Vec<f64>> = serde_json::from_str(&fs::read_to_string(path)?)
                .map_err(|e| CliError::Usage(format!("grid file: {e}")))?;
            SupStrategy::Grid { fields }
        }
    };
    let sup = sup_over_fields(&model, &theta, &strategy)?;
    let base = theorem1_bound(&model, 0.25, sup.value, a.cp)?;
    let cp = base.poincare_constant;
    let epsilon = match a.epsilon {
        Some(e) => e,
        None => optimize_epsilon(sup.value, cp)
            .0
            .clamp(f64::MIN_POSITIVE, EPSILON_MAX),
    };
    let mut report = theorem1_bound(&model, epsilon, sup.value, a.cp)?.with_sup(&sup);
    if a.exact_w2 {
        report = report.with_exact_w2(exact_w2_of(&model, &theta)?.1);
    }
    let mut r = ctx.report("bound", Some(&model), a);
    r.value("sup_estimate", sup.value);
    r.scalar("sup_strategy", sup.strategy);
    r.scalar(
        "sup_certainty",
        match sup.certainty {
            ising_clt::bound::SupCertainty::Exact => "EXACT",
            ising_clt::bound::SupCertainty::LowerBound => "LOWER-BOUND",
        },
    );
    r.scalar("achieving_field", list(&sup.field));
    r.scalar("evaluations", sup.evaluations.to_string());
    r.value("poincare_constant", report.poincare_constant);
    r.scalar(
        "poincare_overridden",
        report.poincare_overridden.to_string(),
    );
    r.value("epsilon", report.epsilon);
    r.scalar("epsilon_optimized", a.epsilon.is_none().to_string());
    r.value("bound_value", report.bound_value);
    r.scalar("exact_w2", opt(report.exact_w2));
    if a.epsilon_grid > 0 {
        let rows = (1..=a.epsilon_grid)
            .map(|j| {
                let e = EPSILON_MAX * j as f64 / a.epsilon_grid as f64;
                let b = ising_clt::bound::bound_value(e, sup.value, cp);
                vec![num(e), num(b)]
            })
            .collect();
        r.table("epsilon_grid", &["epsilon", "bound"], rows);
    }
    Ok(r.render())
}

fn w2(ctx: &Ctx, a: &W2Args) -> Result<String> {
    let mut r;
    if a.coin {
        r = ctx.report("w2", None, a);
        let coin = ProjectionPmf::new(vec![(-1.0, 0.5), (1.0, 0.5)])?;
        r.value("w2", w2_discrete_vs_normal(&coin, NormalParams::standard()));
        r.value("closed_form", coin_reference_value());
    } else if !a.normals.is_empty() {
        if a.normals.len() != 4 {
            return usage("--normals takes mean1,sd1,mean2,sd2");
        }
        r = ctx.report("w2", None, a);
        let p = NormalParams::new(a.normals[0], a.normals[1])?;
        let q = NormalParams::new(a.normals[2], a.normals[3])?;
        r.value("w2", w2_normal_normal(p, q));
    } else if let Some(path) = &a.samples {
        let values: Vec<f64> = fs::read_to_string(path)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("bad sample {l:?}")))
            })
            .collect::<Result<_>>()?;
        let count = values.len() as f64;
        let mean = values.iter().sum::<f64>() / count;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count).sqrt();
        let reference = NormalParams::new(a.ref_mean.unwrap_or(mean), a.ref_sd.unwrap_or(sd))?;
        r = ctx.report("w2", None, a);
        r.scalar("samples", values.len().to_string());
        r.value("ref_mean", reference.mean);
        r.value("ref_sd", reference.sd);
        r.value("w2", w2_empirical(&values, reference)?);
    } else {
        let model = ctx.model()?;
        let theta = theta_for(model.n(), &a.theta)?;
        let (pmf, w) = exact_w2_of(&model, &theta)?;
        r = ctx.report("w2", Some(&model), a);
        r.value("mu_n", pmf.mean());
        r.value("sigma2_n", pmf.variance());
        r.scalar("atoms", pmf.len().to_string());
        r.value("w2", w);
    }
    Ok(r.render())
}

fn spins_text(x: &ising_clt::SpinConfig) -> String {
    x.as_slice()
        .iter()
        .map(|&s| if s > 0 { '+' } else { '-' })
        .collect()
}

fn sample(ctx: &Ctx, a: &SampleArgs) -> Result<String> {
    let model = ctx.model()?;
    let n = model.n();
    let theta = theta_for(n, &a.theta)?;
    let pins = parse_pins(&a.pins)?;
    let states = match a.method {
        SampleMethod::Exact => {
            if !pins.is_empty() {
                return usage("pins apply to the glauber method only");
            }
            ExactEngine::default().sample_exact(&model, a.count, ctx.cli.seed)?
        }
        SampleMethod::Glauber => {
            let thin = a.thin.unwrap_or(n as u64).max(1);
            let burn = a.burn_sweeps * n as u64;
            let cfg = ChainConfig::new(burn + thin * a.count as u64, burn, ctx.cli.seed)
                .with_pins(pins)
                .with_record_every(thin);
            sample_chain(&model, &cfg)?
        }
    };
    let mut r = ctx.report("sample", Some(&model), a);
    r.table(
        "samples",
        &["index", "projection", "spins"],
        states
            .iter()
            .enumerate()
            .map(|(j, x)| {
                vec![
                    j.to_string(),
                    num(theta.project(x.as_slice())),
                    spins_text(x),
                ]
            })
            .collect(),
    );
    Ok(r.render())
}

fn couple(ctx: &Ctx, a: &CoupleArgs) -> Result<String> {
    let model = ctx.model()?;
    if a.replicas == 0 {
        return usage("--replicas must be positive");
    }
    let cfg = ChainConfig::new(a.steps, a.burn_in, ctx.cli.seed).with_record_every(a.record_every);
    let runs: Vec<(StationaryDisagreement, CouplingTrace)> = (0..a.replicas)
        .into_par_iter()
        .map(|rep| {
            let cfg = cfg.clone().with_stream(rep as u64 + 1);
            stationary_disagreement(&model, a.site, &cfg, &a.extra_pins)
        })
        .collect::<std::result::Result<_, _>>()?;
    let traces: Vec<CouplingTrace> = runs.iter().map(|(_, t)| t.clone()).collect();
    let drift = drift_statistics(&traces, &model)?;
    if let Some(prefix) = &a.trace_out {
        let base = prefix.display().to_string();
        traces[0].write_series_csv(fs::File::create(format!("{base}_series.csv"))?)?;
        traces[0].write_transitions_csv(fs::File::create(format!("{base}_transitions.csv"))?)?;
    }
    let mut r = ctx.report("couple", Some(&model), a);
    r.scalar("ferromagnetic", traces[0].ferromagnetic.to_string());
    r.scalar(
        "monotone_violations",
        traces
            .iter()
            .map(|t| t.monotone_violations)
            .sum::<u64>()
            .to_string(),
    );
    r.value("alpha", dobrushin_report(&model).alpha);
    r.table(
        "drift",
        &[
            "d",
            "visits",
            "mean_drift",
            "drift_se",
            "drift_bound",
            "up_prob",
            "up_se",
            "up_bound",
        ],
        drift
            .iter()
            .map(|row| {
                vec![
                    row.d.to_string(),
                    row.visits.to_string(),
                    num(row.mean_drift),
                    num(row.drift_se),
                    num(row.drift_bound),
                    num(row.up_prob),
                    num(row.up_se),
                    num(row.up_bound),
                ]
            })
            .collect(),
    );
    let levels = runs.iter().map(|(s, _)| s.counts.len()).max().unwrap_or(0);
    let mut pooled = vec![0u64; levels];
    for (s, _) in &runs {
        for (d, c) in s.counts.iter().enumerate() {
            pooled[d] += c;
        }
    }
    let total: u64 = pooled.iter().sum();
    r.table(
        "stationary_pmf",
        &["d", "count", "p"],
        pooled
            .iter()
            .enumerate()
            .map(|(d, &c)| vec![d.to_string(), c.to_string(), num(c as f64 / total as f64)])
            .collect(),
    );
    r.table(
        "replicas",
        &[
            "replica",
            "mean",
            "mean_se",
            "second_moment",
            "second_moment_se",
            "tail_d1",
            "tail_rate",
            "burn_in_ok",
        ],
        runs.iter()
            .enumerate()
            .map(|(j, (s, _))| {
                vec![
                    j.to_string(),
                    num(s.mean),
                    num(s.mean_se),
                    num(s.second_moment),
                    num(s.second_moment_se),
                    s.fit
                        .map(|f| f.d1.to_string())
                        .unwrap_or_else(|| "NA".into()),
                    opt(s.fit.map(|f| f.rate)),
                    s.burn_in_ok.to_string(),
                ]
            })
            .collect(),
    );
    Ok(r.render())
}

fn embed(ctx: &Ctx, a: &EmbedArgs) -> Result<String> {
    let model = ctx.model()?;
    let theta = theta_for(model.n(), &a.theta)?;
    let y = if a.y.is_empty() {
        sample_interpolant(&model, a.t, ctx.cli.seed)?.1
    } else {
        a.y.clone()
    };
    let point = embedding_point(&model, a.t, &y, &theta)?;
    let check = derivative_identity_check(&model, a.t, &y, a.i, a.l, a.k, a.delta)?;
    let mut r = ctx.report("embed", Some(&model), a);
    r.scalar("y_t", list(&point.y_t));
    r.scalar("tilted_field", list(&point.tilted_field));
    r.value("gamma_dir_sq", point.gamma_dir_sq);
    r.value("derivative_fd", check.fd);
    r.value("derivative_formula", check.formula);
    r.value("derivative_expansion", check.expansion);
    r.value("derivative_rel_err", check.rel_err);
    if !a.skip_variance {
        let v = variance_identity_estimate(&model, &theta, a.nodes, a.reps, a.t_max, ctx.cli.seed)?;
        r.value("integral_estimate", v.integral_estimate);
        r.value("integral_se", v.standard_error);
        r.value("tail_bound", v.tail_bound);
        r.value("sigma2_exact", v.sigma2_exact);
        r.value("discrepancy", v.discrepancy);
        r.scalar("within_3se", v.within(3.0).to_string());
        r.table(
            "quadrature",
            &["t", "mean_gamma_dir_sq", "se"],
            v.nodes
                .iter()
                .map(|&(t, m, s)| vec![num(t), num(m), num(s)])
                .collect(),
        );
    }
    Ok(r.render())
}

fn lattice_spec(
    sides: &[usize],
    range: usize,
    coupling: &[f64],
    field: f64,
    periodic: bool,
) -> LatticeSpec {
    LatticeSpec {
        sides: sides.to_vec(),
        range,
        coupling: coupling.to_vec(),
        field: FieldSpec::Constant(field),
        boundary: if periodic {
            Boundary::Periodic
        } else {
            Boundary::Free
        },
    }
}

fn lattice_decay(ctx: &Ctx, a: &LatticeDecayArgs) -> Result<String> {
    let spec = lattice_spec(&a.sides, a.range, &a.coupling, a.field, a.periodic);
    let estimator = match a.estimator {
        EstimatorArg::Exact => Estimator::Exact,
        EstimatorArg::Mcmc => Estimator::Mcmc {
            config: ChainConfig::new(a.steps, a.burn_in, ctx.cli.seed)
                .with_record_every(a.record_every),
        },
    };
    let profile = correlation_decay_profile(&spec, a.origin, &estimator)?;
    let mut r = ctx.report("lattice-decay", None, a);
    r.table(
        "decay",
        &["distance", "site", "max_abs_cov", "se"],
        profile
            .rows
            .iter()
            .map(|row| {
                vec![
                    row.distance.to_string(),
                    row.site.to_string(),
                    num(row.max_abs_cov),
                    num(row.se),
                ]
            })
            .collect(),
    );
    match profile.fit {
        Some(f) => {
            r.value("fit_slope", f.slope);
            r.value("fit_intercept", f.intercept);
            r.value("fit_r_squared", f.r_squared);
            r.value("fit_slope_se", f.slope_se);
            r.scalar("fit_points", f.points.to_string());
        }
        None => r.scalar("fit", "NA"),
    }
    Ok(r.render())
}

fn clt_table(ctx: &Ctx, a: &CltTableArgs) -> Result<String> {
    let family: Vec<IsingModel> = a
        .sizes
        .iter()
        .map(|&n| -> Result<IsingModel> {
            Ok(match a.family {
                FamilyArg::Chain => {
                    build_box_model(&lattice_spec(&[n], 1, &[a.beta], a.field, false))?
                }
                FamilyArg::Product => IsingModel::product(vec![a.field; n])?,
                FamilyArg::Dobrushin => {
                    random_dobrushin_ferromagnet(n, a.alpha, a.cycles, a.field, ctx.cli.seed)?
                }
            })
        })
        .collect::<Result<_>>()?;
    let rows = match a.estimator {
        EstimatorArg::Exact => {
            clt_convergence_experiment(&family, &CltEstimator::Exact, a.with_bound)?
        }
        EstimatorArg::Mcmc => {
            if a.chains == 0 {
                return usage("--chains must be positive");
            }
            // A fixed number of sweeps per model, so chain length scales with n.
            let mut out = Vec::new();
            for model in &family {
                let n = model.n() as u64;
                let cfg = ChainConfig::new(
                    (a.burn_sweeps + a.sweeps) * n,
                    a.burn_sweeps * n,
                    ctx.cli.seed,
                )
                .with_record_every(n);
                let seeds = (0..a.chains as u64)
                    .map(|j| ctx.cli.seed.wrapping_add(j))
                    .collect();
                let est = CltEstimator::Mcmc { config: cfg, seeds };
                out.extend(clt_convergence_experiment(
                    std::slice::from_ref(model),
                    &est,
                    a.with_bound,
                )?);
            }
            out
        }
    };
    let mut r = ctx.report("clt-table", None, a);
    r.table(
        "clt",
        &[
            "n",
            "mu_n",
            "sigma2_n",
            "sigma2_per_site",
            "w2",
            "w2_se",
            "skewness",
            "kurtosis",
            "degenerate",
            "bound",
        ],
        rows.iter()
            .map(|row| {
                vec![
                    row.n.to_string(),
                    num(row.mu_n),
                    num(row.sigma2_n),
                    num(row.sigma2_per_site),
                    num(row.w2),
                    opt(row.w2_se),
                    opt(row.skewness),
                    opt(row.kurtosis),
                    row.degenerate.to_string(),
                    opt(row.bound),
                ]
            })
            .collect(),
    );
    Ok(r.render())
}

fn make_model(ctx: &Ctx, a: &MakeModelArgs) -> Result<String> {
    let seed = ctx.cli.seed;
    let model = match a.kind {
        ModelKind::Random => {
            let mut g = rng::stream(seed, 0);
            random_model(a.n, a.coupling, a.field, &mut g).with_label(format!(
                "random n={} coupling={} field={} seed={seed}",
                a.n, a.coupling, a.field
            ))
        }
        ModelKind::Product => IsingModel::product(vec![a.field; a.n])?,
        ModelKind::Chain => {
            build_box_model(&lattice_spec(&[a.n], 1, &[a.coupling], a.field, a.periodic))?
        }
        ModelKind::Box => build_box_model(&lattice_spec(
            &a.sides,
            a.range,
            &vec![a.coupling; a.range],
            a.field,
            a.periodic,
        ))?,
        ModelKind::Dobrushin => {
            random_dobrushin_ferromagnet(a.n, a.alpha, a.cycles, a.field, seed)?
        }
    };
    let model = match &a.label {
        Some(l) => model.with_label(l.clone()),
        None => model,
    };
    Ok(model_to_json(&model) + "\n")
}
