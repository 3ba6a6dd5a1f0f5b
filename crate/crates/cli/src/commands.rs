use drne_core::config::RunConfig;
use drne_core::evaluation::{histogram, run_oos_experiment, scenario_sweep, OosReport, ScenarioComparison};
use drne_core::export::{self, num};
use drne_core::game::{validate_game, GameSpec};
use drne_core::oracle::{best_response_check, interior_linear_solve, reference_equilibrium, InteriorSolve};
use drne_core::solver::{seed_sweep, target_game, SolveReport, StepMode};
use drne_core::vi::{certify_monotonicity, estimate_constants, MonotonicityCertificate};
use drne_core::Error;
use sha2::{Digest, Sha256};

use crate::output::{unix_seconds, Failure, OutDir, CONFIG_READ, MISSING_CONSTANTS, SOLVER, VALIDATION};
use crate::Common;

pub struct Context {
    pub config: RunConfig,
    pub seed: u64,
    pub out: OutDir,
}

type Pairs = Vec<(String, String)>;

fn kv(pairs: &mut Pairs, key: impl Into<String>, value: impl ToString) {
    pairs.push((key.into(), value.to_string()));
}

fn kv_vec(pairs: &mut Pairs, key: &str, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        kv(pairs, format!("{key}_{}", i + 1), num(*v));
    }
}

fn validation(e: Error) -> Failure {
    match e {
        Error::InvalidGame(v) => Failure::new(VALIDATION, v.join("\n")),
        other => Failure::new(VALIDATION, other.to_string()),
    }
}

fn checked(spec: GameSpec) -> Result<GameSpec, Failure> {
    let violations = validate_game(&spec);
    if violations.is_empty() {
        Ok(spec)
    } else {
        Err(Failure::new(VALIDATION, violations.join("\n")))
    }
}

/// Loads the config, applies overrides, runs `body` and writes the metadata
/// and manifest files.
pub fn run(
    command: &str,
    common: &Common,
    body: impl FnOnce(&mut Context) -> Result<u8, Failure>,
) -> Result<u8, Failure> {
    let started = unix_seconds();
    if let Some(t) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::new(CONFIG_READ, format!("cannot set thread count: {e}")))?;
    }
    let mut config = RunConfig::load(&common.config)
        .map_err(|e| Failure::new(CONFIG_READ, format!("{}: {e}", common.config.display())))?;
    let seed = match command {
        "evaluate" | "sweep" => {
            if let Some(s) = common.seed {
                config.oos.macro_seed = s;
            }
            config.oos.macro_seed
        }
        _ => {
            if let Some(s) = common.seed {
                config.solver.seed = s;
            }
            config.solver.seed
        }
    };
    let resolved = config.to_toml();
    let hash = hex::encode(Sha256::digest(resolved.as_bytes()));
    let out = OutDir::create(&common.out)?;
    let mut ctx = Context { config, seed, out };

    let code = body(&mut ctx)?;

    let version = env!("CARGO_PKG_VERSION");
    let mut meta = Pairs::new();
    kv(&mut meta, "command", command);
    kv(&mut meta, "seed", seed);
    kv(&mut meta, "library_version", version);
    kv(&mut meta, "config_sha256", &hash);
    kv(&mut meta, "cost_convention", "negated revenue; lower cost is better");
    ctx.out.write("metadata.txt", |w| export::write_key_values(w, &meta))?;
    ctx.out.write("config.resolved.toml", |w| {
        std::io::Write::write_all(w, resolved.as_bytes())?;
        Ok(())
    })?;

    let mut manifest = Pairs::new();
    kv(&mut manifest, "command", command);
    kv(&mut manifest, "config_path", common.config.display());
    kv(&mut manifest, "seed", seed);
    kv(&mut manifest, "output_dir", ctx.out.path().display());
    kv(&mut manifest, "library_version", version);
    kv(&mut manifest, "config_sha256", &hash);
    kv(&mut manifest, "started_unix", started);
    kv(&mut manifest, "finished_unix", unix_seconds());
    kv(&mut manifest, "exit_code", code);
    for f in ctx.out.files() {
        kv(&mut manifest, "file", f);
    }
    ctx.out.write("manifest.txt", |w| export::write_key_values(w, &manifest))?;
    Ok(code)
}

fn report_pairs(report: &SolveReport, x_ref: Option<&[f64]>, mode: StepMode) -> Pairs {
    let mut p = Pairs::new();
    kv(&mut p, "seed", report.seed);
    kv(&mut p, "horizon", report.horizon);
    kv(&mut p, "step_mode", format!("{mode:?}").to_lowercase());
    kv(&mut p, "final_step", num(report.final_step));
    kv(&mut p, "residual_step", num(report.residual_step));
    kv(&mut p, "final_residual", num(*report.residuals.last().unwrap_or(&f64::NAN)));
    if let Some(a) = report.avg_sq_error.as_ref().and_then(|a| a.last()) {
        kv(&mut p, "final_avg_sq_error", num(*a));
    }
    kv_vec(&mut p, "x_final", &report.final_iterate);
    kv_vec(&mut p, "x_average", &report.averaged_iterate);
    if let Some(r) = x_ref {
        kv_vec(&mut p, "x_reference", r);
    }
    if let Some(th) = &report.theory {
        kv(&mut p, "diameter", num(th.diameter));
        if let Some(u) = th.gradient_bound {
            kv(&mut p, "gradient_bound", num(u));
        }
        kv(&mut p, "observed_gradient_bound", num(th.observed_gradient_bound));
        if let Some(m) = th.margin {
            kv(&mut p, "margin", num(m));
        }
        if let Some(b) = th.average_bound {
            kv(&mut p, "average_error_bound", num(b));
        }
        if let Some(r) = th.plateau_radius {
            kv(&mut p, "plateau_radius", num(r));
        }
        kv(&mut p, "bound_applicable", th.applicable);
    }
    p
}

pub fn solve(ctx: &mut Context) -> Result<u8, Failure> {
    let cfg = &ctx.config;
    let spec = checked(cfg.build_game().map_err(validation)?)?;
    let sampling = cfg.sampling().map_err(validation)?;
    let solver_cfg = cfg.solver_config();
    solver_cfg.validate(&spec).map_err(validation)?;
    let target = target_game(&spec, &sampling, solver_cfg.quadrature_nodes).map_err(validation)?;
    let x_ref = if spec.cost_model().as_cournot().is_some() || cfg.oracle.step.is_some() {
        Some(
            reference_equilibrium(&target, &cfg.oracle_config())
                .map_err(Failure::from_run)?
                .equilibrium,
        )
    } else {
        None
    };

    let seeds = cfg.solver.seeds.max(1);
    let sweep = seed_sweep(&spec, &solver_cfg, &sampling, x_ref.as_deref(), seeds).map_err(Failure::from_run)?;
    let mut failures = Vec::new();
    for run in &sweep.runs {
        if let Err(e) = &run.outcome {
            failures.push(format!("seed {}: {e}", run.seed));
        }
    }
    let first = sweep.runs[0].outcome.as_ref().ok();
    if let Some(report) = first {
        ctx.out.write("trajectory.csv", |w| export::write_trajectory(w, &spec, report))?;
        ctx.out.write("metrics.csv", |w| export::write_metrics(w, report))?;
        let pairs = report_pairs(report, x_ref.as_deref(), solver_cfg.step_mode);
        ctx.out.write("report.txt", |w| export::write_key_values(w, &pairs))?;
    }
    if seeds > 1 {
        ctx.out
            .write("sweep_metrics.csv", |w| export::write_sweep_metrics(w, &sweep.aggregate))?;
    }
    if failures.is_empty() {
        Ok(0)
    } else {
        Err(Failure::new(SOLVER, failures.join("\n")))
    }
}

fn certificate_pairs(cert: &MonotonicityCertificate) -> Pairs {
    let mut p = Pairs::new();
    kv(&mut p, "certified", cert.certified);
    kv(&mut p, "margin", num(cert.margin));
    kv(&mut p, "mu", num(cert.mu));
    kv(&mut p, "mu_xi", num(cert.mu_xi));
    kv(&mut p, "estimated", cert.estimated);
    kv_vec(&mut p, "l_x", &cert.l_x);
    kv_vec(&mut p, "l_xi", &cert.l_xi);
    p
}

pub fn certify(ctx: &mut Context, estimate: bool, samples: usize) -> Result<u8, Failure> {
    let spec = checked(ctx.config.template().map_err(validation)?)?;
    let cert = if estimate {
        estimate_constants(&spec, samples, ctx.seed)
            .map_err(validation)?
            .certificate(&spec)
    } else {
        match certify_monotonicity(&spec) {
            Ok(c) => c,
            Err(e @ Error::MissingConstants(_)) => {
                return Err(Failure::new(
                    MISSING_CONSTANTS,
                    format!("{e}; rerun with --estimate to sample them"),
                ))
            }
            Err(e) => return Err(Failure::from_run(e)),
        }
    };
    let pairs = certificate_pairs(&cert);
    ctx.out.write("certificate.txt", |w| export::write_key_values(w, &pairs))?;
    if !cert.certified {
        eprintln!("monotonicity not certified: margin {}", num(cert.margin));
    }
    Ok(if cert.certified { 0 } else { crate::output::UNCERTIFIED })
}

pub fn oracle(ctx: &mut Context) -> Result<u8, Failure> {
    let cfg = &ctx.config;
    let spec = checked(cfg.build_game().map_err(validation)?)?;
    let sampling = cfg.sampling().map_err(validation)?;
    let target = target_game(&spec, &sampling, cfg.solver.quadrature_nodes).map_err(validation)?;
    let oracle_cfg = cfg.oracle_config();
    let result = reference_equilibrium(&target, &oracle_cfg).map_err(Failure::from_run)?;

    let mut p = Pairs::new();
    kv(&mut p, "target", if matches!(sampling, drne_core::solver::Sampling::Empirical) { "empirical" } else { "truth-quadrature" });
    kv(&mut p, "method", result.method.as_str());
    kv(&mut p, "iterations", result.iterations);
    kv(&mut p, "residual", num(result.residual_at_solution));
    kv(&mut p, "interior_valid", result.interior_valid);
    if target.cost_model().as_cournot().is_some() {
        match interior_linear_solve(&target).map_err(Failure::from_run)? {
            InteriorSolve::Valid(r) => {
                let gap = r
                    .equilibrium
                    .iter()
                    .zip(&result.equilibrium)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                kv(&mut p, "interior_solution_gap", num(gap));
            }
            InteriorSolve::Invalid { reason, .. } => kv(&mut p, "interior_solve", reason),
        }
    }
    let bounded = (0..target.num_agents()).all(|i| target.feasible_set(i).is_bounded() && target.decision_dim(i) == 1);
    if cfg.oracle.grid_step > 0.0 && bounded {
        let gaps = best_response_check(&target, &result.equilibrium, cfg.oracle.grid_step, &oracle_cfg.inner)
            .map_err(Failure::from_run)?;
        kv_vec(&mut p, "best_response_gap", &gaps);
    }
    ctx.out.write("equilibrium.csv", |w| {
        use std::io::Write;
        writeln!(w, "agent,value")?;
        for (i, v) in result.equilibrium.iter().enumerate() {
            writeln!(w, "{},{}", i + 1, num(*v))?;
        }
        Ok(())
    })?;
    ctx.out.write("oracle.txt", |w| export::write_key_values(w, &p))?;
    Ok(0)
}

fn oos_pairs(report: &OosReport) -> Pairs {
    let mut p = Pairs::new();
    kv(&mut p, "scenario", &report.label);
    kv(&mut p, "macro_seed", report.macro_seed);
    kv(&mut p, "oracle_method", report.oracle_method.as_str());
    kv_vec(&mut p, "x_star", &report.equilibrium);
    kv(&mut p, "mean", num(report.summary.mean));
    kv(&mut p, "std_dev", num(report.summary.std_dev));
    kv(&mut p, "in_sample_expected", num(report.in_sample_expected));
    p
}

pub fn evaluate(ctx: &mut Context) -> Result<u8, Failure> {
    let cfg = &ctx.config;
    let template = cfg.template().map_err(validation)?;
    let scenario = cfg.evaluate_scenario().map_err(validation)?;
    let oos = cfg.oos_config(scenario);
    oos.validate(template.num_agents()).map_err(validation)?;
    let report = run_oos_experiment(&oos, &template, &cfg.oracle_config()).map_err(Failure::from_run)?;
    let unshifted = oos.is_unshifted();
    ctx.out.write("realizations.csv", |w| export::write_realizations(w, [&report]))?;
    ctx.out.write("summary.csv", |w| export::write_oos_summary(w, [(&report, unshifted)]))?;
    ctx.out.write("histogram.csv", |w| {
        export::write_histograms(w, [(report.label.as_str(), &report.histogram)])
    })?;
    let pairs = oos_pairs(&report);
    ctx.out.write("evaluate.txt", |w| export::write_key_values(w, &pairs))?;
    Ok(0)
}

pub fn sweep(ctx: &mut Context) -> Result<u8, Failure> {
    let cfg = &ctx.config;
    let template = cfg.template().map_err(validation)?;
    let cases = cfg.sweep_cases().map_err(validation)?;
    let oracle_cfg = cfg.oracle_config();
    let mut comparisons: Vec<ScenarioComparison> = Vec::new();
    for (_, scenarios) in &cases {
        let base = cfg.oos_config(scenarios[0].clone());
        for s in scenarios {
            cfg.oos_config(s.clone())
                .validate(template.num_agents())
                .map_err(validation)?;
        }
        comparisons.push(
            scenario_sweep(scenarios, &base, &template, cfg.oos.repetitions, &oracle_cfg)
                .map_err(Failure::from_run)?,
        );
    }
    let unshifted = cfg.oos_config(cases[0].1[0].clone()).is_unshifted();
    let reports: Vec<&OosReport> = comparisons
        .iter()
        .flat_map(|c| c.reports.iter().flatten())
        .collect();
    ctx.out
        .write("realizations.csv", |w| export::write_realizations(w, reports.iter().copied()))?;
    ctx.out.write("runs.csv", |w| {
        export::write_oos_summary(w, reports.iter().map(|r| (*r, unshifted)))
    })?;
    ctx.out.write("summary.csv", |w| export::write_sweep_summary(w, &comparisons))?;
    ctx.out.write("differences.csv", |w| export::write_differences(w, &comparisons))?;
    let mut pooled = Vec::new();
    for c in &comparisons {
        for (s, runs) in c.summaries.iter().zip(&c.reports) {
            let values: Vec<f64> = runs.iter().flat_map(|r| r.realizations.iter().copied()).collect();
            pooled.push((s.label.clone(), histogram(&values, cfg.oos.histogram_bins).map_err(Failure::from_run)?));
        }
    }
    ctx.out.write("histogram.csv", |w| {
        export::write_histograms(w, pooled.iter().map(|(l, h)| (l.as_str(), h)))
    })?;
    Ok(0)
}
