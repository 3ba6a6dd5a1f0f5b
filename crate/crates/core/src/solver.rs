//! Stochastic projected-gradient equilibrium seeking with an inexact inner
//! adversary.
//!
//! At every iteration each agent draws one realization, solves its inner
//! worst-case problem around that draw to the configured accuracy and takes a
//! projected step along its own cost gradient at the worst case. All agents
//! step from the same iterate.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal as NormalCdf};

use crate::adversary::{inner_maximize, InnerSolverConfig};
use crate::error::{Error, Result};
use crate::game::{EmpiricalDistribution, GameSpec};
use crate::rng::{self, Purpose};
use crate::vi::{certify_monotonicity, vi_residual};

/// Scalar generator for one agent's uncertainty, truncated to the support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, std: f64 },
}

/// Draws rejected before falling back to inverse-cdf sampling.
const MAX_REJECTIONS: usize = 10_000;

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Uniform { lo, hi } if lo.is_finite() && hi.is_finite() && lo <= hi => Ok(()),
            Self::Gaussian { mean, std } if mean.is_finite() && std.is_finite() && std > 0.0 => Ok(()),
            other => Err(Error::Config(format!("invalid distribution {other:?}"))),
        }
    }

    fn truncated_uniform(lo: f64, hi: f64, a: f64, b: f64) -> Result<(f64, f64)> {
        let (l, u) = (lo.max(a), hi.min(b));
        if l > u {
            return Err(Error::Config(format!(
                "uniform [{lo}, {hi}] does not meet the support [{a}, {b}]"
            )));
        }
        Ok((l, u))
    }

    fn normal(mean: f64, std: f64) -> NormalCdf {
        NormalCdf::new(mean, std).expect("validated gaussian parameters")
    }

    /// One draw truncated to `[a, b]`. Gaussians use rejection.
    pub fn sample(&self, rng: &mut impl Rng, a: f64, b: f64) -> Result<f64> {
        match *self {
            Self::Uniform { lo, hi } => {
                let (l, u) = Self::truncated_uniform(lo, hi, a, b)?;
                Ok(if l < u { rng.random_range(l..u) } else { l })
            }
            Self::Gaussian { mean, std } => {
                let normal = Normal::new(mean, std).map_err(|e| Error::Config(e.to_string()))?;
                for _ in 0..MAX_REJECTIONS {
                    let v = normal.sample(rng);
                    if a <= v && v <= b {
                        return Ok(v);
                    }
                }
                let cdf = Self::normal(mean, std);
                let (pa, pb) = (cdf.cdf(a), cdf.cdf(b));
                let u: f64 = rng.random();
                Ok(cdf.inverse_cdf(pa + u * (pb - pa)).clamp(a, b))
            }
        }
    }

    /// Midpoint-quantile nodes of the truncated law on `[a, b]`, each of weight `1/m`.
    pub fn quadrature(&self, a: f64, b: f64, m: usize) -> Result<Vec<f64>> {
        let m = m.max(1);
        match *self {
            Self::Uniform { lo, hi } => {
                let (l, u) = Self::truncated_uniform(lo, hi, a, b)?;
                Ok((0..m)
                    .map(|k| l + (k as f64 + 0.5) / m as f64 * (u - l))
                    .collect())
            }
            Self::Gaussian { mean, std } => {
                let cdf = Self::normal(mean, std);
                let (pa, pb) = (cdf.cdf(a), cdf.cdf(b));
                Ok((0..m)
                    .map(|k| {
                        let p = pa + (k as f64 + 0.5) / m as f64 * (pb - pa);
                        cdf.inverse_cdf(p).clamp(a, b)
                    })
                    .collect())
            }
        }
    }

    /// Mean of the law truncated to `[a, b]`.
    pub fn truncated_mean(&self, a: f64, b: f64) -> Result<f64> {
        match *self {
            Self::Uniform { lo, hi } => {
                let (l, u) = Self::truncated_uniform(lo, hi, a, b)?;
                Ok(0.5 * (l + u))
            }
            Self::Gaussian { mean, std } => {
                let std_normal = Self::normal(0.0, 1.0);
                let (alpha, beta) = ((a - mean) / std, (b - mean) / std);
                let mass = std_normal.cdf(beta) - std_normal.cdf(alpha);
                let pdf = |z: f64| if z.is_finite() { (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() } else { 0.0 };
                Ok(mean + std * (pdf(alpha) - pdf(beta)) / mass)
            }
        }
    }
}

/// Per-agent true distribution `P_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueDistribution {
    pub marginals: Vec<Marginal>,
}

impl TrueDistribution {
    pub fn uniform(num_agents: usize, lo: f64, hi: f64) -> Self {
        Self {
            marginals: vec![Marginal::Uniform { lo, hi }; num_agents],
        }
    }

    pub fn gaussian(means: &[f64], stds: &[f64]) -> Self {
        Self {
            marginals: means
                .iter()
                .zip(stds)
                .map(|(&mean, &std)| Marginal::Gaussian { mean, std })
                .collect(),
        }
    }

    pub fn validate(&self, spec: &GameSpec) -> Result<()> {
        if self.marginals.len() != spec.num_agents() {
            return Err(Error::Dimension {
                expected: spec.num_agents(),
                found: self.marginals.len(),
            });
        }
        for (i, m) in self.marginals.iter().enumerate() {
            m.validate()?;
            let b = spec.support(i);
            for (l, u) in b.lower().iter().zip(b.upper()) {
                m.quadrature(*l, *u, 1)?;
            }
        }
        Ok(())
    }

    /// Draws one realization for `agent`, componentwise truncated to its support.
    pub fn sample(&self, spec: &GameSpec, agent: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
        let b = spec.support(agent);
        b.lower()
            .iter()
            .zip(b.upper())
            .map(|(l, u)| self.marginals[agent].sample(rng, *l, *u))
            .collect()
    }

    /// Equal-weight quadrature of every `P_i`, usable wherever empirical data is.
    /// Vector supports get the componentwise (diagonal) node set.
    pub fn quadrature_data(&self, spec: &GameSpec, nodes: usize) -> Result<Vec<EmpiricalDistribution>> {
        (0..spec.num_agents())
            .map(|i| {
                let b = spec.support(i);
                let per_dim = b
                    .lower()
                    .iter()
                    .zip(b.upper())
                    .map(|(l, u)| self.marginals[i].quadrature(*l, *u, nodes))
                    .collect::<Result<Vec<_>>>()?;
                let samples = (0..nodes.max(1))
                    .map(|k| per_dim.iter().map(|col| col[k]).collect())
                    .collect();
                EmpiricalDistribution::new(samples)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sampling {
    /// Draw from the true distribution at every iteration.
    Online(TrueDistribution),
    /// Draw uniformly from each agent's empirical samples.
    Empirical,
}

/// Game whose equilibrium a run targets: the empirical game itself, or the
/// game with each agent's data replaced by a quadrature of `P_i`.
pub fn target_game(spec: &GameSpec, sampling: &Sampling, quadrature_nodes: usize) -> Result<GameSpec> {
    match sampling {
        Sampling::Empirical => Ok(spec.clone()),
        Sampling::Online(truth) => {
            truth.validate(spec)?;
            spec.clone()
                .with_empirical_data(truth.quadrature_data(spec, quadrature_nodes)?)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepMode {
    /// `eta = eta0 / sqrt(T)` for the whole run.
    #[default]
    Fixed,
    /// `eta_t = eta0 / sqrt(t)`.
    Diminishing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub horizon: usize,
    pub step_mode: StepMode,
    pub eta0: f64,
    /// Optional per-agent multipliers on the step. Theory bounds assume none.
    pub agent_step_scale: Option<Vec<f64>>,
    pub inner: InnerSolverConfig,
    /// Optional per-agent inner accuracies overriding `inner.accuracy`.
    pub agent_accuracy: Option<Vec<f64>>,
    pub rng_seed: u64,
    pub record_every: usize,
    pub residual_step: f64,
    pub quadrature_nodes: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            horizon: 10_000,
            step_mode: StepMode::Fixed,
            eta0: 1.0,
            agent_step_scale: None,
            inner: InnerSolverConfig::default(),
            agent_accuracy: None,
            rng_seed: 0,
            record_every: 100,
            residual_step: 1.0,
            quadrature_nodes: 8192,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, spec: &GameSpec) -> Result<()> {
        let n = spec.num_agents();
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::Config(format!("eta0 must be positive, got {}", self.eta0)));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if !(self.residual_step > 0.0) {
            return Err(Error::Config("residual step must be positive".into()));
        }
        for (name, v) in [("agent_step_scale", &self.agent_step_scale), ("agent_accuracy", &self.agent_accuracy)] {
            if let Some(v) = v {
                if v.len() != n {
                    return Err(Error::Config(format!("{name} has {} entries for {n} agents", v.len())));
                }
                if v.iter().any(|a| !(*a > 0.0)) {
                    return Err(Error::Config(format!("{name} entries must be positive")));
                }
            }
        }
        if !(self.inner.accuracy > 0.0) {
            return Err(Error::Config("inner accuracy must be positive".into()));
        }
        Ok(())
    }

    pub fn inner_for(&self, agent: usize) -> InnerSolverConfig {
        let mut cfg = self.inner;
        if let Some(acc) = &self.agent_accuracy {
            cfg.accuracy = acc[agent];
        }
        cfg
    }

    pub fn accuracy_sum(&self, num_agents: usize) -> f64 {
        (0..num_agents).map(|i| self.inner_for(i).accuracy).sum()
    }

    pub fn step_at(&self, t: usize) -> f64 {
        match self.step_mode {
            StepMode::Fixed => self.eta0 / (self.horizon as f64).sqrt(),
            StepMode::Diminishing => self.eta0 / (t as f64).sqrt(),
        }
    }
}

/// Constants entering the average-convergence bound
/// `D^2/(2 eta m T) + N eta U^2/(2 m) + D sum_i L_x_i eps_i / m`.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryConstants {
    /// Diameter `D` of `X`; infinite when a box is unbounded.
    pub diameter: f64,
    /// A-priori gradient bound `U` over `X x Xi` (Cournot only).
    pub gradient_bound: Option<f64>,
    /// Largest per-agent gradient norm met along the run.
    pub observed_gradient_bound: f64,
    /// Certified strong monotonicity margin, when constants are known.
    pub margin: Option<f64>,
    /// `sum_i L_x_i eps_i`
    pub weighted_accuracy: Option<f64>,
    /// Bound on `(1/T) sum_t |x_t - x*|^2`, fixed-step runs only.
    pub average_bound: Option<f64>,
    /// `sqrt((N eta U^2 + 2 D sum L_x eps) / (2 m))` with the observed `U`
    /// and the final step; stationary level of the per-iterate recursion.
    pub plateau_radius: Option<f64>,
    /// False when the bound's hypotheses fail (unbounded `X`, margin <= 0,
    /// unequal agent steps, unknown constants).
    pub applicable: bool,
}

fn cournot_gradient_bound(spec: &GameSpec) -> Option<f64> {
    let cost = spec.scalar_cournot()?;
    let sum_hi: f64 = (0..spec.num_agents()).map(|i| spec.feasible_set(i).upper()[0]).sum();
    let sum_lo: f64 = (0..spec.num_agents()).map(|i| spec.feasible_set(i).lower()[0]).sum();
    let u = (0..spec.num_agents())
        .map(|i| {
            let x = spec.feasible_set(i);
            let z = spec.support(i);
            let hi = sum_hi + x.upper()[0] - cost.demand_intercept + cost.marginal_costs[i] + z.upper()[0];
            let lo = sum_lo + x.lower()[0] - cost.demand_intercept + cost.marginal_costs[i] + z.lower()[0];
            hi.abs().max(lo.abs())
        })
        .fold(0.0, f64::max);
    u.is_finite().then_some(u)
}

pub fn average_bound(
    diameter: f64,
    eta: f64,
    margin: f64,
    horizon: usize,
    num_agents: usize,
    gradient_bound: f64,
    weighted_accuracy: f64,
) -> f64 {
    let t = horizon as f64;
    diameter * diameter / (2.0 * eta * margin * t)
        + num_agents as f64 * eta * gradient_bound * gradient_bound / (2.0 * margin)
        + diameter * weighted_accuracy / margin
}

pub fn plateau_radius(
    diameter: f64,
    eta: f64,
    margin: f64,
    num_agents: usize,
    gradient_bound: f64,
    weighted_accuracy: f64,
) -> f64 {
    ((num_agents as f64 * eta * gradient_bound * gradient_bound + 2.0 * diameter * weighted_accuracy)
        / (2.0 * margin))
        .sqrt()
}

/// Output of one run. Equality ignores `wall_time`.
#[derive(Debug, Clone, Default)]
pub struct SolveReport {
    pub seed: u64,
    pub horizon: usize,
    /// Iteration indices of the recorded iterates; `0` is the initial point.
    pub record_times: Vec<usize>,
    pub trajectory: Vec<Vec<f64>>,
    /// VI residual of the target game at each recorded iterate.
    pub residuals: Vec<f64>,
    pub residual_step: f64,
    /// `(1/t) sum_{s<=t} |x_s - x*|^2` at each recorded `t >= 1` (0 at `t = 0`).
    pub avg_sq_error: Option<Vec<f64>>,
    /// `|x_t - x*|^2` for every `t = 1..=T`.
    pub sq_distances: Option<Vec<f64>>,
    pub final_iterate: Vec<f64>,
    /// `(1/T) sum_{t=1}^T x_t`
    pub averaged_iterate: Vec<f64>,
    pub final_step: f64,
    pub theory: Option<TheoryConstants>,
    pub wall_time: Duration,
}

impl PartialEq for SolveReport {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.horizon == other.horizon
            && self.record_times == other.record_times
            && self.trajectory == other.trajectory
            && self.residuals == other.residuals
            && self.residual_step == other.residual_step
            && self.avg_sq_error == other.avg_sq_error
            && self.sq_distances == other.sq_distances
            && self.final_iterate == other.final_iterate
            && self.averaged_iterate == other.averaged_iterate
            && self.final_step == other.final_step
            && self.theory == other.theory
    }
}

fn draw(
    spec: &GameSpec,
    sampling: &Sampling,
    agent: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    match sampling {
        Sampling::Online(truth) => truth.sample(spec, agent, rng),
        Sampling::Empirical => {
            let data = spec.data(agent);
            Ok(data.samples()[rng.random_range(0..data.len())].clone())
        }
    }
}

/// Runs the stochastic equilibrium-seeking iteration for `cfg.horizon` steps
/// from the projection of zero onto `X`.
pub fn run_algorithm1(
    spec: &GameSpec,
    cfg: &SolverConfig,
    sampling: &Sampling,
    x_ref: Option<&[f64]>,
) -> Result<SolveReport> {
    let started = Instant::now();
    let violations = crate::game::validate_game(spec);
    if !violations.is_empty() {
        return Err(Error::InvalidGame(violations));
    }
    cfg.validate(spec)?;
    if let Some(r) = x_ref {
        spec.check_joint(r)?;
    }
    let target = target_game(spec, sampling, cfg.quadrature_nodes)?;
    let residual_inner = cfg.inner;

    let n = spec.num_agents();
    let dim = spec.joint_dim();
    let mut rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|i| rng::stream(cfg.rng_seed, i, Purpose::SolverDraw))
        .collect();
    let mut x = spec.project_joint(&vec![0.0; dim])?;
    let mut next = x.clone();

    let mut report = SolveReport {
        seed: cfg.rng_seed,
        horizon: cfg.horizon,
        residual_step: cfg.residual_step,
        ..SolveReport::default()
    };
    let mut sq_distances = x_ref.map(|_| Vec::with_capacity(cfg.horizon));
    let mut avg_sq = x_ref.map(|_| Vec::new());
    let mut sq_sum = 0.0;
    let mut x_sum = vec![0.0; dim];
    let mut observed_u: f64 = 0.0;

    let record = |t: usize, x: &[f64], report: &mut SolveReport| -> Result<()> {
        report.record_times.push(t);
        report.trajectory.push(x.to_vec());
        report
            .residuals
            .push(vi_residual(&target, x, &residual_inner, cfg.residual_step)?);
        Ok(())
    };
    record(0, &x, &mut report)?;
    if let Some(a) = avg_sq.as_mut() {
        a.push(0.0);
    }

    for t in 1..=cfg.horizon {
        let eta = cfg.step_at(t);
        for i in 0..n {
            let fail = |source: Error| Error::Solver {
                iteration: t,
                source: Box::new(source),
            };
            let z = draw(spec, sampling, i, &mut rngs[i]).map_err(fail)?;
            let worst = inner_maximize(spec, i, &x, &z, &cfg.inner_for(i)).map_err(fail)?;
            let g = spec.cost_model().grad_own(i, &x, &worst.maximizer);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(fail(Error::NonFiniteGradient {
                    agent: i + 1,
                    iteration: t,
                }));
            }
            observed_u = observed_u.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
            let scale = cfg.agent_step_scale.as_ref().map_or(1.0, |s| s[i]);
            let block = spec.block(i);
            for (slot, (xv, gv)) in next[block.clone()].iter_mut().zip(x[block.clone()].iter().zip(&g)) {
                *slot = xv - eta * scale * gv;
            }
            spec.feasible_set(i).project_in_place(&mut next[block]);
        }
        std::mem::swap(&mut x, &mut next);

        for (acc, v) in x_sum.iter_mut().zip(&x) {
            *acc += v;
        }
        if let (Some(r), Some(d)) = (x_ref, sq_distances.as_mut()) {
            let sq: f64 = x.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum();
            sq_sum += sq;
            d.push(sq);
        }
        if t % cfg.record_every == 0 || t == cfg.horizon {
            record(t, &x, &mut report)?;
            if let Some(a) = avg_sq.as_mut() {
                a.push(sq_sum / t as f64);
            }
        }
    }

    report.final_step = cfg.step_at(cfg.horizon);
    report.averaged_iterate = x_sum.iter().map(|v| v / cfg.horizon as f64).collect();
    report.final_iterate = x;
    report.sq_distances = sq_distances;
    report.avg_sq_error = avg_sq;
    report.theory = Some(theory_constants(spec, cfg, observed_u));
    report.wall_time = started.elapsed();
    Ok(report)
}

fn theory_constants(spec: &GameSpec, cfg: &SolverConfig, observed_u: f64) -> TheoryConstants {
    let n = spec.num_agents();
    let diameter = spec.diameter();
    let gradient_bound = cournot_gradient_bound(spec);
    let constants = spec.cost_model().constants(n);
    let margin = certify_monotonicity(spec).ok().map(|c| c.margin);
    let weighted_accuracy = constants
        .as_ref()
        .map(|c| (0..n).map(|i| c.l_x[i] * cfg.inner_for(i).accuracy).sum::<f64>());
    let equal_steps = cfg
        .agent_step_scale
        .as_ref()
        .is_none_or(|s| s.iter().all(|v| *v == s[0]));
    let applicable = diameter.is_finite()
        && margin.is_some_and(|m| m > 0.0)
        && weighted_accuracy.is_some()
        && equal_steps;
    let eta = cfg.step_at(cfg.horizon);
    let (average, radius) = match (applicable, margin, weighted_accuracy) {
        (true, Some(m), Some(w)) => (
            match (cfg.step_mode, gradient_bound) {
                (StepMode::Fixed, Some(u)) => Some(average_bound(diameter, eta, m, cfg.horizon, n, u, w)),
                _ => None,
            },
            Some(plateau_radius(diameter, eta, m, n, observed_u, w)),
        ),
        _ => (None, None),
    };
    TheoryConstants {
        diameter,
        gradient_bound,
        observed_gradient_bound: observed_u,
        margin,
        weighted_accuracy,
        average_bound: average,
        plateau_radius: radius,
        applicable,
    }
}

/// `(t, (1/t) sum_{s<=t} |x_s - x*|^2)` for every iteration.
pub fn average_distance_curve(report: &SolveReport) -> Result<Vec<(usize, f64)>> {
    let d = report.sq_distances.as_ref().ok_or(Error::MissingReference)?;
    let mut sum = 0.0;
    Ok(d.iter()
        .enumerate()
        .map(|(k, v)| {
            sum += v;
            (k + 1, sum / (k + 1) as f64)
        })
        .collect())
}

pub struct SeedRun {
    pub seed: u64,
    pub outcome: Result<SolveReport>,
}

/// Pointwise statistics over the successful runs of a sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepAggregate {
    pub record_times: Vec<usize>,
    pub mean_residual: Vec<f64>,
    pub median_residual: Vec<f64>,
    pub min_residual: Vec<f64>,
    pub max_residual: Vec<f64>,
    pub mean_avg_sq_error: Option<Vec<f64>>,
    pub succeeded: usize,
}

pub struct SeedSweep {
    pub runs: Vec<SeedRun>,
    pub failed_seeds: Vec<u64>,
    pub aggregate: SweepAggregate,
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Runs seeds `cfg.rng_seed .. cfg.rng_seed + num_seeds` (in parallel, results
/// in seed order) and aggregates the residual curves pointwise.
pub fn seed_sweep(
    spec: &GameSpec,
    cfg: &SolverConfig,
    sampling: &Sampling,
    x_ref: Option<&[f64]>,
    num_seeds: usize,
) -> Result<SeedSweep> {
    if num_seeds == 0 {
        return Err(Error::Config("a sweep needs at least one seed".into()));
    }
    let runs: Vec<SeedRun> = (0..num_seeds as u64)
        .into_par_iter()
        .map(|k| {
            let seed = cfg.rng_seed.wrapping_add(k);
            let cfg = SolverConfig {
                rng_seed: seed,
                ..cfg.clone()
            };
            SeedRun {
                seed,
                outcome: run_algorithm1(spec, &cfg, sampling, x_ref),
            }
        })
        .collect();
    let failed_seeds: Vec<u64> = runs.iter().filter(|r| r.outcome.is_err()).map(|r| r.seed).collect();
    let ok: Vec<&SolveReport> = runs.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let Some(first) = ok.first() else {
        return Err(runs.into_iter().next().unwrap().outcome.err().unwrap());
    };
    let points = first.record_times.len();
    let mut agg = SweepAggregate {
        record_times: first.record_times.clone(),
        succeeded: ok.len(),
        ..SweepAggregate::default()
    };
    let mut column = Vec::with_capacity(ok.len());
    for p in 0..points {
        column.clear();
        column.extend(ok.iter().map(|r| r.residuals[p]));
        agg.mean_residual.push(column.iter().sum::<f64>() / column.len() as f64);
        agg.min_residual.push(column.iter().copied().fold(f64::INFINITY, f64::min));
        agg.max_residual.push(column.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        agg.median_residual.push(median(&mut column));
    }
    if ok.iter().all(|r| r.avg_sq_error.is_some()) {
        agg.mean_avg_sq_error = Some(
            (0..points)
                .map(|p| ok.iter().map(|r| r.avg_sq_error.as_ref().unwrap()[p]).sum::<f64>() / ok.len() as f64)
                .collect(),
        );
    }
    Ok(SeedSweep {
        runs,
        failed_seeds,
        aggregate: agg,
    })
}
