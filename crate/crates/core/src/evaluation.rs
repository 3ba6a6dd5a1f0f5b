//! Out-of-sample study: train on a handful of samples, solve the empirical
//! game, then score the equilibrium on draws from a shifted truth.
//!
//! Training and test draws come from per-agent streams keyed on the macro seed
//! only, so scenarios sharing a seed see bitwise identical data and differ
//! only through the penalties.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::{EmpiricalDistribution, GameSpec};
use crate::oracle::{reference_equilibrium, OracleConfig, OracleMethod};
use crate::rng::{self, Purpose};
use crate::solver::Marginal;

/// Risk-aversion levels `rho_i`; the penalty is `1/rho_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub label: String,
    pub rho: Vec<f64>,
}

impl Scenario {
    pub fn new(label: impl Into<String>, rho: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            rho,
        }
    }

    pub fn penalties(&self) -> Vec<f64> {
        self.rho.iter().map(|r| 1.0 / r).collect()
    }
}

/// The reference grid of three cases by three scenarios. In every case
/// scenario 2 makes agent 1 markedly more risk averse and scenario 3 does the
/// same for agents 1 and 2.
pub fn reference_scenarios() -> Vec<Vec<Scenario>> {
    let cases: [[[f64; 5]; 3]; 3] = [
        [
            [0.05, 0.075, 0.10, 0.125, 0.15],
            [2.0, 0.075, 0.10, 0.125, 0.15],
            [2.0, 2.0, 0.10, 0.125, 0.15],
        ],
        [
            [0.20, 0.30, 0.40, 0.50, 0.60],
            [4.0, 0.30, 0.40, 0.50, 0.60],
            [4.0, 4.0, 0.40, 0.50, 0.60],
        ],
        [
            [1.20, 1.30, 1.40, 1.50, 1.60],
            [8.0, 1.30, 1.40, 1.50, 1.60],
            [8.0, 8.0, 1.40, 1.50, 1.60],
        ],
    ];
    cases
        .iter()
        .enumerate()
        .map(|(c, row)| {
            row.iter()
                .enumerate()
                .map(|(s, rho)| Scenario::new(format!("case{}-scenario{}", c + 1, s + 1), rho.to_vec()))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OosConfig {
    pub train_means: Vec<f64>,
    pub train_stds: Vec<f64>,
    pub mean_shift: Vec<f64>,
    pub std_shift: Vec<f64>,
    pub train_counts: Vec<usize>,
    pub test_count: usize,
    pub scenario: Scenario,
    pub macro_seed: u64,
    pub histogram_bins: usize,
}

impl OosConfig {
    /// Five-agent reference study with the given scenario.
    pub fn reference(scenario: Scenario, macro_seed: u64) -> Self {
        Self {
            train_means: vec![0.0, 0.3, 0.6, 0.9, 1.2],
            train_stds: vec![1.0, 1.2, 1.5, 1.8, 2.0],
            mean_shift: vec![0.5, -0.4, 0.6, -0.5, 0.7],
            std_shift: vec![0.8, -0.6, 0.9, -0.7, 1.0],
            train_counts: vec![20, 15, 10, 8, 6],
            test_count: 3000,
            scenario,
            macro_seed,
            histogram_bins: 30,
        }
    }

    pub fn validate(&self, num_agents: usize) -> Result<()> {
        let mut bad = Vec::new();
        let lens = [
            ("train_means", self.train_means.len()),
            ("train_stds", self.train_stds.len()),
            ("mean_shift", self.mean_shift.len()),
            ("std_shift", self.std_shift.len()),
            ("train_counts", self.train_counts.len()),
            ("rho", self.scenario.rho.len()),
        ];
        for (name, len) in lens {
            if len != num_agents {
                bad.push(format!("{name} has {len} entries for {num_agents} agents"));
            }
        }
        if !bad.is_empty() {
            return Err(Error::Config(bad.join("; ")));
        }
        for i in 0..num_agents {
            let (m, s) = (self.train_means[i], self.train_stds[i]);
            if !(m.is_finite() && s.is_finite() && s > 0.0) {
                bad.push(format!("agent {}: training std must be positive, got {s}", i + 1));
            }
            let shifted = s + self.std_shift[i];
            if !(shifted > 0.0 && (m + self.mean_shift[i]).is_finite()) {
                bad.push(format!("agent {}: shifted std must be positive, got {shifted}", i + 1));
            }
            if self.train_counts[i] == 0 {
                bad.push(format!("agent {}: at least one training sample is required", i + 1));
            }
            let r = self.scenario.rho[i];
            if !(r > 0.0 && r.is_finite()) {
                bad.push(format!("agent {}: rho must be positive and finite, got {r}", i + 1));
            }
        }
        if self.test_count == 0 {
            bad.push("test_count must be at least 1".into());
        }
        if self.histogram_bins == 0 {
            bad.push("histogram_bins must be at least 1".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    fn train_marginal(&self, i: usize) -> Marginal {
        Marginal::Gaussian {
            mean: self.train_means[i],
            std: self.train_stds[i],
        }
    }

    fn test_marginal(&self, i: usize) -> Marginal {
        Marginal::Gaussian {
            mean: self.train_means[i] + self.mean_shift[i],
            std: self.train_stds[i] + self.std_shift[i],
        }
    }

    pub fn is_unshifted(&self) -> bool {
        self.mean_shift.iter().chain(&self.std_shift).all(|v| *v == 0.0)
    }
}

/// Sample statistics; the standard deviation uses `n - 1` and quantiles
/// interpolate linearly between order statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            count: n,
            mean,
            std_dev: var.sqrt(),
            q05: quantile_sorted(&sorted, 0.05),
            q50: quantile_sorted(&sorted, 0.5),
            q95: quantile_sorted(&sorted, 0.95),
        })
    }

    pub fn std_error(&self) -> f64 {
        self.std_dev / (self.count as f64).sqrt()
    }
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` increasing edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width bins over `[min, max]`. Each bin holds `[lo, hi)` except the
/// last, which also holds the maximum. A constant sample gets the unit-width
/// range centred on its value.
pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("histogram values must be finite".into()));
    }
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|k| lo + k as f64 * width).collect();
    edges.push(hi);
    let mut counts = vec![0; bins];
    for v in values {
        let k = edges.partition_point(|e| e <= v).saturating_sub(1).min(bins - 1);
        counts[k] += 1;
    }
    Ok(Histogram { edges, counts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OosReport {
    pub label: String,
    pub macro_seed: u64,
    pub equilibrium: Vec<f64>,
    pub oracle_method: OracleMethod,
    /// Total population cost `sum_i f_i(x*, xi_i)` per joint test draw.
    pub realizations: Vec<f64>,
    pub summary: Summary,
    pub histogram: Histogram,
    /// Expected population cost at `x*` under the training distribution.
    pub in_sample_expected: f64,
}

impl OosReport {
    /// Whether the sample mean lies within three standard errors of the
    /// in-sample expectation. Meaningful only for unshifted test laws.
    pub fn consistent_with_training(&self) -> bool {
        (self.summary.mean - self.in_sample_expected).abs() <= 3.0 * self.summary.std_error()
    }
}

fn draw_scalar_gaussians(
    spec: &GameSpec,
    marginal: Marginal,
    agent: usize,
    count: usize,
    seed: u64,
    purpose: Purpose,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = rng::stream(seed, agent, purpose);
    let support = spec.support(agent);
    (0..count)
        .map(|_| {
            support
                .lower()
                .iter()
                .zip(support.upper())
                .map(|(l, u)| marginal.sample(&mut rng, *l, *u))
                .collect()
        })
        .collect()
}

/// Draws the training data for `cfg`, builds the empirical game on
/// `template` with penalties `1/rho_i` and returns it.
pub fn training_game(cfg: &OosConfig, template: &GameSpec) -> Result<GameSpec> {
    let n = template.num_agents();
    cfg.validate(n)?;
    let data = (0..n)
        .map(|i| {
            let samples = draw_scalar_gaussians(
                template,
                cfg.train_marginal(i),
                i,
                cfg.train_counts[i],
                cfg.macro_seed,
                Purpose::Training,
            )?;
            EmpiricalDistribution::new(samples)
        })
        .collect::<Result<Vec<_>>>()?;
    template
        .clone()
        .with_penalties(cfg.scenario.penalties())?
        .with_empirical_data(data)
}

pub fn run_oos_experiment(cfg: &OosConfig, template: &GameSpec, oracle: &OracleConfig) -> Result<OosReport> {
    let game = training_game(cfg, template)?;
    let violations = crate::game::validate_game(&game);
    if !violations.is_empty() {
        return Err(Error::InvalidGame(violations));
    }
    let n = game.num_agents();
    let star = reference_equilibrium(&game, oracle)?;
    let x = &star.equilibrium;

    let test: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| {
            draw_scalar_gaussians(&game, cfg.test_marginal(i), i, cfg.test_count, cfg.macro_seed, Purpose::Testing)
        })
        .collect::<Result<_>>()?;
    let model = game.cost_model();
    let realizations: Vec<f64> = (0..cfg.test_count)
        .into_par_iter()
        .map(|k| (0..n).map(|i| model.value(i, x, &test[i][k])).sum())
        .collect();

    let mut in_sample_expected = 0.0;
    for i in 0..n {
        let s = game.support(i);
        let mean = s
            .lower()
            .iter()
            .zip(s.upper())
            .map(|(l, u)| cfg.train_marginal(i).truncated_mean(*l, *u))
            .collect::<Result<Vec<_>>>()?;
        in_sample_expected += model.value(i, x, &mean);
    }

    Ok(OosReport {
        label: cfg.scenario.label.clone(),
        macro_seed: cfg.macro_seed,
        equilibrium: star.equilibrium,
        oracle_method: star.method,
        summary: Summary::of(&realizations)?,
        histogram: histogram(&realizations, cfg.histogram_bins)?,
        realizations,
        in_sample_expected,
    })
}

/// Paired comparison of two scenarios over the macro seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDifference {
    pub first: String,
    pub second: String,
    /// Mean over seeds of `mean_first - mean_second`.
    pub mean_difference: f64,
    pub std_error: f64,
    /// Seeds on which the first scenario's mean cost is not above the second's.
    pub first_not_greater: usize,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSummary {
    pub label: String,
    /// Statistics of the per-seed mean costs.
    pub seed_means: Summary,
    /// Statistics of all realizations pooled over seeds.
    pub pooled: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioComparison {
    pub seeds: Vec<u64>,
    /// `reports[s][r]` is scenario `s` at seed `seeds[r]`.
    pub reports: Vec<Vec<OosReport>>,
    pub summaries: Vec<ScenarioSummary>,
    /// Every ordered pair `(a, b)` with `a > b` in scenario order.
    pub differences: Vec<PairDifference>,
}

impl ScenarioComparison {
    pub fn difference(&self, first: &str, second: &str) -> Option<&PairDifference> {
        self.differences
            .iter()
            .find(|d| d.first == first && d.second == second)
    }
}

/// Runs every scenario at seeds `base.macro_seed + r` for `r < repetitions`.
pub fn scenario_sweep(
    scenarios: &[Scenario],
    base: &OosConfig,
    template: &GameSpec,
    repetitions: usize,
    oracle: &OracleConfig,
) -> Result<ScenarioComparison> {
    if scenarios.len() < 2 {
        return Err(Error::Config("a sweep needs at least two scenarios".into()));
    }
    if repetitions < 2 {
        return Err(Error::Config("a sweep needs at least two macro seeds".into()));
    }
    let seeds: Vec<u64> = (0..repetitions as u64).map(|r| base.macro_seed.wrapping_add(r)).collect();
    let jobs: Vec<(usize, u64)> = (0..scenarios.len())
        .flat_map(|s| seeds.iter().map(move |seed| (s, *seed)))
        .collect();
    let flat = jobs
        .par_iter()
        .map(|(s, seed)| {
            let cfg = OosConfig {
                scenario: scenarios[*s].clone(),
                macro_seed: *seed,
                ..base.clone()
            };
            run_oos_experiment(&cfg, template, oracle)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = flat.into_iter();
    let reports: Vec<Vec<OosReport>> = scenarios
        .iter()
        .map(|_| it.by_ref().take(repetitions).collect())
        .collect();

    let summaries = reports
        .iter()
        .zip(scenarios)
        .map(|(runs, sc)| {
            let means: Vec<f64> = runs.iter().map(|r| r.summary.mean).collect();
            let pooled: Vec<f64> = runs.iter().flat_map(|r| r.realizations.iter().copied()).collect();
            Ok(ScenarioSummary {
                label: sc.label.clone(),
                seed_means: Summary::of(&means)?,
                pooled: Summary::of(&pooled)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut differences = Vec::new();
    for a in 0..scenarios.len() {
        for b in 0..a {
            let diffs: Vec<f64> = (0..repetitions)
                .map(|r| reports[a][r].summary.mean - reports[b][r].summary.mean)
                .collect();
            let s = Summary::of(&diffs)?;
            differences.push(PairDifference {
                first: scenarios[a].label.clone(),
                second: scenarios[b].label.clone(),
                mean_difference: s.mean,
                std_error: s.std_error(),
                first_not_greater: diffs.iter().filter(|d| **d <= 0.0).count(),
                seeds: repetitions,
            });
        }
    }
    Ok(ScenarioComparison {
        seeds,
        reports,
        summaries,
        differences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{BoxSet, CournotCost};

    fn template() -> GameSpec {
        GameSpec::cournot(
            CournotCost::new(10.0, CournotCost::default_marginal_costs(5)),
            BoxSet::interval(0.0, 10.0),
            BoxSet::interval(-10.0, 10.0),
            vec![1.0; 5],
            vec![vec![0.0]; 5],
        )
        .unwrap()
    }

    #[test]
    fn histogram_examples() {
        let h = histogram(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(h.edges, vec![1.0, 2.5, 4.0]);
        assert_eq!(h.counts, vec![2, 2]);
        let c = histogram(&[3.0; 7], 4).unwrap();
        assert_eq!(c.counts.iter().sum::<usize>(), 7);
        assert_eq!(c.counts.iter().filter(|k| **k > 0).count(), 1);
        assert_eq!((c.edges[0], c.edges[4]), (2.5, 3.5));
        assert!(matches!(histogram(&[], 3), Err(Error::EmptyInput)));
        assert!(histogram(&[1.0], 0).is_err());
    }

    #[test]
    fn histogram_boundary_goes_to_upper_bin_except_maximum() {
        let h = histogram(&[0.0, 1.0, 2.0], 2).unwrap();
        assert_eq!(h.counts, vec![1, 2]);
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.std_dev - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.q50 - 2.5).abs() < 1e-15);
        assert!((s.q05 - 1.15).abs() < 1e-12);
        assert!((s.q95 - 3.85).abs() < 1e-12);
        assert_eq!(Summary::of(&[7.0]).unwrap().std_dev, 0.0);
    }

    #[test]
    fn reference_grid_matches_risk_levels() {
        let grid = reference_scenarios();
        assert_eq!(grid.len(), 3);
        assert_eq!(grid[0][0].rho, vec![0.05, 0.075, 0.10, 0.125, 0.15]);
        assert_eq!(grid[2][2].rho, vec![8.0, 8.0, 1.40, 1.50, 1.60]);
        assert_eq!(grid[1][1].label, "case2-scenario2");
        assert_eq!(grid[2][2].penalties()[0], 0.125);
    }

    #[test]
    fn config_validation() {
        let mut cfg = OosConfig::reference(reference_scenarios()[0][0].clone(), 0);
        assert!(cfg.validate(5).is_ok());
        cfg.std_shift[1] = -1.2;
        cfg.scenario.rho[0] = 0.0;
        let msg = cfg.validate(5).unwrap_err().to_string();
        assert!(msg.contains("agent 2: shifted std"));
        assert!(msg.contains("agent 1: rho"));
        assert!(cfg.validate(4).is_err());
    }

    #[test]
    fn report_shapes_and_conservation() {
        let mut cfg = OosConfig::reference(reference_scenarios()[0][0].clone(), 3);
        cfg.test_count = 500;
        let r = run_oos_experiment(&cfg, &template(), &OracleConfig::default()).unwrap();
        assert_eq!(r.realizations.len(), 500);
        assert_eq!(r.histogram.counts.iter().sum::<usize>(), 500);
        assert_eq!(r.histogram.edges.len(), 31);
        assert_eq!(r.label, "case1-scenario1");
        assert_eq!(r.equilibrium.len(), 5);
    }

    #[test]
    fn identical_scenarios_differ_by_exactly_zero() {
        let sc = reference_scenarios()[1][0].clone();
        let mut base = OosConfig::reference(sc.clone(), 11);
        base.test_count = 200;
        let twin = Scenario::new("twin", sc.rho.clone());
        let cmp = scenario_sweep(&[sc, twin], &base, &template(), 2, &OracleConfig::default()).unwrap();
        let d = &cmp.differences[0];
        assert_eq!(d.mean_difference, 0.0);
        assert_eq!(d.first_not_greater, 2);
        assert_eq!(cmp.reports[0][1].realizations, cmp.reports[1][1].realizations);
    }

    #[test]
    fn sweep_preconditions() {
        let sc = reference_scenarios()[0][0].clone();
        let base = OosConfig::reference(sc.clone(), 0);
        let t = template();
        let o = OracleConfig::default();
        assert!(scenario_sweep(std::slice::from_ref(&sc), &base, &t, 3, &o).is_err());
        assert!(scenario_sweep(&[sc.clone(), sc], &base, &t, 1, &o).is_err());
    }
}
