use std::path::Path;
use std::sync::Arc;

use drne_core::adversary::{surrogate_cost_value, InnerSolverConfig};
use drne_core::config::RunConfig;
use drne_core::evaluation::{
    histogram, reference_scenarios, run_oos_experiment, scenario_sweep, training_game, OosConfig, Scenario,
};
use drne_core::game::{penalized_objective, BoxSet, CostFunction, CostModel, CournotCost, EmpiricalDistribution, GameSpec};
use drne_core::oracle::{exact_projected_gradient, interior_linear_solve, InteriorSolve, OracleConfig};
use drne_core::solver::{run_algorithm1, Sampling, SolverConfig};
use drne_core::vi::{certify_monotonicity, surrogate_gradient, vi_residual};

fn risk_scenarios() -> RunConfig {
    RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/risk_scenarios.toml")).unwrap()
}

/// `x_i (S - a + c_i) + ln(1 + x_i) xi_i - xi_i^2 / 2`
struct LogExposure {
    a: f64,
    c: Vec<f64>,
}

impl CostFunction for LogExposure {
    fn value(&self, i: usize, x: &[f64], xi: &[f64]) -> f64 {
        let s: f64 = x.iter().sum();
        x[i] * (s - self.a + self.c[i]) + (1.0 + x[i]).ln() * xi[0] - 0.5 * xi[0] * xi[0]
    }

    fn grad_own(&self, i: usize, x: &[f64], xi: &[f64]) -> Vec<f64> {
        let s: f64 = x.iter().sum();
        vec![s + x[i] - self.a + self.c[i] + xi[0] / (1.0 + x[i])]
    }

    fn grad_xi(&self, i: usize, x: &[f64], xi: &[f64]) -> Vec<f64> {
        vec![(1.0 + x[i]).ln() - xi[0]]
    }
}

fn log_exposure_game(samples: Vec<Vec<f64>>, lambdas: Vec<f64>) -> GameSpec {
    let n = samples.len();
    let model = LogExposure {
        a: 6.0,
        c: CournotCost::default_marginal_costs(n),
    };
    GameSpec::new(
        vec![BoxSet::interval(0.0, 5.0); n],
        vec![BoxSet::interval(-3.0, 3.0); n],
        lambdas,
        CostModel::Generic(Arc::new(model)),
        samples
            .iter()
            .map(|s| EmpiricalDistribution::from_scalars(s).unwrap())
            .collect(),
    )
    .unwrap()
}

/// Worst case of the log-exposure model, solved by hand.
fn log_exposure_maximizer(x_i: f64, lambda: f64, anchor: f64) -> f64 {
    (((1.0 + x_i).ln() + 2.0 * lambda * anchor) / (1.0 + 2.0 * lambda)).clamp(-3.0, 3.0)
}

#[test]
fn hand_evaluated_penalized_objective() {
    let spec = GameSpec::cournot(
        CournotCost::new(4.0, vec![0.0, 0.0]),
        BoxSet::interval(0.0, 10.0),
        BoxSet::interval(0.0, 1.0),
        vec![2.0, 2.0],
        vec![vec![0.3], vec![0.3]],
    )
    .unwrap();
    let h = penalized_objective(&spec, 0, &[1.0, 1.0], &[0.55], &[0.3]).unwrap();
    assert!((h - (-1.575)).abs() < 1e-12);
}

#[test]
fn two_agent_surrogate_value_and_gradient() {
    let spec = GameSpec::cournot(
        CournotCost::new(4.0, vec![0.0, 0.0]),
        BoxSet::interval(0.0, 10.0),
        BoxSet::interval(-5.0, 5.0),
        vec![2.0, 2.0],
        vec![vec![0.3], vec![0.3]],
    )
    .unwrap();
    let cfg = InnerSolverConfig::with_accuracy(1e-10);
    let value = surrogate_cost_value(&spec, 0, &[1.0, 1.0], &cfg).unwrap();
    assert!((value - (-1.575)).abs() < 1e-9);
    let g = surrogate_gradient(&spec, 0, &[1.0, 1.0], &[0.3], &cfg).unwrap()[0];
    assert!((g - (-0.45)).abs() < 1e-9);
}

#[test]
fn two_agent_interior_system() {
    let spec = GameSpec::cournot(
        CournotCost::new(4.0, vec![0.0, 0.0]),
        BoxSet::interval(0.0, 10.0),
        BoxSet::interval(-5.0, 5.0),
        vec![2.0, 2.0],
        vec![vec![0.5], vec![0.5]],
    )
    .unwrap();
    let InteriorSolve::Valid(r) = interior_linear_solve(&spec).unwrap() else {
        panic!("expected an interior solution");
    };
    for x in &r.equilibrium {
        assert!((x - 3.5 / 3.25).abs() < 1e-12);
    }
    assert!(r.residual_at_solution <= 1e-8);
}

#[test]
fn four_agents_at_half_penalty_are_uncertified() {
    let spec = GameSpec::cournot(
        CournotCost::new(10.0, CournotCost::default_marginal_costs(4)),
        BoxSet::interval(0.0, 10.0),
        BoxSet::interval(0.0, 1.0),
        vec![0.5, 1.0, 2.0, 3.0],
        vec![vec![0.5]; 4],
    )
    .unwrap();
    let cert = certify_monotonicity(&spec).unwrap();
    assert!((cert.margin + 1.0).abs() < 1e-12);
    assert!(!cert.certified);
}

#[test]
fn nonlinear_callback_gradient_matches_value_differences() {
    let samples = vec![vec![0.2, -0.4, 1.1], vec![0.0, 0.7], vec![-1.5]];
    let lambdas = vec![0.8, 1.5, 3.0];
    let spec = log_exposure_game(samples.clone(), lambdas.clone());
    let cfg = InnerSolverConfig::with_accuracy(1e-11);
    let x = [1.3, 0.6, 2.2];
    let h = 1e-5;
    for i in 0..3 {
        let g: f64 = samples[i]
            .iter()
            .map(|s| surrogate_gradient(&spec, i, &x, &[*s], &cfg).unwrap()[0])
            .sum::<f64>()
            / samples[i].len() as f64;
        let (mut xp, mut xm) = (x, x);
        xp[i] += h;
        xm[i] -= h;
        let fd = (surrogate_cost_value(&spec, i, &xp, &cfg).unwrap() - surrogate_cost_value(&spec, i, &xm, &cfg).unwrap())
            / (2.0 * h);
        let s: f64 = x.iter().sum();
        let analytic = samples[i]
            .iter()
            .map(|anchor| {
                let m = log_exposure_maximizer(x[i], lambdas[i], *anchor);
                s + x[i] - 6.0 + 1.0 + 0.1 * (i + 1) as f64 + m / (1.0 + x[i])
            })
            .sum::<f64>()
            / samples[i].len() as f64;
        assert!((fd - g).abs() <= 1e-6 * g.abs().max(1.0), "agent {i}: fd {fd} vs {g}");
        assert!((analytic - g).abs() <= 1e-8, "agent {i}: analytic {analytic} vs {g}");
    }
}

#[test]
fn projected_gradient_is_start_independent_on_callback_model() {
    let spec = log_exposure_game(vec![vec![0.1, 0.5], vec![-0.2], vec![0.9, 0.3, 0.0]], vec![2.0, 2.5, 3.0]);
    let base = OracleConfig {
        tol: 1e-11,
        step: Some(0.15),
        ..OracleConfig::default()
    };
    let a = exact_projected_gradient(&spec, &OracleConfig { start: Some(vec![0.0; 3]), ..base.clone() }).unwrap();
    let b = exact_projected_gradient(&spec, &OracleConfig { start: Some(vec![5.0; 3]), ..base.clone() }).unwrap();
    let gap = a
        .equilibrium
        .iter()
        .zip(&b.equilibrium)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    assert!(gap < 1e-8, "{gap}");
    assert!(vi_residual(&spec, &a.equilibrium, &base.inner, 1.0).unwrap() <= 1e-9);
}

#[test]
fn callback_path_tracks_closed_form_iterates() {
    let samples: Vec<Vec<f64>> = (0..4).map(|i| vec![0.1 * i as f64, 0.9 - 0.2 * i as f64]).collect();
    let closed = GameSpec::cournot(
        CournotCost::new(10.0, CournotCost::default_marginal_costs(4)),
        BoxSet::interval(0.0, 10.0),
        BoxSet::interval(0.0, 1.0),
        vec![2.0; 4],
        samples,
    )
    .unwrap();
    let generic = GameSpec::new(
        closed.feasible_sets().to_vec(),
        closed.supports().to_vec(),
        closed.penalties().to_vec(),
        CostModel::Generic(Arc::new(closed.cost_model().as_cournot().unwrap().clone())),
        closed.empirical_data().to_vec(),
    )
    .unwrap();
    let cfg = SolverConfig {
        horizon: 300,
        record_every: 50,
        inner: InnerSolverConfig::with_accuracy(1e-12),
        rng_seed: 9,
        ..SolverConfig::default()
    };
    let a = run_algorithm1(&closed, &cfg, &Sampling::Empirical, None).unwrap();
    let b = run_algorithm1(&generic, &cfg, &Sampling::Empirical, None).unwrap();
    assert_eq!(a.record_times, b.record_times);
    for (p, q) in a.trajectory.iter().zip(&b.trajectory) {
        for (u, v) in p.iter().zip(q) {
            assert!((u - v).abs() < 1e-9);
        }
    }
}

#[test]
fn unshifted_test_law_reproduces_training_cost() {
    let cfg = risk_scenarios();
    let template = cfg.template().unwrap();
    let scenario = cfg.evaluate_scenario().unwrap();
    let mut oos = cfg.oos_config(scenario);
    oos.mean_shift = vec![0.0; 5];
    oos.std_shift = vec![0.0; 5];
    for seed in 0..3 {
        oos.macro_seed = seed;
        let report = run_oos_experiment(&oos, &template, &cfg.oracle_config()).unwrap();
        assert!(report.consistent_with_training(), "seed {seed}");
        assert_eq!(report.histogram.counts.iter().sum::<usize>(), oos.test_count);
    }
}

#[test]
fn scenarios_share_training_draws_at_equal_seeds() {
    let cfg = risk_scenarios();
    let template = cfg.template().unwrap();
    let grid = reference_scenarios();
    let a = training_game(&OosConfig::reference(grid[0][0].clone(), 4), &template).unwrap();
    let b = training_game(&OosConfig::reference(grid[2][2].clone(), 4), &template).unwrap();
    assert_eq!(a.empirical_data(), b.empirical_data());
    assert_ne!(a.penalties(), b.penalties());
    let c = training_game(&OosConfig::reference(grid[0][0].clone(), 5), &template).unwrap();
    assert_ne!(a.empirical_data(), c.empirical_data());
}

#[test]
fn relabelled_scenario_gives_identical_costs() {
    let cfg = risk_scenarios();
    let template = cfg.template().unwrap();
    let rho = vec![0.2, 0.3, 0.4, 0.5, 0.6];
    let mut base = OosConfig::reference(Scenario::new("a", rho.clone()), 11);
    base.test_count = 500;
    let cmp = scenario_sweep(
        &[Scenario::new("a", rho.clone()), Scenario::new("b", rho)],
        &base,
        &template,
        3,
        &cfg.oracle_config(),
    )
    .unwrap();
    let d = cmp.difference("b", "a").unwrap();
    assert_eq!(d.mean_difference, 0.0);
    assert_eq!(d.first_not_greater, 3);
}

#[test]
fn most_averse_scenario_beats_least_averse_at_default_intercept() {
    let mut cfg = risk_scenarios();
    cfg.game.demand_intercept = 10.0;
    let template = cfg.template().unwrap();
    for (label, scenarios) in cfg.sweep_cases().unwrap() {
        let base = cfg.oos_config(scenarios[0].clone());
        let cmp = scenario_sweep(&scenarios, &base, &template, 10, &cfg.oracle_config()).unwrap();
        let d = cmp.difference(&scenarios[2].label, &scenarios[0].label).unwrap();
        assert!(d.first_not_greater > 5, "{label}: {}/10", d.first_not_greater);
    }
}

#[test]
fn histogram_conserves_counts() {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let values: Vec<f64> = (0..3000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let h = histogram(&values, 30).unwrap();
    assert_eq!(h.counts.iter().sum::<usize>(), 3000);
    assert_eq!(h.edges.len(), 31);
    let constant = histogram(&[2.5; 17], 4).unwrap();
    assert_eq!(constant.counts.iter().filter(|c| **c > 0).count(), 1);
    assert_eq!(constant.counts.iter().sum::<usize>(), 17);
}
