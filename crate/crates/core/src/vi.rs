//! Pseudo-gradient of the surrogate game, VI residual and strong-monotonicity
//! certificates.
//!
//! By the envelope formula the partial gradient of `H_hat_i` in `x_i` is the
//! partial gradient of `f_i` evaluated at the inner maximizer, so no
//! derivative of the maximizer itself is needed.

use rand::Rng;

use crate::adversary::{cournot_maximizer, worst_case, InnerSolverConfig};
use crate::error::{Error, Result};
use crate::game::{GameSpec, ModelConstants};
use crate::rng::{self, Purpose};

/// `grad_{x_i} f_i(x, M_bar_i(x, xi_hat))`.
pub fn surrogate_gradient(
    spec: &GameSpec,
    agent: usize,
    x: &[f64],
    xi_hat: &[f64],
    cfg: &InnerSolverConfig,
) -> Result<Vec<f64>> {
    let inner = worst_case(spec, agent, x, xi_hat, cfg)?;
    Ok(spec.cost_model().grad_own(agent, x, &inner.maximizer))
}

/// Stacked `F_K(x) = col(grad_{x_i} H_i(x))`, each block an empirical average
/// over the agent's samples in index order.
pub fn pseudo_gradient(spec: &GameSpec, x: &[f64], cfg: &InnerSolverConfig) -> Result<Vec<f64>> {
    spec.check_joint(x)?;
    let mut out = vec![0.0; spec.joint_dim()];
    if let Some(cost) = spec.scalar_cournot() {
        let total: f64 = x.iter().sum();
        for (i, slot) in out.iter_mut().enumerate() {
            let lambda = spec.penalty(i);
            let support = spec.support(i);
            let (lo, hi) = (support.lower()[0], support.upper()[0]);
            let data = spec.data(i);
            let mut acc = 0.0;
            for s in data.samples() {
                acc += cournot_maximizer(lambda, x[i], s[0], lo, hi);
            }
            let base = total + x[i] - cost.demand_intercept + cost.marginal_costs[i];
            *slot = base + acc * data.weight();
        }
        return Ok(out);
    }
    for i in 0..spec.num_agents() {
        let data = spec.data(i);
        let block = &mut out[spec.block(i)];
        for s in data.samples() {
            let g = surrogate_gradient(spec, i, x, s, cfg)?;
            for (acc, v) in block.iter_mut().zip(&g) {
                *acc += v;
            }
        }
        let w = data.weight();
        block.iter_mut().for_each(|v| *v *= w);
    }
    Ok(out)
}

/// `|x - proj_X(x - step F_K(x))|`; zero exactly at solutions of VI(F_K, X).
pub fn vi_residual(spec: &GameSpec, x: &[f64], cfg: &InnerSolverConfig, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("residual step must be positive, got {step}")));
    }
    let f = pseudo_gradient(spec, x, cfg)?;
    Ok(residual_from_gradient(spec, x, &f, step))
}

pub(crate) fn residual_from_gradient(spec: &GameSpec, x: &[f64], f: &[f64], step: f64) -> f64 {
    let mut y: Vec<f64> = x.iter().zip(f).map(|(a, g)| a - step * g).collect();
    spec.project_joint_in_place(&mut y);
    x.iter()
        .zip(&y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Strong monotonicity certificate for `F_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityCertificate {
    pub mu: f64,
    /// `max_i L_x_i L_xi_i / (2 lambda_i)`
    pub mu_xi: f64,
    /// `mu - sqrt(N) mu_xi`
    pub margin: f64,
    pub certified: bool,
    pub l_x: Vec<f64>,
    pub l_xi: Vec<f64>,
    /// Set when the constants came from sampling rather than closed forms or
    /// declarations; such a certificate is not a proof.
    pub estimated: bool,
}

impl MonotonicityCertificate {
    pub fn from_constants(
        mu: f64,
        l_x: &[f64],
        l_xi: &[f64],
        penalties: &[f64],
        estimated: bool,
    ) -> Self {
        let mu_xi = l_x
            .iter()
            .zip(l_xi)
            .zip(penalties)
            .map(|((lx, lxi), lambda)| lx * lxi / (2.0 * lambda))
            .fold(0.0, f64::max);
        let margin = mu - (penalties.len() as f64).sqrt() * mu_xi;
        Self {
            mu,
            mu_xi,
            margin,
            certified: margin > 0.0,
            l_x: l_x.to_vec(),
            l_xi: l_xi.to_vec(),
            estimated,
        }
    }
}

/// Certificate from closed-form (Cournot) or declared constants.
pub fn certify_monotonicity(spec: &GameSpec) -> Result<MonotonicityCertificate> {
    let ModelConstants { l_x, l_xi, mu, .. } =
        spec.cost_model().constants(spec.num_agents()).ok_or_else(|| {
            Error::MissingConstants("generic cost model declares no constants".into())
        })?;
    Ok(MonotonicityCertificate::from_constants(
        mu,
        &l_x,
        &l_xi,
        spec.penalties(),
        false,
    ))
}

/// Sampled estimates of the model constants. Never a proof.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantEstimates {
    pub l_x: Vec<f64>,
    pub l_xi: Vec<f64>,
    pub mu: f64,
    pub samples: usize,
}

impl ConstantEstimates {
    pub fn certificate(&self, spec: &GameSpec) -> MonotonicityCertificate {
        MonotonicityCertificate::from_constants(self.mu, &self.l_x, &self.l_xi, spec.penalties(), true)
    }
}

/// Finite sampling range for a possibly unbounded interval.
fn sampling_range(lo: f64, hi: f64) -> (f64, f64) {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo, hi),
        (true, false) => (lo, lo + 2.0),
        (false, true) => (hi - 2.0, hi),
        (false, false) => (-1.0, 1.0),
    }
}

fn draw_box(rng: &mut impl Rng, lower: &[f64], upper: &[f64], out: &mut [f64]) {
    for ((o, l), u) in out.iter_mut().zip(lower).zip(upper) {
        let (a, b) = sampling_range(*l, *u);
        *o = if a < b { rng.random_range(a..=b) } else { a };
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

/// Resampling cap for degenerate pairs (identical points).
const MAX_REDRAWS: usize = 64;

/// Difference-quotient estimates of `L_x`, `L_xi` and `mu` over random pairs
/// in `X x Xi`. Half of the `L_xi` pairs differ only in the agent's own block,
/// the other half in every block.
pub fn estimate_constants(
    spec: &GameSpec,
    sample_count: usize,
    seed: u64,
) -> Result<ConstantEstimates> {
    if sample_count == 0 {
        return Err(Error::Config("sample count must be positive".into()));
    }
    let n = spec.num_agents();
    let model = spec.cost_model();
    let dim = spec.joint_dim();
    let draw_x = |rng: &mut rand_chacha::ChaCha8Rng, out: &mut [f64]| {
        for i in 0..n {
            let b = spec.feasible_set(i);
            draw_box(rng, b.lower(), b.upper(), &mut out[spec.block(i)]);
        }
    };
    let draw_xi = |rng: &mut rand_chacha::ChaCha8Rng, i: usize| {
        let b = spec.support(i);
        let mut z = vec![0.0; b.dim()];
        draw_box(rng, b.lower(), b.upper(), &mut z);
        z
    };

    let mut l_x = vec![0.0f64; n];
    let mut l_xi = vec![0.0f64; n];
    for i in 0..n {
        let mut rng = rng::stream(seed, i, Purpose::Estimation);
        let mut x = vec![0.0; dim];
        let mut y = vec![0.0; dim];
        for k in 0..sample_count {
            draw_x(&mut rng, &mut x);
            let z = draw_xi(&mut rng, i);
            let mut z2 = draw_xi(&mut rng, i);
            let mut redraws = 0;
            while dist(&z, &z2) == 0.0 && redraws < MAX_REDRAWS {
                z2 = draw_xi(&mut rng, i);
                redraws += 1;
            }
            let dz = dist(&z, &z2);
            if dz > 0.0 {
                let g1 = model.grad_own(i, &x, &z);
                let g2 = model.grad_own(i, &x, &z2);
                l_x[i] = l_x[i].max(dist(&g1, &g2) / dz);
            }

            let own_only = k % 2 == 0;
            let mut redraws = 0;
            loop {
                if own_only {
                    y.copy_from_slice(&x);
                    let b = spec.feasible_set(i);
                    draw_box(&mut rng, b.lower(), b.upper(), &mut y[spec.block(i)]);
                } else {
                    draw_x(&mut rng, &mut y);
                }
                if dist(&x, &y) > 0.0 || redraws >= MAX_REDRAWS {
                    break;
                }
                redraws += 1;
            }
            let dx = dist(&x, &y);
            if dx > 0.0 {
                // the transport term of grad_xi h cancels in the difference
                let g1 = model.grad_xi(i, &x, &z);
                let g2 = model.grad_xi(i, &y, &z);
                l_xi[i] = l_xi[i].max(dist(&g1, &g2) / dx);
            }
        }
    }

    let mut rng = rng::stream(seed, n, Purpose::Estimation);
    let mut mu = f64::INFINITY;
    let mut x = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    for _ in 0..sample_count {
        let xi: Vec<Vec<f64>> = (0..n).map(|i| draw_xi(&mut rng, i)).collect();
        let mut redraws = 0;
        loop {
            draw_x(&mut rng, &mut x);
            draw_x(&mut rng, &mut y);
            if dist(&x, &y) > 0.0 || redraws >= MAX_REDRAWS {
                break;
            }
            redraws += 1;
        }
        let dx2 = dist(&x, &y).powi(2);
        if dx2 == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for (i, xi_i) in xi.iter().enumerate() {
            let gx = model.grad_own(i, &x, xi_i);
            let gy = model.grad_own(i, &y, xi_i);
            let r = spec.block(i);
            inner += gx
                .iter()
                .zip(&gy)
                .zip(x[r.clone()].iter().zip(&y[r]))
                .map(|((a, b), (p, q))| (a - b) * (p - q))
                .sum::<f64>();
        }
        mu = mu.min(inner / dx2);
    }
    if !mu.is_finite() {
        return Err(Error::Config("feasible set is a single point; mu is undefined".into()));
    }
    Ok(ConstantEstimates {
        l_x,
        l_xi,
        mu,
        samples: sample_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{BoxSet, CostFunction, CostModel, CournotCost};
    use std::sync::Arc;

    fn two_agent(lambda: f64, support: BoxSet) -> GameSpec {
        GameSpec::cournot(
            CournotCost::new(4.0, vec![0.0, 0.0]),
            BoxSet::interval(0.0, 10.0),
            support,
            vec![lambda, 2.0],
            vec![vec![0.3], vec![0.5]],
        )
        .unwrap()
    }

    fn five_agent(penalties: Vec<f64>) -> GameSpec {
        GameSpec::cournot(
            CournotCost::new(10.0, CournotCost::default_marginal_costs(5)),
            BoxSet::interval(0.0, 10.0),
            BoxSet::interval(0.0, 1.0),
            penalties,
            vec![vec![0.2, 0.7]; 5],
        )
        .unwrap()
    }

    fn as_generic(spec: &GameSpec, cost: Arc<dyn CostFunction>) -> GameSpec {
        GameSpec::new(
            spec.feasible_sets().to_vec(),
            spec.supports().to_vec(),
            spec.penalties().to_vec(),
            CostModel::Generic(cost),
            spec.empirical_data().to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn surrogate_gradient_interior_example() {
        let spec = two_agent(2.0, BoxSet::interval(-5.0, 5.0));
        let g = surrogate_gradient(&spec, 0, &[1.0, 1.0], &[0.3], &InnerSolverConfig::default()).unwrap();
        assert!((g[0] + 0.45).abs() < 1e-12);
    }

    #[test]
    fn surrogate_gradient_huge_penalty_limit() {
        let spec = two_agent(1e12, BoxSet::interval(-5.0, 5.0));
        let g = surrogate_gradient(&spec, 0, &[1.0, 1.0], &[0.3], &InnerSolverConfig::default()).unwrap();
        assert!((g[0] + 0.7).abs() < 1e-6);
    }

    #[test]
    fn surrogate_gradient_zero_decision_uses_anchor() {
        let spec = two_agent(2.0, BoxSet::interval(-5.0, 5.0));
        let x = [0.0, 1.5];
        let g = surrogate_gradient(&spec, 0, &x, &[0.3], &InnerSolverConfig::default()).unwrap();
        let cost = spec.cost_model().as_cournot().unwrap();
        assert_eq!(g[0], cost.grad_own_scalar(0, &x, 0.3));
    }

    #[test]
    fn pseudo_gradient_single_agent_single_sample() {
        let spec = GameSpec::cournot(
            CournotCost::new(3.0, vec![0.5]),
            BoxSet::interval(0.0, 10.0),
            BoxSet::interval(-1.0, 1.0),
            vec![1.5],
            vec![vec![0.2]],
        )
        .unwrap();
        let cfg = InnerSolverConfig::default();
        let f = pseudo_gradient(&spec, &[0.8], &cfg).unwrap();
        let g = surrogate_gradient(&spec, 0, &[0.8], &[0.2], &cfg).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn pseudo_gradient_large_penalty_is_affine() {
        let spec = GameSpec::cournot(
            CournotCost::new(10.0, CournotCost::default_marginal_costs(5)),
            BoxSet::interval(0.0, 10.0),
            BoxSet::interval(0.0, 1.0),
            vec![1e12; 5],
            vec![vec![0.5]; 5],
        )
        .unwrap();
        let x = [0.4, 1.1, 2.0, 0.0, 3.3];
        let f = pseudo_gradient(&spec, &x, &InnerSolverConfig::default()).unwrap();
        let total: f64 = x.iter().sum();
        let c = CournotCost::default_marginal_costs(5);
        for i in 0..5 {
            let expected = x[i] + total - (10.0 - c[i] - 0.5);
            assert!((f[i] - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn pseudo_gradient_generic_path_matches_closed_form() {
        let spec = five_agent(vec![0.7, 1.0, 2.0, 3.0, 4.0]);
        let cost = spec.cost_model().as_cournot().unwrap().clone();
        let generic = as_generic(&spec, Arc::new(cost));
        let x = [0.5, 3.0, 1.2, 0.1, 2.2];
        let cfg = InnerSolverConfig::with_accuracy(1e-12);
        let a = pseudo_gradient(&spec, &x, &cfg).unwrap();
        let b = pseudo_gradient(&generic, &x, &cfg).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn pseudo_gradient_permutes_with_agent_labels() {
        let cost = CournotCost::new(8.0, vec![1.0, 1.4, 0.6]);
        let spec = GameSpec::cournot(
            cost.clone(),
            BoxSet::interval(0.0, 10.0),
            BoxSet::interval(0.0, 1.0),
            vec![1.0, 2.0, 3.0],
            vec![vec![0.1], vec![0.2, 0.9], vec![0.5, 0.6, 0.7]],
        )
        .unwrap();
        let perm = [2usize, 0, 1];
        let permuted = GameSpec::cournot(
            CournotCost::new(8.0, perm.iter().map(|&p| cost.marginal_costs[p]).collect()),
            BoxSet::interval(0.0, 10.0),
            BoxSet::interval(0.0, 1.0),
            perm.iter().map(|&p| spec.penalty(p)).collect(),
            perm.iter()
                .map(|&p| spec.data(p).samples().iter().map(|s| s[0]).collect())
                .collect(),
        )
        .unwrap();
        let x = [1.0, 2.0, 0.5];
        let xp: Vec<f64> = perm.iter().map(|&p| x[p]).collect();
        let cfg = InnerSolverConfig::default();
        let f = pseudo_gradient(&spec, &x, &cfg).unwrap();
        let fp = pseudo_gradient(&permuted, &xp, &cfg).unwrap();
        for (k, &p) in perm.iter().enumerate() {
            assert!((fp[k] - f[p]).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_zero_at_interior_stationary_point() {
        // one agent, F(x) = 2x - a + c + mean(xi_bar); choose a so that F(1) = 0
        let spec = GameSpec::cournot(
            CournotCost::new(0.0, vec![0.0]),
            BoxSet::interval(-10.0, 10.0),
            BoxSet::interval(-5.0, 5.0),
            vec![0.5],
            vec![vec![-3.0]],
        )
        .unwrap();
        // xi_bar = -3 + x = -2 at x = 1 -> F = 2 - a - 2 -> a = 0 gives F = 0
        let r = vi_residual(&spec, &[1.0], &InnerSolverConfig::default(), 1.0).unwrap();
        assert_eq!(r, 0.0);
        assert!(vi_residual(&spec, &[1.0], &InnerSolverConfig::default(), 0.0).is_err());
    }

    #[test]
    fn certificate_examples() {
        let c = certify_monotonicity(&five_agent(vec![2.0; 5])).unwrap();
        assert!((c.margin - (1.0 - 5f64.sqrt() / 4.0)).abs() < 1e-12);
        assert!((c.margin - 0.4410).abs() < 1e-4);
        assert!(c.certified && !c.estimated);

        let boundary = certify_monotonicity(&five_agent(vec![5f64.sqrt() / 2.0, 3.0, 3.0, 3.0, 3.0])).unwrap();
        assert!(boundary.margin.abs() < 1e-15);
        assert!(!boundary.certified);

        let four = GameSpec::cournot(
            CournotCost::new(10.0, vec![1.0; 4]),
            BoxSet::interval(0.0, 10.0),
            BoxSet::interval(0.0, 1.0),
            vec![0.5, 1.0, 2.0, 3.0],
            vec![vec![0.5]; 4],
        )
        .unwrap();
        let c = certify_monotonicity(&four).unwrap();
        assert!((c.margin + 1.0).abs() < 1e-12);
        assert!(!c.certified);
    }

    #[test]
    fn certificate_requires_constants_for_generic_models() {
        let spec = five_agent(vec![2.0; 5]);
        let cost = spec.cost_model().as_cournot().unwrap().clone();
        let generic = as_generic(&spec, Arc::new(cost));
        assert!(matches!(certify_monotonicity(&generic), Err(Error::MissingConstants(_))));
    }

    #[test]
    fn estimates_for_cournot_callbacks_approach_unit_constants() {
        let spec = five_agent(vec![2.0; 5]);
        let cost = spec.cost_model().as_cournot().unwrap().clone();
        let generic = as_generic(&spec, Arc::new(cost));
        let est = estimate_constants(&generic, 10_000, 11).unwrap();
        for i in 0..5 {
            assert!(est.l_x[i] >= 0.99 && est.l_x[i] <= 1.0 + 1e-9, "{:?}", est.l_x);
            assert!(est.l_xi[i] >= 0.99 && est.l_xi[i] <= 1.0 + 1e-9, "{:?}", est.l_xi);
        }
        assert!(est.mu >= 0.99 && est.mu <= 1.01, "{}", est.mu);
        assert!(est.certificate(&generic).estimated);
    }

    struct Linear;
    impl CostFunction for Linear {
        fn value(&self, agent: usize, x: &[f64], _xi: &[f64]) -> f64 {
            (agent as f64 + 1.0) * x[agent]
        }
        fn grad_own(&self, agent: usize, _x: &[f64], _xi: &[f64]) -> Vec<f64> {
            vec![agent as f64 + 1.0]
        }
        fn grad_xi(&self, _agent: usize, _x: &[f64], _xi: &[f64]) -> Vec<f64> {
            vec![0.0]
        }
    }

    struct Scaled(CournotCost, f64);
    impl CostFunction for Scaled {
        fn value(&self, a: usize, x: &[f64], xi: &[f64]) -> f64 {
            self.1 * self.0.value(a, x, xi)
        }
        fn grad_own(&self, a: usize, x: &[f64], xi: &[f64]) -> Vec<f64> {
            self.0.grad_own(a, x, xi).into_iter().map(|v| self.1 * v).collect()
        }
        fn grad_xi(&self, a: usize, x: &[f64], xi: &[f64]) -> Vec<f64> {
            self.0.grad_xi(a, x, xi).into_iter().map(|v| self.1 * v).collect()
        }
    }

    #[test]
    fn constant_gradient_model_has_zero_estimates() {
        let spec = as_generic(&five_agent(vec![2.0; 5]), Arc::new(Linear));
        let est = estimate_constants(&spec, 500, 3).unwrap();
        assert!(est.l_x.iter().all(|&v| v == 0.0));
        assert!(est.l_xi.iter().all(|&v| v == 0.0));
        assert_eq!(est.mu, 0.0);
    }

    #[test]
    fn estimates_are_homogeneous_in_cost_scale() {
        let base = five_agent(vec![2.0; 5]);
        let cost = base.cost_model().as_cournot().unwrap().clone();
        let one = estimate_constants(&as_generic(&base, Arc::new(Scaled(cost.clone(), 1.0))), 2000, 5).unwrap();
        let three = estimate_constants(&as_generic(&base, Arc::new(Scaled(cost, 3.0))), 2000, 5).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
        assert!(close(three.mu, 3.0 * one.mu));
        for i in 0..5 {
            assert!(close(three.l_x[i], 3.0 * one.l_x[i]));
            assert!(close(three.l_xi[i], 3.0 * one.l_xi[i]));
        }
    }

    #[test]
    fn estimation_rejects_zero_samples() {
        let spec = five_agent(vec![2.0; 5]);
        assert!(estimate_constants(&spec, 0, 1).is_err());
    }
}
