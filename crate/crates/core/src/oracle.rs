//! Reference equilibria of the surrogate game.
//!
//! For the scalar Cournot family with every worst-case realization interior
//! to its support, `H_i(x) = mean_k f_i(x, xi_hat_k) + x_i^2 / (4 lambda_i)`,
//! so the equilibrium solves the linear system
//! `(I + 11^T + diag(1/(2 lambda))) x = a - c - mean(xi_hat)`.
//! When clamps are active we fall back to deterministic projected gradient on
//! the exact pseudo-gradient.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::adversary::{surrogate_cost_value, InnerSolverConfig};
use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::vi::{pseudo_gradient, residual_from_gradient, vi_residual};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    InteriorLinearSolve,
    ProjectedGradient,
}

impl OracleMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::InteriorLinearSolve => "interior-linear-solve",
            Self::ProjectedGradient => "deterministic-projected-gradient",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub equilibrium: Vec<f64>,
    pub method: OracleMethod,
    /// `vi_residual` at the returned point with step 1.
    pub residual_at_solution: f64,
    /// Decision strictly inside `X` and every worst-case realization strictly
    /// inside its support.
    pub interior_valid: bool,
    pub iterations: usize,
}

/// Outcome of the interior linear solve.
#[derive(Debug, Clone, PartialEq)]
pub enum InteriorSolve {
    Valid(OracleResult),
    /// The interior hypothesis failed; `candidate` is the linear-system
    /// solution, which is not an equilibrium.
    Invalid { candidate: Vec<f64>, reason: String },
}

impl InteriorSolve {
    pub fn valid(self) -> Option<OracleResult> {
        match self {
            Self::Valid(r) => Some(r),
            Self::Invalid { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub tol: f64,
    pub max_iterations: usize,
    /// Projected-gradient step; defaults to `1 / L_F` for Cournot games and is
    /// required for callback models.
    pub step: Option<f64>,
    pub start: Option<Vec<f64>>,
    /// Inner accuracy for callback models.
    pub inner: InnerSolverConfig,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: 1_000_000,
            step: None,
            start: None,
            inner: InnerSolverConfig {
                accuracy: 1e-13,
                ..InnerSolverConfig::default()
            },
        }
    }
}

/// `|I + 11^T|_2 + max_i 1/(2 lambda_i)` for the scalar Cournot family.
pub fn cournot_lipschitz(spec: &GameSpec) -> f64 {
    let n = spec.num_agents() as f64;
    let adv = spec
        .penalties()
        .iter()
        .map(|l| 1.0 / (2.0 * l))
        .fold(0.0, f64::max);
    1.0 + n + adv
}

/// True when every worst-case realization at `x` lies strictly inside its support.
fn adversary_interior(spec: &GameSpec, x: &[f64]) -> Option<String> {
    for (i, own) in x.iter().enumerate().take(spec.num_agents()) {
        let b = spec.support(i);
        let shift = own / (2.0 * spec.penalty(i));
        for (k, s) in spec.data(i).samples().iter().enumerate() {
            let z = s[0] + shift;
            if !b.contains_interior(&[z]) {
                return Some(format!(
                    "agent {}: worst case {z} for sample {} is not interior to the support",
                    i + 1,
                    k + 1
                ));
            }
        }
    }
    None
}

pub fn interior_linear_solve(spec: &GameSpec) -> Result<InteriorSolve> {
    let cost = spec.scalar_cournot().ok_or(Error::NotCournot)?;
    let n = spec.num_agents();
    let mut a = DMatrix::from_element(n, n, 1.0);
    let mut rhs = DVector::zeros(n);
    for i in 0..n {
        a[(i, i)] += 1.0 + 1.0 / (2.0 * spec.penalty(i));
        rhs[i] = cost.demand_intercept - cost.marginal_costs[i] - spec.data(i).mean()[0];
    }
    // symmetric positive definite whenever every penalty is positive
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::InvalidGame(vec!["interior system is not positive definite".into()]))?;
    let x: Vec<f64> = chol.solve(&rhs).iter().copied().collect();

    if let Some(i) = (0..n).find(|&i| !spec.feasible_set(i).contains_interior(&x[i..=i])) {
        return Ok(InteriorSolve::Invalid {
            reason: format!("agent {}: decision {} is not interior to X", i + 1, x[i]),
            candidate: x,
        });
    }
    if let Some(reason) = adversary_interior(spec, &x) {
        return Ok(InteriorSolve::Invalid { candidate: x, reason });
    }
    let residual = vi_residual(spec, &x, &InnerSolverConfig::default(), 1.0)?;
    Ok(InteriorSolve::Valid(OracleResult {
        equilibrium: x,
        method: OracleMethod::InteriorLinearSolve,
        residual_at_solution: residual,
        interior_valid: true,
        iterations: 0,
    }))
}

/// Deterministic projected gradient on the exact pseudo-gradient, stopped when
/// the step-1 VI residual is at most `cfg.tol`.
pub fn exact_projected_gradient(spec: &GameSpec, cfg: &OracleConfig) -> Result<OracleResult> {
    let step = match (cfg.step, spec.scalar_cournot()) {
        (Some(s), _) => s,
        (None, Some(_)) => 1.0 / cournot_lipschitz(spec),
        (None, None) => {
            return Err(Error::MissingConstants(
                "projected-gradient step for a callback model".into(),
            ))
        }
    };
    if !(step > 0.0) {
        return Err(Error::Config(format!("oracle step must be positive, got {step}")));
    }
    let mut x = match &cfg.start {
        Some(s) => spec.project_joint(s)?,
        None => spec.project_joint(&vec![0.0; spec.joint_dim()])?,
    };
    let mut residual = f64::INFINITY;
    for iter in 0..=cfg.max_iterations {
        let f = pseudo_gradient(spec, &x, &cfg.inner)?;
        residual = residual_from_gradient(spec, &x, &f, 1.0);
        if residual <= cfg.tol {
            let interior_valid = spec.scalar_cournot().is_some()
                && (0..spec.num_agents()).all(|i| spec.feasible_set(i).contains_interior(&x[i..=i]))
                && adversary_interior(spec, &x).is_none();
            return Ok(OracleResult {
                equilibrium: x,
                method: OracleMethod::ProjectedGradient,
                residual_at_solution: residual,
                interior_valid,
                iterations: iter,
            });
        }
        for (xi, g) in x.iter_mut().zip(&f) {
            *xi -= step * g;
        }
        spec.project_joint_in_place(&mut x);
    }
    Err(Error::OracleNotConverged {
        iterations: cfg.max_iterations,
        residual,
    })
}

/// Reference equilibrium: projected gradient to `cfg.tol`, warm-started from
/// the interior linear-system solution when one is available.
pub fn reference_equilibrium(spec: &GameSpec, cfg: &OracleConfig) -> Result<OracleResult> {
    let mut cfg = cfg.clone();
    if cfg.start.is_none() && spec.scalar_cournot().is_some() {
        let warm = match interior_linear_solve(spec)? {
            InteriorSolve::Valid(r) => r.equilibrium,
            InteriorSolve::Invalid { candidate, .. } => candidate,
        };
        cfg.start = Some(warm);
    }
    exact_projected_gradient(spec, &cfg)
}

/// Per-agent best-response gaps `H_i(x*) - min_{grid} H_i(x_i, x*_{-i})`.
/// Scalar decisions on bounded boxes only.
pub fn best_response_check(
    spec: &GameSpec,
    x_star: &[f64],
    grid_step: f64,
    inner: &InnerSolverConfig,
) -> Result<Vec<f64>> {
    spec.check_joint(x_star)?;
    if !(grid_step > 0.0) {
        return Err(Error::Config(format!("grid step must be positive, got {grid_step}")));
    }
    for i in 0..spec.num_agents() {
        let b = spec.feasible_set(i);
        if b.dim() != 1 || !b.is_bounded() {
            return Err(Error::Config(format!(
                "agent {}: best-response grid needs a bounded scalar decision",
                i + 1
            )));
        }
    }
    (0..spec.num_agents())
        .into_par_iter()
        .map(|i| {
            let b = spec.feasible_set(i);
            let (lo, hi) = (b.lower()[0], b.upper()[0]);
            let at_star = surrogate_cost_value(spec, i, x_star, inner)?;
            let mut x = x_star.to_vec();
            let points = ((hi - lo) / grid_step).floor() as usize;
            let mut best = f64::INFINITY;
            for k in 0..=points + 1 {
                x[i] = (lo + k as f64 * grid_step).min(hi);
                best = best.min(surrogate_cost_value(spec, i, &x, inner)?);
            }
            Ok(at_star - best)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{BoxSet, CournotCost};

    fn two_agent_interior() -> GameSpec {
        GameSpec::cournot(
            CournotCost::new(4.0, vec![0.0, 0.0]),
            BoxSet::interval(0.0, 10.0),
            BoxSet::interval(-5.0, 5.0),
            vec![2.0, 2.0],
            vec![vec![0.5], vec![0.5]],
        )
        .unwrap()
    }

    #[test]
    fn hand_solved_two_agent_system() {
        let spec = two_agent_interior();
        let r = interior_linear_solve(&spec).unwrap().valid().unwrap();
        // (2.25 x + x = 3.5) => x = 3.5 / 3.25
        let expected = 3.5 / 3.25;
        for v in &r.equilibrium {
            assert!((v - expected).abs() < 1e-14);
        }
        assert!(r.residual_at_solution <= 1e-8);
        assert!((0.5 + expected / 4.0 - 0.769).abs() < 1e-3);
    }

    #[test]
    fn huge_penalty_gives_risk_neutral_equilibrium() {
        let spec = two_agent_interior().with_penalties(vec![1e15, 1e15]).unwrap();
        let r = interior_linear_solve(&spec).unwrap().valid().unwrap();
        // (I + 11^T) x = 3.5 => x = 3.5 / 3
        for v in &r.equilibrium {
            assert!((v - 3.5 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn clamped_adversary_invalidates_interior_solve() {
        let spec = GameSpec::cournot(
            CournotCost::new(4.0, vec![0.0, 0.0]),
            BoxSet::interval(0.0, 10.0),
            BoxSet::interval(0.0, 1.0),
            vec![2.0, 2.0],
            vec![vec![0.95, 0.9], vec![0.99]],
        )
        .unwrap();
        match interior_linear_solve(&spec).unwrap() {
            InteriorSolve::Invalid { reason, .. } => assert!(reason.contains("worst case"), "{reason}"),
            InteriorSolve::Valid(_) => panic!("clamp should be active"),
        }
        let r = exact_projected_gradient(&spec, &OracleConfig::default()).unwrap();
        assert!(r.residual_at_solution <= 1e-10);
        assert!(!r.interior_valid);
    }

    #[test]
    fn methods_agree_on_interior_instance() {
        let spec = two_agent_interior();
        let a = interior_linear_solve(&spec).unwrap().valid().unwrap();
        let b = exact_projected_gradient(&spec, &OracleConfig::default()).unwrap();
        for (p, q) in a.equilibrium.iter().zip(&b.equilibrium) {
            assert!((p - q).abs() < 1e-8);
        }
        assert!(b.interior_valid);
    }

    #[test]
    fn single_agent_matches_projected_minimizer() {
        // f = x (x - a + c + xi) with one sample and a huge penalty:
        // minimizer of x^2 - (a - c - xi) x is (a - c - xi) / 2, clamped
        for (a, expected) in [(5.0, 2.0), (30.0, 10.0), (0.5, 0.0)] {
            let spec = GameSpec::cournot(
                CournotCost::new(a, vec![0.5]),
                BoxSet::interval(0.0, 10.0),
                BoxSet::interval(0.0, 1.0),
                vec![1e14],
                vec![vec![0.5]],
            )
            .unwrap();
            let r = exact_projected_gradient(&spec, &OracleConfig::default()).unwrap();
            assert!((r.equilibrium[0] - expected).abs() < 1e-9, "a={a}: {:?}", r.equilibrium);
        }
    }

    #[test]
    fn iteration_cap_is_reported() {
        let spec = two_agent_interior().with_penalties(vec![2.0, 0.7]).unwrap();
        let cfg = OracleConfig {
            max_iterations: 2,
            ..OracleConfig::default()
        };
        let r = exact_projected_gradient(&spec, &cfg);
        assert!(matches!(r, Err(Error::OracleNotConverged { iterations: 2, .. })), "{r:?}");
    }

    #[test]
    fn best_response_gaps_vanish_at_equilibrium_and_grow_off_it() {
        let spec = GameSpec::cournot(
            CournotCost::new(10.0, CournotCost::default_marginal_costs(3)),
            BoxSet::interval(0.0, 10.0),
            BoxSet::interval(-5.0, 5.0),
            vec![2.0, 1.0, 3.0],
            vec![vec![0.2, 0.6], vec![0.5], vec![0.1, 0.4, 0.9]],
        )
        .unwrap();
        let r = reference_equilibrium(&spec, &OracleConfig::default()).unwrap();
        let inner = InnerSolverConfig::with_accuracy(1e-12);
        let gaps = best_response_check(&spec, &r.equilibrium, 1e-3, &inner).unwrap();
        assert!(gaps.iter().all(|g| g.abs() <= 1e-4), "{gaps:?}");

        let mut moved = r.equilibrium.clone();
        moved[0] += 0.1;
        let margin = crate::vi::certify_monotonicity(&spec).unwrap().margin;
        let gaps = best_response_check(&spec, &moved, 1e-3, &inner).unwrap();
        assert!(gaps[0] >= 0.5 * margin * 0.01 - 1e-6, "{gaps:?}");
    }

    #[test]
    fn single_agent_gap_is_quadratic_suboptimality() {
        // H(x) = x^2 - (a - c - xi_hat) x + x^2 / (4 lambda) on an interior grid
        let (a, c, xh, lambda) = (6.0, 1.0, 0.5, 2.0);
        let spec = GameSpec::cournot(
            CournotCost::new(a, vec![c]),
            BoxSet::interval(0.0, 10.0),
            BoxSet::interval(-50.0, 50.0),
            vec![lambda],
            vec![vec![xh]],
        )
        .unwrap();
        let curvature = 1.0 + 1.0 / (4.0 * lambda);
        let best = (a - c - xh) / (2.0 * curvature);
        let x = 3.0;
        let expected = curvature * (x - best) * (x - best);
        let gaps = best_response_check(&spec, &[x], 1e-3, &InnerSolverConfig::default()).unwrap();
        // grid minimum is within curvature * (grid/2)^2 of the true minimum
        assert!((gaps[0] - expected).abs() <= curvature * 0.25e-6 + 1e-12);
    }
}
