//! Inner worst-case problem `max_{xi in Xi_i} h_i(x, xi, xi_hat)`.
//!
//! The penalized objective is `2 lambda_i`-strongly concave whenever `f_i` is
//! concave in `xi_i`, so the maximizer is unique. For the Cournot family the
//! stationarity condition gives it in closed form; for callback models we run
//! projected gradient ascent with a certified stopping rule.

use crate::error::{Error, Result};
use crate::game::{clamp, penalized_unchecked, GameSpec};

/// Approximate worst-case realization with a distance certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolveResult {
    pub maximizer: Vec<f64>,
    /// `H_hat_i(x, xi_hat)` evaluated at `maximizer`.
    pub value: f64,
    /// Upper bound on the distance from `maximizer` to the exact maximizer.
    pub distance_certificate: f64,
    pub iterations_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// Step `1 / (L_ff + 2 lambda_i)` from declared constants; models without
    /// declared constants fall back to backtracking.
    #[default]
    Fixed,
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolverConfig {
    pub accuracy: f64,
    pub max_iterations: usize,
    pub step_rule: StepRule,
}

impl Default for InnerSolverConfig {
    fn default() -> Self {
        Self {
            accuracy: 1e-3,
            max_iterations: 10_000,
            step_rule: StepRule::Fixed,
        }
    }
}

impl InnerSolverConfig {
    pub fn with_accuracy(accuracy: f64) -> Self {
        Self {
            accuracy,
            ..Self::default()
        }
    }
}

/// Closed-form Cournot maximizer `clamp(xi_hat + x_i / (2 lambda), lo, hi)`.
#[inline]
pub(crate) fn cournot_maximizer(lambda: f64, own: f64, xi_hat: f64, lo: f64, hi: f64) -> f64 {
    clamp(xi_hat + own / (2.0 * lambda), lo, hi)
}

fn check_inputs(spec: &GameSpec, agent: usize, x: &[f64], xi_hat: &[f64]) -> Result<()> {
    spec.check_agent(agent)?;
    spec.check_joint(x)?;
    let dim = spec.support(agent).dim();
    if xi_hat.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            found: xi_hat.len(),
        });
    }
    Ok(())
}

/// Exact inner maximizer for the scalar Cournot family.
pub fn closed_form_adversary(
    spec: &GameSpec,
    agent: usize,
    x: &[f64],
    xi_hat: &[f64],
) -> Result<InnerSolveResult> {
    check_inputs(spec, agent, x, xi_hat)?;
    if spec.scalar_cournot().is_none() {
        return Err(Error::NotCournot);
    }
    let support = spec.support(agent);
    let z = cournot_maximizer(
        spec.penalty(agent),
        x[agent],
        xi_hat[0],
        support.lower()[0],
        support.upper()[0],
    );
    let maximizer = vec![z];
    Ok(InnerSolveResult {
        value: penalized_unchecked(spec, agent, x, &maximizer, xi_hat),
        maximizer,
        distance_certificate: 0.0,
        iterations_used: 0,
    })
}

fn penalized_gradient(spec: &GameSpec, agent: usize, x: &[f64], xi: &[f64], xi_hat: &[f64]) -> Vec<f64> {
    let lambda = spec.penalty(agent);
    let mut g = spec.cost_model().grad_xi(agent, x, xi);
    for (gk, (z, zh)) in g.iter_mut().zip(xi.iter().zip(xi_hat)) {
        *gk -= 2.0 * lambda * (z - zh);
    }
    g
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|a| a * a).sum::<f64>().sqrt()
}

/// Projected gradient ascent from the anchor with certified termination.
///
/// After each step `z -> z+ = proj(z + s grad h(z))` the vector
/// `v = (z - z+)/s - grad h(z+) + grad h(z)` is (minus) an element of the
/// subdifferential of `-h + indicator(Xi)` at `z+`. Strong concavity with
/// modulus `2 lambda` then gives `|z+ - M_bar| <= |v| / (2 lambda)`, which is
/// the reported certificate.
pub fn inner_maximize(
    spec: &GameSpec,
    agent: usize,
    x: &[f64],
    xi_hat: &[f64],
    cfg: &InnerSolverConfig,
) -> Result<InnerSolveResult> {
    check_inputs(spec, agent, x, xi_hat)?;
    if !(cfg.accuracy > 0.0) {
        return Err(Error::Config(format!(
            "inner accuracy must be positive, got {}",
            cfg.accuracy
        )));
    }
    let support = spec.support(agent);
    let lambda = spec.penalty(agent);
    let modulus = 2.0 * lambda;

    let declared = spec
        .cost_model()
        .constants(spec.num_agents())
        .map(|c| c.xi_smoothness[agent]);
    let (mut step, backtrack) = match (cfg.step_rule, declared) {
        (StepRule::Fixed, Some(l_ff)) => (1.0 / (l_ff + modulus), false),
        _ => (1.0 / modulus, true),
    };

    let mut z = support.project(xi_hat)?;
    let mut value = penalized_unchecked(spec, agent, x, &z, xi_hat);
    let mut grad = penalized_gradient(spec, agent, x, &z, xi_hat);
    let mut certificate = f64::INFINITY;
    let mut next = vec![0.0; z.len()];

    for iter in 1..=cfg.max_iterations {
        let (next_value, next_grad) = loop {
            for ((n, zk), gk) in next.iter_mut().zip(&z).zip(&grad) {
                *n = zk + step * gk;
            }
            support.project_in_place(&mut next);
            let v = penalized_unchecked(spec, agent, x, &next, xi_hat);
            if !backtrack {
                break (v, penalized_gradient(spec, agent, x, &next, xi_hat));
            }
            // sufficient ascent: h(z+) >= h(z) + <g, d> - |d|^2 / (2s)
            let (lin, sq) = next
                .iter()
                .zip(&z)
                .zip(&grad)
                .fold((0.0, 0.0), |(lin, sq), ((n, zk), gk)| {
                    let d = n - zk;
                    (lin + gk * d, sq + d * d)
                });
            if v >= value + lin - sq / (2.0 * step) - 1e-15 * value.abs().max(1.0) || step < 1e-300 {
                break (v, penalized_gradient(spec, agent, x, &next, xi_hat));
            }
            step *= 0.5;
        };

        certificate = norm(
            z.iter()
                .zip(&next)
                .zip(grad.iter().zip(&next_grad))
                .map(|((zk, nk), (gk, ngk))| (zk - nk) / step - ngk + gk),
        ) / modulus;

        std::mem::swap(&mut z, &mut next);
        value = next_value;
        grad = next_grad;

        if certificate <= cfg.accuracy {
            return Ok(InnerSolveResult {
                maximizer: z,
                value,
                distance_certificate: certificate,
                iterations_used: iter,
            });
        }
    }

    Err(Error::InnerNotConverged {
        agent: agent + 1,
        best: Box::new(InnerSolveResult {
            maximizer: z,
            value,
            distance_certificate: certificate,
            iterations_used: cfg.max_iterations,
        }),
    })
}

/// Worst-case inner value `H_hat_i(x, xi_hat)`: closed form for scalar
/// Cournot games, certified ascent otherwise.
pub(crate) fn worst_case(
    spec: &GameSpec,
    agent: usize,
    x: &[f64],
    xi_hat: &[f64],
    cfg: &InnerSolverConfig,
) -> Result<InnerSolveResult> {
    if spec.scalar_cournot().is_some() {
        closed_form_adversary(spec, agent, x, xi_hat)
    } else {
        inner_maximize(spec, agent, x, xi_hat, cfg)
    }
}

/// `H_i(x) = (1/K_i) sum_k H_hat_i(x, xi_hat^(k))`, summed in sample order.
pub fn surrogate_cost_value(
    spec: &GameSpec,
    agent: usize,
    x: &[f64],
    cfg: &InnerSolverConfig,
) -> Result<f64> {
    spec.check_agent(agent)?;
    spec.check_joint(x)?;
    let data = spec.data(agent);
    if let Some(cost) = spec.scalar_cournot() {
        let lambda = spec.penalty(agent);
        let support = spec.support(agent);
        let (lo, hi) = (support.lower()[0], support.upper()[0]);
        let own = x[agent];
        let mut total = 0.0;
        for s in data.samples() {
            let z = cournot_maximizer(lambda, own, s[0], lo, hi);
            total += cost.value_scalar(agent, x, z) - lambda * (z - s[0]) * (z - s[0]);
        }
        return Ok(total * data.weight());
    }
    let mut total = 0.0;
    for s in data.samples() {
        total += inner_maximize(spec, agent, x, s, cfg)?.value;
    }
    Ok(total * data.weight())
}
