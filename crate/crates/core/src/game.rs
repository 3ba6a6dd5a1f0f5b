//! Game data model: agents, feasible boxes, uncertainty supports, penalties,
//! empirical data and the cost families.
//!
//! Joint decisions are flat `f64` slices with each agent's block stored
//! contiguously in agent order. Every agent's penalized surrogate cost is
//!
//! ```text
//! h_i(x, xi, xi_hat) = f_i(x, xi) - lambda_i * |xi - xi_hat|^2
//! ```
//!
//! where the transport cost is always the squared Euclidean norm.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Axis-aligned box `{ v : lower <= v <= upper }`. Bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        Ok(Self { lower, upper })
    }

    /// One-dimensional box `[lo, hi]`.
    pub fn interval(lo: f64, hi: f64) -> Self {
        Self {
            lower: vec![lo],
            upper: vec![hi],
        }
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_nonempty(&self) -> bool {
        self.lower.iter().zip(&self.upper).all(|(l, u)| l <= u)
    }

    pub fn is_bounded(&self) -> bool {
        self.lower
            .iter()
            .chain(&self.upper)
            .all(|v| v.is_finite())
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim()
            && v
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| l <= x && x <= u)
    }

    /// Strict interior membership, used by the interiority checks of the oracle.
    pub fn contains_interior(&self, v: &[f64]) -> bool {
        v.len() == self.dim()
            && v
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| l < x && x < u)
    }

    /// Euclidean diameter; infinite for unbounded boxes.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: v.len(),
            });
        }
        let mut out = v.to_vec();
        self.project_in_place(&mut out);
        Ok(out)
    }

    /// Clamps `v` componentwise. Caller guarantees matching dimensions.
    pub(crate) fn project_in_place(&self, v: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim());
        for (x, (l, u)) in v.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = clamp(*x, *l, *u);
        }
    }
}

/// `max(lo, min(hi, v))`; never panics, unlike `f64::clamp`, when `lo > hi`.
#[inline]
pub(crate) fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    v.min(hi).max(lo)
}

/// Euclidean projection of `v` onto `b`.
pub fn project_box(b: &BoxSet, v: &[f64]) -> Result<Vec<f64>> {
    b.project(v)
}

/// Uniformly weighted sample set `(1/K) sum_k delta_{xi^(k)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    samples: Vec<Vec<f64>>,
}

impl EmpiricalDistribution {
    pub fn new(samples: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::EmptyInput);
        };
        let dim = first.len();
        if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                found: bad.len(),
            });
        }
        Ok(Self { samples })
    }

    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect())
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.samples.len() as f64
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for s in &self.samples {
            for (acc, v) in m.iter_mut().zip(s) {
                *acc += v;
            }
        }
        let w = self.weight();
        m.iter_mut().for_each(|v| *v *= w);
        m
    }
}

/// Transport cost between uncertainty realizations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum TransportCost {
    /// `c(z, z') = |z - z'|_2^2`
    #[default]
    SquaredEuclidean,
}

impl TransportCost {
    pub fn cost(&self, z: &[f64], z_prime: &[f64]) -> f64 {
        match self {
            Self::SquaredEuclidean => z.iter().zip(z_prime).map(|(a, b)| (a - b) * (a - b)).sum(),
        }
    }

    /// Gradient in the first argument.
    pub fn gradient(&self, z: &[f64], z_prime: &[f64]) -> Vec<f64> {
        match self {
            Self::SquaredEuclidean => z.iter().zip(z_prime).map(|(a, b)| 2.0 * (a - b)).collect(),
        }
    }

    /// Strong convexity modulus in the first argument.
    pub fn convexity(&self) -> f64 {
        match self {
            Self::SquaredEuclidean => 2.0,
        }
    }
}

/// Regularity constants of a cost family.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConstants {
    /// Lipschitz constant of `grad_{x_i} f_i` in `xi_i`, per agent.
    pub l_x: Vec<f64>,
    /// Lipschitz constant of `grad_{xi_i} h_i` in `x`, per agent.
    pub l_xi: Vec<f64>,
    /// Strong monotonicity modulus of the base pseudo-gradient `G(., xi)`.
    pub mu: f64,
    /// Smoothness of `f_i` in `xi_i`, per agent. Drives the fixed inner step.
    pub xi_smoothness: Vec<f64>,
}

/// User-supplied cost `f_i(x, xi_i)`, concave in `xi_i`.
///
/// `x` is the flat joint decision. `grad_own` returns the gradient in agent
/// `agent`'s own block, `grad_xi` the gradient in that agent's uncertainty.
pub trait CostFunction: Send + Sync {
    fn value(&self, agent: usize, x: &[f64], xi: &[f64]) -> f64;
    fn grad_own(&self, agent: usize, x: &[f64], xi: &[f64]) -> Vec<f64>;
    fn grad_xi(&self, agent: usize, x: &[f64], xi: &[f64]) -> Vec<f64>;
    fn constants(&self) -> Option<ModelConstants> {
        None
    }
}

/// Linear-quadratic Cournot family with negated revenue,
/// `f_i(x, xi_i) = x_i * (sum_j x_j - a + c_i + xi_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CournotCost {
    pub demand_intercept: f64,
    pub marginal_costs: Vec<f64>,
}

impl CournotCost {
    pub fn new(demand_intercept: f64, marginal_costs: Vec<f64>) -> Self {
        Self {
            demand_intercept,
            marginal_costs,
        }
    }

    /// Default marginal costs `c_i = 1 + 0.1 * i` with 1-based `i`.
    pub fn default_marginal_costs(num_agents: usize) -> Vec<f64> {
        (1..=num_agents).map(|i| 1.0 + 0.1 * i as f64).collect()
    }

    #[inline]
    pub fn value_scalar(&self, agent: usize, x: &[f64], xi: f64) -> f64 {
        let total: f64 = x.iter().sum();
        x[agent] * (total - self.demand_intercept + self.marginal_costs[agent] + xi)
    }

    /// `2 x_i + sum_{j != i} x_j - a + c_i + xi_i`
    #[inline]
    pub fn grad_own_scalar(&self, agent: usize, x: &[f64], xi: f64) -> f64 {
        let total: f64 = x.iter().sum();
        total + x[agent] - self.demand_intercept + self.marginal_costs[agent] + xi
    }
}

impl CostFunction for CournotCost {
    fn value(&self, agent: usize, x: &[f64], xi: &[f64]) -> f64 {
        self.value_scalar(agent, x, xi[0])
    }

    fn grad_own(&self, agent: usize, x: &[f64], xi: &[f64]) -> Vec<f64> {
        vec![self.grad_own_scalar(agent, x, xi[0])]
    }

    fn grad_xi(&self, agent: usize, x: &[f64], _xi: &[f64]) -> Vec<f64> {
        vec![x[agent]]
    }
}

/// Attaches user-declared constants to a callback cost.
#[derive(Debug, Clone, PartialEq)]
pub struct WithConstants<C> {
    pub cost: C,
    pub constants: ModelConstants,
}

impl<C: CostFunction> CostFunction for WithConstants<C> {
    fn value(&self, agent: usize, x: &[f64], xi: &[f64]) -> f64 {
        self.cost.value(agent, x, xi)
    }

    fn grad_own(&self, agent: usize, x: &[f64], xi: &[f64]) -> Vec<f64> {
        self.cost.grad_own(agent, x, xi)
    }

    fn grad_xi(&self, agent: usize, x: &[f64], xi: &[f64]) -> Vec<f64> {
        self.cost.grad_xi(agent, x, xi)
    }

    fn constants(&self) -> Option<ModelConstants> {
        Some(self.constants.clone())
    }
}

#[derive(Clone)]
pub enum CostModel {
    Cournot(CournotCost),
    /// Callback model. Wrapping a [`CournotCost`] here hides its closed forms.
    Generic(Arc<dyn CostFunction>),
}

impl fmt::Debug for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Cournot(c) => f.debug_tuple("Cournot").field(c).finish(),
            Self::Generic(_) => f.write_str("Generic(..)"),
        }
    }
}

impl CostModel {
    pub fn as_cournot(&self) -> Option<&CournotCost> {
        match self {
            Self::Cournot(c) => Some(c),
            Self::Generic(_) => None,
        }
    }

    pub fn value(&self, agent: usize, x: &[f64], xi: &[f64]) -> f64 {
        match self {
            Self::Cournot(c) => c.value(agent, x, xi),
            Self::Generic(g) => g.value(agent, x, xi),
        }
    }

    pub fn grad_own(&self, agent: usize, x: &[f64], xi: &[f64]) -> Vec<f64> {
        match self {
            Self::Cournot(c) => c.grad_own(agent, x, xi),
            Self::Generic(g) => g.grad_own(agent, x, xi),
        }
    }

    pub fn grad_xi(&self, agent: usize, x: &[f64], xi: &[f64]) -> Vec<f64> {
        match self {
            Self::Cournot(c) => c.grad_xi(agent, x, xi),
            Self::Generic(g) => g.grad_xi(agent, x, xi),
        }
    }

    /// Closed-form constants for Cournot (`mu = L_x = L_xi = 1`, affine in
    /// `xi`), declared constants for generic models.
    pub fn constants(&self, num_agents: usize) -> Option<ModelConstants> {
        match self {
            Self::Cournot(_) => Some(ModelConstants {
                l_x: vec![1.0; num_agents],
                l_xi: vec![1.0; num_agents],
                mu: 1.0,
                xi_smoothness: vec![0.0; num_agents],
            }),
            Self::Generic(g) => g.constants(),
        }
    }
}

/// Full description of a penalized distributionally robust game.
#[derive(Debug, Clone)]
pub struct GameSpec {
    feasible_sets: Vec<BoxSet>,
    supports: Vec<BoxSet>,
    penalties: Vec<f64>,
    cost_model: CostModel,
    empirical_data: Vec<EmpiricalDistribution>,
    transport: TransportCost,
    offsets: Vec<usize>,
}

impl GameSpec {
    /// Checks only structural consistency (one entry per agent everywhere).
    /// Value-level invariants are reported by [`validate_game`].
    pub fn new(
        feasible_sets: Vec<BoxSet>,
        supports: Vec<BoxSet>,
        penalties: Vec<f64>,
        cost_model: CostModel,
        empirical_data: Vec<EmpiricalDistribution>,
    ) -> Result<Self> {
        let n = feasible_sets.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        for len in [supports.len(), penalties.len(), empirical_data.len()] {
            if len != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: len,
                });
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for b in &feasible_sets {
            offsets.push(offsets.last().unwrap() + b.dim());
        }
        Ok(Self {
            feasible_sets,
            supports,
            penalties,
            cost_model,
            empirical_data,
            transport: TransportCost::SquaredEuclidean,
            offsets,
        })
    }

    /// Scalar Cournot game with shared boxes and per-agent scalar samples.
    pub fn cournot(
        cost: CournotCost,
        feasible: BoxSet,
        support: BoxSet,
        penalties: Vec<f64>,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = penalties.len();
        let data = samples
            .iter()
            .map(|s| EmpiricalDistribution::from_scalars(s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            vec![feasible; n],
            vec![support; n],
            penalties,
            CostModel::Cournot(cost),
            data,
        )
    }

    pub fn num_agents(&self) -> usize {
        self.feasible_sets.len()
    }

    pub fn decision_dim(&self, agent: usize) -> usize {
        self.feasible_sets[agent].dim()
    }

    pub fn joint_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Index range of `agent`'s block in the flat joint decision.
    pub fn block(&self, agent: usize) -> Range<usize> {
        self.offsets[agent]..self.offsets[agent + 1]
    }

    pub fn feasible_set(&self, agent: usize) -> &BoxSet {
        &self.feasible_sets[agent]
    }

    pub fn feasible_sets(&self) -> &[BoxSet] {
        &self.feasible_sets
    }

    pub fn support(&self, agent: usize) -> &BoxSet {
        &self.supports[agent]
    }

    pub fn supports(&self) -> &[BoxSet] {
        &self.supports
    }

    pub fn penalty(&self, agent: usize) -> f64 {
        self.penalties[agent]
    }

    pub fn penalties(&self) -> &[f64] {
        &self.penalties
    }

    pub fn cost_model(&self) -> &CostModel {
        &self.cost_model
    }

    pub fn transport(&self) -> TransportCost {
        self.transport
    }

    pub fn data(&self, agent: usize) -> &EmpiricalDistribution {
        &self.empirical_data[agent]
    }

    pub fn empirical_data(&self) -> &[EmpiricalDistribution] {
        &self.empirical_data
    }

    /// Total sample count `K = sum_i K_i`.
    pub fn total_samples(&self) -> usize {
        self.empirical_data.iter().map(|d| d.len()).sum()
    }

    pub fn with_penalties(mut self, penalties: Vec<f64>) -> Result<Self> {
        if penalties.len() != self.num_agents() {
            return Err(Error::Dimension {
                expected: self.num_agents(),
                found: penalties.len(),
            });
        }
        self.penalties = penalties;
        Ok(self)
    }

    pub fn with_empirical_data(mut self, data: Vec<EmpiricalDistribution>) -> Result<Self> {
        if data.len() != self.num_agents() {
            return Err(Error::Dimension {
                expected: self.num_agents(),
                found: data.len(),
            });
        }
        self.empirical_data = data;
        Ok(self)
    }

    /// Projection of the joint decision onto `X = prod_i X_i`.
    pub fn project_joint(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_joint(x)?;
        let mut out = x.to_vec();
        self.project_joint_in_place(&mut out);
        Ok(out)
    }

    pub(crate) fn project_joint_in_place(&self, x: &mut [f64]) {
        for (i, b) in self.feasible_sets.iter().enumerate() {
            b.project_in_place(&mut x[self.block(i)]);
        }
    }

    pub fn contains_joint(&self, x: &[f64]) -> bool {
        x.len() == self.joint_dim()
            && self
                .feasible_sets
                .iter()
                .enumerate()
                .all(|(i, b)| b.contains(&x[self.block(i)]))
    }

    /// Diameter of `X`, infinite if any box is unbounded.
    pub fn diameter(&self) -> f64 {
        self.feasible_sets
            .iter()
            .map(|b| b.diameter().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn check_agent(&self, agent: usize) -> Result<()> {
        if agent >= self.num_agents() {
            return Err(Error::AgentIndex(agent));
        }
        Ok(())
    }

    pub(crate) fn check_joint(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.joint_dim() {
            return Err(Error::Dimension {
                expected: self.joint_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `Some(cost)` when the game is the scalar Cournot family.
    pub(crate) fn scalar_cournot(&self) -> Option<&CournotCost> {
        let c = self.cost_model.as_cournot()?;
        let scalar = self.feasible_sets.iter().all(|b| b.dim() == 1)
            && self.supports.iter().all(|b| b.dim() == 1);
        scalar.then_some(c)
    }
}

/// Lists every violated invariant; empty iff the game is usable downstream.
pub fn validate_game(spec: &GameSpec) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..spec.num_agents() {
        let label = i + 1;
        let lambda = spec.penalty(i);
        if !(lambda > 0.0 && lambda.is_finite()) {
            out.push(format!("agent {label}: penalty must be positive and finite, got {lambda}"));
        }
        let x_box = spec.feasible_set(i);
        if x_box.dim() == 0 {
            out.push(format!("agent {label}: feasible set has dimension 0"));
        }
        if !x_box.is_nonempty() {
            out.push(format!("agent {label}: feasible set is empty (lower > upper)"));
        }
        let support = spec.support(i);
        if support.dim() == 0 {
            out.push(format!("agent {label}: support has dimension 0"));
        }
        if !support.is_nonempty() {
            out.push(format!("agent {label}: support is empty (lower > upper)"));
        }
        let data = spec.data(i);
        if data.dim() != support.dim() {
            out.push(format!(
                "agent {label}: samples have dimension {} but the support has dimension {}",
                data.dim(),
                support.dim()
            ));
        } else {
            for (k, s) in data.samples().iter().enumerate() {
                if !support.contains(s) {
                    out.push(format!(
                        "agent {label}: sample {} ({:?}) lies outside the support",
                        k + 1,
                        s
                    ));
                }
            }
        }
    }
    if let CostModel::Cournot(c) = spec.cost_model() {
        if c.marginal_costs.len() != spec.num_agents() {
            out.push(format!(
                "cournot cost: {} marginal costs for {} agents",
                c.marginal_costs.len(),
                spec.num_agents()
            ));
        }
        if spec.scalar_cournot().is_none() {
            out.push("cournot cost: decisions and uncertainties must be scalar".to_string());
        }
        if !c.demand_intercept.is_finite() {
            out.push("cournot cost: demand intercept must be finite".to_string());
        }
    }
    out
}

/// `h_i(x, xi, xi_hat) = f_i(x, xi) - lambda_i c(xi, xi_hat)`.
pub fn penalized_objective(
    spec: &GameSpec,
    agent: usize,
    x: &[f64],
    xi: &[f64],
    xi_hat: &[f64],
) -> Result<f64> {
    spec.check_agent(agent)?;
    spec.check_joint(x)?;
    let support = spec.support(agent);
    if xi_hat.len() != support.dim() {
        return Err(Error::Dimension {
            expected: support.dim(),
            found: xi_hat.len(),
        });
    }
    if !support.contains(xi) {
        return Err(Error::Domain { agent: agent + 1 });
    }
    Ok(penalized_unchecked(spec, agent, x, xi, xi_hat))
}

#[inline]
pub(crate) fn penalized_unchecked(
    spec: &GameSpec,
    agent: usize,
    x: &[f64],
    xi: &[f64],
    xi_hat: &[f64],
) -> f64 {
    spec.cost_model.value(agent, x, xi)
        - spec.penalty(agent) * spec.transport.cost(xi, xi_hat)
}
