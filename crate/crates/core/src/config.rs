//! TOML run configuration.
//!
//! ```toml
//! [game]
//! agents = 5
//! cost = "cournot"            # or "cournot-generic"
//! demand_intercept = 10.0
//! decision = [0.0, 10.0]      # or decisions = [[lo, hi], ...]
//! support = [0.0, 1.0]        # or supports = [[lo, hi], ...]
//! penalty = 2.0               # or penalties = [...]
//!
//! [truth]
//! kind = "uniform"
//! lower = 0.0
//! upper = 1.0
//!
//! [data]
//! samples_per_agent = 10
//! ```
//!
//! Data given as a CSV file is inlined on load, so the resolved config
//! serializes to a self-contained document.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adversary::InnerSolverConfig;
use crate::error::{Error, Result};
use crate::evaluation::{OosConfig, Scenario};
use crate::game::{BoxSet, CostModel, CournotCost, EmpiricalDistribution, GameSpec, WithConstants};
use crate::oracle::OracleConfig;
use crate::rng::{self, Purpose};
use crate::solver::{Sampling, SolverConfig, StepMode, TrueDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    #[default]
    Cournot,
    /// Cournot costs behind the callback interface.
    CournotGeneric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    pub agents: usize,
    #[serde(default)]
    pub cost: CostKind,
    #[serde(default = "default_intercept")]
    pub demand_intercept: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal_costs: Option<Vec<f64>>,
    /// Generic costs only: declare the closed-form constants.
    #[serde(default = "yes")]
    pub declare_constants: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decisions: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supports: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalties: Option<Vec<f64>>,
}

fn default_intercept() -> f64 {
    10.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TruthSection {
    /// Same law `U(lower, upper)` for every agent.
    Uniform { lower: f64, upper: f64 },
    Gaussian { means: Vec<f64>, stds: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Draw this many samples per agent from `[truth]` when none are given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_agent: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<usize>>,
    #[serde(default)]
    pub seed: u64,
    /// Inline scalar samples, one list per agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<Vec<f64>>>,
    /// CSV with columns `agent,value` (1-based agent), relative to the config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplingKind {
    #[default]
    Online,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    #[default]
    Fixed,
    Diminishing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub horizon: usize,
    pub step: StepKind,
    pub eta0: f64,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracies: Option<Vec<f64>>,
    pub max_inner_iterations: usize,
    pub seed: u64,
    /// Seeds run by `solve`; more than one adds sweep statistics.
    pub seeds: usize,
    pub record_every: usize,
    pub residual_step: f64,
    pub sampling: SamplingKind,
    pub quadrature_nodes: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            horizon: s.horizon,
            step: StepKind::Fixed,
            eta0: s.eta0,
            accuracy: s.inner.accuracy,
            accuracies: None,
            max_inner_iterations: s.inner.max_iterations,
            seed: 0,
            seeds: 1,
            record_every: s.record_every,
            residual_step: s.residual_step,
            sampling: SamplingKind::Online,
            quadrature_nodes: s.quadrature_nodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Grid step of the brute-force best-response check; `0` disables it.
    pub grid_step: f64,
    /// Projected-gradient step; required for callback cost models.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

impl Default for OracleSection {
    fn default() -> Self {
        let o = OracleConfig::default();
        Self {
            tolerance: o.tol,
            max_iterations: o.max_iterations,
            grid_step: 1e-3,
            step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OosSection {
    pub train_means: Vec<f64>,
    pub train_stds: Vec<f64>,
    pub mean_shift: Vec<f64>,
    pub std_shift: Vec<f64>,
    pub train_counts: Vec<usize>,
    pub test_count: usize,
    /// Scenario for `evaluate`; defaults to `1/penalty` from `[game]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
    pub label: String,
    pub macro_seed: u64,
    pub histogram_bins: usize,
    /// Macro seeds per scenario in `sweep`.
    pub repetitions: usize,
}

impl Default for OosSection {
    fn default() -> Self {
        let r = OosConfig::reference(Scenario::new("", vec![]), 0);
        Self {
            train_means: r.train_means,
            train_stds: r.train_stds,
            mean_shift: r.mean_shift,
            std_shift: r.std_shift,
            train_counts: r.train_counts,
            test_count: r.test_count,
            rho: None,
            label: "scenario".into(),
            macro_seed: 0,
            histogram_bins: r.histogram_bins,
            repetitions: 10,
        }
    }
}

/// A row of scenarios compared against each other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCase {
    pub label: String,
    pub rho: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub cases: Vec<SweepCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub game: GameSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthSection>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub oos: OosSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Deserialize)]
struct DataRow {
    agent: usize,
    value: f64,
}

fn per_agent<T: Clone>(name: &str, n: usize, one: Option<T>, many: Option<Vec<T>>, default: Option<T>) -> Result<Vec<T>> {
    match (one, many) {
        (Some(_), Some(_)) => Err(Error::Config(format!("give either {name} or its per-agent list, not both"))),
        (_, Some(v)) if v.len() != n => Err(Error::Config(format!("{name}: {} entries for {n} agents", v.len()))),
        (_, Some(v)) => Ok(v),
        (Some(x), None) => Ok(vec![x; n]),
        (None, None) => default
            .map(|d| vec![d; n])
            .ok_or_else(|| Error::Config(format!("missing {name}"))),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads and parses `path`, inlining any CSV data it references.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(rel) = cfg.data.csv.take() {
            let file = path.parent().unwrap_or(Path::new(".")).join(&rel);
            cfg.data.samples = Some(read_samples_csv(&file, cfg.game.agents)?);
        }
        Ok(cfg)
    }

    /// Canonical TOML of the resolved config; stable input for hashing.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn cost_model(&self) -> Result<CostModel> {
        let g = &self.game;
        let costs = match &g.marginal_costs {
            Some(c) if c.len() != g.agents => {
                return Err(Error::Config(format!("marginal_costs: {} entries for {} agents", c.len(), g.agents)))
            }
            Some(c) => c.clone(),
            None => CournotCost::default_marginal_costs(g.agents),
        };
        let cost = CournotCost::new(g.demand_intercept, costs);
        Ok(match g.cost {
            CostKind::Cournot => CostModel::Cournot(cost),
            CostKind::CournotGeneric if g.declare_constants => {
                let constants = CostModel::Cournot(cost.clone()).constants(g.agents).expect("cournot constants");
                CostModel::Generic(Arc::new(WithConstants { cost, constants }))
            }
            CostKind::CournotGeneric => CostModel::Generic(Arc::new(cost)),
        })
    }

    fn boxes(&self) -> Result<(Vec<BoxSet>, Vec<BoxSet>)> {
        let g = &self.game;
        let to_box = |b: [f64; 2]| BoxSet::interval(b[0], b[1]);
        let x = per_agent("decision", g.agents, g.decision, g.decisions.clone(), Some([0.0, 10.0]))?;
        let s = per_agent("support", g.agents, g.support, g.supports.clone(), None)?;
        Ok((x.into_iter().map(to_box).collect(), s.into_iter().map(to_box).collect()))
    }

    pub fn penalties(&self) -> Result<Vec<f64>> {
        per_agent("penalty", self.game.agents, self.game.penalty, self.game.penalties.clone(), None)
    }

    pub fn truth(&self) -> Result<Option<TrueDistribution>> {
        let n = self.game.agents;
        Ok(match &self.truth {
            None => None,
            Some(TruthSection::Uniform { lower, upper }) => Some(TrueDistribution::uniform(n, *lower, *upper)),
            Some(TruthSection::Gaussian { means, stds }) => {
                if means.len() != n || stds.len() != n {
                    return Err(Error::Config(format!("truth: gaussian parameters must have {n} entries")));
                }
                Some(TrueDistribution::gaussian(means, stds))
            }
        })
    }

    fn skeleton(&self, data: Vec<EmpiricalDistribution>) -> Result<GameSpec> {
        if self.game.agents == 0 {
            return Err(Error::Config("game needs at least one agent".into()));
        }
        let (x, s) = self.boxes()?;
        GameSpec::new(x, s, self.penalties()?, self.cost_model()?, data)
    }

    /// The configured game with its empirical data, drawn from `[truth]`
    /// when no samples are given.
    pub fn build_game(&self) -> Result<GameSpec> {
        let n = self.game.agents;
        if let Some(samples) = &self.data.samples {
            if samples.len() != n {
                return Err(Error::Config(format!("data: {} sample lists for {n} agents", samples.len())));
            }
            let data = samples
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    EmpiricalDistribution::from_scalars(s)
                        .map_err(|_| Error::Config(format!("data: agent {} has no samples", i + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            return self.skeleton(data);
        }
        let counts = per_agent("samples_per_agent", n, self.data.samples_per_agent, self.data.counts.clone(), None)
            .map_err(|_| Error::Config("data: give samples, a csv file, or samples_per_agent with [truth]".into()))?;
        let truth = self
            .truth()?
            .ok_or_else(|| Error::Config("data: drawing samples requires a [truth] section".into()))?;
        let placeholder = self.template()?;
        truth.validate(&placeholder)?;
        let data = (0..n)
            .map(|i| {
                let mut rng = rng::stream(self.data.seed, i, Purpose::Training);
                let s = (0..counts[i].max(1))
                    .map(|_| truth.sample(&placeholder, i, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                EmpiricalDistribution::new(s)
            })
            .collect::<Result<Vec<_>>>()?;
        placeholder.with_empirical_data(data)
    }

    /// The configured game with one placeholder sample per agent at the
    /// centre of its support; for callers that supply their own data.
    pub fn template(&self) -> Result<GameSpec> {
        let (_, supports) = self.boxes()?;
        let data = supports
            .iter()
            .map(|b| {
                let c = b
                    .lower()
                    .iter()
                    .zip(b.upper())
                    .map(|(l, u)| if l.is_finite() && u.is_finite() { 0.5 * (l + u) } else { 0.0 })
                    .collect();
                EmpiricalDistribution::new(vec![c])
            })
            .collect::<Result<Vec<_>>>()?;
        self.skeleton(data)
    }

    pub fn sampling(&self) -> Result<Sampling> {
        match self.solver.sampling {
            SamplingKind::Empirical => Ok(Sampling::Empirical),
            SamplingKind::Online => self
                .truth()?
                .map(Sampling::Online)
                .ok_or_else(|| Error::Config("online sampling requires a [truth] section".into())),
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            horizon: s.horizon,
            step_mode: match s.step {
                StepKind::Fixed => StepMode::Fixed,
                StepKind::Diminishing => StepMode::Diminishing,
            },
            eta0: s.eta0,
            agent_step_scale: None,
            inner: InnerSolverConfig {
                accuracy: s.accuracy,
                max_iterations: s.max_inner_iterations,
                ..InnerSolverConfig::default()
            },
            agent_accuracy: s.accuracies.clone(),
            rng_seed: s.seed,
            record_every: s.record_every,
            residual_step: s.residual_step,
            quadrature_nodes: s.quadrature_nodes,
        }
    }

    pub fn oracle_config(&self) -> OracleConfig {
        OracleConfig {
            tol: self.oracle.tolerance,
            max_iterations: self.oracle.max_iterations,
            step: self.oracle.step,
            ..OracleConfig::default()
        }
    }

    /// Out-of-sample settings for one scenario.
    pub fn oos_config(&self, scenario: Scenario) -> OosConfig {
        let o = &self.oos;
        OosConfig {
            train_means: o.train_means.clone(),
            train_stds: o.train_stds.clone(),
            mean_shift: o.mean_shift.clone(),
            std_shift: o.std_shift.clone(),
            train_counts: o.train_counts.clone(),
            test_count: o.test_count,
            scenario,
            macro_seed: o.macro_seed,
            histogram_bins: o.histogram_bins,
        }
    }

    /// The `evaluate` scenario: `[oos].rho`, else the reciprocal penalties.
    pub fn evaluate_scenario(&self) -> Result<Scenario> {
        let rho = match &self.oos.rho {
            Some(r) => r.clone(),
            None => self.penalties()?.iter().map(|l| 1.0 / l).collect(),
        };
        Ok(Scenario::new(self.oos.label.clone(), rho))
    }

    /// Sweep cases with labels `<case>-scenario<k>`.
    pub fn sweep_cases(&self) -> Result<Vec<(String, Vec<Scenario>)>> {
        let sweep = self
            .sweep
            .as_ref()
            .filter(|s| !s.cases.is_empty())
            .ok_or_else(|| Error::Config("sweep requires at least one [[sweep.cases]] entry".into()))?;
        Ok(sweep
            .cases
            .iter()
            .map(|c| {
                let scenarios = c
                    .rho
                    .iter()
                    .enumerate()
                    .map(|(k, r)| Scenario::new(format!("{}-scenario{}", c.label, k + 1), r.clone()))
                    .collect();
                (c.label.clone(), scenarios)
            })
            .collect())
    }
}

fn read_samples_csv(path: &Path, agents: usize) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut samples = vec![Vec::new(); agents];
    for row in reader.deserialize::<DataRow>() {
        let row = row.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if row.agent == 0 || row.agent > agents {
            return Err(Error::Config(format!("{}: agent {} out of range", path.display(), row.agent)));
        }
        samples[row.agent - 1].push(row.value);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
[game]
agents = 3
decision = [0.0, 10.0]
support = [0.0, 1.0]
penalty = 2.0

[truth]
kind = "uniform"
lower = 0.0
upper = 1.0

[data]
samples_per_agent = 4
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::from_toml(BASIC).unwrap();
        assert_eq!(cfg.solver.horizon, 10_000);
        assert_eq!(cfg.game.demand_intercept, 10.0);
        let game = cfg.build_game().unwrap();
        assert_eq!(game.num_agents(), 3);
        assert_eq!(game.data(2).len(), 4);
        assert!(game.data(0).samples().iter().all(|s| (0.0..=1.0).contains(&s[0])));
        assert!(matches!(cfg.sampling().unwrap(), Sampling::Online(_)));
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::from_toml(BASIC).unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.to_toml(), again.to_toml());
    }

    #[test]
    fn unknown_keys_and_conflicts_are_rejected() {
        assert!(RunConfig::from_toml(&BASIC.replace("penalty = 2.0", "penalty = 2.0\nlambda = 1")).is_err());
        let both = RunConfig::from_toml(&BASIC.replace("penalty = 2.0", "penalty = 2.0\npenalties = [1, 2, 3]")).unwrap();
        assert!(both.build_game().is_err());
    }

    #[test]
    fn inline_samples_and_generic_cost() {
        let text = BASIC.replace("samples_per_agent = 4", "samples = [[0.1], [0.2, 0.3], [0.4]]")
            .replace("agents = 3", "agents = 3\ncost = \"cournot-generic\"\ndeclare_constants = false");
        let cfg = RunConfig::from_toml(&text).unwrap();
        let game = cfg.build_game().unwrap();
        assert_eq!(game.data(1).len(), 2);
        assert!(game.cost_model().as_cournot().is_none());
        assert!(game.cost_model().constants(3).is_none());
    }

    #[test]
    fn csv_data_is_inlined_on_load() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.csv"), "agent,value\n1,0.5\n2,0.25\n3,0.75\n3,0.5\n").unwrap();
        let text = BASIC.replace("samples_per_agent = 4", "csv = \"d.csv\"");
        let path = dir.path().join("run.toml");
        std::fs::write(&path, text).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.data.samples.as_ref().unwrap()[2], vec![0.75, 0.5]);
        assert!(cfg.data.csv.is_none());
        assert!(!cfg.to_toml().contains("d.csv"));
    }

    #[test]
    fn sweep_cases_are_labelled() {
        let text = format!("{BASIC}\n[[sweep.cases]]\nlabel = \"case1\"\nrho = [[0.5, 0.5, 0.5], [1, 1, 1]]\n");
        let cfg = RunConfig::from_toml(&text).unwrap();
        let cases = cfg.sweep_cases().unwrap();
        assert_eq!(cases[0].1[1].label, "case1-scenario2");
        assert!(RunConfig::from_toml(BASIC).unwrap().sweep_cases().is_err());
        assert_eq!(cfg.evaluate_scenario().unwrap().rho, vec![0.5; 3]);
    }
}
