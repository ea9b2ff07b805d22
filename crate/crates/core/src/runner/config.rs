//! Run configuration, read from TOML.
//!
//! ```toml
//! method = "proposed"          # proposed | method1 | method2 | random
//! seed = 7
//! lambda = 2
//! epsilons = [0.0, 0.1, 0.3, 0.5]
//! t_w = 500
//! t_theta = 500
//! cost_scale = "global-max"    # or "raw"
//!
//! [evaluator]
//! kind = "table"
//! noise = 0.01
//!
//! [[dims]]
//! name = "conv"
//! categories = [
//!   { label = "3x3", cost = 9.0, loss = 0.2 },
//!   { label = "5x5", cost = 25.0, loss = 0.1 },
//! ]
//! ```
//!
//! `kind = "tradeoff"` generates a table instance and `kind = "supernet"`
//! builds the toy weight-sharing network; both derive the space themselves
//! and ignore `[[dims]]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SearchSpace;
use crate::objectives::{Coupling, SupernetSpec, TableObjective, TradeoffSpec};
use crate::regularizer::{CostModel, CostScale};
use crate::utility::UtilityConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// One weight stage, then all ε searched together by importance sampling.
    #[default]
    Proposed,
    /// Per ε: fresh weights, alternating weight and θ updates.
    Method1,
    /// One weight stage, then one θ stage per ε.
    Method2,
    /// Uniform sampling, best architecture per complexity band.
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Proposed, Method::Method1, Method::Method2, Method::Random];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Method1 => "method1",
            Method::Method2 => "method2",
            Method::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategorySpec {
    pub label: String,
    #[serde(default)]
    pub cost: f64,
    /// Per-category loss for `kind = "table"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimSpec {
    pub name: String,
    pub categories: Vec<CategorySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    /// Dimension names.
    pub dims: [String; 2],
    pub table: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EvaluatorSpec {
    Table {
        #[serde(default)]
        noise: f64,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        couplings: Vec<CouplingSpec>,
    },
    Tradeoff(TradeoffSpec),
    Supernet(SupernetSpec),
}

impl Default for EvaluatorSpec {
    fn default() -> Self {
        EvaluatorSpec::Tradeoff(TradeoffSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomSearchSpec {
    /// Complexity targets (after cost scaling). Empty: one target per ε,
    /// evenly spaced strictly between the minimum and maximum complexity.
    pub targets: Vec<f64>,
    /// Relative half-width of each band.
    pub band: f64,
    /// In-band evaluations per target. 0: λ·T_θ split evenly over the targets.
    pub budget: usize,
    /// Give up on a band after this many draws per budgeted evaluation.
    pub max_draws_factor: usize,
}

impl Default for RandomSearchSpec {
    fn default() -> Self {
        Self { targets: Vec::new(), band: 0.05, budget: 0, max_draws_factor: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub method: Method,
    pub seed: u64,
    pub lambda: usize,
    pub epsilons: Vec<f64>,
    pub t_w: usize,
    pub t_theta: usize,
    pub batch_w: usize,
    pub batch_theta: usize,
    /// Default 1/Σ_d K_d.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    /// Projection floor θ_min; default 1/(20 Σ_d K_d).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    pub cost_scale: CostScale,
    /// Retrain final architectures (otherwise only their complexity is reported).
    pub retrain: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    pub utility: UtilityConfig,
    pub random: RandomSearchSpec,
    pub evaluator: EvaluatorSpec,
    pub dims: Vec<DimSpec>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            method: Method::Proposed,
            seed: 0,
            lambda: 2,
            epsilons: vec![0.0, 0.1, 0.3, 0.5],
            t_w: 500,
            t_theta: 500,
            batch_w: 64,
            batch_theta: 64,
            learning_rate: None,
            floor: None,
            cost_scale: CostScale::GlobalMax,
            retrain: true,
            out: None,
            utility: UtilityConfig::default(),
            random: RandomSearchSpec::default(),
            evaluator: EvaluatorSpec::default(),
            dims: Vec::new(),
        }
    }
}

impl SearchConfig {
    /// Defaults for the toy network: 2000 iterations per stage.
    pub fn supernet(spec: SupernetSpec) -> Self {
        Self { t_w: 2000, t_theta: 2000, evaluator: EvaluatorSpec::Supernet(spec), ..Self::default() }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed must be at most {}", i64::MAX)));
        }
        if self.lambda == 0 {
            return Err(Error::Config("lambda must be at least 1".into()));
        }
        if self.epsilons.is_empty() {
            return Err(Error::Config("at least one epsilon is required".into()));
        }
        for (i, e) in self.epsilons.iter().enumerate() {
            if !(e.is_finite() && *e >= 0.0) {
                return Err(Error::Config(format!("epsilon {e} must be finite and >= 0")));
            }
            if self.epsilons[..i].contains(e) {
                return Err(Error::Config(format!("epsilon {e} is listed twice")));
            }
        }
        if self.batch_w == 0 || self.batch_theta == 0 {
            return Err(Error::Config("mini-batch sizes must be at least 1".into()));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::NonPositiveLearningRate(lr));
            }
        }
        if let Some(f) = self.floor {
            if !(f >= 0.0 && f.is_finite()) {
                return Err(Error::Config(format!("floor {f} must be finite and >= 0")));
            }
        }
        if !(self.random.band >= 0.0 && self.random.band.is_finite()) {
            return Err(Error::Config("random.band must be finite and >= 0".into()));
        }
        self.utility.validate()?;
        if let EvaluatorSpec::Table { .. } = self.evaluator {
            if self.dims.is_empty() {
                return Err(Error::Config("kind = \"table\" needs [[dims]]".into()));
            }
        }
        Ok(())
    }

    /// Space, table objective and raw costs for `kind = "table"`.
    pub(crate) fn table_problem(&self, noise: f64, couplings: &[CouplingSpec]) -> Result<(SearchSpace, TableObjective, CostModel)> {
        let names: Vec<String> = self.dims.iter().map(|d| d.name.clone()).collect();
        let labels = self
            .dims
            .iter()
            .map(|d| d.categories.iter().map(|c| c.label.clone()).collect())
            .collect();
        let space = SearchSpace::with_labels(names.clone(), labels)?;
        let costs = self
            .dims
            .iter()
            .map(|d| d.categories.iter().map(|c| c.cost).collect())
            .collect();
        let losses = self
            .dims
            .iter()
            .map(|d| {
                d.categories
                    .iter()
                    .map(|c| {
                        c.loss.ok_or_else(|| {
                            Error::Config(format!("category `{}` of `{}` has no loss", c.label, d.name))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let position = |n: &str| {
            names
                .iter()
                .position(|x| x == n)
                .ok_or_else(|| Error::Config(format!("coupling names unknown dimension `{n}`")))
        };
        let couplings = couplings
            .iter()
            .map(|c| {
                Ok(Coupling { dims: (position(&c.dims[0])?, position(&c.dims[1])?), table: c.table.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        let objective = TableObjective::new(space.clone(), losses, couplings, noise)?;
        Ok((space, objective, CostModel::new(costs)?))
    }
}
