use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FzooError, Result};
use crate::estimators::Engine;
use crate::forward_engine::Activation;
use crate::objectives::{
    linear_objective, load_csv, logistic_objective, mlp_objective, quadratic_objective,
    rosenbrock_objective, zero_one_objective, Dataset, Objective, QuadraticSpec, Scorer,
};
use crate::optimizers::{Budget, OptimizerConfig, OptimizerKind};
use crate::perturbation::ParamVector;

/// Learning rates tried when an optimizer entry gives none, before `lr_scale`.
pub const DEFAULT_LR_GRID: [f64; 4] = [1e-5, 5e-5, 1e-4, 5e-4];
pub const DEFAULT_EPS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    Quadratic {
        dim: usize,
        #[serde(default = "default_quadratic")]
        hessian: QuadraticSpec,
        /// Linear term `b`; zeros when absent.
        #[serde(default)]
        linear: Option<Vec<f64>>,
    },
    Linear {
        coefficients: Vec<f64>,
    },
    Rosenbrock {
        dim: usize,
    },
    Logistic {
        #[serde(default)]
        l2: f64,
    },
    Mlp {
        hidden: usize,
        #[serde(default = "default_activation")]
        activation: Activation,
        #[serde(default = "default_classes")]
        classes: usize,
    },
    ZeroOne {
        scorer: Scorer,
    },
}

fn default_quadratic() -> QuadraticSpec {
    QuadraticSpec::Identity
}

fn default_activation() -> Activation {
    Activation::Tanh
}

fn default_classes() -> usize {
    2
}

impl ObjectiveSpec {
    pub fn needs_dataset(&self) -> bool {
        matches!(
            self,
            ObjectiveSpec::Logistic { .. } | ObjectiveSpec::Mlp { .. } | ObjectiveSpec::ZeroOne { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Csv {
        path: PathBuf,
        label_column: String,
    },
    Logistic {
        samples: usize,
        features: usize,
        seed: u64,
    },
    LinearlySeparable {
        samples: usize,
        features: usize,
        seed: u64,
    },
}

impl DatasetSpec {
    /// Relative CSV paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<Dataset> {
        match self {
            DatasetSpec::Csv { path, label_column } => load_csv(base.join(path), label_column),
            DatasetSpec::Logistic { samples, features, seed } => {
                Dataset::logistic(*samples, *features, *seed)
            }
            DatasetSpec::LinearlySeparable { samples, features, seed } => {
                Dataset::linearly_separable(*samples, *features, *seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Zeros,
    Constant(f64),
    Values(Vec<f64>),
    Gaussian { scale: f64, seed: u64 },
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Zeros
    }
}

impl InitSpec {
    pub fn build(&self, objective: &dyn Objective) -> Result<ParamVector> {
        let d = objective.dim();
        let values = match self {
            InitSpec::Zeros => vec![0.0; d],
            InitSpec::Constant(c) => vec![*c; d],
            InitSpec::Values(v) => {
                if v.len() != d {
                    return Err(FzooError::config(
                        "init",
                        format!("{} values given, objective has {d} parameters", v.len()),
                    ));
                }
                v.clone()
            }
            InitSpec::Gaussian { scale, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..d)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        scale * z
                    })
                    .collect()
            }
        };
        objective.params(values).map_err(|e| FzooError::config("init", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerEntry {
    pub kind: OptimizerKind,
    /// Learning-rate grid; defaults to [`DEFAULT_LR_GRID`] times `lr_scale`.
    #[serde(default)]
    pub lr: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub lr_scale: f64,
    /// Perturbation-scale grid.
    #[serde(default)]
    pub eps: Option<Vec<f64>>,
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default)]
    pub max_effective_step: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_directions() -> usize {
    8
}

impl OptimizerEntry {
    pub fn new(kind: OptimizerKind) -> Self {
        OptimizerEntry {
            kind,
            lr: None,
            lr_scale: 1.0,
            eps: None,
            directions: default_directions(),
            batch_size: None,
            engine: Engine::Sequential,
            max_effective_step: None,
        }
    }

    pub fn lr_grid(&self) -> Vec<f64> {
        match &self.lr {
            Some(v) => v.clone(),
            None => DEFAULT_LR_GRID.iter().map(|lr| lr * self.lr_scale).collect(),
        }
    }

    /// First-order kinds ignore ε and get a single grid value.
    pub fn eps_grid(&self) -> Vec<f64> {
        if self.kind.is_first_order() {
            return vec![DEFAULT_EPS];
        }
        self.eps.clone().unwrap_or_else(|| vec![DEFAULT_EPS])
    }

    /// Every `(lr, eps)` pair, ordered by lr then eps.
    pub fn grid(&self) -> Vec<(f64, f64)> {
        let eps = self.eps_grid();
        self.lr_grid()
            .into_iter()
            .flat_map(|lr| eps.iter().map(move |&e| (lr, e)))
            .collect()
    }

    pub fn optimizer_config(&self, lr: f64, eps: f64, budget: u64, seed: u64) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.kind,
            lr,
            eps,
            directions: self.directions,
            batch_size: self.batch_size,
            budget: Budget::ForwardPasses(budget),
            run_seed: seed,
            engine: self.engine,
            max_effective_step: self.max_effective_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub dataset: Option<DatasetSpec>,
    #[serde(default)]
    pub init: InitSpec,
    pub optimizers: Vec<OptimizerEntry>,
    /// Forward-equivalents per run.
    pub budget: u64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Save a checkpoint every this many steps.
    #[serde(default)]
    pub checkpoint_every: Option<u64>,
    /// Fill the `wall_ms` column; off by default so outputs stay reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| {
            FzooError::config(
                "<document>",
                format!("{e}"),
            )
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || self
                .name
                .chars()
                .any(|c| !(c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.'))
        {
            return Err(FzooError::config(
                "name",
                "must be non-empty and use only letters, digits, '-', '_' or '.'",
            ));
        }
        if self.optimizers.is_empty() {
            return Err(FzooError::config("optimizers", "at least one optimizer is required"));
        }
        if self.seeds.is_empty() {
            return Err(FzooError::config("seeds", "at least one seed is required"));
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(FzooError::config("seeds", "seeds must be distinct"));
        }
        if self.objective.needs_dataset() && self.dataset.is_none() {
            return Err(FzooError::config("dataset", "this objective reads a dataset"));
        }
        if !self.objective.needs_dataset() && self.dataset.is_some() {
            return Err(FzooError::config("dataset", "this objective does not read a dataset"));
        }
        if self.checkpoint_every == Some(0) {
            return Err(FzooError::config("checkpoint_every", "must be positive"));
        }
        if self.workers == Some(0) {
            return Err(FzooError::config("workers", "must be positive"));
        }
        for (i, entry) in self.optimizers.iter().enumerate() {
            let field = |name: &str| format!("optimizers[{i}].{name}");
            if !(entry.lr_scale > 0.0 && entry.lr_scale.is_finite()) {
                return Err(FzooError::config(field("lr_scale"), "must be > 0"));
            }
            if let Some(lr) = &entry.lr {
                if lr.is_empty() {
                    return Err(FzooError::config(field("lr"), "grid is empty"));
                }
                if let Some(j) = lr.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(FzooError::config(format!("{}[{j}]", field("lr")), "must be > 0"));
                }
            }
            if let Some(eps) = &entry.eps {
                if eps.is_empty() {
                    return Err(FzooError::config(field("eps"), "grid is empty"));
                }
                if let Some(j) = eps.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(FzooError::config(format!("{}[{j}]", field("eps")), "must be > 0"));
                }
            }
            let (lr, eps) = entry.grid()[0];
            entry
                .optimizer_config(lr, eps, self.budget, self.seeds[0])
                .validate()
                .map_err(|e| FzooError::config(format!("optimizers[{i}]"), e.to_string()))?;
        }
        Ok(())
    }

    /// Builds the objective; relative dataset paths resolve against `base`.
    pub fn build_objective(&self, base: &Path) -> Result<Box<dyn Objective>> {
        let dataset = match &self.dataset {
            Some(spec) => Some(spec.load(base)?),
            None => None,
        };
        let data = || dataset.clone().ok_or_else(|| FzooError::config("dataset", "missing"));
        let wrap = |e: FzooError| match e {
            e @ FzooError::Parse { .. } | e @ FzooError::Io(_) => e,
            e => FzooError::config("objective", e.to_string()),
        };
        let objective: Box<dyn Objective> = match &self.objective {
            ObjectiveSpec::Quadratic { dim, hessian, linear } => Box::new(
                quadratic_objective(hessian, linear.clone().unwrap_or_else(|| vec![0.0; *dim]), *dim)
                    .map_err(wrap)?,
            ),
            ObjectiveSpec::Linear { coefficients } => {
                Box::new(linear_objective(coefficients.clone()).map_err(wrap)?)
            }
            ObjectiveSpec::Rosenbrock { dim } => Box::new(rosenbrock_objective(*dim).map_err(wrap)?),
            ObjectiveSpec::Logistic { l2 } => Box::new(logistic_objective(data()?, *l2).map_err(wrap)?),
            ObjectiveSpec::Mlp { hidden, activation, classes } => {
                Box::new(mlp_objective(data()?, *hidden, *activation, *classes).map_err(wrap)?)
            }
            ObjectiveSpec::ZeroOne { scorer } => {
                Box::new(zero_one_objective(data()?, *scorer).map_err(wrap)?)
            }
        };
        Ok(objective)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "t",
        "objective": {"kind": "quadratic", "dim": 4},
        "optimizers": [{"kind": "FZOO"}],
        "budget": 100,
        "seeds": [1, 2]
    }"#;

    fn field_of(text: &str) -> String {
        match RunConfig::from_json(text).unwrap_err() {
            FzooError::Config { field, .. } => field,
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.optimizers[0].lr_grid(), DEFAULT_LR_GRID.to_vec());
        assert_eq!(c.optimizers[0].eps_grid(), vec![1e-3]);
        assert_eq!(c.optimizers[0].directions, 8);
        assert_eq!(c.output_dir, PathBuf::from("results"));
        assert_eq!(c.init, InitSpec::Zeros);
        let back = RunConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn grid_orders_lr_then_eps() {
        let mut e = OptimizerEntry::new(OptimizerKind::Fzoo);
        e.lr = Some(vec![0.1, 0.01]);
        e.eps = Some(vec![1e-3, 1e-4]);
        assert_eq!(e.grid(), vec![(0.1, 1e-3), (0.1, 1e-4), (0.01, 1e-3), (0.01, 1e-4)]);
        e.kind = OptimizerKind::Sgd;
        assert_eq!(e.grid().len(), 2);
    }

    #[test]
    fn lr_scale_multiplies_default_grid() {
        let mut e = OptimizerEntry::new(OptimizerKind::ZoSgd);
        e.lr_scale = 100.0;
        assert_eq!(e.lr_grid(), vec![1e-3, 5e-3, 1e-2, 5e-2]);
    }

    #[test]
    fn field_level_errors() {
        assert_eq!(field_of(&MINIMAL.replace("[1, 2]", "[1, 1]")), "seeds");
        assert_eq!(field_of(&MINIMAL.replace("[1, 2]", "[]")), "seeds");
        assert_eq!(field_of(&MINIMAL.replace(r#"[{"kind": "FZOO"}]"#, "[]")), "optimizers");
        assert_eq!(
            field_of(&MINIMAL.replace(r#"{"kind": "FZOO"}"#, r#"{"kind": "FZOO", "lr": [0.1, -1]}"#)),
            "optimizers[0].lr[1]"
        );
        assert_eq!(
            field_of(&MINIMAL.replace(r#"{"kind": "FZOO"}"#, r#"{"kind": "FZOO_R", "directions": 3}"#)),
            "optimizers[0]"
        );
        assert_eq!(
            field_of(&MINIMAL.replace(r#""kind": "quadratic", "dim": 4"#, r#""kind": "logistic""#)),
            "dataset"
        );
        assert_eq!(field_of(&MINIMAL.replace("\"t\"", "\"a/b\"")), "name");
        assert_eq!(field_of("{"), "<document>");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MINIMAL.replace("\"budget\"", "\"budjet\": 1, \"budget\"");
        let err = RunConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("budjet"), "{err}");
    }

    #[test]
    fn builds_every_objective_kind() {
        let base = Path::new(".");
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.build_objective(base).unwrap().dim(), 4);
        c.objective = ObjectiveSpec::Rosenbrock { dim: 3 };
        assert_eq!(c.build_objective(base).unwrap().dim(), 3);
        c.dataset = Some(DatasetSpec::Logistic { samples: 20, features: 3, seed: 0 });
        c.objective = ObjectiveSpec::Logistic { l2: 0.0 };
        assert_eq!(c.build_objective(base).unwrap().dim(), 3);
        c.objective = ObjectiveSpec::ZeroOne { scorer: Scorer::Linear { classes: 2 } };
        assert_eq!(c.build_objective(base).unwrap().dim(), 2 * 4);
        c.objective = ObjectiveSpec::Mlp { hidden: 5, activation: Activation::Tanh, classes: 2 };
        assert_eq!(c.build_objective(base).unwrap().dim(), 5 * 4 + 2 * 6);
    }

    #[test]
    fn init_values_must_match_dimension() {
        let obj = linear_objective(vec![1.0, 2.0]).unwrap();
        assert!(InitSpec::Values(vec![1.0]).build(&obj).is_err());
        assert_eq!(InitSpec::Constant(0.5).build(&obj).unwrap().values(), &[0.5, 0.5]);
        let g = InitSpec::Gaussian { scale: 1.0, seed: 4 };
        assert_eq!(g.build(&obj).unwrap(), g.build(&obj).unwrap());
    }
}
