//! Experiment configuration: a flat TOML or JSON document turned into a
//! validated [`ExperimentPlan`].

use crate::CliError;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use subnet_hpo::sched::{SchedulerKind, SchedulerParams};
use subnet_hpo::space::{GroupedConfigSpace, HyperparameterDef};
use subnet_hpo::surrogate::{
    find_benchmark, make_surrogate, CostModel, SurrogateObjective, SurrogateSpec,
};

const KEYS: &[&str] = &[
    "benchmark",
    "space",
    "surrogate",
    "scheduler",
    "budget",
    "seeds",
    "folds",
    "out",
    "v",
    "o",
    "lambda_aux",
    "min_complete",
    "alpha",
    "n_candidates",
    "bandwidth_floor",
    "prior_weight",
    "transfer_ratio",
    "base_complete_cost",
    "epoch_jitter",
    "size_params",
    "noise_sigma",
    "landscape_seed",
    "signal_weights",
    "head_loss_scaling",
];

#[derive(Debug, Default, Deserialize)]
struct RawConfig {
    benchmark: Option<String>,
    space: Option<Vec<HyperparameterDef>>,
    surrogate: Option<SurrogateSpec>,
    scheduler: Option<String>,
    budget: Option<f64>,
    seeds: Option<Vec<u64>>,
    folds: Option<u64>,
    out: Option<PathBuf>,
    v: Option<f64>,
    o: Option<f64>,
    lambda_aux: Option<f64>,
    min_complete: Option<usize>,
    alpha: Option<f64>,
    n_candidates: Option<usize>,
    bandwidth_floor: Option<f64>,
    prior_weight: Option<f64>,
    transfer_ratio: Option<f64>,
    base_complete_cost: Option<f64>,
    epoch_jitter: Option<f64>,
    size_params: Option<Vec<String>>,
    noise_sigma: Option<f64>,
    landscape_seed: Option<u64>,
    signal_weights: Option<Vec<f64>>,
    head_loss_scaling: Option<bool>,
}

/// Everything needed to reproduce a set of runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentPlan {
    /// Name of the shipped benchmark, or `None` for an inline space.
    pub benchmark: Option<String>,
    pub space: Vec<HyperparameterDef>,
    pub surrogate: SurrogateSpec,
    pub cost: CostModel,
    pub scheduler: SchedulerKind,
    pub params: SchedulerParams,
    pub budget: f64,
    pub seeds: Vec<u64>,
    pub folds: u64,
    pub out: PathBuf,
}

fn invalid(key: &str, message: impl Into<String>) -> CliError {
    CliError::Validation {
        key: key.to_string(),
        message: message.into(),
    }
}

fn check_probability(key: &str, x: f64) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(invalid(key, format!("{x} is outside [0, 1]")))
    }
}

fn check_positive(key: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(invalid(key, format!("{x} must be positive")))
    }
}

/// Reads a config file, choosing the format from its extension.
pub fn parse_experiment_config(path: &Path) -> Result<ExperimentPlan, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let doc: Value = match ext {
        "toml" => toml::from_str(&text)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?,
        "json" => serde_json::from_str(&text)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?,
        other => {
            return Err(CliError::Parse(format!(
                "{}: unsupported extension `{other}` (expected .toml or .json)",
                path.display()
            )))
        }
    };
    plan_from_value(doc)
}

pub fn plan_from_value(doc: Value) -> Result<ExperimentPlan, CliError> {
    let Value::Object(map) = doc else {
        return Err(CliError::Parse("config must be a table of keys".into()));
    };
    plan_from_map(map)
}

fn plan_from_map(map: Map<String, Value>) -> Result<ExperimentPlan, CliError> {
    if let Some(key) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(CliError::UnknownKey(key.clone()));
    }
    // Check key by key first so that a type error names the offending key.
    for (key, value) in &map {
        let single = Map::from_iter([(key.clone(), value.clone())]);
        serde_json::from_value::<RawConfig>(Value::Object(single))
            .map_err(|e| CliError::Parse(format!("`{key}`: {e}")))?;
    }
    let raw: RawConfig =
        serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Parse(e.to_string()))?;
    build_plan(raw)
}

fn build_plan(raw: RawConfig) -> Result<ExperimentPlan, CliError> {
    let scheduler = raw
        .scheduler
        .ok_or_else(|| invalid("scheduler", "missing required key"))?
        .parse::<SchedulerKind>()
        .map_err(|e| invalid("scheduler", e.to_string()))?;
    let budget = check_positive(
        "budget",
        raw.budget
            .ok_or_else(|| invalid("budget", "missing required key"))?,
    )?;
    let seeds = raw
        .seeds
        .ok_or_else(|| invalid("seeds", "missing required key"))?;
    if seeds.is_empty() {
        return Err(invalid("seeds", "at least one seed is required"));
    }
    let folds = raw.folds.unwrap_or(1);
    if folds == 0 {
        return Err(invalid("folds", "must be at least 1"));
    }

    let (benchmark, space, mut surrogate, mut cost) =
        match (raw.benchmark, raw.space, raw.surrogate) {
            (Some(name), None, None) => {
                let b = find_benchmark(&name)
                    .ok_or_else(|| invalid("benchmark", format!("unknown benchmark `{name}`")))?;
                (Some(name), b.space.defs().to_vec(), b.spec, b.cost)
            }
            (None, Some(space), Some(spec)) => (None, space, spec, CostModel::default()),
            (Some(_), _, _) => {
                return Err(invalid(
                    "benchmark",
                    "cannot be combined with `space` or `surrogate`",
                ))
            }
            (None, None, _) => {
                return Err(invalid(
                    "benchmark",
                    "missing; give a benchmark name or `space` and `surrogate`",
                ))
            }
            (None, Some(_), None) => {
                return Err(invalid("surrogate", "required with an inline `space`"))
            }
        };

    if let Some(x) = raw.noise_sigma {
        surrogate.noise_sigma = x;
    }
    if let Some(x) = raw.landscape_seed {
        surrogate.landscape_seed = x;
    }
    if let Some(x) = raw.signal_weights {
        surrogate.signal_weights = x;
    }
    if let Some(x) = raw.head_loss_scaling {
        surrogate.head_loss_scaling = x;
    }
    if let Some(x) = raw.transfer_ratio {
        if !(x > 0.0 && x < 1.0) {
            return Err(invalid("transfer_ratio", format!("{x} is outside (0, 1)")));
        }
        cost.transfer_ratio = x;
    }
    if let Some(x) = raw.base_complete_cost {
        cost.base_complete_cost = check_positive("base_complete_cost", x)?;
    }
    if let Some(x) = raw.epoch_jitter {
        if !(0.0..1.0).contains(&x) {
            return Err(invalid("epoch_jitter", format!("{x} is outside [0, 1)")));
        }
        cost.epoch_jitter = x;
    }
    if let Some(x) = raw.size_params {
        cost.size_params = x;
    }

    let mut params = SchedulerParams::default();
    if let Some(x) = raw.v {
        params.v = check_probability("v", x)?;
    }
    if let Some(x) = raw.o {
        params.o = check_probability("o", x)?;
    }
    if let Some(x) = raw.lambda_aux {
        if !(x.is_finite() && x >= 0.0) {
            return Err(invalid("lambda_aux", format!("{x} must be >= 0")));
        }
        params.lambda_aux = x;
    }
    if let Some(x) = raw.min_complete {
        params.min_complete = Some(x);
    }
    if let Some(x) = raw.alpha {
        if !(x > 0.0 && x < 1.0) {
            return Err(invalid("alpha", format!("{x} is outside (0, 1)")));
        }
        params.tpe.alpha = x;
    }
    if let Some(x) = raw.n_candidates {
        if x == 0 {
            return Err(invalid("n_candidates", "must be at least 1"));
        }
        params.tpe.n_candidates = x;
    }
    if let Some(x) = raw.bandwidth_floor {
        params.tpe.bandwidth_floor = check_positive("bandwidth_floor", x)?;
    }
    if let Some(x) = raw.prior_weight {
        if !(0.0..1.0).contains(&x) {
            return Err(invalid("prior_weight", format!("{x} is outside [0, 1)")));
        }
        params.tpe.prior_weight = x;
    }
    params
        .validate()
        .map_err(|e| invalid("scheduler", e.to_string()))?;

    let plan = ExperimentPlan {
        benchmark,
        space,
        surrogate,
        cost,
        scheduler,
        params,
        budget,
        seeds,
        folds,
        out: raw.out.unwrap_or_else(|| PathBuf::from("runs")),
    };
    // Catch space and surrogate inconsistencies before any run starts.
    let objective = plan.objective()?;
    let min_cost = subnet_hpo::surrogate::Objective::min_complete_cost(&objective);
    if plan.budget < min_cost {
        return Err(invalid(
            "budget",
            format!(
                "{} is below the cheapest complete trial ({min_cost})",
                plan.budget
            ),
        ));
    }
    Ok(plan)
}

impl ExperimentPlan {
    pub fn group_count(&self) -> usize {
        self.surrogate.group_count
    }

    pub fn build_space(&self) -> Result<GroupedConfigSpace, CliError> {
        GroupedConfigSpace::build(self.space.clone(), self.group_count())
            .map_err(|e| invalid("space", e.to_string()))
    }

    pub fn objective(&self) -> Result<SurrogateObjective, CliError> {
        let space = self.build_space()?;
        make_surrogate(&self.surrogate, &space, &self.cost)
            .map_err(|e| invalid("surrogate", e.to_string()))
    }

    /// Hex SHA-256 over everything that shapes a single run's trajectory.
    /// Seeds, folds and the output directory are left out so that adding a
    /// seed does not invalidate existing journals.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct Shape<'a> {
            space: &'a [HyperparameterDef],
            surrogate: &'a SurrogateSpec,
            cost: &'a CostModel,
            scheduler: SchedulerKind,
            params: &'a SchedulerParams,
            budget: f64,
        }
        let shape = Shape {
            space: &self.space,
            surrogate: &self.surrogate,
            cost: &self.cost,
            scheduler: self.scheduler,
            params: &self.params,
            budget: self.budget,
        };
        let bytes = serde_json::to_vec(&shape).expect("plan serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
