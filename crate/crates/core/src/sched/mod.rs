//! Trial bookkeeping, schedulers and the budgeted run loop.

mod history;
mod importance;
mod steps;

pub use history::{Branch, History, TrainingPlan, TrialRecord};
pub use importance::{importance_from_folds, percentile, sabo_importance, ImportanceVector};
pub use steps::{bo_step, dcbo_step, random_step, sabo_step, Proposal};

use crate::space::{GroupId, GroupedConfigSpace, SpaceError};
use crate::surrogate::{Objective, SurrogateError};
use crate::tpe::{TpeError, TpeParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchedError {
    #[error("trial {trial} has no trained state for {group}")]
    UnknownSourceTrial { trial: usize, group: GroupId },
    #[error("budget {budget} is below the cheapest complete trial ({min_cost})")]
    BudgetTooSmall { budget: f64, min_cost: f64 },
    #[error("no trial trained the selected assignment of {0}")]
    NoSourceFor(GroupId),
    #[error("history has no per-group losses")]
    NoGroupLosses,
    #[error("invalid scheduler parameter: {0}")]
    InvalidParams(String),
    #[error("unknown scheduler `{0}`")]
    UnknownScheduler(String),
    #[error(transparent)]
    Tpe(#[from] TpeError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Objective(#[from] SurrogateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Random,
    Bo,
    Dcbo,
    Sabo,
}

impl SchedulerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::Random => "random",
            SchedulerKind::Bo => "bo",
            SchedulerKind::Dcbo => "dcbo",
            SchedulerKind::Sabo => "sabo",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = SchedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(SchedulerKind::Random),
            "bo" => Ok(SchedulerKind::Bo),
            "dcbo" => Ok(SchedulerKind::Dcbo),
            "sabo" => Ok(SchedulerKind::Sabo),
            other => Err(SchedError::UnknownScheduler(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerParams {
    /// Probability of an exploratory (uniform or random-transfer) step.
    pub v: f64,
    /// Probability of training from scratch rather than transferring.
    pub o: f64,
    /// Weight of the per-subnet head losses in the total loss.
    pub lambda_aux: f64,
    pub tpe: TpeParams,
    /// Complete models trained before any transfer; `None` means one more
    /// than the largest subnet group's dimension.
    pub min_complete: Option<usize>,
}

impl Default for SchedulerParams {
    fn default() -> Self {
        Self {
            v: 1.0 / 3.0,
            o: 0.2,
            lambda_aux: 0.1,
            tpe: TpeParams::default(),
            min_complete: None,
        }
    }
}

impl SchedulerParams {
    pub fn validate(&self) -> Result<(), SchedError> {
        if !(0.0..=1.0).contains(&self.v) {
            return Err(SchedError::InvalidParams("v must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.o) {
            return Err(SchedError::InvalidParams("o must lie in [0, 1]".into()));
        }
        if !(self.lambda_aux.is_finite() && self.lambda_aux >= 0.0) {
            return Err(SchedError::InvalidParams("lambda_aux must be >= 0".into()));
        }
        self.tpe.validate()?;
        Ok(())
    }

    pub fn min_complete(&self, space: &GroupedConfigSpace) -> usize {
        self.min_complete.unwrap_or_else(|| {
            space
                .subnets()
                .filter_map(|g| space.group_dim(g).ok())
                .max()
                .unwrap_or(0)
                + 1
        })
    }
}

/// Total loss with auxiliary subnet heads: `l_M + lambda * sum_i l_i`.
pub fn combine_loss(merge_loss: f64, group_losses: &[f64], lambda: f64) -> f64 {
    merge_loss + lambda * group_losses.iter().sum::<f64>()
}

/// Upper bound on the speedup from recombining `t` complete models with `i`
/// subnets each: `t^(i-1)`.
pub fn max_speedup_bound(t: u32, i: u32) -> f64 {
    f64::from(t).powi(i as i32 - 1)
}

/// Number of recombinations of `t` complete models that differ from every
/// parent: `t^i - t`.
pub fn transfer_combo_count(t: u64, i: u32) -> u64 {
    t.saturating_pow(i) - t
}

/// Trains a proposal against `objective` and appends the resulting record.
pub fn execute_trial<O, R>(
    proposal: Proposal,
    objective: &O,
    history: &mut History,
    params: &SchedulerParams,
    rng: &mut R,
) -> Result<TrialRecord, SchedError>
where
    O: Objective,
    R: rand::Rng + ?Sized,
{
    let outcome = match &proposal.plan {
        TrainingPlan::Complete => objective.eval_complete(&proposal.config, rng),
        TrainingPlan::Transfer { frozen } => {
            let states = frozen
                .iter()
                .map(|(g, src)| {
                    history
                        .get(*src)
                        .and_then(|r| r.states.get(g))
                        .map(|s| (*g, s.clone()))
                        .ok_or(SchedError::UnknownSourceTrial {
                            trial: *src,
                            group: *g,
                        })
                })
                .collect::<Result<BTreeMap<_, _>, _>>()?;
            objective.eval_transfer(&proposal.config, &states, rng)?
        }
    };
    let record = TrialRecord {
        id: history.len(),
        branch: proposal.branch,
        plan: proposal.plan,
        config: proposal.config,
        loss: combine_loss(outcome.merge_loss, &outcome.group_losses, params.lambda_aux),
        merge_loss: outcome.merge_loss,
        group_losses: outcome.group_losses,
        states: outcome.states,
        cost: outcome.cost,
        cumulative_time: history.cumulative_time() + outcome.cost,
    };
    history.push(record.clone());
    Ok(record)
}

/// Generator for one (seed, fold) run.
pub fn run_rng(seed: u64, fold: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fold);
    rng
}

/// Hex encoding of the generator's seed, stream and word position.
pub fn rng_to_hex(rng: &ChaCha8Rng) -> String {
    let mut bytes = Vec::with_capacity(56);
    bytes.extend_from_slice(&rng.get_seed());
    bytes.extend_from_slice(&rng.get_stream().to_le_bytes());
    bytes.extend_from_slice(&rng.get_word_pos().to_le_bytes());
    hex::encode(bytes)
}

pub fn rng_from_hex(s: &str) -> Option<ChaCha8Rng> {
    let bytes = hex::decode(s).ok()?;
    if bytes.len() != 56 {
        return None;
    }
    let seed: [u8; 32] = bytes[..32].try_into().ok()?;
    let stream = u64::from_le_bytes(bytes[32..40].try_into().ok()?);
    let word_pos = u128::from_le_bytes(bytes[40..56].try_into().ok()?);
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    Some(rng)
}

/// A single budgeted optimization run that can be stepped and checkpointed.
#[derive(Debug)]
pub struct Runner<'a, O> {
    kind: SchedulerKind,
    objective: &'a O,
    space: &'a GroupedConfigSpace,
    params: SchedulerParams,
    budget: f64,
    history: History,
    rng: ChaCha8Rng,
}

impl<'a, O: Objective> Runner<'a, O> {
    pub fn new(
        kind: SchedulerKind,
        objective: &'a O,
        space: &'a GroupedConfigSpace,
        params: SchedulerParams,
        budget: f64,
        rng: ChaCha8Rng,
    ) -> Result<Self, SchedError> {
        Self::resume(kind, objective, space, params, budget, History::new(), rng)
    }

    /// Continues from a recorded history; `rng` must be the generator state
    /// captured right after the last recorded trial.
    pub fn resume(
        kind: SchedulerKind,
        objective: &'a O,
        space: &'a GroupedConfigSpace,
        params: SchedulerParams,
        budget: f64,
        history: History,
        rng: ChaCha8Rng,
    ) -> Result<Self, SchedError> {
        params.validate()?;
        let min_cost = objective.min_complete_cost();
        if budget.is_nan() || budget < min_cost {
            return Err(SchedError::BudgetTooSmall { budget, min_cost });
        }
        Ok(Self {
            kind,
            objective,
            space,
            params,
            budget,
            history,
            rng,
        })
    }

    pub fn is_done(&self) -> bool {
        self.history.cumulative_time() >= self.budget
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn propose(&mut self) -> Result<Proposal, SchedError> {
        let rng = &mut self.rng;
        match self.kind {
            SchedulerKind::Random => Ok(random_step(self.space, rng)),
            SchedulerKind::Bo => bo_step(&self.history, self.space, &self.params, rng),
            SchedulerKind::Dcbo => dcbo_step(&self.history, self.space, &self.params, rng),
            SchedulerKind::Sabo => {
                let importance = if self.history.is_empty() {
                    ImportanceVector::uniform(self.space.group_count())
                } else {
                    sabo_importance(&self.history, self.space.group_count())?
                };
                sabo_step(&self.history, self.space, &self.params, &importance, rng)
            }
        }
    }

    /// Runs one trial unless the budget is exhausted.
    pub fn step(&mut self) -> Result<Option<&TrialRecord>, SchedError> {
        if self.is_done() {
            return Ok(None);
        }
        let proposal = self.propose()?;
        execute_trial(
            proposal,
            self.objective,
            &mut self.history,
            &self.params,
            &mut self.rng,
        )?;
        Ok(self.history.last())
    }

    pub fn run_to_end(mut self) -> Result<History, SchedError> {
        while self.step()?.is_some() {}
        Ok(self.history)
    }

    pub fn into_history(self) -> History {
        self.history
    }
}

/// Runs `kind` until the cumulative cost reaches `budget`.
pub fn run<O: Objective>(
    kind: SchedulerKind,
    objective: &O,
    space: &GroupedConfigSpace,
    params: &SchedulerParams,
    budget: f64,
    seed: u64,
) -> Result<History, SchedError> {
    Runner::new(
        kind,
        objective,
        space,
        params.clone(),
        budget,
        run_rng(seed, 0),
    )?
    .run_to_end()
}
