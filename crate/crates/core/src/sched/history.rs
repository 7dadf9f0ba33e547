use crate::space::{Configuration, GroupId, GroupedConfigSpace};
use crate::surrogate::QualityState;
use crate::tpe::{ObservationSet, TpeError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// How a trial's weights were initialized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainingPlan {
    Complete,
    /// Subnets copied (and frozen) from earlier trials, keyed to the source trial id.
    Transfer {
        frozen: BTreeMap<GroupId, usize>,
    },
}

impl TrainingPlan {
    pub fn is_complete(&self) -> bool {
        matches!(self, TrainingPlan::Complete)
    }

    pub fn is_frozen(&self, group: GroupId) -> bool {
        match self {
            TrainingPlan::Complete => false,
            TrainingPlan::Transfer { frozen } => frozen.contains_key(&group),
        }
    }

    pub fn frozen(&self) -> impl Iterator<Item = (GroupId, usize)> + '_ {
        let map = match self {
            TrainingPlan::Complete => None,
            TrainingPlan::Transfer { frozen } => Some(frozen),
        };
        map.into_iter().flatten().map(|(g, s)| (*g, *s))
    }
}

/// Which scheduler branch produced a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Random,
    BoRandom,
    BoTpe,
    DcBootstrap,
    DcExploreComplete,
    DcExploreTransfer,
    DcTpeComplete,
    DcFocalTransfer,
    DcGroupTpeComplete,
    DcGroupFocalTransfer,
    DcFallback,
    SaBootstrap,
    SaExplore,
    SaPartial,
    SaFocal,
}

impl Branch {
    /// Position in the five-way divide-and-conquer decision tree.
    pub fn dcbo_case(self) -> Option<u8> {
        match self {
            Branch::DcBootstrap => Some(1),
            Branch::DcExploreComplete | Branch::DcExploreTransfer => Some(2),
            Branch::DcTpeComplete | Branch::DcFocalTransfer => Some(3),
            Branch::DcGroupTpeComplete | Branch::DcGroupFocalTransfer => Some(4),
            Branch::DcFallback => Some(5),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub id: usize,
    pub branch: Branch,
    pub plan: TrainingPlan,
    pub config: Configuration,
    /// `merge_loss + lambda * sum(group_losses)`, the minimized objective.
    pub loss: f64,
    pub merge_loss: f64,
    pub group_losses: Vec<f64>,
    pub states: BTreeMap<GroupId, QualityState>,
    pub cost: f64,
    pub cumulative_time: f64,
}

impl TrialRecord {
    pub fn group_loss(&self, group: GroupId) -> Option<f64> {
        group
            .subnet_index()
            .and_then(|i| self.group_losses.get(i - 1).copied())
    }

    /// Whether `group` was trained (from scratch or fine-tuned) rather than frozen.
    pub fn trained(&self, group: GroupId) -> bool {
        !self.plan.is_frozen(group)
    }
}

/// Trial records of one optimization run, in execution order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    records: Vec<TrialRecord>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<TrialRecord>) -> Self {
        Self { records }
    }

    pub fn push(&mut self, record: TrialRecord) {
        debug_assert_eq!(record.id, self.records.len());
        debug_assert!(record.cumulative_time > self.cumulative_time() || self.is_empty());
        self.records.push(record);
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn get(&self, id: usize) -> Option<&TrialRecord> {
        self.records.get(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TrialRecord> {
        self.records.last()
    }

    pub fn cumulative_time(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative_time)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn complete_count(&self) -> usize {
        self.records.iter().filter(|r| r.plan.is_complete()).count()
    }

    pub fn complete_parents(&self) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(|r| r.plan.is_complete())
    }

    /// All configurations with their total losses.
    pub fn observations(&self) -> Result<ObservationSet, TpeError> {
        ObservationSet::new(
            self.records.iter().map(|r| r.config.clone()).collect(),
            self.losses(),
        )
    }

    /// Trials that trained `group` themselves, i.e. did not freeze it.
    pub fn trainers(&self, group: GroupId) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(move |r| r.trained(group))
    }

    /// Group assignments paired with that group's head loss, over the trials
    /// that trained the group.
    pub fn group_observations(
        &self,
        space: &GroupedConfigSpace,
        group: GroupId,
    ) -> Result<ObservationSet, TpeError> {
        let (configs, losses) = self
            .trainers(group)
            .filter_map(|r| {
                r.group_loss(group)
                    .map(|l| (space.project(&r.config, group), l))
            })
            .unzip();
        ObservationSet::new(configs, losses)
    }

    /// Distinct assignments of `group` that some trial trained, in first-seen
    /// order. These are the assignments eligible for transfer.
    pub fn eligible(&self, space: &GroupedConfigSpace, group: GroupId) -> Vec<Configuration> {
        let mut out: Vec<Configuration> = Vec::new();
        for r in self.trainers(group) {
            let part = space.project(&r.config, group);
            if !out.contains(&part) {
                out.push(part);
            }
        }
        out
    }

    /// The trial with the lowest head loss among those that trained
    /// `assignment` for `group`; earlier trials win ties.
    pub fn best_source(
        &self,
        space: &GroupedConfigSpace,
        group: GroupId,
        assignment: &Configuration,
    ) -> Option<usize> {
        self.trainers(group)
            .filter(|r| &space.project(&r.config, group) == assignment)
            .filter_map(|r| r.group_loss(group).map(|l| (r.id, l)))
            .fold(None, |best: Option<(usize, f64)>, (id, l)| match best {
                Some((_, bl)) if bl <= l => best,
                _ => Some((id, l)),
            })
            .map(|(id, _)| id)
    }
}
