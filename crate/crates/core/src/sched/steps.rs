//! One proposal per call for each scheduler.

use super::{Branch, History, ImportanceVector, SchedError, SchedulerParams, TrainingPlan};
use crate::space::{Configuration, GroupId, GroupedConfigSpace};
use crate::tpe::{argmax_allowed, propose_focal_tpe, propose_tpe};
use rand::Rng;
use std::collections::BTreeMap;

/// A configuration to train, how to train it, and why it was chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub config: Configuration,
    pub plan: TrainingPlan,
    pub branch: Branch,
}

impl Proposal {
    fn complete(config: Configuration, branch: Branch) -> Self {
        Self {
            config,
            plan: TrainingPlan::Complete,
            branch,
        }
    }

    fn with_frozen(
        config: Configuration,
        frozen: BTreeMap<GroupId, usize>,
        branch: Branch,
    ) -> Self {
        let plan = if frozen.is_empty() {
            TrainingPlan::Complete
        } else {
            TrainingPlan::Transfer { frozen }
        };
        Self {
            config,
            plan,
            branch,
        }
    }
}

pub fn random_step<R: Rng + ?Sized>(space: &GroupedConfigSpace, rng: &mut R) -> Proposal {
    Proposal::complete(space.sample_uniform(rng), Branch::Random)
}

/// Baseline BO: uniform until the history exceeds `dim(C)`, then TPE, with
/// probability `v` of a uniform draw.
pub fn bo_step<R: Rng + ?Sized>(
    history: &History,
    space: &GroupedConfigSpace,
    params: &SchedulerParams,
    rng: &mut R,
) -> Result<Proposal, SchedError> {
    let explore = rng.random::<f64>() < params.v;
    if history.len() <= space.dim() || explore {
        return Ok(Proposal::complete(
            space.sample_uniform(rng),
            Branch::BoRandom,
        ));
    }
    let config = propose_tpe(space.domain(), &history.observations()?, &params.tpe, rng)?;
    Ok(Proposal::complete(config, Branch::BoTpe))
}

fn compose_parts<R: Rng + ?Sized>(
    space: &GroupedConfigSpace,
    mut parts: BTreeMap<GroupId, Configuration>,
    rng: &mut R,
) -> Result<Configuration, SchedError> {
    parts.insert(
        GroupId::Merge,
        space.sample_group_uniform(GroupId::Merge, rng)?,
    );
    Ok(space.compose(parts.iter().map(|(g, c)| (*g, c)))?)
}

fn groups_ready(history: &History, space: &GroupedConfigSpace) -> Result<bool, SchedError> {
    for g in space.subnets() {
        if history.eligible(space, g).len() <= space.group_dim(g)? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn bootstrapping(history: &History, params: &SchedulerParams, space: &GroupedConfigSpace) -> bool {
    // Transfer needs at least one complete parent; `min_complete` raises the
    // number of fresh models trained before any transfer happens.
    history.complete_count() < params.min_complete(space).max(1)
}

/// Copies each subnet from a uniformly chosen complete parent and samples
/// a fresh merge assignment.
fn random_transfer<R: Rng + ?Sized>(
    history: &History,
    space: &GroupedConfigSpace,
    rng: &mut R,
) -> Result<Proposal, SchedError> {
    let parents: Vec<_> = history.complete_parents().collect();
    let mut parts = BTreeMap::new();
    let mut frozen = BTreeMap::new();
    for g in space.subnets() {
        let parent = parents[rng.random_range(0..parents.len())];
        parts.insert(g, space.project(&parent.config, g));
        frozen.insert(g, parent.id);
    }
    let config = compose_parts(space, parts, rng)?;
    Ok(Proposal::with_frozen(
        config,
        frozen,
        Branch::DcExploreTransfer,
    ))
}

fn best_sources(
    history: &History,
    space: &GroupedConfigSpace,
    config: &Configuration,
    groups: impl IntoIterator<Item = GroupId>,
) -> Result<BTreeMap<GroupId, usize>, SchedError> {
    groups
        .into_iter()
        .map(|g| {
            let part = space.project(config, g);
            history
                .best_source(space, g, &part)
                .map(|id| (g, id))
                .ok_or(SchedError::NoSourceFor(g))
        })
        .collect()
}

/// Divide-and-conquer step.
///
/// 1. bootstrap: uniform complete until a complete parent exists (and
///    `min_complete` models are trained);
/// 2. with probability `v` explore: uniform complete (prob. `o`) or a random
///    recombination of complete parents;
/// 3. once the history exceeds `dim(C)`: full TPE complete (prob. `o`) or
///    focal TPE over previously trained subnet assignments;
/// 4. once every subnet has more than `dim(C_i)` trained assignments:
///    per-group TPE complete (prob. `o`) or per-group ratio argmax over the
///    trained assignments, transferred;
/// 5. otherwise uniform complete.
pub fn dcbo_step<R: Rng + ?Sized>(
    history: &History,
    space: &GroupedConfigSpace,
    params: &SchedulerParams,
    rng: &mut R,
) -> Result<Proposal, SchedError> {
    let u_explore = rng.random::<f64>();
    let u_complete = rng.random::<f64>();
    let complete = u_complete < params.o;

    if bootstrapping(history, params, space) {
        return Ok(Proposal::complete(
            space.sample_uniform(rng),
            Branch::DcBootstrap,
        ));
    }

    if u_explore < params.v {
        if complete {
            return Ok(Proposal::complete(
                space.sample_uniform(rng),
                Branch::DcExploreComplete,
            ));
        }
        return random_transfer(history, space, rng);
    }

    if history.len() > space.dim() {
        let obs = history.observations()?;
        if complete {
            let config = propose_tpe(space.domain(), &obs, &params.tpe, rng)?;
            return Ok(Proposal::complete(config, Branch::DcTpeComplete));
        }
        let restrictions: BTreeMap<_, _> = space
            .subnets()
            .map(|g| (g, history.eligible(space, g)))
            .collect();
        let config = propose_focal_tpe(space.domain(), &obs, &restrictions, &params.tpe, rng)?;
        let frozen = best_sources(history, space, &config, space.subnets())?;
        return Ok(Proposal::with_frozen(
            config,
            frozen,
            Branch::DcFocalTransfer,
        ));
    }

    if groups_ready(history, space)? {
        let mut parts = BTreeMap::new();
        if complete {
            for g in space.subnets() {
                let obs = history.group_observations(space, g)?;
                let part = propose_tpe(space.group_domain(g)?, &obs, &params.tpe, rng)?;
                parts.insert(g, part);
            }
            let config = compose_parts(space, parts, rng)?;
            return Ok(Proposal::complete(config, Branch::DcGroupTpeComplete));
        }
        let mut frozen = BTreeMap::new();
        for g in space.subnets() {
            let obs = history.group_observations(space, g)?;
            let mut allowed = history.eligible(space, g);
            let pick = argmax_allowed(space.group_domain(g)?, &obs, &allowed, &params.tpe)?;
            let part = allowed.swap_remove(pick);
            let source = history
                .best_source(space, g, &part)
                .ok_or(SchedError::NoSourceFor(g))?;
            frozen.insert(g, source);
            parts.insert(g, part);
        }
        let config = compose_parts(space, parts, rng)?;
        return Ok(Proposal::with_frozen(
            config,
            frozen,
            Branch::DcGroupFocalTransfer,
        ));
    }

    Ok(Proposal::complete(
        space.sample_uniform(rng),
        Branch::DcFallback,
    ))
}

/// Subnetwork-adaptive step. Subnet `i` is transferred when `p_i < r()`, so
/// low-importance inputs are usually reused and important ones retrained.
pub fn sabo_step<R: Rng + ?Sized>(
    history: &History,
    space: &GroupedConfigSpace,
    params: &SchedulerParams,
    importance: &ImportanceVector,
    rng: &mut R,
) -> Result<Proposal, SchedError> {
    if importance.len() != space.group_count() {
        return Err(SchedError::InvalidParams(format!(
            "importance has {} entries for {} subnets",
            importance.len(),
            space.group_count()
        )));
    }
    let u_explore = rng.random::<f64>();
    let u_complete = rng.random::<f64>();

    if bootstrapping(history, params, space) {
        return Ok(Proposal::complete(
            space.sample_uniform(rng),
            Branch::SaBootstrap,
        ));
    }
    if u_explore < params.v && u_complete < params.o {
        return Ok(Proposal::complete(
            space.sample_uniform(rng),
            Branch::SaExplore,
        ));
    }

    if history.len() <= space.dim() {
        let mut parts = BTreeMap::new();
        let mut frozen = BTreeMap::new();
        for g in space.subnets() {
            let i = g.subnet_index().expect("subnet");
            if importance.get(i) < rng.random::<f64>() {
                let trainers: Vec<_> = history.trainers(g).collect();
                let source = trainers[rng.random_range(0..trainers.len())];
                parts.insert(g, space.project(&source.config, g));
                frozen.insert(g, source.id);
            } else {
                parts.insert(g, space.sample_group_uniform(g, rng)?);
            }
        }
        let config = compose_parts(space, parts, rng)?;
        return Ok(Proposal::with_frozen(config, frozen, Branch::SaPartial));
    }

    let mut restrictions = BTreeMap::new();
    for g in space.subnets() {
        let i = g.subnet_index().expect("subnet");
        if importance.get(i) < rng.random::<f64>() {
            restrictions.insert(g, history.eligible(space, g));
        }
    }
    let obs = history.observations()?;
    let config = propose_focal_tpe(space.domain(), &obs, &restrictions, &params.tpe, rng)?;
    let frozen = best_sources(history, space, &config, restrictions.keys().copied())?;
    Ok(Proposal::with_frozen(config, frozen, Branch::SaFocal))
}
