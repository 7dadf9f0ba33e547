//! Grouped hyperparameter spaces.
//!
//! A space is a flat list of parameter definitions, each tagged with the
//! subnetwork group it belongs to (or the merge group). Configurations are
//! name-keyed assignments; partial assignments over a single group use the
//! same type.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("group {0} owns no parameters")]
    EmptyGroup(GroupId),
    #[error("bad bounds for `{name}`: {reason}")]
    BadBounds { name: String, reason: String },
    #[error("parameter `{name}` refers to {group}, but the space has {group_count} subnet groups")]
    GroupOutOfRange {
        name: String,
        group: GroupId,
        group_count: usize,
    },
    #[error("space must contain at least one parameter")]
    NoParameters,
    #[error("group count must be positive")]
    ZeroGroups,
    #[error("unknown group {0}")]
    UnknownGroup(GroupId),
    #[error("no assignment supplied for group {0}")]
    MissingGroup(GroupId),
    #[error("parameter `{0}` assigned more than once")]
    OverlappingNames(String),
    #[error("missing value for `{0}`")]
    MissingValue(String),
    #[error("unexpected parameter `{0}`")]
    UnexpectedName(String),
    #[error("value for `{name}` is invalid: {reason}")]
    InvalidValue { name: String, reason: String },
    #[error("cannot parse group id `{0}`")]
    BadGroupId(String),
}

/// Which part of the model a parameter configures.
///
/// Subnet indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupId {
    Subnet(usize),
    Merge,
}

impl GroupId {
    pub fn subnet_index(self) -> Option<usize> {
        match self {
            GroupId::Subnet(i) => Some(i),
            GroupId::Merge => None,
        }
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupId::Subnet(i) => write!(f, "subnet-{i}"),
            GroupId::Merge => f.write_str("merge"),
        }
    }
}

impl FromStr for GroupId {
    type Err = SpaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("merge") {
            return Ok(GroupId::Merge);
        }
        let digits = t
            .strip_prefix("subnet-")
            .or_else(|| t.strip_prefix("subnet"))
            .unwrap_or(t);
        match digits.parse::<usize>() {
            Ok(i) if i >= 1 => Ok(GroupId::Subnet(i)),
            _ => Err(SpaceError::BadGroupId(s.to_string())),
        }
    }
}

impl Serialize for GroupId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GroupId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Index(usize),
            Name(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Index(0) => Err(serde::de::Error::custom("subnet indices start at 1")),
            Raw::Index(i) => Ok(GroupId::Subnet(i)),
            Raw::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParamKind {
    Continuous {
        lo: f64,
        hi: f64,
        #[serde(default)]
        log: bool,
    },
    Integer {
        lo: i64,
        hi: i64,
    },
    Categorical {
        choices: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterDef {
    pub name: String,
    pub group: GroupId,
    #[serde(flatten)]
    pub kind: ParamKind,
}

impl HyperparameterDef {
    pub fn continuous(name: &str, group: GroupId, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            group,
            kind: ParamKind::Continuous { lo, hi, log: false },
        }
    }

    pub fn log_continuous(name: &str, group: GroupId, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            group,
            kind: ParamKind::Continuous { lo, hi, log: true },
        }
    }

    pub fn integer(name: &str, group: GroupId, lo: i64, hi: i64) -> Self {
        Self {
            name: name.to_string(),
            group,
            kind: ParamKind::Integer { lo, hi },
        }
    }

    pub fn categorical(name: &str, group: GroupId, choices: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            group,
            kind: ParamKind::Categorical {
                choices: choices.iter().map(|c| c.to_string()).collect(),
            },
        }
    }

    fn check_bounds(&self) -> Result<(), SpaceError> {
        let bad = |reason: &str| SpaceError::BadBounds {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        match &self.kind {
            ParamKind::Continuous { lo, hi, log } => {
                if !lo.is_finite() || !hi.is_finite() {
                    return Err(bad("bounds must be finite"));
                }
                if lo >= hi {
                    return Err(bad("lo must be < hi"));
                }
                if *log && *lo <= 0.0 {
                    return Err(bad("log scale requires lo > 0"));
                }
            }
            ParamKind::Integer { lo, hi } => {
                if lo > hi {
                    return Err(bad("lo must be <= hi"));
                }
            }
            ParamKind::Categorical { choices } => {
                if choices.is_empty() {
                    return Err(bad("at least one choice required"));
                }
                let distinct: BTreeSet<_> = choices.iter().collect();
                if distinct.len() != choices.len() {
                    return Err(bad("choices must be distinct"));
                }
            }
        }
        Ok(())
    }

    /// Bounds of this parameter in encoded coordinates.
    pub fn dim(&self) -> DimKind {
        match &self.kind {
            ParamKind::Continuous { lo, hi, log: false } => DimKind::Real { lo: *lo, hi: *hi },
            ParamKind::Continuous { lo, hi, log: true } => DimKind::Real {
                lo: lo.log10(),
                hi: hi.log10(),
            },
            ParamKind::Integer { lo, hi } => DimKind::Integer {
                lo: *lo as f64,
                hi: *hi as f64,
            },
            ParamKind::Categorical { choices } => DimKind::Categorical { n: choices.len() },
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamValue {
        match &self.kind {
            ParamKind::Continuous { lo, hi, log: false } => {
                ParamValue::Float(rng.random_range(*lo..=*hi))
            }
            ParamKind::Continuous { lo, hi, log: true } => {
                let e = rng.random_range(lo.log10()..=hi.log10());
                ParamValue::Float(10f64.powf(e).clamp(*lo, *hi))
            }
            ParamKind::Integer { lo, hi } => ParamValue::Int(rng.random_range(*lo..=*hi)),
            ParamKind::Categorical { choices } => {
                ParamValue::Choice(choices[rng.random_range(0..choices.len())].clone())
            }
        }
    }

    pub fn validate(&self, value: &ParamValue) -> Result<(), SpaceError> {
        let invalid = |reason: String| SpaceError::InvalidValue {
            name: self.name.clone(),
            reason,
        };
        match (&self.kind, value) {
            (ParamKind::Continuous { lo, hi, .. }, ParamValue::Float(x)) => {
                if !(lo <= x && x <= hi) {
                    return Err(invalid(format!("{x} outside [{lo}, {hi}]")));
                }
            }
            (ParamKind::Integer { lo, hi }, ParamValue::Int(x)) => {
                if !(lo <= x && x <= hi) {
                    return Err(invalid(format!("{x} outside [{lo}, {hi}]")));
                }
            }
            (ParamKind::Categorical { choices }, ParamValue::Choice(c)) => {
                if !choices.contains(c) {
                    return Err(invalid(format!("`{c}` is not a listed choice")));
                }
            }
            (_, v) => return Err(invalid(format!("wrong value type {v:?}"))),
        }
        Ok(())
    }

    pub fn encode(&self, value: &ParamValue) -> f64 {
        match (&self.kind, value) {
            (ParamKind::Continuous { log: true, .. }, ParamValue::Float(x)) => x.log10(),
            (ParamKind::Continuous { .. }, ParamValue::Float(x)) => *x,
            (ParamKind::Integer { .. }, ParamValue::Int(x)) => *x as f64,
            (ParamKind::Categorical { choices }, ParamValue::Choice(c)) => choices
                .iter()
                .position(|x| x == c)
                .map(|i| i as f64)
                .unwrap_or(f64::NAN),
            _ => f64::NAN,
        }
    }

    /// Maps an encoded coordinate back to a valid value, clamping and rounding.
    pub fn decode(&self, x: f64) -> ParamValue {
        match &self.kind {
            ParamKind::Continuous { lo, hi, log } => {
                let v = if *log { 10f64.powf(x) } else { x };
                ParamValue::Float(v.clamp(*lo, *hi))
            }
            ParamKind::Integer { lo, hi } => ParamValue::Int((x.round() as i64).clamp(*lo, *hi)),
            ParamKind::Categorical { choices } => {
                let i = (x.round().max(0.0) as usize).min(choices.len() - 1);
                ParamValue::Choice(choices[i].clone())
            }
        }
    }
}

/// Encoded-coordinate description of one parameter, as seen by density models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DimKind {
    Real { lo: f64, hi: f64 },
    Integer { lo: f64, hi: f64 },
    Categorical { n: usize },
}

impl DimKind {
    /// Width of the encoded range; used for uniform densities and unit scaling.
    pub fn span(&self) -> f64 {
        match *self {
            DimKind::Real { lo, hi } => hi - lo,
            DimKind::Integer { lo, hi } => hi - lo + 1.0,
            DimKind::Categorical { n } => n as f64,
        }
    }

    /// Maps an encoded coordinate into [0, 1].
    pub fn unit(&self, x: f64) -> f64 {
        match *self {
            DimKind::Real { lo, hi } | DimKind::Integer { lo, hi } if hi > lo => {
                (x - lo) / (hi - lo)
            }
            DimKind::Categorical { n } if n > 1 => x / (n as f64 - 1.0),
            _ => 0.5,
        }
    }

    /// Ratio of unit-coordinate distance to encoded distance.
    pub fn unit_scale(&self) -> f64 {
        match *self {
            DimKind::Real { lo, hi } | DimKind::Integer { lo, hi } if hi > lo => 1.0 / (hi - lo),
            DimKind::Categorical { n } if n > 1 => 1.0 / (n as f64 - 1.0),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Choice(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(x) => write!(f, "{x}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Choice(c) => f.write_str(c),
        }
    }
}

/// Name-keyed parameter assignment. Full configurations and per-group
/// partial assignments share this type.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(pub BTreeMap<String, ParamValue>);

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.0.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ParamValue) -> Option<ParamValue> {
        self.0.insert(name.into(), value)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamValue)> {
        self.0.iter()
    }

    /// Stable hex digest of the assignment, used to tie trained states to the
    /// configuration they were trained on.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_vec(self).expect("configuration serializes");
        hex::encode(&Sha256::digest(&canonical)[..8])
    }
}

impl FromIterator<(String, ParamValue)> for Configuration {
    fn from_iter<T: IntoIterator<Item = (String, ParamValue)>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// An ordered list of parameter definitions: the full space or one group of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    defs: Vec<HyperparameterDef>,
}

impl Domain {
    pub fn new(defs: Vec<HyperparameterDef>) -> Self {
        Self { defs }
    }

    pub fn defs(&self) -> &[HyperparameterDef] {
        &self.defs
    }

    pub fn dim(&self) -> usize {
        self.defs.len()
    }

    pub fn dims(&self) -> Vec<DimKind> {
        self.defs.iter().map(HyperparameterDef::dim).collect()
    }

    /// Positions (in encoding order) of the parameters belonging to `group`.
    pub fn indices_of(&self, group: GroupId) -> Vec<usize> {
        self.defs
            .iter()
            .enumerate()
            .filter(|(_, d)| d.group == group)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn groups(&self) -> BTreeSet<GroupId> {
        self.defs.iter().map(|d| d.group).collect()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        self.defs
            .iter()
            .map(|d| (d.name.clone(), d.sample(rng)))
            .collect()
    }

    pub fn validate(&self, config: &Configuration) -> Result<(), SpaceError> {
        for def in &self.defs {
            let value = config
                .get(&def.name)
                .ok_or_else(|| SpaceError::MissingValue(def.name.clone()))?;
            def.validate(value)?;
        }
        if config.len() != self.defs.len() {
            let known: BTreeSet<&str> = self.defs.iter().map(|d| d.name.as_str()).collect();
            if let Some(extra) = config.0.keys().find(|k| !known.contains(k.as_str())) {
                return Err(SpaceError::UnexpectedName(extra.clone()));
            }
        }
        Ok(())
    }

    /// Order-stable numeric encoding; `config` must cover every parameter.
    pub fn encode(&self, config: &Configuration) -> Vec<f64> {
        self.defs
            .iter()
            .map(|d| config.get(&d.name).map_or(f64::NAN, |v| d.encode(v)))
            .collect()
    }

    pub fn decode(&self, x: &[f64]) -> Configuration {
        debug_assert_eq!(x.len(), self.defs.len());
        self.defs
            .iter()
            .zip(x)
            .map(|(d, &v)| (d.name.clone(), d.decode(v)))
            .collect()
    }

    pub fn project(&self, config: &Configuration, group: GroupId) -> Configuration {
        self.defs
            .iter()
            .filter(|d| d.group == group)
            .filter_map(|d| config.get(&d.name).map(|v| (d.name.clone(), v.clone())))
            .collect()
    }

    pub fn restrict(&self, group: GroupId) -> Domain {
        Domain::new(
            self.defs
                .iter()
                .filter(|d| d.group == group)
                .cloned()
                .collect(),
        )
    }
}

/// A hyperparameter space partitioned into subnet groups `1..=I` plus a merge group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedConfigSpace {
    domain: Domain,
    group_count: usize,
    group_domains: BTreeMap<GroupId, Domain>,
}

impl GroupedConfigSpace {
    pub fn build(defs: Vec<HyperparameterDef>, group_count: usize) -> Result<Self, SpaceError> {
        if group_count == 0 {
            return Err(SpaceError::ZeroGroups);
        }
        if defs.is_empty() {
            return Err(SpaceError::NoParameters);
        }
        let mut names = BTreeSet::new();
        for def in &defs {
            if !names.insert(def.name.as_str()) {
                return Err(SpaceError::DuplicateName(def.name.clone()));
            }
            def.check_bounds()?;
            if let GroupId::Subnet(i) = def.group {
                if i == 0 || i > group_count {
                    return Err(SpaceError::GroupOutOfRange {
                        name: def.name.clone(),
                        group: def.group,
                        group_count,
                    });
                }
            }
        }
        let domain = Domain::new(defs);
        let mut group_domains = BTreeMap::new();
        for group in all_groups(group_count) {
            let sub = domain.restrict(group);
            if sub.dim() == 0 {
                return Err(SpaceError::EmptyGroup(group));
            }
            group_domains.insert(group, sub);
        }
        Ok(Self {
            domain,
            group_count,
            group_domains,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn defs(&self) -> &[HyperparameterDef] {
        self.domain.defs()
    }

    /// Number of subnet groups (I).
    pub fn group_count(&self) -> usize {
        self.group_count
    }

    /// Total parameter count N = dim(C).
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn group_dim(&self, group: GroupId) -> Result<usize, SpaceError> {
        self.group_domain(group).map(Domain::dim)
    }

    pub fn group_domain(&self, group: GroupId) -> Result<&Domain, SpaceError> {
        self.group_domains
            .get(&group)
            .ok_or(SpaceError::UnknownGroup(group))
    }

    /// Subnet groups in index order, followed by the merge group.
    pub fn groups(&self) -> impl Iterator<Item = GroupId> {
        all_groups(self.group_count)
    }

    pub fn subnets(&self) -> impl Iterator<Item = GroupId> {
        (1..=self.group_count).map(GroupId::Subnet)
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        self.domain.sample_uniform(rng)
    }

    pub fn sample_group_uniform<R: Rng + ?Sized>(
        &self,
        group: GroupId,
        rng: &mut R,
    ) -> Result<Configuration, SpaceError> {
        Ok(self.group_domain(group)?.sample_uniform(rng))
    }

    pub fn validate(&self, config: &Configuration) -> Result<(), SpaceError> {
        self.domain.validate(config)
    }

    pub fn project(&self, config: &Configuration, group: GroupId) -> Configuration {
        self.domain.project(config, group)
    }

    /// Splits a configuration into one partial assignment per group.
    pub fn project_all(&self, config: &Configuration) -> BTreeMap<GroupId, Configuration> {
        self.groups()
            .map(|g| (g, self.project(config, g)))
            .collect()
    }

    /// Unions per-group partial assignments into a full configuration.
    pub fn compose<'a, I>(&self, parts: I) -> Result<Configuration, SpaceError>
    where
        I: IntoIterator<Item = (GroupId, &'a Configuration)>,
    {
        let mut seen = BTreeSet::new();
        let mut out = Configuration::new();
        for (group, part) in parts {
            let domain = self.group_domain(group)?;
            for (name, value) in part.iter() {
                let def = domain
                    .defs()
                    .iter()
                    .find(|d| &d.name == name)
                    .ok_or_else(|| SpaceError::UnexpectedName(name.clone()))?;
                def.validate(value)?;
                if out.insert(name.clone(), value.clone()).is_some() {
                    return Err(SpaceError::OverlappingNames(name.clone()));
                }
            }
            seen.insert(group);
        }
        if let Some(missing) = self.groups().find(|g| !seen.contains(g)) {
            return Err(SpaceError::MissingGroup(missing));
        }
        self.validate(&out)?;
        Ok(out)
    }

    pub fn encode(&self, config: &Configuration) -> Vec<f64> {
        self.domain.encode(config)
    }

    pub fn decode(&self, x: &[f64]) -> Configuration {
        self.domain.decode(x)
    }
}

fn all_groups(group_count: usize) -> impl Iterator<Item = GroupId> {
    (1..=group_count)
        .map(GroupId::Subnet)
        .chain(std::iter::once(GroupId::Merge))
}
