//! Seeded synthetic multi-subnetwork objectives.
//!
//! Each subnet group and the merge group get a smooth quality landscape
//! `q: encoded assignment -> [0, 1]` built from Gaussian bumps. Training a
//! group from scratch reaches its landscape value; a frozen group keeps the
//! quality of the state it was transferred from. The merge loss is
//! `1 - q_m * sum_i w_i t_i`, each subnet head reports `1 - t_i`, and the cost
//! model charges frozen groups (and the merge network of a transfer model) at
//! `transfer_ratio` of their fresh-training cost.

use crate::space::{Configuration, DimKind, GroupId, GroupedConfigSpace, HyperparameterDef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("surrogate expects {spec} subnet groups, space has {space}")]
    GroupCountMismatch { spec: usize, space: usize },
    #[error("frozen state for {0} was trained on a different assignment")]
    HashMismatch(GroupId),
    #[error("{0} cannot be frozen")]
    NotFreezable(GroupId),
    #[error("invalid surrogate spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateSpec {
    pub group_count: usize,
    /// Contribution of each subnet to the merge output; zero marks a noise input.
    pub signal_weights: Vec<f64>,
    pub landscape_seed: u64,
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_components")]
    pub landscape_components: usize,
    /// Scale each head loss by its input's relative signal weight, so that a
    /// subnet fed pure noise cannot predict the target on its own.
    #[serde(default)]
    pub head_loss_scaling: bool,
}

fn default_noise_sigma() -> f64 {
    0.02
}

fn default_components() -> usize {
    8
}

impl SurrogateSpec {
    pub fn equal_weights(group_count: usize, landscape_seed: u64) -> Self {
        Self {
            group_count,
            signal_weights: vec![1.0; group_count],
            landscape_seed,
            noise_sigma: default_noise_sigma(),
            landscape_components: default_components(),
            head_loss_scaling: false,
        }
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        let bad = |m: &str| Err(SurrogateError::InvalidSpec(m.to_string()));
        if self.group_count == 0 {
            return bad("group_count must be positive");
        }
        if self.signal_weights.len() != self.group_count {
            return bad("signal_weights must have one entry per subnet group");
        }
        if self
            .signal_weights
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return bad("signal_weights must be finite and nonnegative");
        }
        if !self.signal_weights.iter().any(|w| *w > 0.0) {
            return bad("at least one signal weight must be positive");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be >= 0");
        }
        if self.landscape_components == 0 {
            return bad("landscape_components must be >= 1");
        }
        Ok(())
    }

    /// Signal weights normalized to sum to one.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let total: f64 = self.signal_weights.iter().sum();
        self.signal_weights.iter().map(|w| w / total).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    /// Cost of fresh training per unit of group size.
    pub base_complete_cost: f64,
    /// Cost of a frozen (transferred) unit relative to fresh training.
    pub transfer_ratio: f64,
    /// Half-width of the multiplicative uniform jitter around 1.
    pub epoch_jitter: f64,
    /// Parameters whose value scales the size (and thus cost) of their group.
    pub size_params: Vec<String>,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            base_complete_cost: 100.0,
            transfer_ratio: 0.39,
            epoch_jitter: 0.1,
            size_params: Vec::new(),
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        let bad = |m: &str| Err(SurrogateError::InvalidSpec(m.to_string()));
        if !(self.base_complete_cost.is_finite() && self.base_complete_cost > 0.0) {
            return bad("base_complete_cost must be > 0");
        }
        if !(self.transfer_ratio > 0.0 && self.transfer_ratio < 1.0) {
            return bad("transfer_ratio must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.epoch_jitter) {
            return bad("epoch_jitter must lie in [0, 1)");
        }
        Ok(())
    }

    /// Size of one group: one plus the unit-scaled value of each size parameter.
    pub fn size(&self, space: &GroupedConfigSpace, group: GroupId, config: &Configuration) -> f64 {
        1.0 + space
            .defs()
            .iter()
            .filter(|d| d.group == group && self.size_params.contains(&d.name))
            .filter_map(|d| config.get(&d.name).map(|v| d.dim().unit(d.encode(v))))
            .sum::<f64>()
    }

    /// Per-group cost in units of `base_complete_cost`, before jitter.
    pub fn cost_weights(
        &self,
        space: &GroupedConfigSpace,
        config: &Configuration,
        frozen: &BTreeSet<GroupId>,
    ) -> BTreeMap<GroupId, f64> {
        let transfer = !frozen.is_empty();
        space
            .groups()
            .map(|g| {
                let size = self.size(space, g, config);
                let discounted = frozen.contains(&g) || (transfer && g == GroupId::Merge);
                let w = if discounted {
                    self.transfer_ratio * size
                } else {
                    size
                };
                (g, w)
            })
            .collect()
    }

    /// Expected cost of a complete trial for a uniformly sampled configuration.
    pub fn expected_complete_cost(&self, space: &GroupedConfigSpace) -> f64 {
        let units: f64 = space
            .defs()
            .iter()
            .filter(|d| self.size_params.contains(&d.name))
            .count() as f64;
        self.base_complete_cost * (space.groups().count() as f64 + 0.5 * units)
    }
}

/// Trained state of one group: the quality it reached and what it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityState {
    pub group: GroupId,
    pub quality: f64,
    pub trained_config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub merge_loss: f64,
    pub group_losses: Vec<f64>,
    pub states: BTreeMap<GroupId, QualityState>,
    pub cost: f64,
    pub epochs_equivalent: f64,
}

/// Something the schedulers can train: fresh, or with some subnets frozen.
pub trait Objective {
    fn eval_complete<R: Rng + ?Sized>(&self, config: &Configuration, rng: &mut R) -> Outcome;

    fn eval_transfer<R: Rng + ?Sized>(
        &self,
        config: &Configuration,
        frozen: &BTreeMap<GroupId, QualityState>,
        rng: &mut R,
    ) -> Result<Outcome, SurrogateError>;

    /// Lower bound on the cost of any complete trial.
    fn min_complete_cost(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
struct Bump {
    center: Vec<f64>,
    width: f64,
    amplitude: f64,
}

const SQUASH_GAIN: f64 = 3.0;

/// Smooth quality landscape over one group's encoded coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    dims: Vec<DimKind>,
    bumps: Vec<Bump>,
}

impl Landscape {
    fn generate(dims: Vec<DimKind>, components: usize, rng: &mut ChaCha8Rng) -> Self {
        let d = dims.len() as f64;
        let spread = (d / 3.0).sqrt();
        let bumps = (0..components)
            .map(|k| {
                let center = (0..dims.len())
                    .map(|_| rng.random_range(0.1..0.9))
                    .collect();
                let (width, amplitude) = if k == 0 {
                    (rng.random_range(0.4..0.55) * spread, 1.0)
                } else {
                    (
                        rng.random_range(0.1..0.25) * spread,
                        rng.random_range(0.15..0.5),
                    )
                };
                Bump {
                    center,
                    width,
                    amplitude,
                }
            })
            .collect();
        Self { dims, bumps }
    }

    fn unit(&self, x: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(x).map(|(d, &v)| d.unit(v)).collect()
    }

    fn raw(&self, u: &[f64]) -> f64 {
        self.bumps
            .iter()
            .map(|b| {
                let r2: f64 = b.center.iter().zip(u).map(|(c, x)| (x - c).powi(2)).sum();
                b.amplitude * (-r2 / (2.0 * b.width * b.width)).exp()
            })
            .sum()
    }

    /// Quality in [0, 1] at an encoded point.
    pub fn quality(&self, x: &[f64]) -> f64 {
        let raw = self.raw(&self.unit(x));
        (1.0 - (-SQUASH_GAIN * raw).exp()).clamp(0.0, 1.0)
    }

    /// Lipschitz constant of [`Self::quality`] with respect to Euclidean
    /// distance in encoded coordinates.
    pub fn lipschitz_bound(&self) -> f64 {
        let per_unit: f64 = self
            .bumps
            .iter()
            .map(|b| b.amplitude / (b.width * std::f64::consts::E.sqrt()))
            .sum();
        let scale = self
            .dims
            .iter()
            .map(DimKind::unit_scale)
            .fold(0.0, f64::max);
        SQUASH_GAIN * per_unit * scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateObjective {
    spec: SurrogateSpec,
    cost: CostModel,
    space: GroupedConfigSpace,
    weights: Vec<f64>,
    head_scale: Vec<f64>,
    landscapes: BTreeMap<GroupId, Landscape>,
}

/// Builds the deterministic objective for `spec` over `space`.
pub fn make_surrogate(
    spec: &SurrogateSpec,
    space: &GroupedConfigSpace,
    cost: &CostModel,
) -> Result<SurrogateObjective, SurrogateError> {
    spec.validate()?;
    cost.validate()?;
    if spec.group_count != space.group_count() {
        return Err(SurrogateError::GroupCountMismatch {
            spec: spec.group_count,
            space: space.group_count(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.landscape_seed);
    let landscapes = space
        .groups()
        .map(|g| {
            let dims = space.group_domain(g).expect("group exists").dims();
            (
                g,
                Landscape::generate(dims, spec.landscape_components, &mut rng),
            )
        })
        .collect();
    let weights = spec.normalized_weights();
    let max_w = weights.iter().copied().fold(0.0, f64::max);
    let head_scale = weights
        .iter()
        .map(|w| {
            if spec.head_loss_scaling {
                w / max_w
            } else {
                1.0
            }
        })
        .collect();
    Ok(SurrogateObjective {
        spec: spec.clone(),
        cost: cost.clone(),
        space: space.clone(),
        weights,
        head_scale,
        landscapes,
    })
}

/// Noiseless merge loss `1 - q_m * sum_i w_i t_i`.
pub fn merge_loss(merge_quality: f64, weights: &[f64], qualities: &[f64]) -> f64 {
    let signal: f64 = weights.iter().zip(qualities).map(|(w, t)| w * t).sum();
    1.0 - merge_quality * signal
}

impl SurrogateObjective {
    pub fn spec(&self) -> &SurrogateSpec {
        &self.spec
    }

    pub fn cost_model(&self) -> &CostModel {
        &self.cost
    }

    pub fn space(&self) -> &GroupedConfigSpace {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn landscape(&self, group: GroupId) -> Option<&Landscape> {
        self.landscapes.get(&group)
    }

    /// Landscape value of a group's assignment within `config`.
    pub fn group_quality(&self, group: GroupId, config: &Configuration) -> f64 {
        let domain = self.space.group_domain(group).expect("group exists");
        self.landscapes[&group].quality(&domain.encode(config))
    }

    /// Merge loss with every group freshly trained and no noise.
    pub fn noiseless_merge_loss(&self, config: &Configuration) -> f64 {
        let t: Vec<f64> = self
            .space
            .subnets()
            .map(|g| self.group_quality(g, config))
            .collect();
        merge_loss(
            self.group_quality(GroupId::Merge, config),
            &self.weights,
            &t,
        )
    }

    pub fn expected_complete_cost(&self) -> f64 {
        self.cost.expected_complete_cost(&self.space)
    }

    fn evaluate<R: Rng + ?Sized>(
        &self,
        config: &Configuration,
        frozen: &BTreeMap<GroupId, QualityState>,
        rng: &mut R,
    ) -> Outcome {
        let mut states = BTreeMap::new();
        let mut qualities = Vec::with_capacity(self.space.group_count());
        for g in self.space.subnets() {
            let state = match frozen.get(&g) {
                Some(s) => s.clone(),
                None => QualityState {
                    group: g,
                    quality: self.group_quality(g, config),
                    trained_config_hash: self.space.project(config, g).digest(),
                },
            };
            qualities.push(state.quality);
            states.insert(g, state);
        }
        let merge_q = self.group_quality(GroupId::Merge, config);
        states.insert(
            GroupId::Merge,
            QualityState {
                group: GroupId::Merge,
                quality: merge_q,
                trained_config_hash: self.space.project(config, GroupId::Merge).digest(),
            },
        );

        let sigma = self.spec.noise_sigma;
        let mut noise = || -> f64 {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        };
        let group_losses: Vec<f64> = qualities
            .iter()
            .zip(&self.head_scale)
            .map(|(t, s)| (1.0 - s * t + noise()).max(0.0))
            .collect();
        let merge_loss = (merge_loss(merge_q, &self.weights, &qualities) + noise()).max(0.0);

        let frozen_set: BTreeSet<GroupId> = frozen.keys().copied().collect();
        let units: f64 = self
            .cost
            .cost_weights(&self.space, config, &frozen_set)
            .values()
            .sum();
        let jitter = 1.0 + self.cost.epoch_jitter * rng.random_range(-1.0..=1.0);
        Outcome {
            merge_loss,
            group_losses,
            states,
            cost: self.cost.base_complete_cost * units * jitter,
            epochs_equivalent: units * jitter,
        }
    }
}

impl Objective for SurrogateObjective {
    fn eval_complete<R: Rng + ?Sized>(&self, config: &Configuration, rng: &mut R) -> Outcome {
        self.evaluate(config, &BTreeMap::new(), rng)
    }

    fn eval_transfer<R: Rng + ?Sized>(
        &self,
        config: &Configuration,
        frozen: &BTreeMap<GroupId, QualityState>,
        rng: &mut R,
    ) -> Result<Outcome, SurrogateError> {
        for (g, state) in frozen {
            if g.subnet_index()
                .is_none_or(|i| i > self.space.group_count())
                || state.group != *g
            {
                return Err(SurrogateError::NotFreezable(*g));
            }
            if state.trained_config_hash != self.space.project(config, *g).digest() {
                return Err(SurrogateError::HashMismatch(*g));
            }
        }
        Ok(self.evaluate(config, frozen, rng))
    }

    fn min_complete_cost(&self) -> f64 {
        let groups = self.space.groups().count() as f64;
        self.cost.base_complete_cost * (1.0 - self.cost.epoch_jitter) * groups
    }
}

/// A named benchmark instance.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub name: &'static str,
    pub space: GroupedConfigSpace,
    pub spec: SurrogateSpec,
    pub cost: CostModel,
}

impl Benchmark {
    pub fn objective(&self) -> SurrogateObjective {
        make_surrogate(&self.spec, &self.space, &self.cost).expect("shipped benchmarks are valid")
    }
}

fn cnn_like_space(group_count: usize, per_group: usize) -> (GroupedConfigSpace, Vec<String>) {
    let mut defs = Vec::new();
    let mut sized = Vec::new();
    for i in 1..=group_count {
        let g = GroupId::Subnet(i);
        defs.push(HyperparameterDef::integer(&format!("s{i}_layers"), g, 1, 5));
        sized.push(format!("s{i}_layers"));
        defs.push(HyperparameterDef::continuous(
            &format!("s{i}_dropout"),
            g,
            0.0,
            0.5,
        ));
        if per_group >= 3 {
            defs.push(HyperparameterDef::integer(
                &format!("s{i}_units"),
                g,
                16,
                256,
            ));
            sized.push(format!("s{i}_units"));
        }
    }
    defs.push(HyperparameterDef::integer("m_layers", GroupId::Merge, 1, 3));
    defs.push(HyperparameterDef::log_continuous(
        "m_lr",
        GroupId::Merge,
        1e-4,
        1e-1,
    ));
    defs.push(HyperparameterDef::categorical(
        "m_activation",
        GroupId::Merge,
        &["relu", "tanh", "elu"],
    ));
    let space = GroupedConfigSpace::build(defs, group_count).expect("static space is valid");
    (space, sized)
}

fn benchmark(
    name: &'static str,
    group_count: usize,
    per_group: usize,
    spec: SurrogateSpec,
) -> Benchmark {
    let (space, size_params) = cnn_like_space(group_count, per_group);
    Benchmark {
        name,
        space,
        spec,
        cost: CostModel {
            size_params,
            ..CostModel::default()
        },
    }
}

/// The shipped benchmark suite: `dc-3`, `dc-4`, `dc-9` (equal-weight inputs)
/// and `sa-noise` (two signal inputs, two pure-noise inputs).
pub fn standard_benchmarks() -> Vec<Benchmark> {
    vec![
        benchmark("dc-3", 3, 3, SurrogateSpec::equal_weights(3, 301)),
        benchmark("dc-4", 4, 3, SurrogateSpec::equal_weights(4, 401)),
        benchmark("dc-9", 9, 2, SurrogateSpec::equal_weights(9, 901)),
        benchmark(
            "sa-noise",
            4,
            3,
            SurrogateSpec {
                signal_weights: vec![0.5, 0.0, 0.5, 0.0],
                head_loss_scaling: true,
                ..SurrogateSpec::equal_weights(4, 402)
            },
        ),
    ]
}

pub fn find_benchmark(name: &str) -> Option<Benchmark> {
    standard_benchmarks().into_iter().find(|b| b.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dc4() -> Benchmark {
        find_benchmark("dc-4").unwrap()
    }

    #[test]
    fn group_count_must_match() {
        let b = dc4();
        let spec = SurrogateSpec::equal_weights(3, 1);
        assert_eq!(
            make_surrogate(&spec, &b.space, &b.cost),
            Err(SurrogateError::GroupCountMismatch { spec: 3, space: 4 })
        );
    }

    #[test]
    fn spec_validation() {
        let mut spec = SurrogateSpec::equal_weights(2, 1);
        spec.signal_weights = vec![0.0, 0.0];
        assert!(spec.validate().is_err());
        spec.signal_weights = vec![1.0, 0.0];
        spec.noise_sigma = -1.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn deterministic_construction() {
        let b = dc4();
        let a = b.objective();
        let c = b.objective();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let cfg = b.space.sample_uniform(&mut rng);
            assert_eq!(a.noiseless_merge_loss(&cfg), c.noiseless_merge_loss(&cfg));
            for g in b.space.groups() {
                assert_eq!(a.group_quality(g, &cfg), c.group_quality(g, &cfg));
            }
        }
    }

    #[test]
    fn qualities_are_squashed() {
        let b = dc4();
        let obj = b.objective();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let cfg = b.space.sample_uniform(&mut rng);
            for g in b.space.groups() {
                let q = obj.group_quality(g, &cfg);
                assert!((0.0..=1.0).contains(&q));
            }
        }
    }

    #[test]
    fn seed_changes_landscape() {
        let b = dc4();
        let a = b.objective();
        let mut spec = b.spec.clone();
        spec.landscape_seed += 1;
        let c = make_surrogate(&spec, &b.space, &b.cost).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let differs = (0..100).any(|_| {
            let cfg = b.space.sample_uniform(&mut rng);
            a.group_quality(GroupId::Subnet(1), &cfg) != c.group_quality(GroupId::Subnet(1), &cfg)
        });
        assert!(differs);
    }

    #[test]
    fn merge_loss_formula() {
        assert_eq!(merge_loss(1.0, &[1.0, 0.0], &[1.0, 0.3]), 0.0);
        assert!((merge_loss(0.5, &[0.5, 0.5], &[0.8, 0.6]) - (1.0 - 0.5 * 0.7)).abs() < 1e-15);
    }

    fn two_group() -> (GroupedConfigSpace, CostModel) {
        let defs = vec![
            HyperparameterDef::continuous("a", GroupId::Subnet(1), 0.0, 1.0),
            HyperparameterDef::integer("a_units", GroupId::Subnet(1), 1, 10),
            HyperparameterDef::continuous("b", GroupId::Subnet(2), 0.0, 1.0),
            HyperparameterDef::continuous("m", GroupId::Merge, 0.0, 1.0),
        ];
        let cost = CostModel {
            size_params: vec!["a_units".into()],
            ..CostModel::default()
        };
        (GroupedConfigSpace::build(defs, 2).unwrap(), cost)
    }

    #[test]
    fn noiseless_complete_outcome() {
        let (space, cost) = two_group();
        let spec = SurrogateSpec {
            signal_weights: vec![1.0, 0.0],
            noise_sigma: 0.0,
            ..SurrogateSpec::equal_weights(2, 5)
        };
        let obj = make_surrogate(&spec, &space, &cost).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = space.sample_uniform(&mut rng);
        let out = obj.eval_complete(&cfg, &mut rng);
        let t1 = obj.group_quality(GroupId::Subnet(1), &cfg);
        let t2 = obj.group_quality(GroupId::Subnet(2), &cfg);
        let qm = obj.group_quality(GroupId::Merge, &cfg);
        assert_eq!(out.group_losses, vec![1.0 - t1, 1.0 - t2]);
        assert_eq!(out.merge_loss, 1.0 - qm * t1);
        assert_eq!(out.states.len(), 3);
        assert_eq!(out.states[&GroupId::Subnet(1)].quality, t1);
    }

    #[test]
    fn head_loss_scaling_silences_noise_inputs() {
        let (space, cost) = two_group();
        let spec = SurrogateSpec {
            signal_weights: vec![1.0, 0.0],
            noise_sigma: 0.0,
            head_loss_scaling: true,
            ..SurrogateSpec::equal_weights(2, 5)
        };
        let obj = make_surrogate(&spec, &space, &cost).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = space.sample_uniform(&mut rng);
        let out = obj.eval_complete(&cfg, &mut rng);
        assert_eq!(out.group_losses[1], 1.0);
        assert_eq!(
            out.group_losses[0],
            1.0 - obj.group_quality(GroupId::Subnet(1), &cfg)
        );
    }

    #[test]
    fn cost_is_monotone_in_size_params() {
        let (space, cost) = two_group();
        let obj = make_surrogate(&SurrogateSpec::equal_weights(2, 5), &space, &cost).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut cfg = space.sample_uniform(&mut rng);
        let mut last = 0.0;
        for units in 1..=10 {
            cfg.insert("a_units", crate::space::ParamValue::Int(units));
            let c = obj
                .eval_complete(&cfg, &mut ChaCha8Rng::seed_from_u64(99))
                .cost;
            assert!(c > last);
            last = c;
        }
    }

    #[test]
    fn noise_sigma_is_respected() {
        let (space, cost) = two_group();
        let spec = SurrogateSpec {
            noise_sigma: 0.01,
            ..SurrogateSpec::equal_weights(2, 5)
        };
        let obj = make_surrogate(&spec, &space, &cost).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = space.sample_uniform(&mut rng);
        let xs: Vec<f64> = (0..1000)
            .map(|_| obj.eval_complete(&cfg, &mut rng).merge_loss)
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd =
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
        assert!((0.008..=0.012).contains(&sd), "sd {sd}");
    }

    #[test]
    fn transfer_keeps_frozen_quality() {
        let (space, cost) = two_group();
        let spec = SurrogateSpec {
            signal_weights: vec![0.5, 0.5],
            noise_sigma: 0.0,
            ..SurrogateSpec::equal_weights(2, 6)
        };
        let obj = make_surrogate(&spec, &space, &cost).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = space.sample_uniform(&mut rng);
        let frozen: BTreeMap<_, _> = [(GroupId::Subnet(1), 0.8), (GroupId::Subnet(2), 0.6)]
            .into_iter()
            .map(|(g, q)| {
                (
                    g,
                    QualityState {
                        group: g,
                        quality: q,
                        trained_config_hash: space.project(&cfg, g).digest(),
                    },
                )
            })
            .collect();
        let out = obj.eval_transfer(&cfg, &frozen, &mut rng).unwrap();
        let qm = obj.group_quality(GroupId::Merge, &cfg);
        assert!((out.merge_loss - (1.0 - qm * 0.7)).abs() < 1e-12);
        assert_eq!(out.states[&GroupId::Subnet(1)], frozen[&GroupId::Subnet(1)]);

        // Reproduces a complete trial's qualities when fed its own states.
        let complete = obj.eval_complete(&cfg, &mut rng);
        let own: BTreeMap<_, _> = complete
            .states
            .iter()
            .filter(|(g, _)| **g != GroupId::Merge)
            .map(|(g, s)| (*g, s.clone()))
            .collect();
        let again = obj.eval_transfer(&cfg, &own, &mut rng).unwrap();
        assert_eq!(again.group_losses, complete.group_losses);
        assert_eq!(again.merge_loss, complete.merge_loss);
    }

    #[test]
    fn transfer_rejects_mismatched_hash() {
        let (space, cost) = two_group();
        let obj = make_surrogate(&SurrogateSpec::equal_weights(2, 5), &space, &cost).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = space.sample_uniform(&mut rng);
        let other = space.sample_uniform(&mut rng);
        let frozen = BTreeMap::from([(
            GroupId::Subnet(2),
            QualityState {
                group: GroupId::Subnet(2),
                quality: 0.5,
                trained_config_hash: space.project(&other, GroupId::Subnet(2)).digest(),
            },
        )]);
        assert_eq!(
            obj.eval_transfer(&cfg, &frozen, &mut rng),
            Err(SurrogateError::HashMismatch(GroupId::Subnet(2)))
        );
    }

    #[test]
    fn noise_inputs_do_not_affect_merge_loss() {
        let b = find_benchmark("sa-noise").unwrap();
        let obj = b.objective();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let base = b.space.sample_uniform(&mut rng);
            let mut varied = base.clone();
            for g in [GroupId::Subnet(2), GroupId::Subnet(4)] {
                let part = b.space.sample_group_uniform(g, &mut rng).unwrap();
                for (k, v) in part.iter() {
                    varied.insert(k.clone(), v.clone());
                }
            }
            assert_eq!(
                obj.noiseless_merge_loss(&base),
                obj.noiseless_merge_loss(&varied)
            );
        }
    }

    #[test]
    fn landscapes_respect_lipschitz_bound() {
        let b = dc4();
        let obj = b.objective();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for g in b.space.groups() {
            let domain = b.space.group_domain(g).unwrap();
            let land = obj.landscape(g).unwrap();
            let bound = land.lipschitz_bound();
            for _ in 0..1000 {
                let x = domain.encode(&domain.sample_uniform(&mut rng));
                let y = domain.encode(&domain.sample_uniform(&mut rng));
                let dist = x
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let diff = (land.quality(&x) - land.quality(&y)).abs();
                assert!(
                    diff <= bound * dist + 1e-12,
                    "{g}: {diff} > {bound} * {dist}"
                );
            }
        }
    }

    #[test]
    fn shipped_benchmarks_shape() {
        let all = standard_benchmarks();
        let sa = all.iter().find(|b| b.name == "sa-noise").unwrap();
        assert_eq!(
            sa.spec.signal_weights.iter().filter(|w| **w == 0.0).count(),
            2
        );
        let dc9 = all.iter().find(|b| b.name == "dc-9").unwrap();
        assert_eq!(dc9.space.group_count(), 9);
        assert_eq!(dc9.space.groups().count(), 10);
    }
}
