//! Tree-structured Parzen estimator.
//!
//! Observations are split at the `alpha` quantile of their losses into a good
//! and a bad set. Each set is modeled with a product-kernel density over the
//! encoded configuration (Gaussian kernels for numeric dimensions, a smoothed
//! frequency kernel for categorical ones). Candidates are drawn from the good
//! density and the one maximizing `l(c) / g(c)` is proposed.
//!
//! Both densities are mixed with the uniform density over the encoded box at
//! weight `prior_weight` before the ratio is taken, which keeps `g` bounded
//! away from zero.

use crate::space::{Configuration, DimKind, Domain, GroupId, SpaceError};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TpeError {
    #[error("no losses to split")]
    EmptyInput,
    #[error("cannot fit a density to zero observations")]
    EmptyObservations,
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{have} observations available, {need} required")]
    InsufficientObservations { have: usize, need: usize },
    #[error("restriction for {0} lists no allowed assignments")]
    EmptyRestriction(GroupId),
    #[error("observation set has {configs} configurations but {losses} losses")]
    LengthMismatch { configs: usize, losses: usize },
    #[error("loss at index {0} is not finite")]
    NonFiniteLoss(usize),
    #[error("invalid TPE parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpeParams {
    /// Fraction of observations treated as good.
    pub alpha: f64,
    /// Number of candidates drawn from the good density per proposal.
    pub n_candidates: usize,
    /// Lower bound on every Gaussian bandwidth, in encoded units.
    pub bandwidth_floor: f64,
    /// Weight of the uniform component mixed into each density.
    pub prior_weight: f64,
}

impl Default for TpeParams {
    fn default() -> Self {
        Self {
            alpha: 0.15,
            n_candidates: 24,
            bandwidth_floor: 1e-3,
            prior_weight: 0.05,
        }
    }
}

impl TpeParams {
    pub fn validate(&self) -> Result<(), TpeError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(TpeError::InvalidParams("alpha must lie in (0, 1)".into()));
        }
        if self.n_candidates == 0 {
            return Err(TpeError::InvalidParams("n_candidates must be >= 1".into()));
        }
        if !(self.bandwidth_floor > 0.0 && self.bandwidth_floor.is_finite()) {
            return Err(TpeError::InvalidParams(
                "bandwidth_floor must be > 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.prior_weight) {
            return Err(TpeError::InvalidParams(
                "prior_weight must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Configurations (full or partial) paired with their losses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSet {
    configs: Vec<Configuration>,
    losses: Vec<f64>,
}

impl ObservationSet {
    pub fn new(configs: Vec<Configuration>, losses: Vec<f64>) -> Result<Self, TpeError> {
        if configs.len() != losses.len() {
            return Err(TpeError::LengthMismatch {
                configs: configs.len(),
                losses: losses.len(),
            });
        }
        if let Some(i) = losses.iter().position(|l| !l.is_finite()) {
            return Err(TpeError::NonFiniteLoss(i));
        }
        Ok(Self { configs, losses })
    }

    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }
}

/// Splits indices into the best `max(1, ceil(alpha * n))` losses and the rest.
///
/// Ties are broken toward the earlier index. Both returned sets are in
/// ascending index order.
pub fn split_by_quantile(losses: &[f64], alpha: f64) -> Result<(Vec<usize>, Vec<usize>), TpeError> {
    if losses.is_empty() {
        return Err(TpeError::EmptyInput);
    }
    let n = losses.len();
    let n_good = ((alpha * n as f64).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    // sort_by is stable, so equal losses keep index order.
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]));
    let mut good = order[..n_good].to_vec();
    let mut bad = order[n_good..].to_vec();
    good.sort_unstable();
    bad.sort_unstable();
    Ok((good, bad))
}

fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn ln_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Product-kernel Parzen density over encoded vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    dims: Vec<DimKind>,
    points: Vec<Vec<f64>>,
    bandwidths: Vec<f64>,
    prior_weight: f64,
}

impl KdeModel {
    pub fn fit(
        dims: &[DimKind],
        points: Vec<Vec<f64>>,
        params: &TpeParams,
    ) -> Result<Self, TpeError> {
        if points.is_empty() {
            return Err(TpeError::EmptyObservations);
        }
        if let Some(p) = points.iter().find(|p| p.len() != dims.len()) {
            return Err(TpeError::DimensionMismatch {
                expected: dims.len(),
                got: p.len(),
            });
        }
        let m = points.len() as f64;
        let scott = m.powf(-1.0 / (dims.len() as f64 + 4.0));
        let bandwidths = (0..dims.len())
            .map(|d| {
                let mean = points.iter().map(|p| p[d]).sum::<f64>() / m;
                let var = points.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / m;
                (var.sqrt() * scott).max(params.bandwidth_floor)
            })
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            points,
            bandwidths,
            prior_weight: params.prior_weight,
        })
    }

    pub fn dims(&self) -> &[DimKind] {
        &self.dims
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    fn ln_kernel(&self, d: usize, x: f64, center: f64) -> f64 {
        match self.dims[d] {
            DimKind::Real { .. } | DimKind::Integer { .. } => {
                let h = self.bandwidths[d];
                let z = (x - center) / h;
                -0.5 * z * z - h.ln() - LN_SQRT_2PI
            }
            DimKind::Categorical { n } => {
                let w = self.prior_weight;
                let same = if x == center { 1.0 - w } else { 0.0 };
                (same + w / n as f64).ln()
            }
        }
    }

    /// Natural log of the density restricted to the dimensions in `idx`.
    pub fn ln_marginal(&self, x: &[f64], idx: &[usize]) -> f64 {
        let terms = self.points.iter().map(|p| {
            idx.iter()
                .map(|&d| self.ln_kernel(d, x[d], p[d]))
                .sum::<f64>()
        });
        ln_sum_exp(terms) - (self.points.len() as f64).ln()
    }

    pub fn ln_density(&self, x: &[f64]) -> Result<f64, TpeError> {
        if x.len() != self.dims.len() {
            return Err(TpeError::DimensionMismatch {
                expected: self.dims.len(),
                got: x.len(),
            });
        }
        let all: Vec<usize> = (0..self.dims.len()).collect();
        Ok(self.ln_marginal(x, &all))
    }

    /// Mean over points of the product of per-dimension kernel values.
    pub fn density(&self, x: &[f64]) -> Result<f64, TpeError> {
        self.ln_density(x).map(f64::exp)
    }

    /// Draws from the kernel mixture: pick a point, perturb each dimension by
    /// its kernel, then clamp and round into the encoded bounds.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let center = &self.points[rng.random_range(0..self.points.len())];
        self.dims
            .iter()
            .enumerate()
            .map(|(d, dim)| match *dim {
                DimKind::Real { lo, hi } => {
                    let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
                    (center[d] + z * self.bandwidths[d]).clamp(lo, hi)
                }
                DimKind::Integer { lo, hi } => {
                    let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
                    (center[d] + z * self.bandwidths[d]).round().clamp(lo, hi)
                }
                DimKind::Categorical { n } => {
                    if rng.random::<f64>() < self.prior_weight {
                        rng.random_range(0..n) as f64
                    } else {
                        center[d]
                    }
                }
            })
            .collect()
    }
}

fn ln_uniform(dims: &[DimKind], idx: impl IntoIterator<Item = usize>) -> f64 {
    idx.into_iter()
        .map(|d| {
            let span = dims[d].span();
            if span > 0.0 {
                -span.ln()
            } else {
                0.0
            }
        })
        .sum()
}

fn sample_uniform_encoded<R: Rng + ?Sized>(dims: &[DimKind], rng: &mut R) -> Vec<f64> {
    dims.iter()
        .map(|dim| match *dim {
            DimKind::Real { lo, hi } => rng.random_range(lo..=hi),
            DimKind::Integer { lo, hi } => rng.random_range(lo as i64..=hi as i64) as f64,
            DimKind::Categorical { n } => rng.random_range(0..n) as f64,
        })
        .collect()
}

/// Good/bad density pair fitted to one observation set.
#[derive(Debug, Clone)]
pub struct TpeModel {
    dims: Vec<DimKind>,
    good: KdeModel,
    bad: Option<KdeModel>,
    prior_weight: f64,
    ln_uniform: f64,
}

impl TpeModel {
    pub fn fit(
        domain: &Domain,
        obs: &ObservationSet,
        params: &TpeParams,
    ) -> Result<Self, TpeError> {
        params.validate()?;
        let (good_idx, bad_idx) = split_by_quantile(obs.losses(), params.alpha)?;
        let dims = domain.dims();
        let encode = |idx: &[usize]| -> Vec<Vec<f64>> {
            idx.iter()
                .map(|&i| domain.encode(&obs.configs()[i]))
                .collect()
        };
        let good = KdeModel::fit(&dims, encode(&good_idx), params)?;
        let bad = if bad_idx.is_empty() {
            None
        } else {
            Some(KdeModel::fit(&dims, encode(&bad_idx), params)?)
        };
        let ln_uniform = ln_uniform(&dims, 0..dims.len());
        Ok(Self {
            dims,
            good,
            bad,
            prior_weight: params.prior_weight,
            ln_uniform,
        })
    }

    pub fn good(&self) -> &KdeModel {
        &self.good
    }

    pub fn bad(&self) -> Option<&KdeModel> {
        self.bad.as_ref()
    }

    fn mix(&self, ln_kde: f64, ln_u: f64) -> f64 {
        let w = self.prior_weight;
        ln_add_exp((1.0 - w).ln() + ln_kde, w.ln() + ln_u)
    }

    /// Log of the prior-mixed good density.
    pub fn ln_good(&self, x: &[f64]) -> f64 {
        let all: Vec<usize> = (0..self.dims.len()).collect();
        self.mix(self.good.ln_marginal(x, &all), self.ln_uniform)
    }

    /// Log of the prior-mixed bad density (uniform when there are no bad points).
    pub fn ln_bad(&self, x: &[f64]) -> f64 {
        match &self.bad {
            Some(bad) => {
                let all: Vec<usize> = (0..self.dims.len()).collect();
                self.mix(bad.ln_marginal(x, &all), self.ln_uniform)
            }
            None => self.ln_uniform,
        }
    }

    /// `ln(l(x) / g(x))`, the acquisition score.
    pub fn ln_ratio(&self, x: &[f64]) -> f64 {
        let r = self.ln_good(x) - self.ln_bad(x);
        if r.is_nan() {
            f64::NEG_INFINITY
        } else {
            r
        }
    }

    /// Prior-mixed good density restricted to the dimensions in `idx`.
    pub fn ln_good_marginal(&self, x: &[f64], idx: &[usize]) -> f64 {
        self.mix(
            self.good.ln_marginal(x, idx),
            ln_uniform(&self.dims, idx.iter().copied()),
        )
    }

    /// One draw from the prior-mixed good density, in encoded coordinates.
    pub fn sample_candidate<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        if rng.random::<f64>() < self.prior_weight {
            sample_uniform_encoded(&self.dims, rng)
        } else {
            self.good.sample(rng)
        }
    }

    /// Index of the candidate with the highest ratio; the first one wins ties.
    pub fn best_of(&self, candidates: &[Vec<f64>]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, x) in candidates.iter().enumerate() {
            let score = self.ln_ratio(x);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        best.map(|(i, _)| i)
    }
}

fn require_observations(domain: &Domain, obs: &ObservationSet) -> Result<(), TpeError> {
    let need = domain.dim() + 1;
    if obs.len() < need {
        return Err(TpeError::InsufficientObservations {
            have: obs.len(),
            need,
        });
    }
    Ok(())
}

/// Proposes the next configuration by maximizing `l/g` over candidates drawn from `l`.
pub fn propose_tpe<R: Rng + ?Sized>(
    domain: &Domain,
    obs: &ObservationSet,
    params: &TpeParams,
    rng: &mut R,
) -> Result<Configuration, TpeError> {
    require_observations(domain, obs)?;
    let model = TpeModel::fit(domain, obs, params)?;
    let candidates: Vec<Configuration> = (0..params.n_candidates)
        .map(|_| domain.decode(&model.sample_candidate(rng)))
        .collect();
    Ok(select_best(&model, domain, candidates))
}

fn select_best(model: &TpeModel, domain: &Domain, candidates: Vec<Configuration>) -> Configuration {
    let encoded: Vec<Vec<f64>> = candidates.iter().map(|c| domain.encode(c)).collect();
    let best = model.best_of(&encoded).expect("at least one candidate");
    candidates.into_iter().nth(best).expect("index in range")
}

/// Like [`propose_tpe`], but scores the given candidates instead of
/// sampling them from the good density.
pub fn propose_from_candidates(
    domain: &Domain,
    obs: &ObservationSet,
    candidates: Vec<Configuration>,
    params: &TpeParams,
) -> Result<Configuration, TpeError> {
    require_observations(domain, obs)?;
    if candidates.is_empty() {
        return Err(TpeError::EmptyInput);
    }
    let model = TpeModel::fit(domain, obs, params)?;
    Ok(select_best(&model, domain, candidates))
}

struct RestrictedGroup<'a> {
    names: Vec<&'a str>,
    allowed: &'a [Configuration],
    cumulative: Vec<f64>,
}

impl RestrictedGroup<'_> {
    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> &Configuration {
        let u = rng.random::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
        let j = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.allowed.len() - 1);
        &self.allowed[j]
    }
}

/// TPE proposal where each restricted group must take one of its allowed
/// partial assignments verbatim. Allowed entries are drawn in proportion to
/// the good density of their coordinates; unrestricted groups are sampled
/// from the good density as in [`propose_tpe`].
pub fn propose_focal_tpe<R: Rng + ?Sized>(
    domain: &Domain,
    obs: &ObservationSet,
    restrictions: &BTreeMap<GroupId, Vec<Configuration>>,
    params: &TpeParams,
    rng: &mut R,
) -> Result<Configuration, TpeError> {
    require_observations(domain, obs)?;
    for (group, allowed) in restrictions {
        if allowed.is_empty() {
            return Err(TpeError::EmptyRestriction(*group));
        }
    }
    let model = TpeModel::fit(domain, obs, params)?;
    let groups: Vec<RestrictedGroup> = restrictions
        .iter()
        .map(|(group, allowed)| {
            let idx = domain.indices_of(*group);
            let names = idx
                .iter()
                .map(|&i| domain.defs()[i].name.as_str())
                .collect();
            let ln_w: Vec<f64> = allowed
                .iter()
                .map(|entry| {
                    let mut x = vec![0.0; domain.dim()];
                    for &i in &idx {
                        let def = &domain.defs()[i];
                        x[i] = entry.get(&def.name).map_or(f64::NAN, |v| def.encode(v));
                    }
                    model.ln_good_marginal(&x, &idx)
                })
                .collect();
            let m = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut acc = 0.0;
            let cumulative = ln_w
                .iter()
                .map(|w| {
                    acc += if m.is_finite() { (w - m).exp() } else { 1.0 };
                    acc
                })
                .collect();
            RestrictedGroup {
                names,
                allowed,
                cumulative,
            }
        })
        .collect();

    let candidates: Vec<Configuration> = (0..params.n_candidates)
        .map(|_| {
            let mut config = domain.decode(&model.sample_candidate(rng));
            for group in &groups {
                let entry = group.pick(rng);
                for name in &group.names {
                    if let Some(v) = entry.get(name) {
                        config.insert(*name, v.clone());
                    }
                }
            }
            config
        })
        .collect();
    Ok(select_best(&model, domain, candidates))
}

/// Index of the allowed assignment with the highest `l/g` under a model
/// fitted to `obs`. Used for per-group transfer selection.
pub fn argmax_allowed(
    domain: &Domain,
    obs: &ObservationSet,
    allowed: &[Configuration],
    params: &TpeParams,
) -> Result<usize, TpeError> {
    require_observations(domain, obs)?;
    if allowed.is_empty() {
        return Err(TpeError::EmptyInput);
    }
    let model = TpeModel::fit(domain, obs, params)?;
    let encoded: Vec<Vec<f64>> = allowed.iter().map(|c| domain.encode(c)).collect();
    Ok(model.best_of(&encoded).expect("nonempty"))
}
