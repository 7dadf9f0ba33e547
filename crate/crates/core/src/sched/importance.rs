use super::{History, SchedError};
use serde::{Deserialize, Serialize};

const IMPORTANCE_EPSILON: f64 = 1e-6;
const IMPORTANCE_PERCENTILE: f64 = 0.9;

/// Per-subnet importance; entries are nonnegative and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector(Vec<f64>);

impl ImportanceVector {
    pub fn uniform(group_count: usize) -> Self {
        Self(vec![1.0 / group_count as f64; group_count])
    }

    /// Accepts nonnegative finite entries summing to one within 1e-9.
    pub fn from_vec(p: Vec<f64>) -> Result<Self, SchedError> {
        let total: f64 = p.iter().sum();
        if p.is_empty()
            || p.iter().any(|x| !x.is_finite() || *x < 0.0)
            || (total - 1.0).abs() > 1e-9
        {
            return Err(SchedError::InvalidParams(format!(
                "{p:?} is not a probability vector"
            )));
        }
        Ok(Self(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Importance of subnet `i` (1-based).
    pub fn get(&self, i: usize) -> f64 {
        self.0[i - 1]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Percentile `q` in [0, 1] of `values` by inclusive linear interpolation.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Importance from several folds: per group, the 90th percentile of
/// `-l_i` within each fold, averaged over folds, shifted so the weakest
/// group scores zero, then normalized with a small epsilon.
pub fn importance_from_folds(
    folds: &[&History],
    group_count: usize,
) -> Result<ImportanceVector, SchedError> {
    let mut scores = vec![0.0; group_count];
    let mut used_folds = 0usize;
    for history in folds {
        if history.is_empty() {
            continue;
        }
        for (i, score) in scores.iter_mut().enumerate() {
            let perf: Vec<f64> = history
                .records()
                .iter()
                .map(|r| {
                    r.group_losses
                        .get(i)
                        .map(|l| -l)
                        .ok_or(SchedError::NoGroupLosses)
                })
                .collect::<Result<_, _>>()?;
            *score += percentile(&perf, IMPORTANCE_PERCENTILE);
        }
        used_folds += 1;
    }
    if used_folds == 0 || group_count == 0 {
        return Err(SchedError::NoGroupLosses);
    }
    for s in &mut scores {
        *s /= used_folds as f64;
    }
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(ImportanceVector::uniform(group_count));
    }
    let shifted: Vec<f64> = scores
        .iter()
        .map(|s| s - min + IMPORTANCE_EPSILON)
        .collect();
    let total: f64 = shifted.iter().sum();
    Ok(ImportanceVector(
        shifted.iter().map(|s| s / total).collect(),
    ))
}

/// Importance over a single run, which counts as one fold.
pub fn sabo_importance(
    history: &History,
    group_count: usize,
) -> Result<ImportanceVector, SchedError> {
    importance_from_folds(&[history], group_count)
}
