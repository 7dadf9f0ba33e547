//! Regret curves and speedup statistics for comparing two optimizers.

use crate::sched::History;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("regret level {level} is not reached by the {which} curve")]
    LevelNotReached { level: f64, which: &'static str },
    #[error("unpaired runs: {0}")]
    UnpairedRuns(String),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    #[default]
    Minimize,
    Maximize,
}

impl Orientation {
    /// Whether `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Orientation::Minimize => a < b,
            Orientation::Maximize => a > b,
        }
    }

    /// Distance of `best` from `reference`, nonnegative when `reference` is
    /// at least as good.
    pub fn regret(self, best: f64, reference: f64) -> f64 {
        match self {
            Orientation::Minimize => best - reference,
            Orientation::Maximize => reference - best,
        }
    }
}

/// How a regret level's crossing time is read off the baseline curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedupRule {
    /// Both curves: first time the regret is at or below the level.
    #[default]
    Conservative,
    /// Baseline: first time its regret drops strictly below the level (its
    /// end time if it never does), so time spent stuck at the level counts.
    Aggressive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretStep {
    pub time: f64,
    pub best_so_far: f64,
    pub regret: f64,
}

/// Step function of best-so-far and regret over resource time; each value
/// holds until the next step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCurve {
    pub steps: Vec<RegretStep>,
    pub orientation: Orientation,
    pub reference_best: f64,
}

impl RegretCurve {
    /// Builds a curve from `(time, value)` observations in time order,
    /// referenced to the curve's own final best.
    pub fn from_points(
        points: &[(f64, f64)],
        orientation: Orientation,
    ) -> Result<Self, MetricsError> {
        let Some(&(_, first)) = points.first() else {
            return Err(MetricsError::EmptyHistory);
        };
        let mut best = first;
        let mut prev_time = f64::NEG_INFINITY;
        let mut steps = Vec::with_capacity(points.len());
        for &(time, value) in points {
            if time <= prev_time || !time.is_finite() || !value.is_finite() {
                return Err(MetricsError::InvalidCurve(format!(
                    "times must be finite and strictly increasing (at time {time})"
                )));
            }
            prev_time = time;
            if orientation.better(value, best) {
                best = value;
            }
            steps.push(RegretStep {
                time,
                best_so_far: best,
                regret: 0.0,
            });
        }
        let mut curve = Self {
            steps,
            orientation,
            reference_best: best,
        };
        curve.rereference(best);
        Ok(curve)
    }

    fn rereference(&mut self, reference: f64) {
        self.reference_best = reference;
        for s in &mut self.steps {
            s.regret = self.orientation.regret(s.best_so_far, reference);
        }
    }

    /// The same curve with regrets measured against `reference`, which must
    /// be at least as good as this curve's final best.
    pub fn with_reference(&self, reference: f64) -> Result<Self, MetricsError> {
        if self.orientation.better(self.final_best(), reference) {
            return Err(MetricsError::InvalidCurve(format!(
                "reference {reference} is worse than the curve's best {}",
                self.final_best()
            )));
        }
        let mut out = self.clone();
        out.rereference(reference);
        Ok(out)
    }

    pub fn final_best(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.best_so_far)
    }

    pub fn final_regret(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.regret)
    }

    pub fn end_time(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.time)
    }

    /// First time the regret is at most `level`.
    pub fn first_time_at_or_below(&self, level: f64) -> Option<f64> {
        self.steps
            .iter()
            .find(|s| s.regret <= level)
            .map(|s| s.time)
    }

    /// First time the regret is strictly below `level`.
    pub fn first_time_below(&self, level: f64) -> Option<f64> {
        self.steps.iter().find(|s| s.regret < level).map(|s| s.time)
    }

    /// Distinct regret values in the order the curve attains them.
    pub fn levels(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for s in &self.steps {
            if out.last() != Some(&s.regret) {
                out.push(s.regret);
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,best,regret\n");
        for s in &self.steps {
            let _ = writeln!(out, "{},{},{}", s.time, s.best_so_far, s.regret);
        }
        out
    }
}

/// Regret of a run's total loss over cumulative resource time.
pub fn regret_curve(
    history: &History,
    orientation: Orientation,
) -> Result<RegretCurve, MetricsError> {
    let points: Vec<(f64, f64)> = history
        .records()
        .iter()
        .map(|r| (r.cumulative_time, r.loss))
        .collect();
    RegretCurve::from_points(&points, orientation)
}

/// Baseline crossing time over method crossing time at regret `level`.
pub fn speedup_at(
    baseline: &RegretCurve,
    method: &RegretCurve,
    level: f64,
) -> Result<f64, MetricsError> {
    speedup_with_rule(baseline, method, level, SpeedupRule::Conservative)
}

fn baseline_time(
    baseline: &RegretCurve,
    level: f64,
    rule: SpeedupRule,
) -> Result<f64, MetricsError> {
    let reached = baseline
        .first_time_at_or_below(level)
        .ok_or(MetricsError::LevelNotReached {
            level,
            which: "baseline",
        })?;
    Ok(match rule {
        SpeedupRule::Conservative => reached,
        SpeedupRule::Aggressive => baseline
            .first_time_below(level)
            .unwrap_or(baseline.end_time()),
    })
}

pub fn speedup_with_rule(
    baseline: &RegretCurve,
    method: &RegretCurve,
    level: f64,
    rule: SpeedupRule,
) -> Result<f64, MetricsError> {
    let t_base = baseline_time(baseline, level, rule)?;
    let t_method = method
        .first_time_at_or_below(level)
        .ok_or(MetricsError::LevelNotReached {
            level,
            which: "method",
        })?;
    Ok(t_base / t_method)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePair {
    pub label: String,
    pub baseline: RegretCurve,
    pub method: RegretCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpeedup {
    pub level: f64,
    pub baseline_time: f64,
    pub method_time: f64,
    pub speedup: f64,
    /// The method never reached this level; `method_time` is its end time,
    /// so `speedup` is an upper bound.
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub label: String,
    pub reference_best: f64,
    pub levels: Vec<LevelSpeedup>,
    pub final_speedup: f64,
    pub final_gain: f64,
    /// Both curves regret-referenced to `reference_best`.
    pub baseline: RegretCurve,
    pub method: RegretCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub rule: SpeedupRule,
    pub mean_speedup: f64,
    pub max_speedup: f64,
    pub final_speedup: f64,
    pub final_gain: f64,
    pub pairs: Vec<PairReport>,
}

fn pair_report(pair: &CurvePair, rule: SpeedupRule) -> Result<PairReport, MetricsError> {
    let orientation = pair.baseline.orientation;
    if pair.method.orientation != orientation {
        return Err(MetricsError::InvalidCurve(format!(
            "{}: baseline and method orientations differ",
            pair.label
        )));
    }
    let (b_best, m_best) = (pair.baseline.final_best(), pair.method.final_best());
    let reference = if orientation.better(m_best, b_best) {
        m_best
    } else {
        b_best
    };
    let baseline = pair.baseline.with_reference(reference)?;
    let method = pair.method.with_reference(reference)?;

    let mut levels = Vec::new();
    for level in baseline.levels() {
        let baseline_time = baseline_time(&baseline, level, rule)?;
        let (method_time, censored) = match method.first_time_at_or_below(level) {
            Some(t) => (t, false),
            None => (method.end_time(), true),
        };
        levels.push(LevelSpeedup {
            level,
            baseline_time,
            method_time,
            speedup: baseline_time / method_time,
            censored,
        });
    }
    let final_speedup = levels.last().map_or(f64::NAN, |l| l.speedup);
    Ok(PairReport {
        label: pair.label.clone(),
        reference_best: reference,
        levels,
        final_speedup,
        final_gain: orientation.regret(b_best, m_best),
        baseline,
        method,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Speedup statistics over the baseline's attained regret levels, with each
/// pair referenced to the better of its two final bests.
pub fn summarize_pairs(
    pairs: &[CurvePair],
    rule: SpeedupRule,
) -> Result<SpeedupReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::UnpairedRuns("no pairs to compare".into()));
    }
    let reports = pairs
        .iter()
        .map(|p| pair_report(p, rule))
        .collect::<Result<Vec<_>, _>>()?;
    let all = || {
        reports
            .iter()
            .flat_map(|r| r.levels.iter().map(|l| l.speedup))
    };
    Ok(SpeedupReport {
        rule,
        mean_speedup: mean(all()),
        max_speedup: all().fold(f64::NEG_INFINITY, f64::max),
        final_speedup: mean(reports.iter().map(|r| r.final_speedup)),
        final_gain: mean(reports.iter().map(|r| r.final_gain)),
        pairs: reports,
    })
}

/// Pairs curves by position.
pub fn summarize(
    baseline: &[RegretCurve],
    method: &[RegretCurve],
    rule: SpeedupRule,
) -> Result<SpeedupReport, MetricsError> {
    if baseline.len() != method.len() {
        return Err(MetricsError::UnpairedRuns(format!(
            "{} baseline curves against {} method curves",
            baseline.len(),
            method.len()
        )));
    }
    let pairs: Vec<CurvePair> = baseline
        .iter()
        .zip(method)
        .enumerate()
        .map(|(i, (b, m))| CurvePair {
            label: format!("pair-{i}"),
            baseline: b.clone(),
            method: m.clone(),
        })
        .collect();
    summarize_pairs(&pairs, rule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(times: &[f64], values: &[f64]) -> RegretCurve {
        let pts: Vec<_> = times.iter().copied().zip(values.iter().copied()).collect();
        RegretCurve::from_points(&pts, Orientation::Minimize).unwrap()
    }

    fn regrets(c: &RegretCurve) -> Vec<f64> {
        c.steps.iter().map(|s| s.regret).collect()
    }

    #[test]
    fn regret_examples() {
        let single = curve(&[3.0], &[0.7]);
        assert_eq!(regrets(&single), vec![0.0]);

        let c = curve(&[1.0, 2.0, 3.0, 4.0], &[5.0, 3.0, 4.0, 2.0]);
        assert_eq!(regrets(&c), vec![3.0, 1.0, 1.0, 0.0]);
        assert_eq!(c.levels(), vec![3.0, 1.0, 0.0]);

        let pts = [(1.0, 0.6), (2.0, 0.9), (3.0, 0.8)];
        let acc = RegretCurve::from_points(&pts, Orientation::Maximize).unwrap();
        let r = regrets(&acc);
        assert!((r[0] - 0.3).abs() < 1e-12);
        assert_eq!(&r[1..], &[0.0, 0.0]);
    }

    #[test]
    fn invalid_curves() {
        assert_eq!(
            RegretCurve::from_points(&[], Orientation::Minimize),
            Err(MetricsError::EmptyHistory)
        );
        assert!(
            RegretCurve::from_points(&[(2.0, 1.0), (2.0, 0.5)], Orientation::Minimize).is_err()
        );
        let c = curve(&[1.0], &[0.5]);
        assert!(c.with_reference(0.7).is_err());
        assert_eq!(c.with_reference(0.2).unwrap().final_regret(), 0.5 - 0.2);
    }

    #[test]
    fn speedup_examples() {
        let base = curve(&[100.0, 86_400.0], &[1.0, 0.0]);
        let method = curve(&[50.0, 19_000.0], &[1.0, 0.0]);
        let s = speedup_at(&base, &method, 0.0).unwrap();
        assert!((s - 4.547).abs() < 0.005);

        let b = curve(&[10.0, 20.0], &[1.0, 0.0]);
        let m = curve(&[5.0, 8.0], &[1.0, 0.0]);
        assert_eq!(speedup_at(&b, &m, 0.0).unwrap(), 2.5);
        assert_eq!(speedup_at(&b, &b, 1.0).unwrap(), 1.0);

        let never = curve(&[5.0], &[3.0]).with_reference(0.0).unwrap();
        assert!(matches!(
            speedup_at(&b, &never, 0.0),
            Err(MetricsError::LevelNotReached {
                which: "method",
                ..
            })
        ));
    }

    #[test]
    fn aggressive_counts_stuck_time() {
        // Baseline sits at regret 1 from t=10 until t=40.
        let b = curve(&[10.0, 40.0], &[1.0, 0.0]);
        let m = curve(&[5.0, 8.0], &[1.0, 0.0]);
        assert_eq!(speedup_at(&b, &m, 1.0).unwrap(), 2.0);
        assert_eq!(
            speedup_with_rule(&b, &m, 1.0, SpeedupRule::Aggressive).unwrap(),
            8.0
        );
        // At the final level the baseline never goes lower, so its end time counts.
        assert_eq!(
            speedup_with_rule(&b, &m, 0.0, SpeedupRule::Aggressive).unwrap(),
            5.0
        );
    }

    #[test]
    fn summarize_identity() {
        let c = curve(&[1.0, 2.0, 5.0], &[0.9, 0.4, 0.1]);
        let report = summarize(
            &[c.clone(), c.clone()],
            &[c.clone(), c],
            SpeedupRule::Conservative,
        )
        .unwrap();
        assert_eq!(report.mean_speedup, 1.0);
        assert_eq!(report.max_speedup, 1.0);
        assert_eq!(report.final_speedup, 1.0);
        assert_eq!(report.final_gain, 0.0);
    }

    #[test]
    fn summarize_means_pair_finals() {
        let b = curve(&[1.0, 8.0], &[1.0, 0.0]);
        let m1 = curve(&[1.0, 4.0], &[1.0, 0.0]);
        let m2 = curve(&[1.0, 2.0], &[1.0, 0.0]);
        let report = summarize(&[b.clone(), b], &[m1, m2], SpeedupRule::Conservative).unwrap();
        assert_eq!(report.pairs[0].final_speedup, 2.0);
        assert_eq!(report.pairs[1].final_speedup, 4.0);
        assert_eq!(report.final_speedup, 3.0);
        assert_eq!(report.max_speedup, 4.0);
        assert_eq!(report.mean_speedup, (1.0 + 2.0 + 1.0 + 4.0) / 4.0);
    }

    #[test]
    fn summarize_shared_reference_and_gain() {
        // The method ends better, so the baseline never reaches regret 0.
        let b = curve(&[1.0, 3.0], &[0.8, 0.5]);
        let m = curve(&[2.0, 4.0], &[0.6, 0.2]);
        let report = summarize(&[b], &[m], SpeedupRule::Conservative).unwrap();
        let pair = &report.pairs[0];
        assert_eq!(pair.reference_best, 0.2);
        assert!((pair.final_gain - 0.3).abs() < 1e-12);
        // Baseline levels are about 0.6 and 0.3; the method's regrets are 0.4 then 0.
        assert_eq!(pair.levels.len(), 2);
        assert_eq!(pair.levels[0].speedup, 1.0 / 2.0);
        assert_eq!(pair.levels[1].speedup, 3.0 / 4.0);
        assert!(!pair.levels.iter().any(|l| l.censored));
    }

    #[test]
    fn summarize_censors_unreached_levels() {
        let b = curve(&[1.0, 3.0], &[0.8, 0.2]);
        let m = curve(&[2.0, 4.0], &[0.9, 0.7]);
        let report = summarize(&[b], &[m], SpeedupRule::Conservative).unwrap();
        let last = report.pairs[0].levels.last().unwrap();
        assert!(last.censored);
        assert_eq!(last.speedup, 3.0 / 4.0);
        assert!((report.final_gain + 0.5).abs() < 1e-12);
    }

    #[test]
    fn unpaired() {
        let c = curve(&[1.0], &[1.0]);
        assert!(matches!(
            summarize(std::slice::from_ref(&c), &[], SpeedupRule::Conservative),
            Err(MetricsError::UnpairedRuns(_))
        ));
        assert!(matches!(
            summarize(&[], &[], SpeedupRule::Conservative),
            Err(MetricsError::UnpairedRuns(_))
        ));
    }

    #[test]
    fn csv_rows() {
        let c = curve(&[1.0, 2.0], &[5.0, 3.0]);
        assert_eq!(c.to_csv(), "time,best,regret\n1,5,2\n2,3,0\n");
    }

    fn arb_curve() -> impl Strategy<Value = RegretCurve> {
        prop::collection::vec((0.01f64..10.0, 0.0f64..1.0), 1..30).prop_map(|raw| {
            let mut t = 0.0;
            let pts: Vec<_> = raw
                .into_iter()
                .map(|(dt, v)| {
                    t += dt;
                    (t, v)
                })
                .collect();
            RegretCurve::from_points(&pts, Orientation::Minimize).unwrap()
        })
    }

    proptest! {
        #[test]
        fn regret_is_monotone(c in arb_curve()) {
            prop_assert!(c.steps.windows(2).all(|w| w[1].regret <= w[0].regret));
            prop_assert_eq!(c.final_regret(), 0.0);
        }

        #[test]
        fn scale_invariance(b in arb_curve(), m in arb_curve(), k in 0.01f64..100.0) {
            let scale = |c: &RegretCurve| {
                let pts: Vec<_> = c.steps.iter().map(|s| (s.time * k, s.best_so_far)).collect();
                RegretCurve::from_points(&pts, Orientation::Minimize).unwrap()
            };
            let r1 = summarize(std::slice::from_ref(&b), std::slice::from_ref(&m), SpeedupRule::Conservative).unwrap();
            let r2 = summarize(&[scale(&b)], &[scale(&m)], SpeedupRule::Conservative).unwrap();
            for (l1, l2) in r1.pairs[0].levels.iter().zip(&r2.pairs[0].levels) {
                prop_assert!((l1.speedup - l2.speedup).abs() <= 1e-9 * l1.speedup.max(1.0));
            }
        }

        #[test]
        fn conservative_never_exceeds_aggressive(b in arb_curve(), m in arb_curve()) {
            let c = summarize(std::slice::from_ref(&b), std::slice::from_ref(&m), SpeedupRule::Conservative).unwrap();
            let a = summarize(&[b], &[m], SpeedupRule::Aggressive).unwrap();
            for (lc, la) in c.pairs[0].levels.iter().zip(&a.pairs[0].levels) {
                prop_assert!(lc.speedup <= la.speedup);
            }
        }
    }
}
