//! The `run`, `compare` and `report` subcommands.

use crate::config::ExperimentPlan;
use crate::journal::{
    journal_name, read_journal, read_journal_dir, Journal, JournalHeader, JournalLine,
    JournalWriter, JOURNAL_VERSION,
};
use crate::CliError;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use subnet_hpo::metrics::{
    regret_curve, summarize_pairs, CurvePair, Orientation, SpeedupReport, SpeedupRule,
};
use subnet_hpo::sched::{run_rng, Runner};

pub const SEED_OFFSET_VAR: &str = "SUBNET_HPO_SEED_OFFSET";

/// Reads the seed offset from the environment; unset means 0.
pub fn seed_offset() -> Result<u64, CliError> {
    match std::env::var(SEED_OFFSET_VAR) {
        Ok(s) => s.trim().parse().map_err(|_| CliError::Validation {
            key: SEED_OFFSET_VAR.into(),
            message: format!("`{s}` is not a nonnegative integer"),
        }),
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(e) => Err(CliError::Validation {
            key: SEED_OFFSET_VAR.into(),
            message: e.to_string(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub path: PathBuf,
    /// Trials found in the journal before this invocation.
    pub resumed_trials: usize,
    pub total_trials: usize,
    pub cumulative_time: f64,
}

/// Runs (or resumes) one journaled (seed, fold) and returns where it ended.
pub fn run_one(
    plan: &ExperimentPlan,
    out: &Path,
    seed: u64,
    fold: u64,
) -> Result<RunSummary, CliError> {
    let path = out.join(journal_name(plan.scheduler, seed, fold));
    let header = JournalHeader {
        version: JOURNAL_VERSION,
        plan_digest: plan.digest(),
        scheduler: plan.scheduler,
        seed,
        fold,
        budget: plan.budget,
    };
    let existing = if path.exists() {
        read_journal(&path)?
    } else {
        None
    };

    let space = plan.build_space()?;
    let objective = plan.objective()?;
    let (mut writer, mut runner, resumed) = match existing {
        Some(journal) => {
            if journal.header != header {
                return Err(CliError::ResumeMismatch {
                    path,
                    expected: header.plan_digest,
                    found: journal.header.plan_digest,
                });
            }
            let resumed = journal.records.len();
            let rng = journal.rng.clone().unwrap_or_else(|| run_rng(seed, fold));
            let writer = JournalWriter::reopen(&path, journal.valid_len)?;
            let runner = Runner::resume(
                plan.scheduler,
                &objective,
                &space,
                plan.params.clone(),
                plan.budget,
                journal.history(),
                rng,
            )?;
            (writer, runner, resumed)
        }
        None => {
            let writer = JournalWriter::create(&path, &header)?;
            let runner = Runner::new(
                plan.scheduler,
                &objective,
                &space,
                plan.params.clone(),
                plan.budget,
                run_rng(seed, fold),
            )?;
            (writer, runner, 0)
        }
    };

    while let Some(record) = runner.step()? {
        let line = JournalLine::trial(record.clone(), runner.rng());
        writer.append(&line)?;
    }
    let history = runner.history();
    Ok(RunSummary {
        path,
        resumed_trials: resumed,
        total_trials: history.len(),
        cumulative_time: history.cumulative_time(),
    })
}

/// Runs every (seed + offset, fold) of the plan into `out`, one journal each.
pub fn cmd_run(
    plan: &ExperimentPlan,
    out: &Path,
    offset: u64,
) -> Result<Vec<RunSummary>, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut summaries = Vec::new();
    for &seed in &plan.seeds {
        let seed = seed
            .checked_add(offset)
            .ok_or_else(|| CliError::Validation {
                key: SEED_OFFSET_VAR.into(),
                message: format!("seed {seed} + offset {offset} overflows"),
            })?;
        for fold in 0..plan.folds {
            summaries.push(run_one(plan, out, seed, fold)?);
        }
    }
    Ok(summaries)
}

fn by_run(dir: &Path) -> Result<BTreeMap<(u64, u64), Journal>, CliError> {
    let mut map = BTreeMap::new();
    for (path, journal) in read_journal_dir(dir)? {
        let key = (journal.header.seed, journal.header.fold);
        if map.insert(key, journal).is_some() {
            return Err(CliError::UnpairedRuns(format!(
                "{} holds more than one journal for seed {} fold {}",
                path.parent().unwrap_or(dir).display(),
                key.0,
                key.1
            )));
        }
    }
    Ok(map)
}

fn pair_label(seed: u64, fold: u64) -> String {
    format!("seed{seed}-fold{fold}")
}

/// Pairs journals by (seed, fold) and summarizes method against baseline.
pub fn compare_dirs(
    baseline: &Path,
    method: &Path,
    rule: SpeedupRule,
) -> Result<SpeedupReport, CliError> {
    let base = by_run(baseline)?;
    let meth = by_run(method)?;
    let missing =
        |from: &BTreeMap<(u64, u64), Journal>, to: &BTreeMap<(u64, u64), Journal>, dir: &Path| {
            from.keys().find(|k| !to.contains_key(k)).map(|key| {
                CliError::UnpairedRuns(format!(
                    "seed {} fold {} has no journal in {}",
                    key.0,
                    key.1,
                    dir.display()
                ))
            })
        };
    if let Some(err) = missing(&base, &meth, method).or_else(|| missing(&meth, &base, baseline)) {
        return Err(err);
    }
    if base.is_empty() {
        return Err(CliError::UnpairedRuns(format!(
            "no journals in {}",
            baseline.display()
        )));
    }
    let mut pairs = Vec::new();
    for (key, b) in &base {
        let m = &meth[key];
        pairs.push(CurvePair {
            label: pair_label(key.0, key.1),
            baseline: regret_curve(&b.history(), Orientation::Minimize)?,
            method: regret_curve(&m.history(), Orientation::Minimize)?,
        });
    }
    Ok(summarize_pairs(&pairs, rule)?)
}

/// Writes `{label}-baseline.csv` and `{label}-method.csv` for every pair.
pub fn write_pair_csvs(report: &SpeedupReport, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();
    for pair in &report.pairs {
        for (role, curve) in [("baseline", &pair.baseline), ("method", &pair.method)] {
            let path = dir.join(format!("{}-{role}.csv", pair.label));
            std::fs::write(&path, curve.to_csv()).map_err(|e| CliError::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Compares two run directories, writing the JSON report to `out` and the
/// per-pair regret CSVs next to it.
pub fn cmd_compare(
    baseline: &Path,
    method: &Path,
    out: &Path,
    rule: SpeedupRule,
) -> Result<SpeedupReport, CliError> {
    let report = compare_dirs(baseline, method, rule)?;
    let json = serde_json::to_string_pretty(&report).expect("reports serialize");
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(out, json).map_err(|e| CliError::io(out, e))?;
    let csv_dir = out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    write_pair_csvs(&report, csv_dir)?;
    Ok(report)
}

/// Re-emits the regret CSVs of a saved report into `csv_dir`.
pub fn cmd_report(input: &Path, csv_dir: &Path) -> Result<SpeedupReport, CliError> {
    let text = std::fs::read_to_string(input).map_err(|e| CliError::io(input, e))?;
    let report: SpeedupReport = serde_json::from_str(&text)
        .map_err(|e| CliError::Parse(format!("{}: {e}", input.display())))?;
    write_pair_csvs(&report, csv_dir)?;
    Ok(report)
}

/// Plain-text table of a report, one row per pair.
pub fn format_report(report: &SpeedupReport) -> String {
    let mut out = format!(
        "rule: {:?}\nmean speedup {:.3}  max speedup {:.3}  final speedup {:.3}  final gain {:.6}\n",
        report.rule, report.mean_speedup, report.max_speedup, report.final_speedup, report.final_gain
    );
    out.push_str("pair               final_speedup  final_gain  baseline_best  method_best\n");
    for p in &report.pairs {
        out.push_str(&format!(
            "{:<18} {:>13.3} {:>11.6} {:>14.6} {:>12.6}\n",
            p.label,
            p.final_speedup,
            p.final_gain,
            p.baseline.final_best(),
            p.method.final_best()
        ));
    }
    out
}
