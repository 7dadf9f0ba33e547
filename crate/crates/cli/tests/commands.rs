use serde_json::json;
use std::collections::BTreeMap;
use std::path::Path;
use subnet_hpo::metrics::SpeedupRule;
use subnet_hpo::sched::{run_rng, Branch, SchedulerKind, TrainingPlan, TrialRecord};
use subnet_hpo::space::Configuration;
use subnet_hpo_cli::commands::compare_dirs;
use subnet_hpo_cli::journal::{
    journal_name, read_journal, JournalHeader, JournalLine, JOURNAL_VERSION,
};
use subnet_hpo_cli::{cmd_compare, cmd_report, cmd_run, plan_from_value, CliError, ExperimentPlan};

fn plan(scheduler: &str, seeds: &[u64], budget: f64) -> ExperimentPlan {
    plan_from_value(
        json!({"benchmark": "dc-4", "scheduler": scheduler, "budget": budget, "seeds": seeds}),
    )
    .unwrap()
}

fn journal_bytes(dir: &Path, plan: &ExperimentPlan, seed: u64) -> Vec<u8> {
    std::fs::read(dir.join(journal_name(plan.scheduler, seed, 0))).unwrap()
}

#[test]
fn one_journal_per_seed_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let p = plan("dcbo", &[1, 2], 5000.0);
    let summaries = cmd_run(&p, dir.path(), 0).unwrap();
    assert_eq!(summaries.len(), 2);
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(files.len(), 2);
    for s in &summaries {
        let j = read_journal(&s.path).unwrap().unwrap();
        let last = j.records.last().unwrap();
        assert!(last.cumulative_time >= p.budget);
        assert!(last.cumulative_time < p.budget + last.cost);
        assert!(j.records[j.records.len() - 2].cumulative_time < p.budget);
    }
}

#[test]
fn seed_offset_and_folds() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = plan("bo", &[1], 3000.0);
    p.folds = 2;
    cmd_run(&p, dir.path(), 100).unwrap();
    let a = read_journal(&dir.path().join("bo-seed101-fold0.jsonl"))
        .unwrap()
        .unwrap();
    let b = read_journal(&dir.path().join("bo-seed101-fold1.jsonl"))
        .unwrap()
        .unwrap();
    assert_eq!((a.header.seed, a.header.fold), (101, 0));
    assert_eq!((b.header.seed, b.header.fold), (101, 1));
    assert_ne!(a.records[0].config, b.records[0].config);
}

#[test]
fn identical_plans_write_identical_journals() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let p = plan("sabo", &[7], 6000.0);
    cmd_run(&p, d1.path(), 0).unwrap();
    cmd_run(&p, d2.path(), 0).unwrap();
    assert_eq!(
        journal_bytes(d1.path(), &p, 7),
        journal_bytes(d2.path(), &p, 7)
    );
}

#[test]
fn resume_after_interruption_is_byte_identical() {
    for scheduler in ["bo", "dcbo", "sabo"] {
        let p = plan(scheduler, &[9], 8000.0);
        let clean = tempfile::tempdir().unwrap();
        cmd_run(&p, clean.path(), 0).unwrap();
        let full = journal_bytes(clean.path(), &p, 9);
        let line_ends: Vec<usize> = full
            .iter()
            .enumerate()
            .filter(|(_, b)| **b == b'\n')
            .map(|(i, _)| i + 1)
            .collect();

        for k in [1, 2, line_ends.len() / 2, line_ends.len() - 1] {
            let torn = tempfile::tempdir().unwrap();
            let path = torn.path().join(journal_name(p.scheduler, 9, 0));
            // Header plus k - 1 trials, then half of the next line.
            let cut = line_ends[k - 1] + (line_ends[k] - line_ends[k - 1]) / 2;
            std::fs::write(&path, &full[..cut]).unwrap();
            let s = cmd_run(&p, torn.path(), 0).unwrap();
            assert_eq!(s[0].resumed_trials, k - 1);
            assert_eq!(
                std::fs::read(&path).unwrap(),
                full,
                "{scheduler} cut after line {k}"
            );
        }
    }
}

#[test]
fn rerunning_a_finished_experiment_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let p = plan("dcbo", &[3], 4000.0);
    cmd_run(&p, dir.path(), 0).unwrap();
    let before = journal_bytes(dir.path(), &p, 3);
    let s = cmd_run(&p, dir.path(), 0).unwrap();
    assert_eq!(s[0].resumed_trials, s[0].total_trials);
    assert_eq!(journal_bytes(dir.path(), &p, 3), before);
}

#[test]
fn changed_config_refuses_to_resume() {
    let dir = tempfile::tempdir().unwrap();
    let p = plan("dcbo", &[3], 4000.0);
    cmd_run(&p, dir.path(), 0).unwrap();
    let mut changed = p.clone();
    changed.params.o = 0.5;
    let err = cmd_run(&changed, dir.path(), 0).unwrap_err();
    assert!(matches!(err, CliError::ResumeMismatch { .. }), "{err:?}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn comparing_a_run_with_itself() {
    let dir = tempfile::tempdir().unwrap();
    let p = plan("bo", &[1, 2], 5000.0);
    cmd_run(&p, dir.path(), 0).unwrap();
    let out = tempfile::tempdir().unwrap();
    let report = cmd_compare(
        dir.path(),
        dir.path(),
        &out.path().join("r.json"),
        SpeedupRule::Conservative,
    )
    .unwrap();
    assert_eq!(report.pairs.len(), 2);
    assert_eq!(report.mean_speedup, 1.0);
    assert_eq!(report.max_speedup, 1.0);
    assert_eq!(report.final_speedup, 1.0);
    assert_eq!(report.final_gain, 0.0);
}

fn record(id: usize, loss: f64, time: f64) -> TrialRecord {
    TrialRecord {
        id,
        branch: Branch::BoRandom,
        plan: TrainingPlan::Complete,
        config: Configuration::new(),
        loss,
        merge_loss: loss,
        group_losses: vec![],
        states: BTreeMap::new(),
        cost: 1.0,
        cumulative_time: time,
    }
}

fn write_journal(dir: &Path, scheduler: SchedulerKind, seed: u64, losses: &[(f64, f64)]) {
    let header = JournalHeader {
        version: JOURNAL_VERSION,
        plan_digest: "00".repeat(32),
        scheduler,
        seed,
        fold: 0,
        budget: 2.0,
    };
    let rng = run_rng(seed, 0);
    let mut text = JournalLine::Header(header).to_line();
    for (i, (loss, t)) in losses.iter().enumerate() {
        text.push_str(&JournalLine::trial(record(i, *loss, *t), &rng).to_line());
    }
    std::fs::write(dir.join(journal_name(scheduler, seed, 0)), text).unwrap();
}

#[test]
fn hand_built_journals_give_hand_computed_csvs() {
    let (base, meth, out) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    write_journal(base.path(), SchedulerKind::Bo, 1, &[(5.0, 1.0), (3.0, 2.0)]);
    write_journal(
        meth.path(),
        SchedulerKind::Dcbo,
        1,
        &[(4.0, 1.0), (2.0, 2.0)],
    );
    let report_path = out.path().join("report.json");
    let report = cmd_compare(
        base.path(),
        meth.path(),
        &report_path,
        SpeedupRule::Conservative,
    )
    .unwrap();

    // Shared reference is the method's 2.0.
    let baseline_csv =
        std::fs::read_to_string(out.path().join("seed1-fold0-baseline.csv")).unwrap();
    assert_eq!(baseline_csv, "time,best,regret\n1,5,3\n2,3,1\n");
    let method_csv = std::fs::read_to_string(out.path().join("seed1-fold0-method.csv")).unwrap();
    assert_eq!(method_csv, "time,best,regret\n1,4,2\n2,2,0\n");
    // Baseline levels 3 and 1; the method crosses 3 at t=1 and 1 at t=2.
    assert_eq!(report.pairs[0].levels.len(), 2);
    assert_eq!(report.final_speedup, 1.0);
    assert_eq!(report.final_gain, 1.0);

    let again = tempfile::tempdir().unwrap();
    let reloaded = cmd_report(&report_path, again.path()).unwrap();
    assert_eq!(reloaded, report);
    assert_eq!(
        std::fs::read_to_string(again.path().join("seed1-fold0-method.csv")).unwrap(),
        method_csv
    );
}

#[test]
fn missing_seed_is_unpaired() {
    let (base, meth) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_journal(base.path(), SchedulerKind::Bo, 1, &[(5.0, 1.0)]);
    write_journal(base.path(), SchedulerKind::Bo, 4, &[(5.0, 1.0)]);
    write_journal(meth.path(), SchedulerKind::Dcbo, 1, &[(4.0, 1.0)]);
    let err = compare_dirs(base.path(), meth.path(), SpeedupRule::Conservative).unwrap_err();
    match err {
        CliError::UnpairedRuns(msg) => assert!(msg.contains("seed 4"), "{msg}"),
        other => panic!("{other:?}"),
    }
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(
        compare_dirs(empty.path(), empty.path(), SpeedupRule::Conservative),
        Err(CliError::UnpairedRuns(_))
    ));
}
