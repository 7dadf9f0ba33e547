//! Append-only JSON Lines trial journals.
//!
//! The first line is a [`JournalHeader`]; every following line holds one
//! trial record together with the generator state captured right after it.

use crate::CliError;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use subnet_hpo::sched::{rng_from_hex, rng_to_hex, History, SchedulerKind, TrialRecord};

pub const JOURNAL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JournalHeader {
    pub version: u32,
    pub plan_digest: String,
    pub scheduler: SchedulerKind,
    pub seed: u64,
    pub fold: u64,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum JournalLine {
    Header(JournalHeader),
    Trial {
        record: TrialRecord,
        /// Generator state after the trial, as produced by [`rng_to_hex`].
        rng: String,
    },
}

impl JournalLine {
    pub fn trial(record: TrialRecord, rng: &ChaCha8Rng) -> Self {
        JournalLine::Trial {
            record,
            rng: rng_to_hex(rng),
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("journal lines serialize");
        s.push('\n');
        s
    }
}

/// A journal read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Journal {
    pub header: JournalHeader,
    pub records: Vec<TrialRecord>,
    /// Generator state after the last record, if any.
    pub rng: Option<ChaCha8Rng>,
    /// Byte length of the intact prefix; anything after it is a torn write.
    pub valid_len: u64,
}

impl Journal {
    pub fn history(&self) -> History {
        History::from_records(self.records.clone())
    }

    pub fn cumulative_time(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative_time)
    }

    pub fn is_complete(&self) -> bool {
        self.cumulative_time() >= self.header.budget
    }
}

pub fn journal_name(scheduler: SchedulerKind, seed: u64, fold: u64) -> String {
    format!("{scheduler}-seed{seed}-fold{fold}.jsonl")
}

/// Parses journal text. A final line that is unterminated or does not parse
/// is treated as an interrupted write and excluded from `valid_len`; a bad
/// line anywhere else is an error. Returns `None` if not even the header
/// survived.
pub fn parse_journal(text: &str, path: &Path) -> Result<Option<Journal>, CliError> {
    let corrupt = |line: usize, msg: String| CliError::Journal {
        path: path.to_path_buf(),
        message: format!("line {line}: {msg}"),
    };
    let mut header = None;
    let mut records = Vec::new();
    let mut rng = None;
    let mut valid_len = 0u64;
    let mut rest = text;
    let mut line_no = 0;
    while !rest.is_empty() {
        line_no += 1;
        let Some(end) = rest.find('\n') else {
            break;
        };
        let line = &rest[..end];
        rest = &rest[end + 1..];
        let parsed: JournalLine = match serde_json::from_str(line) {
            Ok(l) => l,
            Err(_) if rest.is_empty() => break,
            Err(e) => return Err(corrupt(line_no, e.to_string())),
        };
        match (parsed, &header) {
            (JournalLine::Header(h), None) => header = Some(h),
            (JournalLine::Header(_), Some(_)) => {
                return Err(corrupt(line_no, "second header".into()))
            }
            (JournalLine::Trial { .. }, None) => {
                return Err(corrupt(line_no, "trial before header".into()))
            }
            (JournalLine::Trial { record, rng: state }, Some(_)) => {
                if record.id != records.len() {
                    return Err(corrupt(
                        line_no,
                        format!("expected trial {}, found {}", records.len(), record.id),
                    ));
                }
                rng = Some(
                    rng_from_hex(&state)
                        .ok_or_else(|| corrupt(line_no, "bad generator state".into()))?,
                );
                records.push(record);
            }
        }
        valid_len += end as u64 + 1;
    }
    Ok(header.map(|header| Journal {
        header,
        records,
        rng,
        valid_len,
    }))
}

pub fn read_journal(path: &Path) -> Result<Option<Journal>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_journal(&text, path)
}

/// Every journal in `dir`, sorted by file name.
pub fn read_journal_dir(dir: &Path) -> Result<Vec<(PathBuf, Journal)>, CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        if let Some(journal) = read_journal(&path)? {
            out.push((path, journal));
        }
    }
    Ok(out)
}

/// Buffered appender that flushes after every line.
#[derive(Debug)]
pub struct JournalWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JournalWriter {
    /// Starts a fresh journal, replacing whatever was at `path`.
    pub fn create(path: &Path, header: &JournalHeader) -> Result<Self, CliError> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        w.append(&JournalLine::Header(header.clone()))?;
        Ok(w)
    }

    /// Opens an existing journal for appending after cutting it to `valid_len`.
    pub fn reopen(path: &Path, valid_len: u64) -> Result<Self, CliError> {
        let file = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| CliError::io(path, e))?;
        file.set_len(valid_len).map_err(|e| CliError::io(path, e))?;
        drop(file);
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, line: &JournalLine) -> Result<(), CliError> {
        self.out
            .write_all(line.to_line().as_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|e| CliError::io(&self.path, e))
    }
}
