//! Trial-log CSV reading and writing in the flat per-trial row format.

use crate::domain::{DomainError, TrialRecord, LOG_HEADER};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogIoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Domain(#[from] DomainError),
    #[error("missing or wrong header, expected {expected:?}")]
    BadHeader { expected: &'static [&'static str] },
    #[error("log is empty")]
    Empty,
}

/// Writes trial records as CSV, one row per trial.
pub fn write_trial_log<W: Write>(writer: W, logs: &[Vec<TrialRecord>]) -> Result<(), LogIoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LOG_HEADER)?;
    for participant in logs {
        for rec in participant {
            w.write_record(rec.to_csv_row())?;
        }
    }
    w.flush().map_err(|source| LogIoError::Io { path: "<writer>".into(), source })?;
    Ok(())
}

pub fn write_trial_log_file(path: &Path, logs: &[Vec<TrialRecord>]) -> Result<(), LogIoError> {
    let f = std::fs::File::create(path)
        .map_err(|source| LogIoError::Io { path: path.display().to_string(), source })?;
    write_trial_log(f, logs)
}

/// Reads a trial log, grouping consecutive rows by participant id.
pub fn read_trial_log<R: Read>(reader: R) -> Result<Vec<Vec<TrialRecord>>, LogIoError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let header = r.headers()?;
        let got: Vec<&str> = header.iter().collect();
        if got != LOG_HEADER {
            return Err(LogIoError::BadHeader { expected: &LOG_HEADER });
        }
    }
    let mut logs: Vec<Vec<TrialRecord>> = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let fields: Vec<&str> = row.iter().collect();
        // header is line 1; data rows start at line 2
        let rec = TrialRecord::from_csv_row(i + 2, &fields)?;
        match logs.last_mut() {
            Some(current) if current[0].participant_id == rec.participant_id => {
                current.push(rec)
            }
            _ => logs.push(vec![rec]),
        }
    }
    if logs.is_empty() {
        return Err(LogIoError::Empty);
    }
    Ok(logs)
}

pub fn read_trial_log_file(path: &Path) -> Result<Vec<Vec<TrialRecord>>, LogIoError> {
    let f = std::fs::File::open(path)
        .map_err(|source| LogIoError::Io { path: path.display().to_string(), source })?;
    read_trial_log(f)
}
