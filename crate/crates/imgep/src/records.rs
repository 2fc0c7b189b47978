//! Episode-log persistence: line-delimited self-describing records behind a
//! versioned header, plus small comma-separated metric tables.
//!
//! One record per line keeps the log append-safe under interruption and
//! trivially greppable. Floats round-trip exactly through the JSON encoding,
//! so a log replay reproduces every value bit-for-bit.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::SpaceId;

pub const LOG_SCHEMA: &str = "imgep.episodes";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("log io: {0}")]
    Io(#[from] std::io::Error),
    #[error("log json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("log format: {0}")]
    Format(String),
}

/// First line of every episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: String,
    pub version: u32,
    pub condition: String,
    pub seed: u64,
    pub iterations: usize,
    /// Goal spaces the run's space-selection policy could choose from, in
    /// the order `bandit_averages` snapshots are reported.
    pub selectable_spaces: Vec<SpaceId>,
}

impl LogHeader {
    pub fn new(
        condition: &str,
        seed: u64,
        iterations: usize,
        selectable_spaces: Vec<SpaceId>,
    ) -> Self {
        Self {
            schema: LOG_SCHEMA.to_string(),
            version: LOG_VERSION,
            condition: condition.to_string(),
            seed,
            iterations,
            selectable_spaces,
        }
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        if self.schema != LOG_SCHEMA {
            return Err(RecordError::Format(format!(
                "unexpected log schema {:?}",
                self.schema
            )));
        }
        if self.version != LOG_VERSION {
            return Err(RecordError::Format(format!(
                "unsupported log version {} (expected {})",
                self.version, LOG_VERSION
            )));
        }
        Ok(())
    }
}

/// One exploration episode, fully replayable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub iteration: usize,
    pub condition: String,
    /// The policy was drawn uniformly at random this episode.
    pub random_babble: bool,
    /// The episode belongs to the initial archive-seeding phase.
    pub bootstrap: bool,
    /// Chosen goal space, absent for random-policy episodes.
    pub space: Option<SpaceId>,
    pub goal: Option<Vec<f64>>,
    /// Goal-directed episode executed without exploration noise.
    pub exploit: bool,
    pub theta: Vec<f64>,
    pub context: Vec<f64>,
    pub outcome: Vec<f64>,
    pub reward: Option<f64>,
    pub intrinsic_reward: Option<f64>,
    /// Bandit running averages after this episode, aligned with the
    /// header's `selectable_spaces`.
    pub bandit_averages: Vec<f64>,
}

/// Streaming episode-log writer; flushes after every record so interrupted
/// runs keep everything already executed.
pub struct LogWriter<W: Write> {
    writer: W,
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut writer: W, header: &LogHeader) -> Result<Self, RecordError> {
        serde_json::to_writer(&mut writer, header)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        Ok(Self { writer })
    }

    pub fn append(&mut self, record: &EpisodeRecord) -> Result<(), RecordError> {
        serde_json::to_writer(&mut self.writer, record)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Reads a full log, validating the header and record ordering.
pub fn read_log<R: BufRead>(reader: R) -> Result<(LogHeader, Vec<EpisodeRecord>), RecordError> {
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| RecordError::Format("empty log".into()))??;
    let header: LogHeader = serde_json::from_str(&header_line)?;
    header.validate()?;
    let mut records: Vec<EpisodeRecord> = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EpisodeRecord = serde_json::from_str(&line)?;
        if let Some(last) = records.last() {
            if record.iteration <= last.iteration {
                return Err(RecordError::Format(format!(
                    "records out of order at iteration {}",
                    record.iteration
                )));
            }
        }
        records.push(record);
    }
    Ok((header, records))
}

pub fn read_log_file(path: &Path) -> Result<(LogHeader, Vec<EpisodeRecord>), RecordError> {
    let file = std::fs::File::open(path)?;
    read_log(std::io::BufReader::new(file))
}

/// Writes a comma-separated table with a schema tag comment and a header
/// row.
pub fn write_csv(
    path: &Path,
    schema_tag: &str,
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<(), RecordError> {
    let mut out = String::new();
    out.push_str(&format!("# {schema_tag} v{LOG_VERSION}\n"));
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
