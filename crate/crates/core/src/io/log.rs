//! Episode log: one JSON object per line.
//!
//! ```text
//! {"kind":"header", ...}     scenario, seed, policy, initial observation
//! {"kind":"step", ...}       one per step, in order
//! {"kind":"footer", ...}     summary; absent while an episode is still open
//! ```
//!
//! Every step record carries `digest = sha256(previous digest || record
//! without digest)`, chained from the header fingerprint, so edits to any
//! record are detectable.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Action, Step};
use crate::sim::{Charge, Downgrade, Observation, ScenarioConfig, StepResult};

pub const LOG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    pub format_version: u32,
    pub artifact_version: String,
    pub fingerprint: String,
    pub seed: u64,
    pub policy: String,
    /// Wall clock at start, unix milliseconds. Absent in reproducible runs.
    pub started_at_ms: Option<u64>,
    /// Whether step records carry the latent CI vector.
    pub include_true_state: bool,
    pub n_components: usize,
    pub initial_observation: Observation,
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub step: Step,
    pub observation: Observation,
    /// Actions as submitted, before downgrades.
    pub actions: Vec<Action>,
    pub downgrades: Vec<Downgrade>,
    pub charges: Vec<Charge>,
    pub reward: f64,
    pub budget_remaining: f64,
    pub true_ci: Option<Vec<f64>>,
    pub failures: Vec<usize>,
    pub terminated: bool,
    pub truncated: bool,
    pub annotation: Option<String>,
    pub suggested: Option<Vec<Action>>,
    pub suggestion_source: Option<String>,
    pub timestamp_ms: Option<u64>,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeSummary {
    pub episode_length: Step,
    pub total_return: f64,
    pub failures_total: usize,
    pub replacements_total: usize,
    pub spent_total: f64,
    pub allocated_total: f64,
    pub budget_utilization_pct: f64,
    /// Mean first-failure time over components, censored at the horizon.
    pub ettf: f64,
    pub terminated: bool,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(Box<LogHeader>),
    Step(Box<StepRecord>),
    Footer(EpisodeSummary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub records: Vec<StepRecord>,
    pub footer: Option<EpisodeSummary>,
}

/// Extra, non-simulated fields attached to a step record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordExtras {
    pub annotation: Option<String>,
    pub suggested: Option<Vec<Action>>,
    pub suggestion_source: Option<String>,
    pub timestamp_ms: Option<u64>,
}

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    hex::encode(h.finalize())
}

/// Chained digest of `record`, ignoring its own `digest` field.
pub fn record_digest(previous: &str, record: &StepRecord) -> String {
    let mut body = record.clone();
    body.digest.clear();
    let json = serde_json::to_vec(&body).expect("records serialize");
    sha256_hex(&[previous.as_bytes(), b"\n", &json])
}

impl EpisodeLog {
    pub fn new(header: LogHeader) -> Self {
        Self {
            header,
            records: Vec::new(),
            footer: None,
        }
    }

    fn last_digest(&self) -> &str {
        self.records
            .last()
            .map(|r| r.digest.as_str())
            .unwrap_or(&self.header.fingerprint)
    }

    /// Builds, digests and appends the record for one step.
    pub fn push_step(
        &mut self,
        actions: &[Action],
        result: &StepResult,
        extras: RecordExtras,
    ) -> &StepRecord {
        let mut record = StepRecord {
            step: result.info.t,
            observation: result.observation.clone(),
            actions: actions.to_vec(),
            downgrades: result.info.downgrades.clone(),
            charges: result.info.charges.clone(),
            reward: result.reward,
            budget_remaining: result.info.budget.remaining,
            true_ci: self
                .header
                .include_true_state
                .then(|| result.info.true_ci.clone()),
            failures: result.info.failures.clone(),
            terminated: result.terminated,
            truncated: result.truncated,
            annotation: extras.annotation,
            suggested: extras.suggested,
            suggestion_source: extras.suggestion_source,
            timestamp_ms: extras.timestamp_ms,
            digest: String::new(),
        };
        record.digest = record_digest(self.last_digest(), &record);
        self.records.push(record);
        self.records.last().expect("just pushed")
    }

    /// Index of the first record whose digest does not match the chain.
    pub fn first_broken_digest(&self) -> Option<usize> {
        let mut prev = self.header.fingerprint.clone();
        for (i, r) in self.records.iter().enumerate() {
            if record_digest(&prev, r) != r.digest {
                return Some(i);
            }
            prev = r.digest.clone();
        }
        None
    }
}

/// Line-by-line writer; each call emits complete lines so the stream can be
/// appended to and read while open.
pub struct LogWriter<W: Write> {
    sink: W,
}

impl<W: Write> LogWriter<W> {
    pub fn new(sink: W) -> Self {
        Self { sink }
    }

    fn line(&mut self, line: &Line) -> Result<()> {
        serde_json::to_writer(&mut self.sink, line)?;
        self.sink.write_all(b"\n")?;
        Ok(())
    }

    pub fn header(&mut self, header: &LogHeader) -> Result<()> {
        self.line(&Line::Header(Box::new(header.clone())))
    }

    pub fn record(&mut self, record: &StepRecord) -> Result<()> {
        self.line(&Line::Step(Box::new(record.clone())))
    }

    pub fn footer(&mut self, summary: &EpisodeSummary) -> Result<()> {
        self.line(&Line::Footer(summary.clone()))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.sink.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.sink
    }
}

pub fn write_episode_log<W: Write>(log: &EpisodeLog, sink: W) -> Result<W> {
    let mut w = LogWriter::new(sink);
    w.header(&log.header)?;
    for r in &log.records {
        w.record(r)?;
    }
    if let Some(f) = &log.footer {
        w.footer(f)?;
    }
    w.flush()?;
    Ok(w.into_inner())
}

pub fn episode_log_to_string(log: &EpisodeLog) -> String {
    let bytes = write_episode_log(log, Vec::new()).expect("writing to memory cannot fail");
    String::from_utf8(bytes).expect("JSON is UTF-8")
}

/// Reads a log. A missing footer is accepted (open episode); a cut or
/// malformed line yields [`Error::PartialLog`] naming the last good step.
pub fn read_episode_log<R: BufRead>(source: R) -> Result<EpisodeLog> {
    let mut header: Option<LogHeader> = None;
    let mut records: Vec<StepRecord> = Vec::new();
    let mut footer = None;
    let partial = |records: &[StepRecord], message: String| Error::PartialLog {
        last_good_step: records.last().map(|r| r.step),
        message,
    };
    for (lineno, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if footer.is_some() {
            return Err(partial(&records, format!("line {}: data after footer", lineno + 1)));
        }
        let parsed: Line = match serde_json::from_str(&line) {
            Ok(l) => l,
            Err(e) => {
                if header.is_none() {
                    if let Some(version) = future_version(&line) {
                        return Err(Error::UnsupportedVersion {
                            found: version,
                            supported: LOG_FORMAT_VERSION,
                        });
                    }
                }
                return Err(partial(&records, format!("line {}: {e}", lineno + 1)));
            }
        };
        match parsed {
            Line::Header(h) => {
                if header.is_some() {
                    return Err(partial(&records, format!("line {}: second header", lineno + 1)));
                }
                if h.format_version > LOG_FORMAT_VERSION {
                    return Err(Error::UnsupportedVersion {
                        found: h.format_version,
                        supported: LOG_FORMAT_VERSION,
                    });
                }
                header = Some(*h);
            }
            Line::Step(r) => {
                if header.is_none() {
                    return Err(partial(&records, "step record before header".into()));
                }
                let expected = records.last().map_or(0, |p| p.step + 1);
                if r.step != expected {
                    return Err(partial(
                        &records,
                        format!("line {}: expected step {expected}, found {}", lineno + 1, r.step),
                    ));
                }
                records.push(*r);
            }
            Line::Footer(f) => {
                if header.is_none() {
                    return Err(partial(&records, "footer before header".into()));
                }
                footer = Some(f);
            }
        }
    }
    let header = header.ok_or_else(|| partial(&records, "missing header".into()))?;
    Ok(EpisodeLog {
        header,
        records,
        footer,
    })
}

fn future_version(line: &str) -> Option<u32> {
    let value: serde_json::Value = serde_json::from_str(line).ok()?;
    let v = value.get("format_version")?.as_u64()? as u32;
    (v > LOG_FORMAT_VERSION).then_some(v)
}

/// Mean first-failure time per component across logs, censored at `horizon`.
///
/// A component's failure time is `step + 1` of the first record listing it
/// among `failures`.
pub fn ettf(logs: &[EpisodeLog], horizon: Step) -> Result<f64> {
    if logs.is_empty() {
        return Err(Error::InvalidArgument("ETTF needs at least one log".into()));
    }
    let n = logs[0].header.n_components;
    let mut total = 0.0;
    let mut count = 0usize;
    for log in logs {
        if log.header.n_components != n {
            return Err(Error::InvalidArgument(
                "logs disagree on component count".into(),
            ));
        }
        let mut first: Vec<Option<Step>> = vec![None; n];
        for r in &log.records {
            for &c in &r.failures {
                first[c].get_or_insert(r.step + 1);
            }
        }
        total += first
            .iter()
            .map(|f| f64::from(f.unwrap_or(horizon).min(horizon)))
            .sum::<f64>();
        count += n;
    }
    Ok(total / count as f64)
}
