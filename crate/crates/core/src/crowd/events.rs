//! Journal records: one JSON object per line, tagged by `type`.

use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use super::{AnnotationTask, Answer, CrowdConfig, TaskId};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Configured { config: CrowdConfig },
    TaskCreated { task: AnnotationTask },
    WorkerRegistered { worker: String },
    Served { worker: String, task: TaskId, token: u64 },
    Answered { answer: Answer },
    WorkerRejected { worker: String },
}

/// Parses a journal; blank lines are skipped and errors name the line.
pub fn read_events<R: Read>(input: R) -> Result<Vec<Event>> {
    let mut out = Vec::new();
    for (k, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("journal line {}: {e}", k + 1)))?;
        out.push(ev);
    }
    Ok(out)
}
