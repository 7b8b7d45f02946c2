//! Append-only session logs: one JSON line per record in `{id}.jsonl`,
//! the creation request first and then each applied response in order.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};
use crate::session::{CreateSession, SubmitResponse};

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
enum Record {
    Create { request: CreateSession },
    Response { response: SubmitResponse },
}

/// A session as read back from its log.
#[derive(Debug)]
pub struct LoggedSession {
    pub id: String,
    pub request: CreateSession,
    pub responses: Vec<SubmitResponse>,
}

/// Where session logs live. `Memory` keeps nothing, for tests and demos.
#[derive(Clone, Debug)]
pub enum Store {
    Memory,
    Dir(PathBuf),
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

fn line(record: &Record) -> String {
    let mut s = serde_json::to_string(record).expect("record serializes");
    s.push('\n');
    s
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> ServiceResult<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Store::Dir(dir))
    }

    fn path(dir: &Path, id: &str) -> PathBuf {
        dir.join(format!("{id}.jsonl"))
    }

    fn append(&self, id: &str, record: &Record, create: bool) -> ServiceResult<()> {
        let Store::Dir(dir) = self else { return Ok(()) };
        let mut options = OpenOptions::new();
        if create {
            options.write(true).create_new(true);
        } else {
            options.append(true);
        }
        let mut file = options.open(Self::path(dir, id))?;
        file.write_all(line(record).as_bytes())?;
        file.sync_data()?;
        Ok(())
    }

    pub fn create(&self, id: &str, request: &CreateSession) -> ServiceResult<()> {
        self.append(id, &Record::Create { request: request.clone() }, true)
    }

    pub fn respond(&self, id: &str, response: &SubmitResponse) -> ServiceResult<()> {
        self.append(id, &Record::Response { response: response.clone() }, false)
    }

    /// Reads every log. A final line without its newline is a write cut
    /// short by a crash; it is dropped and the file trimmed so later appends
    /// start clean.
    pub fn load(&self) -> ServiceResult<Vec<LoggedSession>> {
        let Store::Dir(dir) = self else { return Ok(Vec::new()) };
        let mut sessions = Vec::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        paths.sort();
        for path in paths {
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_owned) else { continue };
            if !valid_id(&id) {
                continue;
            }
            let text = fs::read_to_string(&path)?;
            let complete = match text.rfind('\n') {
                Some(end) => end + 1,
                None => 0,
            };
            if complete < text.len() {
                File::options().write(true).open(&path)?.set_len(complete as u64)?;
            }
            let mut request = None;
            let mut responses = Vec::new();
            for (n, l) in text[..complete].lines().enumerate() {
                let record: Record = serde_json::from_str(l)
                    .map_err(|e| ServiceError::Internal(format!("{}: line {}: {e}", path.display(), n + 1)))?;
                match (record, &request) {
                    (Record::Create { request: r }, None) => request = Some(r),
                    (Record::Response { response }, Some(_)) => responses.push(response),
                    _ => {
                        return Err(ServiceError::Internal(format!(
                            "{}: line {}: out of place record",
                            path.display(),
                            n + 1
                        )))
                    }
                }
            }
            // a creation cut short leaves nothing to resume
            let Some(request) = request else { continue };
            sessions.push(LoggedSession { id, request, responses });
        }
        Ok(sessions)
    }
}
