//! On-disk state: one append-only JSON-lines event log per community and a
//! status snapshot.
//!
//! Each log starts with a header line
//! `{"format":"cura-vote-log","version":1,"community":"..."}` followed by
//! one event per line. Events carry a sequence number that is global across
//! communities, so replaying every log in sequence order reproduces the
//! model's finetuning history exactly.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{CommunityConfig, PostStatus};
use crate::dataset::{PostRecord, VoteRecord};
use crate::error::{Error, Result};

pub const LOG_FORMAT: &str = "cura-vote-log";
pub const LOG_VERSION: u32 = 1;
pub const SNAPSHOT_FORMAT: &str = "cura-status-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;
const LOG_SUFFIX: &str = ".log.jsonl";
pub const SNAPSHOT_FILE: &str = "status.snapshot.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub community: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Config {
        seq: u64,
        at: DateTime<Utc>,
        config: CommunityConfig,
    },
    Submit {
        seq: u64,
        post: PostRecord,
    },
    Vote {
        seq: u64,
        vote: VoteRecord,
    },
}

impl Event {
    pub fn seq(&self) -> u64 {
        match self {
            Event::Config { seq, .. } | Event::Submit { seq, .. } | Event::Vote { seq, .. } => *seq,
        }
    }

    pub fn community(&self) -> &str {
        match self {
            Event::Config { config, .. } => &config.community,
            Event::Submit { post, .. } => &post.community,
            Event::Vote { vote, .. } => &vote.community,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotFile {
    pub format: String,
    pub version: u32,
    /// Sequence number of the last event reflected in `statuses`.
    pub seq: u64,
    pub statuses: BTreeMap<String, PostStatus>,
}

/// Community names may contain anything, so bytes outside `[A-Za-z0-9-]`
/// are written as `_xx`.
fn file_stem(community: &str) -> String {
    let mut out = String::with_capacity(community.len());
    for b in community.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' {
            out.push(b as char);
        } else {
            out.push_str(&format!("_{b:02x}"));
        }
    }
    out
}

pub(crate) struct EventLog {
    dir: PathBuf,
    files: HashMap<String, File>,
}

impl EventLog {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir,
            files: HashMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append(&mut self, event: &Event) -> Result<()> {
        let community = event.community().to_string();
        let path = self.dir.join(format!("{}{LOG_SUFFIX}", file_stem(&community)));
        if !self.files.contains_key(&community) {
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            let empty = file.metadata().map_err(|e| Error::io(&path, e))?.len() == 0;
            if empty {
                let header = LogHeader {
                    format: LOG_FORMAT.into(),
                    version: LOG_VERSION,
                    community: community.clone(),
                };
                let mut line = serde_json::to_string(&header)?;
                line.push('\n');
                file.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))?;
            }
            self.files.insert(community.clone(), file);
        }
        let mut line = serde_json::to_string(event)?;
        line.push('\n');
        let file = self.files.get_mut(&community).expect("opened above");
        file.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))?;
        file.flush().map_err(|e| Error::io(&path, e))
    }

    pub fn write_snapshot(&self, snapshot: &SnapshotFile) -> Result<()> {
        let path = self.dir.join(SNAPSHOT_FILE);
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let bytes = serde_json::to_vec_pretty(snapshot)?;
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads one community log, checking its header.
pub fn read_log(path: &Path) -> Result<(LogHeader, Vec<Event>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, "missing header"))?
        .map_err(|e| Error::io(path, e))?;
    let header: LogHeader =
        serde_json::from_str(&first).map_err(|e| parse_error(path, 1, format!("bad header: {e}")))?;
    if header.format != LOG_FORMAT {
        return Err(parse_error(path, 1, format!("not a vote log (format `{}`)", header.format)));
    }
    if header.version != LOG_VERSION {
        return Err(parse_error(path, 1, format!("unsupported log version {}", header.version)));
    }
    let mut events = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(&line).map_err(|e| parse_error(path, i as u64 + 2, e.to_string()))?;
        if event.community() != header.community {
            return Err(parse_error(
                path,
                i as u64 + 2,
                format!("event for `{}` in log of `{}`", event.community(), header.community),
            ));
        }
        events.push(event);
    }
    Ok((header, events))
}

/// Every event under `dir` in sequence order.
pub(crate) fn read_all(dir: &Path) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(LOG_SUFFIX)) {
            events.extend(read_log(&path)?.1);
        }
    }
    events.sort_by_key(Event::seq);
    if let Some(w) = events.windows(2).find(|w| w[0].seq() == w[1].seq()) {
        return Err(Error::Store(format!("duplicate event sequence number {}", w[0].seq())));
    }
    Ok(events)
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<SnapshotFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let snapshot: SnapshotFile = serde_json::from_slice(&bytes)?;
    if snapshot.format != SNAPSHOT_FORMAT || snapshot.version != SNAPSHOT_VERSION {
        return Err(Error::Store(format!(
            "{}: unsupported snapshot {} v{}",
            path.display(),
            snapshot.format,
            snapshot.version
        )));
    }
    Ok(snapshot)
}
