//! On-disk layout, one directory per session:
//!
//! * `events.jsonl`: append-only `{"seq": n, "event": {...}}` lines
//! * `snapshot.json`: `{"seq": n, "session": {...}}` covering events up to `seq`
//!
//! Compaction writes a snapshot (via rename) and then empties the log. Log
//! lines at or below the snapshot's `seq` are skipped on load, so a crash
//! between the two steps loses nothing and applies nothing twice.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::session::{Event, Session};

const EVENTS: &str = "events.jsonl";
const SNAPSHOT: &str = "snapshot.json";

#[derive(Serialize, Deserialize)]
struct LogLine {
    seq: u64,
    event: Event,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    session: Session,
}

/// A session rebuilt from disk with the sequence number of its last event.
pub struct Loaded {
    pub session: Session,
    pub seq: u64,
    pub uncompacted: usize,
}

#[derive(Debug, Clone)]
pub struct Persistence {
    root: PathBuf,
}

impl Persistence {
    pub fn open(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, session_id: &str) -> PathBuf {
        self.root.join(session_id)
    }

    pub fn append(&self, session_id: &str, seq: u64, event: &Event) -> std::io::Result<()> {
        let dir = self.dir(session_id);
        fs::create_dir_all(&dir)?;
        let mut line = serde_json::to_vec(&LogLine { seq, event: event.clone() })?;
        line.push(b'\n');
        let mut file = OpenOptions::new().create(true).append(true).open(dir.join(EVENTS))?;
        file.write_all(&line)?;
        file.sync_data()
    }

    pub fn compact(&self, session: &Session, seq: u64) -> std::io::Result<()> {
        let dir = self.dir(&session.session_id);
        fs::create_dir_all(&dir)?;
        let tmp = dir.join("snapshot.json.tmp");
        {
            let mut file = File::create(&tmp)?;
            serde_json::to_writer(&mut file, &Snapshot { seq, session: session.clone() })?;
            file.sync_all()?;
        }
        fs::rename(&tmp, dir.join(SNAPSHOT))?;
        File::create(dir.join(EVENTS))?.sync_all()
    }

    pub fn load(&self, session_id: &str) -> Result<Loaded, ServiceError> {
        let dir = self.dir(session_id);
        let corrupt = |what: &str, e: &dyn std::fmt::Display| {
            ServiceError::Corrupt(format!("{}: {what}: {e}", dir.display()))
        };
        let (mut session, mut seq) = match fs::read(dir.join(SNAPSHOT)) {
            Ok(bytes) => {
                let snap: Snapshot = serde_json::from_slice(&bytes).map_err(|e| corrupt(SNAPSHOT, &e))?;
                (Some(snap.session), snap.seq)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => (None, 0),
            Err(e) => return Err(e.into()),
        };
        let mut uncompacted = 0;
        match File::open(dir.join(EVENTS)) {
            Ok(file) => {
                for (n, line) in BufReader::new(file).lines().enumerate() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let entry: LogLine = match serde_json::from_str(&line) {
                        Ok(entry) => entry,
                        // a torn final write is dropped; anything else is corruption
                        Err(e) if e.is_eof() => break,
                        Err(e) => return Err(corrupt(&format!("{EVENTS} line {}", n + 1), &e)),
                    };
                    if entry.seq <= seq && session.is_some() {
                        continue;
                    }
                    match session.as_mut() {
                        None => session = Some(Session::from_created(&entry.event)?),
                        Some(s) => s.apply(&entry.event)?,
                    }
                    seq = entry.seq;
                    uncompacted += 1;
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        let session = session.ok_or_else(|| ServiceError::Corrupt(format!("{}: no session data", dir.display())))?;
        Ok(Loaded { session, seq, uncompacted })
    }

    pub fn load_all(&self) -> Result<Vec<Loaded>, ServiceError> {
        let mut ids: Vec<String> = fs::read_dir(&self.root)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        ids.iter().map(|id| self.load(id)).collect()
    }
}
