//! Append-only telemetry store backed by a JSONL log.
//!
//! Log line schema (field names are fixed):
//!
//! ```json
//! {"seq":1,"device_id":"tank-1","ts":1641013200000,"temp_c":25.56,"ph":8.1,"tds_mg_l":1752.0,"ec_us_cm":45.85,"nh3_ppm":5.95}
//! ```
//!
//! Appends are serialised by a writer mutex and become visible to readers
//! only after the line has been written to the log file. Recovery scans
//! lines; an unterminated final line that does not parse is treated as a
//! torn write, dropped, and truncated away.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{TimestampMs, WaterSample};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store is empty")]
    NoData,
    #[error("out-of-order sample from {device}: ts {ts} not after {last_ts}")]
    OutOfOrder { device: String, ts: TimestampMs, last_ts: TimestampMs },
    #[error("invalid range: from {from} > to {to}")]
    InvalidRange { from: TimestampMs, to: TimestampMs },
    #[error("log {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("log {path} line {line_no}: {reason}")]
    Corrupt { path: PathBuf, line_no: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub sample: WaterSample,
}

#[derive(Debug, Default)]
struct Index {
    records: Vec<StoredRecord>,
    last_ts: HashMap<String, TimestampMs>,
}

impl Index {
    fn admit(&self, sample: &WaterSample) -> Result<u64, StoreError> {
        if let Some(&last_ts) = self.last_ts.get(&sample.device_id) {
            if sample.ts <= last_ts {
                return Err(StoreError::OutOfOrder { device: sample.device_id.clone(), ts: sample.ts, last_ts });
            }
        }
        Ok(self.records.last().map_or(1, |r| r.seq + 1))
    }

    fn push(&mut self, record: StoredRecord) {
        self.last_ts.insert(record.sample.device_id.clone(), record.sample.ts);
        self.records.push(record);
    }
}

struct Log {
    path: PathBuf,
    file: File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecoveryStats {
    pub records: usize,
    /// Bytes of a torn trailing write that were discarded.
    pub dropped_bytes: u64,
}

pub struct TelemetryStore {
    writer: Mutex<Option<Log>>,
    index: RwLock<Index>,
}

impl std::fmt::Debug for TelemetryStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TelemetryStore").field("len", &self.len()).field("path", &self.path()).finish()
    }
}

impl TelemetryStore {
    /// A store with no backing log, used by the simulator and tests.
    pub fn in_memory() -> Self {
        TelemetryStore { writer: Mutex::new(None), index: RwLock::new(Index::default()) }
    }

    /// Opens (or creates) the log at `path`, replaying any existing records.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        Self::recover(path).map(|(store, _)| store)
    }

    /// Rebuilds the store from a log file. A torn final record is dropped
    /// and cut from the file so later appends start on a clean line.
    pub fn recover(path: &Path) -> Result<(Self, RecoveryStats), StoreError> {
        let io_err = |source| StoreError::Io { path: path.to_path_buf(), source };
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(e)),
        };

        let mut index = Index::default();
        let mut good_len = 0usize;
        let mut needs_newline = false;
        let mut offset = 0usize;
        let mut line_no = 0usize;
        while offset < bytes.len() {
            line_no += 1;
            let (line, terminated, next) = match bytes[offset..].iter().position(|&b| b == b'\n') {
                Some(i) => (&bytes[offset..offset + i], true, offset + i + 1),
                None => (&bytes[offset..], false, bytes.len()),
            };
            if line.iter().all(u8::is_ascii_whitespace) {
                offset = next;
                good_len = next;
                continue;
            }
            let parsed: Result<StoredRecord, String> =
                serde_json::from_slice(line).map_err(|e| e.to_string());
            match parsed {
                Ok(record) => {
                    let expected = index.records.last().map(|r| r.seq + 1);
                    if expected.is_some_and(|e| record.seq != e) || record.seq == 0 {
                        return Err(StoreError::Corrupt {
                            path: path.to_path_buf(),
                            line_no,
                            reason: format!("sequence gap at seq {}", record.seq),
                        });
                    }
                    index.admit(&record.sample).map_err(|e| StoreError::Corrupt {
                        path: path.to_path_buf(),
                        line_no,
                        reason: e.to_string(),
                    })?;
                    index.push(record);
                    good_len = next;
                    needs_newline = !terminated;
                }
                Err(_) if !terminated => break,
                Err(reason) => {
                    return Err(StoreError::Corrupt { path: path.to_path_buf(), line_no, reason });
                }
            }
            offset = next;
        }

        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err)?;
        let dropped_bytes = (bytes.len() - good_len) as u64;
        if dropped_bytes > 0 {
            file.set_len(good_len as u64).map_err(io_err)?;
        }
        if needs_newline {
            file.write_all(b"\n").map_err(io_err)?;
        }
        let stats = RecoveryStats { records: index.records.len(), dropped_bytes };
        let store = TelemetryStore {
            writer: Mutex::new(Some(Log { path: path.to_path_buf(), file })),
            index: RwLock::new(index),
        };
        Ok((store, stats))
    }

    pub fn path(&self) -> Option<PathBuf> {
        self.writer.lock().unwrap_or_else(|e| e.into_inner()).as_ref().map(|l| l.path.clone())
    }

    /// Appends a validated sample and returns its sequence number. The log
    /// line is written before the record becomes visible.
    pub fn append(&self, sample: WaterSample) -> Result<u64, StoreError> {
        let mut writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let seq = self.index.read().unwrap_or_else(|e| e.into_inner()).admit(&sample)?;
        let record = StoredRecord { seq, sample };
        if let Some(log) = writer.as_mut() {
            let mut line = serde_json::to_vec(&record).expect("record serialisation is infallible");
            line.push(b'\n');
            log.file
                .write_all(&line)
                .and_then(|_| log.file.flush())
                .map_err(|source| StoreError::Io { path: log.path.clone(), source })?;
        }
        self.index.write().unwrap_or_else(|e| e.into_inner()).push(record);
        Ok(seq)
    }

    /// Forces the log to stable storage.
    pub fn sync(&self) -> Result<(), StoreError> {
        let writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        match writer.as_ref() {
            Some(log) => log.file.sync_all().map_err(|source| StoreError::Io { path: log.path.clone(), source }),
            None => Ok(()),
        }
    }

    pub fn latest(&self) -> Result<StoredRecord, StoreError> {
        self.index.read().unwrap_or_else(|e| e.into_inner()).records.last().cloned().ok_or(StoreError::NoData)
    }

    /// Records with `from <= ts <= to`, in sequence order.
    pub fn range(&self, from: TimestampMs, to: TimestampMs) -> Result<Vec<StoredRecord>, StoreError> {
        if from > to {
            return Err(StoreError::InvalidRange { from, to });
        }
        let index = self.index.read().unwrap_or_else(|e| e.into_inner());
        Ok(index.records.iter().filter(|r| r.sample.ts >= from && r.sample.ts <= to).cloned().collect())
    }

    /// Records with `seq > after`, in order.
    pub fn since(&self, after: u64) -> Vec<StoredRecord> {
        let index = self.index.read().unwrap_or_else(|e| e.into_inner());
        let start = index.records.partition_point(|r| r.seq <= after);
        index.records[start..].to_vec()
    }

    pub fn all(&self) -> Vec<StoredRecord> {
        self.index.read().unwrap_or_else(|e| e.into_inner()).records.clone()
    }

    pub fn len(&self) -> usize {
        self.index.read().unwrap_or_else(|e| e.into_inner()).records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(device: &str, ts: TimestampMs, temp_c: f64) -> WaterSample {
        WaterSample {
            device_id: device.into(),
            ts,
            temp_c,
            ph: 7.2,
            tds_mg_l: 1730.0,
            ec_us_cm: 46.0,
            nh3_ppm: 6.0,
        }
    }

    #[test]
    fn first_append_is_seq_one() {
        let store = TelemetryStore::in_memory();
        assert!(matches!(store.latest(), Err(StoreError::NoData)));
        assert_eq!(store.append(s("a", 10, 25.0)).unwrap(), 1);
        assert_eq!(store.append(s("a", 11, 25.1)).unwrap(), 2);
        assert_eq!(store.latest().unwrap().sample.temp_c, 25.1);
    }

    #[test]
    fn duplicate_timestamp_is_out_of_order() {
        let store = TelemetryStore::in_memory();
        store.append(s("a", 10, 25.0)).unwrap();
        let err = store.append(s("a", 10, 25.0)).unwrap_err();
        assert!(matches!(err, StoreError::OutOfOrder { ts: 10, last_ts: 10, .. }));
        assert!(matches!(store.append(s("a", 9, 25.0)), Err(StoreError::OutOfOrder { .. })));
        // Ordering is per device.
        assert_eq!(store.append(s("b", 5, 25.0)).unwrap(), 2);
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn range_queries() {
        let store = TelemetryStore::in_memory();
        for i in 0..10 {
            store.append(s("a", i * 100, 25.0)).unwrap();
        }
        assert_eq!(store.range(0, 900).unwrap().len(), 10);
        assert!(store.range(5_000, 6_000).unwrap().is_empty());
        let mid: Vec<u64> = store.range(400, 800).unwrap().iter().map(|r| r.seq).collect();
        assert_eq!(mid, vec![5, 6, 7, 8, 9]);
        assert!(matches!(store.range(10, 5), Err(StoreError::InvalidRange { .. })));
        assert_eq!(store.since(7).len(), 3);
    }

    #[test]
    fn log_line_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let store = TelemetryStore::open(&path).unwrap();
        store.append(s("tank-1", 1_641_013_200_000, 25.56)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "{\"seq\":1,\"device_id\":\"tank-1\",\"ts\":1641013200000,\"temp_c\":25.56,\"ph\":7.2,\
             \"tds_mg_l\":1730.0,\"ec_us_cm\":46.0,\"nh3_ppm\":6.0}\n"
        );
    }

    #[test]
    fn reopen_restores_contents_and_continues_seq() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        {
            let store = TelemetryStore::open(&path).unwrap();
            for i in 0..5 {
                store.append(s("a", i, 25.0 + i as f64)).unwrap();
            }
            store.sync().unwrap();
        }
        let (store, stats) = TelemetryStore::recover(&path).unwrap();
        assert_eq!(stats, RecoveryStats { records: 5, dropped_bytes: 0 });
        assert_eq!(store.latest().unwrap().seq, 5);
        assert!(matches!(store.append(s("a", 4, 1.0)), Err(StoreError::OutOfOrder { .. })));
        assert_eq!(store.append(s("a", 5, 1.0)).unwrap(), 6);
    }

    #[test]
    fn torn_tail_is_dropped_and_cut() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        {
            let store = TelemetryStore::open(&path).unwrap();
            for i in 0..4 {
                store.append(s("a", i, 25.0)).unwrap();
            }
        }
        let len = std::fs::metadata(&path).unwrap().len();
        let file = OpenOptions::new().write(true).open(&path).unwrap();
        file.set_len(len - 20).unwrap();
        drop(file);

        let (store, stats) = TelemetryStore::recover(&path).unwrap();
        assert_eq!(store.len(), 3);
        assert!(stats.dropped_bytes > 0);
        assert_eq!(store.append(s("a", 3, 26.0)).unwrap(), 4);
        drop(store);
        let (store, _) = TelemetryStore::recover(&path).unwrap();
        assert_eq!(store.len(), 4);
        assert_eq!(store.latest().unwrap().sample.temp_c, 26.0);
    }

    #[test]
    fn missing_final_newline_keeps_complete_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        {
            let store = TelemetryStore::open(&path).unwrap();
            store.append(s("a", 1, 25.0)).unwrap();
            store.append(s("a", 2, 25.0)).unwrap();
        }
        let len = std::fs::metadata(&path).unwrap().len();
        OpenOptions::new().write(true).open(&path).unwrap().set_len(len - 1).unwrap();
        let (store, _) = TelemetryStore::recover(&path).unwrap();
        assert_eq!(store.len(), 2);
        store.append(s("a", 3, 25.0)).unwrap();
        drop(store);
        assert_eq!(TelemetryStore::open(&path).unwrap().len(), 3);
    }

    #[test]
    fn empty_and_missing_logs_recover_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, b"").unwrap();
        assert!(TelemetryStore::open(&path).unwrap().is_empty());
        assert!(TelemetryStore::open(&dir.path().join("new.jsonl")).unwrap().is_empty());
    }

    #[test]
    fn mid_file_garbage_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "not json\n{}\n").unwrap();
        assert!(matches!(TelemetryStore::open(&path), Err(StoreError::Corrupt { line_no: 1, .. })));
    }

    #[test]
    fn unreadable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(TelemetryStore::open(dir.path()), Err(StoreError::Io { .. })));
    }

    proptest! {
        #[test]
        fn adjacent_ranges_partition(
            gaps in prop::collection::vec(1i64..50, 1..60),
            a in 0i64..1000, b in 0i64..1000, c in 0i64..1000,
        ) {
            let store = TelemetryStore::in_memory();
            let mut ts = 0;
            for g in gaps {
                ts += g;
                store.append(s("a", ts, 25.0)).unwrap();
            }
            let mut cuts = [a, b, c];
            cuts.sort();
            let [a, b, c] = cuts;
            let mut joined = store.range(a, b).unwrap();
            if b < c {
                joined.extend(store.range(b + 1, c).unwrap());
            }
            prop_assert_eq!(joined, store.range(a, c).unwrap());
        }
    }
}
