//! Embedded edge data warehouse: append-only structured tables with
//! time-range queries plus a key/value blob store.
//!
//! Rows are schema-checked on the way in and kept as their canonical JSON, so
//! a query returns exactly what was written. [`Warehouse::persist`] writes
//! `warehouse/<table>.ndjson` and `warehouse/blobs/<key>` under a run's output
//! directory.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use parking_lot::RwLock;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::apps::{NetworkSnapshot, TrafficRecord};
use crate::harness::LatencySample;
use crate::model::Bsm;
use crate::security::QuarantineRecord;

#[derive(Debug, Error)]
pub enum WarehouseError {
    #[error("unknown table {0:?}")]
    UnknownTable(String),
    #[error("row {index} does not match the {table} schema: {msg}")]
    Schema { table: Table, index: usize, msg: String },
    #[error("query range start {t0_ms} is after end {t1_ms}")]
    BadRange { t0_ms: u64, t1_ms: u64 },
    #[error("invalid blob key {0:?}")]
    BadKey(String),
    #[error("blob {0:?} not found")]
    NotFound(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table {
    Bsm,
    TrafficRecord,
    Snapshot,
    LatencySample,
    Quarantine,
}

impl Table {
    pub const ALL: [Table; 5] = [Table::Bsm, Table::TrafficRecord, Table::Snapshot, Table::LatencySample, Table::Quarantine];

    pub fn name(self) -> &'static str {
        match self {
            Table::Bsm => "bsm",
            Table::TrafficRecord => "traffic_record",
            Table::Snapshot => "snapshot",
            Table::LatencySample => "latency_sample",
            Table::Quarantine => "quarantine",
        }
    }

    /// Validates one row and returns its time key and canonical encoding.
    fn check(self, row: &Value) -> Result<(u64, String), String> {
        fn typed<T: DeserializeOwned + Serialize>(row: &Value, t: impl Fn(&T) -> u64) -> Result<(u64, String), String> {
            let v: T = serde_json::from_value(row.clone()).map_err(|e| e.to_string())?;
            Ok((t(&v), serde_json::to_string(&v).expect("row encodes")))
        }
        match self {
            Table::Bsm => typed(row, |b: &Bsm| b.t_generated_ms),
            Table::TrafficRecord => typed(row, |r: &TrafficRecord| r.t0_ms),
            Table::Snapshot => typed(row, |s: &NetworkSnapshot| s.t0_ms),
            Table::LatencySample => typed(row, |s: &LatencySample| s.t_done_ms),
            Table::Quarantine => typed(row, |q: &QuarantineRecord| q.t_ms),
        }
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Table {
    type Err = WarehouseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Table::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| WarehouseError::UnknownTable(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blob {
    pub bytes: Vec<u8>,
    pub content_type: String,
}

#[derive(Default)]
pub struct Warehouse {
    tables: RwLock<BTreeMap<Table, Vec<(u64, String)>>>,
    blobs: RwLock<BTreeMap<String, Blob>>,
}

impl Warehouse {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `rows` to `table` after checking every row; on any mismatch
    /// nothing is written.
    pub fn put_rows(&self, table: &str, rows: &[Value]) -> Result<usize, WarehouseError> {
        let table: Table = table.parse()?;
        let checked = rows
            .iter()
            .enumerate()
            .map(|(index, r)| table.check(r).map_err(|msg| WarehouseError::Schema { table, index, msg }))
            .collect::<Result<Vec<_>, _>>()?;
        let n = checked.len();
        self.tables.write().entry(table).or_default().extend(checked);
        Ok(n)
    }

    /// Typed convenience over [`Warehouse::put_rows`].
    pub fn put<T: Serialize>(&self, table: Table, rows: &[T]) -> Result<usize, WarehouseError> {
        let values: Vec<Value> = rows.iter().map(|r| serde_json::to_value(r).expect("row encodes")).collect();
        self.put_rows(table.name(), &values)
    }

    /// Rows with `t_ms` in `[t0_ms, t1_ms)`, in insertion order.
    pub fn query(&self, table: &str, t0_ms: u64, t1_ms: u64) -> Result<Vec<Value>, WarehouseError> {
        Ok(self
            .query_raw(table, t0_ms, t1_ms)?
            .iter()
            .map(|s| serde_json::from_str(s).expect("stored rows are valid JSON"))
            .collect())
    }

    pub fn query_as<T: DeserializeOwned>(&self, table: Table, t0_ms: u64, t1_ms: u64) -> Result<Vec<T>, WarehouseError> {
        Ok(self
            .query_raw(table.name(), t0_ms, t1_ms)?
            .iter()
            .map(|s| serde_json::from_str(s).expect("stored rows match their schema"))
            .collect())
    }

    fn query_raw(&self, table: &str, t0_ms: u64, t1_ms: u64) -> Result<Vec<String>, WarehouseError> {
        let table: Table = table.parse()?;
        if t0_ms > t1_ms {
            return Err(WarehouseError::BadRange { t0_ms, t1_ms });
        }
        let tables = self.tables.read();
        Ok(tables
            .get(&table)
            .map(|rows| rows.iter().filter(|(t, _)| (t0_ms..t1_ms).contains(t)).map(|(_, s)| s.clone()).collect())
            .unwrap_or_default())
    }

    pub fn len(&self, table: Table) -> usize {
        self.tables.read().get(&table).map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.tables.read().values().all(Vec::is_empty) && self.blobs.read().is_empty()
    }

    pub fn put_blob(&self, key: &str, bytes: Vec<u8>, content_type: &str) -> Result<(), WarehouseError> {
        check_key(key)?;
        self.blobs.write().insert(key.to_owned(), Blob { bytes, content_type: content_type.to_owned() });
        Ok(())
    }

    pub fn get_blob(&self, key: &str) -> Result<Blob, WarehouseError> {
        self.blobs.read().get(key).cloned().ok_or_else(|| WarehouseError::NotFound(key.to_owned()))
    }

    /// Writes every table (empty ones included) and blob under `out/warehouse`.
    pub fn persist(&self, out: &Path) -> Result<(), WarehouseError> {
        let dir = out.join("warehouse");
        fs::create_dir_all(&dir)?;
        let tables = self.tables.read();
        for table in Table::ALL {
            let mut f = std::io::BufWriter::new(fs::File::create(dir.join(format!("{table}.ndjson")))?);
            for (_, row) in tables.get(&table).into_iter().flatten() {
                f.write_all(row.as_bytes())?;
                f.write_all(b"\n")?;
            }
            f.flush()?;
        }
        let blobs = self.blobs.read();
        if !blobs.is_empty() {
            let bdir = dir.join("blobs");
            fs::create_dir_all(&bdir)?;
            let mut index = String::new();
            for (k, b) in blobs.iter() {
                fs::write(bdir.join(k), &b.bytes)?;
                index.push_str(&serde_json::json!({"key": k, "content_type": b.content_type, "len": b.bytes.len()}).to_string());
                index.push('\n');
            }
            fs::write(dir.join("blobs.ndjson"), index)?;
        }
        Ok(())
    }
}

// Keys double as file names on disk.
fn check_key(key: &str) -> Result<(), WarehouseError> {
    let ok = !key.is_empty()
        && key != "."
        && key != ".."
        && key.bytes().all(|b| b.is_ascii_alphanumeric() || b"._-".contains(&b));
    if ok {
        Ok(())
    } else {
        Err(WarehouseError::BadKey(key.to_owned()))
    }
}
