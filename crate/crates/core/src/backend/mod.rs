//! Embedded SQL engines behind one adapter contract.
//!
//! A session is single-threaded: statements run in order and each observes
//! the effects of the ones before it. Concurrent simulations open separate
//! sessions.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::state::StateRow;

#[cfg(feature = "duckdb")]
mod duckdb;
pub mod reference;
#[cfg(feature = "sqlite")]
mod sqlite;

pub use reference::ReferenceBackend;

/// Where a session keeps its database.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Location {
    InMemory,
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Capabilities {
    pub name: String,
    pub version: String,
    pub in_memory: bool,
    pub on_disk: bool,
}

/// One open database session.
pub trait BackendAdapter {
    fn capabilities(&self) -> Capabilities;

    /// Runs one statement and returns the number of affected rows.
    fn execute(&mut self, sql: &str) -> Result<u64>;

    /// Reads a state table `(s, r, i)`, sorted ascending by `s`.
    fn query_state(&mut self, table: &str) -> Result<Vec<StateRow>>;

    fn table_row_count(&mut self, table: &str) -> Result<u64>;

    fn close(self: Box<Self>) -> Result<()>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Built-in interpreter for the SQL subset the code generator emits.
    Reference,
    Sqlite,
    DuckDb,
}

impl BackendKind {
    pub const ALL: [BackendKind; 3] = [BackendKind::Reference, BackendKind::Sqlite, BackendKind::DuckDb];

    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Reference => "reference",
            BackendKind::Sqlite => "sqlite",
            BackendKind::DuckDb => "duckdb",
        }
    }

    /// Whether support for this engine was compiled in.
    pub fn is_available(self) -> bool {
        match self {
            BackendKind::Reference => true,
            BackendKind::Sqlite => cfg!(feature = "sqlite"),
            BackendKind::DuckDb => cfg!(feature = "duckdb"),
        }
    }

    /// Engines compiled into this build, in a fixed order.
    pub fn available() -> Vec<BackendKind> {
        Self::ALL.into_iter().filter(|k| k.is_available()).collect()
    }

    pub fn available_names() -> Vec<String> {
        Self::available().iter().map(|k| k.name().to_string()).collect()
    }

    pub fn supports_on_disk(self) -> bool {
        !matches!(self, BackendKind::Reference)
    }

    pub fn open(self, location: &Location) -> Result<Box<dyn BackendAdapter>> {
        if !self.is_available() {
            return Err(Error::backend(self.name(), "support not compiled into this build"));
        }
        if matches!(location, Location::File(_)) && !self.supports_on_disk() {
            return Err(Error::backend(self.name(), "on-disk databases are not supported"));
        }
        match self {
            BackendKind::Reference => Ok(Box::new(ReferenceBackend::new())),
            #[cfg(feature = "sqlite")]
            BackendKind::Sqlite => Ok(Box::new(sqlite::SqliteBackend::open(location)?)),
            #[cfg(feature = "duckdb")]
            BackendKind::DuckDb => Ok(Box::new(duckdb::DuckDbBackend::open(location)?)),
            #[allow(unreachable_patterns)]
            _ => unreachable!("availability checked above"),
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::available()
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownBackend {
                name: s.to_string(),
                available: Self::available_names(),
            })
    }
}

/// Rejects anything but plain lowercase identifiers before splicing a
/// table name into SQL.
pub(crate) fn check_table_name(backend: &str, table: &str) -> Result<()> {
    let ok = !table.is_empty()
        && table
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        && !table.starts_with(|c: char| c.is_ascii_digit());
    if ok {
        Ok(())
    } else {
        Err(Error::backend(backend, format!("invalid table name `{table}`")))
    }
}

pub(crate) fn check_finite(backend: &str, rows: &[StateRow]) -> Result<()> {
    match rows.iter().find(|row| !row.r.is_finite() || !row.i.is_finite()) {
        Some(row) => Err(Error::Numeric(format!(
            "{backend}: non-finite amplitude ({}, {}) at s = {}",
            row.r, row.i, row.s
        ))),
        None => Ok(()),
    }
}

/// Size of a database file plus any sidecar files the engine keeps next
/// to it (write-ahead logs and the like).
pub fn database_size(path: &Path) -> Option<u64> {
    let main = std::fs::metadata(path).ok()?.len();
    let dir = path.parent()?;
    let stem = path.file_name()?.to_string_lossy().into_owned();
    let sidecars: u64 = std::fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok())
        .filter(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name != stem && name.starts_with(&stem)
        })
        .filter_map(|e| e.metadata().ok())
        .map(|m| m.len())
        .sum();
    Some(main + sidecars)
}
