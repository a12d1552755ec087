use rusqlite::Connection;

use super::{check_finite, check_table_name, BackendAdapter, Capabilities, Location};
use crate::error::{Error, Result};
use crate::state::StateRow;

const NAME: &str = "sqlite";

pub struct SqliteBackend {
    conn: Connection,
}

fn err(e: rusqlite::Error) -> Error {
    Error::backend(NAME, e)
}

impl SqliteBackend {
    pub fn open(location: &Location) -> Result<Self> {
        let conn = match location {
            Location::InMemory => Connection::open_in_memory(),
            Location::File(path) => Connection::open(path),
        }
        .map_err(err)?;
        Ok(SqliteBackend { conn })
    }
}

impl BackendAdapter for SqliteBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            name: NAME.into(),
            version: rusqlite::version().into(),
            in_memory: true,
            on_disk: true,
        }
    }

    fn execute(&mut self, sql: &str) -> Result<u64> {
        self.conn.execute(sql, []).map(|n| n as u64).map_err(err)
    }

    fn query_state(&mut self, table: &str) -> Result<Vec<StateRow>> {
        check_table_name(NAME, table)?;
        let mut stmt = self
            .conn
            .prepare(&format!("SELECT s, r, i FROM {table} ORDER BY s"))
            .map_err(err)?;
        let rows = stmt
            .query_map([], |row| {
                Ok(StateRow::new(
                    row.get::<_, i64>(0)? as u64,
                    row.get(1)?,
                    row.get(2)?,
                ))
            })
            .map_err(err)?
            .collect::<rusqlite::Result<Vec<_>>>()
            .map_err(err)?;
        check_finite(NAME, &rows)?;
        Ok(rows)
    }

    fn table_row_count(&mut self, table: &str) -> Result<u64> {
        check_table_name(NAME, table)?;
        self.conn
            .query_row(&format!("SELECT COUNT(*) FROM {table}"), [], |r| r.get::<_, i64>(0))
            .map(|n| n as u64)
            .map_err(err)
    }

    fn close(self: Box<Self>) -> Result<()> {
        self.conn.close().map_err(|(_, e)| err(e))
    }
}
