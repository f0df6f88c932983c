//! Output directory handling. JSON results are pretty-printed with a fixed
//! key order so identical inputs give identical bytes; wall-clock data goes
//! to `metadata.json` only.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use lame_spectral::io::{write_binary, write_csv};
use lame_spectral::lattice::VectorField;
use serde::Serialize;

use crate::commands::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Result file wrapper: `{schema_version, command, seed, result}`.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub seed: u64,
    pub result: T,
}

#[derive(Serialize)]
pub struct Metadata<'a> {
    pub schema_version: u32,
    pub command: &'a str,
    pub tool_version: &'a str,
    pub config: String,
    pub seed: u64,
    pub started_unix: f64,
    pub elapsed_seconds: f64,
    pub threads: usize,
}

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn create_file(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.create_file(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.into()))?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn write_result<T: Serialize>(&self, name: &str, command: &str, seed: u64, result: T) -> Result<(), CliError> {
        self.write_json(name, &Envelope { schema_version: SCHEMA_VERSION, command, seed, result })
    }

    /// Rows of any serializable record, with a header line.
    pub fn write_rows<R: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(self.create_file(name)?);
        for row in rows {
            w.serialize(row).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
        }
        w.flush()?;
        Ok(())
    }

    /// `<stem>.csv`, plus `<stem>.bin` when `binary` is set.
    pub fn write_field(&self, stem: &str, f: &VectorField, binary: bool) -> Result<(), CliError> {
        let flat = f.to_flat();
        let mut w = self.create_file(&format!("{stem}.csv"))?;
        write_csv(&flat, &mut w)?;
        w.flush()?;
        if binary {
            let mut w = self.create_file(&format!("{stem}.bin"))?;
            write_binary(&flat, &mut w)?;
            w.flush()?;
        }
        Ok(())
    }
}
