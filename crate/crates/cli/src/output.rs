//! Output directory helpers. Every file is written whole by one caller.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, WriteError};

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::Write {
            path: root.to_path_buf(),
            source: e.into(),
        })?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn subdir(&self, name: &str) -> Result<Self, CliError> {
        Self::create(&self.path(name))
    }

    /// Opens `name`, hands a buffered writer to `f` and flushes it.
    pub fn write_with<F, E>(&self, name: &str, f: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), E>,
        E: Into<WriteError>,
    {
        let path = self.path(name);
        let wrap = |source: WriteError| CliError::Write {
            path: path.clone(),
            source,
        };
        let file = File::create(&path).map_err(|e| wrap(e.into()))?;
        let mut w = BufWriter::new(file);
        f(&mut w).map_err(|e| wrap(e.into()))?;
        w.flush().map_err(|e| wrap(e.into()))?;
        Ok(path)
    }

    pub fn write_csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        self.write_with(name, |w| -> Result<(), csv::Error> {
            let mut c = csv::Writer::from_writer(w);
            for r in rows {
                c.serialize(r)?;
            }
            c.flush()?;
            Ok(())
        })
    }

    /// CSV with an explicit header, for tables whose columns depend on input.
    pub fn write_table(
        &self,
        name: &str,
        header: &[String],
        rows: &[Vec<String>],
    ) -> Result<PathBuf, CliError> {
        self.write_with(name, |w| -> Result<(), csv::Error> {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(header)?;
            for r in rows {
                c.write_record(r)?;
            }
            c.flush()?;
            Ok(())
        })
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.write_with(name, |w| -> Result<(), serde_json::Error> {
            serde_json::to_writer_pretty(&mut *w, value)
        })
    }
}
