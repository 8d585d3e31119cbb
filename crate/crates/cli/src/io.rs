//! Output directory handling. Everything except `run_metadata.json` is a
//! pure function of the resolved config.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{CliError, CliResult};

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_with(
        &self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> mmaf_core::Result<()>,
    ) -> CliResult<()> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w).map_err(|e| match e {
            mmaf_core::Error::Io(io) => CliError::io(&path, io),
            other => CliError::Core(other),
        })?;
        w.flush().map_err(|e| CliError::io(&path, e))
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> CliResult<()> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    /// Sidecar with the non-reproducible facts of a run.
    pub fn write_metadata(&self, command: &str, workers: usize) -> CliResult<()> {
        #[derive(Serialize)]
        struct Meta<'a> {
            command: &'a str,
            version: &'a str,
            workers: usize,
            finished_unix_seconds: u64,
        }
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        self.write_json(
            "run_metadata.json",
            &Meta {
                command,
                version: env!("CARGO_PKG_VERSION"),
                workers,
                finished_unix_seconds: secs,
            },
        )
    }
}
