//! CSV files with `#` comment headers recording version, seed and configuration.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hmx_core::experiments::VERSION;

pub struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvOut {
    /// Creates `dir/name`, writes the comment header and the column row.
    pub fn create(dir: &Path, name: &str, seed: u64, config: &str, notes: &[&str], columns: &[&str]) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(name);
        let mut file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        writeln!(file, "# hmx {VERSION}")?;
        writeln!(file, "# seed: {seed}")?;
        writeln!(file, "# config: {config}")?;
        for n in notes {
            writeln!(file, "# {n}")?;
        }
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(columns)?;
        Ok(CsvOut { path, writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

/// Shortest representation that parses back to the same value.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}
