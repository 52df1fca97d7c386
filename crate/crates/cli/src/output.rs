//! Result files: CSV tables, JSON records and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::Config;
use crate::CliError;

/// 17 significant digits, so every value round-trips.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// An output directory that remembers what it wrote, so a failed command
/// can take its partial outputs back.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        self.written.push(path.clone());
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
    }

    pub fn write_csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.path(name);
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| CliError::io(&path, std::io::Error::other(e));
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::io(&path, std::io::Error::other(e.to_string())))?;
        self.write_bytes(name, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::io(&self.path(name), e.into()))?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    /// Removes every file written so far.
    pub fn discard(self) {
        for path in self.written {
            let _ = fs::remove_file(path);
        }
    }
}

#[derive(Serialize)]
pub struct Manifest<'a, P: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub master_seed: u64,
    pub workers: usize,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub files: Vec<String>,
    pub parameters: P,
    pub config: &'a Config,
}

impl<P: Serialize> Manifest<'_, P> {
    pub fn write(mut self, out: &mut OutputDir) -> Result<(), CliError> {
        self.files = out
            .written
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect();
        out.write_json("manifest.json", &self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(float(0.1), "1.0000000000000001e-1");
        assert_eq!(float(-2.0), "-2.0000000000000000e0");
        assert_eq!(float(0.0), "0.0000000000000000e0");
        for v in [0.1, 1.0 / 3.0, 6.02e23, -1e-300] {
            assert_eq!(float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_layout_and_discard() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        out.write_csv("t.csv", &["a", "b"], vec![vec!["1".into(), "x,y".into()]]).unwrap();
        let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(text, "a,b\n1,\"x,y\"\n");
        out.discard();
        assert!(!dir.path().join("t.csv").exists());
    }
}
