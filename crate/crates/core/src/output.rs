//! CSV outputs. Every number is written as `{:.16e}` (17 significant
//! digits), which round-trips an `f64` exactly.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Formats a number for CSV output.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: String,
    pub threshold: String,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, threshold: impl Into<String>, pass: bool) -> Self {
        Self { name: name.into(), value: num(value), threshold: threshold.into(), pass }
    }

    /// A row whose value is not a number (a verdict, a flag).
    pub fn text(name: impl Into<String>, value: impl Into<String>, threshold: impl Into<String>, pass: bool) -> Self {
        Self { name: name.into(), value: value.into(), threshold: threshold.into(), pass }
    }

    /// `value >= threshold`.
    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(name, value, num(threshold), value >= threshold)
    }

    /// `value <= threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(name, value, num(threshold), value <= threshold)
    }
}

/// Output directory for one run.
#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `rows` under `header` to `name`.
    pub fn write_csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `summary.csv` with the seed as its first row.
    pub fn write_summary(&self, seed: u64, checks: &[Check]) -> Result<()> {
        let seed_row = vec!["seed".to_string(), seed.to_string(), "-".to_string(), "true".to_string()];
        let rows = std::iter::once(seed_row)
            .chain(checks.iter().map(|c| vec![c.name.clone(), c.value.clone(), c.threshold.clone(), c.pass.to_string()]));
        self.write_csv("summary.csv", &["name", "value", "threshold", "pass"], rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, std::f64::consts::PI, 1e-300, -2.5e17, 5.333333333333333] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
