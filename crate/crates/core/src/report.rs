//! CSV tables and run manifests.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::Result;

/// Column-oriented numeric table; headers carry units, e.g. `P_in_W`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{}", self.headers.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut w)?;
        Ok(w.flush()?)
    }
}

/// Nine significant digits in scientific notation; non-finite values as
/// `nan`, `inf`, `-inf`.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.8e}")
    }
}

/// SHA-256 of the resolved configuration text.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let digest = Sha256::digest(cfg.to_toml()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub args: Vec<String>,
    pub config_hash: String,
    pub config: &'a RunConfig,
    pub outputs: Vec<String>,
    /// Command-specific summary (fit results, search optimum, ...).
    pub result: serde_json::Value,
}

impl<'a> Manifest<'a> {
    pub fn new(command: &'a str, config: &'a RunConfig, args: Vec<String>) -> Result<Self> {
        Ok(Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            args,
            config_hash: config_hash(config)?,
            config,
            outputs: Vec::new(),
            result: serde_json::Value::Null,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| crate::Error::Config(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Read `(P_in W, finesse)` pairs from a CSV file with a header row.
pub fn read_finesse_data(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| crate::Error::Config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<(f64, f64)>() {
        out.push(rec.map_err(|e| crate::Error::Config(format!("{}: {e}", path.display())))?);
    }
    Ok(out)
}

/// `dir/stem.csv`
pub fn output_path(dir: &Path, stem: &str, ext: &str) -> PathBuf {
    dir.join(format!("{stem}.{ext}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_value(1.0), "1.00000000e0");
        assert_eq!(format_value(-0.000123456789123), "-1.23456789e-4");
        assert_eq!(format_value(f64::NAN), "nan");
        assert_eq!(format_value(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new(["P_in_W", "finesse"]);
        t.push(vec![0.03, 11.93]);
        assert_eq!(t.to_csv_string(), "P_in_W,finesse\n3.00000000e-2,1.19300000e1\n");
    }

    #[test]
    fn finesse_data_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut t = Table::new(["P_in_W", "finesse"]);
        t.push(vec![0.01, 11.8]);
        t.push(vec![0.05, 9.5]);
        t.save(&path).unwrap();
        assert_eq!(read_finesse_data(&path).unwrap(), vec![(0.01, 11.8), (0.05, 9.5)]);
        std::fs::write(&path, "P_in_W,finesse\n0.01,abc\n").unwrap();
        assert_eq!(read_finesse_data(&path).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        b.drive.power_mw += 1.0;
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
    }
}
