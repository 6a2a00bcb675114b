//! CSV and JSON emission of convergence reports and the run manifest.

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};
use crate::lab::ConvergenceReport;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const CSV_HEADER: &str = "abscissa,distance,fitted_exponent,verdict";

/// Round-trip float: 17 significant digits in scientific form.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn csv_string(r: &ConvergenceReport) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    let fit = fmt_float(r.fitted_exponent.unwrap_or(f64::NAN));
    for (a, d) in r.abscissae.iter().zip(&r.distances) {
        let _ = writeln!(s, "{},{},{},{}", fmt_float(*a), fmt_float(*d), fit, r.verdict());
    }
    s
}

pub fn json_string(r: &ConvergenceReport) -> Result<String> {
    serde_json::to_string_pretty(r).map_err(|e| LabError::Io(e.to_string()))
}

pub fn parse_json(text: &str) -> Result<ConvergenceReport> {
    serde_json::from_str(text).map_err(|e| LabError::Io(e.to_string()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write(path: &Path, text: &str) -> Result<String> {
    std::fs::write(path, text).map_err(|e| LabError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(sha256_hex(text.as_bytes()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub versions: BTreeMap<String, String>,
    pub tolerances: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, String>,
    pub files: Vec<FileEntry>,
}

pub fn versions() -> BTreeMap<String, String> {
    let mut v = BTreeMap::new();
    v.insert("lrdirac".into(), env!("CARGO_PKG_VERSION").into());
    v.insert("target_arch".into(), std::env::consts::ARCH.into());
    v.insert("target_os".into(), std::env::consts::OS.into());
    v
}

/// Writes `<stem>-<study>.csv/.json` per report and `manifest-<stem>.json`.
pub fn emit_run(
    dir: &Path,
    stem: &str,
    reports: &[ConvergenceReport],
    config: &ExperimentConfig,
    tolerances: BTreeMap<String, f64>,
) -> Result<(PathBuf, RunManifest)> {
    std::fs::create_dir_all(dir).map_err(|e| LabError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let mut files = Vec::new();
    let mut verdicts = BTreeMap::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for r in reports {
        let count = seen.entry(r.study.clone()).or_insert(0);
        *count += 1;
        let name = if *count == 1 { format!("{stem}-{}", r.study) } else { format!("{stem}-{}-{}", r.study, count) };
        for (ext, text) in [("csv", csv_string(r)), ("json", json_string(r)?)] {
            let file = format!("{name}.{ext}");
            let sha256 = write(&dir.join(&file), &text)?;
            files.push(FileEntry { path: file, sha256 });
        }
        verdicts.insert(name, r.verdict().to_string());
    }
    let manifest = RunManifest {
        subcommand: stem.to_string(),
        config: config.to_json(),
        versions: versions(),
        tolerances,
        verdicts,
        files,
    };
    let path = dir.join(format!("manifest-{stem}.json"));
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| LabError::Io(e.to_string()))?;
    write(&path, &text)?;
    Ok((path, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(n: usize) -> ConvergenceReport {
        ConvergenceReport {
            study: "time-convergence".into(),
            abscissa: "t".into(),
            abscissae: (0..n).map(|i| 5.0 * 2f64.powi(i as i32)).collect(),
            distances: (0..n).map(|i| 0.1 / (i as f64 + 1.0)).collect(),
            fitted_exponent: if n > 1 { Some(-0.7) } else { None },
            pass: true,
            notes: vec![],
            metrics: BTreeMap::new(),
        }
    }

    #[test]
    fn empty_ladder_is_header_only() {
        assert_eq!(csv_string(&report(0)), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn four_rows_with_round_trip_floats() {
        let s = csv_string(&report(4));
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 5);
        let f: Vec<&str> = lines[3].split(',').collect();
        assert_eq!(f[0], "2.0000000000000000e1");
        assert_eq!(f[1].parse::<f64>().unwrap(), 0.1 / 3.0);
        assert_eq!(f[3], "PASS");
    }

    #[test]
    fn json_roundtrip() {
        let r = report(4);
        assert_eq!(parse_json(&json_string(&r).unwrap()).unwrap(), r);
    }
}
