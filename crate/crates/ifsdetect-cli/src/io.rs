//! File formats: strict CSV parsers, float formatting that survives a round
//! trip, and the `key=value` config/manifest dialect.
//!
//! Every writer builds the complete byte string before touching the disk, so
//! a rerun with the same inputs produces identical files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ifsdetect::embedding::ScalarSeries;
use ifsdetect::geometry::PointCloud;

/// Errors carry the exit code policy: input problems exit 1, data without
/// switching structure exits 2, internal contradictions exit 3.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    NoStructure(String),
    Integrity(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::NoStructure(_) => 2,
            CliError::Integrity(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) => write!(f, "{msg}"),
            CliError::NoStructure(msg) => write!(f, "{msg}"),
            CliError::Integrity(msg) => write!(f, "integrity violation: {msg}"),
        }
    }
}

impl From<ifsdetect::Error> for CliError {
    fn from(err: ifsdetect::Error) -> Self {
        match err {
            ifsdetect::Error::Integrity { .. } => CliError::Integrity(err.to_string()),
            ifsdetect::Error::Structure { .. } => CliError::NoStructure(err.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// 17 significant digits: enough for any f64 to parse back bit-identically.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

/// One real per line; a single non-numeric first line is treated as a header
/// and skipped.
pub fn parse_series_csv(path: &Path) -> CliResult<ScalarSeries> {
    let text = read(path)?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        match line.trim().parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if lineno == 0 => continue, // header
            Err(_) => {
                return Err(CliError::Input(format!(
                    "{} line {}: expected a number, found {line:?}",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    ScalarSeries::new(values).map_err(CliError::from)
}

/// Rows `t,c1,...,cd`; accepted in any order as long as the indices are
/// exactly 0..n with no gap or duplicate. A non-numeric first line is
/// treated as a header and skipped.
pub fn parse_cloud_csv(path: &Path) -> CliResult<PointCloud> {
    let text = read(path)?;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut fields = line.split(',');
        let index = match fields.next().map(str::trim).map(str::parse::<usize>) {
            Some(Ok(t)) => t,
            _ if lineno == 0 => continue, // header
            _ => {
                return Err(CliError::Input(format!(
                    "{} line {}: expected `t,c1,...`, found {line:?}",
                    path.display(),
                    lineno + 1
                )))
            }
        };
        let coords: Result<Vec<f64>, _> = fields.map(|f| f.trim().parse::<f64>()).collect();
        match coords {
            Ok(c) if !c.is_empty() => rows.push((index, c)),
            _ => {
                return Err(CliError::Input(format!(
                    "{} line {}: malformed coordinates in {line:?}",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    rows.sort_by_key(|(t, _)| *t);
    for (expect, (t, _)) in rows.iter().enumerate() {
        if *t > expect {
            return Err(CliError::Input(format!(
                "{}: missing point index {expect}",
                path.display()
            )));
        }
        if *t < expect {
            return Err(CliError::Input(format!(
                "{}: duplicate point index {t}",
                path.display()
            )));
        }
    }
    PointCloud::new(rows.into_iter().map(|(_, c)| c).collect()).map_err(CliError::from)
}

/// Rows `t,value` with integer values; `-1` maps to `None`. Indices must be
/// exactly 0..n in any order.
pub fn parse_labels_csv(path: &Path) -> CliResult<Vec<Option<usize>>> {
    let rows = parse_indexed_ints(path)?;
    rows.into_iter()
        .map(|v| match v {
            -1 => Ok(None),
            v if v >= 0 => Ok(Some(v as usize)),
            v => Err(CliError::Input(format!("{}: label {v} out of range", path.display()))),
        })
        .collect()
}

/// Rows `t,value` with non-negative integer values, e.g. a regime truth
/// sequence.
pub fn parse_truth_csv(path: &Path) -> CliResult<Vec<usize>> {
    let rows = parse_indexed_ints(path)?;
    rows.into_iter()
        .map(|v| {
            usize::try_from(v).map_err(|_| {
                CliError::Input(format!("{}: regime {v} out of range", path.display()))
            })
        })
        .collect()
}

fn parse_indexed_ints(path: &Path) -> CliResult<Vec<i64>> {
    let text = read(path)?;
    let mut rows: Vec<(usize, i64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let parsed = line.split_once(',').and_then(|(t, v)| {
            Some((t.trim().parse::<usize>().ok()?, v.trim().parse::<i64>().ok()?))
        });
        match parsed {
            Some(row) => rows.push(row),
            None if lineno == 0 => continue, // header
            None => {
                return Err(CliError::Input(format!(
                    "{} line {}: expected `t,value`, found {line:?}",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    rows.sort_by_key(|(t, _)| *t);
    for (expect, (t, _)) in rows.iter().enumerate() {
        if *t != expect {
            return Err(CliError::Input(format!(
                "{}: index {expect} missing or duplicated",
                path.display()
            )));
        }
    }
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}

/// Plain `key=value` lines; `#` starts a comment. Later keys override
/// earlier ones.
pub fn parse_config(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = read(path)?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => {
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
            None => {
                return Err(CliError::Input(format!(
                    "{} line {}: expected `key=value`, found {raw:?}",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    Ok(map)
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

/// Accumulates artifacts and effective parameters, then writes the manifest
/// that makes the run reproducible.
pub struct RunWriter {
    dir: PathBuf,
    manifest: Vec<(String, String)>,
    outputs: Vec<String>,
}

impl RunWriter {
    pub fn new(dir: &Path, command: &str) -> CliResult<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            manifest: vec![("command".into(), command.into())],
            outputs: Vec::new(),
        })
    }

    pub fn param(&mut self, key: &str, value: impl fmt::Display) {
        self.manifest.push((key.into(), value.to_string()));
    }

    pub fn param_f64(&mut self, key: &str, value: f64) {
        self.manifest.push((key.into(), fmt17(value)));
    }

    pub fn artifact(&mut self, name: &str, contents: &str) -> CliResult<()> {
        write_file(&self.dir.join(name), contents)?;
        self.outputs.push(name.into());
        Ok(())
    }

    /// Writes `manifest.txt` and consumes the writer.
    pub fn finish(mut self) -> CliResult<()> {
        let outputs = self.outputs.join(",");
        self.manifest.push(("outputs".into(), outputs));
        let body: String =
            self.manifest.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        write_file(&self.dir.join("manifest.txt"), &body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str, contents: &str) -> PathBuf {
        let path = std::env::temp_dir().join(format!("ifsdetect-io-{name}-{}", std::process::id()));
        fs::write(&path, contents).unwrap();
        path
    }

    #[test]
    fn series_round_trip_and_header() {
        let plain = tmp("series", "1\n2\n3\n");
        assert_eq!(parse_series_csv(&plain).unwrap().values(), &[1.0, 2.0, 3.0]);
        let headered = tmp("series-h", "misses\n5\n6\n");
        assert_eq!(parse_series_csv(&headered).unwrap().values(), &[5.0, 6.0]);
        let bad = tmp("series-bad", "1\nabc\n");
        let err = parse_series_csv(&bad).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn cloud_rules() {
        let ok = tmp("cloud", "0,1,2\n1,3,4\n");
        let cloud = parse_cloud_csv(&ok).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.dim(), 2);

        let shuffled = tmp("cloud-shuffled", "1,3,4\n0,1,2\n");
        let cloud = parse_cloud_csv(&shuffled).unwrap();
        assert_eq!(cloud.point(0), &[1.0, 2.0]);

        let gap = tmp("cloud-gap", "0,1,2\n2,3,4\n");
        let err = parse_cloud_csv(&gap).unwrap_err().to_string();
        assert!(err.contains("missing point index 1"), "{err}");

        let dup = tmp("cloud-dup", "0,1,2\n0,3,4\n");
        let err = parse_cloud_csv(&dup).unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn labels_and_truth() {
        let labels = tmp("labels", "0,1\n1,-1\n2,0\n");
        assert_eq!(parse_labels_csv(&labels).unwrap(), vec![Some(1), None, Some(0)]);
        let truth = tmp("truth", "0,0\n1,1\n");
        assert_eq!(parse_truth_csv(&truth).unwrap(), vec![0, 1]);
        let negative = tmp("truth-neg", "0,-2\n");
        assert!(parse_truth_csv(&negative).is_err());
    }

    #[test]
    fn config_dialect() {
        let cfg = tmp("config", "# run\nT=100\nepsilon = 0.03 # inline\n\nseed=7\n");
        let map = parse_config(&cfg).unwrap();
        assert_eq!(map["T"], "100");
        assert_eq!(map["epsilon"], "0.03");
        assert_eq!(map["seed"], "7");
        let bad = tmp("config-bad", "just words\n");
        assert!(parse_config(&bad).is_err());
    }

    #[test]
    fn fmt17_round_trips() {
        for v in [0.03, 1.0 / 3.0, 4532.000000001, -0.0, f64::MIN_POSITIVE] {
            assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
        }
    }
}
