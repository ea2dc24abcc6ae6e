//! The `report.json` envelope, CSV grids, and atomic file output.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Version tag carried by every report.
pub const SCHEMA: &str = "zl-1";

/// Serialized with sorted keys; non-finite floats become `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub command: String,
    pub seed: u64,
    pub timestamp_unix: u64,
    pub result: Value,
}

impl Report {
    pub fn new(command: &str, seed: u64, result: impl Serialize) -> Self {
        let timestamp_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            schema: SCHEMA.into(),
            command: command.into(),
            seed,
            timestamp_unix,
            result: serde_json::to_value(result).expect("result serializes"),
        }
    }

    /// Pretty JSON with a trailing newline. Object keys come out sorted
    /// because `serde_json::Value` keeps them in a `BTreeMap`.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut s = serde_json::to_string_pretty(&value).expect("report serializes");
        s.push('\n');
        s
    }

    /// The same JSON with the timestamp zeroed, for byte comparisons.
    pub fn without_timestamp(&self) -> String {
        Report {
            timestamp_unix: 0,
            ..self.clone()
        }
        .to_json()
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// One row per point: the real coordinates, then one value column per index.
pub fn grid_csv(points: &[Vec<Complex64>], schedule: &[u64], values: &[Vec<f64>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let dim = points.first().map_or(0, Vec::len);
    let mut header = vec!["point".to_string()];
    for a in 1..=dim {
        header.push(format!("re_z{a}"));
        header.push(format!("im_z{a}"));
    }
    header.extend(schedule.iter().map(|j| format!("j={j}")));
    w.write_record(&header).expect("in-memory write");
    for (k, (p, row)) in points.iter().zip(values).enumerate() {
        let mut record = vec![k.to_string()];
        for c in p {
            record.push(c.re.to_string());
            record.push(c.im.to_string());
        }
        record.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_becomes_null_and_keys_sort() {
        let r = Report::new("demo", 3, serde_json::json!({"b": f64::INFINITY, "a": [f64::NAN, 1.5]}));
        let text = r.without_timestamp();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["result"]["b"], Value::Null);
        assert_eq!(v["result"]["a"][0], Value::Null);
        assert!(text.find("\"command\"").unwrap() < text.find("\"schema\"").unwrap());
        assert!(text.find("\"a\"").unwrap() < text.find("\"b\"").unwrap());
        assert_eq!(v["schema"], "zl-1");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/out.json");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn csv_layout() {
        let pts = vec![vec![Complex64::new(0.5, -1.0)]];
        let s = grid_csv(&pts, &[1, 2], &[vec![1.0, f64::INFINITY]]);
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("point,re_z1,im_z1,j=1,j=2"));
        assert_eq!(lines.next(), Some("0,0.5,-1,1,inf"));
    }
}
