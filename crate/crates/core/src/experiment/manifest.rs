use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, ExperimentError, Result};

/// One clip of a dataset split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    /// As written in the CSV; relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub city: Option<String>,
}

/// A CSV manifest with header `path,label[,device,city]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(rows: Vec<ManifestRow>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m = Manifest {
            rows,
            base_dir: base_dir.into(),
        };
        m.validate(&m.base_dir)?;
        Ok(m)
    }

    fn validate(&self, origin: &Path) -> Result<()> {
        let bad = |detail: String| ExperimentError::Manifest {
            path: origin.to_path_buf(),
            detail,
        };
        let mut seen = BTreeSet::new();
        for (i, row) in self.rows.iter().enumerate() {
            if row.path.as_os_str().is_empty() {
                return Err(bad(format!("row {}: empty path", i + 1)));
            }
            if row.label.trim().is_empty() {
                return Err(bad(format!("row {}: empty label", i + 1)));
            }
            if !seen.insert(&row.path) {
                return Err(bad(format!("row {}: duplicate path {}", i + 1, row.path.display())));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = super::read(path)?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
        let bad = |detail: String| ExperimentError::Manifest {
            path: path.to_path_buf(),
            detail,
        };
        let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        if headers.get(0) != Some("path") || headers.get(1) != Some("label") {
            return Err(bad(format!("header must start with `path,label`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut rows = Vec::new();
        for record in reader.deserialize::<ManifestRow>() {
            let mut row = record.map_err(|e| bad(e.to_string()))?;
            row.device = row.device.filter(|d| !d.is_empty());
            row.city = row.city.filter(|c| !c.is_empty());
            rows.push(row);
        }
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Manifest { rows, base_dir };
        m.validate(path)?;
        Ok(m)
    }

    pub fn to_csv(&self) -> String {
        let extra = self.rows.iter().any(|r| r.device.is_some() || r.city.is_some());
        let mut writer = csv::Writer::from_writer(Vec::new());
        let header: &[&str] = if extra {
            &["path", "label", "device", "city"]
        } else {
            &["path", "label"]
        };
        writer.write_record(header).expect("write to memory");
        for r in &self.rows {
            let path = r.path.to_string_lossy();
            let mut record = vec![path.as_ref(), r.label.as_str()];
            if extra {
                record.push(r.device.as_deref().unwrap_or(""));
                record.push(r.city.as_deref().unwrap_or(""));
            }
            writer.write_record(&record).expect("write to memory");
        }
        String::from_utf8(writer.into_inner().expect("flush to memory")).expect("csv of utf-8 fields")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write(path, self.to_csv().as_bytes())
    }

    /// Sorted distinct labels.
    pub fn labels(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.rows.iter().map(|r| r.label.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    /// Label indices into `labels`.
    pub fn label_indices(&self, labels: &[String]) -> Result<Vec<usize>> {
        self.rows
            .iter()
            .map(|r| {
                labels
                    .iter()
                    .position(|l| *l == r.label)
                    .ok_or_else(|| ExperimentError::UnknownLabel(r.label.clone()))
            })
            .collect()
    }

    pub fn resolve(&self, row: &ManifestRow) -> PathBuf {
        if row.path.is_absolute() {
            row.path.clone()
        } else {
            self.base_dir.join(&row.path)
        }
    }

    pub fn read_audio(&self, row: &ManifestRow) -> Result<Vec<u8>> {
        let path = self.resolve(row);
        std::fs::read(&path).map_err(io_err(&path))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}
