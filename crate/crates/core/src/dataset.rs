//! Line-oriented dataset files.
//!
//! Each non-blank line is a JSON object `{"label": k, "values": [[...], ...]}`
//! whose `values` hold `N` feature rows of `L` reals. All samples in a file
//! share `N` and `L`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::encoder::SampleBatch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub path: PathBuf,
    pub samples: Vec<SampleBatch>,
}

impl Dataset {
    /// Feature count `N`.
    pub fn features(&self) -> usize {
        self.samples[0].features()
    }

    /// Series length `L`.
    pub fn length(&self) -> usize {
        self.samples[0].len()
    }

    /// One more than the largest label.
    pub fn label_bound(&self) -> usize {
        self.samples.iter().map(|s| s.label).max().map_or(0, |m| m + 1)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Every label must lie in `[0, classes)`.
    pub fn check_labels(&self, classes: usize, split: &str) -> Result<()> {
        match self.samples.iter().find(|s| s.label >= classes) {
            Some(s) => Err(Error::LabelRange {
                label: s.label,
                classes,
                split: split.to_string(),
            }),
            None => Ok(()),
        }
    }

    /// Every class in `[0, classes)` must have at least one sample.
    pub fn check_coverage(&self, classes: usize) -> Result<()> {
        let mut seen = vec![false; classes];
        for s in &self.samples {
            if s.label < classes {
                seen[s.label] = true;
            }
        }
        match seen.iter().position(|&x| !x) {
            Some(k) => Err(Error::MissingClass(k)),
            None => Ok(()),
        }
    }

    /// `N` and `L` must equal the given shape.
    pub fn check_shape(&self, features: usize, length: usize, split: &str) -> Result<()> {
        if self.features() != features || self.length() != length {
            return Err(Error::Shape(format!(
                "{split} split has (N, L) = ({}, {}), expected ({features}, {length})",
                self.features(),
                self.length()
            )));
        }
        Ok(())
    }
}

/// Parses dataset text; `path` is used for error locations only.
pub fn parse_dataset(text: &str, path: &Path) -> Result<Dataset> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut samples: Vec<SampleBatch> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let sample: SampleBatch = serde_json::from_str(raw).map_err(|e| err(line, e.to_string()))?;
        sample.validate().map_err(|e| err(line, e.to_string()))?;
        if let Some(first) = samples.first() {
            if sample.features() != first.features() || sample.len() != first.len() {
                return Err(err(
                    line,
                    format!(
                        "shape (N, L) = ({}, {}) differs from the first sample's ({}, {})",
                        sample.features(),
                        sample.len(),
                        first.features(),
                        first.len()
                    ),
                ));
            }
        }
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has no samples", path.display())));
    }
    Ok(Dataset {
        path: path.to_path_buf(),
        samples,
    })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path)
}

/// Writes samples in the format read by [`load_dataset`]. Values are printed
/// with shortest round-trip formatting, so a reload is exact.
pub fn write_dataset(path: impl AsRef<Path>, samples: &[SampleBatch]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for s in samples {
        serde_json::to_writer(&mut out, s).expect("samples serialize");
        out.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}
