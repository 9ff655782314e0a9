//! Dataset container and the CSV interchange format: one row per sample,
//! integer label (0 or 1) first, then the feature floats. Lines starting
//! with '#' are comments.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::{NnError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<u8>) -> Self {
        assert_eq!(features.len(), labels.len());
        Dataset { features, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.first().map_or(0, |f| f.len())
    }

    /// Select rows by index (cloning).
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        (self.len() - ones, ones)
    }
}

/// Load `label,f0,...,fK` rows; every row must agree on width (and on
/// `expected_width` when given). Errors cite the 1-based line number.
pub fn load_csv(path: &Path, expected_width: Option<usize>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = expected_width;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split(',');
        let label_tok = fields.next().unwrap_or("").trim();
        let label: u8 = match label_tok {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(NnError::Data {
                    line: lineno,
                    msg: format!("label must be 0 or 1, got {other:?}"),
                })
            }
        };
        let row: std::result::Result<Vec<f64>, _> =
            fields.map(|f| f.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| NnError::Data {
            line: lineno,
            msg: format!("bad feature value: {e}"),
        })?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(NnError::Data {
                line: lineno,
                msg: "non-finite feature value".into(),
            });
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(NnError::Data {
                    line: lineno,
                    msg: format!("row width {} != expected {w}", row.len()),
                })
            }
            _ => {}
        }
        features.push(row);
        labels.push(label);
    }
    Ok(Dataset { features, labels })
}

pub fn save_csv(path: &Path, data: &Dataset, header: Option<&str>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    if let Some(h) = header {
        writeln!(out, "# {h}")?;
    }
    for (f, l) in data.features.iter().zip(&data.labels) {
        write!(out, "{l}")?;
        for v in f {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_comments() {
        let dir = std::env::temp_dir().join("cryptotl_nn_data_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("t.csv");
        let data = Dataset::new(
            vec![vec![0.5, -1.25, 3.0], vec![0.0, 0.125, -2.0]],
            vec![0, 1],
        );
        save_csv(&p, &data, Some("fixture")).unwrap();
        let back = load_csv(&p, Some(3)).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let dir = std::env::temp_dir().join("cryptotl_nn_data_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("bad.csv");
        std::fs::write(&p, "# header\n0,1.0,2.0\n2,1.0,2.0\n").unwrap();
        match load_csv(&p, None) {
            Err(NnError::Data { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected data error, got {other:?}"),
        }
        std::fs::write(&p, "0,1.0,2.0\n1,oops,2.0\n").unwrap();
        match load_csv(&p, None) {
            Err(NnError::Data { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected data error, got {other:?}"),
        }
        std::fs::write(&p, "0,1.0,2.0\n1,3.0\n").unwrap();
        assert!(load_csv(&p, None).is_err());
    }
}
