use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::mean_std;
use crate::error::{Error, Result};

pub const MIN_SERIES_LEN: usize = 100;
pub const MIN_SPLIT_LEN: usize = 64;
const MIN_STD: f64 = 1e-12;

/// CSV column selector: zero-based index or header name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Column {
    Index(usize),
    Name(String),
}

impl FromStr for Column {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::arg("empty column selector"));
        }
        Ok(s.parse::<usize>().map(Column::Index).unwrap_or_else(|_| Column::Name(s.to_string())))
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Column::Index(i) => write!(f, "#{i}"),
            Column::Name(n) => f.write_str(n),
        }
    }
}

/// A univariate real-world series in its original units.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSeries {
    pub name: String,
    pub values: Vec<f64>,
    pub sampling: String,
    /// 1-based line numbers of data rows whose value did not parse
    pub skipped_rows: Vec<u64>,
}

/// Standardization statistics fitted on one split and reused on another.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: f64,
    pub std: f64,
}

impl SeriesStats {
    pub fn fit(values: &[f64]) -> Result<Self> {
        let (mean, std) = mean_std(values.iter().copied());
        if !(std > MIN_STD) {
            return Err(Error::Degenerate(format!(
                "series has standard deviation {std:e}"
            )));
        }
        Ok(SeriesStats { mean, std })
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|v| (v - self.mean) / self.std).collect()
    }
}

fn parse_value(field: &str) -> Option<f64> {
    field.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads one numeric column of a CSV file. A header row is detected (or
/// required when the column is selected by name); data rows whose value does
/// not parse are skipped, logged and listed in `skipped_rows`.
pub fn load_real_series(path: &Path, column: &Column) -> Result<RealSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;

    let mut index = match column {
        Column::Index(i) => Some(*i),
        Column::Name(_) => None,
    };
    let mut values = Vec::new();
    let mut skipped = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(n as u64 + 1);
        let Some(col) = index else {
            // first row names the columns
            let Column::Name(name) = column else { unreachable!() };
            index = Some(rec.iter().position(|h| h.trim() == name).ok_or_else(|| {
                Error::Ingestion(format!("{}: no column named `{name}`", path.display()))
            })?);
            continue;
        };
        match rec.get(col).and_then(parse_value) {
            Some(v) => values.push(v),
            None if n == 0 => {} // header
            None => skipped.push(line),
        }
    }
    if !skipped.is_empty() {
        log::warn!(
            "{}: skipped {} unparseable row(s): {:?}",
            path.display(),
            skipped.len(),
            skipped
        );
    }
    if values.len() < MIN_SERIES_LEN {
        return Err(Error::Ingestion(format!(
            "{}: {} valid rows in column {column}, need at least {MIN_SERIES_LEN}",
            path.display(),
            values.len()
        )));
    }
    SeriesStats::fit(&values)?;
    Ok(RealSeries {
        name: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        values,
        sampling: format!("column {column} of {}", path.display()),
        skipped_rows: skipped,
    })
}

/// Contiguous split at `floor(train_frac · T)`.
pub fn split_series(series: &[f64], train_frac: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::arg(format!("train_frac must lie in (0, 1), got {train_frac}")));
    }
    let boundary = (train_frac * series.len() as f64).floor() as usize;
    if boundary < MIN_SPLIT_LEN || series.len() - boundary < MIN_SPLIT_LEN {
        return Err(Error::arg(format!(
            "split of {} points at {boundary} leaves a side shorter than {MIN_SPLIT_LEN}",
            series.len()
        )));
    }
    Ok((series[..boundary].to_vec(), series[boundary..].to_vec()))
}

/// Contiguous segment of `floor(frac · len)` points at a seed-chosen offset.
pub fn finetune_subset(train: &[f64], frac: f64, seed: u64) -> Result<Vec<f64>> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::arg(format!("fine-tune fraction must lie in (0, 1], got {frac}")));
    }
    let len = (frac * train.len() as f64).floor() as usize;
    if len < MIN_SPLIT_LEN {
        return Err(Error::arg(format!(
            "fine-tune segment of {len} points is shorter than {MIN_SPLIT_LEN}"
        )));
    }
    let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..=train.len() - len);
    Ok(train[start..start + len].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_headerless_and_named_columns() {
        let body: String = (0..3212).map(|i| format!("{i},{}\n", (i as f64 * 0.1).sin())).collect();
        let f = csv_file(&body);
        let s = load_real_series(f.path(), &Column::Index(1)).unwrap();
        assert_eq!(s.values.len(), 3212);
        assert!(s.skipped_rows.is_empty());

        let f = csv_file(&format!("month,spots\n{body}"));
        let s = load_real_series(f.path(), &"spots".parse().unwrap()).unwrap();
        assert_eq!(s.values.len(), 3212);
        assert!(load_real_series(f.path(), &Column::Name("missing".into())).is_err());
    }

    #[test]
    fn bad_row_is_skipped_and_reported() {
        let mut body = String::from("t,value\n");
        for i in 0..200 {
            if i == 57 {
                body.push_str("57,n/a\n");
            } else {
                body.push_str(&format!("{i},{}\n", i % 7));
            }
        }
        let f = csv_file(&body);
        let s = load_real_series(f.path(), &Column::Index(1)).unwrap();
        assert_eq!(s.values.len(), 199);
        assert_eq!(s.skipped_rows, vec![59]);
    }

    #[test]
    fn constant_and_short_columns_rejected() {
        let f = csv_file(&"3.0\n".repeat(150));
        assert!(matches!(load_real_series(f.path(), &Column::Index(0)), Err(Error::Degenerate(_))));
        let f = csv_file(&(0..50).map(|i| format!("{i}\n")).collect::<String>());
        assert!(matches!(load_real_series(f.path(), &Column::Index(0)), Err(Error::Ingestion(_))));
    }

    #[test]
    fn split_examples() {
        let s: Vec<f64> = (0..3212).map(|i| i as f64).collect();
        let (a, b) = split_series(&s, 0.7).unwrap();
        assert_eq!((a.len(), b.len()), (2248, 964));
        let (a, b) = split_series(&s[..1000], 0.5).unwrap();
        assert_eq!((a.len(), b.len()), (500, 500));
        assert!(split_series(&s, 0.0).is_err());
        assert!(split_series(&s[..100], 0.5).is_err());
    }

    #[test]
    fn finetune_examples() {
        let s: Vec<f64> = (0..2248).map(|i| i as f64).collect();
        let seg = finetune_subset(&s, 0.05, 9).unwrap();
        assert_eq!(seg.len(), 112);
        assert_eq!(seg, finetune_subset(&s, 0.05, 9).unwrap());
        assert!(seg.windows(2).all(|w| w[1] == w[0] + 1.0));
        assert_eq!(finetune_subset(&s, 1.0, 3).unwrap(), s);
        assert!(finetune_subset(&s, 0.01, 3).is_err());
    }

    #[test]
    fn train_statistics_applied_to_test() {
        let s: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.05).sin() + i as f64 * 0.001).collect();
        let (train, test) = split_series(&s, 0.7).unwrap();
        let stats = SeriesStats::fit(&train).unwrap();
        let z = stats.apply(&train);
        let (m, sd) = mean_std(z.iter().copied());
        assert!(m.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
        assert_eq!(stats.apply(&test)[0], (test[0] - stats.mean) / stats.std);
    }
}
