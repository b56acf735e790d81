//! Accuracy, error spread and confusion matrices for both counting methods.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::NUM_LABELS;
use crate::edgecount::MAX_COUNT;

/// Predicted columns: counts 0 through 6.
pub const PREDICTED_COLUMNS: usize = MAX_COUNT as usize + 1;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("expected label {0} is outside 0..=5")]
    Label(usize),
    #[error("predicted count {0} is outside 0..=6")]
    Prediction(u8),
    #[error("prediction failed on sample {index}: {message}")]
    Predict { index: usize, message: String },
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("cannot parse {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Rows are expected labels 0–5, columns predicted counts 0–6.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; PREDICTED_COLUMNS]; NUM_LABELS],
}

impl ConfusionMatrix {
    pub fn record(&mut self, expected: usize, predicted: u8) -> Result<()> {
        if expected >= NUM_LABELS {
            return Err(EvalError::Label(expected));
        }
        if predicted > MAX_COUNT {
            return Err(EvalError::Prediction(predicted));
        }
        self.counts[expected][predicted as usize] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..NUM_LABELS).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> [u64; NUM_LABELS] {
        self.counts.map(|row| row.iter().sum())
    }

    pub fn column_sum(&self, column: usize) -> u64 {
        self.counts.iter().map(|row| row[column]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }

    /// Population standard deviation of `predicted − expected`.
    pub fn error_std(&self) -> f64 {
        let n = self.total() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let cells = || {
            self.counts.iter().enumerate().flat_map(|(e, row)| {
                row.iter().enumerate().map(move |(p, &c)| (p as f64 - e as f64, c as f64))
            })
        };
        let mean = cells().map(|(d, c)| d * c).sum::<f64>() / n;
        (cells().map(|(d, c)| c * (d - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    /// CSV grid: a header, then one row per expected label.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("expected");
        for p in 0..PREDICTED_COLUMNS {
            out += &format!(",pred{p}");
        }
        out.push('\n');
        for (e, row) in self.counts.iter().enumerate() {
            out += &e.to_string();
            for c in row {
                out += &format!(",{c}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<ConfusionMatrix> {
        let bad = || EvalError::Parse("confusion matrix CSV".into());
        let mut m = ConfusionMatrix::default();
        let rows: Vec<&str> = text.lines().skip(1).filter(|l| !l.trim().is_empty()).collect();
        if rows.len() != NUM_LABELS {
            return Err(bad());
        }
        for (e, line) in rows.iter().enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != PREDICTED_COLUMNS + 1 || cells[0].trim() != e.to_string() {
                return Err(bad());
            }
            for (p, cell) in cells[1..].iter().enumerate() {
                m.counts[e][p] = cell.trim().parse().map_err(|_| bad())?;
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub samples: u64,
    pub accuracy: f64,
    pub std_dev_fingers_error: f64,
    pub six_finger_rate: f64,
    /// Fraction of samples where the edge pipeline found no hand; those
    /// are recorded as a prediction of 0.
    pub no_hand_rate: f64,
    /// Validation accuracy after each training epoch.
    pub per_epoch: Vec<f64>,
}

impl EvalReport {
    pub fn from_matrix(m: &ConfusionMatrix, no_hand: u64) -> EvalReport {
        let n = m.total();
        let rate = |c: u64| if n == 0 { 0.0 } else { c as f64 / n as f64 };
        EvalReport {
            samples: n,
            accuracy: m.accuracy(),
            std_dev_fingers_error: m.error_std(),
            six_finger_rate: rate(m.column_sum(MAX_COUNT as usize)),
            no_hand_rate: rate(no_hand),
            per_epoch: Vec::new(),
        }
    }
}

/// Runs `predict` on every `(sample, expected)` pair. `Ok(None)` means the
/// method found no hand.
pub fn evaluate<S, E: Display>(
    samples: impl IntoIterator<Item = (S, usize)>,
    mut predict: impl FnMut(S) -> std::result::Result<Option<u8>, E>,
) -> Result<(ConfusionMatrix, EvalReport)> {
    let mut m = ConfusionMatrix::default();
    let mut no_hand = 0;
    for (index, (sample, expected)) in samples.into_iter().enumerate() {
        let predicted = predict(sample).map_err(|e| EvalError::Predict { index, message: e.to_string() })?;
        if predicted.is_none() {
            no_hand += 1;
        }
        m.record(expected, predicted.unwrap_or(0))?;
    }
    if m.total() == 0 {
        return Err(EvalError::Empty);
    }
    let report = EvalReport::from_matrix(&m, no_hand);
    Ok((m, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<ReportFormat> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(EvalError::Parse(format!("report format {s:?}"))),
        }
    }
}

impl ReportFormat {
    /// Picks CSV for a `.csv` path and JSON otherwise.
    pub fn for_path(path: &Path) -> ReportFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub report: EvalReport,
    pub confusion: ConfusionMatrix,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

/// Writes the report and returns the files created.
///
/// JSON is a single document. CSV writes the accuracy series to `path`
/// (`epoch,accuracy`), the matrix to `<stem>.confusion.csv` and the scalar
/// metrics to `<stem>.summary.csv`.
pub fn emit_report(
    report: &EvalReport,
    matrix: &ConfusionMatrix,
    format: ReportFormat,
    path: &Path,
) -> Result<Vec<PathBuf>> {
    let write = |p: &Path, text: &str| -> Result<()> {
        let mut f = fs::File::create(p).map_err(|e| EvalError::Io(p.to_path_buf(), e))?;
        f.write_all(text.as_bytes()).map_err(|e| EvalError::Io(p.to_path_buf(), e))
    };
    match format {
        ReportFormat::Json => {
            let doc = ReportDocument { report: report.clone(), confusion: matrix.clone() };
            let text = serde_json::to_string_pretty(&doc).expect("report serializes");
            write(path, &(text + "\n"))?;
            Ok(vec![path.to_path_buf()])
        }
        ReportFormat::Csv => {
            let mut series = String::from("epoch,accuracy\n");
            for (i, a) in report.per_epoch.iter().enumerate() {
                series += &format!("{},{a}\n", i + 1);
            }
            write(path, &series)?;
            let confusion = sibling(path, "confusion");
            write(&confusion, &matrix.to_csv())?;
            let summary = sibling(path, "summary");
            let text = format!(
                "metric,value\nsamples,{}\naccuracy,{}\nstdDevFingersError,{}\nsixFingerRate,{}\nnoHandRate,{}\n",
                report.samples,
                report.accuracy,
                report.std_dev_fingers_error,
                report.six_finger_rate,
                report.no_hand_rate
            );
            write(&summary, &text)?;
            Ok(vec![path.to_path_buf(), confusion, summary])
        }
    }
}

pub fn read_json_report(path: &Path) -> Result<ReportDocument> {
    let text = fs::read_to_string(path).map_err(|e| EvalError::Io(path.to_path_buf(), e))?;
    serde_json::from_str(&text).map_err(|e| EvalError::Parse(e.to_string()))
}
