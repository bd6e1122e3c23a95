//! Per-iteration metrics records and their CSV stream.
//!
//! Floats are written with 17 significant digits (`{:.16e}`) so a file
//! round-trips bit-exactly. Missing values are empty cells.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Column order of every metrics file.
pub const METRICS_HEADER: [&str; 21] = [
    "iteration",
    "epoch",
    "lr",
    "train_loss",
    "eval_loss",
    "eval_accuracy",
    "l2_sgd",
    "l2_psf",
    "l2_sgd_subset",
    "l2_psf_subset",
    "psf_stale",
    "psf_age",
    "sgd_psf_dot",
    "sampled",
    "p",
    "s",
    "c_var",
    "c_norm",
    "step_grad_evals",
    "cumulative_grad_evals",
    "wall_clock_seconds",
];

/// Columns that legitimately differ between otherwise identical runs.
pub const WALL_CLOCK_COLUMNS: [&str; 1] = ["wall_clock_seconds"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Held-out metrics, filled on the last iteration of each epoch.
    pub eval_loss: Option<f64>,
    pub eval_accuracy: Option<f64>,
    pub l2_sgd: f64,
    /// Norm of the PSF in effect; `None` before any SAM step.
    pub l2_psf: Option<f64>,
    pub l2_sgd_subset: f64,
    pub l2_psf_subset: Option<f64>,
    /// The PSF was not recomputed on this iteration.
    pub psf_stale: bool,
    pub psf_age: Option<usize>,
    pub sgd_psf_dot: f64,
    pub sampled: bool,
    pub p: Option<f64>,
    pub s: Option<f64>,
    pub c_var: Option<f64>,
    pub c_norm: Option<f64>,
    pub step_grad_evals: u64,
    pub cumulative_grad_evals: u64,
    pub wall_clock_seconds: f64,
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

impl MetricsRecord {
    pub fn to_fields(&self) -> Vec<String> {
        vec![
            self.iteration.to_string(),
            self.epoch.to_string(),
            fmt_f64(self.lr),
            fmt_f64(self.train_loss),
            fmt_opt(self.eval_loss),
            fmt_opt(self.eval_accuracy),
            fmt_f64(self.l2_sgd),
            fmt_opt(self.l2_psf),
            fmt_f64(self.l2_sgd_subset),
            fmt_opt(self.l2_psf_subset),
            fmt_bool(self.psf_stale).into(),
            self.psf_age.map(|a| a.to_string()).unwrap_or_default(),
            fmt_f64(self.sgd_psf_dot),
            fmt_bool(self.sampled).into(),
            fmt_opt(self.p),
            fmt_opt(self.s),
            fmt_opt(self.c_var),
            fmt_opt(self.c_norm),
            self.step_grad_evals.to_string(),
            self.cumulative_grad_evals.to_string(),
            fmt_f64(self.wall_clock_seconds),
        ]
    }

    pub fn from_fields(fields: &[&str]) -> Result<Self> {
        if fields.len() != METRICS_HEADER.len() {
            return Err(Error::format(
                "metrics row",
                format!(
                    "expected {} fields, found {}",
                    METRICS_HEADER.len(),
                    fields.len()
                ),
            ));
        }
        let mut cols = Cells { fields, next: 0 };
        Ok(Self {
            iteration: cols.int()?,
            epoch: cols.int()?,
            lr: cols.float()?,
            train_loss: cols.float()?,
            eval_loss: cols.opt_float()?,
            eval_accuracy: cols.opt_float()?,
            l2_sgd: cols.float()?,
            l2_psf: cols.opt_float()?,
            l2_sgd_subset: cols.float()?,
            l2_psf_subset: cols.opt_float()?,
            psf_stale: cols.flag()?,
            psf_age: cols.opt_int()?,
            sgd_psf_dot: cols.float()?,
            sampled: cols.flag()?,
            p: cols.opt_float()?,
            s: cols.opt_float()?,
            c_var: cols.opt_float()?,
            c_norm: cols.opt_float()?,
            step_grad_evals: cols.int()?,
            cumulative_grad_evals: cols.int()?,
            wall_clock_seconds: cols.float()?,
        })
    }
}

struct Cells<'a> {
    fields: &'a [&'a str],
    next: usize,
}

impl Cells<'_> {
    fn take(&mut self) -> (&str, &'static str) {
        let i = self.next;
        self.next += 1;
        (self.fields[i], METRICS_HEADER[i])
    }

    fn bad(col: &str, raw: &str) -> Error {
        Error::format("metrics row", format!("column {col}: cannot parse {raw:?}"))
    }

    fn float(&mut self) -> Result<f64> {
        let (raw, col) = self.take();
        raw.parse().map_err(|_| Self::bad(col, raw))
    }

    fn opt_float(&mut self) -> Result<Option<f64>> {
        let (raw, col) = self.take();
        if raw.is_empty() {
            return Ok(None);
        }
        raw.parse().map(Some).map_err(|_| Self::bad(col, raw))
    }

    fn int<T: std::str::FromStr>(&mut self) -> Result<T> {
        let (raw, col) = self.take();
        raw.parse().map_err(|_| Self::bad(col, raw))
    }

    fn opt_int(&mut self) -> Result<Option<usize>> {
        let (raw, col) = self.take();
        if raw.is_empty() {
            return Ok(None);
        }
        raw.parse().map(Some).map_err(|_| Self::bad(col, raw))
    }

    fn flag(&mut self) -> Result<bool> {
        let (raw, col) = self.take();
        match raw {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(Self::bad(col, raw)),
        }
    }
}

/// Streams records to a CSV file, flushing after every row so a failed run
/// leaves a readable partial trace.
pub struct MetricsWriter {
    inner: csv::Writer<File>,
    path: std::path::PathBuf,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut inner = csv::Writer::from_writer(file);
        inner
            .write_record(METRICS_HEADER)
            .map_err(|e| csv_error(path, e))?;
        inner.flush().map_err(|e| Error::io(path, e))?;
        Ok(Self {
            inner,
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        self.inner
            .write_record(record.to_fields())
            .map_err(|e| csv_error(&self.path, e))?;
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format("csv", format!("{}: {other:?}", path.display())),
    }
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = MetricsWriter::create(path)?;
    records.iter().try_for_each(|r| w.write(r))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(Error::format(
            "metrics header",
            format!("{} does not carry the expected columns", path.display()),
        ));
    }
    reader
        .records()
        .map(|row| {
            let row = row.map_err(|e| csv_error(path, e))?;
            let fields: Vec<&str> = row.iter().collect();
            MetricsRecord::from_fields(&fields)
        })
        .collect()
}

/// Rewrites a metrics file's contents with wall-clock cells blanked, for
/// comparing runs.
pub fn strip_wall_clock(contents: &str) -> String {
    let mut lines = contents.lines();
    let Some(header) = lines.next() else {
        return String::new();
    };
    let drop: Vec<usize> = header
        .split(',')
        .enumerate()
        .filter(|(_, c)| WALL_CLOCK_COLUMNS.contains(c))
        .map(|(i, _)| i)
        .collect();
    let mut out = String::with_capacity(contents.len());
    out.push_str(header);
    out.push('\n');
    for line in lines {
        let cells: Vec<&str> = line
            .split(',')
            .enumerate()
            .map(|(i, c)| if drop.contains(&i) { "" } else { c })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
