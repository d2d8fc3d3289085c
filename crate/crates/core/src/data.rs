//! Two-phase observed data: records, validated datasets, outcome scaling and CSV I/O.
//!
//! Phase 1 observes `V = (W1, A, Y)` on every subject; phase 2 additionally
//! measures `W2` on the subjects flagged by `delta`.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative margin used to widen data-driven outcome bounds.
const BOUND_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ObservedRecord {
    pub w1: Vec<f64>,
    pub a: u8,
    pub y: f64,
    pub delta: bool,
    pub w2: Option<Vec<f64>>,
}

impl ObservedRecord {
    pub fn phase1(w1: Vec<f64>, a: u8, y: f64) -> Self {
        ObservedRecord {
            w1,
            a,
            y,
            delta: false,
            w2: None,
        }
    }

    pub fn phase2(w1: Vec<f64>, w2: Vec<f64>, a: u8, y: f64) -> Self {
        ObservedRecord {
            w1,
            a,
            y,
            delta: true,
            w2: Some(w2),
        }
    }

    /// Phase-1 feature vector `V = (W1, A, Y)`.
    pub fn v_features(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w1.len() + 2);
        v.extend_from_slice(&self.w1);
        v.push(f64::from(self.a));
        v.push(self.y);
        v
    }

    /// Full covariate vector `W = (W1, W2)`; `None` outside phase 2.
    pub fn w_features(&self) -> Option<Vec<f64>> {
        let w2 = self.w2.as_ref()?;
        let mut w = Vec::with_capacity(self.w1.len() + w2.len());
        w.extend_from_slice(&self.w1);
        w.extend_from_slice(w2);
        Some(w)
    }

    /// Outcome-regression features `(A, W1, W2)` with the treatment set to `a`.
    pub fn q_features(&self, a: u8) -> Option<Vec<f64>> {
        let w2 = self.w2.as_ref()?;
        let mut x = Vec::with_capacity(1 + self.w1.len() + w2.len());
        x.push(f64::from(a));
        x.extend_from_slice(&self.w1);
        x.extend_from_slice(w2);
        Some(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YKind {
    Binary,
    Continuous,
}

/// Affine map from `[lo, hi]` onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeScale {
    pub lo: f64,
    pub hi: f64,
}

impl OutcomeScale {
    pub const IDENTITY: OutcomeScale = OutcomeScale { lo: 0.0, hi: 1.0 };

    pub fn scale(&self, y: f64) -> f64 {
        (y - self.lo) / (self.hi - self.lo)
    }

    pub fn unscale(&self, y_scaled: f64) -> f64 {
        self.lo + y_scaled * (self.hi - self.lo)
    }

    /// Maps a difference of means (such as an ATE or its SE) back to the raw scale.
    pub fn unscale_effect(&self, effect: f64) -> f64 {
        effect * (self.hi - self.lo)
    }
}

/// Column-role map used to read and write datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub treatment: String,
    pub outcome: String,
    pub delta: String,
    pub w1: Vec<String>,
    #[serde(default)]
    pub w2: Vec<String>,
    #[serde(default = "default_y_kind")]
    pub y_kind: YKind,
    #[serde(default)]
    pub y_bounds: Option<(f64, f64)>,
}

fn default_y_kind() -> YKind {
    YKind::Binary
}

impl Schema {
    /// Schema with generated column names `W1_1.., W2_1.., A, Y, Delta`.
    pub fn generated(w1_dim: usize, w2_dim: usize, y_kind: YKind) -> Self {
        Schema {
            treatment: "A".into(),
            outcome: "Y".into(),
            delta: "Delta".into(),
            w1: (1..=w1_dim).map(|j| format!("W1_{j}")).collect(),
            w2: (1..=w2_dim).map(|j| format!("W2_{j}")).collect(),
            y_kind,
            y_bounds: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.w1.is_empty() {
            return Err(Error::Schema("at least one w1 column is required".into()));
        }
        let mut names: Vec<&str> = vec![&self.treatment, &self.outcome, &self.delta];
        names.extend(self.w1.iter().map(String::as_str));
        names.extend(self.w2.iter().map(String::as_str));
        let mut sorted = names.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Schema(format!("column {:?} assigned twice", w[0])));
        }
        Ok(())
    }
}

/// A validated two-phase dataset. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<ObservedRecord>,
    schema: Schema,
    scale: OutcomeScale,
    scaled: bool,
}

impl Dataset {
    pub fn new(records: Vec<ObservedRecord>, schema: Schema) -> Result<Self> {
        schema.validate()?;
        let w1_dim = schema.w1.len();
        let w2_dim = schema.w2.len();
        for (i, r) in records.iter().enumerate() {
            if r.w1.len() != w1_dim {
                return Err(Error::validation(
                    Some(i + 1),
                    format!("w1 has {} entries, expected {w1_dim}", r.w1.len()),
                ));
            }
            if r.a > 1 {
                return Err(Error::validation(Some(i + 1), "treatment must be 0 or 1"));
            }
            match (&r.w2, r.delta) {
                (Some(_), false) => {
                    return Err(Error::validation(
                        Some(i + 1),
                        "phase-2 covariates present on a delta=0 record",
                    ))
                }
                (None, true) => {
                    return Err(Error::validation(
                        Some(i + 1),
                        "phase-2 covariates missing on a delta=1 record",
                    ))
                }
                (Some(w2), true) if w2.len() != w2_dim => {
                    return Err(Error::validation(
                        Some(i + 1),
                        format!("w2 has {} entries, expected {w2_dim}", w2.len()),
                    ))
                }
                _ => {}
            }
            let finite = r.y.is_finite()
                && r.w1.iter().all(|x| x.is_finite())
                && r.w2.iter().flatten().all(|x| x.is_finite());
            if !finite {
                return Err(Error::validation(Some(i + 1), "non-finite value"));
            }
        }
        if !records.iter().any(|r| r.delta) {
            return Err(Error::validation(None, "no phase-2 (delta=1) records"));
        }

        let scale = match schema.y_kind {
            YKind::Binary => {
                if let Some(i) = records.iter().position(|r| r.y != 0.0 && r.y != 1.0) {
                    return Err(Error::validation(Some(i + 1), "binary outcome must be 0 or 1"));
                }
                OutcomeScale::IDENTITY
            }
            YKind::Continuous => {
                let (lo, hi) = match schema.y_bounds {
                    Some(b) => b,
                    None => data_bounds(&records),
                };
                if !(lo < hi) {
                    return Err(Error::validation(
                        None,
                        format!("outcome bounds ({lo}, {hi}) must satisfy lo < hi"),
                    ));
                }
                if let Some(i) = records.iter().position(|r| r.y < lo || r.y > hi) {
                    return Err(Error::validation(
                        Some(i + 1),
                        format!("outcome {} outside bounds ({lo}, {hi})", records[i].y),
                    ));
                }
                OutcomeScale { lo, hi }
            }
        };
        let scaled = schema.y_kind == YKind::Binary;
        Ok(Dataset {
            records,
            schema,
            scale,
            scaled,
        })
    }

    pub fn records(&self) -> &[ObservedRecord] {
        &self.records
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn n_phase2(&self) -> usize {
        self.records.iter().filter(|r| r.delta).count()
    }

    pub fn w1_dim(&self) -> usize {
        self.schema.w1.len()
    }

    pub fn w2_dim(&self) -> usize {
        self.schema.w2.len()
    }

    pub fn y_kind(&self) -> YKind {
        self.schema.y_kind
    }

    /// Scale that maps the stored outcomes back to the raw scale.
    pub fn outcome_scale(&self) -> OutcomeScale {
        self.scale
    }

    /// True when stored outcomes lie in `[0, 1]` (binary data or after [`scale_outcome`]).
    pub fn is_scaled(&self) -> bool {
        self.scaled
    }

    /// A new record set under the same schema and outcome scale.
    pub fn with_records(&self, records: Vec<ObservedRecord>) -> Result<Self> {
        let mut ds = Dataset::new(records, self.schema.clone())?;
        ds.scale = self.scale;
        ds.scaled = self.scaled;
        Ok(ds)
    }
}

fn data_bounds(records: &[ObservedRecord]) -> (f64, f64) {
    let lo = records.iter().map(|r| r.y).fold(f64::INFINITY, f64::min);
    let hi = records.iter().map(|r| r.y).fold(f64::NEG_INFINITY, f64::max);
    let margin = BOUND_MARGIN * (hi - lo).abs().max(f64::MIN_POSITIVE);
    (lo - margin, hi + margin)
}

/// Rescales a continuous outcome onto `[0, 1]`; binary datasets are returned unchanged.
pub fn scale_outcome(ds: &Dataset) -> Result<Dataset> {
    if ds.scaled {
        return Ok(ds.clone());
    }
    let scale = ds.scale;
    let mut records = ds.records.clone();
    for (i, r) in records.iter_mut().enumerate() {
        if r.y < scale.lo || r.y > scale.hi {
            return Err(Error::validation(
                Some(i + 1),
                format!("outcome {} outside bounds ({}, {})", r.y, scale.lo, scale.hi),
            ));
        }
        r.y = scale.scale(r.y).clamp(0.0, 1.0);
    }
    Ok(Dataset {
        records,
        schema: ds.schema.clone(),
        scale,
        scaled: true,
    })
}

/// Reads a CSV file with a header row, assigning columns by `schema`.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    schema.validate()?;
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("column {name:?} not found in header")))
    };
    let a_col = column(&schema.treatment)?;
    let y_col = column(&schema.outcome)?;
    let d_col = column(&schema.delta)?;
    let w1_cols = schema.w1.iter().map(|c| column(c)).collect::<Result<Vec<_>>>()?;
    let w2_cols = schema.w2.iter().map(|c| column(c)).collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let row_no = idx + 1;
        let row = row.map_err(|e| Error::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        let cell = |c: usize| row.get(c).map(str::trim).unwrap_or("");
        let number = |c: usize| -> Result<f64> {
            cell(c).parse::<f64>().map_err(|_| Error::Parse {
                row: row_no,
                message: format!("column {:?}: cannot parse {:?} as a number", &headers[c], cell(c)),
            })
        };
        let binary = |c: usize| -> Result<u8> {
            let v = number(c)?;
            if v == 0.0 {
                Ok(0)
            } else if v == 1.0 {
                Ok(1)
            } else {
                Err(Error::validation(
                    Some(row_no),
                    format!("column {:?} must be 0 or 1, got {v}", &headers[c]),
                ))
            }
        };
        let a = binary(a_col)?;
        let delta = binary(d_col)? == 1;
        let y = number(y_col)?;
        let w1 = w1_cols.iter().map(|&c| number(c)).collect::<Result<Vec<_>>>()?;
        let filled = w2_cols.iter().filter(|&&c| !cell(c).is_empty()).count();
        let w2 = if delta {
            if filled != w2_cols.len() {
                return Err(Error::validation(
                    Some(row_no),
                    "delta=1 row has an empty phase-2 cell",
                ));
            }
            Some(w2_cols.iter().map(|&c| number(c)).collect::<Result<Vec<_>>>()?)
        } else {
            if filled > 0 {
                return Err(Error::validation(
                    Some(row_no),
                    "delta=0 row has a filled phase-2 cell",
                ));
            }
            None
        };
        records.push(ObservedRecord { w1, a, y, delta, w2 });
    }
    Dataset::new(records, schema.clone())
}

/// Writes the dataset as CSV: columns `w1.., w2.., treatment, outcome, delta`.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    let s = &ds.schema;
    let header: Vec<&str> = s
        .w1
        .iter()
        .chain(s.w2.iter())
        .map(String::as_str)
        .chain([s.treatment.as_str(), s.outcome.as_str(), s.delta.as_str()])
        .collect();
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;
    for r in &ds.records {
        let mut cells: Vec<String> = r.w1.iter().map(|&x| format_g17(x)).collect();
        match &r.w2 {
            Some(w2) => cells.extend(w2.iter().map(|&x| format_g17(x))),
            None => cells.extend(std::iter::repeat_n(String::new(), s.w2.len())),
        }
        cells.push(r.a.to_string());
        cells.push(format_g17(r.y));
        cells.push(u8::from(r.delta).to_string());
        writeln!(out, "{}", cells.join(",")).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Formats like C's `%.17g`: 17 significant digits, trailing zeros trimmed.
pub fn format_g17(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        let m = trim_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
