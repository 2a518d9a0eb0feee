//! Input/output records and their CSV representation.
//!
//! CSV layout: header `t,u1,...,uM,y`, one row per sampling instant, integer
//! times, missing outputs as empty `y` fields. Completed records may carry two
//! extra trailing columns, `imputed` (0/1) and `std` (posterior standard
//! deviation); readers ignore any column after `y` other than `imputed`.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Fully observed record, used for held-out test data.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub times: Vec<i64>,
    /// One vector per input channel, each aligned with `times`.
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
}

impl Record {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }
}

/// Training record with a missing-output mask and an optional test continuation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub times: Vec<i64>,
    pub inputs: Vec<Vec<f64>>,
    /// `None` marks a missing sample.
    pub outputs: Vec<Option<f64>>,
    /// Rows whose output was filled in by imputation.
    pub imputed: Vec<bool>,
    pub test: Option<Record>,
}

impl Dataset {
    pub fn new(times: Vec<i64>, inputs: Vec<Vec<f64>>, outputs: Vec<Option<f64>>) -> Result<Self> {
        let n = times.len();
        let ds = Dataset { times, inputs, outputs, imputed: vec![false; n], test: None };
        ds.validate()?;
        Ok(ds)
    }

    pub fn from_record(record: Record) -> Self {
        let n = record.len();
        Dataset {
            times: record.times,
            inputs: record.inputs,
            outputs: record.outputs.into_iter().map(Some).collect(),
            imputed: vec![false; n],
            test: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if self.outputs.len() != n || self.imputed.len() != n {
            return Err(Error::Data("output column length differs from time column".into()));
        }
        if self.inputs.iter().any(|u| u.len() != n) {
            return Err(Error::Data("input column length differs from time column".into()));
        }
        if self.times.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::Data("times must be consecutive integers".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.outputs[i].is_some()).collect()
    }

    pub fn missing_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.outputs[i].is_none()).collect()
    }

    pub fn observed_count(&self) -> usize {
        self.outputs.iter().filter(|y| y.is_some()).count()
    }

    pub fn missing_count(&self) -> usize {
        self.len() - self.observed_count()
    }

    /// Index of time `t` in this record, if present.
    pub fn index_of(&self, t: i64) -> Option<usize> {
        let first = *self.times.first()?;
        let i = t.checked_sub(first)?;
        (i >= 0 && (i as usize) < self.len()).then_some(i as usize)
    }

    /// The training part as a record, failing if any output is missing.
    pub fn to_record(&self) -> Result<Record> {
        let outputs = self
            .outputs
            .iter()
            .map(|y| y.ok_or_else(|| Error::Data("record has missing outputs".into())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Record { times: self.times.clone(), inputs: self.inputs.clone(), outputs })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.write_csv_with_std(out, None)
    }

    /// Writes the record; `std` adds the `imputed,std` columns.
    pub fn write_csv_with_std<W: Write>(&self, out: W, std: Option<&[f64]>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.num_inputs()).map(|i| format!("u{i}")));
        header.push("y".into());
        if std.is_some() {
            header.push("imputed".into());
            header.push("std".into());
        }
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.len() {
            let mut row = vec![self.times[i].to_string()];
            row.extend(self.inputs.iter().map(|u| u[i].to_string()));
            row.push(self.outputs[i].map(|y| y.to_string()).unwrap_or_default());
            if let Some(s) = std {
                row.push(u8::from(self.imputed[i]).to_string());
                row.push(s[i].to_string());
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = reader.headers().map_err(csv_err)?.clone();
        let cols: Vec<&str> = header.iter().map(str::trim).collect();
        let y_col = cols
            .iter()
            .position(|&c| c == "y")
            .ok_or(Error::Parse { line: 1, message: "missing `y` column".into() })?;
        if cols.first() != Some(&"t") {
            return Err(Error::Parse { line: 1, message: "first column must be `t`".into() });
        }
        for (k, c) in cols[1..y_col].iter().enumerate() {
            if *c != format!("u{}", k + 1) {
                return Err(Error::Parse { line: 1, message: format!("unexpected column `{c}`") });
            }
        }
        let imputed_col = cols.iter().position(|&c| c == "imputed");
        let m = y_col - 1;

        let mut times = Vec::new();
        let mut inputs = vec![Vec::new(); m];
        let mut outputs = Vec::new();
        let mut imputed = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let field = |j: usize| -> Result<&str> {
                rec.get(j).map(str::trim).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("expected at least {} fields", y_col + 1),
                })
            };
            let t: i64 = field(0)?
                .parse()
                .map_err(|e| Error::Parse { line, message: format!("bad time: {e}") })?;
            times.push(t);
            for (k, u) in inputs.iter_mut().enumerate() {
                let v = parse_f64(field(k + 1)?, line)?;
                u.push(v);
            }
            let y = field(y_col)?;
            outputs.push(if y.is_empty() { None } else { Some(parse_f64(y, line)?) });
            let flag = match imputed_col.and_then(|j| rec.get(j)).map(str::trim) {
                None | Some("") | Some("0") => false,
                Some("1") => true,
                Some(other) => {
                    return Err(Error::Parse { line, message: format!("bad imputed flag `{other}`") })
                }
            };
            imputed.push(flag);
        }
        let ds = Dataset { times, inputs, outputs, imputed, test: None };
        ds.validate()?;
        Ok(ds)
    }
}

impl Record {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        Dataset::from_record(self.clone()).write_csv(out)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        Dataset::read_csv(input)?.to_record()
    }
}

fn parse_f64(s: &str, line: u64) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|e| Error::Parse { line, message: format!("bad number `{s}`: {e}") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, message: format!("non-finite value `{s}`") });
    }
    Ok(v)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse { line, message: format!("{kind:?}") },
    }
}
