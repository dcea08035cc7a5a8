//! Copula data: `n` observations in the open unit hypercube.

use crate::error::{Result, VineError};
use std::io::{Read, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct CopulaSample {
    n: usize,
    d: usize,
    /// Row-major `n x d`.
    values: Vec<f64>,
}

impl CopulaSample {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * d);
        for (t, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(VineError::Parse { line: t + 1, msg: format!("expected {d} values, got {}", r.len()) });
            }
            values.extend_from_slice(r);
        }
        Self::from_row_major(rows.len(), d, values)
    }

    pub fn from_row_major(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * d {
            return Err(VineError::DegenerateSample(format!("{} values for a {n} x {d} sample", values.len())));
        }
        if let Some(&bad) = values.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
            return Err(VineError::Domain { value: bad });
        }
        Ok(CopulaSample { n, d, values })
    }

    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let d = cols.len();
        let n = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|c| c.len() != n) {
            return Err(VineError::DegenerateSample("columns of unequal length".into()));
        }
        let mut values = Vec::with_capacity(n * d);
        for t in 0..n {
            values.extend(cols.iter().map(|c| c[t]));
        }
        Self::from_row_major(n, d, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.d..(t + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.d.max(1))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|t| self.values[t * self.d + j]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.d).map(|j| self.column(j)).collect()
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.values
    }

    /// Observations `range` as a new sample.
    pub fn slice(&self, range: std::ops::Range<usize>) -> CopulaSample {
        CopulaSample {
            n: range.len(),
            d: self.d,
            values: self.values[range.start * self.d..range.end * self.d].to_vec(),
        }
    }

    /// Order-sensitive 64-bit fingerprint of the data.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ (self.n as u64) ^ ((self.d as u64) << 32);
        for x in &self.values {
            h ^= x.to_bits();
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    /// CSV with header `u1,...,ud` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_matrix_csv(w, &header(self.d, "u"), self.n, &self.values)
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let (_, n, d, values) = read_matrix_csv(r)?;
        if let Some(pos) = values.iter().position(|x| !(*x > 0.0 && *x < 1.0)) {
            return Err(VineError::Parse { line: pos / d.max(1) + 2, msg: format!("value {} outside (0, 1)", values[pos]) });
        }
        Self::from_row_major(n, d, values)
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

pub(crate) fn header(d: usize, prefix: &str) -> Vec<String> {
    (1..=d).map(|j| format!("{prefix}{j}")).collect()
}

pub(crate) fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn write_matrix_csv<W: Write>(w: W, header: &[String], n: usize, values: &[f64]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let map = |e: csv::Error| VineError::Io(std::io::Error::other(e));
    wr.write_record(header).map_err(map)?;
    let d = header.len();
    for t in 0..n {
        wr.write_record(values[t * d..(t + 1) * d].iter().map(|&x| fmt17(x))).map_err(map)?;
    }
    wr.flush()?;
    Ok(())
}

/// Read a numeric CSV with a header row. Returns `(header, n, d, row-major values)`.
pub(crate) fn read_matrix_csv<R: Read>(r: R) -> Result<(Vec<String>, usize, usize, Vec<f64>)> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let hdr: Vec<String> = rd
        .headers()
        .map_err(|e| VineError::Parse { line: 1, msg: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    let d = hdr.len();
    let mut values = Vec::new();
    let mut n = 0;
    for (i, rec) in rd.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| VineError::Parse { line, msg: e.to_string() })?;
        if rec.len() != d {
            return Err(VineError::Parse { line, msg: format!("expected {d} fields, got {}", rec.len()) });
        }
        for field in rec.iter() {
            let x: f64 = field
                .parse()
                .map_err(|_| VineError::Parse { line, msg: format!("not a number: '{field}'") })?;
            values.push(x);
        }
        n += 1;
    }
    Ok((hdr, n, d, values))
}
