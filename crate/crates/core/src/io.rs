//! CSV input and output of matrices, compositions and fits.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::composition::{closure, default_names, CompositionMatrix};
use crate::error::{dim_mismatch, EricError, Result};
use crate::solver::FitResult;

/// A numeric table with optional column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub values: DMatrix<f64>,
    pub header: Option<Vec<String>>,
}

fn parse_cell(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

/// Reads a comma-separated numeric table. The first record is a header when
/// none of its cells is a number.
pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| EricError::Parse(e.to_string()))?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let parsed: Vec<Option<f64>> = rec.iter().map(parse_cell).collect();
        if k == 0 && parsed.iter().all(Option::is_none) {
            header = Some(rec.iter().map(str::to_string).collect());
            continue;
        }
        let row = parsed
            .into_iter()
            .enumerate()
            .map(|(j, v)| v.ok_or_else(|| EricError::Parse(format!("record {}: field {} is not a number: {:?}", k + 1, j + 1, &rec[j]))))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(EricError::Parse(format!(
                    "record {} has {} fields, expected {}",
                    k + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n == 0 || p == 0 {
        return Err(EricError::Parse("table has no numeric rows".into()));
    }
    if let Some(h) = &header {
        if h.len() != p {
            return Err(EricError::Parse(format!("header has {} names for {p} columns", h.len())));
        }
    }
    Ok(Table {
        values: DMatrix::from_fn(n, p, |i, j| rows[i][j]),
        header,
    })
}

pub fn read_table_path(path: &Path) -> Result<Table> {
    let f = File::open(path).map_err(|e| EricError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_table(f)
}

/// A single-column table as a vector.
pub fn read_vector_path(path: &Path) -> Result<DVector<f64>> {
    let t = read_table_path(path)?;
    if t.values.ncols() != 1 {
        return Err(EricError::Parse(format!(
            "{}: expected one column, found {}",
            path.display(),
            t.values.ncols()
        )));
    }
    Ok(DVector::from_column_slice(t.values.as_slice()))
}

/// Reads compositions, or raw counts closed with `pseudo_count`.
///
/// Proportions that contain zeros are closed with the pseudo-count too.
pub fn read_composition_path(path: &Path, counts: bool, pseudo_count: f64) -> Result<CompositionMatrix> {
    let t = read_table_path(path)?;
    let names = t.header.unwrap_or_else(|| default_names(t.values.ncols()));
    let has_zero = t.values.iter().any(|v| *v == 0.0);
    let comp = if counts || has_zero {
        closure(&t.values, pseudo_count)?
    } else {
        CompositionMatrix::new(t.values, names.clone())?
    };
    comp.with_names(names)
}

/// A square matrix (Σ_B); must be `p × p`.
pub fn read_square_path(path: &Path, p: usize) -> Result<DMatrix<f64>> {
    let t = read_table_path(path)?;
    if t.values.shape() != (p, p) {
        return Err(dim_mismatch(format!(
            "{} is {}x{}, expected {p}x{p}",
            path.display(),
            t.values.nrows(),
            t.values.ncols()
        )));
    }
    Ok(t.values)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes a matrix with an optional header; values use the shortest
/// round-trip representation.
pub fn write_matrix<W: Write>(m: &DMatrix<f64>, header: Option<&[String]>, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if let Some(h) = header {
        out.write_record(h)?;
    }
    for i in 0..m.nrows() {
        out.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_matrix_path(path: &Path, m: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
    write_matrix(m, header, create(path)?)
}

pub fn write_vector_path(path: &Path, v: &DVector<f64>, name: &str) -> Result<()> {
    let mut out = csv::Writer::from_writer(create(path)?);
    out.write_record([name])?;
    for x in v.iter() {
        out.write_record([x.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// `component,name,beta` rows.
pub fn write_beta<W: Write>(fit: &FitResult, names: &[String], w: W) -> Result<()> {
    if names.len() != fit.beta.len() {
        return Err(dim_mismatch("one name per coefficient is required"));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["component", "name", "beta"])?;
    for (j, (b, name)) in fit.beta.iter().zip(names).enumerate() {
        out.write_record([j.to_string(), name.clone(), b.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// `key=value` summary of a fit.
pub fn write_fit_summary<W: Write>(fit: &FitResult, mut w: W) -> Result<()> {
    let method = fit.method.map_or("none", |m| m.as_str());
    writeln!(w, "method={method}")?;
    writeln!(w, "lambda={}", fit.lambda)?;
    writeln!(w, "iterations={}", fit.iterations)?;
    writeln!(w, "kkt_gap={:e}", fit.kkt_gap)?;
    writeln!(w, "objective={}", fit.objective)?;
    writeln!(w, "coef_sum={:e}", fit.coef_sum())?;
    writeln!(w, "support_size={}", fit.support(crate::metrics::SUPPORT_THRESHOLD).len())?;
    Ok(())
}

/// Writes `beta.csv` and `summary.txt` into `dir`.
pub fn write_fit_dir(dir: &Path, fit: &FitResult, names: &[String]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut b = create(&dir.join("beta.csv"))?;
    write_beta(fit, names, &mut b)?;
    b.flush()?;
    let mut s = create(&dir.join("summary.txt"))?;
    write_fit_summary(fit, &mut s)?;
    s.flush()?;
    Ok(())
}
