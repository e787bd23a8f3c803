//! CSV readers and writers. Missing cells are empty fields.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::experiment::{summarize, ExperimentReport};
use crate::data::{ObservedMatrix, SiteFrame};
use crate::error::{Error, Result};

/// A numeric table keyed by a `site_id` column. `None` marks an empty cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub site_ids: Vec<String>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::SchemaMismatch(format!("missing column `{name}`")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let j = self.column_index(name)?;
        Ok(self.values.iter().map(|r| r[j]).collect())
    }

    /// Drops the named columns.
    pub fn without(&self, names: &[&str]) -> Table {
        let keep: Vec<usize> = (0..self.columns.len())
            .filter(|&j| !names.contains(&self.columns[j].as_str()))
            .collect();
        Table {
            site_ids: self.site_ids.clone(),
            columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
            values: self
                .values
                .iter()
                .map(|r| keep.iter().map(|&j| r[j]).collect())
                .collect(),
        }
    }

    /// Rows reordered to follow `ids`.
    pub fn align_to(&self, ids: &[String]) -> Result<Table> {
        let index: std::collections::HashMap<&str, usize> = self
            .site_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut values = Vec::with_capacity(ids.len());
        for id in ids {
            let &i = index
                .get(id.as_str())
                .ok_or_else(|| Error::SchemaMismatch(format!("site `{id}` not found")))?;
            values.push(self.values[i].clone());
        }
        Ok(Table {
            site_ids: ids.to_vec(),
            columns: self.columns.clone(),
            values,
        })
    }

    pub fn to_observed(&self) -> Result<ObservedMatrix> {
        ObservedMatrix::from_rows(&self.values)
    }

    /// Dense matrix; fails on any empty cell.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let (n, p) = (self.values.len(), self.columns.len());
        let mut out = DMatrix::zeros(n, p);
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                out[(i, j)] = v.ok_or_else(|| {
                    Error::SchemaMismatch(format!(
                        "empty cell at site `{}`, column `{}`",
                        self.site_ids[i], self.columns[j]
                    ))
                })?;
            }
        }
        Ok(out)
    }
}

fn parse_cell(raw: &str, row: usize, col: &str) -> Result<Option<f64>> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| {
        Error::SchemaMismatch(format!("row {row}, column `{col}`: `{s}` is not a number"))
    })
}

/// Reads a CSV whose first column is `site_id`.
pub fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.first().map(String::as_str) != Some("site_id") {
        return Err(Error::SchemaMismatch(format!(
            "{}: first column must be `site_id`",
            path.display()
        )));
    }
    let columns = headers[1..].to_vec();
    let mut site_ids = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        site_ids.push(rec[0].trim().to_string());
        let row = columns
            .iter()
            .enumerate()
            .map(|(j, c)| parse_cell(&rec[j + 1], i + 1, c))
            .collect::<Result<Vec<_>>>()?;
        values.push(row);
    }
    Ok(Table {
        site_ids,
        columns,
        values,
    })
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_table(path: &Path, table: &Table) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["site_id".to_string()];
    header.extend(table.columns.iter().cloned());
    w.write_record(&header)?;
    for (id, row) in table.site_ids.iter().zip(&table.values) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|&v| fmt_cell(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Table from a partially observed matrix.
pub fn observed_table(site_ids: &[String], columns: &[String], x: &ObservedMatrix) -> Table {
    Table {
        site_ids: site_ids.to_vec(),
        columns: columns.to_vec(),
        values: (0..x.nrows())
            .map(|i| (0..x.ncols()).map(|j| x.get(i, j)).collect())
            .collect(),
    }
}

pub fn dense_table(site_ids: &[String], columns: &[String], x: &DMatrix<f64>) -> Table {
    Table {
        site_ids: site_ids.to_vec(),
        columns: columns.to_vec(),
        values: (0..x.nrows())
            .map(|i| (0..x.ncols()).map(|j| Some(x[(i, j)])).collect())
            .collect(),
    }
}

/// Sites file: `site_id, x, y, covariates...`. Other listed columns are
/// ignored.
pub fn read_sites(path: &Path, ignore: &[&str]) -> Result<(Vec<String>, Vec<String>, SiteFrame)> {
    let t = read_table(path)?.without(ignore);
    let xi = t.column_index("x")?;
    let yi = t.column_index("y")?;
    let dense = t.to_dense()?;
    let coords = DMatrix::from_fn(dense.nrows(), 2, |i, j| dense[(i, if j == 0 { xi } else { yi })]);
    let cov_idx: Vec<usize> = (0..t.columns.len()).filter(|&j| j != xi && j != yi).collect();
    let covars = dense.select_columns(&cov_idx);
    let names = cov_idx.iter().map(|&j| t.columns[j].clone()).collect();
    Ok((t.site_ids.clone(), names, SiteFrame::new(coords, covars)?))
}

pub fn write_sites(path: &Path, site_ids: &[String], names: &[String], frame: &SiteFrame) -> Result<()> {
    let mut cols = vec!["x".to_string(), "y".to_string()];
    cols.extend(names.iter().cloned());
    let mut m = DMatrix::zeros(frame.n(), 2 + frame.k());
    m.columns_mut(0, 2).copy_from(frame.coords());
    m.columns_mut(2, frame.k()).copy_from(frame.covars());
    write_table(path, &dense_table(site_ids, &cols, &m))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `results.csv`, `summary.csv`, `loadings.csv`, `similarity.csv`,
/// `failures.csv` and `timings.csv`. Only `timings.csv` depends on the
/// machine.
pub fn write_report(dir: &Path, report: &ExperimentReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_rows(
        &dir.join("results.csv"),
        &report.rows,
        &[
            "replicate",
            "method",
            "pc_index",
            "prediction_r2",
            "reconstruction_error",
            "converged",
            "iterations",
        ],
    )?;
    write_rows(
        &dir.join("summary.csv"),
        &summarize(&report.rows),
        &["method", "pc_index", "n", "median_r2", "q25_r2", "q75_r2", "median_re"],
    )?;
    write_rows(
        &dir.join("similarity.csv"),
        &report.similarity,
        &["replicate", "method_a", "pc_a", "method_b", "pc_b", "abs_cos"],
    )?;
    write_rows(
        &dir.join("failures.csv"),
        &report.failures,
        &["replicate", "method", "error"],
    )?;
    write_rows(
        &dir.join("timings.csv"),
        &report.timings,
        &["replicate", "method", "wall_time_ms"],
    )?;

    let mut w = csv::Writer::from_path(dir.join("loadings.csv"))?;
    let p = report.loadings.first().map_or(0, |l| l.loading.len());
    let mut header = vec!["replicate".to_string(), "method".into(), "pc_index".into()];
    header.extend((1..=p).map(|j| format!("v{j}")));
    w.write_record(&header)?;
    for l in &report.loadings {
        let mut rec = vec![l.replicate.to_string(), l.method.tag().into(), l.pc_index.to_string()];
        rec.extend(l.loading.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `pc, v1..vp` rows plus a `mean` row holding the training column means.
pub fn write_loadings(path: &Path, columns: &[String], loadings: &DMatrix<f64>, means: &DVector<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["component".to_string()];
    header.extend(columns.iter().cloned());
    w.write_record(&header)?;
    let mut rec = vec!["mean".to_string()];
    rec.extend(means.iter().map(|v| v.to_string()));
    w.write_record(&rec)?;
    for l in 0..loadings.ncols() {
        let mut rec = vec![format!("pc{}", l + 1)];
        rec.extend(loadings.column(l).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_loadings`]: `(columns, loadings p x q, means)`.
pub fn read_loadings(path: &Path) -> Result<(Vec<String>, DMatrix<f64>, DVector<f64>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let columns: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut means = None;
    let mut pcs = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::SchemaMismatch(format!("bad loading value `{s}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if &rec[0] == "mean" {
            means = Some(DVector::from_vec(vals));
        } else {
            pcs.push(vals);
        }
    }
    let means = means.ok_or_else(|| Error::SchemaMismatch("loadings file has no `mean` row".into()))?;
    let p = columns.len();
    if means.len() != p || pcs.iter().any(|v| v.len() != p) || pcs.is_empty() {
        return Err(Error::SchemaMismatch("ragged loadings file".into()));
    }
    let v = DMatrix::from_fn(p, pcs.len(), |j, l| pcs[l][j]);
    Ok((columns, v, means))
}
