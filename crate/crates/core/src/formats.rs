//! CSV and JSON encodings of every result type, with readers that reproduce
//! the written values bit for bit.
//!
//! Floats are written in Rust's shortest round-trip notation, so `inf` and
//! `-0` survive a CSV round trip. JSON cannot hold non-finite numbers; the
//! JSON writers reject them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arrivals::ArrivalEnvelope;
use crate::bivariate::{backlog_of, BacklogSeries, BivariateFunction, CumulativePath, TimeGrid};
use crate::bounds::{BoundKind, BoundSeries};
use crate::error::{Error, Result};
use crate::estimate::{EstimateBundle, EstimateMethod};
use crate::stats::QuantileSeries;

const INPUT: &str = "<input>";

pub(crate) fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: PathBuf::from(INPUT),
        line,
        message: message.into(),
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    parse_error(line, e.to_string())
}

/// Opens `path` and runs `read` on it; parse errors report `path`.
pub fn read_file<T>(path: &Path, read: impl FnOnce(BufReader<File>) -> Result<T>) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read(BufReader::new(file)).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

/// Creates `path` and runs `write` on a buffered writer.
pub fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn num(v: f64) -> String {
    v.to_string()
}

fn csv_writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header)?;
    Ok(wtr)
}

fn finish<W: Write>(mut wtr: csv::Writer<W>) -> Result<()> {
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Data rows of a CSV input with the mandatory `header`, tagged with their line number.
fn csv_rows<R: Read>(r: R, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let found = rdr.headers().map_err(csv_error)?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(parse_error(
            1,
            format!("expected header `{}`, found `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(parse_error(line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        rows.push((line, rec));
    }
    Ok(rows)
}

pub(crate) fn field<T: FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, line: usize) -> Result<T> {
    let raw = &rec[idx];
    raw.parse()
        .map_err(|_| parse_error(line, format!("invalid {name} `{raw}`")))
}

/// Checks that the index column counts `0, 1, 2, ...`.
fn expect_index(found: usize, expected: usize, name: &str, line: usize) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(parse_error(line, format!("expected {name} = {expected}, found {found}")))
    }
}

// ---- bivariate functions ----

/// CSV `tau,t,value`, one row per cell including the diagonal, rows in `tau` order.
pub fn write_bivariate_csv<W: Write>(w: W, f: &BivariateFunction) -> Result<()> {
    let mut wtr = csv_writer(w, &["tau", "t", "value"])?;
    for (tau, row) in f.rows().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            wtr.write_record([tau.to_string(), (tau + k).to_string(), num(v)])?;
        }
    }
    finish(wtr)
}

/// Reads the CSV form. Rows may come in any order but every cell of the
/// triangle must appear exactly once; the horizon is the largest `t`.
pub fn read_bivariate_csv<R: Read>(r: R, slot_width: f64) -> Result<BivariateFunction> {
    let rows = csv_rows(r, &["tau", "t", "value"])?;
    let mut cells = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        let tau: usize = field(rec, 0, "tau", *line)?;
        let t: usize = field(rec, 1, "t", *line)?;
        let v: f64 = field(rec, 2, "value", *line)?;
        if tau > t {
            return Err(parse_error(*line, format!("tau = {tau} exceeds t = {t}")));
        }
        cells.push((*line, tau, t, v));
    }
    let horizon = cells.iter().map(|c| c.2).max().unwrap_or(0);
    let grid = TimeGrid::new(horizon, slot_width)?;
    let n = grid.len();
    let mut table: Vec<Vec<Option<f64>>> = (0..n).map(|tau| vec![None; n - tau]).collect();
    for (line, tau, t, v) in cells {
        let slot = &mut table[tau][t - tau];
        if slot.is_some() {
            return Err(parse_error(line, format!("duplicate cell ({tau}, {t})")));
        }
        *slot = Some(v);
    }
    let mut filled = Vec::with_capacity(n);
    for (tau, row) in table.into_iter().enumerate() {
        let row = row
            .into_iter()
            .enumerate()
            .map(|(k, v)| v.ok_or_else(|| parse_error(0, format!("missing cell ({tau}, {})", tau + k))))
            .collect::<Result<Vec<f64>>>()?;
        filled.push(row);
    }
    BivariateFunction::from_rows(grid, filled)
}

#[derive(Serialize, Deserialize)]
struct BivariateJson {
    horizon: usize,
    slot_width: f64,
    /// Row `tau` holds `f(tau, t)` for `t = tau..=horizon`.
    triangles: Vec<Vec<f64>>,
}

fn ensure_finite<'a>(values: impl IntoIterator<Item = &'a f64>, what: &'static str) -> Result<()> {
    match values.into_iter().find(|v| !v.is_finite()) {
        Some(v) => Err(Error::param(what, format!("JSON cannot encode {v}"))),
        None => Ok(()),
    }
}

pub fn write_bivariate_json<W: Write>(w: W, f: &BivariateFunction) -> Result<()> {
    ensure_finite(f.rows().flatten(), "bivariate function")?;
    let doc = BivariateJson {
        horizon: f.horizon(),
        slot_width: f.grid().slot_width(),
        triangles: f.rows().map(<[f64]>::to_vec).collect(),
    };
    serde_json::to_writer_pretty(w, &doc)?;
    Ok(())
}

pub fn read_bivariate_json<R: Read>(r: R) -> Result<BivariateFunction> {
    let doc: BivariateJson = serde_json::from_reader(r).map_err(json_error)?;
    BivariateFunction::from_rows(TimeGrid::new(doc.horizon, doc.slot_width)?, doc.triangles)
}

fn json_error(e: serde_json::Error) -> Error {
    parse_error(e.line(), e.to_string())
}

// ---- univariate series ----

/// Two-column CSV `index,value` with the index counting from 0.
pub fn write_series_csv<W: Write>(w: W, index: &str, value: &str, values: &[f64]) -> Result<()> {
    let mut wtr = csv_writer(w, &[index, value])?;
    for (i, &v) in values.iter().enumerate() {
        wtr.write_record([i.to_string(), num(v)])?;
    }
    finish(wtr)
}

pub fn read_series_csv<R: Read>(r: R, index: &str, value: &str) -> Result<Vec<f64>> {
    csv_rows(r, &[index, value])?
        .iter()
        .enumerate()
        .map(|(i, (line, rec))| {
            expect_index(field(rec, 0, index, *line)?, i, index, *line)?;
            field(rec, 1, value, *line)
        })
        .collect()
}

/// Envelope values `t,value` for interval widths `t = 0..=horizon`.
pub fn write_envelope_csv<W: Write>(w: W, env: &dyn ArrivalEnvelope, horizon: usize) -> Result<()> {
    let values: Vec<f64> = (0..=horizon).map(|t| env.value(t)).collect();
    write_series_csv(w, "t", "value", &values)
}

pub fn read_envelope_csv<R: Read>(r: R) -> Result<Vec<f64>> {
    read_series_csv(r, "t", "value")
}

/// Curve at fixed `t` as `tau,value`.
pub fn write_reference_curve_csv<W: Write>(w: W, curve: &[f64]) -> Result<()> {
    write_series_csv(w, "tau", "value", curve)
}

pub fn read_reference_curve_csv<R: Read>(r: R) -> Result<Vec<f64>> {
    read_series_csv(r, "tau", "value")
}

pub fn write_quantile_csv<W: Write>(w: W, q: &QuantileSeries) -> Result<()> {
    write_series_csv(w, "t", "quantile", &q.values)
}

/// The level is not part of the file and has to be supplied.
pub fn read_quantile_csv<R: Read>(r: R, epsilon: f64) -> Result<QuantileSeries> {
    Ok(QuantileSeries {
        epsilon,
        values: read_series_csv(r, "t", "quantile")?,
    })
}

pub fn write_bound_csv<W: Write>(w: W, b: &BoundSeries) -> Result<()> {
    let mut wtr = csv_writer(w, &["t", "value", "confidence"])?;
    for (t, &v) in b.values.iter().enumerate() {
        wtr.write_record([t.to_string(), num(v), num(b.confidence)])?;
    }
    finish(wtr)
}

pub fn read_bound_csv<R: Read>(r: R, kind: BoundKind, slot_width: f64) -> Result<BoundSeries> {
    let rows = csv_rows(r, &["t", "value", "confidence"])?;
    let mut values = Vec::with_capacity(rows.len());
    let mut confidence = None;
    for (i, (line, rec)) in rows.iter().enumerate() {
        expect_index(field(rec, 0, "t", *line)?, i, "t", *line)?;
        values.push(field(rec, 1, "value", *line)?);
        let c: f64 = field(rec, 2, "confidence", *line)?;
        match confidence {
            None => confidence = Some(c),
            Some(prev) if prev.to_bits() != c.to_bits() => {
                return Err(parse_error(*line, format!("confidence changes from {prev} to {c}")))
            }
            _ => {}
        }
    }
    let grid = TimeGrid::new(values.len().saturating_sub(1), slot_width)?;
    Ok(BoundSeries {
        grid,
        kind,
        values,
        confidence: confidence.unwrap_or(1.0),
    })
}

// ---- distributions ----

/// `t,b,prob`; entry `[t][b]` is `P[B(t) = b]`. Every listed mass point is written, zeros included.
pub fn write_distribution_csv<W: Write>(w: W, dists: &[Vec<f64>]) -> Result<()> {
    let mut wtr = csv_writer(w, &["t", "b", "prob"])?;
    for (t, d) in dists.iter().enumerate() {
        for (b, &p) in d.iter().enumerate() {
            wtr.write_record([t.to_string(), b.to_string(), num(p)])?;
        }
    }
    finish(wtr)
}

pub fn read_distribution_csv<R: Read>(r: R) -> Result<Vec<Vec<f64>>> {
    let mut dists: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in csv_rows(r, &["t", "b", "prob"])? {
        let t: usize = field(&rec, 0, "t", line)?;
        let b: usize = field(&rec, 1, "b", line)?;
        let p: f64 = field(&rec, 2, "prob", line)?;
        if t == dists.len() {
            dists.push(Vec::new());
        } else if t + 1 != dists.len() {
            return Err(parse_error(line, format!("expected t = {} or {}, found {t}", dists.len().saturating_sub(1), dists.len())));
        }
        let d = dists.last_mut().expect("pushed above");
        expect_index(b, d.len(), "b", line)?;
        d.push(p);
    }
    Ok(dists)
}

// ---- per-path records ----

/// Arrivals and departures of one sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub path_id: u64,
    pub arrivals: CumulativePath,
    pub departures: CumulativePath,
}

impl PathRecord {
    pub fn backlog(&self) -> Result<BacklogSeries> {
        backlog_of(&self.arrivals, &self.departures)
    }
}

impl From<crate::sim::PathOutcome> for PathRecord {
    fn from(o: crate::sim::PathOutcome) -> Self {
        Self {
            path_id: o.path_id,
            arrivals: o.arrivals,
            departures: o.departures,
        }
    }
}

/// `path_id,t,A,D,B` with `B = A - D`.
pub fn write_paths_csv<'a, W: Write>(w: W, paths: impl IntoIterator<Item = &'a PathRecord>) -> Result<()> {
    let mut wtr = csv_writer(w, &["path_id", "t", "A", "D", "B"])?;
    for p in paths {
        let b = p.backlog()?;
        for t in 0..p.arrivals.grid().len() {
            wtr.write_record([
                p.path_id.to_string(),
                t.to_string(),
                num(p.arrivals.at(t)),
                num(p.departures.at(t)),
                num(b.at(t)),
            ])?;
        }
    }
    finish(wtr)
}

/// Rows of one path must be contiguous with `t = 0, 1, ...`; `B` must equal `A - D`.
pub fn read_paths_csv<R: Read>(r: R, slot_width: f64) -> Result<Vec<PathRecord>> {
    struct Partial {
        id: u64,
        a: Vec<f64>,
        d: Vec<f64>,
        last_line: usize,
    }
    let mut parts: Vec<Partial> = Vec::new();
    for (line, rec) in csv_rows(r, &["path_id", "t", "A", "D", "B"])? {
        let id: u64 = field(&rec, 0, "path_id", line)?;
        let t: usize = field(&rec, 1, "t", line)?;
        let a: f64 = field(&rec, 2, "A", line)?;
        let d: f64 = field(&rec, 3, "D", line)?;
        let b: f64 = field(&rec, 4, "B", line)?;
        if (a - d).to_bits() != b.to_bits() {
            return Err(parse_error(line, format!("B = {b} differs from A - D = {}", a - d)));
        }
        if parts.last().is_none_or(|p| p.id != id) {
            parts.push(Partial {
                id,
                a: Vec::new(),
                d: Vec::new(),
                last_line: line,
            });
        }
        let p = parts.last_mut().expect("pushed above");
        expect_index(t, p.a.len(), "t", line)?;
        p.a.push(a);
        p.d.push(d);
        p.last_line = line;
    }
    let horizon = match parts.first() {
        Some(p) => p.a.len().saturating_sub(1),
        None => return Ok(Vec::new()),
    };
    let grid = TimeGrid::new(horizon, slot_width).map_err(|e| parse_error(parts[0].last_line, e.to_string()))?;
    parts
        .into_iter()
        .map(|p| {
            let at = |e: Error| parse_error(p.last_line, format!("path {}: {e}", p.id));
            Ok(PathRecord {
                path_id: p.id,
                arrivals: CumulativePath::new(grid, p.a).map_err(at)?,
                departures: CumulativePath::new(grid, p.d).map_err(at)?,
            })
        })
        .collect()
}

// ---- estimates ----

#[derive(Serialize, Deserialize)]
struct TauValue {
    tau: usize,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct TValue {
    t: usize,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct BundleJson {
    method: String,
    epsilon: f64,
    t: usize,
    accuracy: Option<f64>,
    curve: Vec<TauValue>,
    probe: Vec<TValue>,
    n_paths: usize,
    seed: Option<u64>,
}

pub fn write_estimate_json<W: Write>(w: W, b: &EstimateBundle) -> Result<()> {
    ensure_finite(b.curve.iter().chain(&b.probe).chain(b.accuracy.as_ref()), "estimate")?;
    let doc = BundleJson {
        method: b.method.name().to_string(),
        epsilon: b.epsilon,
        t: b.t,
        accuracy: b.accuracy,
        curve: b.curve.iter().enumerate().map(|(tau, &value)| TauValue { tau, value }).collect(),
        probe: b.probe.iter().enumerate().map(|(t, &value)| TValue { t, value }).collect(),
        n_paths: b.n_paths,
        seed: b.seed,
    };
    serde_json::to_writer_pretty(w, &doc)?;
    Ok(())
}

pub fn read_estimate_json<R: Read>(r: R) -> Result<EstimateBundle> {
    let doc: BundleJson = serde_json::from_reader(r).map_err(json_error)?;
    let method = EstimateMethod::from_name(&doc.method)
        .ok_or_else(|| parse_error(0, format!("unknown estimation method `{}`", doc.method)))?;
    if doc.curve.len() != doc.t + 1 || doc.curve.iter().enumerate().any(|(i, c)| c.tau != i) {
        return Err(parse_error(0, format!("curve must list tau = 0..={} in order", doc.t)));
    }
    if doc.probe.iter().enumerate().any(|(i, p)| p.t != i) {
        return Err(parse_error(0, "probe must list t = 0, 1, ... in order"));
    }
    Ok(EstimateBundle {
        method,
        epsilon: doc.epsilon,
        t: doc.t,
        accuracy: doc.accuracy,
        curve: doc.curve.into_iter().map(|c| c.value).collect(),
        probe: doc.probe.into_iter().map(|p| p.value).collect(),
        n_paths: doc.n_paths,
        seed: doc.seed,
    })
}

// ---- generic tables ----

/// Numeric table with named columns, used for figure data.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn write_table_csv<W: Write>(w: W, table: &Table) -> Result<()> {
    let header: Vec<&str> = table.columns.iter().map(String::as_str).collect();
    let mut wtr = csv_writer(w, &header)?;
    for row in &table.rows {
        wtr.write_record(row.iter().map(|&v| num(v)))?;
    }
    finish(wtr)
}

pub fn read_table_csv<R: Read>(r: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let columns: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    if columns.is_empty() || columns.iter().any(String::is_empty) {
        return Err(parse_error(1, "missing or empty column name in header"));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row = (0..columns.len())
            .map(|i| field(&rec, i, &columns[i], line))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { columns, rows })
}
