//! CSV files: fields, covariates, stations, volumes, reports, mesh dumps and
//! the Milan CDR and geographic-feature schemas.
//!
//! Every file has a header row. Rows are written in cell (row-major) order so
//! output bytes depend only on the data.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use csv::StringRecord;

use crate::admm::IterationRecord;
use crate::domain::{CovariateMatrix, GridDomain, SpatialField};
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::partition::{AggregateObservations, StationSet};
use crate::smoother::Triangulation;

/// Activity columns summed into one volume per row.
pub const CDR_ACTIVITY: [&str; 4] = ["sms_in", "sms_out", "call_in", "call_out"];

/// Geographic features, in column order of the loaded matrix.
pub const FEATURE_NAMES: [&str; 6] = [
    "population",
    "green_area",
    "sport_centers",
    "universities",
    "businesses",
    "bus_stops",
];

/// Mapping from 1-based square IDs to grid cells, row-major from (0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SquareGrid {
    pub n_rows: usize,
    pub n_cols: usize,
}

impl Default for SquareGrid {
    fn default() -> Self {
        Self {
            n_rows: 100,
            n_cols: 100,
        }
    }
}

impl SquareGrid {
    pub fn position(&self, id: u64) -> Option<(usize, usize)> {
        let k = usize::try_from(id).ok()?.checked_sub(1)?;
        (k < self.n_rows * self.n_cols).then(|| (k / self.n_cols, k % self.n_cols))
    }

    pub fn id(&self, row: usize, col: usize) -> u64 {
        (row * self.n_cols + col + 1) as u64
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

struct Table {
    path: std::path::PathBuf,
    reader: csv::Reader<File>,
    columns: HashMap<String, usize>,
}

impl Table {
    fn open(path: &Path, required: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(file);
        let headers = reader
            .headers()
            .map_err(|e| Error::schema(path, 1, e.to_string()))?
            .clone();
        let columns: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        if headers.iter().all(str::is_empty) {
            return Err(Error::schema(path, 1, "missing header row"));
        }
        for name in required {
            if !columns.contains_key(*name) {
                return Err(Error::schema(
                    path,
                    1,
                    format!("missing column `{name}` (header: {})", headers.iter().collect::<Vec<_>>().join(",")),
                ));
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            reader,
            columns,
        })
    }

    /// Iterates records with their 1-based line numbers.
    fn rows(&mut self) -> impl Iterator<Item = Result<(usize, StringRecord)>> + '_ {
        let path = self.path.clone();
        self.reader.records().map(move |r| match r {
            Ok(rec) => {
                let line = rec.position().map_or(0, |p| p.line() as usize);
                Ok((line, rec))
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                Err(Error::schema(&path, line, e.to_string()))
            }
        })
    }

    fn col(&self, name: &str) -> usize {
        self.columns[name]
    }
}

fn parse<T: std::str::FromStr>(path: &Path, line: usize, rec: &StringRecord, idx: usize, name: &str) -> Result<T> {
    let raw = rec.get(idx).unwrap_or("");
    raw.parse()
        .map_err(|_| Error::schema(path, line, format!("cannot parse `{raw}` as {name}")))
}

fn parse_finite(path: &Path, line: usize, rec: &StringRecord, idx: usize, name: &str) -> Result<f64> {
    let v: f64 = parse(path, line, rec, idx, name)?;
    if !v.is_finite() {
        return Err(Error::schema(path, line, format!("{name} is not finite")));
    }
    Ok(v)
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(file))
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = create(path)?;
    let io_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `row,col,value` for every active cell.
pub fn write_field_csv(path: impl AsRef<Path>, field: &SpatialField) -> Result<()> {
    let d = field.domain();
    write_rows(
        path.as_ref(),
        &["row", "col", "value"],
        d.cells()
            .iter()
            .zip(field.values())
            .map(|(&(r, c), &v)| [r.to_string(), c.to_string(), fmt_f64(v)]),
    )
}

/// Reads `row,col,value`. With a domain every active cell must appear once;
/// without one the grid is the bounding rectangle and absent cells are
/// inactive.
pub fn read_field_csv(path: impl AsRef<Path>, domain: Option<&Arc<GridDomain>>) -> Result<SpatialField> {
    let path = path.as_ref();
    let mut t = Table::open(path, &["row", "col", "value"])?;
    let (ir, ic, iv) = (t.col("row"), t.col("col"), t.col("value"));
    let mut entries: Vec<(usize, usize, f64, usize)> = Vec::new();
    for row in t.rows() {
        let (line, rec) = row?;
        let r: usize = parse(path, line, &rec, ir, "row")?;
        let c: usize = parse(path, line, &rec, ic, "col")?;
        let v = parse_finite(path, line, &rec, iv, "value")?;
        entries.push((r, c, v, line));
    }
    let domain = match domain {
        Some(d) => d.clone(),
        None => {
            if entries.is_empty() {
                return Err(Error::schema(path, 1, "no cells"));
            }
            let nr = entries.iter().map(|e| e.0).max().unwrap() + 1;
            let nc = entries.iter().map(|e| e.1).max().unwrap() + 1;
            let mut mask = vec![false; nr * nc];
            for e in &entries {
                mask[e.0 * nc + e.1] = true;
            }
            Arc::new(GridDomain::new(nr, nc, mask)?)
        }
    };
    let mut values = vec![None; domain.len()];
    for (r, c, v, line) in entries {
        let j = if r < domain.n_rows() && c < domain.n_cols() {
            domain.index_of(r, c)
        } else {
            None
        }
        .ok_or_else(|| Error::schema(path, line, format!("cell ({r}, {c}) is not in the domain")))?;
        if values[j].replace(v).is_some() {
            return Err(Error::schema(path, line, format!("cell ({r}, {c}) listed twice")));
        }
    }
    let values = values
        .into_iter()
        .enumerate()
        .map(|(j, v)| {
            v.ok_or_else(|| {
                let (r, c) = domain.cell(j);
                Error::schema(path, 0, format!("cell ({r}, {c}) has no value"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SpatialField::new(domain, values)
}

/// `row,col,<name>...`.
pub fn write_covariates_csv(path: impl AsRef<Path>, w: &CovariateMatrix) -> Result<()> {
    let mut header = vec!["row", "col"];
    header.extend(w.names().iter().map(String::as_str));
    let d = w.domain();
    write_rows(
        path.as_ref(),
        &header,
        d.cells().iter().enumerate().map(|(j, &(r, c))| {
            let mut row = vec![r.to_string(), c.to_string()];
            row.extend(w.row(j).iter().map(|&v| fmt_f64(v)));
            row
        }),
    )
}

/// Reads covariates written by [`write_covariates_csv`] onto `domain`.
pub fn read_covariates_csv(path: impl AsRef<Path>, domain: &Arc<GridDomain>) -> Result<CovariateMatrix> {
    let path = path.as_ref();
    let mut t = Table::open(path, &["row", "col"])?;
    let (ir, ic) = (t.col("row"), t.col("col"));
    let mut names: Vec<(usize, String)> = t
        .columns
        .iter()
        .filter(|(k, _)| k.as_str() != "row" && k.as_str() != "col")
        .map(|(k, &i)| (i, k.clone()))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::schema(path, 1, "no covariate columns"));
    }
    let q = names.len();
    let mut data = vec![f64::NAN; domain.len() * q];
    let mut seen = vec![false; domain.len()];
    for row in t.rows() {
        let (line, rec) = row?;
        let r: usize = parse(path, line, &rec, ir, "row")?;
        let c: usize = parse(path, line, &rec, ic, "col")?;
        let j = (r < domain.n_rows() && c < domain.n_cols())
            .then(|| domain.index_of(r, c))
            .flatten()
            .ok_or_else(|| Error::schema(path, line, format!("cell ({r}, {c}) is not in the domain")))?;
        if std::mem::replace(&mut seen[j], true) {
            return Err(Error::schema(path, line, format!("cell ({r}, {c}) listed twice")));
        }
        for (k, (idx, name)) in names.iter().enumerate() {
            data[j * q + k] = parse_finite(path, line, &rec, *idx, name)?;
        }
    }
    if let Some(j) = seen.iter().position(|s| !s) {
        let (r, c) = domain.cell(j);
        return Err(Error::schema(path, 0, format!("cell ({r}, {c}) has no covariates")));
    }
    CovariateMatrix::new(domain.clone(), names.into_iter().map(|n| n.1).collect(), data)
}

/// `station_id,row,col` with ids `0..m`.
pub fn write_stations_csv(path: impl AsRef<Path>, domain: &GridDomain, stations: &StationSet) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["station_id", "row", "col"],
        stations.cells().iter().enumerate().map(|(i, &j)| {
            let (r, c) = domain.cell(j);
            [i.to_string(), r.to_string(), c.to_string()]
        }),
    )
}

pub fn read_stations_csv(path: impl AsRef<Path>, domain: &GridDomain) -> Result<StationSet> {
    let path = path.as_ref();
    let mut t = Table::open(path, &["station_id", "row", "col"])?;
    let (ii, ir, ic) = (t.col("station_id"), t.col("row"), t.col("col"));
    let mut rows: Vec<(usize, usize, usize)> = Vec::new();
    for row in t.rows() {
        let (line, rec) = row?;
        let id: usize = parse(path, line, &rec, ii, "station_id")?;
        let r: usize = parse(path, line, &rec, ir, "row")?;
        let c: usize = parse(path, line, &rec, ic, "col")?;
        let j = (r < domain.n_rows() && c < domain.n_cols())
            .then(|| domain.index_of(r, c))
            .flatten()
            .ok_or_else(|| Error::schema(path, line, format!("station cell ({r}, {c}) is not active")))?;
        rows.push((id, j, line));
    }
    rows.sort();
    for (k, &(id, _, line)) in rows.iter().enumerate() {
        if id != k {
            return Err(Error::schema(path, line, "station ids must be 0..m without gaps or repeats"));
        }
    }
    StationSet::new(domain, rows.into_iter().map(|r| r.1).collect())
}

/// `station_id,volume`.
pub fn write_aggregates_csv(path: impl AsRef<Path>, z: &AggregateObservations) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["station_id", "volume"],
        z.values().iter().enumerate().map(|(i, &v)| [i.to_string(), fmt_f64(v)]),
    )
}

pub fn read_aggregates_csv(path: impl AsRef<Path>) -> Result<AggregateObservations> {
    let path = path.as_ref();
    let mut t = Table::open(path, &["station_id", "volume"])?;
    let (ii, iv) = (t.col("station_id"), t.col("volume"));
    let mut rows: Vec<(usize, f64, usize)> = Vec::new();
    for row in t.rows() {
        let (line, rec) = row?;
        let id: usize = parse(path, line, &rec, ii, "station_id")?;
        let v = parse_finite(path, line, &rec, iv, "volume")?;
        if v < 0.0 {
            return Err(Error::schema(path, line, format!("negative volume {v}")));
        }
        rows.push((id, v, line));
    }
    rows.sort_by_key(|r| r.0);
    for (k, &(id, _, line)) in rows.iter().enumerate() {
        if id != k {
            return Err(Error::schema(path, line, "station ids must be 0..m without gaps or repeats"));
        }
    }
    AggregateObservations::new(rows.into_iter().map(|r| r.1).collect())
}

/// Mesh dump: vertices `id,x,y` and triangles `id,v1,v2,v3`.
pub fn write_mesh_csv(vertices: impl AsRef<Path>, triangles: impl AsRef<Path>, tri: &Triangulation) -> Result<()> {
    write_rows(
        vertices.as_ref(),
        &["id", "x", "y"],
        tri.vertices()
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| [i.to_string(), fmt_f64(x), fmt_f64(y)]),
    )?;
    write_rows(
        triangles.as_ref(),
        &["id", "v1", "v2", "v3"],
        tri.triangles()
            .iter()
            .enumerate()
            .map(|(i, t)| [i.to_string(), t[0].to_string(), t[1].to_string(), t[2].to_string()]),
    )
}

/// `iter,primal_residual,dual_residual,objective` for every `every`-th
/// iteration and the last one.
pub fn write_diagnostics_csv(path: impl AsRef<Path>, history: &[IterationRecord], every: usize) -> Result<()> {
    let every = every.max(1);
    let last = history.last().map(|r| r.iter);
    write_rows(
        path.as_ref(),
        &["iter", "primal_residual", "dual_residual", "objective"],
        history
            .iter()
            .filter(|r| r.iter % every == 0 || Some(r.iter) == last)
            .map(|r| {
                [
                    r.iter.to_string(),
                    fmt_f64(r.primal_residual),
                    fmt_f64(r.dual_residual),
                    fmt_f64(r.objective),
                ]
            }),
    )
}

fn tag(r: &EvalReport) -> (String, String) {
    (
        r.method.map_or_else(String::new, |m| m.tag().to_string()),
        r.seed.map_or_else(String::new, |s| s.to_string()),
    )
}

/// `method,seed,mre,excluded`, one row per report.
pub fn write_report_csv(path: impl AsRef<Path>, reports: &[EvalReport]) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["method", "seed", "mre", "excluded"],
        reports.iter().map(|r| {
            let (m, s) = tag(r);
            [m, s, fmt_f64(r.mre), r.excluded.to_string()]
        }),
    )
}

/// `method,seed,error,cdf` at every distinct sorted error.
pub fn write_cdf_csv(path: impl AsRef<Path>, reports: &[EvalReport]) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["method", "seed", "error", "cdf"],
        reports.iter().flat_map(|r| {
            let (m, s) = tag(r);
            r.cdf_points()
                .into_iter()
                .map(move |(e, p)| [m.clone(), s.clone(), fmt_f64(e), fmt_f64(p)])
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub seed: Option<u64>,
    pub mre: f64,
    pub excluded: usize,
}

pub fn read_report_csv(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let mut t = Table::open(path, &["method", "seed", "mre", "excluded"])?;
    let (im, is, iv, ie) = (t.col("method"), t.col("seed"), t.col("mre"), t.col("excluded"));
    let mut out = Vec::new();
    for row in t.rows() {
        let (line, rec) = row?;
        let seed = match rec.get(is).unwrap_or("") {
            "" => None,
            _ => Some(parse(path, line, &rec, is, "seed")?),
        };
        out.push(ReportRow {
            method: rec.get(im).unwrap_or("").to_string(),
            seed,
            mre: parse_finite(path, line, &rec, iv, "mre")?,
            excluded: parse(path, line, &rec, ie, "excluded")?,
        });
    }
    Ok(out)
}

/// One CDF curve per `(method, seed)` in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfCurve {
    pub method: String,
    pub seed: Option<u64>,
    pub points: Vec<(f64, f64)>,
}

pub fn read_cdf_csv(path: impl AsRef<Path>) -> Result<Vec<CdfCurve>> {
    let path = path.as_ref();
    let mut t = Table::open(path, &["method", "seed", "error", "cdf"])?;
    let (im, is, ie, ic) = (t.col("method"), t.col("seed"), t.col("error"), t.col("cdf"));
    let mut out: Vec<CdfCurve> = Vec::new();
    for row in t.rows() {
        let (line, rec) = row?;
        let method = rec.get(im).unwrap_or("").to_string();
        let seed = match rec.get(is).unwrap_or("") {
            "" => None,
            _ => Some(parse(path, line, &rec, is, "seed")?),
        };
        let e = parse_finite(path, line, &rec, ie, "error")?;
        let p = parse_finite(path, line, &rec, ic, "cdf")?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::schema(path, line, format!("cdf value {p} outside [0, 1]")));
        }
        match out.last_mut() {
            Some(c) if c.method == method && c.seed == seed => c.points.push((e, p)),
            _ => out.push(CdfCurve {
                method,
                seed,
                points: vec![(e, p)],
            }),
        }
    }
    Ok(out)
}

/// Per-square activity summed over rows with `start <= timestamp < end`.
/// Empty activity values count as zero. The result covers the whole grid.
pub fn load_cdr_csv(path: impl AsRef<Path>, time_range: Option<(i64, i64)>, grid: SquareGrid) -> Result<SpatialField> {
    let path = path.as_ref();
    let mut required = vec!["square_id", "timestamp"];
    required.extend(CDR_ACTIVITY);
    let mut t = Table::open(path, &required)?;
    let isq = t.col("square_id");
    let its = t.col("timestamp");
    let iact: Vec<usize> = CDR_ACTIVITY.iter().map(|n| t.col(n)).collect();
    let domain = Arc::new(GridDomain::full(grid.n_rows, grid.n_cols)?);
    // (cell, timestamp, row volume); sorted before summing so the result does
    // not depend on row order.
    let mut parts: Vec<(usize, i64, f64)> = Vec::new();
    for row in t.rows() {
        let (line, rec) = row?;
        let id: u64 = parse(path, line, &rec, isq, "square_id")?;
        let (r, c) = grid
            .position(id)
            .ok_or_else(|| Error::schema(path, line, format!("unknown square id {id}")))?;
        let ts: i64 = parse(path, line, &rec, its, "timestamp")?;
        if let Some((a, b)) = time_range {
            if ts < a || ts >= b {
                continue;
            }
        }
        let mut v = 0.0;
        for (&k, name) in iact.iter().zip(CDR_ACTIVITY) {
            if !rec.get(k).unwrap_or("").is_empty() {
                let x = parse_finite(path, line, &rec, k, name)?;
                if x < 0.0 {
                    return Err(Error::schema(path, line, format!("negative {name}")));
                }
                v += x;
            }
        }
        parts.push((r * grid.n_cols + c, ts, v));
    }
    parts.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
    let mut values = vec![0.0; domain.len()];
    for (j, _, v) in parts {
        values[j] += v;
    }
    SpatialField::new(domain, values)
}

/// Geographic features by square. Squares missing from the file are inactive
/// in the returned domain. Raw values are kept; standardize before fitting.
pub fn load_features_csv(path: impl AsRef<Path>, grid: SquareGrid) -> Result<CovariateMatrix> {
    let path = path.as_ref();
    let mut required = vec!["square_id"];
    required.extend(FEATURE_NAMES);
    let mut t = Table::open(path, &required)?;
    let isq = t.col("square_id");
    let ifeat: Vec<usize> = FEATURE_NAMES.iter().map(|n| t.col(n)).collect();
    let mut rows: HashMap<usize, Vec<f64>> = HashMap::new();
    for row in t.rows() {
        let (line, rec) = row?;
        let id: u64 = parse(path, line, &rec, isq, "square_id")?;
        let (r, c) = grid
            .position(id)
            .ok_or_else(|| Error::schema(path, line, format!("unknown square id {id}")))?;
        let vals = ifeat
            .iter()
            .zip(FEATURE_NAMES)
            .map(|(&k, name)| parse_finite(path, line, &rec, k, name))
            .collect::<Result<Vec<_>>>()?;
        if rows.insert(r * grid.n_cols + c, vals).is_some() {
            return Err(Error::schema(path, line, format!("duplicate square id {id}")));
        }
    }
    let mut mask = vec![false; grid.n_rows * grid.n_cols];
    for &k in rows.keys() {
        mask[k] = true;
    }
    let domain = Arc::new(GridDomain::new(grid.n_rows, grid.n_cols, mask)?);
    let mut data = Vec::with_capacity(domain.len() * FEATURE_NAMES.len());
    for &(r, c) in domain.cells() {
        data.extend_from_slice(&rows[&(r * grid.n_cols + c)]);
    }
    CovariateMatrix::new(domain, FEATURE_NAMES.iter().map(|s| s.to_string()).collect(), data)
}

/// Writes `field` in the CDR schema: each cell's value is spread evenly over
/// `slots` timestamps `t0, t0 + step, ...` and split 10/20/30/40 percent
/// across the four activity columns.
pub fn write_cdr_csv(
    path: impl AsRef<Path>,
    field: &SpatialField,
    grid: SquareGrid,
    t0: i64,
    step: i64,
    slots: usize,
) -> Result<()> {
    let d = field.domain();
    if d.n_rows() > grid.n_rows || d.n_cols() > grid.n_cols {
        return Err(Error::ShapeMismatch("field grid is larger than the square grid".into()));
    }
    let slots = slots.max(1);
    let mut header = vec!["square_id", "timestamp"];
    header.extend(CDR_ACTIVITY);
    write_rows(
        path.as_ref(),
        &header,
        d.cells().iter().zip(field.values()).flat_map(|(&(r, c), &v)| {
            let id = grid.id(r, c);
            (0..slots).map(move |k| {
                let share = v / slots as f64;
                let mut row = vec![id.to_string(), (t0 + step * k as i64).to_string()];
                row.extend([0.1, 0.2, 0.3, 0.4].iter().map(|f| fmt_f64(share * f)));
                row
            })
        }),
    )
}

/// Writes covariates in the feature schema. Columns must be named after
/// [`FEATURE_NAMES`], in that order.
pub fn write_features_csv(path: impl AsRef<Path>, w: &CovariateMatrix, grid: SquareGrid) -> Result<()> {
    if w.names().iter().map(String::as_str).ne(FEATURE_NAMES) {
        return Err(Error::ShapeMismatch(format!("feature columns must be {}", FEATURE_NAMES.join(","))));
    }
    let d = w.domain();
    if d.n_rows() > grid.n_rows || d.n_cols() > grid.n_cols {
        return Err(Error::ShapeMismatch("covariate grid is larger than the square grid".into()));
    }
    let mut header = vec!["square_id"];
    header.extend(FEATURE_NAMES);
    write_rows(
        path.as_ref(),
        &header,
        d.cells().iter().enumerate().map(|(j, &(r, c))| {
            let mut row = vec![grid.id(r, c).to_string()];
            row.extend(w.row(j).iter().map(|&v| fmt_f64(v)));
            row
        }),
    )
}

/// Writes a string, creating parent directories.
pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    const CDR_HEADER: &str = "square_id,timestamp,sms_in,sms_out,call_in,call_out\n";
    const SMALL: SquareGrid = SquareGrid { n_rows: 2, n_cols: 3 };

    #[test]
    fn square_ids_are_row_major_from_one() {
        let g = SquareGrid::default();
        assert_eq!(g.position(1), Some((0, 0)));
        assert_eq!(g.position(101), Some((1, 0)));
        assert_eq!(g.position(10000), Some((99, 99)));
        assert_eq!(g.position(0), None);
        assert_eq!(g.position(10001), None);
        assert_eq!(g.id(1, 0), 101);
    }

    #[test]
    fn cdr_rows_are_summed() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", &format!("{CDR_HEADER}1,0,1.0,2.0,3.0,4.0\n"));
        let f = load_cdr_csv(&p, None, SquareGrid::default()).unwrap();
        assert_eq!(f.values()[0], 10.0);
        assert_eq!(f.len(), 10000);

        let p = write(&dir, "b.csv", &format!("{CDR_HEADER}5,0,1,,,\n5,600,,2,,0.5\n6,0,1,1,1,1\n"));
        let f = load_cdr_csv(&p, None, SMALL).unwrap();
        assert_eq!(f.values()[4], 3.5);
        let f = load_cdr_csv(&p, Some((0, 600)), SMALL).unwrap();
        assert_eq!(f.values()[4], 1.0);
        assert_eq!(f.values()[5], 4.0);

        let p = write(&dir, "c.csv", CDR_HEADER);
        assert!(load_cdr_csv(&p, None, SMALL).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cdr_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", &format!("{CDR_HEADER}1,0,1,1,1,1\n99,0,1,1,1,1\n"));
        match load_cdr_csv(&p, None, SMALL) {
            Err(Error::Schema { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let p = write(&dir, "b.csv", &format!("{CDR_HEADER}1,0,x,1,1,1\n"));
        assert!(matches!(load_cdr_csv(&p, None, SMALL), Err(Error::Schema { line: 2, .. })));
        let p = write(&dir, "c.csv", "square_id,timestamp,sms_in\n");
        assert!(matches!(load_cdr_csv(&p, None, SMALL), Err(Error::Schema { line: 1, .. })));
    }

    #[test]
    fn features_define_the_domain() {
        let dir = tempfile::tempdir().unwrap();
        let header = "square_id,population,green_area,sport_centers,universities,businesses,bus_stops,extra\n";
        let p = write(&dir, "f.csv", &format!("{header}2,10,0.5,1,0,3,2,x\n6,20,0.1,0,1,0,1,y\n4,5,0.0,2,0,1,0,z\n"));
        let w = load_features_csv(&p, SMALL).unwrap();
        assert_eq!(w.n(), 3);
        assert_eq!(w.q(), 6);
        assert_eq!(w.domain().cells(), &[(0, 1), (1, 0), (1, 2)]);
        assert_eq!(w.row(1)[0], 5.0);

        let p = write(&dir, "dup.csv", &format!("{header}2,10,0.5,1,0,3,2,x\n2,10,0.5,1,0,3,2,x\n"));
        assert!(matches!(load_features_csv(&p, SMALL), Err(Error::Schema { line: 3, .. })));
        let p = write(&dir, "zero.csv", &format!("{header}2,10,0,1,0,3,2,x\n3,1,0,1,1,3,2,x\n"));
        assert!(matches!(load_features_csv(&p, SMALL), Err(Error::DegenerateCovariate(ref n)) if n == "green_area"));
    }

    #[test]
    fn field_station_and_volume_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let d = Arc::new(GridDomain::new(2, 3, vec![true, false, true, true, true, true]).unwrap());
        let f = SpatialField::new(d.clone(), vec![0.1, 2.0, 1e-20, 3.25, 7.0]).unwrap();
        let p = dir.path().join("sub/field.csv");
        write_field_csv(&p, &f).unwrap();
        assert_eq!(read_field_csv(&p, Some(&d)).unwrap(), f);
        assert_eq!(read_field_csv(&p, None).unwrap(), f);

        let st = StationSet::new(&d, vec![3, 0]).unwrap();
        let sp = dir.path().join("stations.csv");
        write_stations_csv(&sp, &d, &st).unwrap();
        assert_eq!(read_stations_csv(&sp, &d).unwrap(), st);

        let z = AggregateObservations::new(vec![1.5, 0.0]).unwrap();
        let zp = dir.path().join("z.csv");
        write_aggregates_csv(&zp, &z).unwrap();
        assert_eq!(read_aggregates_csv(&zp).unwrap(), z);

        let w = CovariateMatrix::from_columns(d.clone(), vec![("a".into(), vec![1.0, 0.0, 2.0, 0.5, 1.0])]).unwrap();
        let wp = dir.path().join("w.csv");
        write_covariates_csv(&wp, &w).unwrap();
        assert_eq!(read_covariates_csv(&wp, &d).unwrap(), w);
    }

    #[test]
    fn cdr_and_feature_writers_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = Arc::new(GridDomain::new(2, 3, vec![true, true, false, true, true, true]).unwrap());
        let f = SpatialField::new(d.clone(), vec![1.0, 0.0, 4.0, 2.5, 8.0]).unwrap();
        let p = dir.path().join("cdr.csv");
        write_cdr_csv(&p, &f, SMALL, 100, 600, 3).unwrap();
        let back = load_cdr_csv(&p, None, SMALL).unwrap();
        assert_eq!(back.values()[2], 0.0);
        let back = back.restrict_to(d.clone()).unwrap();
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let early = load_cdr_csv(&p, Some((100, 700)), SMALL).unwrap();
        assert!((early.values()[0] - 1.0 / 3.0).abs() < 1e-12);

        let cols = FEATURE_NAMES
            .iter()
            .enumerate()
            .map(|(k, n)| (n.to_string(), (0..5).map(|j| (j * k + 1) as f64).collect()))
            .collect();
        let w = CovariateMatrix::from_columns(d.clone(), cols).unwrap();
        let wp = dir.path().join("features.csv");
        write_features_csv(&wp, &w, SMALL).unwrap();
        assert_eq!(load_features_csv(&wp, SMALL).unwrap(), w);
    }

    #[test]
    fn malformed_field_files() {
        let dir = tempfile::tempdir().unwrap();
        let d = Arc::new(GridDomain::full(1, 2).unwrap());
        let p = write(&dir, "dup.csv", "row,col,value\n0,0,1\n0,0,2\n");
        assert!(matches!(read_field_csv(&p, Some(&d)), Err(Error::Schema { line: 3, .. })));
        let p = write(&dir, "missing.csv", "row,col,value\n0,0,1\n");
        assert!(matches!(read_field_csv(&p, Some(&d)), Err(Error::Schema { .. })));
        let p = write(&dir, "bad.csv", "row,col,value\n0,0,nan\n");
        assert!(matches!(read_field_csv(&p, None), Err(Error::Schema { line: 2, .. })));
        let p = write(&dir, "hdr.csv", "r,c,v\n0,0,1\n");
        assert!(matches!(read_field_csv(&p, None), Err(Error::Schema { line: 1, .. })));
    }
}
