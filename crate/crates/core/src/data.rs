//! Fitting and validation point sets and their CSV formats.
//!
//! Fitting CSV: header `x1,...,xD,y`. Validation CSV: header
//! `x1,...,xD,y[,a][,base]` where `a` is the asset value and `base` flags
//! (0/1) the single base-scenario row. Scenarios are taken as given; the
//! fitting space is expected to be normalized to `[-1,1]^D` upstream.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Economic variable the responses represent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EconomicVariableLabel {
    Bel,
    Ac,
    Other(String),
}

impl fmt::Display for EconomicVariableLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bel => f.write_str("BEL"),
            Self::Ac => f.write_str("AC"),
            Self::Other(s) => f.write_str(s),
        }
    }
}

/// Outer scenarios (row-wise) with their fitting values.
#[derive(Debug, Clone, PartialEq)]
pub struct FittingSet {
    x: Array2<f64>,
    y: Array1<f64>,
}

impl FittingSet {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::NoFittingPoints);
        }
        if x.ncols() == 0 {
            return Err(Error::pre("scenario dimension must be positive"));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::pre("fitting points must be finite"));
        }
        Ok(Self { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn scenarios(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn responses(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn scenario(&self, i: usize) -> Vec<f64> {
        self.x.row(i).to_vec()
    }

    /// Subset by row indices (in the given order).
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let x = self.x.select(ndarray::Axis(0), rows);
        let y = rows.iter().map(|&i| self.y[i]).collect();
        FittingSet::new(x, y)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        read_fitting_csv(path)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_fitting_csv(self, path)
    }
}

/// A validation point: scenario, validation value and optional asset value.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationPoint {
    pub scenario: Vec<f64>,
    pub y: f64,
    pub asset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasePoint {
    pub scenario: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSet {
    dim: usize,
    points: Vec<ValidationPoint>,
    base: Option<BasePoint>,
}

impl ValidationSet {
    pub fn new(dim: usize, points: Vec<ValidationPoint>, base: Option<BasePoint>) -> Result<Self> {
        if points.iter().any(|p| p.scenario.len() != dim)
            || base.as_ref().is_some_and(|b| b.scenario.len() != dim)
        {
            return Err(Error::pre("validation scenario length differs from the set dimension"));
        }
        let with_assets = points.iter().filter(|p| p.asset.is_some()).count();
        if with_assets != 0 && with_assets != points.len() {
            return Err(Error::PartialAssets);
        }
        Ok(Self { dim, points, base })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[ValidationPoint] {
        &self.points
    }

    pub fn base(&self) -> Option<&BasePoint> {
        self.base.as_ref()
    }

    pub fn has_assets(&self) -> bool {
        !self.points.is_empty() && self.points[0].asset.is_some()
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        read_validation_csv(path)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_validation_csv(self, path)
    }
}

/// 17 significant digits; parses back to the identical `f64`.
pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

/// Reads header and data rows, returning (header, rows with their line numbers).
fn read_table(path: &Path) -> Result<(Vec<String>, Vec<(u64, Vec<f64>)>)> {
    let mut rdr = open_reader(path)?;
    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| parse_err(path, 1, e.to_string()))?,
        None => return Err(parse_err(path, 1, "missing header")),
    };
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    let width = header.len();
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != width {
            return Err(parse_err(
                path,
                line,
                format!("expected {width} cells, found {}", rec.len()),
            ));
        }
        let vals = rec
            .iter()
            .enumerate()
            .map(|(c, s)| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(path, line, format!("column `{}`: `{s}` is not a finite number", header[c])))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((line, vals));
    }
    Ok((header, rows))
}

/// Counts leading `x1..xD` columns, checking their names.
fn scenario_columns(path: &Path, header: &[String]) -> Result<usize> {
    let d = header.iter().take_while(|h| h.starts_with('x')).count();
    for (i, h) in header[..d].iter().enumerate() {
        if *h != format!("x{}", i + 1) {
            return Err(parse_err(path, 1, format!("malformed header: expected `x{}`, found `{h}`", i + 1)));
        }
    }
    if d == 0 {
        return Err(parse_err(path, 1, "malformed header: no scenario columns `x1..xD`"));
    }
    Ok(d)
}

pub fn read_fitting_csv(path: impl AsRef<Path>) -> Result<FittingSet> {
    let path = path.as_ref();
    let (header, rows) = read_table(path)?;
    let d = scenario_columns(path, &header)?;
    if header.len() != d + 1 || header[d] != "y" {
        return Err(parse_err(path, 1, format!("malformed header: expected x1..x{d},y")));
    }
    if rows.is_empty() {
        return Err(Error::NoFittingPoints);
    }
    let n = rows.len();
    let mut x = Array2::zeros((n, d));
    let mut y = Array1::zeros(n);
    for (i, (_, r)) in rows.iter().enumerate() {
        for j in 0..d {
            x[[i, j]] = r[j];
        }
        y[i] = r[d];
    }
    FittingSet::new(x, y)
}

pub fn read_validation_csv(path: impl AsRef<Path>) -> Result<ValidationSet> {
    let path = path.as_ref();
    let (header, rows) = read_table(path)?;
    let d = scenario_columns(path, &header)?;
    if header.get(d).map(String::as_str) != Some("y") {
        return Err(parse_err(path, 1, "malformed header: missing `y` after scenario columns"));
    }
    let mut col_a = None;
    let mut col_base = None;
    for (c, h) in header.iter().enumerate().skip(d + 1) {
        match h.as_str() {
            "a" if col_a.is_none() && col_base.is_none() => col_a = Some(c),
            "base" if col_base.is_none() => col_base = Some(c),
            other => return Err(parse_err(path, 1, format!("malformed header: unexpected column `{other}`"))),
        }
    }
    let mut points = Vec::new();
    let mut base = None;
    for (line, r) in rows {
        let scenario = r[..d].to_vec();
        let y = r[d];
        let is_base = match col_base.map(|c| r[c]) {
            None => false,
            Some(v) if v == 0.0 => false,
            Some(v) if v == 1.0 => true,
            Some(v) => return Err(parse_err(path, line, format!("base flag must be 0 or 1, got {v}"))),
        };
        if is_base {
            if base.is_some() {
                return Err(Error::MultipleBaseRows);
            }
            base = Some(BasePoint { scenario, y });
        } else {
            points.push(ValidationPoint {
                scenario,
                y,
                asset: col_a.map(|c| r[c]),
            });
        }
    }
    ValidationSet::new(d, points, base)
}

fn create(path: &Path) -> Result<std::io::BufWriter<File>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

fn header_x(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

pub fn write_fitting_csv(set: &FittingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut lines = header_x(set.dim());
    lines.push("y".into());
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", lines.join(",")).map_err(io)?;
    for (row, y) in set.x.outer_iter().zip(set.y.iter()) {
        let mut cells: Vec<String> = row.iter().map(|v| fmt_real(*v)).collect();
        cells.push(fmt_real(*y));
        writeln!(w, "{}", cells.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_validation_csv(set: &ValidationSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = create(path)?;
    let assets = set.has_assets();
    let with_base = set.base.is_some();
    let mut head = header_x(set.dim);
    head.push("y".into());
    if assets {
        head.push("a".into());
    }
    if with_base {
        head.push("base".into());
    }
    writeln!(w, "{}", head.join(",")).map_err(io)?;
    if let Some(b) = &set.base {
        let mut cells: Vec<String> = b.scenario.iter().map(|v| fmt_real(*v)).collect();
        cells.push(fmt_real(b.y));
        if assets {
            // the base row carries no asset value; 0 keeps the table rectangular
            cells.push(fmt_real(0.0));
        }
        cells.push("1".into());
        writeln!(w, "{}", cells.join(",")).map_err(io)?;
    }
    for p in &set.points {
        let mut cells: Vec<String> = p.scenario.iter().map(|v| fmt_real(*v)).collect();
        cells.push(fmt_real(p.y));
        if let Some(a) = p.asset {
            cells.push(fmt_real(a));
        }
        if with_base {
            cells.push("0".into());
        }
        writeln!(w, "{}", cells.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn reads_single_point() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "f.csv", "x1,x2,y\n0.5,-0.25,102.0\n");
        let s = read_fitting_csv(&p).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.len(), 1);
        assert_eq!(s.scenario(0), vec![0.5, -0.25]);
        assert_eq!(s.responses()[0], 102.0);
    }

    #[test]
    fn empty_data_section() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "f.csv", "x1,x2,y\n");
        let e = read_fitting_csv(&p).unwrap_err();
        assert_eq!(e.to_string(), "no fitting points");
    }

    #[test]
    fn bad_cell_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "f.csv", "x1,x2,y\n0.5,abc,1.0\n");
        match read_fitting_csv(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_and_header_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "f.csv", "x1,x2,y\n0.5,1.0\n");
        assert!(matches!(read_fitting_csv(&p), Err(Error::Parse { line: 2, .. })));
        let p = write_tmp(&dir, "g.csv", "x1,x3,y\n0.5,1.0,2\n");
        assert!(matches!(read_fitting_csv(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn validation_base_extraction() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "v.csv", "x1,y,base\n0.1,1,0\n0,2,1\n0.3,3,0\n");
        let v = read_validation_csv(&p).unwrap();
        assert_eq!(v.points().len(), 2);
        assert_eq!(v.base().unwrap().y, 2.0);
        assert!(!v.has_assets());
    }

    #[test]
    fn validation_multiple_base() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "v.csv", "x1,y,base\n0.1,1,1\n0,2,1\n");
        assert_eq!(read_validation_csv(&p).unwrap_err().to_string(), "multiple base rows");
    }

    #[test]
    fn validation_without_base() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "v.csv", "x1,x2,y,a\n0.1,0.2,1,10\n0.3,0.4,3,11\n");
        let v = read_validation_csv(&p).unwrap();
        assert!(v.base().is_none());
        assert!(v.has_assets());
    }

    #[test]
    fn partial_assets_rejected() {
        let pts = vec![
            ValidationPoint { scenario: vec![0.0], y: 1.0, asset: Some(2.0) },
            ValidationPoint { scenario: vec![0.1], y: 1.0, asset: None },
        ];
        assert!(matches!(ValidationSet::new(1, pts, None), Err(Error::PartialAssets)));
    }

    #[test]
    fn validation_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pts = vec![
            ValidationPoint { scenario: vec![0.25, -1.0 / 3.0], y: 7.1, asset: Some(100.0) },
            ValidationPoint { scenario: vec![0.5, 0.1], y: -2.0, asset: Some(101.5) },
        ];
        let base = BasePoint { scenario: vec![0.0, 0.0], y: 3.0 };
        let v = ValidationSet::new(2, pts, Some(base)).unwrap();
        let p = dir.path().join("v.csv");
        v.write_csv(&p).unwrap();
        assert_eq!(read_validation_csv(&p).unwrap(), v);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn fitting_csv_round_trip(d in 1usize..4, vals in proptest::collection::vec(-1e6f64..1e6, 4..40)) {
            let n = vals.len() / (d + 1);
            prop_assume!(n >= 1);
            let x = Array2::from_shape_fn((n, d), |(i, j)| vals[i * (d + 1) + j] / 7.0);
            let y = Array1::from_shape_fn(n, |i| vals[i * (d + 1) + d] * std::f64::consts::PI);
            let s = FittingSet::new(x, y).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("f.csv");
            s.write_csv(&p).unwrap();
            prop_assert_eq!(read_fitting_csv(&p).unwrap(), s);
        }
    }
}
