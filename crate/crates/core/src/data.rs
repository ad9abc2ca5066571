//! Data containers shared by every task: labeled and unlabeled samples, the
//! significance level, mixture weights and candidate grids.
//!
//! Datasets are validated once at construction and are immutable afterwards,
//! so they can be shared read-only across worker threads.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column names carried along with a dataset for reports and CSV round trips.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnNames {
    pub response: String,
    pub covariates: Vec<String>,
    pub experts: Vec<String>,
}

impl ColumnNames {
    fn generated(d: usize, k: usize) -> Self {
        Self {
            response: "y".to_string(),
            covariates: (1..=d).map(|j| format!("x{j}")).collect(),
            experts: (1..=k).map(|j| format!("f{j}")).collect(),
        }
    }
}

/// `n` labeled observations: response, optional covariates and the `n x K`
/// matrix of expert predictions on those rows.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    y: DVector<f64>,
    x: Option<DMatrix<f64>>,
    f: DMatrix<f64>,
    names: ColumnNames,
}

/// `N` unlabeled observations: optional covariates and expert predictions.
#[derive(Debug, Clone)]
pub struct UnlabeledDataset {
    x: Option<DMatrix<f64>>,
    f: DMatrix<f64>,
    names: ColumnNames,
}

fn check_finite_matrix(m: &DMatrix<f64>, what: &str) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite {
                    row: i + 1,
                    col: format!("{what}[{}]", j + 1),
                });
            }
        }
    }
    Ok(())
}

impl LabeledDataset {
    pub fn new(y: Vec<f64>, x: Option<DMatrix<f64>>, f: DMatrix<f64>) -> Result<Self> {
        let d = x.as_ref().map_or(0, |m| m.ncols());
        let names = ColumnNames::generated(d, f.ncols());
        Self::with_names(y, x, f, names)
    }

    pub fn with_names(
        y: Vec<f64>,
        x: Option<DMatrix<f64>>,
        f: DMatrix<f64>,
        names: ColumnNames,
    ) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::TooFewRows { needed: 2, got: n });
        }
        if f.ncols() == 0 {
            return Err(Error::InvalidConfig("at least one expert column is required".into()));
        }
        if f.nrows() != n {
            return Err(Error::LengthMismatch(format!(
                "expert matrix has {} rows, response has {n}",
                f.nrows()
            )));
        }
        if let Some((i, _)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row: i + 1, col: names.response.clone() });
        }
        check_finite_matrix(&f, "F")?;
        if let Some(xm) = &x {
            if xm.ncols() == 0 {
                return Err(Error::InvalidConfig("covariate matrix has no columns".into()));
            }
            if xm.nrows() != n {
                return Err(Error::LengthMismatch(format!(
                    "covariate matrix has {} rows, response has {n}",
                    xm.nrows()
                )));
            }
            check_finite_matrix(xm, "X")?;
        }
        Ok(Self { y: DVector::from_vec(y), x, f, names })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of experts.
    pub fn k(&self) -> usize {
        self.f.ncols()
    }

    /// Covariate dimension, 0 when covariates are absent.
    pub fn d(&self) -> usize {
        self.x.as_ref().map_or(0, |m| m.ncols())
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> Option<&DMatrix<f64>> {
        self.x.as_ref()
    }

    pub fn require_x(&self) -> Result<&DMatrix<f64>> {
        self.x.as_ref().ok_or(Error::MissingCovariates)
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn names(&self) -> &ColumnNames {
        &self.names
    }

    /// Same rows with only the listed expert columns, in the listed order.
    pub fn select_experts(&self, cols: &[usize]) -> Result<Self> {
        let f = self.f.select_columns(cols.iter());
        let mut names = self.names.clone();
        names.experts = cols.iter().map(|&c| self.names.experts[c].clone()).collect();
        Self::with_names(self.y.as_slice().to_vec(), self.x.clone(), f, names)
    }

    /// Replace the expert matrix, keeping response and covariates.
    pub fn with_experts(&self, f: DMatrix<f64>) -> Result<Self> {
        let names = ColumnNames::generated(self.d(), f.ncols());
        let names = ColumnNames { response: self.names.response.clone(), covariates: self.names.covariates.clone(), ..names };
        Self::with_names(self.y.as_slice().to_vec(), self.x.clone(), f, names)
    }

    /// Rows picked by index, repeats allowed (bootstrap resampling).
    pub fn resample(&self, rows: &[usize]) -> Result<Self> {
        let y = rows.iter().map(|&i| self.y[i]).collect();
        let f = self.f.select_rows(rows.iter());
        let x = self.x.as_ref().map(|m| m.select_rows(rows.iter()));
        Self::with_names(y, x, f, self.names.clone())
    }

    /// JSON diagnostics: column names, shapes and the first five rows.
    pub fn debug_dump(&self) -> serde_json::Value {
        let head: Vec<Vec<f64>> = (0..self.n().min(5))
            .map(|i| {
                let mut row = vec![self.y[i]];
                if let Some(x) = &self.x {
                    row.extend(x.row(i).iter());
                }
                row.extend(self.f.row(i).iter());
                row
            })
            .collect();
        serde_json::json!({
            "kind": "labeled",
            "columns": self.names,
            "n": self.n(),
            "d": self.d(),
            "k": self.k(),
            "head": head,
        })
    }

    /// Writes the dataset as CSV with a header row.  Values use the shortest
    /// representation that round-trips exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![self.names.response.clone()];
        header.extend(self.names.covariates.iter().cloned());
        header.extend(self.names.experts.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![self.y[i].to_string()];
            if let Some(x) = &self.x {
                rec.extend(x.row(i).iter().map(|v| v.to_string()));
            }
            rec.extend(self.f.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl UnlabeledDataset {
    pub fn new(x: Option<DMatrix<f64>>, f: DMatrix<f64>) -> Result<Self> {
        let d = x.as_ref().map_or(0, |m| m.ncols());
        let names = ColumnNames::generated(d, f.ncols());
        Self::with_names(x, f, names)
    }

    pub fn with_names(x: Option<DMatrix<f64>>, f: DMatrix<f64>, names: ColumnNames) -> Result<Self> {
        let n = f.nrows();
        if n < 1 {
            return Err(Error::TooFewRows { needed: 1, got: 0 });
        }
        if f.ncols() == 0 {
            return Err(Error::InvalidConfig("at least one expert column is required".into()));
        }
        check_finite_matrix(&f, "F")?;
        if let Some(xm) = &x {
            if xm.nrows() != n {
                return Err(Error::LengthMismatch(format!(
                    "covariate matrix has {} rows, expert matrix has {n}",
                    xm.nrows()
                )));
            }
            if xm.ncols() == 0 {
                return Err(Error::InvalidConfig("covariate matrix has no columns".into()));
            }
            check_finite_matrix(xm, "X")?;
        }
        Ok(Self { x, f, names })
    }

    pub fn n(&self) -> usize {
        self.f.nrows()
    }

    pub fn k(&self) -> usize {
        self.f.ncols()
    }

    pub fn d(&self) -> usize {
        self.x.as_ref().map_or(0, |m| m.ncols())
    }

    pub fn x(&self) -> Option<&DMatrix<f64>> {
        self.x.as_ref()
    }

    pub fn require_x(&self) -> Result<&DMatrix<f64>> {
        self.x.as_ref().ok_or(Error::MissingCovariates)
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn names(&self) -> &ColumnNames {
        &self.names
    }

    pub fn select_experts(&self, cols: &[usize]) -> Result<Self> {
        let f = self.f.select_columns(cols.iter());
        let mut names = self.names.clone();
        names.experts = cols.iter().map(|&c| self.names.experts[c].clone()).collect();
        Self::with_names(self.x.clone(), f, names)
    }

    pub fn with_experts(&self, f: DMatrix<f64>) -> Result<Self> {
        let mut names = ColumnNames::generated(self.d(), f.ncols());
        names.covariates = self.names.covariates.clone();
        Self::with_names(self.x.clone(), f, names)
    }

    pub fn debug_dump(&self) -> serde_json::Value {
        let head: Vec<Vec<f64>> = (0..self.n().min(5))
            .map(|i| {
                let mut row = Vec::new();
                if let Some(x) = &self.x {
                    row.extend(x.row(i).iter());
                }
                row.extend(self.f.row(i).iter());
                row
            })
            .collect();
        serde_json::json!({
            "kind": "unlabeled",
            "columns": { "covariates": self.names.covariates, "experts": self.names.experts },
            "n": self.n(),
            "d": self.d(),
            "k": self.k(),
            "head": head,
        })
    }
}

/// Checks that a labeled/unlabeled pair agree on the expert count and, when
/// both carry covariates, on the covariate dimension.
pub fn check_pair(labeled: &LabeledDataset, unlabeled: &UnlabeledDataset) -> Result<()> {
    if labeled.k() != unlabeled.k() {
        return Err(Error::LengthMismatch(format!(
            "labeled data has {} experts, unlabeled data has {}",
            labeled.k(),
            unlabeled.k()
        )));
    }
    if labeled.x.is_some() && unlabeled.x.is_some() && labeled.d() != unlabeled.d() {
        return Err(Error::LengthMismatch(format!(
            "labeled covariate dimension {} differs from unlabeled {}",
            labeled.d(),
            unlabeled.d()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV ingestion

struct Table {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::EmptyFile);
    }
    let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(Table { header, rows })
}

impl Table {
    fn index_of(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    /// Parses one column; `row` in errors is the 1-based data row.
    fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self.index_of(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let cell = rec.get(idx).unwrap_or("");
                let v: f64 = cell.parse().map_err(|_| Error::Parse { row: i + 1, col: name.to_string() })?;
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: i + 1, col: name.to_string() });
                }
                Ok(v)
            })
            .collect()
    }

    fn matrix(&self, names: &[String]) -> Result<DMatrix<f64>> {
        let cols = names.iter().map(|c| self.column(c)).collect::<Result<Vec<_>>>()?;
        let n = self.rows.len();
        Ok(DMatrix::from_fn(n, names.len(), |i, j| cols[j][i]))
    }
}

pub fn read_labeled_csv<R: Read>(
    reader: R,
    response_col: &str,
    covariate_cols: &[String],
    expert_cols: &[String],
) -> Result<LabeledDataset> {
    let table = read_table(reader)?;
    // Resolve every name up front so a missing column is reported before any
    // parse error further down the file.
    table.index_of(response_col)?;
    for c in covariate_cols.iter().chain(expert_cols) {
        table.index_of(c)?;
    }
    let y = table.column(response_col)?;
    let x = if covariate_cols.is_empty() { None } else { Some(table.matrix(covariate_cols)?) };
    let f = table.matrix(expert_cols)?;
    let names = ColumnNames {
        response: response_col.to_string(),
        covariates: covariate_cols.to_vec(),
        experts: expert_cols.to_vec(),
    };
    LabeledDataset::with_names(y, x, f, names)
}

pub fn read_unlabeled_csv<R: Read>(
    reader: R,
    covariate_cols: &[String],
    expert_cols: &[String],
) -> Result<UnlabeledDataset> {
    let table = read_table(reader)?;
    for c in covariate_cols.iter().chain(expert_cols) {
        table.index_of(c)?;
    }
    let x = if covariate_cols.is_empty() { None } else { Some(table.matrix(covariate_cols)?) };
    let f = table.matrix(expert_cols)?;
    let names = ColumnNames {
        response: String::new(),
        covariates: covariate_cols.to_vec(),
        experts: expert_cols.to_vec(),
    };
    UnlabeledDataset::with_names(x, f, names)
}

pub fn load_labeled_csv(
    path: impl AsRef<Path>,
    response_col: &str,
    covariate_cols: &[String],
    expert_cols: &[String],
) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path)?;
    read_labeled_csv(file, response_col, covariate_cols, expert_cols)
}

pub fn load_unlabeled_csv(
    path: impl AsRef<Path>,
    covariate_cols: &[String],
    expert_cols: &[String],
) -> Result<UnlabeledDataset> {
    let file = std::fs::File::open(path)?;
    read_unlabeled_csv(file, covariate_cols, expert_cols)
}

/// Header of a CSV file, used by the CLI to pick default expert columns.
pub fn csv_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let file = std::fs::File::open(path)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::EmptyFile);
    }
    Ok(header)
}

// ---------------------------------------------------------------------------
// Scalars and weights

/// Significance level in the open interval (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidAlpha(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Alpha {
    fn default() -> Self {
        Self(0.05)
    }
}

impl TryFrom<f64> for Alpha {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Alpha> for f64 {
    fn from(a: Alpha) -> f64 {
        a.0
    }
}

/// Which confidence construction to use: the basic one, or the "+" set that
/// also accounts for the unlabeled-sample variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Basic,
    Plus,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Basic => "basic",
            Variant::Plus => "plus",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    ClosedForm,
    Numeric,
    GuardZero,
    /// Supplied by the caller rather than estimated.
    Fixed,
}

/// Mixture weights over the K experts together with how they were obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    pub beta: Vec<f64>,
    pub source: WeightSource,
    /// False when a numeric fit stopped at the iteration cap.
    pub converged: bool,
}

impl WeightVector {
    pub fn closed_form(beta: Vec<f64>) -> Self {
        debug_assert!(beta.iter().all(|b| b.is_finite()));
        Self { beta, source: WeightSource::ClosedForm, converged: true }
    }

    pub fn numeric(beta: Vec<f64>, converged: bool) -> Self {
        Self { beta, source: WeightSource::Numeric, converged }
    }

    pub fn guard_zero(k: usize) -> Self {
        Self { beta: vec![0.0; k], source: WeightSource::GuardZero, converged: true }
    }

    pub fn fixed(beta: Vec<f64>) -> Self {
        Self { beta, source: WeightSource::Fixed, converged: true }
    }

    pub fn k(&self) -> usize {
        self.beta.len()
    }

    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta)
    }

    pub fn is_guard_zero(&self) -> bool {
        self.source == WeightSource::GuardZero
    }
}

// ---------------------------------------------------------------------------
// Grids

/// Candidate values for a scalar parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Uniform { lo: f64, hi: f64, steps: usize },
    Points(Vec<f64>),
}

impl GridSpec {
    pub fn uniform(lo: f64, hi: f64, steps: usize) -> Self {
        GridSpec::Uniform { lo, hi, steps }
    }

    pub fn points(&self) -> Result<Vec<f64>> {
        grid_points(self)
    }

    /// Spacing between consecutive points (smallest gap for explicit lists).
    pub fn step(&self) -> Result<f64> {
        let pts = self.points()?;
        Ok(pts.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min))
    }
}

/// `steps` equally spaced points from `lo` to `hi`, both endpoints included.
pub fn grid_points(spec: &GridSpec) -> Result<Vec<f64>> {
    match spec {
        GridSpec::Uniform { lo, hi, steps } => {
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(Error::InvalidGrid(format!("need lo < hi, got lo={lo}, hi={hi}")));
            }
            if *steps < 2 {
                return Err(Error::InvalidGrid(format!("need steps >= 2, got {steps}")));
            }
            let last = (steps - 1) as f64;
            let width = hi - lo;
            let mut pts: Vec<f64> = (0..*steps).map(|i| lo + width * (i as f64 / last)).collect();
            pts[steps - 1] = *hi;
            Ok(pts)
        }
        GridSpec::Points(pts) => {
            if pts.is_empty() {
                return Err(Error::EmptyGrid);
            }
            if pts.iter().any(|p| !p.is_finite()) || pts.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidGrid("explicit points must be finite and strictly increasing".into()));
            }
            Ok(pts.clone())
        }
    }
}

/// Grid over a (possibly vector) parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaGrid {
    Scalar(GridSpec),
    /// One coordinate scanned at a time, the others pinned at `center`.
    Axis { axes: Vec<GridSpec>, center: Vec<f64> },
    /// Full Cartesian product of the per-coordinate grids.
    Cartesian(Vec<GridSpec>),
}

/// A grid point tagged with the axis it was generated along (axis-aligned
/// scans only).
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub theta: Vec<f64>,
    pub axis: Option<usize>,
}

impl ThetaGrid {
    pub fn dim(&self) -> usize {
        match self {
            ThetaGrid::Scalar(_) => 1,
            ThetaGrid::Axis { axes, .. } => axes.len(),
            ThetaGrid::Cartesian(axes) => axes.len(),
        }
    }

    pub fn points(&self) -> Result<Vec<GridPoint>> {
        match self {
            ThetaGrid::Scalar(spec) => {
                Ok(grid_points(spec)?.into_iter().map(|t| GridPoint { theta: vec![t], axis: None }).collect())
            }
            ThetaGrid::Axis { axes, center } => {
                if axes.is_empty() {
                    return Err(Error::EmptyGrid);
                }
                if center.len() != axes.len() {
                    return Err(Error::InvalidGrid(format!(
                        "center has {} coordinates, grid has {} axes",
                        center.len(),
                        axes.len()
                    )));
                }
                let mut out = Vec::new();
                for (s, spec) in axes.iter().enumerate() {
                    for v in grid_points(spec)? {
                        let mut theta = center.clone();
                        theta[s] = v;
                        out.push(GridPoint { theta, axis: Some(s) });
                    }
                }
                Ok(out)
            }
            ThetaGrid::Cartesian(axes) => {
                if axes.is_empty() {
                    return Err(Error::EmptyGrid);
                }
                let per_axis = axes.iter().map(grid_points).collect::<Result<Vec<_>>>()?;
                let mut out = vec![Vec::new()];
                for pts in &per_axis {
                    let mut next = Vec::with_capacity(out.len() * pts.len());
                    for prefix in &out {
                        for &v in pts {
                            let mut t = prefix.clone();
                            t.push(v);
                            next.push(t);
                        }
                    }
                    out = next;
                }
                Ok(out.into_iter().map(|theta| GridPoint { theta, axis: None }).collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn minimal_file_without_covariates() {
        let csv = "y,f1\n1,1.5\n2,2.5\n3,2\n";
        let ds = read_labeled_csv(csv.as_bytes(), "y", &[], &names(&["f1"])).unwrap();
        assert_eq!((ds.n(), ds.k(), ds.d()), (3, 1, 0));
        assert!(ds.x().is_none());
    }

    #[test]
    fn shape_passthrough() {
        let mut csv = String::from("y,x1,f1,f2\n");
        for i in 0..200 {
            csv.push_str(&format!("{},{},{},{}\n", i, i as f64 * 0.5, i + 1, i + 2));
        }
        let ds = read_labeled_csv(csv.as_bytes(), "y", &names(&["x1"]), &names(&["f1", "f2"])).unwrap();
        assert_eq!((ds.n(), ds.d(), ds.k()), (200, 1, 2));
    }

    #[test]
    fn parse_error_reports_row_and_column() {
        let csv = "y,f1\n1,1\n2,2\n3,3\n4,4\n5,abc\n6,6\n";
        let err = read_labeled_csv(csv.as_bytes(), "y", &[], &names(&["f1"])).unwrap_err();
        match err {
            Error::Parse { row, col } => assert_eq!((row, col.as_str()), (5, "f1")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_rejected() {
        let csv = "y,f1\n1,1\n2,NaN\n";
        let err = read_labeled_csv(csv.as_bytes(), "y", &[], &names(&["f1"])).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 2, .. }));
    }

    #[test]
    fn empty_file() {
        assert!(matches!(read_labeled_csv("".as_bytes(), "y", &[], &names(&["f1"])), Err(Error::EmptyFile)));
        assert!(matches!(read_labeled_csv("y,f1\n".as_bytes(), "y", &[], &names(&["f1"])), Err(Error::EmptyFile)));
    }

    #[test]
    fn unlabeled_shapes_and_column_order() {
        let mut csv = String::from("f1,f2,f3,f4,f5,f6\n");
        for i in 0..2000 {
            csv.push_str(&format!("{i},{},{},{},{},{}\n", i + 1, i + 2, i + 3, i + 4, i + 5));
        }
        let cols = names(&["f1", "f2", "f3", "f4", "f5", "f6"]);
        let ds = read_unlabeled_csv(csv.as_bytes(), &[], &cols).unwrap();
        assert_eq!((ds.n(), ds.k()), (2000, 6));

        let swapped = read_unlabeled_csv(csv.as_bytes(), &[], &names(&["f2", "f1"])).unwrap();
        assert_eq!(swapped.f()[(0, 0)], 1.0);
        assert_eq!(swapped.f()[(0, 1)], 0.0);
    }

    #[test]
    fn missing_column() {
        let csv = "f1,f2\n1,2\n";
        let err = read_unlabeled_csv(csv.as_bytes(), &[], &names(&["f1", "f3"])).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "f3"));
    }

    #[test]
    fn grid_examples() {
        assert_eq!(grid_points(&GridSpec::uniform(0.0, 1.0, 3)).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(grid_points(&GridSpec::uniform(-1.0, 1.0, 2)).unwrap(), vec![-1.0, 1.0]);
        assert!(matches!(grid_points(&GridSpec::uniform(5.0, 5.0, 10)), Err(Error::InvalidGrid(_))));
        assert!(matches!(grid_points(&GridSpec::uniform(0.0, 1.0, 1)), Err(Error::InvalidGrid(_))));
        assert!(matches!(grid_points(&GridSpec::Points(vec![])), Err(Error::EmptyGrid)));
        assert!(grid_points(&GridSpec::Points(vec![0.0, 0.0])).is_err());
    }

    #[test]
    fn axis_and_cartesian_grids() {
        let axes = vec![GridSpec::uniform(0.0, 1.0, 3), GridSpec::uniform(10.0, 11.0, 2)];
        let axis = ThetaGrid::Axis { axes: axes.clone(), center: vec![0.25, 10.5] }.points().unwrap();
        assert_eq!(axis.len(), 5);
        assert_eq!(axis[3].theta, vec![0.25, 10.0]);
        assert_eq!(axis[3].axis, Some(1));
        let cart = ThetaGrid::Cartesian(axes).points().unwrap();
        assert_eq!(cart.len(), 6);
        assert_eq!(cart[5].theta, vec![1.0, 11.0]);
    }

    #[test]
    fn alpha_bounds() {
        assert!(Alpha::new(0.0).is_err());
        assert!(Alpha::new(1.0).is_err());
        assert!(Alpha::new(f64::NAN).is_err());
        assert_eq!(Alpha::new(0.1).unwrap().value(), 0.1);
    }

    #[test]
    fn dataset_validation() {
        assert!(matches!(
            LabeledDataset::new(vec![1.0], None, DMatrix::zeros(1, 1)),
            Err(Error::TooFewRows { .. })
        ));
        assert!(LabeledDataset::new(vec![1.0, 2.0], None, DMatrix::zeros(3, 1)).is_err());
        assert!(LabeledDataset::new(vec![1.0, 2.0], Some(DMatrix::zeros(3, 1)), DMatrix::zeros(2, 1)).is_err());
        assert!(LabeledDataset::new(vec![1.0, f64::INFINITY], None, DMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn debug_dump_shape() {
        let ds = LabeledDataset::new(
            (0..8).map(f64::from).collect(),
            Some(DMatrix::from_fn(8, 2, |i, j| (i * j) as f64)),
            DMatrix::from_fn(8, 1, |i, _| i as f64),
        )
        .unwrap();
        let v = ds.debug_dump();
        assert_eq!(v["n"], 8);
        assert_eq!(v["head"].as_array().unwrap().len(), 5);
        assert_eq!(v["head"][0].as_array().unwrap().len(), 4);
    }
}
