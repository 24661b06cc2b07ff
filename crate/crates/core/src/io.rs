//! File formats: CSV ingestion into [`Dataset`]s, model builders for the corn
//! yield and reactor scram data, JSON specs for priors and TMVN targets, and
//! deterministic writers for draws and summaries.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::SummaryReport;
use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::glm::Dataset;
use crate::samplers::{PosteriorSamples, Precision, PriorSpec, VAGUE_GAMMA};
use crate::tmvn::TmvnSpec;

/// A CSV file held as trimmed strings.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path.as_ref())?;
        Self::from_reader(file)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_reader(text.as_bytes())
    }

    fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(Error::Parse("CSV file has no header".into()));
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        if rows.is_empty() {
            return Err(Error::Parse("CSV file has no data rows".into()));
        }
        Ok(CsvTable { headers, rows })
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn strings(&self, name: &str) -> Result<Vec<&str>> {
        let j = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[j].as_str()).collect())
    }

    pub fn numeric(&self, name: &str) -> Result<DVector<f64>> {
        let j = self.column_index(name)?;
        let values = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[j].parse::<f64>().map_err(|_| {
                    Error::Parse(format!("line {}, column `{}`: `{}` is not a number", i + 2, name, r[j]))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(DVector::from_vec(values))
    }

    /// Keeps the rows for which `keep` holds.
    pub fn filter(&self, mut keep: impl FnMut(&[String]) -> bool) -> CsvTable {
        CsvTable {
            headers: self.headers.clone(),
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }
}

/// Offset term of the linear predictor: a column, its log, or `log(col / K)`.
#[derive(Debug, Clone, PartialEq)]
pub enum OffsetExpr {
    Column(String),
    Log { column: String, divisor: f64 },
}

impl OffsetExpr {
    pub fn parse(expr: &str) -> Result<Self> {
        let e = expr.trim();
        let Some(inner) = e.strip_prefix("log(").and_then(|s| s.strip_suffix(')')) else {
            if e.is_empty() || e.contains(['(', ')', '/']) {
                return Err(Error::Parse(format!("cannot parse offset `{expr}`")));
            }
            return Ok(OffsetExpr::Column(e.to_string()));
        };
        let (column, divisor) = match inner.split_once('/') {
            Some((c, k)) => {
                let k: f64 = k
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("offset divisor `{}` is not a number", k.trim())))?;
                if !(k > 0.0) {
                    return Err(Error::Parse("offset divisor must be positive".into()));
                }
                (c.trim(), k)
            }
            None => (inner.trim(), 1.0),
        };
        if column.is_empty() {
            return Err(Error::Parse(format!("cannot parse offset `{expr}`")));
        }
        Ok(OffsetExpr::Log {
            column: column.to_string(),
            divisor,
        })
    }

    pub fn column(&self) -> &str {
        match self {
            OffsetExpr::Column(c) | OffsetExpr::Log { column: c, .. } => c,
        }
    }

    pub fn evaluate(&self, table: &CsvTable) -> Result<DVector<f64>> {
        let values = table.numeric(self.column())?;
        match self {
            OffsetExpr::Column(_) => Ok(values),
            OffsetExpr::Log { divisor, column } => {
                if let Some(i) = values.iter().position(|&v| !(v > 0.0)) {
                    return Err(Error::Parse(format!(
                        "line {}: log offset needs positive `{}`, got {}",
                        i + 2,
                        column,
                        values[i]
                    )));
                }
                Ok(values.map(|v| (v / divisor).ln()))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestOptions {
    pub response: String,
    pub offset: Option<String>,
    /// Design columns; defaults to every column except the response and the
    /// offset column, in file order.
    pub covariates: Option<Vec<String>>,
    pub add_intercept: bool,
}

pub fn ingest_table(table: &CsvTable, opts: &IngestOptions) -> Result<Dataset> {
    let y = table.numeric(&opts.response)?;
    let offset_expr = opts.offset.as_deref().map(OffsetExpr::parse).transpose()?;
    let offset = match &offset_expr {
        Some(e) => e.evaluate(table)?,
        None => DVector::zeros(table.num_rows()),
    };
    let covariates: Vec<String> = match &opts.covariates {
        Some(c) => c.clone(),
        None => table
            .headers
            .iter()
            .filter(|h| **h != opts.response && offset_expr.as_ref().is_none_or(|e| e.column() != h.as_str()))
            .cloned()
            .collect(),
    };
    let mut names = Vec::new();
    let mut columns = Vec::new();
    if opts.add_intercept {
        names.push("intercept".to_string());
        columns.push(DVector::from_element(table.num_rows(), 1.0));
    }
    for c in &covariates {
        columns.push(table.numeric(c)?);
        names.push(c.clone());
    }
    if columns.is_empty() {
        return Err(Error::InvalidConfig("the design has no columns".into()));
    }
    let x = DMatrix::from_columns(&columns);
    Dataset::with_offset(x, y, offset, names)
}

/// Reads a CSV with a header row into a dataset.
pub fn ingest_csv(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<Dataset> {
    ingest_table(&CsvTable::read(path)?, opts)
}

/// Column names of the corn yield data.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadyColumns {
    pub nitrogen: String,
    pub phosphorus: String,
    pub response: String,
    /// Optional crop column; rows whose value is not `corn` are dropped.
    pub crop: Option<String>,
}

impl Default for HeadyColumns {
    fn default() -> Self {
        HeadyColumns {
            nitrogen: "N".into(),
            phosphorus: "P".into(),
            response: "yield".into(),
            crop: Some("crop".into()),
        }
    }
}

/// Square-root response surface `β0 + β1 N + β2 P + β3 √N + β4 √P + β5 √(NP)`
/// with `β3, β4, β5 ≥ 0`.
pub fn heady_problem(table: &CsvTable, cols: &HeadyColumns) -> Result<(Dataset, ConstraintSet)> {
    let table = match &cols.crop {
        Some(c) if table.column_index(c).is_ok() => {
            let j = table.column_index(c)?;
            table.filter(|r| r[j].eq_ignore_ascii_case("corn"))
        }
        _ => table.clone(),
    };
    if table.num_rows() == 0 {
        return Err(Error::Parse("no corn rows in the data".into()));
    }
    let n = table.numeric(&cols.nitrogen)?;
    let p = table.numeric(&cols.phosphorus)?;
    let y = table.numeric(&cols.response)?;
    let rows = y.len();
    let x = DMatrix::from_fn(rows, 6, |i, j| match j {
        0 => 1.0,
        1 => n[i],
        2 => p[i],
        3 => n[i].sqrt(),
        4 => p[i].sqrt(),
        _ => (n[i] * p[i]).sqrt(),
    });
    let names = ["intercept", "N", "P", "sqrt_N", "sqrt_P", "sqrt_NP"].map(String::from).to_vec();
    let data = Dataset::with_offset(x, y, DVector::zeros(rows), names)?;
    let mut r = DMatrix::zeros(3, 6);
    for k in 0..3 {
        r[(k, 3 + k)] = 1.0;
    }
    Ok((data, ConstraintSet::inequalities(r, DVector::zeros(3))?))
}

/// Column names of the scram data.
#[derive(Debug, Clone, PartialEq)]
pub struct ScramColumns {
    pub scrams: String,
    pub plant: String,
    pub year: String,
    pub hours: String,
}

impl Default for ScramColumns {
    fn default() -> Self {
        ScramColumns {
            scrams: "scrams".into(),
            plant: "plant".into(),
            year: "year".into(),
            hours: "critical_hours".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScramModel {
    /// Plant intercepts plus one effect per year after the first, with the
    /// year effects non-increasing.
    YearEffects,
    /// Plant intercepts plus `β1 (j − 5) + β2 (j − 5)²`, decreasing and convex.
    Quadratic,
}

/// Poisson model for scram counts with exposure offset `log(hours / 7000)`.
/// Only rows with a nonzero count enter the fit. Years are indexed `1..=J`
/// by rank among the distinct year values of the whole table.
pub fn scram_problem(table: &CsvTable, model: ScramModel, cols: &ScramColumns) -> Result<(Dataset, ConstraintSet)> {
    let years_all = table.numeric(&cols.year)?;
    let mut distinct: Vec<f64> = years_all.iter().copied().collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let n_years = distinct.len();
    if n_years < 3 {
        return Err(Error::InvalidConfig("scram models need at least three years".into()));
    }

    let scram_idx = table.column_index(&cols.scrams)?;
    let kept = table.filter(|r| r[scram_idx].parse::<f64>().map(|v| v != 0.0).unwrap_or(true));
    let y = kept.numeric(&cols.scrams)?;
    let offset = OffsetExpr::Log {
        column: cols.hours.clone(),
        divisor: 7000.0,
    }
    .evaluate(&kept)?;
    let year_index: Vec<usize> = kept
        .numeric(&cols.year)?
        .iter()
        .map(|v| distinct.iter().position(|d| d == v).expect("year present") + 1)
        .collect();
    let plants_raw = kept.strings(&cols.plant)?;
    let plants: Vec<String> = {
        let set: BTreeMap<&str, ()> = plants_raw.iter().map(|p| (*p, ())).collect();
        set.keys().map(|s| s.to_string()).collect()
    };
    let plant_index: Vec<usize> = plants_raw
        .iter()
        .map(|p| plants.iter().position(|q| q == p).expect("plant present"))
        .collect();

    let n = y.len();
    let n_plants = plants.len();
    let mut names: Vec<String> = plants.iter().map(|p| format!("alpha_{p}")).collect();
    let (x, cs) = match model {
        ScramModel::YearEffects => {
            let p = n_plants + n_years - 1;
            let mut x = DMatrix::zeros(n, p);
            for i in 0..n {
                x[(i, plant_index[i])] = 1.0;
                if year_index[i] >= 2 {
                    x[(i, n_plants + year_index[i] - 2)] = 1.0;
                }
            }
            names.extend((2..=n_years).map(|k| format!("beta{k}")));
            let rows = n_years - 2;
            let mut r = DMatrix::zeros(rows, p);
            for k in 0..rows {
                r[(k, n_plants + k)] = 1.0;
                r[(k, n_plants + k + 1)] = -1.0;
            }
            (x, ConstraintSet::inequalities(r, DVector::zeros(rows))?)
        }
        ScramModel::Quadratic => {
            let p = n_plants + 2;
            let mut x = DMatrix::zeros(n, p);
            for i in 0..n {
                let t = year_index[i] as f64 - 5.0;
                x[(i, plant_index[i])] = 1.0;
                x[(i, n_plants)] = t;
                x[(i, n_plants + 1)] = t * t;
            }
            names.extend(["beta1".to_string(), "beta2".to_string()]);
            // slope β1 + 2β2(j − 5) ≤ 0 at the last year, β2 ≥ 0
            let last = 2.0 * (n_years as f64 - 5.0);
            let mut r = DMatrix::zeros(2, p);
            r[(0, n_plants)] = -1.0;
            r[(0, n_plants + 1)] = -last;
            r[(1, n_plants + 1)] = 1.0;
            (x, ConstraintSet::inequalities(r, DVector::zeros(2))?)
        }
    };
    Ok((Dataset::with_offset(x, y, offset, names)?, cs))
}

/// Prior given as JSON: `{"mu1": [...], "sigma1": [[...]], "a": .., "b": ..}`
/// or with `"sigma2"` to hold the error variance fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorFile {
    pub mu1: Vec<f64>,
    pub sigma1: Vec<Vec<f64>>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub sigma2: Option<f64>,
}

fn square_matrix(rows: &[Vec<f64>], p: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(Error::DimensionMismatch(format!("{what} must be {p} x {p}")));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

impl PriorFile {
    pub fn into_prior(self) -> Result<PriorSpec> {
        let p = self.mu1.len();
        let sigma = square_matrix(&self.sigma1, p, "sigma1")?;
        let precision = match self.sigma2 {
            Some(sigma2) => Precision::Fixed { sigma2 },
            None => Precision::Gamma {
                a: self.a.unwrap_or(VAGUE_GAMMA),
                b: self.b.unwrap_or(VAGUE_GAMMA),
            },
        };
        PriorSpec::new(DVector::from_vec(self.mu1), sigma, precision)
    }
}

pub fn read_prior(path: impl AsRef<Path>) -> Result<PriorSpec> {
    let file: PriorFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    file.into_prior()
}

/// TMVN target as JSON: `{"mu", "sigma", "R", "lower", "upper"}` with `null`
/// bounds meaning infinite. `R` may be omitted for no truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmvnFile {
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    #[serde(rename = "R", default)]
    pub r: Vec<Vec<f64>>,
    #[serde(default)]
    pub lower: Vec<Option<f64>>,
    #[serde(default)]
    pub upper: Vec<Option<f64>>,
}

impl TmvnFile {
    pub fn into_spec(self) -> Result<TmvnSpec> {
        let p = self.mu.len();
        let m = self.r.len();
        if self.r.iter().any(|row| row.len() != p) {
            return Err(Error::DimensionMismatch(format!("each row of R needs {p} entries")));
        }
        let fill = |v: &[Option<f64>], inf: f64| -> Result<DVector<f64>> {
            if v.is_empty() {
                return Ok(DVector::from_element(m, inf));
            }
            if v.len() != m {
                return Err(Error::DimensionMismatch("one bound per row of R".into()));
            }
            Ok(DVector::from_iterator(m, v.iter().map(|b| b.unwrap_or(inf))))
        };
        let lower = fill(&self.lower, f64::NEG_INFINITY)?;
        let upper = fill(&self.upper, f64::INFINITY)?;
        let rt = DMatrix::from_fn(m, p, |i, j| self.r[i][j]);
        TmvnSpec::new(
            DVector::from_vec(self.mu),
            square_matrix(&self.sigma, p, "sigma")?,
            rt,
            lower,
            upper,
        )
    }
}

pub fn read_tmvn(path: impl AsRef<Path>) -> Result<TmvnSpec> {
    let file: TmvnFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    file.into_spec()
}

/// Writes a matrix with a header row. Numbers use the shortest text that
/// parses back to the same `f64`, so output is byte-stable across runs.
pub fn write_matrix_csv(path: impl AsRef<Path>, names: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(names)?;
    let mut buf = Vec::with_capacity(m.ncols());
    for row in m.row_iter() {
        buf.clear();
        buf.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// `samples.csv`: one column per coefficient, one row per retained draw.
pub fn write_samples_csv(path: impl AsRef<Path>, samples: &PosteriorSamples) -> Result<()> {
    write_matrix_csv(path, &samples.names, &samples.draws)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn write_summary_json(path: impl AsRef<Path>, report: &SummaryReport) -> Result<()> {
    write_json(path, report)
}
