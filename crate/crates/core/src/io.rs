//! File formats: CSV panels, weight specifications and JSON reports.
//!
//! CSV input is UTF-8 with a header row; numbers use a dot decimal separator
//! regardless of locale.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CmglError, Result};
use crate::portfolio::{CovariatePanel, ReturnsPanel, RiskFree};
use crate::weights::{
    build_continuous, build_discrete, build_thresholded, covariate_distances, CovariateColumn, WeightMatrix,
    WeightSet,
};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CmglError + '_ {
    move |source| CmglError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// A parsed CSV: header names and the raw records.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        rows.push(rec?.iter().map(|v| v.trim().to_string()).collect());
    }
    if header.is_empty() {
        return Err(CmglError::input(format!("{}: empty header", path.display())));
    }
    Ok(CsvTable { header, rows })
}

/// Locale-independent float parsing.
pub fn parse_number(field: &str, context: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| CmglError::input(format!("{context}: cannot parse {field:?} as a number")))?;
    if !v.is_finite() {
        return Err(CmglError::input(format!("{context}: non-finite value {field:?}")));
    }
    Ok(v)
}

fn numeric_block(table: &CsvTable, cols: &[usize], path: &Path) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(table.rows.len(), cols.len());
    for (i, row) in table.rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            out[(i, j)] = parse_number(&row[c], &format!("{} row {} column {}", path.display(), i + 2, table.header[c]))?;
        }
    }
    Ok(out)
}

/// `n x p` response matrix; every column is numeric.
pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let table = read_csv(path)?;
    if table.rows.is_empty() {
        return Err(CmglError::input(format!("{}: no data rows", path.display())));
    }
    let cols: Vec<usize> = (0..table.header.len()).collect();
    let m = numeric_block(&table, &cols, path)?;
    Ok((table.header, m))
}

pub fn write_matrix_csv(path: &Path, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| format_number(*v)))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Shortest representation that parses back to the same value.
pub fn format_number(v: f64) -> String {
    format!("{v:?}")
}

/// Kind of a covariate column in a weight specification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Continuous,
    Discrete,
}

/// One weight matrix derived from a covariate column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightEntry {
    pub column: String,
    pub kind: CovariateKind,
    /// Kernel scale; continuous covariates only.
    #[serde(default)]
    pub scale: Option<f64>,
    /// Keep only the closest pairs at this density; continuous covariates only.
    #[serde(default)]
    pub density: Option<f64>,
}

/// Weight construction from a covariate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    /// Covariate CSV, relative to the specification file.
    pub covariates: PathBuf,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(rename = "weight")]
    pub weights: Vec<WeightEntry>,
}

fn default_scale() -> f64 {
    1.0
}

/// Reads a TOML or JSON file, chosen by extension.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => Ok(serde_json::from_str(&text)?),
        _ => Ok(toml::from_str(&text)?),
    }
}

/// Builds the weight matrices described by `spec`; relative covariate paths
/// resolve against `base`.
pub fn build_weight_set(spec: &WeightSpec, base: &Path) -> Result<WeightSet> {
    let cov_path = if spec.covariates.is_absolute() {
        spec.covariates.clone()
    } else {
        base.join(&spec.covariates)
    };
    let table = read_csv(&cov_path)?;
    if spec.weights.is_empty() {
        return Err(CmglError::input("weight specification lists no weights"));
    }
    let mut matrices = Vec::with_capacity(spec.weights.len());
    let mut names = Vec::with_capacity(spec.weights.len());
    for entry in &spec.weights {
        let c = table.column_index(&entry.column).ok_or_else(|| {
            CmglError::input(format!("{}: no covariate column {:?}", cov_path.display(), entry.column))
        })?;
        let values = table.rows.iter().map(|r| r[c].as_str());
        let w = match entry.kind {
            CovariateKind::Discrete => {
                if entry.scale.is_some() || entry.density.is_some() {
                    return Err(CmglError::input(format!(
                        "{}: scale and density apply to continuous covariates only",
                        entry.column
                    )));
                }
                let labels: Vec<&str> = values.collect();
                build_discrete(&CovariateColumn::discrete(entry.column.clone(), &labels)?)?
            }
            CovariateKind::Continuous => {
                let xs = values
                    .enumerate()
                    .map(|(i, v)| parse_number(v, &format!("{} row {} column {}", cov_path.display(), i + 2, entry.column)))
                    .collect::<Result<Vec<f64>>>()?;
                let col = CovariateColumn::continuous(entry.column.clone(), xs)?;
                let scale = entry.scale.unwrap_or(spec.scale);
                match entry.density {
                    Some(d) => build_thresholded(&covariate_distances(&col)?, d, scale)?,
                    None => build_continuous(&col, scale)?,
                }
            }
        };
        matrices.push(w);
        names.push(entry.column.clone());
    }
    WeightSet::with_names(table.rows.len(), matrices, names)
}

/// Loads weights from a specification file, or from a directory of dense
/// CSV matrices taken in file-name order.
pub fn load_weights(path: &Path) -> Result<WeightSet> {
    if path.is_dir() {
        return read_weight_dir(path);
    }
    let spec: WeightSpec = read_config(path)?;
    build_weight_set(&spec, path.parent().unwrap_or(Path::new(".")))
}

fn sorted_csvs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("csv"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn read_weight_dir(dir: &Path) -> Result<WeightSet> {
    let files = sorted_csvs(dir)?;
    if files.is_empty() {
        return Err(CmglError::input(format!("{}: no weight CSV files", dir.display())));
    }
    let mut matrices = Vec::new();
    let mut names = Vec::new();
    for f in &files {
        let (_, m) = read_matrix_csv(f)?;
        matrices.push(WeightMatrix::from_dense(m).map_err(|e| CmglError::input(format!("{}: {e}", f.display())))?);
        names.push(f.file_stem().and_then(|s| s.to_str()).unwrap_or("w").to_string());
    }
    WeightSet::with_names(matrices[0].dim(), matrices, names)
}

/// Writes each weight matrix as a dense CSV named after it.
pub fn write_weight_dir(dir: &Path, weights: &WeightSet, entity_names: &[String]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let width = weights.k().to_string().len();
    let mut out = Vec::new();
    for k in 1..=weights.k() {
        let name = &weights.names()[k - 1];
        let path = dir.join(format!("{:0width$}_{name}.csv", k));
        write_matrix_csv(&path, entity_names, &weights.dense(k))?;
        out.push(path);
    }
    Ok(out)
}

/// Returns panel: a `date` column followed by one column per asset.
pub fn read_returns(path: &Path) -> Result<ReturnsPanel> {
    let table = read_csv(path)?;
    if table.header.first().map(String::as_str) != Some("date") {
        return Err(CmglError::input(format!("{}: first column must be 'date'", path.display())));
    }
    let cols: Vec<usize> = (1..table.header.len()).collect();
    let m = numeric_block(&table, &cols, path)?;
    let dates = table.rows.iter().map(|r| r[0].clone()).collect();
    ReturnsPanel::new(dates, table.header[1..].to_vec(), m)
}

/// Covariate panel from a directory holding `<date>.csv` for each return
/// date except the last. An optional leading `asset` column is checked
/// against the return panel's asset order.
pub fn read_covariate_dir(dir: &Path, returns: &ReturnsPanel) -> Result<CovariatePanel> {
    let needed = returns.periods() - 1;
    let mut names: Option<Vec<String>> = None;
    let mut periods = Vec::with_capacity(needed);
    for date in &returns.dates()[..needed] {
        let path = dir.join(format!("{date}.csv"));
        let table = read_csv(&path)?;
        let skip = usize::from(table.header.first().map(String::as_str) == Some("asset"));
        if skip == 1 {
            let ids: Vec<&str> = table.rows.iter().map(|r| r[0].as_str()).collect();
            if ids != returns.assets().iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(CmglError::input(format!(
                    "{}: asset column does not match the returns header",
                    path.display()
                )));
            }
        }
        let header = table.header[skip..].to_vec();
        match &names {
            None => names = Some(header),
            Some(n) if *n == header => {}
            Some(_) => {
                return Err(CmglError::input(format!(
                    "{}: covariate columns differ from earlier periods",
                    path.display()
                )))
            }
        }
        let cols: Vec<usize> = (skip..table.header.len()).collect();
        let m = numeric_block(&table, &cols, &path)?;
        if m.nrows() != returns.assets().len() {
            return Err(CmglError::input(format!(
                "{}: {} rows, expected one per asset ({})",
                path.display(),
                m.nrows(),
                returns.assets().len()
            )));
        }
        periods.push(m);
    }
    CovariatePanel::new(names.unwrap_or_default(), periods)
}

/// A number, or a CSV whose last column holds one rate per holding period.
pub fn parse_risk_free(arg: &str) -> Result<RiskFree> {
    if let Ok(v) = arg.trim().parse::<f64>() {
        if !v.is_finite() {
            return Err(CmglError::input("risk-free rate must be finite"));
        }
        return Ok(RiskFree::Constant(v));
    }
    let path = Path::new(arg);
    let table = read_csv(path)?;
    let last = table.header.len() - 1;
    let values = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| parse_number(&r[last], &format!("{} row {}", path.display(), i + 2)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(RiskFree::Series(values))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, text).map_err(io_err(path))
}
