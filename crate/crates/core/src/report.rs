//! JSON envelopes and plain-text tables for every result type.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{CmglError, Result};
use crate::estimate::FitResult;
use crate::lrtest::LrTestResult;
use crate::portfolio::PortfolioReport;
use crate::select::SelectionResult;
use crate::simlab::{Part2Report, SimReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Table,
}

impl std::str::FromStr for Format {
    type Err = CmglError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "table" => Ok(Format::Table),
            other => Err(CmglError::input(format!("unknown format {other:?}; expected json or table"))),
        }
    }
}

/// Output document: the result plus what is needed to rerun it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
    /// Wall-clock seconds; omitted for byte-reproducible output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_secs: Option<f64>,
    pub result: T,
}

impl<T> Envelope<T> {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value, result: T) -> Self {
        Self {
            command: command.to_string(),
            version: VERSION.to_string(),
            seed,
            config,
            runtime_secs: None,
            result,
        }
    }
}

/// A result with a human-readable table form.
pub trait Tabular {
    fn table(&self) -> String;
}

pub fn render_report<T: Serialize + Tabular>(report: &T, format: Format) -> Result<String> {
    match format {
        Format::Json => crate::io::to_json(report),
        Format::Table => Ok(report.table()),
    }
}

impl<T: Tabular> Tabular for Envelope<T> {
    fn table(&self) -> String {
        let mut s = format!("cmgl {} {}", self.version, self.command);
        if let Some(seed) = self.seed {
            let _ = write!(s, " (seed {seed})");
        }
        s.push('\n');
        s.push_str(&self.result.table());
        s
    }
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "-".into()
    }
}

/// Left-aligned first column, right-aligned rest.
fn grid(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width = vec![0; cols];
    for row in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for row in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        for (j, cell) in row.iter().enumerate() {
            if j == 0 {
                let _ = write!(out, "{cell:<w$}", w = width[0]);
            } else {
                let _ = write!(out, "  {cell:>w$}", w = width[j]);
            }
        }
        out.push('\n');
    }
    out
}

fn beta_header(len: usize) -> Vec<String> {
    std::iter::once(String::new()).chain((0..len).map(|k| format!("b{k}"))).collect()
}

impl Tabular for FitResult {
    fn table(&self) -> String {
        let n = self.beta.len();
        let mut rows = vec![std::iter::once("estimate".to_string())
            .chain(self.beta.as_slice().iter().map(|v| num(*v)))
            .collect::<Vec<_>>()];
        if self.sd.len() == n {
            rows.push(std::iter::once("sd".to_string()).chain(self.sd.iter().map(|v| num(*v))).collect());
        }
        let mut s = format!("{} fit, {} link\n", self.estimator, self.link.name());
        s.push_str(&grid(&beta_header(n), &rows));
        if let Some(l) = self.loglik {
            let _ = writeln!(s, "loglik {}", num(l));
        }
        let _ = writeln!(s, "iterations {}  converged {}", self.iterations, self.converged);
        s
    }
}

impl Tabular for SelectionResult {
    fn table(&self) -> String {
        let header = vec!["subset".to_string(), "ebic".to_string()];
        let rows: Vec<Vec<String>> = self
            .trace
            .iter()
            .map(|step| vec![format!("{:?}", step.subset.indices()), step.ebic.map_or("inf".into(), num)])
            .collect();
        let mut s = format!(
            "backward selection, {} {} link, gamma {}\n",
            self.estimator,
            self.link.name(),
            self.gamma
        );
        s.push_str(&grid(&header, &rows));
        let _ = writeln!(s, "chosen {:?}  ebic {}", self.chosen.indices(), num(self.chosen_ebic));
        s.push_str(&self.fit.table());
        s
    }
}

impl Tabular for LrTestResult {
    fn table(&self) -> String {
        let header = vec!["statistic".to_string(), "value".to_string()];
        let rows = vec![
            vec!["t_lr".into(), num(self.t_lr)],
            vec!["sigma_hat".into(), num(self.sigma_hat)],
            vec!["z".into(), num(self.z)],
            vec!["z_alpha".into(), num(self.z_alpha)],
            vec!["klic_diff".into(), num(self.klic_diff)],
        ];
        let mut s = format!(
            "link test: {} (g1) vs {} (g2), alpha {}\n",
            self.link1.name(),
            self.link2.name(),
            self.alpha
        );
        s.push_str(&grid(&header, &rows));
        let verdict = match self.decision {
            crate::lrtest::Decision::PreferFirst => format!("prefer {}", self.link1.name()),
            crate::lrtest::Decision::PreferSecond => format!("prefer {}", self.link2.name()),
            crate::lrtest::Decision::Equivalent => "equivalent".to_string(),
        };
        let _ = writeln!(s, "decision: {verdict}");
        s
    }
}

impl Tabular for SimReport {
    fn table(&self) -> String {
        let c = &self.config;
        let mut s = format!(
            "{} {} link, p {} K {} n {}, scenario {:?}, {:?} errors, {} of {} replications\n",
            c.estimator,
            c.link.name(),
            c.p,
            c.k,
            c.n,
            c.scenario,
            c.dist,
            self.successes,
            c.reps
        );
        let coef = &self.coefficients;
        let mut header = vec![String::new()];
        header.extend(coef.iter().map(|k| format!("b{}", k.index)));
        let row = |name: &str, f: &dyn Fn(&crate::simlab::CoefSummary) -> f64| {
            std::iter::once(name.to_string()).chain(coef.iter().map(|k| num(f(k)))).collect::<Vec<_>>()
        };
        let rows = vec![
            row("truth", &|k| k.truth),
            row("mean", &|k| k.mean_estimate),
            row("SD", &|k| k.sd),
            row("ESD", &|k| k.esd),
        ];
        s.push_str(&grid(&header, &rows));
        let header = vec!["measure".to_string(), "mean".into(), "sd".into()];
        let mut rows = vec![
            vec!["EE".into(), num(self.ee.mean), num(self.ee.sd)],
            vec!["SE".into(), num(self.se.mean), num(self.se.sd)],
            vec!["FE".into(), num(self.fe.mean), num(self.fe.sd)],
        ];
        if let (Some(tpr), Some(fdr)) = (self.tpr, self.fdr) {
            rows.push(vec!["TPR".into(), num(tpr.mean), num(tpr.sd)]);
            rows.push(vec!["FDR".into(), num(fdr.mean), num(fdr.sd)]);
        }
        if let Some(ct) = self.ct {
            rows.push(vec!["CT".into(), num(ct), "-".into()]);
        }
        s.push_str(&grid(&header, &rows));
        if !self.failures.is_empty() {
            let _ = writeln!(s, "failed replications: {}", self.failures.len());
        }
        s
    }
}

impl Tabular for Part2Report {
    fn table(&self) -> String {
        let header: Vec<String> = ["n", "p", "G1", "G1 (%)", "neither (%)", "exp (%)", "mean z"]
            .iter()
            .map(|h| h.to_string())
            .collect();
        let rows: Vec<Vec<String>> = self
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.n.to_string(),
                    c.p.to_string(),
                    c.alternative.name().to_string(),
                    format!("{:.1}", c.prefer_alternative_pct),
                    format!("{:.1}", c.non_rejection_pct),
                    format!("{:.1}", c.rejection_pct),
                    num(c.mean_z),
                ]
            })
            .collect();
        let mut s = format!(
            "link test study, exponential truth, {} replications per cell, alpha {}\n",
            self.config.reps, self.config.alpha
        );
        s.push_str(&grid(&header, &rows));
        s
    }
}

impl Tabular for PortfolioReport {
    fn table(&self) -> String {
        let c = &self.config;
        let mut s = format!(
            "minimum-variance backtest: {} {} link{}, {} holding periods\n",
            c.estimator,
            c.link.name(),
            if c.select { " (EBIC submodel)" } else { "" },
            self.periods.len()
        );
        let header = vec!["Mean".to_string(), "SD".into(), "SR".into()];
        let rows = vec![vec![num(self.mean), num(self.sd), num(self.sharpe)]];
        s.push_str(&grid(&header, &rows));
        s
    }
}

/// Summary of constructed weight matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsSummary {
    pub p: usize,
    pub names: Vec<String>,
    pub densities: Vec<f64>,
    pub files: Vec<String>,
}

impl Tabular for WeightsSummary {
    fn table(&self) -> String {
        let header = vec!["weight".to_string(), "density".into()];
        let rows: Vec<Vec<String>> = self
            .names
            .iter()
            .zip(&self.densities)
            .map(|(n, d)| vec![n.clone(), num(*d)])
            .collect();
        let mut s = format!("{} weight matrices, p {}\n", self.names.len(), self.p);
        s.push_str(&grid(&header, &rows));
        s
    }
}
