//! Monte Carlo estimates and the JSON/CSV report schema.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stats::{ComplexMeanVar, MeanVar};

/// A real or complex value; complex values serialize as `{"re":..,"im":..}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Estimate {
    Real(f64),
    Complex { re: f64, im: f64 },
}

impl Estimate {
    pub fn re(&self) -> f64 {
        match *self {
            Estimate::Real(v) => v,
            Estimate::Complex { re, .. } => re,
        }
    }

    pub fn im(&self) -> f64 {
        match *self {
            Estimate::Real(_) => 0.0,
            Estimate::Complex { im, .. } => im,
        }
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.re(), self.im())
    }

    fn csv_cell(&self) -> String {
        match *self {
            Estimate::Real(v) => format!("{v:e}"),
            Estimate::Complex { re, im } => format!("{re:e}{im:+e}i"),
        }
    }
}

impl From<Complex64> for Estimate {
    fn from(z: Complex64) -> Self {
        Estimate::Complex { re: z.re, im: z.im }
    }
}

/// A Monte Carlo estimate with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate: Estimate,
    /// Sample standard deviation over `sqrt(trials)`, componentwise when complex.
    pub std_error: Estimate,
    pub trials: u64,
    pub seed: u64,
    /// The estimate divided by the bound expression with its constant set to 1.
    pub bound_ratio: Option<f64>,
    pub truncation: Option<String>,
    /// Set when an indicator estimate saw no hits at all.
    pub zero_count: bool,
}

impl EstimateReport {
    pub fn real(acc: &MeanVar, seed: u64) -> Self {
        Self {
            estimate: Estimate::Real(acc.mean()),
            std_error: Estimate::Real(acc.std_error()),
            trials: acc.count(),
            seed,
            bound_ratio: None,
            truncation: None,
            zero_count: false,
        }
    }

    pub fn complex(acc: &ComplexMeanVar, seed: u64) -> Self {
        Self {
            estimate: acc.mean().into(),
            std_error: acc.std_error().into(),
            trials: acc.count(),
            seed,
            bound_ratio: None,
            truncation: None,
            zero_count: false,
        }
    }

    /// An estimate of a probability; flags the report when nothing was hit.
    pub fn probability(acc: &MeanVar, seed: u64) -> Self {
        let mut r = Self::real(acc, seed);
        r.zero_count = acc.mean() == 0.0;
        r
    }

    pub fn exact(value: Estimate, seed: u64) -> Self {
        let zero = match value {
            Estimate::Real(_) => Estimate::Real(0.0),
            Estimate::Complex { .. } => Estimate::Complex { re: 0.0, im: 0.0 },
        };
        Self {
            estimate: value,
            std_error: zero,
            trials: 1,
            seed,
            bound_ratio: None,
            truncation: None,
            zero_count: false,
        }
    }

    /// Sets `bound_ratio = estimate / bound` (real part).
    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound_ratio = Some(self.estimate.re() / bound);
        self
    }

    pub fn with_ratio(mut self, ratio: f64) -> Self {
        self.bound_ratio = Some(ratio);
        self
    }

    pub fn with_truncation(mut self, note: impl Into<String>) -> Self {
        self.truncation = Some(note.into());
        self
    }

    /// Modulus of the standard error; for real estimates just the error.
    pub fn se_norm(&self) -> f64 {
        self.std_error.as_complex().norm()
    }
}

/// Model parameters as echoed in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub gamma: f64,
    pub beta: f64,
    pub epsilon0: f64,
}

/// One line of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Row {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n: Option<u32>,
    pub estimate: Option<Estimate>,
    pub std_error: Option<Estimate>,
    pub bound_ratio: Option<f64>,
    pub truncation: Option<String>,
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub zero_count: bool,
}

impl Row {
    pub fn from_estimate(r: &EstimateReport) -> Self {
        Self {
            estimate: Some(r.estimate),
            std_error: Some(r.std_error),
            bound_ratio: r.bound_ratio,
            truncation: r.truncation.clone(),
            zero_count: r.zero_count,
            ..Self::default()
        }
    }

    pub fn at_x(mut self, x: f64) -> Self {
        self.x = Some(x);
        self
    }

    pub fn at_l(mut self, l: u32) -> Self {
        self.l = Some(l);
        self
    }

    pub fn at_n(mut self, n: u32) -> Self {
        self.n = Some(n);
        self
    }

    pub fn labelled(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

/// The report body. It is a pure function of the run configuration; run
/// metadata such as timestamps belongs in a separate sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub params: ReportParams,
    pub n: u32,
    pub trials: u64,
    pub seed: u64,
    pub rows: Vec<Row>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub summary: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config: Option<serde_json::Value>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// CSV mirror of `rows`; complex values are written as `a+bi`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("label,x,l,n,estimate,std_error,bound_ratio,truncation,zero_count\n");
        for r in &self.rows {
            let cells = [
                r.label.clone().unwrap_or_default(),
                r.x.map(|v| v.to_string()).unwrap_or_default(),
                r.l.map(|v| v.to_string()).unwrap_or_default(),
                r.n.map(|v| v.to_string()).unwrap_or_default(),
                r.estimate.map(|e| e.csv_cell()).unwrap_or_default(),
                r.std_error.map(|e| e.csv_cell()).unwrap_or_default(),
                r.bound_ratio.map(|v| format!("{v:e}")).unwrap_or_default(),
                r.truncation.clone().unwrap_or_default(),
                r.zero_count.to_string(),
            ];
            let line: Vec<String> = cells.iter().map(|c| csv_escape(c)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

fn csv_escape(cell: &str) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}
