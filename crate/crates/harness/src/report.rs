//! Reports and their JSON / CSV serializations.

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const REPORT_SCHEMA: &str = "wcopt.report/v1";
pub const VERIFY_SCHEMA: &str = "wcopt.verify/v1";

pub const CSV_HEADER: [&str; 10] = ["kind", "n", "T", "eta", "measure", "estimate", "std_error", "bound", "slope", "r2"];

/// One line of a report: an estimate at a grid point, or a rate fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub kind: String,
    pub n: Option<usize>,
    #[serde(rename = "T")]
    pub iterations: Option<usize>,
    pub eta: Option<f64>,
    pub measure: String,
    pub estimate: Option<f64>,
    pub std_error: Option<f64>,
    pub bound: Option<f64>,
    pub slope: Option<f64>,
    pub r2: Option<f64>,
}

impl Row {
    pub fn new(kind: &str, measure: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            n: None,
            iterations: None,
            eta: None,
            measure: measure.into(),
            estimate: None,
            std_error: None,
            bound: None,
            slope: None,
            r2: None,
        }
    }

    pub fn at(mut self, n: usize, iterations: usize, eta: f64) -> Self {
        self.n = Some(n);
        self.iterations = Some(iterations);
        self.eta = Some(eta);
        self
    }

    pub fn estimate(mut self, estimate: f64, std_error: Option<f64>) -> Self {
        self.estimate = Some(estimate);
        self.std_error = std_error;
        self
    }

    pub fn bound(mut self, bound: Option<f64>) -> Self {
        self.bound = bound;
        self
    }

    pub fn fit(mut self, slope: f64, r2: f64) -> Self {
        self.slope = Some(slope);
        self.r2 = Some(r2);
        self
    }
}

/// Pass/fail outcome of one acceptance criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub rows: Vec<Row>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub criteria: Vec<Criterion>,
}

impl Report {
    pub fn new(config: Option<serde_json::Value>) -> Self {
        Self {
            schema: REPORT_SCHEMA.into(),
            config,
            rows: Vec::new(),
            criteria: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Shortest round-trip decimal form, identical to the JSON number.
pub fn fmt_f64(x: f64) -> String {
    serde_json::Number::from_f64(x).map(|n| n.to_string()).unwrap_or_default()
}

pub fn emit_report(report: &Report, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("report serializes");
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER).map_err(csv_err)?;
            let opt_f = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
            let opt_u = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
            for r in &report.rows {
                w.write_record([
                    r.kind.clone(),
                    opt_u(r.n),
                    opt_u(r.iterations),
                    opt_f(r.eta),
                    r.measure.clone(),
                    opt_f(r.estimate),
                    opt_f(r.std_error),
                    opt_f(r.bound),
                    opt_f(r.slope),
                    opt_f(r.r2),
                ])
                .map_err(csv_err)?;
            }
            w.into_inner().map_err(|e| std::io::Error::other(e.to_string()).into())
        }
    }
}

fn csv_err(e: csv::Error) -> crate::error::HarnessError {
    std::io::Error::other(e.to_string()).into()
}

/// Parses CSV produced by [`emit_report`] back into rows.
pub fn parse_csv(bytes: &[u8]) -> Result<Vec<Row>> {
    let mut rd = csv::Reader::from_reader(bytes);
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let f = |i: usize| -> Option<f64> { rec.get(i).filter(|s| !s.is_empty()).and_then(|s| s.parse().ok()) };
        let u = |i: usize| -> Option<usize> { rec.get(i).filter(|s| !s.is_empty()).and_then(|s| s.parse().ok()) };
        rows.push(Row {
            kind: rec.get(0).unwrap_or_default().to_string(),
            n: u(1),
            iterations: u(2),
            eta: f(3),
            measure: rec.get(4).unwrap_or_default().to_string(),
            estimate: f(5),
            std_error: f(6),
            bound: f(7),
            slope: f(8),
            r2: f(9),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_header_only() {
        let out = emit_report(&Report::new(None), Format::Csv).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "kind,n,T,eta,measure,estimate,std_error,bound,slope,r2\n");
    }

    #[test]
    fn one_row_two_lines() {
        let mut r = Report::new(None);
        r.rows.push(Row::new("stability", "arguments").at(10, 5, 0.1).estimate(0.25, Some(0.01)).bound(Some(1.0)));
        let text = String::from_utf8(emit_report(&r, Format::Csv).unwrap()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().nth(1).unwrap(), "stability,10,5,0.1,arguments,0.25,0.01,1.0,,");
    }

    #[test]
    fn shortest_round_trip_floats() {
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(1e-20), "1e-20");
        assert_eq!(fmt_f64(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(fmt_f64(f64::NAN), "");
    }
}
