//! Convergence tables with fitted log-log rates, and their CSV / JSON forms.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// Shortest round-trip decimal form of `v`, switching to exponent notation
/// outside `[1e-4, 1e15)` so tiny residuals stay readable.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

/// Least-squares slope of `log|y|` against `log x`. Pairs with a zero or
/// non-finite coordinate are skipped; `None` if fewer than two remain.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && y.abs() > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Whether a sequence decreases "in trend": the fitted slope against the
/// index is negative and the last value is below the first.
pub fn decreasing_in_trend(values: &[f64]) -> bool {
    if values.len() < 2 {
        return false;
    }
    let idx: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
    let m = values.len() as f64;
    let mx = idx.iter().sum::<f64>() / m;
    let my = values.iter().sum::<f64>() / m;
    let sxy: f64 = idx.iter().zip(values).map(|(x, y)| (x - mx) * (y - my)).sum();
    sxy < 0.0 && values[values.len() - 1] < values[0]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub parameter: f64,
    pub value: f64,
    pub error_estimate: f64,
    /// Extra named columns, in the order given by the report header.
    pub extra: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub name: String,
    pub parameter_name: String,
    pub extra_columns: Vec<String>,
    pub rows: Vec<ConvergenceRow>,
    /// Fitted log-log slope of |value| against the parameter.
    pub slope: Option<f64>,
    pub threshold: Option<f64>,
    pub passed: bool,
    pub notes: Vec<String>,
}

impl ConvergenceReport {
    pub fn new(name: &str, parameter_name: &str, extra_columns: &[&str]) -> Self {
        ConvergenceReport {
            name: name.to_string(),
            parameter_name: parameter_name.to_string(),
            extra_columns: extra_columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            slope: None,
            threshold: None,
            passed: false,
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, parameter: f64, value: f64, error_estimate: f64, extra: Vec<f64>) {
        debug_assert_eq!(extra.len(), self.extra_columns.len());
        self.rows.push(ConvergenceRow {
            parameter,
            value,
            error_estimate,
            extra,
        });
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.parameter).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    pub fn abs_values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value.abs()).collect()
    }

    /// Fits the slope and records it.
    pub fn fit(&mut self) -> Option<f64> {
        self.slope = fit_loglog_slope(&self.parameters(), &self.values());
        self.slope
    }

    /// Fits the slope and passes iff it is at least `min_rate`.
    pub fn judge_rate(&mut self, min_rate: f64) -> bool {
        self.fit();
        self.threshold = Some(min_rate);
        self.passed = self.slope.is_some_and(|s| s >= min_rate);
        self.passed
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec![self.parameter_name.clone(), "value".into(), "abs_value".into()];
        header.extend(self.extra_columns.iter().cloned());
        header.push("error_estimate".into());
        wtr.write_record(&header).map_err(io_err)?;
        for r in &self.rows {
            let mut rec = vec![fmt_num(r.parameter), fmt_num(r.value), fmt_num(r.value.abs())];
            rec.extend(r.extra.iter().map(|v| fmt_num(*v)));
            rec.push(fmt_num(r.error_estimate));
            wtr.write_record(&rec).map_err(io_err)?;
        }
        wtr.flush().map_err(|e| Error::Io(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serialises")
    }
}

pub(crate) fn io_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [0.1, 0.05, 0.025, 0.0125];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        assert!((fit_loglog_slope(&xs, &ys).unwrap() - 2.0).abs() < 1e-12);
        assert!(fit_loglog_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn trend() {
        assert!(decreasing_in_trend(&[4.0, 2.5, 2.6, 1.0]));
        assert!(!decreasing_in_trend(&[1.0, 2.0, 3.0]));
    }

    #[test]
    fn csv_layout() {
        let mut r = ConvergenceReport::new("demo", "epsilon", &["bound_rhs"]);
        r.push(0.2, -0.5, 1e-9, vec![3.0]);
        let s = r.to_csv_string();
        assert_eq!(s, "epsilon,value,abs_value,bound_rhs,error_estimate\n0.2,-0.5,0.5,3,1e-9\n");
    }
}
