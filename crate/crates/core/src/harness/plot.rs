use super::pipeline::RunManifest;
use crate::error::{Error, Result};
use crate::reference::{fit_rate, ErrorRow};
use serde::Serialize;

/// One log-log series of an error norm against eps, with its fitted line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlotSeries {
    pub name: String,
    pub branch: String,
    pub epsilon: Vec<f64>,
    pub error: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl PlotSeries {
    /// Columns: epsilon, error, fit (exp(intercept) * eps^slope).
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["epsilon", "error", "fit"]).map_err(io)?;
        for (e, v) in self.epsilon.iter().zip(&self.error) {
            let fit = self.intercept.exp() * e.powf(self.slope);
            w.write_record([e.to_string(), v.to_string(), fit.to_string()]).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn file_name(&self) -> String {
        format!("{}_{}.csv", self.name, self.branch)
    }
}

const NORMS: [(&str, fn(&ErrorRow) -> f64); 3] =
    [("eig_err", |r| r.eig_err), ("l2_err", |r| r.l2_err), ("h1_err", |r| r.h1_err)];

/// One series per error norm and branch from a sweep manifest.
pub fn plot_data(manifest: &RunManifest) -> Result<Vec<PlotSeries>> {
    let rows = manifest
        .sweep
        .as_ref()
        .map(|s| s.rows.as_slice())
        .ok_or_else(|| Error::InsufficientPoints("manifest holds no sweep".into()))?;
    let mut branches: Vec<&str> = rows.iter().map(|r| r.branch.as_str()).collect();
    branches.sort();
    branches.dedup();
    let mut out = Vec::new();
    for b in branches {
        let sel: Vec<&ErrorRow> = rows.iter().filter(|r| r.branch == b).collect();
        if sel.len() < 2 {
            return Err(Error::InsufficientPoints(format!("branch {b} has {} eps points, need 2", sel.len())));
        }
        for (name, get) in NORMS {
            let epsilon: Vec<f64> = sel.iter().map(|r| r.epsilon).collect();
            let error: Vec<f64> = sel.iter().map(|r| get(r)).collect();
            if error.iter().any(|e| e.is_nan()) {
                continue;
            }
            let (slope, intercept, r2) = if epsilon.len() >= 3 {
                match fit_rate(&epsilon, &error, None) {
                    Ok(f) => (f.slope, f.intercept, f.r2),
                    Err(_) => (f64::NAN, f64::NAN, f64::NAN),
                }
            } else {
                // two points: the line through them
                let s = (error[1] / error[0]).ln() / (epsilon[1] / epsilon[0]).ln();
                (s, error[0].ln() - s * epsilon[0].ln(), 1.0)
            };
            out.push(PlotSeries { name: name.into(), branch: b.into(), epsilon, error, slope, intercept, r2 });
        }
    }
    Ok(out)
}
