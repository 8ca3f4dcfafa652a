use super::fd::{Modes, ReferenceSpectrum};
use crate::error::{Error, Result};
use crate::hermite::{hermite_table, MacroBasis, MacroFunction};
use serde::{Deserialize, Serialize};

/// Smallest accepted ratio between the best and second-best overlap.
pub const DOMINANCE: f64 = 10.0;

/// One line of a verification table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub epsilon: f64,
    pub j: usize,
    pub branch: String,
    pub lambda_ref: f64,
    pub lambda_ref_richardson: f64,
    pub lambda_tilde: f64,
    pub eig_err: f64,
    /// NaN when not computed; JSON writes it as null.
    #[serde(deserialize_with = "nan_from_null")]
    pub l2_err: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub h1_err: f64,
    pub h: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    pub runtime_s: f64,
}

fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// Least-squares fit log err = slope * log eps + intercept.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionErrors {
    pub l2: f64,
    pub h1: f64,
}

fn project_line(values: &[f64], xs: &[f64], basis: &MacroBasis, h: f64) -> Vec<f64> {
    let n = basis.n;
    let table = hermite_table(n, basis.sigma, xs);
    (0..n).map(|k| h * values.iter().enumerate().map(|(p, v)| v * table[p * n + k]).sum::<f64>()).collect()
}

impl ReferenceSpectrum {
    /// Hermite coefficients c_k = h^d sum psi(x) H_k(x) of mode `idx`.
    pub fn hermite_coefficients(&self, idx: usize, basis: &MacroBasis) -> Vec<f64> {
        let xs = self.grid.interior_nodes();
        let h = self.grid.h;
        match &self.modes {
            Modes::Grid(m) if basis.dim == 1 => project_line(&m[idx], &xs, basis, h),
            Modes::Grid(m) => {
                let n = basis.n;
                let ni = xs.len();
                let table = hermite_table(n, basis.sigma, &xs);
                let v = &m[idx];
                // tmp[p, k2] = h sum_q v[p, q] H_k2(x_q)
                let mut tmp = vec![0.0; ni * n];
                for p in 0..ni {
                    for k2 in 0..n {
                        tmp[p * n + k2] = h * (0..ni).map(|q| v[p * ni + q] * table[q * n + k2]).sum::<f64>();
                    }
                }
                let mut out = vec![0.0; n * n];
                for k1 in 0..n {
                    for k2 in 0..n {
                        out[k1 * n + k2] = h * (0..ni).map(|p| table[p * n + k1] * tmp[p * n + k2]).sum::<f64>();
                    }
                }
                out
            }
            Modes::Kronecker { axes, pairs } => {
                let (i, k) = pairs[idx];
                let p0 = project_line(&axes[0][i], &xs, basis, h);
                let p1 = project_line(&axes[1][k], &xs, basis, h);
                let n = basis.n;
                (0..n * n).map(|c| p0[c / n] * p1[c % n]).collect()
            }
        }
    }

    pub fn mode_count(&self) -> usize {
        match &self.modes {
            Modes::Grid(m) => m.len(),
            Modes::Kronecker { pairs, .. } => pairs.len(),
        }
    }

    /// Mode values at all nodes of the h grid, boundary zeros included (1D).
    pub fn mode_on_nodes(&self, idx: usize) -> Option<Vec<f64>> {
        let v = match (&self.modes_richardson, &self.modes) {
            (Some(r), _) => &r[idx],
            (None, Modes::Grid(m)) if self.grid.dim == 1 => &m[idx],
            _ => return None,
        };
        let mut out = Vec::with_capacity(v.len() + 2);
        out.push(0.0);
        out.extend_from_slice(v);
        out.push(0.0);
        Some(out)
    }
}

/// Finds the reference mode with the largest overlap with `target`.
/// Returns (mode index, overlap, dominance ratio).
pub fn match_modes(reference: &ReferenceSpectrum, target: &MacroFunction) -> Result<(usize, f64, f64)> {
    let tn = target.norm();
    let overlaps: Vec<f64> = (0..reference.mode_count())
        .map(|m| {
            let c = reference.hermite_coefficients(m, &target.basis);
            c.iter().zip(&target.coeffs).map(|(x, y)| x * y).sum::<f64>() / tn
        })
        .collect();
    let mut order: Vec<usize> = (0..overlaps.len()).collect();
    order.sort_by(|&x, &y| overlaps[y].abs().total_cmp(&overlaps[x].abs()));
    let best = order[0];
    let second = order.get(1).map(|&k| overlaps[k].abs()).unwrap_or(0.0);
    let ratio = if second == 0.0 { f64::INFINITY } else { overlaps[best].abs() / second };
    if ratio < DOMINANCE {
        return Err(Error::MatchingAmbiguous(ratio));
    }
    Ok((best, overlaps[best], ratio))
}

/// L2 and H1 errors of `approx` against `reference` on a uniform 1D grid,
/// both normalized so that h sum psi phi0 = 1. Derivatives are forward
/// differences at cell midpoints.
pub fn function_errors_1d(reference: &[f64], approx: &[f64], phi0: &[f64], h: f64) -> FunctionErrors {
    let ip = |u: &[f64]| h * u.iter().zip(phi0).map(|(a, b)| a * b).sum::<f64>();
    let (sr, sa) = (ip(reference), ip(approx));
    let diff: Vec<f64> = reference.iter().zip(approx).map(|(r, a)| r / sr - a / sa).collect();
    let l2sq = h * diff.iter().map(|d| d * d).sum::<f64>();
    let gradsq = diff.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / h;
    FunctionErrors { l2: l2sq.sqrt(), h1: (l2sq + gradsq).sqrt() }
}

/// Fits err ~ C eps^slope. Points whose error is not above the reference
/// error estimate make the fit meaningless and are rejected.
pub fn fit_rate(eps: &[f64], err: &[f64], estimate: Option<&[f64]>) -> Result<RateFit> {
    if eps.len() != err.len() {
        return Err(Error::Config(format!("{} epsilons but {} errors", eps.len(), err.len())));
    }
    if eps.len() < 3 {
        return Err(Error::InsufficientPoints(format!("{} points, at least 3 needed", eps.len())));
    }
    for (k, e) in err.iter().enumerate() {
        let floor = estimate.and_then(|s| s.get(k)).copied().unwrap_or(0.0);
        if !(e.is_finite() && *e > 0.0 && *e > floor) {
            return Err(Error::DegenerateFit(format!("error {e:e} at eps = {} is not above {floor:e}", eps[k])));
        }
    }
    let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = err.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all epsilons equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit { slope, intercept, r2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let eps = [0.1, 0.05, 0.025, 0.0125];
        let err: Vec<f64> = eps.iter().map(|e: &f64| 3.0 * e.powi(2)).collect();
        let f = fit_rate(&eps, &err, None).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(matches!(fit_rate(&[0.1, 0.05], &[1.0, 0.5], None), Err(Error::InsufficientPoints(_))));
        let r = fit_rate(&[0.1, 0.05, 0.02], &[1e-3, 1e-4, 1e-5], Some(&[0.0, 0.0, 2e-5]));
        assert!(matches!(r, Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn identical_functions_have_no_error() {
        let h = 0.01;
        let xs: Vec<f64> = (0..=200).map(|i| -1.0 + i as f64 * h).collect();
        let phi: Vec<f64> = xs.iter().map(|x| (1.0 - x * x).max(0.0)).collect();
        let scaled: Vec<f64> = phi.iter().map(|v| -2.5 * v).collect();
        let e = function_errors_1d(&phi, &scaled, &phi, h);
        assert!(e.l2 < 1e-14 && e.h1 < 1e-13);
    }
}
