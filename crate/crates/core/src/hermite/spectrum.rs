use super::{MacroBasis, MacroFunction, Padded};
use crate::error::{Error, Result};
use crate::poly::{MultiIndex, SlowPolynomial};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative tolerance for grouping numerically equal eigenvalues.
pub const CLUSTER_TOLERANCE: f64 = 1e-6;

fn check_confining(w: &SlowPolynomial, dim: usize) -> Result<()> {
    let deg = w.degree();
    if deg < 2 || deg % 2 != 0 {
        return Err(Error::NonConfining(format!("potential has degree {deg}; need an even degree >= 2")));
    }
    if deg == 2 {
        let q = w.quadratic_matrix();
        let ok = match dim {
            1 => q[0][0] > 0.0,
            _ => q[0][0] > 0.0 && q[0][0] * q[1][1] - q[0][1] * q[1][0] > 0.0,
        };
        if !ok {
            return Err(Error::NonConfining(format!("quadratic part {q:?} is not positive definite")));
        }
        return Ok(());
    }
    let top = w.homogeneous_part(deg as u32);
    let samples = if dim == 1 { 2 } else { 720 };
    for s in 0..samples {
        let t = 2.0 * std::f64::consts::PI * s as f64 / samples as f64;
        let x = if dim == 1 { vec![t.cos().signum()] } else { vec![t.cos(), t.sin()] };
        if top.eval(&x) <= 0.0 {
            return Err(Error::NonConfining(format!("leading part of degree {deg} is not positive")));
        }
    }
    Ok(())
}

/// Natural length scale (det abar / det Q)^{1/(4d)} of the homogenized oscillator.
pub fn default_scale(abar: &[Vec<f64>], w: &SlowPolynomial) -> f64 {
    let d = abar.len();
    let det = |m: &[Vec<f64>]| if d == 1 { m[0][0] } else { m[0][0] * m[1][1] - m[0][1] * m[1][0] };
    let q = w.quadratic_matrix();
    let dq = det(&q);
    if dq <= 0.0 {
        return 1.0;
    }
    (det(abar) / dq).powf(1.0 / (4.0 * d as f64))
}

/// Galerkin matrix of -div(abar grad) + W. Entries are exact: every basis
/// function is mapped in an enlarged basis before truncation.
pub fn assemble_l0(abar: &[Vec<f64>], w: &SlowPolynomial, basis: &MacroBasis) -> Result<DMatrix<f64>> {
    let d = basis.dim;
    check_confining(w, d)?;
    let len = basis.len();
    let mut mat = DMatrix::zeros(len, len);
    for col in 0..len {
        let mut e = MacroFunction::zero(*basis);
        e.coeffs[col] = 1.0;
        let p = e.padded();
        let mut out = p.mul_poly(w)?;
        for i in 0..d {
            let di = p.deriv(i);
            for j in 0..d {
                if abar[i][j] != 0.0 {
                    out.axpy(-abar[i][j], &di.deriv(j));
                }
            }
        }
        let v = out.truncate(basis.n);
        for row in 0..len {
            mat[(row, col)] = v.coeffs[row];
        }
    }
    let sym = (&mat + mat.transpose()) * 0.5;
    Ok(sym)
}

/// Eigenpairs of the truncated homogenized operator.
#[derive(Clone, Debug)]
pub struct SpectrumResult {
    pub basis: MacroBasis,
    /// All eigenvalues of the Galerkin matrix, nondecreasing.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, same order.
    pub vectors: DMatrix<f64>,
    /// Number of eigenvalues considered trustworthy.
    pub count: usize,
    /// Clusters among the first `count` eigenvalues: (start, size), zero-based.
    pub clusters: Vec<(usize, usize)>,
    /// Gap of each cluster to its nearest neighbor cluster, if resolved.
    pub gaps: Vec<Option<f64>>,
    pub max_residual: f64,
    pub orthonormality: f64,
}

impl SpectrumResult {
    /// Eigenfunction with 1-based index j.
    pub fn eigenfunction(&self, j: usize) -> MacroFunction {
        MacroFunction { basis: self.basis, coeffs: self.vectors.column(j - 1).iter().copied().collect() }
    }

    pub fn eigenvalue(&self, j: usize) -> f64 {
        self.values[j - 1]
    }

    /// Position of the cluster holding 1-based index j.
    pub fn cluster_index(&self, j: usize) -> Option<usize> {
        self.clusters.iter().position(|(s, n)| j - 1 >= *s && j - 1 < s + n)
    }

    /// (start, size) of the cluster holding 1-based index j.
    pub fn cluster_of(&self, j: usize) -> Option<(usize, usize)> {
        self.cluster_index(j).map(|c| self.clusters[c])
    }

    /// Mean eigenvalue of the cluster holding j.
    pub fn cluster_value(&self, j: usize) -> f64 {
        let (s, n) = self.cluster_of(j).unwrap_or((j - 1, 1));
        self.values[s..s + n].iter().sum::<f64>() / n as f64
    }

    /// Eigenfunctions spanning the cluster of j.
    pub fn cluster_functions(&self, j: usize) -> Vec<MacroFunction> {
        let (s, n) = self.cluster_of(j).unwrap_or((j - 1, 1));
        (s..s + n).map(|k| self.eigenfunction(k + 1)).collect()
    }
}

fn cluster(values: &[f64], count: usize) -> (Vec<(usize, usize)>, Vec<Option<f64>>) {
    let mut clusters: Vec<(usize, usize)> = Vec::new();
    for k in 0..count {
        match clusters.last_mut() {
            Some((s, n)) if (values[k] - values[*s + *n - 1]).abs() <= CLUSTER_TOLERANCE * values[k].abs().max(1.0) => {
                *n += 1
            }
            _ => clusters.push((k, 1)),
        }
    }
    let c = clusters.len();
    let mean = |(s, n): (usize, usize)| values[s..s + n].iter().sum::<f64>() / n as f64;
    let gaps = (0..c)
        .map(|i| {
            if i + 1 >= c {
                return None;
            }
            let up = mean(clusters[i + 1]) - mean(clusters[i]);
            let down = if i > 0 { mean(clusters[i]) - mean(clusters[i - 1]) } else { f64::INFINITY };
            Some(up.min(down))
        })
        .collect();
    (clusters, gaps)
}

/// Dense symmetric eigensolve; keeps the lowest `count` as trusted.
pub fn eigensolve(l0: &DMatrix<f64>, basis: &MacroBasis, count: usize) -> Result<SpectrumResult> {
    let len = basis.len();
    if count > len / 4 {
        return Err(Error::TruncationUnsafe(format!("requested {count} eigenvalues from a basis of {len}")));
    }
    let eig = SymmetricEigen::new(l0.clone());
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let values: Vec<f64> = order.iter().map(|k| eig.eigenvalues[*k]).collect();
    let mut vectors = DMatrix::zeros(len, len);
    for (c, k) in order.iter().enumerate() {
        let mut v: DVector<f64> = eig.eigenvectors.column(*k).into_owned();
        let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if big < 0.0 {
            v = -v;
        }
        vectors.set_column(c, &v);
    }
    let mut max_residual: f64 = 0.0;
    for k in 0..count {
        let v = vectors.column(k);
        let r = l0 * v - v * values[k];
        max_residual = max_residual.max(r.norm() / values[k].abs().max(1.0));
    }
    let vt = vectors.columns(0, count);
    let gram = vt.transpose() * vt - DMatrix::identity(count, count);
    let orthonormality = gram.amax();
    let (clusters, gaps) = cluster(&values, count);
    Ok(SpectrumResult { basis: *basis, values, vectors, count, clusters, gaps, max_residual, orthonormality })
}

/// Eigensolve with a self-convergence check against a larger basis of
/// `check_n` modes per axis: trusted eigenvalues must agree to 1e-10.
pub fn eigensolve_checked(
    abar: &[Vec<f64>],
    w: &SlowPolynomial,
    basis: &MacroBasis,
    count: usize,
    check_n: Option<usize>,
) -> Result<SpectrumResult> {
    let spec = eigensolve(&assemble_l0(abar, w, basis)?, basis, count)?;
    if let Some(m) = check_n {
        let big = basis.with_size(m);
        let l = assemble_l0(abar, w, &big)?;
        let eig = SymmetricEigen::new(l);
        let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        for k in 0..count {
            let rel = (v[k] - spec.values[k]).abs() / spec.values[k].abs().max(1.0);
            if rel > 1e-10 {
                return Err(Error::TruncationUnsafe(format!(
                    "eigenvalue {} changes by {rel:e} between {} and {m} modes",
                    k + 1,
                    basis.n
                )));
            }
        }
    }
    Ok(spec)
}

/// Distance from the cluster of 1-based j to the nearest other cluster.
pub fn spectral_gap(spec: &SpectrumResult, j: usize) -> Result<f64> {
    let c = spec.cluster_index(j).ok_or(Error::GapUnresolved(j))?;
    spec.gaps[c].ok_or(Error::GapUnresolved(j))
}

/// Solves (L0 - lambda) u = f for lambda the cluster value of j, with f
/// orthogonal to the cluster; u is orthogonal to the cluster.
pub fn resolvent_solve(spec: &SpectrumResult, j: usize, f: &MacroFunction) -> Result<MacroFunction> {
    let (s, n) = spec.cluster_of(j).ok_or(Error::GapUnresolved(j))?;
    let lambda = spec.cluster_value(j);
    let fv = DVector::from_column_slice(&f.coeffs);
    let norm = fv.norm();
    if norm == 0.0 {
        return Ok(MacroFunction::zero(spec.basis));
    }
    let c = spec.vectors.transpose() * &fv;
    let proj: f64 = (s..s + n).map(|k| c[k] * c[k]).sum::<f64>().sqrt();
    if proj > 1e-10 * norm {
        return Err(Error::NotOrthogonal(proj / norm));
    }
    let mut weights = DVector::zeros(c.len());
    for k in 0..c.len() {
        if k < s || k >= s + n {
            weights[k] = c[k] / (spec.values[k] - lambda);
        }
    }
    let u = &spec.vectors * weights;
    Ok(MacroFunction { basis: spec.basis, coeffs: u.iter().copied().collect() })
}

/// Applies the Galerkin operator -div(abar grad) + W to f (exact in the padded space).
pub fn apply_l0(abar: &[Vec<f64>], w: &SlowPolynomial, f: &MacroFunction) -> Result<Padded> {
    let p = f.padded();
    let mut out = p.mul_poly(w)?;
    let d = f.basis.dim;
    for i in 0..d {
        for j in 0..d {
            if abar[i][j] != 0.0 {
                out.axpy(-abar[i][j], &p.deriv_multi(&MultiIndex::unit(d, i).add(&MultiIndex::unit(d, j))));
            }
        }
    }
    Ok(out)
}
