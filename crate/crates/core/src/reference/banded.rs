use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

/// Symmetric band matrix, lower storage: band[i * (bw + 1) + k] = A[i, i - k].
#[derive(Clone, Debug)]
pub struct BandMatrix {
    pub n: usize,
    pub bw: usize,
    pub band: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix { n, bw, band: vec![0.0; n * (bw + 1)] }
    }

    /// A[i, j] for |i - j| <= bw, i >= j.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.band[i * (self.bw + 1) + (i - j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw);
        self.band[i * (self.bw + 1) + (i - j)] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.band[i * (self.bw + 1) + (i - j)] += v;
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let w = self.bw + 1;
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.band[i * w..(i + 1) * w];
            y[i] += row[0] * x[i];
            for k in 1..w.min(i + 1) {
                let j = i - k;
                y[i] += row[k] * x[j];
                y[j] += row[k] * x[i];
            }
        }
        y
    }

    pub fn shifted(&self, sigma: f64) -> BandMatrix {
        let mut m = self.clone();
        for i in 0..self.n {
            m.band[i * (self.bw + 1)] -= sigma;
        }
        m
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in 0..=self.bw.min(i) {
                let v = self.at(i, i - k);
                m[(i, i - k)] = v;
                m[(i - k, i)] = v;
            }
        }
        m
    }
}

/// Band Cholesky factor L (same storage as BandMatrix).
#[derive(Clone, Debug)]
pub struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    /// Fails with None when a pivot is not positive.
    pub fn new(a: &BandMatrix) -> Option<Self> {
        let (n, bw) = (a.n, a.bw);
        let w = bw + 1;
        let mut l = a.clone();
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                // L[i, j] = (A[i, j] - sum_k L[i, k] L[j, k]) / L[j, j]
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = l.band[i * w + (i - j)];
                for k in k0..j {
                    s -= l.band[i * w + (i - k)] * l.band[j * w + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return None;
                    }
                    l.band[i * w] = s.sqrt();
                } else {
                    l.band[i * w + (i - j)] = s / l.band[j * w];
                }
            }
        }
        Some(BandCholesky { l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.l.n, self.l.bw);
        let w = bw + 1;
        let band = &self.l.band;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 1..w.min(i + 1) {
                s -= band[i * w + k] * y[i - k];
            }
            y[i] = s / band[i * w];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in 1..w.min(n - i) {
                s -= band[(i + k) * w + k] * y[i + k];
            }
            y[i] = s / band[i * w];
        }
        y
    }
}

/// Lowest `count` eigenpairs of a symmetric band matrix by Lanczos on
/// (A - sigma)^{-1} with full reorthogonalization. The shift is lowered until
/// A - sigma is positive definite.
pub fn lowest_eigenpairs(
    a: &BandMatrix,
    count: usize,
    sigma: f64,
    tol: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.n;
    if count == 0 || count > n {
        return Err(Error::ConvergenceFailure(format!("cannot take {count} eigenpairs of a {n}x{n} matrix")));
    }
    if n <= 400 {
        let eig = SymmetricEigen::new(a.to_dense());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
        let vals = order[..count].iter().map(|&k| eig.eigenvalues[k]).collect();
        let vecs = order[..count].iter().map(|&k| eig.eigenvectors.column(k).iter().copied().collect()).collect();
        return Ok((vals, vecs));
    }
    let mut sigma = sigma;
    let mut chol = None;
    for _ in 0..60 {
        if let Some(c) = BandCholesky::new(&a.shifted(sigma)) {
            chol = Some(c);
            break;
        }
        sigma -= sigma.abs().max(1.0);
    }
    let chol = chol.ok_or_else(|| Error::ConvergenceFailure("no positive definite shift found".into()))?;
    let max_m = (count * 8 + 80).min(n);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_m);
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    // deterministic start vector with content in every mode
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_75).fract()).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    basis.push(v);
    let mut m = 0;
    while m < max_m {
        let mut w = chol.solve(&basis[m]);
        let am = dot(&w, &basis[m]);
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        alpha.push(am);
        let b = norm(&w);
        m += 1;
        if m >= count + 2 && (m % 5 == 0 || b < 1e-14 || m == max_m) {
            let (theta, s) = tridiag_eigen(&alpha, &beta);
            let done = (0..count).all(|k| {
                let idx = m - 1 - k;
                (b * s[(m - 1, idx)]).abs() <= tol * theta[idx].abs()
            });
            if done || b < 1e-14 || m == max_m {
                if !done && b >= 1e-14 {
                    return Err(Error::ConvergenceFailure(format!("Lanczos did not converge in {m} steps")));
                }
                let mut vals = Vec::with_capacity(count);
                let mut vecs = Vec::with_capacity(count);
                for k in 0..count {
                    let idx = m - 1 - k;
                    let mut y = vec![0.0; n];
                    for (r, q) in basis.iter().take(m).enumerate() {
                        let c = s[(r, idx)];
                        y.iter_mut().zip(q).for_each(|(x, z)| *x += c * z);
                    }
                    let ny = norm(&y);
                    y.iter_mut().for_each(|x| *x /= ny);
                    vals.push(sigma + 1.0 / theta[idx]);
                    vecs.push(y);
                }
                return Ok((vals, vecs));
            }
        }
        beta.push(b);
        w.iter_mut().for_each(|x| *x /= b);
        basis.push(w);
    }
    Err(Error::ConvergenceFailure("Lanczos exhausted".into()))
}

/// Eigenvalues ascending and eigenvectors (columns) of the Lanczos tridiagonal.
fn tridiag_eigen(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = DMatrix::zeros(m, m);
    for (c, &k) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(k));
    }
    (vals, vecs)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> BandMatrix {
        let mut m = BandMatrix::zeros(n, 1);
        for i in 0..n {
            m.set(i, i, 2.0);
            if i > 0 {
                m.set(i, i - 1, -1.0);
            }
        }
        m
    }

    #[test]
    fn cholesky_solves() {
        let mut a = BandMatrix::zeros(6, 2);
        for i in 0..6 {
            a.set(i, i, 5.0 + i as f64);
            if i >= 1 {
                a.set(i, i - 1, -1.0);
            }
            if i >= 2 {
                a.set(i, i - 2, 0.5);
            }
        }
        let x: Vec<f64> = (0..6).map(|i| (i as f64).sin()).collect();
        let b = a.mul(&x);
        let y = BandCholesky::new(&a).unwrap().solve(&b);
        assert!(x.iter().zip(&y).all(|(p, q)| (p - q).abs() < 1e-13));
    }

    #[test]
    fn lanczos_finds_dirichlet_laplacian_modes() {
        let n = 2000;
        let (vals, vecs) = lowest_eigenpairs(&laplacian(n), 3, 0.0, 1e-13).unwrap();
        for (k, v) in vals.iter().enumerate() {
            let t = std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64;
            let exact = 2.0 - 2.0 * t.cos();
            assert!((v - exact).abs() < 1e-12 * exact.max(1e-3) + 1e-15, "{k}: {v} {exact}");
        }
        assert!(dot(&vecs[0], &vecs[1]).abs() < 1e-10);
    }
}
