//! FFT plumbing for uniform periodic grids in one or two dimensions.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Signed wavenumber of storage index `i` on an `n`-point axis.
/// The Nyquist index maps to +n/2.
#[inline]
pub fn wavenumber(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[inline]
pub fn is_nyquist(i: usize, n: usize) -> bool {
    n % 2 == 0 && i == n / 2
}

fn transform(dim: usize, n: usize, buf: &mut [Complex64], inverse: bool) {
    let fft = plan(n, inverse);
    match dim {
        1 => fft.process(buf),
        2 => {
            fft.process(buf);
            let mut t = transpose(buf, n);
            fft.process(&mut t);
            let back = transpose(&t, n);
            buf.copy_from_slice(&back);
        }
        _ => unreachable!("dimension checked at grid construction"),
    }
}

fn transpose(buf: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); buf.len()];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = buf[i * n + j];
        }
    }
    out
}

/// Fourier coefficients c_k with f(y) = sum_k c_k exp(2 pi i k.y).
pub fn forward(dim: usize, n: usize, values: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    transform(dim, n, &mut buf, false);
    let scale = 1.0 / values.len() as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

/// Grid values from Fourier coefficients (real part).
pub fn inverse(dim: usize, n: usize, coeffs: &[Complex64]) -> Vec<f64> {
    let mut buf = coeffs.to_vec();
    transform(dim, n, &mut buf, true);
    buf.iter().map(|c| c.re).collect()
}

/// Wavenumber vector of flat storage index `idx`.
#[inline]
pub fn wavevector(dim: usize, n: usize, idx: usize) -> [i64; 2] {
    match dim {
        1 => [wavenumber(idx, n), 0],
        _ => [wavenumber(idx / n, n), wavenumber(idx % n, n)],
    }
}

#[inline]
pub fn touches_nyquist(dim: usize, n: usize, idx: usize) -> bool {
    match dim {
        1 => is_nyquist(idx, n),
        _ => is_nyquist(idx / n, n) || is_nyquist(idx % n, n),
    }
}

/// Spectral derivative along `axis`; Nyquist content is discarded.
pub fn derivative(dim: usize, n: usize, values: &[f64], axis: usize) -> Vec<f64> {
    let mut c = forward(dim, n, values);
    for (idx, ck) in c.iter_mut().enumerate() {
        if touches_nyquist(dim, n, idx) {
            *ck = Complex64::new(0.0, 0.0);
            continue;
        }
        let k = wavevector(dim, n, idx)[axis] as f64;
        *ck *= Complex64::new(0.0, 2.0 * PI * k);
    }
    inverse(dim, n, &c)
}

/// Coefficients on an m-point grid carrying the non-Nyquist modes of an n-point grid.
pub fn pad(dim: usize, n: usize, m: usize, c: &[Complex64]) -> Vec<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    let mut out = vec![zero; m.pow(dim as u32)];
    let map = |i: usize| -> usize {
        let k = wavenumber(i, n);
        if k >= 0 {
            k as usize
        } else {
            (m as i64 + k) as usize
        }
    };
    match dim {
        1 => {
            for i in 0..n {
                if !is_nyquist(i, n) {
                    out[map(i)] = c[i];
                }
            }
        }
        _ => {
            for i in 0..n {
                for j in 0..n {
                    if !is_nyquist(i, n) && !is_nyquist(j, n) {
                        out[map(i) * m + map(j)] = c[i * n + j];
                    }
                }
            }
        }
    }
    out
}

/// Inverse of [`pad`]: keep the modes |k| < n/2.
pub fn truncate(dim: usize, n: usize, m: usize, c: &[Complex64]) -> Vec<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    let mut out = vec![zero; n.pow(dim as u32)];
    let map = |i: usize| -> usize {
        let k = wavenumber(i, n);
        if k >= 0 {
            k as usize
        } else {
            (m as i64 + k) as usize
        }
    };
    match dim {
        1 => {
            for i in 0..n {
                if !is_nyquist(i, n) {
                    out[i] = c[map(i)];
                }
            }
        }
        _ => {
            for i in 0..n {
                for j in 0..n {
                    if !is_nyquist(i, n) && !is_nyquist(j, n) {
                        out[i * n + j] = c[map(i) * m + map(j)];
                    }
                }
            }
        }
    }
    out
}

/// Padded grid size for the 3/2 rule (kept even).
pub fn padded_size(n: usize) -> usize {
    let m = (3 * n).div_ceil(2);
    m + m % 2
}

/// Product of two grid functions, computed on a 3/2-padded grid and
/// projected back onto the modes |k| < n/2.
pub fn dealiased_product(dim: usize, n: usize, f: &[f64], g: &[f64]) -> Vec<f64> {
    let m = padded_size(n);
    let fp = inverse(dim, m, &pad(dim, n, m, &forward(dim, n, f)));
    let gp = inverse(dim, m, &pad(dim, n, m, &forward(dim, n, g)));
    let prod: Vec<f64> = fp.iter().zip(&gp).map(|(a, b)| a * b).collect();
    inverse(dim, n, &truncate(dim, n, m, &forward(dim, m, &prod)))
}

/// Evaluates a trigonometric interpolant at scattered points.
#[derive(Clone, Debug)]
pub struct Interpolant {
    dim: usize,
    /// (wavevector, coefficient) pairs with non-negligible coefficients.
    modes: Vec<([i64; 2], Complex64)>,
    /// Per-axis coefficient matrix for tensor evaluation (2D only).
    n: usize,
    coeffs: Vec<Complex64>,
}

impl Interpolant {
    pub fn new(dim: usize, n: usize, values: &[f64]) -> Self {
        let coeffs = forward(dim, n, values);
        let mut modes = Vec::new();
        for (idx, c) in coeffs.iter().enumerate() {
            if touches_nyquist(dim, n, idx) || c.norm() == 0.0 {
                continue;
            }
            modes.push((wavevector(dim, n, idx), *c));
        }
        Interpolant { dim, modes, n, coeffs }
    }

    /// Value at a point of R^d (periodic extension).
    pub fn eval(&self, y: &[f64]) -> f64 {
        let mut s = 0.0;
        for (k, c) in &self.modes {
            let mut phase = k[0] as f64 * y[0];
            if self.dim == 2 {
                phase += k[1] as f64 * y[1];
            }
            let phase = 2.0 * PI * phase.rem_euclid(1.0);
            s += c.re * phase.cos() - c.im * phase.sin();
        }
        s
    }

    /// Values at 1D points; uses phase recurrences per point.
    pub fn eval_line(&self, ys: &[f64]) -> Vec<f64> {
        assert_eq!(self.dim, 1);
        let kmax = self.n / 2;
        // c_k for k in -(kmax-1)..=(kmax-1)
        let n = self.n;
        ys.iter()
            .map(|y| {
                let theta = 2.0 * PI * y.rem_euclid(1.0);
                let z = Complex64::new(theta.cos(), theta.sin());
                let mut zk = Complex64::new(1.0, 0.0);
                let mut s = self.coeffs[0].re;
                for k in 1..kmax {
                    zk *= z;
                    if k % 64 == 0 {
                        let t = theta * k as f64;
                        zk = Complex64::new(t.cos(), t.sin());
                    }
                    let cp = self.coeffs[k];
                    let cm = self.coeffs[n - k];
                    s += (cp * zk).re + (cm * zk.conj()).re;
                }
                s
            })
            .collect()
    }

    /// Values on the tensor grid ys1 x ys2 (row-major in ys1).
    pub fn eval_tensor(&self, ys1: &[f64], ys2: &[f64]) -> Vec<f64> {
        assert_eq!(self.dim, 2);
        let n = self.n;
        let basis = |ys: &[f64]| -> Vec<Complex64> {
            let mut e = vec![Complex64::new(0.0, 0.0); ys.len() * n];
            for (p, y) in ys.iter().enumerate() {
                for i in 0..n {
                    if is_nyquist(i, n) {
                        continue;
                    }
                    let t = 2.0 * PI * (wavenumber(i, n) as f64 * y).rem_euclid(1.0);
                    e[p * n + i] = Complex64::new(t.cos(), t.sin());
                }
            }
            e
        };
        let e1 = basis(ys1);
        let e2 = basis(ys2);
        // T[i, q] = sum_j c[i, j] e2[q, j]
        let m2 = ys2.len();
        let mut t = vec![Complex64::new(0.0, 0.0); n * m2];
        for i in 0..n {
            for q in 0..m2 {
                let mut s = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    s += self.coeffs[i * n + j] * e2[q * n + j];
                }
                t[i * m2 + q] = s;
            }
        }
        let mut out = vec![0.0; ys1.len() * m2];
        for (p, row) in out.chunks_mut(m2).enumerate() {
            for (q, v) in row.iter_mut().enumerate() {
                let mut s = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    s += e1[p * n + i] * t[i * m2 + q];
                }
                *v = s.re;
            }
        }
        out
    }
}
