//! Multi-indices and polynomials in the slow variable x.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Exponent vector; ordered by total degree, then lexicographically.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut v = vec![0; dim];
        v[axis] = 1;
        MultiIndex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn plus(&self, axis: usize) -> Self {
        let mut v = self.0.clone();
        v[axis] += 1;
        MultiIndex(v)
    }

    /// alpha - e_axis, or None if that component is zero.
    pub fn minus(&self, axis: usize) -> Option<Self> {
        if self.0[axis] == 0 {
            return None;
        }
        let mut v = self.0.clone();
        v[axis] -= 1;
        Some(MultiIndex(v))
    }

    pub fn add(&self, other: &Self) -> Self {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// All multi-indices of exactly the given order, in canonical order.
    pub fn of_order(dim: usize, order: u32) -> Vec<MultiIndex> {
        match dim {
            1 => vec![MultiIndex(vec![order])],
            2 => (0..=order).rev().map(|a| MultiIndex(vec![a, order - a])).collect(),
            _ => {
                let mut out = Vec::new();
                for first in (0..=order).rev() {
                    for rest in MultiIndex::of_order(dim - 1, order - first) {
                        let mut v = vec![first];
                        v.extend(rest.0);
                        out.push(MultiIndex(v));
                    }
                }
                out
            }
        }
    }

    /// All multi-indices with order at most `max`.
    pub fn up_to(dim: usize, max: u32) -> Vec<MultiIndex> {
        (0..=max).flat_map(|m| MultiIndex::of_order(dim, m)).collect()
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Default cap on polynomial degree.
pub const DEGREE_CAP: usize = 8;

/// Real polynomial in d variables, stored sparsely.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlowPolynomial {
    pub dim: usize,
    pub terms: BTreeMap<MultiIndex, f64>,
}

impl SlowPolynomial {
    pub fn zero(dim: usize) -> Self {
        SlowPolynomial { dim, terms: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = SlowPolynomial::zero(dim);
        p.add_term(MultiIndex::zero(dim), c);
        p
    }

    pub fn monomial(exps: &[u32], c: f64) -> Self {
        let mut p = SlowPolynomial::zero(exps.len());
        p.add_term(MultiIndex(exps.to_vec()), c);
        p
    }

    /// Sum of x_i^2.
    pub fn squared_norm(dim: usize) -> Self {
        let mut p = SlowPolynomial::zero(dim);
        for i in 0..dim {
            let mut e = vec![0; dim];
            e[i] = 2;
            p.add_term(MultiIndex(e), 1.0);
        }
        p
    }

    /// Quadratic form x^T q x.
    pub fn quadratic_form(q: &[Vec<f64>]) -> Self {
        let dim = q.len();
        let mut p = SlowPolynomial::zero(dim);
        for i in 0..dim {
            for j in 0..dim {
                let mut e = vec![0; dim];
                e[i] += 1;
                e[j] += 1;
                p.add_term(MultiIndex(e), q[i][j]);
            }
        }
        p
    }

    pub fn add_term(&mut self, exps: MultiIndex, c: f64) {
        assert_eq!(exps.dim(), self.dim);
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(exps).or_insert(0.0);
        *entry += c;
    }

    pub fn is_empty(&self) -> bool {
        self.terms.values().all(|c| *c == 0.0)
    }

    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .filter(|(_, c)| **c != 0.0)
            .map(|(e, _)| e.order() as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn coefficient(&self, exps: &[u32]) -> f64 {
        self.terms.get(&MultiIndex(exps.to_vec())).copied().unwrap_or(0.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut p = SlowPolynomial::zero(self.dim);
        for (e, c) in &self.terms {
            p.add_term(e.clone(), c * s);
        }
        p
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut p = self.clone();
        p.add_assign(other);
        p
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (e, c) in &other.terms {
            self.add_term(e.clone(), *c);
        }
    }

    pub fn axpy(&mut self, s: f64, other: &Self) {
        for (e, c) in &other.terms {
            self.add_term(e.clone(), s * c);
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut p = SlowPolynomial::zero(self.dim);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                p.add_term(e1.add(e2), c1 * c2);
            }
        }
        p
    }

    pub fn derivative(&self, axis: usize) -> Self {
        let mut p = SlowPolynomial::zero(self.dim);
        for (e, c) in &self.terms {
            if let Some(lower) = e.minus(axis) {
                p.add_term(lower, c * e.0[axis] as f64);
            }
        }
        p
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.0.iter().zip(x).map(|(k, xi)| xi.powi(*k as i32)).product::<f64>())
            .sum()
    }

    /// Drop coefficients with magnitude below `tol`.
    pub fn pruned(&self, tol: f64) -> Self {
        let mut p = SlowPolynomial::zero(self.dim);
        for (e, c) in &self.terms {
            if c.abs() > tol {
                p.add_term(e.clone(), *c);
            }
        }
        p
    }

    /// Homogeneous part of the given degree.
    pub fn homogeneous_part(&self, degree: u32) -> Self {
        let mut p = SlowPolynomial::zero(self.dim);
        for (e, c) in &self.terms {
            if e.order() == degree {
                p.add_term(e.clone(), *c);
            }
        }
        p
    }

    /// Symmetric matrix of the degree-two part.
    pub fn quadratic_matrix(&self) -> Vec<Vec<f64>> {
        let d = self.dim;
        let mut q = vec![vec![0.0; d]; d];
        for (e, c) in &self.terms {
            if e.order() != 2 {
                continue;
            }
            let idx: Vec<usize> = (0..d).flat_map(|i| std::iter::repeat(i).take(e.0[i] as usize)).collect();
            let (i, j) = (idx[0], idx[1]);
            if i == j {
                q[i][i] += c;
            } else {
                q[i][j] += c / 2.0;
                q[j][i] += c / 2.0;
            }
        }
        q
    }

    /// True when some monomial involves more than one variable.
    pub fn has_mixed_terms(&self) -> bool {
        self.terms
            .iter()
            .any(|(e, c)| *c != 0.0 && e.0.iter().filter(|k| **k > 0).count() > 1)
    }

    /// Restriction to monomials in x_axis only (constant term excluded unless `keep_constant`).
    pub fn axis_part(&self, axis: usize, keep_constant: bool) -> Vec<(u32, f64)> {
        self.terms
            .iter()
            .filter(|(e, c)| {
                **c != 0.0
                    && e.0.iter().enumerate().all(|(i, k)| i == axis || *k == 0)
                    && (keep_constant || e.order() > 0)
            })
            .map(|(e, c)| (e.0[axis], *c))
            .collect()
    }
}

impl fmt::Display for SlowPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .filter(|(_, c)| **c != 0.0)
            .map(|(e, c)| {
                let vars: Vec<String> = e
                    .0
                    .iter()
                    .enumerate()
                    .filter(|(_, k)| **k > 0)
                    .map(|(i, k)| if *k == 1 { format!("x{}", i + 1) } else { format!("x{}^{}", i + 1, k) })
                    .collect();
                if vars.is_empty() {
                    format!("{c}")
                } else {
                    format!("{c}*{}", vars.join("*"))
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(MultiIndex::up_to(2, 2).len(), 6);
        assert_eq!(MultiIndex::up_to(1, 3).len(), 4);
        let o = MultiIndex::of_order(2, 3);
        assert_eq!(o[0], MultiIndex(vec![3, 0]));
        assert_eq!(o[3], MultiIndex(vec![0, 3]));
    }

    #[test]
    fn product_and_derivative() {
        let p = SlowPolynomial::squared_norm(2);
        let q = p.mul(&p);
        assert_eq!(q.coefficient(&[2, 2]), 2.0);
        assert_eq!(q.derivative(0).coefficient(&[1, 2]), 4.0);
        assert!((q.eval(&[1.0, 2.0]) - 25.0).abs() < 1e-14);
    }

    #[test]
    fn quadratic_matrix_roundtrip() {
        let q = vec![vec![2.0, 0.5], vec![0.5, 1.0]];
        let p = SlowPolynomial::quadratic_form(&q);
        assert_eq!(p.quadratic_matrix(), q);
    }
}
