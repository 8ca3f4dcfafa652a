use crate::poly::{MultiIndex, SlowPolynomial};
use crate::torus::{PeriodicField, TorusGrid};
use std::collections::BTreeMap;

/// Terms below this size are dropped during canonicalization.
pub const DROP_TOLERANCE: f64 = 1e-13;

/// A field chi(x, y) = sum_t coef_t(x) shape_t(y), slow polynomial times
/// periodic shape. Shapes may be scalar or vector valued.
#[derive(Clone, Debug)]
pub struct SeparableField {
    pub grid: TorusGrid,
    pub rank: usize,
    pub terms: Vec<(SlowPolynomial, PeriodicField)>,
}

impl SeparableField {
    pub fn zero(grid: TorusGrid, rank: usize) -> Self {
        SeparableField { grid, rank, terms: Vec::new() }
    }

    pub fn constant_one(grid: TorusGrid) -> Self {
        let d = grid.dim;
        SeparableField { grid, rank: 0, terms: vec![(SlowPolynomial::constant(d, 1.0), PeriodicField::constant(grid, 1.0))] }
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn push(&mut self, coef: SlowPolynomial, shape: PeriodicField) {
        debug_assert_eq!(shape.rank, self.rank);
        if !coef.is_empty() {
            self.terms.push((coef, shape));
        }
    }

    pub fn extend(&mut self, other: SeparableField) {
        self.terms.extend(other.terms);
    }

    /// Regroups by monomial: chi = sum_beta x^beta F_beta(y).
    pub fn by_monomial(&self) -> BTreeMap<MultiIndex, PeriodicField> {
        let mut out: BTreeMap<MultiIndex, PeriodicField> = BTreeMap::new();
        for (p, s) in &self.terms {
            for (e, c) in &p.terms {
                match out.get_mut(e) {
                    Some(f) => {
                        for (dst, src) in f.data.iter_mut().zip(&s.data) {
                            dst.iter_mut().zip(src).for_each(|(a, b)| *a += c * b);
                        }
                    }
                    None => {
                        out.insert(e.clone(), s.scale(*c));
                    }
                }
            }
        }
        out
    }

    /// Modified Gram-Schmidt (two passes) on the shapes; coefficients are
    /// transformed so the represented field is unchanged. Dependent shapes and
    /// terms of size below DROP_TOLERANCE are dropped.
    pub fn canonicalize(&mut self) {
        let mut basis: Vec<PeriodicField> = Vec::new();
        let mut coefs: Vec<SlowPolynomial> = Vec::new();
        for (p, s) in self.terms.drain(..) {
            let size = s.l2_norm();
            if size == 0.0 || size * p.max_abs() < DROP_TOLERANCE {
                continue;
            }
            let mut v = s;
            for _ in 0..2 {
                for (q, c) in basis.iter().zip(coefs.iter_mut()) {
                    let h = q.inner(&v);
                    if h != 0.0 {
                        v = v.axpy(-h, q).expect("same grid");
                        c.axpy(h, &p);
                    }
                }
            }
            let rest = v.l2_norm();
            if rest > DROP_TOLERANCE * size && rest * p.max_abs() > DROP_TOLERANCE {
                basis.push(v.scale(1.0 / rest));
                coefs.push(p.scale(rest));
            }
        }
        self.terms = coefs
            .into_iter()
            .zip(basis)
            .filter_map(|(c, q)| {
                let c = c.pruned(DROP_TOLERANCE);
                (!c.is_empty()).then_some((c, q))
            })
            .collect();
    }

    /// y-mean, one slow polynomial per component.
    pub fn mean(&self) -> Vec<SlowPolynomial> {
        let comps = if self.rank == 0 { 1 } else { self.dim() };
        let mut out = vec![SlowPolynomial::zero(self.dim()); comps];
        for (p, s) in &self.terms {
            for (c, m) in s.mean().iter().enumerate() {
                if *m != 0.0 {
                    out[c].axpy(*m, p);
                }
            }
        }
        out.into_iter().map(|p| p.pruned(0.0)).collect()
    }

    pub fn mean_zero_part(&self) -> SeparableField {
        let terms = self.terms.iter().map(|(p, s)| (p.clone(), s.mean_zero_part())).collect();
        SeparableField { grid: self.grid, rank: self.rank, terms }
    }

    /// Largest |<shape_t>| max|coef_t| over terms.
    pub fn mean_defect(&self) -> f64 {
        self.terms
            .iter()
            .map(|(p, s)| s.mean().iter().fold(0.0f64, |m, v| m.max(v.abs())) * p.max_abs())
            .fold(0.0, f64::max)
    }

    /// Partial derivative in the slow variable.
    pub fn x_derivative(&self, axis: usize) -> SeparableField {
        let mut out = SeparableField::zero(self.grid, self.rank);
        for (p, s) in &self.terms {
            let dp = p.derivative(axis);
            if !dp.is_empty() {
                out.terms.push((dp, s.clone()));
            }
        }
        out
    }

    /// Component i of a vector field, as a scalar field.
    pub fn component(&self, i: usize) -> SeparableField {
        assert_eq!(self.rank, 1);
        let terms = self.terms.iter().map(|(p, s)| (p.clone(), s.component_field(i))).collect();
        SeparableField { grid: self.grid, rank: 0, terms }
    }

    pub fn scale_by(&self, poly: &SlowPolynomial) -> SeparableField {
        let terms = self.terms.iter().map(|(p, s)| (p.mul(poly), s.clone())).filter(|(p, _)| !p.is_empty()).collect();
        SeparableField { grid: self.grid, rank: self.rank, terms }
    }

    /// Rough size: sum_t max|coef_t| * |shape_t|_2.
    pub fn size(&self) -> f64 {
        self.terms.iter().map(|(p, s)| p.max_abs() * s.l2_norm()).sum()
    }

    /// Value (component `c`) at slow point x and fast point y.
    pub fn eval(&self, c: usize, x: &[f64], y: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(p, s)| p.eval(x) * s.interpolant(c).eval(y))
            .sum()
    }

    /// L2(T^d) inner product of every term's shape against a periodic field,
    /// summed as a polynomial in x.
    pub fn pair_with(&self, f: &PeriodicField) -> SlowPolynomial {
        let mut out = SlowPolynomial::zero(self.dim());
        for (p, s) in &self.terms {
            out.axpy(s.inner(f), p);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn canonical_form_merges_parallel_shapes() {
        let g = TorusGrid::new(1, 16).unwrap();
        let s = PeriodicField::from_fn(g, |y| (2.0 * PI * y[0]).sin());
        let mut f = SeparableField::zero(g, 0);
        f.push(SlowPolynomial::monomial(&[2], 1.0), s.clone());
        f.push(SlowPolynomial::constant(1, -3.0), s.scale(2.0));
        f.push(SlowPolynomial::constant(1, 5.0), PeriodicField::zeros(g, 0));
        let x = [0.7];
        let before = f.eval(0, &x, &[0.3]);
        f.canonicalize();
        assert_eq!(f.terms.len(), 1);
        assert!((f.eval(0, &x, &[0.3]) - before).abs() < 1e-13);
        assert!((f.terms[0].1.l2_norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn monomial_regrouping_preserves_values() {
        let g = TorusGrid::new(2, 8).unwrap();
        let s1 = PeriodicField::from_fn(g, |y| (2.0 * PI * y[0]).cos());
        let s2 = PeriodicField::from_fn(g, |y| (2.0 * PI * y[1]).sin());
        let mut f = SeparableField::zero(g, 0);
        f.push(SlowPolynomial::squared_norm(2), s1);
        f.push(SlowPolynomial::monomial(&[0, 2], 2.0), s2);
        let m = f.by_monomial();
        assert_eq!(m.len(), 2);
        let y = [0.125, 0.25];
        let x = [0.4, -1.1];
        let direct = f.eval(0, &x, &y);
        let regrouped: f64 = m
            .iter()
            .map(|(e, s)| SlowPolynomial::monomial(&e.0, 1.0).eval(&x) * s.interpolant(0).eval(&y))
            .sum();
        assert!((direct - regrouped).abs() < 1e-13);
    }
}
