use super::separable::SeparableField;
use crate::error::{Error, Result};
use crate::poly::{MultiIndex, SlowPolynomial};
use crate::torus::{solve_cell_with, CellSolverOptions, CoefficientField, PeriodicField};
use rayon::prelude::*;
use std::collections::BTreeMap;

/// One stored corrector chi_{n,alpha} with its flux and averaged flux.
#[derive(Clone, Debug)]
pub struct CorrectorEntry {
    pub chi: SeparableField,
    /// F = a grad_y chi + G.
    pub flux: SeparableField,
    /// <F>, one slow polynomial per component.
    pub abar: Vec<SlowPolynomial>,
    /// Largest relative cell residual over the solved monomials.
    pub residual: f64,
    /// Largest |<chi(x, .)>| over terms, weighted by the slow coefficient.
    pub mean: f64,
    pub solves: usize,
}

/// Right-hand side of the cell problem for (n, alpha):
/// -div_y a grad_y chi = div_y G + H.
#[derive(Clone, Debug)]
pub struct CellRhs {
    pub g: SeparableField,
    pub h: SeparableField,
}

/// Correctors chi_{n,alpha}(x, y) of the two-scale ansatz
/// u = sum_n eps^n sum_alpha chi_{n,alpha}(x, x/eps) d^alpha V(x),
/// with chi_{0,0} = 1 and chi_{n,alpha} = 0 for |alpha| > n.
///
/// The table depends on the eigenvalue corrections through mu[0..n-2];
/// `mu` holds those that were used.
#[derive(Clone, Debug)]
pub struct CorrectorTable {
    pub a: CoefficientField,
    pub w: SlowPolynomial,
    pub mu: Vec<f64>,
    pub entries: BTreeMap<(usize, MultiIndex), CorrectorEntry>,
    pub levels: usize,
    pub options: CellSolverOptions,
}

impl CorrectorTable {
    /// Level 0: chi_{0,0} = 1.
    pub fn new(a: &CoefficientField, w: &SlowPolynomial, mu0: f64, options: CellSolverOptions) -> Self {
        let grid = a.grid();
        let d = a.dim();
        let mut entries = BTreeMap::new();
        entries.insert(
            (0, MultiIndex::zero(d)),
            CorrectorEntry {
                chi: SeparableField::constant_one(grid),
                flux: SeparableField::zero(grid, 1),
                abar: vec![SlowPolynomial::zero(d); d],
                residual: 0.0,
                mean: 0.0,
                solves: 0,
            },
        );
        CorrectorTable { a: a.clone(), w: w.clone(), mu: vec![mu0], entries, levels: 1, options }
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn get(&self, n: usize, alpha: &MultiIndex) -> Option<&CorrectorEntry> {
        self.entries.get(&(n, alpha.clone()))
    }

    fn chi(&self, n: isize, alpha: Option<&MultiIndex>) -> Option<&SeparableField> {
        if n < 0 {
            return None;
        }
        alpha.and_then(|al| self.get(n as usize, al)).map(|e| &e.chi)
    }

    fn flux(&self, n: isize, alpha: Option<&MultiIndex>) -> Option<&SeparableField> {
        if n < 0 {
            return None;
        }
        alpha.and_then(|al| self.get(n as usize, al)).map(|e| &e.flux)
    }

    /// Assembles G_{n,alpha} and H_{n,alpha}:
    /// G = a grad_x chi_{n-1,alpha} + sum_j a e_j chi_{n-1,alpha-e_j},
    /// H = div_x F°_{n-1,alpha} + sum_i (F°_{n-1,alpha-e_i})_i
    ///     - (W - mu_0) chi°_{n-2,alpha} + sum_{j>=1} mu_j chi°_{n-2-j,alpha}.
    pub fn rhs(&self, n: usize, alpha: &MultiIndex) -> Result<CellRhs> {
        let d = self.dim();
        let grid = self.a.grid();
        let n = n as isize;
        let cols: Vec<PeriodicField> =
            (0..d).map(|j| PeriodicField::vector(grid, (0..d).map(|i| self.a.a.entry(i, j).to_vec()).collect())).collect();
        let mut g = SeparableField::zero(grid, 1);
        if let Some(chi) = self.chi(n - 1, Some(alpha)) {
            for (p, s) in &chi.terms {
                for (j, col) in cols.iter().enumerate() {
                    let dp = p.derivative(j);
                    if !dp.is_empty() {
                        g.push(dp, s.multiply(col, self.options.dealias)?);
                    }
                }
            }
        }
        for (j, col) in cols.iter().enumerate() {
            if let Some(chi) = self.chi(n - 1, alpha.minus(j).as_ref()) {
                for (p, s) in &chi.terms {
                    g.push(p.clone(), s.multiply(col, self.options.dealias)?);
                }
            }
        }
        let mut h = SeparableField::zero(grid, 0);
        if let Some(f) = self.flux(n - 1, Some(alpha)) {
            let f = f.mean_zero_part();
            for (p, s) in &f.terms {
                for i in 0..d {
                    let dp = p.derivative(i);
                    if !dp.is_empty() {
                        h.push(dp, s.component_field(i));
                    }
                }
            }
        }
        for i in 0..d {
            if let Some(f) = self.flux(n - 1, alpha.minus(i).as_ref()) {
                h.extend(f.mean_zero_part().component(i));
            }
        }
        if let Some(chi) = self.chi(n - 2, Some(alpha)) {
            let shifted = self.w.add(&SlowPolynomial::constant(d, -self.mu[0]));
            h.extend(chi.mean_zero_part().scale_by(&shifted.scale(-1.0)));
        }
        for j in 1..self.mu.len() {
            if let Some(chi) = self.chi(n - 2 - j as isize, Some(alpha)) {
                if self.mu[j] != 0.0 {
                    h.extend(chi.mean_zero_part().scale_by(&SlowPolynomial::constant(d, self.mu[j])));
                }
            }
        }
        Ok(CellRhs { g, h })
    }

    /// Solves one entry from its right-hand side, monomial by monomial.
    fn solve_entry(&self, n: usize, alpha: &MultiIndex) -> Result<CorrectorEntry> {
        let grid = self.a.grid();
        let rhs = self.rhs(n, alpha)?;
        let gm = rhs.g.by_monomial();
        let hm = rhs.h.by_monomial();
        let mut keys: Vec<MultiIndex> = gm.keys().chain(hm.keys()).cloned().collect();
        keys.sort();
        keys.dedup();
        let scale = rhs.g.size() + rhs.h.size();
        let mut chi = SeparableField::zero(grid, 0);
        let mut residual: f64 = 0.0;
        let mut solves = 0;
        for key in &keys {
            let gf = gm.get(key);
            let hf = hm.get(key);
            if let Some(hf) = hf {
                let m = hf.mean()[0];
                if m.abs() > 1e-10 * scale.max(1.0) {
                    return Err(Error::MeanNotZero { level: n, alpha: alpha.0.clone(), mean: m });
                }
            }
            let (u, rep) = solve_cell_with(&self.a, gf, hf, &self.options)?;
            residual = residual.max(rep.residual);
            solves += 1;
            chi.push(SlowPolynomial::monomial(&key.0, 1.0), u);
        }
        chi.canonicalize();
        let mut flux = SeparableField::zero(grid, 1);
        for (p, s) in &chi.terms {
            flux.push(p.clone(), self.a.a.mat_vec(&s.grad(), self.options.dealias)?);
        }
        flux.extend(rhs.g);
        flux.canonicalize();
        let abar = flux.mean();
        let mean = chi.mean_defect();
        Ok(CorrectorEntry { chi, flux, abar, residual, mean, solves })
    }

    /// Adds levels until `levels` exist (levels 0..levels-1). Level n uses
    /// mu_0..mu_{n-2}, which must already be in `self.mu`.
    pub fn extend_to(&mut self, levels: usize) -> Result<()> {
        let d = self.dim();
        while self.levels < levels {
            let n = self.levels;
            if n >= 2 && self.mu.len() < n - 1 {
                return Err(Error::Unsupported(format!("level {n} needs mu_0..mu_{}", n - 2)));
            }
            let alphas = MultiIndex::up_to(d, n as u32);
            let solved: Vec<Result<CorrectorEntry>> = alphas.par_iter().map(|al| self.solve_entry(n, al)).collect();
            for (al, e) in alphas.into_iter().zip(solved) {
                self.entries.insert((n, al), e?);
            }
            self.levels += 1;
        }
        Ok(())
    }

    /// Averaged fluxes abar_{n,alpha} for all alpha at level n.
    pub fn tensors(&self, n: usize) -> Vec<(MultiIndex, Vec<SlowPolynomial>)> {
        self.entries
            .iter()
            .filter(|((m, _), _)| *m == n)
            .map(|((_, al), e)| (al.clone(), e.abar.clone()))
            .collect()
    }

    /// Largest cell residual and mean defect over all entries.
    pub fn diagnostics(&self) -> (f64, f64) {
        self.entries.values().fold((0.0f64, 0.0f64), |(r, m), e| (r.max(e.residual), m.max(e.mean)))
    }

    /// Largest corrector size over levels >= 1.
    pub fn max_corrector(&self) -> f64 {
        self.entries.iter().filter(|((n, _), _)| *n >= 1).map(|(_, e)| e.chi.size()).fold(0.0, f64::max)
    }

    /// Tensors abar_{3,alpha} computed without the level-3 cell solves:
    /// abar e_i = -<chi1_i H> + <grad chi1_i . G> + <G_i>, from
    /// <e_i . a grad chi> = -<a grad chi1_i . grad chi> = <chi1_i div a grad chi>.
    pub fn adjoint_tensors(&self, n: usize) -> Result<Vec<(MultiIndex, Vec<SlowPolynomial>)>> {
        let d = self.dim();
        let chi1: Vec<PeriodicField> = (0..d)
            .map(|i| {
                let e = self.get(1, &MultiIndex::unit(d, i)).expect("level 1 built");
                let mut f = PeriodicField::zeros(self.a.grid(), 0);
                for (p, s) in &e.chi.terms {
                    f = f.axpy(p.coefficient(&vec![0; d]), s).expect("same grid");
                }
                f
            })
            .collect();
        let mut out = Vec::new();
        for al in MultiIndex::up_to(d, n as u32) {
            let rhs = self.rhs(n, &al)?;
            let mut comps = Vec::with_capacity(d);
            for (i, c1) in chi1.iter().enumerate() {
                let mut t = rhs.h.pair_with(c1).scale(-1.0);
                t.add_assign(&rhs.g.pair_with(&c1.grad()));
                for (p, s) in &rhs.g.terms {
                    t.axpy(s.mean()[i], p);
                }
                comps.push(t.pruned(0.0));
            }
            out.push((al, comps));
        }
        Ok(out)
    }
}
