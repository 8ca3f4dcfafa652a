use super::banded::{dot, lowest_eigenpairs, BandMatrix};
use crate::error::{Error, Result};
use crate::poly::SlowPolynomial;
use crate::torus::spectral::Interpolant;
use crate::torus::CoefficientField;
use rayon::prelude::*;

/// 8-point Gauss-Legendre nodes and weights on [-1, 1].
const GAUSS_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GAUSS_W: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Uniform Dirichlet grid on [-R, R]^d.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FineGrid {
    pub dim: usize,
    pub radius: f64,
    pub h: f64,
    /// Number of cells per axis; interior nodes per axis = cells - 1.
    pub cells: usize,
}

impl FineGrid {
    /// Grid with spacing close to `h` and exactly 2R/h cells (even).
    pub fn new(dim: usize, radius: f64, h: f64) -> Self {
        let half = (radius / h).round().max(2.0) as usize;
        let cells = 2 * half;
        FineGrid { dim, radius: half as f64 * h, h, cells }
    }

    pub fn halved(&self) -> Self {
        FineGrid { dim: self.dim, radius: self.radius, h: self.h / 2.0, cells: self.cells * 2 }
    }

    pub fn interior(&self) -> usize {
        self.cells - 1
    }

    pub fn unknowns(&self) -> usize {
        self.interior().pow(self.dim as u32)
    }

    /// All nodes of one axis, boundary included.
    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.cells).map(|i| -self.radius + i as f64 * self.h).collect()
    }

    pub fn interior_nodes(&self) -> Vec<f64> {
        (1..self.cells).map(|i| -self.radius + i as f64 * self.h).collect()
    }
}

/// Harmonic mean of a(x / eps) over [x0, x0 + h] by Gauss-Legendre.
fn harmonic_cell(a: &dyn Fn(f64) -> f64, x0: f64, h: f64) -> f64 {
    let inv: f64 = GAUSS_X
        .iter()
        .zip(GAUSS_W.iter())
        .map(|(x, w)| w / a(x0 + 0.5 * h * (x + 1.0)))
        .sum::<f64>()
        / 2.0;
    1.0 / inv
}

/// Three-point discretization of -(a u')' + V u on one axis.
#[derive(Clone, Debug)]
pub struct Axis1D {
    pub grid: FineGrid,
    /// Harmonic cell coefficients, one per cell.
    pub cell_a: Vec<f64>,
    /// Potential at interior nodes.
    pub potential: Vec<f64>,
}

impl Axis1D {
    pub fn new(grid: FineGrid, a: &dyn Fn(f64) -> f64, potential: &dyn Fn(f64) -> f64) -> Self {
        let nodes = grid.nodes();
        let cell_a = (0..grid.cells).map(|c| harmonic_cell(a, nodes[c], grid.h)).collect();
        let potential = grid.interior_nodes().iter().map(|x| potential(*x)).collect();
        Axis1D { grid, cell_a, potential }
    }

    pub fn matrix(&self) -> BandMatrix {
        let n = self.grid.interior();
        let h2 = self.grid.h * self.grid.h;
        let mut m = BandMatrix::zeros(n, 1);
        for i in 0..n {
            m.set(i, i, (self.cell_a[i] + self.cell_a[i + 1]) / h2 + self.potential[i]);
            if i > 0 {
                m.set(i, i - 1, -self.cell_a[i] / h2);
            }
        }
        m
    }

    /// Energy-form Rayleigh quotient: sums of nonnegative terms only.
    pub fn rayleigh(&self, u: &[f64]) -> f64 {
        let h2 = self.grid.h * self.grid.h;
        let n = u.len();
        let mut e = 0.0;
        for c in 0..=n {
            let left = if c == 0 { 0.0 } else { u[c - 1] };
            let right = if c == n { 0.0 } else { u[c] };
            e += self.cell_a[c] * (right - left).powi(2) / h2;
        }
        e += u.iter().zip(&self.potential).map(|(x, v)| v * x * x).sum::<f64>();
        e / dot(u, u)
    }

    /// Lowest eigenpairs; vectors normalized so h sum u^2 = 1.
    pub fn eigenpairs(&self, count: usize, shift: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let (_, mut vecs) = lowest_eigenpairs(&self.matrix(), count, shift, 1e-13)?;
        let s = self.grid.h.sqrt();
        let vals = vecs.iter().map(|v| self.rayleigh(v)).collect();
        for v in vecs.iter_mut() {
            // sign: positive at the first node of largest magnitude
            let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() + 1e-12 { x } else { m });
            let f = if big < 0.0 { -1.0 / s } else { 1.0 / s };
            v.iter_mut().for_each(|x| *x *= f);
        }
        Ok((vals, vecs))
    }
}

/// Five-point discretization of -div(diag(a11, a22) grad) + W on a square.
#[derive(Clone, Debug)]
pub struct Grid2D {
    pub grid: FineGrid,
    /// a11 on edges between (i, k) and (i + 1, k): index i * (n + 2) + k over all nodes.
    edge_x: Vec<f64>,
    edge_y: Vec<f64>,
    potential: Vec<f64>,
}

impl Grid2D {
    pub fn new(
        grid: FineGrid,
        a11: &(dyn Fn(f64, f64) -> f64 + Sync),
        a22: &(dyn Fn(f64, f64) -> f64 + Sync),
        w: &(dyn Fn(f64, f64) -> f64 + Sync),
    ) -> Self {
        let nodes = grid.nodes();
        let m = grid.cells + 1;
        let h = grid.h;
        let edge_x: Vec<f64> = (0..grid.cells * m)
            .into_par_iter()
            .map(|idx| {
                let (c, k) = (idx / m, idx % m);
                harmonic_cell(&|x| a11(x, nodes[k]), nodes[c], h)
            })
            .collect();
        let edge_y: Vec<f64> = (0..m * grid.cells)
            .into_par_iter()
            .map(|idx| {
                let (i, c) = (idx / grid.cells, idx % grid.cells);
                harmonic_cell(&|y| a22(nodes[i], y), nodes[c], h)
            })
            .collect();
        let inner = grid.interior_nodes();
        let n = grid.interior();
        let potential = (0..n * n).map(|p| w(inner[p / n], inner[p % n])).collect();
        Grid2D { grid, edge_x, edge_y, potential }
    }

    fn ex(&self, c: usize, k: usize) -> f64 {
        self.edge_x[c * (self.grid.cells + 1) + k]
    }

    fn ey(&self, i: usize, c: usize) -> f64 {
        self.edge_y[i * self.grid.cells + c]
    }

    pub fn matrix(&self) -> BandMatrix {
        let n = self.grid.interior();
        let h2 = self.grid.h * self.grid.h;
        let mut m = BandMatrix::zeros(n * n, n);
        for i in 0..n {
            for k in 0..n {
                // node (i + 1, k + 1) in full indexing
                let p = i * n + k;
                let (gi, gk) = (i + 1, k + 1);
                let diag = (self.ex(gi - 1, gk) + self.ex(gi, gk) + self.ey(gi, gk - 1) + self.ey(gi, gk)) / h2;
                m.set(p, p, diag + self.potential[p]);
                if i > 0 {
                    m.set(p, p - n, -self.ex(gi - 1, gk) / h2);
                }
                if k > 0 {
                    m.set(p, p - 1, -self.ey(gi, gk - 1) / h2);
                }
            }
        }
        m
    }

    pub fn rayleigh(&self, u: &[f64]) -> f64 {
        let n = self.grid.interior();
        let h2 = self.grid.h * self.grid.h;
        let val = |i: usize, k: usize| -> f64 {
            if i == 0 || k == 0 || i > n || k > n {
                0.0
            } else {
                u[(i - 1) * n + (k - 1)]
            }
        };
        let mut e = 0.0;
        for c in 0..=n {
            for k in 1..=n {
                e += self.ex(c, k) * (val(c + 1, k) - val(c, k)).powi(2) / h2;
            }
        }
        for i in 1..=n {
            for c in 0..=n {
                e += self.ey(i, c) * (val(i, c + 1) - val(i, c)).powi(2) / h2;
            }
        }
        e += u.iter().zip(&self.potential).map(|(x, v)| v * x * x).sum::<f64>();
        e / dot(u, u)
    }

    pub fn eigenpairs(&self, count: usize, shift: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let (_, mut vecs) = lowest_eigenpairs(&self.matrix(), count, shift, 1e-13)?;
        let vals = vecs.iter().map(|v| self.rayleigh(v)).collect();
        let s = self.grid.h;
        for v in vecs.iter_mut() {
            let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() + 1e-12 { x } else { m });
            let f = if big < 0.0 { -1.0 / s } else { 1.0 / s };
            v.iter_mut().for_each(|x| *x *= f);
        }
        Ok((vals, vecs))
    }
}

/// Eigenvector storage of a reference solve.
#[derive(Clone, Debug)]
pub enum Modes {
    /// Values at interior nodes (row-major in the first axis in 2D).
    Grid(Vec<Vec<f64>>),
    /// Tensor products of per-axis modes: (index on axis 0, index on axis 1).
    Kronecker { axes: [Vec<Vec<f64>>; 2], pairs: Vec<(usize, usize)> },
}

#[derive(Clone, Debug)]
pub struct ReferenceOptions {
    /// h = eps / h_ratio.
    pub h_ratio: f64,
    /// Smallest admissible eps / h.
    pub min_ratio: f64,
    pub radius: f64,
    pub count: usize,
    pub richardson: bool,
    /// Also solve at h/4 to estimate the extrapolation error.
    pub error_estimate: bool,
    pub max_unknowns: usize,
    /// Initial shift for the inverse iteration (lowered if needed).
    pub shift: f64,
}

impl ReferenceOptions {
    pub fn new(radius: f64, count: usize) -> Self {
        ReferenceOptions {
            h_ratio: 16.0,
            min_ratio: 8.0,
            radius,
            count,
            richardson: true,
            error_estimate: false,
            max_unknowns: 1_000_000,
            shift: 0.0,
        }
    }
}

/// Fine-grid eigenpairs of L_eps with Richardson extrapolation in h.
#[derive(Clone, Debug)]
pub struct ReferenceSpectrum {
    pub eps: f64,
    pub grid: FineGrid,
    pub method: &'static str,
    /// Eigenvalues on the grid of spacing h.
    pub values: Vec<f64>,
    /// Eigenvalues on the grid of spacing h/2.
    pub values_half: Option<Vec<f64>>,
    /// (4 lambda_{h/2} - lambda_h) / 3, or `values` without Richardson.
    pub richardson: Vec<f64>,
    /// |R(h/2, h/4) - R(h, h/2)| when available, else |lambda_{h/2} - lambda_h| / 3.
    pub error_estimate: Vec<f64>,
    /// Modes on the h grid, normalized in L2.
    pub modes: Modes,
    /// Richardson-combined grid modes at the h nodes (Grid modes only).
    pub modes_richardson: Option<Vec<Vec<f64>>>,
}

fn richardson(coarse: &[f64], fine: &[f64]) -> Vec<f64> {
    coarse.iter().zip(fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect()
}

fn check_grid(eps: f64, opts: &ReferenceOptions) -> Result<f64> {
    let h = eps / opts.h_ratio;
    if eps / h < opts.min_ratio - 1e-12 {
        return Err(Error::GridTooCoarse { h, eps });
    }
    Ok(h)
}

fn coefficient_1d(a: &CoefficientField, i: usize, axis: usize) -> Interpolant {
    let n = a.grid().n;
    let entry = a.a.entry(i, i);
    let line: Vec<f64> = match a.dim() {
        1 => entry.to_vec(),
        _ if axis == 0 => (0..n).map(|p| entry[p * n]).collect(),
        _ => (0..n).map(|q| entry[q]).collect(),
    };
    Interpolant::new(1, n, &line)
}

fn axis_potential(w: &SlowPolynomial, axis: usize, with_constant: bool) -> impl Fn(f64) -> f64 {
    let parts = w.axis_part(axis, with_constant);
    move |x: f64| parts.iter().map(|(k, c)| c * x.powi(*k as i32)).sum()
}

fn solve_axis(axis: &Axis1D, count: usize, shift: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    axis.eigenpairs(count, shift)
}

/// Solves -div a(x/eps) grad u + W u = lambda u on [-R, R]^d with Dirichlet data.
///
/// 1D uses a banded three-point scheme; in 2D a separable problem (diagonal
/// laminate a, W without mixed terms) is solved as a Kronecker sum of 1D
/// problems, anything else with the banded five-point scheme.
pub fn solve_leps(a: &CoefficientField, w: &SlowPolynomial, eps: f64, opts: &ReferenceOptions) -> Result<ReferenceSpectrum> {
    let h = check_grid(eps, opts)?;
    let d = a.dim();
    let grid = FineGrid::new(d, opts.radius, h);
    let levels = if opts.richardson { if opts.error_estimate { 3 } else { 2 } } else { 1 };
    let grids: Vec<FineGrid> = (0..levels).scan(grid, |g, _| {
        let cur = *g;
        *g = g.halved();
        Some(cur)
    }).collect();
    let separable = d == 2 && a.is_laminate_diagonal() && !w.has_mixed_terms();
    if d == 2 && !separable {
        if a.a.entry(0, 1).iter().any(|v| v.abs() > 1e-14) {
            return Err(Error::Unsupported("the reference solver needs a diagonal coefficient".into()));
        }
        let top = grids.last().expect("one level");
        if top.unknowns() > opts.max_unknowns {
            return Err(Error::GridTooLarge(format!("{} unknowns > {}", top.unknowns(), opts.max_unknowns)));
        }
    }

    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut modes_all: Vec<Modes> = Vec::new();
    let method;
    match (d, separable) {
        (1, _) => {
            method = "banded-1d";
            let it = coefficient_1d(a, 0, 0);
            let af = move |x: f64| it.eval(&[x / eps]);
            let wf = axis_potential(w, 0, true);
            let solved: Vec<Result<(Vec<f64>, Vec<Vec<f64>>)>> = grids
                .par_iter()
                .map(|g| Axis1D::new(*g, &af, &wf).eigenpairs(opts.count, opts.shift))
                .collect();
            for s in solved {
                let (v, m) = s?;
                values.push(v);
                modes_all.push(Modes::Grid(m));
            }
        }
        (_, true) => {
            method = "kronecker";
            let per_axis = opts.count;
            let mut axes_levels: Vec<[(Vec<f64>, Vec<Vec<f64>>); 2]> = Vec::new();
            for g in &grids {
                let g1 = FineGrid { dim: 1, ..*g };
                let mut both = Vec::with_capacity(2);
                for axis in 0..2 {
                    let it = coefficient_1d(a, axis, axis);
                    let af = move |x: f64| it.eval(&[x / eps]);
                    let wf = axis_potential(w, axis, axis == 0);
                    both.push(solve_axis(&Axis1D::new(g1, &af, &wf), per_axis, opts.shift)?);
                }
                let second = both.pop().expect("two axes");
                let first = both.pop().expect("two axes");
                axes_levels.push([first, second]);
            }
            // pair selection on the coarse level, reused on finer levels
            let [(v0, _), (v1, _)] = &axes_levels[0];
            let mut pairs: Vec<(usize, usize)> =
                (0..per_axis).flat_map(|i| (0..per_axis).map(move |k| (i, k))).collect();
            pairs.sort_by(|p, q| (v0[p.0] + v1[p.1]).total_cmp(&(v0[q.0] + v1[q.1])));
            pairs.truncate(opts.count);
            for lvl in &axes_levels {
                let [(a0, m0), (a1, m1)] = lvl;
                values.push(pairs.iter().map(|&(i, k)| a0[i] + a1[k]).collect());
                modes_all.push(Modes::Kronecker { axes: [m0.clone(), m1.clone()], pairs: pairs.clone() });
            }
        }
        _ => {
            method = "banded-2d";
            let i11 = a.a.interpolant(0);
            let i22 = a.a.interpolant(3);
            let a11 = move |x: f64, y: f64| i11.eval(&[x / eps, y / eps]);
            let a22 = move |x: f64, y: f64| i22.eval(&[x / eps, y / eps]);
            let wc = w.clone();
            let wf = move |x: f64, y: f64| wc.eval(&[x, y]);
            for g in &grids {
                let (v, m) = Grid2D::new(*g, &a11, &a22, &wf).eigenpairs(opts.count, opts.shift)?;
                values.push(v);
                modes_all.push(Modes::Grid(m));
            }
        }
    }

    let coarse = values[0].clone();
    let (rich, est, half) = match values.len() {
        1 => (coarse.clone(), vec![f64::NAN; coarse.len()], None),
        2 => {
            let r = richardson(&values[0], &values[1]);
            let e = values[0].iter().zip(&values[1]).map(|(c, f)| (f - c).abs() / 3.0).collect();
            (r, e, Some(values[1].clone()))
        }
        _ => {
            let r = richardson(&values[0], &values[1]);
            let r2 = richardson(&values[1], &values[2]);
            let e = r.iter().zip(&r2).map(|(x, y)| (x - y).abs()).collect();
            (r, e, Some(values[1].clone()))
        }
    };
    let modes_richardson = match (&modes_all[0], modes_all.get(1)) {
        (Modes::Grid(c), Some(Modes::Grid(f))) if d == 1 => Some(
            c.iter()
                .zip(f)
                .map(|(cv, fv)| {
                    let sign = if dot_fine(cv, fv) < 0.0 { -1.0 } else { 1.0 };
                    cv.iter().enumerate().map(|(i, x)| (4.0 * sign * fv[2 * i + 1] - x) / 3.0).collect()
                })
                .collect(),
        ),
        _ => None,
    };
    Ok(ReferenceSpectrum {
        eps,
        grid,
        method,
        values: coarse,
        values_half: half,
        richardson: rich,
        error_estimate: est,
        modes: modes_all.swap_remove(0),
        modes_richardson,
    })
}

/// Sum of coarse values times the fine values at coinciding nodes.
fn dot_fine(coarse: &[f64], fine: &[f64]) -> f64 {
    coarse.iter().enumerate().map(|(i, x)| x * fine[2 * i + 1]).sum()
}

/// R = safety * sqrt(lambda / lambda_minus), with lambda_minus the lower
/// quadratic bound of W.
pub fn truncation_radius(lambda: f64, lambda_minus: f64, safety: f64) -> f64 {
    safety * (lambda / lambda_minus).sqrt()
}

/// Smallest eigenvalue of the quadratic part of W (1 if not positive).
pub fn quadratic_lower_bound(w: &SlowPolynomial) -> f64 {
    let q = w.quadratic_matrix();
    let v = if q.len() == 1 {
        q[0][0]
    } else {
        let (a, b, c) = (q[0][0], q[0][1], q[1][1]);
        0.5 * (a + c) - (0.25 * (a - c).powi(2) + b * b).sqrt()
    };
    if v > 0.0 {
        v
    } else {
        1.0
    }
}
