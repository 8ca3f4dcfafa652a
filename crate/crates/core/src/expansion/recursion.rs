use super::table::CorrectorTable;
use crate::error::{Error, Result};
use crate::hermite::{apply_l0, resolvent_solve, spectral_gap, MacroFunction, Padded, SpectrumResult};
use crate::poly::{MultiIndex, SlowPolynomial};
use crate::torus::{CellSolverOptions, CoefficientField};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub type TensorList = Vec<(MultiIndex, Vec<SlowPolynomial>)>;

/// A V = sum_alpha div(abar_alpha(x) d^alpha V), exact in the padded space.
pub fn apply_tensors(tensors: &TensorList, v: &MacroFunction) -> Result<Padded> {
    let p = v.padded();
    let d = v.basis.dim;
    let mut out = Padded::zeros(d, p.m, p.sigma);
    for (alpha, comps) in tensors {
        if comps.iter().all(|c| c.is_empty()) {
            continue;
        }
        let da = p.deriv_multi(alpha);
        for (i, c) in comps.iter().enumerate() {
            if c.is_empty() {
                continue;
            }
            out.axpy(1.0, &da.mul_poly(c)?.deriv(i));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ExpansionOptions {
    /// Highest order P of the eigenvalue expansion.
    pub order: usize,
    pub cell: CellSolverOptions,
    /// Eigenvalues of the splitting matrix closer than this are degenerate.
    pub degenerate_spacing: f64,
}

impl ExpansionOptions {
    pub fn new(order: usize) -> Self {
        ExpansionOptions { order, cell: CellSolverOptions::default(), degenerate_spacing: 1e-6 }
    }
}

/// The splitting matrix of a cluster, computed three ways.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingMatrix {
    /// -<A_2 phi_s, phi_t> with A_2 from the solved level-3 correctors.
    pub solved: Vec<Vec<f64>>,
    /// Same, with the level-3 tensors from the adjoint identity.
    pub adjoint: Vec<Vec<f64>>,
    /// Covariance-only expression sum_ik <chi1_i chi1_k> int (W - lambda0) d_i phi_s d_k phi_t.
    pub covariance: Vec<Vec<f64>>,
    /// Symmetrized `solved`.
    pub matrix: Vec<Vec<f64>>,
    pub asymmetry: f64,
    pub dual_difference: f64,
    /// Columns are the rotation vectors e^r.
    pub rotation: Vec<Vec<f64>>,
    pub mu2: Vec<f64>,
    /// Smallest gap between the mu2; infinite (null in JSON) for one branch.
    #[serde(deserialize_with = "infinite_from_null")]
    pub spacing: f64,
}

fn infinite_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// One eigenvalue branch of the expansion.
#[derive(Clone, Debug)]
pub struct ExpansionBranch {
    pub label: usize,
    pub lambda0: f64,
    /// mu_0..mu_P.
    pub mu: Vec<f64>,
    /// U_0..U_P.
    pub u: Vec<MacroFunction>,
    /// Coefficients of U_0 in the cluster eigenbasis.
    pub rotation: Vec<f64>,
    /// Cluster components of U_k (the deferred normalizations).
    pub alphas: Vec<Vec<f64>>,
    /// Relative residual of the macroscopic equation at each order.
    pub residuals: Vec<f64>,
    /// The value -<A_1 U_0, U_0> that the recursion sets to zero.
    pub mu1_measured: f64,
    pub table: Arc<CorrectorTable>,
}

impl ExpansionBranch {
    pub fn order(&self) -> usize {
        self.mu.len() - 1
    }

    /// sum_{p <= order} eps^p mu_p.
    pub fn lambda_tilde(&self, eps: f64, order: usize) -> f64 {
        self.mu.iter().take(order + 1).enumerate().map(|(p, m)| eps.powi(p as i32) * m).sum()
    }
}

/// Full output for one eigenvalue index.
#[derive(Clone, Debug)]
pub struct Expansion {
    pub j: usize,
    pub cluster_start: usize,
    pub cluster_size: usize,
    pub lambda0: f64,
    pub gap: f64,
    pub splitting: Option<SplittingMatrix>,
    pub branches: Vec<ExpansionBranch>,
    /// max_ts |<A_1 phi_s, phi_t>|.
    pub mu1_defect: f64,
}

/// Corrector table through level `levels - 1`, for eigenvalue mu0 and
/// vanishing higher corrections.
pub fn build_corrector_table(
    a: &CoefficientField,
    w: &SlowPolynomial,
    mu0: f64,
    levels: usize,
    opts: &CellSolverOptions,
) -> Result<CorrectorTable> {
    let mut t = CorrectorTable::new(a, w, mu0, *opts);
    t.mu.resize(levels.saturating_sub(1).max(1), 0.0);
    t.extend_to(levels)?;
    Ok(t)
}

fn cluster_matrix(phis: &[MacroFunction], op: impl Fn(&MacroFunction) -> Result<Padded>) -> Result<Vec<Vec<f64>>> {
    let n = phis.len();
    let mut m = vec![vec![0.0; n]; n];
    for s in 0..n {
        let img = op(&phis[s])?;
        for t in 0..n {
            m[t][s] = -img.dot(&phis[t].padded());
        }
    }
    Ok(m)
}

fn max_abs(m: &[Vec<f64>]) -> f64 {
    m.iter().flatten().fold(0.0, |a, b| a.max(b.abs()))
}

/// Splitting matrix D_ts = -<A_2 phi_s, phi_t> of the cluster containing j.
/// The table must contain levels 0..=3.
pub fn build_d_matrix(spec: &SpectrumResult, j: usize, table: &CorrectorTable, spacing_tol: f64) -> Result<SplittingMatrix> {
    let phis = spec.cluster_functions(j);
    let n = phis.len();
    let d = table.dim();
    let solved_t = table.tensors(3);
    let solved = cluster_matrix(&phis, |v| apply_tensors(&solved_t, v))?;
    let adjoint_t = table.adjoint_tensors(3)?;
    let adjoint = cluster_matrix(&phis, |v| apply_tensors(&adjoint_t, v))?;

    // covariance-only expression
    let chi1: Vec<_> = (0..d)
        .map(|i| {
            let e = table.get(1, &MultiIndex::unit(d, i)).expect("level 1");
            e.chi.terms.iter().fold(crate::torus::PeriodicField::zeros(table.a.grid(), 0), |f, (p, s)| {
                f.axpy(p.coefficient(&vec![0; d]), s).expect("same grid")
            })
        })
        .collect();
    let lambda0 = spec.cluster_value(j);
    let shifted = table.w.add(&SlowPolynomial::constant(d, -lambda0));
    let mut covariance = vec![vec![0.0; n]; n];
    for s in 0..n {
        for t in 0..n {
            let ps = phis[s].padded();
            let pt = phis[t].padded();
            let mut v = 0.0;
            for i in 0..d {
                for k in 0..d {
                    let c = chi1[i].inner(&chi1[k]);
                    if c != 0.0 {
                        v += c * ps.deriv(i).mul_poly(&shifted)?.dot(&pt.deriv(k));
                    }
                }
            }
            covariance[t][s] = v;
        }
    }

    let scale = max_abs(&solved).max(f64::MIN_POSITIVE);
    let mut asymmetry: f64 = 0.0;
    let mut dual: f64 = 0.0;
    let mut sym = DMatrix::zeros(n, n);
    for t in 0..n {
        for s in 0..n {
            asymmetry = asymmetry.max((solved[t][s] - solved[s][t]).abs());
            dual = dual.max((solved[t][s] - adjoint[t][s]).abs());
            sym[(t, s)] = 0.5 * (solved[t][s] + solved[s][t]);
        }
    }
    let dual_difference = if max_abs(&solved) == 0.0 { dual } else { dual / scale };
    let eig = SymmetricEigen::new(sym.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let mu2: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let rotation: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if big < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    let spacing = mu2.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if n >= 2 && spacing < spacing_tol {
        return Err(Error::DegenerateD(spacing));
    }
    let matrix = (0..n).map(|t| (0..n).map(|s| sym[(t, s)]).collect()).collect();
    Ok(SplittingMatrix { solved, adjoint, covariance, matrix, asymmetry, dual_difference, rotation, mu2, spacing })
}

fn combine(phis: &[MacroFunction], c: &[f64]) -> MacroFunction {
    let mut u = MacroFunction::zero(phis[0].basis);
    for (p, x) in phis.iter().zip(c) {
        u.axpy(*x, p);
    }
    u
}

struct Hierarchy<'a> {
    spec: &'a SpectrumResult,
    phis: Vec<MacroFunction>,
    /// ops[q] = tensors of level q + 1, defining A_q.
    ops: Vec<TensorList>,
}

impl Hierarchy<'_> {
    fn sync(&mut self, table: &CorrectorTable) {
        while self.ops.len() + 1 < table.levels {
            let q = self.ops.len();
            self.ops.push(table.tensors(q + 1));
        }
    }

    /// sum_{q=1}^{m} A_q U_{m-q} + sum_{1 <= q < mu.len()} mu_q U_{m-q}, truncated to the basis.
    fn rhs(&self, m: usize, u: &[MacroFunction], mu: &[f64]) -> Result<MacroFunction> {
        let n = self.spec.basis.n;
        let mut acc = Padded::zeros(self.spec.basis.dim, n + crate::hermite::PAD, self.spec.basis.sigma);
        for q in 1..=m {
            acc.axpy(1.0, &apply_tensors(&self.ops[q], &u[m - q])?);
        }
        let mut out = acc.truncate(n);
        for q in 1..mu.len().min(m + 1) {
            out.axpy(mu[q], &u[m - q]);
        }
        Ok(out)
    }

    fn project(&self, f: &MacroFunction) -> Vec<f64> {
        self.phis.iter().map(|p| p.dot(f)).collect()
    }
}

/// Runs the hierarchy for every rotation vector of the cluster.
fn run_branches(
    spec: &SpectrumResult,
    j: usize,
    shared: &CorrectorTable,
    rotation: &[Vec<f64>],
    mu2: &[f64],
    order: usize,
    mu1_tol: f64,
) -> Result<(Vec<ExpansionBranch>, f64)> {
    let phis = spec.cluster_functions(j);
    let nc = phis.len();
    let lambda0 = spec.cluster_value(j);
    let mut hier = Hierarchy { spec, phis: phis.clone(), ops: Vec::new() };
    hier.sync(shared);
    // mu_1 check on the whole cluster
    let m1 = cluster_matrix(&phis, |v| apply_tensors(&hier.ops[1], v))?;
    let mu1_defect = max_abs(&m1);
    if mu1_defect > mu1_tol {
        return Err(Error::SolvabilityViolated { level: 1, branch: 0, value: mu1_defect });
    }
    let mut branches = Vec::with_capacity(nc);
    for (r, e) in rotation.iter().enumerate() {
        let mut table = shared.clone();
        let mut mu = vec![lambda0, 0.0];
        let mut u = vec![combine(&phis, e)];
        let mut alphas = vec![e.clone()];
        let mu1_measured = (0..nc).map(|t| (0..nc).map(|s| e[t] * m1[t][s] * e[s]).sum::<f64>()).sum::<f64>();
        for m in 1..=order {
            table.mu = mu.clone();
            table.extend_to(m + 2)?;
            hier.ops.truncate(3.min(hier.ops.len()));
            hier.sync(&table);
            if m >= 2 {
                let rhs = hier.rhs(m, &u, &mu)?;
                let f = hier.project(&rhs);
                let fe: f64 = f.iter().zip(e).map(|(a, b)| a * b).sum();
                let mu_m = -fe;
                if m == 2 {
                    // F + mu_2 e must vanish: e is an eigenvector of D.
                    let defect = f.iter().zip(e).map(|(a, b)| (a + mu_m * b).abs()).fold(0.0, f64::max);
                    if defect > 1e-8 * mu_m.abs().max(1.0) {
                        return Err(Error::SolvabilityViolated { level: 2, branch: r, value: defect });
                    }
                } else {
                    let mut alpha = vec![0.0; nc];
                    for (rr, er) in rotation.iter().enumerate() {
                        if rr == r {
                            continue;
                        }
                        let c = f.iter().zip(er).map(|(a, b)| a * b).sum::<f64>() / (mu2[rr] - mu2[r]);
                        alpha.iter_mut().zip(er).for_each(|(x, y)| *x += c * y);
                    }
                    u[m - 2].axpy(1.0, &combine(&phis, &alpha));
                    alphas[m - 2] = alpha;
                }
                mu.push(mu_m);
            }
            let rhs = hier.rhs(m, &u, &mu)?;
            let proj = hier.project(&rhs);
            let pn = proj.iter().map(|x| x * x).sum::<f64>().sqrt();
            let rn = rhs.norm();
            if m >= 2 && pn > 1e-8 * rn + 1e-12 {
                return Err(Error::SolvabilityViolated { level: m, branch: r, value: pn / rn });
            }
            let mut clean = rhs;
            clean.axpy(-1.0, &combine(&phis, &proj));
            u.push(resolvent_solve(spec, j, &clean)?);
            alphas.push(vec![0.0; nc]);
        }
        table.mu = mu.clone();
        // residuals of (L0 - mu0) U_p = RHS_p with the final U's
        let mut residuals = Vec::with_capacity(order);
        for p in 1..=order {
            let rhs = hier.rhs(p, &u, &mu)?;
            let lhs = apply_l0(&table_abar(&table), &table.w, &u[p])?.truncate(spec.basis.n);
            let mut diff = lhs;
            diff.axpy(-mu[0], &u[p]);
            diff.axpy(-1.0, &rhs);
            let rn = rhs.norm();
            residuals.push(if rn > 0.0 { diff.norm() / rn } else { diff.norm() });
        }
        branches.push(ExpansionBranch {
            label: r,
            lambda0,
            mu,
            u,
            rotation: e.clone(),
            alphas,
            residuals,
            mu1_measured,
            table: Arc::new(table),
        });
    }
    Ok((branches, mu1_defect))
}

fn table_abar(t: &CorrectorTable) -> Vec<Vec<f64>> {
    let d = t.dim();
    let zero = vec![0; d];
    (0..d)
        .map(|i| {
            (0..d)
                .map(|k| t.get(1, &MultiIndex::unit(d, k)).map(|e| e.abar[i].coefficient(&zero)).unwrap_or(0.0))
                .collect()
        })
        .collect()
}

/// Tolerance for the mu_1 = 0 check.
fn mu1_tolerance(lambda0: f64) -> f64 {
    1e-8 * lambda0.abs().powf(1.5).max(1.0)
}

/// Expansion of a simple eigenvalue to order P.
pub fn simple_recursion(
    a: &CoefficientField,
    w: &SlowPolynomial,
    spec: &SpectrumResult,
    j: usize,
    opts: &ExpansionOptions,
) -> Result<ExpansionBranch> {
    let (_, size) = spec.cluster_of(j).ok_or(Error::GapUnresolved(j))?;
    if size > 1 {
        return Err(Error::NotSimple { index: j, size });
    }
    let lambda0 = spec.cluster_value(j);
    let table = build_corrector_table(a, w, lambda0, 4, &opts.cell)?;
    let (mut b, _) = run_branches(spec, j, &table, &[vec![1.0]], &[0.0], opts.order.max(2), mu1_tolerance(lambda0))?;
    Ok(truncate_branch(b.remove(0), opts.order))
}

fn truncate_branch(mut b: ExpansionBranch, order: usize) -> ExpansionBranch {
    if b.mu.len() > order + 1 {
        b.mu.truncate(order + 1);
        b.u.truncate(order + 1);
        b.alphas.truncate(order + 1);
        b.residuals.truncate(order);
    }
    b
}

/// Expansion of every branch of the cluster containing j.
pub fn multiple_recursion(
    a: &CoefficientField,
    w: &SlowPolynomial,
    spec: &SpectrumResult,
    j: usize,
    opts: &ExpansionOptions,
) -> Result<(SplittingMatrix, Vec<ExpansionBranch>, f64)> {
    let lambda0 = spec.cluster_value(j);
    let table = build_corrector_table(a, w, lambda0, 4, &opts.cell)?;
    let split = build_d_matrix(spec, j, &table, opts.degenerate_spacing)?;
    let order = opts.order.max(2);
    let (branches, defect) = run_branches(spec, j, &table, &split.rotation, &split.mu2, order, mu1_tolerance(lambda0))?;
    let branches = branches.into_iter().map(|b| truncate_branch(b, opts.order)).collect();
    Ok((split, branches, defect))
}

/// Dispatches on the cluster size of j.
pub fn expand(
    a: &CoefficientField,
    w: &SlowPolynomial,
    spec: &SpectrumResult,
    j: usize,
    opts: &ExpansionOptions,
) -> Result<Expansion> {
    let (start, size) = spec.cluster_of(j).ok_or(Error::GapUnresolved(j))?;
    let gap = spectral_gap(spec, j)?;
    let lambda0 = spec.cluster_value(j);
    let (split, branches, defect) = multiple_recursion(a, w, spec, j, opts)?;
    Ok(Expansion {
        j,
        cluster_start: start + 1,
        cluster_size: size,
        lambda0,
        gap,
        splitting: Some(split),
        branches,
        mu1_defect: defect,
    })
}
