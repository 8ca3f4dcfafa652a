use super::recursion::ExpansionBranch;
use crate::error::{Error, Result};
use crate::hermite::MacroFunction;
use crate::poly::{MultiIndex, SlowPolynomial};
use crate::torus::PeriodicField;
use std::collections::HashMap;

/// Points at which w_eps is sampled.
#[derive(Clone, Debug)]
pub enum EvalGrid {
    Line(Vec<f64>),
    /// Tensor grid, row-major in the first axis.
    Tensor(Vec<f64>, Vec<f64>),
}

impl EvalGrid {
    pub fn len(&self) -> usize {
        match self {
            EvalGrid::Line(x) => x.len(),
            EvalGrid::Tensor(a, b) => a.len() * b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            EvalGrid::Line(_) => 1,
            EvalGrid::Tensor(..) => 2,
        }
    }

    fn point(&self, idx: usize) -> [f64; 2] {
        match self {
            EvalGrid::Line(x) => [x[idx], 0.0],
            EvalGrid::Tensor(a, b) => [a[idx / b.len()], b[idx % b.len()]],
        }
    }

    fn periodic(&self, f: &PeriodicField, comp: usize, eps: f64) -> Vec<f64> {
        let it = f.interpolant(comp);
        match self {
            EvalGrid::Line(x) => it.eval_line(&x.iter().map(|v| v / eps).collect::<Vec<_>>()),
            EvalGrid::Tensor(a, b) => it.eval_tensor(
                &a.iter().map(|v| v / eps).collect::<Vec<_>>(),
                &b.iter().map(|v| v / eps).collect::<Vec<_>>(),
            ),
        }
    }

    fn macro_values(&self, f: &MacroFunction) -> Vec<f64> {
        match self {
            EvalGrid::Line(x) => f.eval_line(x),
            EvalGrid::Tensor(a, b) => f.eval_tensor(a, b),
        }
    }

    fn poly(&self, p: &SlowPolynomial) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let x = self.point(i);
                p.eval(&x[..self.dim()])
            })
            .collect()
    }
}

/// Sampled two-scale approximation and its gradient.
#[derive(Clone, Debug)]
pub struct Assembled {
    pub lambda: f64,
    pub values: Vec<f64>,
    /// grad[i][point] = d_i w_eps.
    pub grad: Vec<Vec<f64>>,
}

/// lambda~ and w_eps = sum_{n+k <= P} eps^{n+k} sum_alpha chi_{n,alpha}(x, x/eps) d^alpha U_k(x),
/// with the gradient (grad_x + grad_y / eps) applied term by term.
pub fn assemble(branch: &ExpansionBranch, eps: f64, order: usize, grid: &EvalGrid) -> Result<Assembled> {
    if eps <= 0.0 {
        return Err(Error::Config(format!("epsilon must be positive, got {eps}")));
    }
    if order > branch.order() {
        return Err(Error::Unsupported(format!("branch built to order {}, asked for {order}", branch.order())));
    }
    let d = grid.dim();
    let len = grid.len();
    let table = &branch.table;
    let mut values = vec![0.0; len];
    let mut grad = vec![vec![0.0; len]; d];
    let mut macro_cache: HashMap<(usize, MultiIndex), Vec<f64>> = HashMap::new();
    let mut macro_vals = |k: usize, al: &MultiIndex| -> Vec<f64> {
        macro_cache
            .entry((k, al.clone()))
            .or_insert_with(|| grid.macro_values(&branch.u[k].derivative(al)))
            .clone()
    };
    for n in 0..=order {
        for ((lvl, al), entry) in table.entries.iter() {
            if *lvl != n || entry.chi.is_zero() {
                continue;
            }
            for (p, s) in &entry.chi.terms {
                let sv = grid.periodic(s, 0, eps);
                let sg: Vec<Vec<f64>> = {
                    let g = s.grad();
                    (0..d).map(|i| grid.periodic(&g, i, eps)).collect()
                };
                let pv = grid.poly(p);
                let pg: Vec<Vec<f64>> = (0..d).map(|i| grid.poly(&p.derivative(i))).collect();
                for k in 0..=(order - n) {
                    let f = eps.powi((n + k) as i32);
                    let mv = macro_vals(k, al);
                    let mg: Vec<Vec<f64>> = (0..d).map(|i| macro_vals(k, &al.plus(i))).collect();
                    for q in 0..len {
                        let chi = pv[q] * sv[q];
                        values[q] += f * chi * mv[q];
                        for i in 0..d {
                            let dchi = pg[i][q] * sv[q] + pv[q] * sg[i][q] / eps;
                            grad[i][q] += f * (dchi * mv[q] + chi * mg[i][q]);
                        }
                    }
                }
            }
        }
    }
    Ok(Assembled { lambda: branch.lambda_tilde(eps, order), values, grad })
}

/// P = max(2, floor(c log|log(eps lambda^{3/2} / gap)|)).
pub fn choose_p(eps: f64, lambda0: f64, gap: f64, c: f64) -> Result<usize> {
    let t = eps * lambda0.abs().powf(1.5) / gap;
    if !(t < 1.0) || t <= 0.0 {
        return Err(Error::EpsilonTooLarge(t));
    }
    let v = c * t.ln().abs().ln();
    Ok(if v < 2.0 { 2 } else { (v + 1e-9).floor() as usize })
}

/// Caps P at the last order before |eps^p mu_p| stops decreasing (p >= 3).
pub fn divergence_cap(eps: f64, mu: &[f64], p: usize) -> usize {
    let size = |q: usize| (eps.powi(q as i32) * mu[q]).abs();
    for q in 3..mu.len().min(p + 1) {
        if size(q) > size(q - 1) {
            return (q - 1).max(2);
        }
    }
    p
}

/// Warning text when eps exceeds c gap lambda^{-3/2}.
pub fn epsilon_condition(eps: f64, lambda0: f64, gap: f64, c: f64) -> Option<String> {
    let bound = c * gap * lambda0.abs().powf(-1.5);
    (eps > bound).then(|| format!("EpsilonConditionViolated: eps = {eps} exceeds {bound:.6}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_rule_examples() {
        let t = (-(3f64.exp())).exp();
        assert_eq!(choose_p(t, 1.0, 1.0, 1.0).unwrap(), 3);
        assert_eq!(choose_p(0.9, 1.0, 1.0, 1.0).unwrap(), 2);
        assert!(matches!(choose_p(1.5, 1.0, 1.0, 1.0), Err(Error::EpsilonTooLarge(_))));
    }

    #[test]
    fn divergence_guard() {
        let mu = [1.0, 0.0, 1.0, 1.0, 100.0];
        assert_eq!(divergence_cap(0.1, &mu, 4), 3);
        assert_eq!(divergence_cap(0.001, &mu, 4), 4);
    }
}
