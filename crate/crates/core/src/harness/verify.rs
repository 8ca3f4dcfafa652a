use super::config::RunConfig;
use crate::classical::{cyclic_check, CorrectorSuite};
use crate::error::Result;
use crate::expansion::{multiple_recursion, simple_recursion, ExpansionOptions};
use crate::hermite::{default_scale, eigensolve_checked, MacroBasis};
use crate::poly::SlowPolynomial;
use crate::reference::{fit_rate, solve_leps, truncation_radius, ReferenceOptions};
use crate::torus::{CoefficientField, CoefficientSpec, TorusGrid};
use serde::{Deserialize, Serialize};

/// One invariant: pass when `value <= threshold` (or inside [lo, hi] for ranges).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    /// Multiplies every upper threshold.
    pub tolerance_scale: f64,
    /// Test hook: added to the symmetrized third-order tensor before the cyclic check.
    pub perturb_abar3: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { tolerance_scale: 1.0, perturb_abar3: 0.0 }
    }
}

struct Suite {
    opts: VerifyOptions,
    checks: Vec<Check>,
}

impl Suite {
    fn upper(&mut self, name: &str, value: f64, threshold: f64) {
        let t = threshold * self.opts.tolerance_scale;
        self.checks.push(Check { name: name.into(), value, threshold: t, lower: None, pass: value <= t });
    }

    fn range(&mut self, name: &str, value: f64, lo: f64, hi: f64) {
        let pass = value >= lo && value <= hi;
        self.checks.push(Check { name: name.into(), value, threshold: hi, lower: Some(lo), pass });
    }

    fn flag(&mut self, name: &str, ok: bool) {
        self.checks.push(Check { name: name.into(), value: if ok { 0.0 } else { 1.0 }, threshold: 0.0, lower: None, pass: ok });
    }
}

fn random_coefficient_2d(n: usize) -> Result<CoefficientField> {
    let spec = CoefficientSpec::Expression {
        entries: vec![
            vec!["2 + 0.5*cos(2*pi*y1) + 0.3*sin(2*pi*(y1+y2))".into(), "0.2*cos(2*pi*y2)".into()],
            vec!["0.2*cos(2*pi*y2)".into(), "1.8 + 0.4*sin(2*pi*y2) + 0.1*cos(4*pi*y1)".into()],
        ],
    };
    CoefficientField::from_spec(&spec, TorusGrid::new(2, n)?, None)
}

fn laminate_1d(n: usize) -> Result<CoefficientField> {
    CoefficientField::from_spec(&CoefficientSpec::diagonal(&["2 + cos(2*pi*y)"]), TorusGrid::new(1, n)?, None)
}

/// Runs the runnable invariants of every module.
pub fn verify(opts: VerifyOptions) -> Result<VerifyReport> {
    let mut s = Suite { opts, checks: Vec::new() };

    // macroscopic oscillator
    let w1 = SlowPolynomial::squared_norm(1);
    let basis = MacroBasis::new(1, 64, 1.0)?;
    let spec = eigensolve_checked(&[vec![1.0]], &w1, &basis, 6, None)?;
    let worst = (0..6).map(|k| (spec.values[k] - (2 * k + 1) as f64).abs() / (2 * k + 1) as f64).fold(0.0, f64::max);
    s.upper("oscillator_eigenvalues", worst, 1e-10);

    // 1D homogenization
    let a1 = laminate_1d(256)?;
    let suite1 = CorrectorSuite::build(&a1)?;
    let ab = suite1.abar[0][0];
    s.upper("harmonic_mean", (ab - 3f64.sqrt()).abs(), 1e-12);
    let a_vals = a1.a.entry(0, 0);
    let closed: Vec<f64> = a_vals.iter().map(|a| ab / a - 1.0).collect();
    let dchi = suite1.chi1[0].grad();
    let err = dchi.values().iter().zip(&closed).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / closed.len() as f64;
    s.upper("chi1_closed_form", err.sqrt(), 1e-10);

    // 2D tensors
    let a2 = random_coefficient_2d(32)?;
    let suite2 = CorrectorSuite::build(&a2)?;
    let mut sym = suite2.abar3_sym.clone();
    sym[0][0][0] += opts.perturb_abar3;
    s.upper("cyclic_identity", cyclic_check(&sym), 1e-10);
    s.upper("abar_symmetry", (suite2.abar[0][1] - suite2.abar[1][0]).abs(), 1e-12);
    let mut flux = 0.0f64;
    let mut skew = 0.0f64;
    for (k, sk) in suite2.s1.iter().enumerate() {
        flux = flux.max(sk.div()?.sub(&suite2.g[k])?.max_abs());
        skew = skew.max(sk.add(&sk.transpose())?.max_abs());
    }
    s.upper("flux_corrector_divergence", flux, 1e-10);
    s.upper("flux_corrector_skew", skew, 1e-12);

    // simple expansion in 1D
    let a1s = laminate_1d(64)?;
    let abar1 = vec![vec![3f64.sqrt()]];
    let b1 = MacroBasis::new(1, 64, default_scale(&abar1, &w1))?;
    let spec1 = eigensolve_checked(&abar1, &w1, &b1, 6, None)?;
    let branch = simple_recursion(&a1s, &w1, &spec1, 1, &ExpansionOptions::new(3))?;
    let lambda = spec1.eigenvalue(1);
    s.upper("mu1_vanishes", branch.mu1_measured.abs(), 1e-8 * lambda.powf(1.5).max(1.0));
    s.upper("hierarchy_residual", branch.residuals.iter().copied().fold(0.0, f64::max), 1e-8);
    let (res, mean) = branch.table.diagnostics();
    s.upper("corrector_cell_residual", res, 1e-10);
    s.upper("corrector_mean", mean, 1e-12);

    // constant coefficients
    let ac = CoefficientField::constant(TorusGrid::new(1, 16)?, &[vec![1.7]])?;
    let abc = vec![vec![1.7]];
    let bc = MacroBasis::new(1, 48, default_scale(&abc, &w1))?;
    let specc = eigensolve_checked(&abc, &w1, &bc, 4, None)?;
    let bcst = simple_recursion(&ac, &w1, &specc, 1, &ExpansionOptions::new(4))?;
    let worst = bcst.mu[1..].iter().map(|m| m.abs()).chain(bcst.u[1..].iter().map(|u| u.norm())).fold(0.0, f64::max);
    s.upper("constant_coefficient_degeneracy", worst, 1e-12);

    // splitting matrix on a laminate
    let lam = CoefficientField::from_spec(
        &CoefficientSpec::diagonal(&["2 + cos(2*pi*y1)", "1"]),
        TorusGrid::new(2, 16)?,
        None,
    )?;
    let abl = vec![vec![3f64.sqrt(), 0.0], vec![0.0, 1.0]];
    let wl = SlowPolynomial::quadratic_form(&[vec![1.0 / abl[0][0], 0.0], vec![0.0, 1.0]]);
    let bl = MacroBasis::new(2, 24, default_scale(&abl, &wl))?;
    let specl = eigensolve_checked(&abl, &wl, &bl, 6, None)?;
    let (split, _, _) = multiple_recursion(&lam, &wl, &specl, 2, &ExpansionOptions::new(2))?;
    s.upper("splitting_symmetry", split.asymmetry, 1e-12);
    s.upper("splitting_dual_formula", split.dual_difference, 1e-8);

    // reference solver
    let id = CoefficientField::identity(TorusGrid::new(1, 8)?)?;
    let mut o = ReferenceOptions::new(truncation_radius(1.0, 1.0, 6.5), 2);
    o.h_ratio = 8.0;
    o.error_estimate = true;
    let r = solve_leps(&id, &w1, 0.4, &o)?;
    s.upper("oscillator_richardson", (r.richardson[0] - 1.0).abs(), 1e-7);
    let half = r.values_half.as_ref().map(|v| v[0]).unwrap_or(f64::NAN);
    let mut o4 = o.clone();
    o4.h_ratio = 32.0;
    o4.richardson = false;
    let quarter = solve_leps(&id, &w1, 0.4, &o4)?.values[0];
    s.range("second_order_discretization", (r.values[0] - half) / (half - quarter), 3.5, 4.5);
    let mut o2 = o.clone();
    o2.radius *= 2.0;
    o2.richardson = false;
    let mut o1 = o.clone();
    o1.richardson = false;
    let (l1, l2) = (solve_leps(&id, &w1, 0.4, &o1)?.values[0], solve_leps(&id, &w1, 0.4, &o2)?.values[0]);
    s.upper("domain_truncation", (l1 - l2).abs() / l1, 1e-9);
    s.flag("eigenvalues_nondecreasing", r.values.windows(2).all(|w| w[0] <= w[1]));

    // plumbing
    let eps = [0.1, 0.05, 0.025];
    let sq: Vec<f64> = eps.iter().map(|e| e * e).collect();
    s.upper("fit_rate_exact", (fit_rate(&eps, &sq, None)?.slope - 2.0).abs(), 1e-12);
    let src = super::MINIMAL_CONFIG;
    let c = RunConfig::from_toml(src)?;
    s.flag("config_round_trip", RunConfig::from_toml(&c.to_toml()?)? == c);

    let passed = s.checks.iter().all(|c| c.pass);
    Ok(VerifyReport { checks: s.checks, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_build_passes() {
        let r = verify(VerifyOptions::default()).unwrap();
        assert!(r.passed, "{:#?}", r.failures());
    }

    #[test]
    fn injected_fault_is_reported() {
        let r = verify(VerifyOptions { perturb_abar3: 1e-6, ..VerifyOptions::default() }).unwrap();
        let f = r.failures();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].name, "cyclic_identity");
    }

    #[test]
    fn tightened_tolerances_fail() {
        let r = verify(VerifyOptions { tolerance_scale: 1e-4, ..VerifyOptions::default() }).unwrap();
        assert!(!r.passed);
    }
}
