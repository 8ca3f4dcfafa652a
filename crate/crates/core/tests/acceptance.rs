//! Acceptance criteria A1-A8. Each test prints one PASS/FAIL line.
//!
//! A3 (H1 rate) and A7 (C1 stability) are expected to fail; see README.

use rand::{rngs::StdRng, Rng, SeedableRng};
use std::sync::OnceLock;
use std::time::Instant;
use twoscale::classical::{cyclic_check, CorrectorSuite};
use twoscale::expansion::{multiple_recursion, simple_recursion, ExpansionOptions};
use twoscale::harness::{run, FitReport, RunConfig, RunManifest, Stage};
use twoscale::hermite::{default_scale, eigensolve_checked, MacroBasis};
use twoscale::reference::RateFit;
use twoscale::{CoefficientField, CoefficientSpec, SlowPolynomial, TorusGrid};

fn report(id: &str, pass: bool, detail: String) {
    println!("{id} {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", ")
}

fn config(name: &str) -> (RunConfig, String) {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    RunConfig::load(&path).unwrap()
}

fn fit<'a>(m: &'a RunManifest, branch: &str, series: &str) -> Result<&'a RateFit, String> {
    let f: &FitReport = m
        .sweep
        .as_ref()
        .unwrap()
        .fits
        .iter()
        .find(|f| f.branch == branch && f.series == series)
        .ok_or_else(|| format!("no {branch}/{series} fit"))?;
    f.fit.as_ref().ok_or_else(|| f.error.clone().unwrap_or_default())
}

/// The 1D sweep of A3, shared with A4, A7 and A8.
fn simple_sweep() -> &'static (RunManifest, f64) {
    static SWEEP: OnceLock<(RunManifest, f64)> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let (cfg, src) = config("simple-1d.toml");
        let t = Instant::now();
        let m = run(&cfg, &src, Stage::Sweep).unwrap();
        (m, t.elapsed().as_secs_f64())
    })
}

#[test]
fn a1_oscillator_exactness() {
    let t = Instant::now();
    let w = SlowPolynomial::squared_norm(1);
    let basis = MacroBasis::new(1, 64, 1.0).unwrap();
    let spec = eigensolve_checked(&[vec![1.0]], &w, &basis, 6, None).unwrap();
    let worst = (0..6).map(|k| (spec.values[k] - (2 * k + 1) as f64).abs() / (2 * k + 1) as f64).fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    let pass = worst < 1e-10 && secs < 1.0;
    report("A1", pass, format!("max rel err {worst:.2e} (< 1e-10), {secs:.3}s (< 1s)"));
    assert!(pass);
}

#[test]
fn a2_homogenized_matrix_1d() {
    let grid = TorusGrid::new(1, 256).unwrap();
    let a = CoefficientField::from_spec(&CoefficientSpec::diagonal(&["2 + cos(2*pi*y)"]), grid, None).unwrap();
    let suite = CorrectorSuite::build(&a).unwrap();
    let ab = suite.abar[0][0];
    let abar_err = (ab - 3f64.sqrt()).abs();
    let dchi = suite.chi1[0].grad();
    let av = a.a.entry(0, 0);
    let l2 = (dchi.values().iter().zip(av.iter()).map(|(d, a)| (d - (ab / a - 1.0)).powi(2)).sum::<f64>()
        / av.len() as f64)
        .sqrt();
    let pass = abar_err < 1e-12 && l2 < 1e-10;
    report("A2", pass, format!("|abar - sqrt3| {abar_err:.2e} (< 1e-12), chi' L2 err {l2:.2e} (< 1e-10)"));
    assert!(pass);
}

#[test]
fn a3_simple_rate() {
    let (m, secs) = simple_sweep();
    let eig = fit(m, "simple", "zeroth_err");
    let h1 = fit(m, "simple", "h1_err");
    let eig_ok = matches!(eig, Ok(f) if (1.9..=2.2).contains(&f.slope) && f.r2 > 0.99);
    let h1_ok = matches!(h1, Ok(f) if (1.8..=2.2).contains(&f.slope));
    let pass = eig_ok && h1_ok && *secs < 300.0;
    let show = |r: &Result<&RateFit, String>| match r {
        Ok(f) => format!("{:.4} (r2 {:.5})", f.slope, f.r2),
        Err(e) => e.clone(),
    };
    report(
        "A3",
        pass,
        format!("eigen slope {} in [1.9, 2.2] r2 > 0.99; H1 slope {} in [1.8, 2.2]; {secs:.1}s (< 300s)", show(&eig), show(&h1)),
    );
    assert!(pass);
}

#[test]
fn a4_higher_order_gain() {
    let (m, secs) = simple_sweep();
    let rows: Vec<_> = m.sweep.as_ref().unwrap().rows.iter().filter(|r| r.epsilon > 1.0 / 81.0).collect();
    let lambda0 = m.expansion.as_ref().unwrap().lambda0;
    let order = m.expansion.as_ref().unwrap().predictions[0].order;
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let err: Vec<f64> = rows.iter().map(|r| r.eig_err).collect();
    let zeroth: Vec<f64> = rows.iter().map(|r| (r.lambda_ref_richardson - lambda0).abs()).collect();
    let slope = twoscale::reference::fit_rate(&eps, &err, None).map(|f| f.slope).unwrap_or(f64::NAN);
    let below = err.iter().zip(&zeroth).all(|(e, z)| e < z);
    let pass = order == 3 && eps.len() == 4 && slope >= 2.8 && below && *secs < 300.0;
    report("A4", pass, format!("P={order} slope {slope:.4} (>= 2.8) over {} eps; P=3 below P=0 everywhere: {below}", eps.len()));
    assert!(pass);
}

fn trig(rng: &mut StdRng, dim: usize, terms: usize, amp: f64) -> String {
    let mut s = String::new();
    for _ in 0..terms {
        let c = rng.gen_range(-amp..amp);
        let f = if rng.gen_bool(0.5) { "cos" } else { "sin" };
        let arg = if dim == 1 {
            format!("{}*y", rng.gen_range(1..=2))
        } else {
            format!("({}*y1 + {}*y2)", rng.gen_range(0..=2), rng.gen_range(1..=2))
        };
        s.push_str(&format!(" + {c:.6}*{f}(2*pi*{arg})"));
    }
    s
}

fn random_coefficient(rng: &mut StdRng, dim: usize) -> CoefficientField {
    let entries = if dim == 1 {
        vec![vec![format!("2{}", trig(rng, 1, 3, 0.3))]]
    } else {
        let off = format!("0{}", trig(rng, 2, 2, 0.1));
        vec![
            vec![format!("2{}", trig(rng, 2, 3, 0.3)), off.clone()],
            vec![off, format!("1.5{}", trig(rng, 2, 2, 0.2))],
        ]
    };
    let n = if dim == 1 { 64 } else { 32 };
    CoefficientField::from_spec(&CoefficientSpec::Expression { entries }, TorusGrid::new(dim, n).unwrap(), None).unwrap()
}

fn inverse_form(abar: &[Vec<f64>]) -> SlowPolynomial {
    let det = abar[0][0] * abar[1][1] - abar[0][1] * abar[1][0];
    let off = -0.5 * (abar[0][1] + abar[1][0]) / det;
    SlowPolynomial::quadratic_form(&[vec![abar[1][1] / det, off], vec![off, abar[0][0] / det]])
}

#[test]
fn a5_identity_suite() {
    let t = Instant::now();
    let mut rng = StdRng::seed_from_u64(20240601);
    let (mut mu1, mut cyclic, mut constant, mut dual, mut asym) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut mu1_ok = true;
    for case in 0..10 {
        let dim = 1 + case % 2;
        let a = random_coefficient(&mut rng, dim);
        let suite = CorrectorSuite::build(&a).unwrap();
        cyclic = cyclic.max(cyclic_check(&suite.abar3_sym));
        let w = SlowPolynomial::squared_norm(dim);
        let n = if dim == 1 { 64 } else { 24 };
        let basis = MacroBasis::new(dim, n, default_scale(&suite.abar, &w)).unwrap();
        let spec = eigensolve_checked(&suite.abar, &w, &basis, 6, None).unwrap();
        let b = simple_recursion(&a, &w, &spec, 1, &ExpansionOptions::new(2)).unwrap();
        let lambda = spec.eigenvalue(1);
        mu1 = mu1.max(b.mu1_measured.abs());
        mu1_ok &= b.mu1_measured.abs() < 1e-8 * lambda.powf(1.5);

        // splitting matrix on the double eigenvalue 4 of W = x . abar^{-1} x
        if dim == 2 {
            let wq = inverse_form(&suite.abar);
            let bq = MacroBasis::new(2, 24, default_scale(&suite.abar, &wq)).unwrap();
            let sq = eigensolve_checked(&suite.abar, &wq, &bq, 6, None).unwrap();
            let mut o = ExpansionOptions::new(2);
            o.degenerate_spacing = 0.0;
            let (split, _, _) = multiple_recursion(&a, &wq, &sq, 2, &o).unwrap();
            dual = dual.max(split.dual_difference);
            asym = asym.max(split.asymmetry);
        }

        // constant coefficient with the same homogenized matrix
        let ac = CoefficientField::constant(TorusGrid::new(dim, 8).unwrap(), &suite.abar).unwrap();
        let bc = simple_recursion(&ac, &w, &spec, 1, &ExpansionOptions::new(4)).unwrap();
        let worst = bc.mu[1..].iter().map(|m| m.abs()).chain(bc.u[1..].iter().map(|u| u.norm())).fold(0.0, f64::max);
        constant = constant.max(worst);
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = mu1_ok && cyclic < 1e-10 && constant < 1e-12 && dual < 1e-8 && asym < 1e-12 && secs < 120.0;
    report(
        "A5",
        pass,
        format!(
            "max |mu1| {mu1:.2e} (< 1e-8 lambda^1.5), cyclic {cyclic:.2e} (< 1e-10), constant {constant:.2e} (< 1e-12), \
             D dual {dual:.2e} (< 1e-8), D asym {asym:.2e} (< 1e-12), {secs:.1}s (< 120s)"
        ),
    );
    assert!(pass);
}

#[test]
fn a6_multiplicity_splitting() {
    let (cfg, src) = config("multiple-2d.toml");
    let t = Instant::now();
    let m = run(&cfg, &src, Stage::Sweep).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let e = m.expansion.as_ref().unwrap();
    let mu2 = e.splitting.as_ref().map(|s| s.mu2.clone()).unwrap_or_default();
    let distinct = mu2.len() == 2 && (mu2[1] - mu2[0]).abs() > 1e-6;
    let mut pass = (e.lambda0 - 4.0).abs() < 1e-10 && e.cluster_size == 2 && distinct && secs < 1800.0;
    let mut detail = format!("lambda0 {:.10}, mu2 [{}]", e.lambda0, sci(&mu2));
    for b in &e.branches {
        match fit(&m, &b.label, "eig_err") {
            Ok(f) => {
                pass &= f.slope >= 2.5;
                detail.push_str(&format!("; {} slope {:.4} (>= 2.5)", b.label, f.slope));
            }
            Err(err) => {
                pass = false;
                detail.push_str(&format!("; {} {err}", b.label));
            }
        }
    }
    report("A6", pass, format!("{detail}; {secs:.1}s (< 1800s)"));
    assert!(pass);
}

#[test]
fn a7_zeroth_order_envelope() {
    let (m1, _) = simple_sweep();
    let mut c1 = vec![m1.sweep.as_ref().unwrap().c1];
    for j in [2, 3] {
        let (mut cfg, _) = config("simple-1d.toml");
        cfg.experiment.j = j;
        cfg.experiment.order = Some(1);
        cfg.experiment.function_order = Some(1);
        let src = cfg.to_toml().unwrap();
        c1.push(run(&cfg, &src, Stage::Sweep).unwrap().sweep.unwrap().c1);
    }
    let mean = c1.iter().sum::<f64>() / 3.0;
    let spread = c1.iter().map(|c| (c / mean - 1.0).abs()).fold(0.0, f64::max);
    let pass = spread <= 0.2;
    report("A7", pass, format!("C1 per j = [{}], max deviation from mean {:.1}% (<= 20%)", sci(&c1), 100.0 * spread));
    assert!(pass);
}

#[test]
fn a8_residuals() {
    let (m, _) = simple_sweep();
    let e = m.expansion.as_ref().unwrap();
    let hier = e.branches.iter().flat_map(|b| b.residuals.iter().copied()).fold(0.0, f64::max);
    let pass = hier < 1e-8 && e.max_cell_residual < 1e-10 && e.max_corrector_mean < 1e-12;
    report(
        "A8",
        pass,
        format!(
            "U_p residual {hier:.2e} (< 1e-8), cell residual {:.2e} (< 1e-10), corrector mean {:.2e} (< 1e-12)",
            e.max_cell_residual, e.max_corrector_mean
        ),
    );
    assert!(pass);
}
