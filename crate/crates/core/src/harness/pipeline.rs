use super::config::RunConfig;
use crate::classical::{build_first_order, cyclic_check, CorrectorSuite};
use crate::error::{Error, Result};
use crate::expansion::{
    assemble, choose_p, divergence_cap, epsilon_condition, expand, EvalGrid, Expansion, ExpansionOptions,
    SplittingMatrix,
};
use crate::hermite::{default_scale, eigensolve_checked, MacroBasis, SpectrumResult};
use crate::poly::SlowPolynomial;
use crate::reference::{
    fit_rate, function_errors_1d, match_modes, quadratic_lower_bound, solve_leps, truncation_radius, ErrorRow,
    RateFit, ReferenceOptions, ReferenceSpectrum,
};
use crate::torus::{CellSolverOptions, CoefficientField, TorusGrid};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Gauge used for the undetermined kernel components of the correctors.
pub const GAUGE: &str = "kernel components of deferred normalizations set to 0; top-level ones set to 0; mu_1 set to 0";

/// Largest acceptable relative residual of the macroscopic hierarchy.
pub const HIERARCHY_TOLERANCE: f64 = 1e-8;

/// Machine-readable warning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub code: String,
    pub message: String,
}

impl Warning {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Warning { code: code.into(), message: message.into() }
    }
}

/// Problem data shared by every stage.
#[derive(Clone, Debug)]
pub struct Context {
    pub config: RunConfig,
    pub a: CoefficientField,
    pub abar: Vec<Vec<f64>>,
    pub w: SlowPolynomial,
    pub basis: MacroBasis,
    pub cell: CellSolverOptions,
}

impl Context {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let p = &config.problem;
        let d = &config.discretization;
        let grid = TorusGrid::new(p.dim, d.torus_modes)?;
        let a = CoefficientField::from_spec(&p.coefficient, grid, p.theta)?;
        let cell = CellSolverOptions { tolerance: d.cell_tolerance, ..CellSolverOptions::default() };
        let abar = build_first_order(&a, &cell)?.abar;
        let w = p.potential.build(p.dim, &abar)?;
        let sigma = d.hermite_scale.unwrap_or_else(|| default_scale(&abar, &w));
        let basis = MacroBasis::new(p.dim, d.hermite_n, sigma)?;
        Ok(Context { config: config.clone(), a, abar, w, basis, cell })
    }

    pub fn expansion_options(&self, order: usize) -> ExpansionOptions {
        ExpansionOptions {
            cell: self.cell,
            degenerate_spacing: self.config.experiment.degenerate_spacing,
            ..ExpansionOptions::new(order)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogenizeReport {
    pub abar: Vec<Vec<f64>>,
    pub abar3: Vec<Vec<Vec<f64>>>,
    pub abar3_sym: Vec<Vec<Vec<f64>>>,
    pub cyclic: f64,
    pub corrector_covariance: Vec<Vec<f64>>,
    pub max_cell_residual: f64,
    pub cell_iterations: usize,
}

pub fn homogenize(ctx: &Context) -> Result<HomogenizeReport> {
    let s = CorrectorSuite::build_with(&ctx.a, &ctx.cell)?;
    Ok(HomogenizeReport {
        cyclic: cyclic_check(&s.abar3_sym),
        corrector_covariance: s.corrector_covariance(),
        max_cell_residual: s.reports.iter().map(|r| r.residual).fold(0.0, f64::max),
        cell_iterations: s.reports.iter().map(|r| r.iterations).sum(),
        abar: s.abar,
        abar3: s.abar3,
        abar3_sym: s.abar3_sym,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub basis: MacroBasis,
    pub potential: String,
    pub eigenvalues: Vec<f64>,
    /// (1-based start, size).
    pub clusters: Vec<(usize, usize)>,
    pub gaps: Vec<Option<f64>>,
    pub max_residual: f64,
    pub orthonormality: f64,
}

pub fn spectrum(ctx: &Context) -> Result<(SpectrumResult, SpectrumReport)> {
    let count = ctx.config.experiment.count;
    let spec = eigensolve_checked(&ctx.abar, &ctx.w, &ctx.basis, count, ctx.config.discretization.hermite_check_n)?;
    let report = SpectrumReport {
        basis: ctx.basis,
        potential: ctx.w.to_string(),
        eigenvalues: spec.values[..count].to_vec(),
        clusters: spec.clusters.iter().map(|(s, n)| (s + 1, *n)).collect(),
        gaps: spec.gaps.clone(),
        max_residual: spec.max_residual,
        orthonormality: spec.orthonormality,
    };
    Ok((spec, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub label: String,
    pub mu: Vec<f64>,
    pub rotation: Vec<f64>,
    pub residuals: Vec<f64>,
    pub mu1_measured: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub epsilon: f64,
    pub order: usize,
    /// One value per branch.
    pub lambda_tilde: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpandReport {
    pub j: usize,
    pub lambda0: f64,
    pub gap: f64,
    pub cluster_start: usize,
    pub cluster_size: usize,
    pub order: usize,
    pub branches: Vec<BranchReport>,
    pub splitting: Option<SplittingMatrix>,
    pub predictions: Vec<Prediction>,
    pub max_cell_residual: f64,
    pub max_corrector_mean: f64,
    pub max_corrector: f64,
    pub gauge: String,
}

pub fn branch_label(expansion: &Expansion, r: usize) -> String {
    if expansion.cluster_size == 1 {
        "simple".into()
    } else {
        format!("r{r}")
    }
}

/// Order used at eps: the configured P or the automatic rule, then capped.
fn order_at(ctx: &Context, eps: f64, lambda0: f64, gap: f64, warnings: &mut Vec<Warning>) -> usize {
    let e = &ctx.config.experiment;
    match e.order {
        Some(p) => p,
        None => match choose_p(eps, lambda0, gap, e.c) {
            Ok(p) => p,
            Err(err) => {
                warnings.push(Warning::new("EpsilonTooLarge", format!("eps = {eps}: {err}")));
                2
            }
        },
    }
}

pub fn expand_stage(ctx: &Context, spec: &SpectrumResult) -> Result<(Expansion, ExpandReport, Vec<Warning>)> {
    let e = &ctx.config.experiment;
    let mut warnings = Vec::new();
    let lambda0 = spec.cluster_value(e.j);
    let gap = crate::hermite::spectral_gap(spec, e.j)?;
    let orders: Vec<usize> = e.epsilons.iter().map(|&eps| order_at(ctx, eps, lambda0, gap, &mut warnings)).collect();
    let order = orders.iter().copied().max().unwrap_or(2).max(e.function_order.unwrap_or(0));
    let expansion = expand(&ctx.a, &ctx.w, spec, e.j, &ctx.expansion_options(order))?;
    for &eps in &e.epsilons {
        if let Some(msg) = epsilon_condition(eps, lambda0, gap, e.c) {
            warnings.push(Warning::new("EpsilonConditionViolated", msg));
        }
    }
    let predictions = e
        .epsilons
        .iter()
        .zip(&orders)
        .map(|(&eps, &p)| {
            let top = expansion.branches.iter().map(|b| b.order()).min().unwrap_or(p);
            let p = match e.order {
                Some(_) => p.min(top),
                None => expansion.branches.iter().map(|b| divergence_cap(eps, &b.mu, p.min(top))).min().unwrap_or(p),
            };
            Prediction {
                epsilon: eps,
                order: p,
                lambda_tilde: expansion.branches.iter().map(|b| b.lambda_tilde(eps, p)).collect(),
            }
        })
        .collect();
    let mut branches = Vec::new();
    for (r, b) in expansion.branches.iter().enumerate() {
        if let Some(worst) = b.residuals.iter().copied().reduce(f64::max) {
            if worst > HIERARCHY_TOLERANCE {
                warnings.push(Warning::new(
                    "HierarchyResidual",
                    format!("branch {r}: relative residual {worst:e} exceeds {HIERARCHY_TOLERANCE:e}"),
                ));
            }
        }
        branches.push(BranchReport {
            label: branch_label(&expansion, r),
            mu: b.mu.clone(),
            rotation: b.rotation.clone(),
            residuals: b.residuals.clone(),
            mu1_measured: b.mu1_measured,
        });
    }
    let table = &expansion.branches[0].table;
    let (res, mean) = expansion.branches.iter().map(|b| b.table.diagnostics()).fold((0.0f64, 0.0f64), |acc, x| {
        (acc.0.max(x.0), acc.1.max(x.1))
    });
    let report = ExpandReport {
        j: e.j,
        lambda0,
        gap,
        cluster_start: expansion.cluster_start,
        cluster_size: expansion.cluster_size,
        order,
        branches,
        splitting: expansion.splitting.clone(),
        predictions,
        max_cell_residual: res,
        max_corrector_mean: mean,
        max_corrector: table.max_corrector(),
        gauge: GAUGE.into(),
    };
    Ok((expansion, report, warnings))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceReport {
    pub epsilon: f64,
    pub method: String,
    pub h: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    pub unknowns: usize,
    pub eigenvalues: Vec<f64>,
    pub richardson: Vec<f64>,
    pub error_estimate: Vec<f64>,
}

/// Reference eigenpairs needed to cover the cluster of j plus two more.
pub fn reference_count(spec: &SpectrumResult, j: usize) -> usize {
    let (s, n) = spec.cluster_of(j).unwrap_or((j - 1, 1));
    s + n + 2
}

pub fn reference_options(ctx: &Context, spec: &SpectrumResult) -> ReferenceOptions {
    let d = &ctx.config.discretization;
    let j = ctx.config.experiment.j;
    let count = reference_count(spec, j);
    let lambda = spec.values[count.min(spec.count) - 1];
    let radius = d.radius.unwrap_or_else(|| truncation_radius(lambda, quadratic_lower_bound(&ctx.w), d.radius_safety));
    ReferenceOptions {
        h_ratio: d.h_ratio,
        min_ratio: d.min_ratio,
        radius,
        count,
        richardson: d.richardson,
        error_estimate: d.error_estimate,
        max_unknowns: d.max_unknowns,
        shift: 0.0,
    }
}

pub fn reference_stage(ctx: &Context, spec: &SpectrumResult, eps: f64) -> Result<(ReferenceSpectrum, ReferenceReport)> {
    let opts = reference_options(ctx, spec);
    let r = solve_leps(&ctx.a, &ctx.w, eps, &opts)?;
    let report = ReferenceReport {
        epsilon: eps,
        method: r.method.into(),
        h: r.grid.h,
        radius: r.grid.radius,
        unknowns: r.grid.unknowns(),
        eigenvalues: r.values.clone(),
        richardson: r.richardson.clone(),
        error_estimate: r.error_estimate.clone(),
    };
    Ok((r, report))
}

/// Error rows of every branch at one eps, each with the reference error
/// estimate of the matched eigenvalue.
pub fn compare(
    ctx: &Context,
    expansion: &Expansion,
    prediction: &Prediction,
    reference: &ReferenceSpectrum,
) -> Result<Vec<(ErrorRow, f64)>> {
    let eps = prediction.epsilon;
    let mut used = Vec::new();
    let mut rows = Vec::new();
    for (r, b) in expansion.branches.iter().enumerate() {
        let (idx, _, _) = match_modes(reference, &b.u[0])?;
        if used.contains(&idx) {
            return Err(Error::MatchingAmbiguous(1.0));
        }
        used.push(idx);
        let lambda_tilde = prediction.lambda_tilde[r];
        let rich = reference.richardson[idx];
        let (l2, h1) = match reference.mode_on_nodes(idx) {
            Some(psi) => {
                let nodes = reference.grid.nodes();
                let order = ctx.config.experiment.function_order.unwrap_or(prediction.order);
                let w_eps = assemble(b, eps, order, &EvalGrid::Line(nodes.clone()))?;
                let phi0 = b.u[0].eval_line(&nodes);
                let e = function_errors_1d(&psi, &w_eps.values, &phi0, reference.grid.h);
                (e.l2, e.h1)
            }
            None => (f64::NAN, f64::NAN),
        };
        let estimate = reference.error_estimate[idx];
        rows.push((ErrorRow {
            epsilon: eps,
            j: idx + 1,
            branch: branch_label(expansion, r),
            lambda_ref: reference.values[idx],
            lambda_ref_richardson: rich,
            lambda_tilde,
            eig_err: (rich - lambda_tilde).abs(),
            l2_err: l2,
            h1_err: h1,
            h: reference.grid.h,
            radius: reference.grid.radius,
            runtime_s: 0.0,
        }, if estimate.is_nan() { 0.0 } else { estimate }));
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub series: String,
    pub branch: String,
    pub fit: Option<RateFit>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<ErrorRow>,
    pub references: Vec<ReferenceReport>,
    pub fits: Vec<FitReport>,
    /// max over eps of |lambda_eps - lambda_0| / (eps lambda_0^{3/2}).
    pub c1: f64,
}

fn fits_for(rows: &[ErrorRow], lambda0: f64, estimates: &[f64], warnings: &mut Vec<Warning>) -> Vec<FitReport> {
    let mut labels: Vec<String> = rows.iter().map(|r| r.branch.clone()).collect();
    labels.sort();
    labels.dedup();
    let mut out = Vec::new();
    for label in labels {
        let sel: Vec<(usize, &ErrorRow)> = rows.iter().enumerate().filter(|(_, r)| r.branch == label).collect();
        let eps: Vec<f64> = sel.iter().map(|(_, r)| r.epsilon).collect();
        let series: Vec<(&str, Vec<f64>, Option<Vec<f64>>)> = vec![
            ("eig_err", sel.iter().map(|(_, r)| r.eig_err).collect(), Some(sel.iter().map(|(k, _)| estimates[*k]).collect())),
            ("l2_err", sel.iter().map(|(_, r)| r.l2_err).collect(), None),
            ("h1_err", sel.iter().map(|(_, r)| r.h1_err).collect(), None),
            (
                "zeroth_err",
                sel.iter().map(|(_, r)| (r.lambda_ref_richardson - lambda0).abs()).collect(),
                Some(sel.iter().map(|(k, _)| estimates[*k]).collect()),
            ),
        ];
        for (name, err, est) in series {
            if err.iter().all(|e| e.is_nan()) {
                continue;
            }
            match fit_rate(&eps, &err, est.as_deref()) {
                Ok(f) => out.push(FitReport { series: name.into(), branch: label.clone(), fit: Some(f), error: None }),
                Err(e) => {
                    let code = match e {
                        Error::DegenerateFit(_) => "DegenerateFit",
                        Error::InsufficientPoints(_) => "InsufficientPoints",
                        _ => "FitFailed",
                    };
                    warnings.push(Warning::new(code, format!("{label}/{name}: {e}")));
                    out.push(FitReport { series: name.into(), branch: label.clone(), fit: None, error: Some(e.to_string()) });
                }
            }
        }
    }
    out
}

pub fn sweep(
    ctx: &Context,
    spec: &SpectrumResult,
    expansion: &Expansion,
    report: &ExpandReport,
) -> Result<(SweepReport, Vec<Warning>)> {
    let per_eps: Vec<Result<(Vec<(ErrorRow, f64)>, ReferenceReport)>> = report
        .predictions
        .par_iter()
        .map(|pred| {
            let (r, rep) = reference_stage(ctx, spec, pred.epsilon)?;
            Ok((compare(ctx, expansion, pred, &r)?, rep))
        })
        .collect();
    let mut rows = Vec::new();
    let mut references = Vec::new();
    let mut estimates = Vec::new();
    for item in per_eps {
        let (rs, rep) = item?;
        for (row, est) in rs {
            rows.push(row);
            estimates.push(est);
        }
        references.push(rep);
    }
    let mut warnings = Vec::new();
    let fits = fits_for(&rows, report.lambda0, &estimates, &mut warnings);
    let c1 = rows
        .iter()
        .map(|r| (r.lambda_ref_richardson - report.lambda0).abs() / (r.epsilon * report.lambda0.powf(1.5)))
        .fold(0.0, f64::max);
    Ok((SweepReport { rows, references, fits, c1 }, warnings))
}

/// Everything a run produced; the embedded config reproduces it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub config: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub homogenize: Option<HomogenizeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expansion: Option<ExpandReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub references: Option<Vec<ReferenceReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepReport>,
    pub warnings: Vec<Warning>,
    pub wall_clock_s: f64,
}

/// Pipeline stages, each including the ones before it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Homogenize,
    Spectrum,
    Expand,
    Reference,
    Sweep,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Homogenize => "homogenize",
            Stage::Spectrum => "spectrum",
            Stage::Expand => "expand",
            Stage::Reference => "reference",
            Stage::Sweep => "sweep",
        }
    }
}

/// Runs the pipeline up to `stage`.
pub fn run(config: &RunConfig, source: &str, stage: Stage) -> Result<RunManifest> {
    let start = Instant::now();
    let ctx = Context::new(config)?;
    let mut m = RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        command: stage.name().into(),
        config_sha256: super::config::config_hash(source),
        config: source.into(),
        homogenize: None,
        spectrum: None,
        expansion: None,
        references: None,
        sweep: None,
        warnings: Vec::new(),
        wall_clock_s: 0.0,
    };
    m.homogenize = Some(homogenize(&ctx)?);
    if stage >= Stage::Spectrum {
        let (spec, rep) = spectrum(&ctx)?;
        m.spectrum = Some(rep);
        if stage == Stage::Reference {
            let refs: Result<Vec<ReferenceReport>> = config
                .experiment
                .epsilons
                .par_iter()
                .map(|&eps| reference_stage(&ctx, &spec, eps).map(|x| x.1))
                .collect();
            m.references = Some(refs?);
        } else if stage >= Stage::Expand {
            let (expansion, rep, warnings) = expand_stage(&ctx, &spec)?;
            m.warnings.extend(warnings);
            if stage == Stage::Sweep {
                let (sw, warnings) = sweep(&ctx, &spec, &expansion, &rep)?;
                m.warnings.extend(warnings);
                m.sweep = Some(sw);
            }
            m.expansion = Some(rep);
        }
    }
    m.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(m)
}

/// CSV of error rows; runtime_s is written as 0 so that output is reproducible.
pub fn rows_to_csv(rows: &[ErrorRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record([
            "epsilon",
            "j",
            "branch",
            "lambda_ref",
            "lambda_ref_richardson",
            "lambda_tilde",
            "eig_err",
            "l2_err",
            "h1_err",
            "h",
            "R",
            "runtime_s",
        ])
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}
