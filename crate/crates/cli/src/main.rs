use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use twoscale::expansion::{assemble, EvalGrid};
use twoscale::harness::{
    expand_stage, plot_data, rows_to_csv, run, spectrum, verify, Context, RunConfig, RunManifest, Stage, VerifyOptions,
};
use twoscale::reference::{quadratic_lower_bound, truncation_radius};
use twoscale::Error;

const EXIT_INVARIANT: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "twoscale", version, about = "Two-scale spectral asymptotics for -div a(x/eps) grad + W")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args, Debug)]
struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the one in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Multiplies every invariant tolerance of `verify`.
    #[arg(long, global = true, default_value_t = 1.0)]
    tolerance_scale: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Homogenized matrix and third-order tensor.
    Homogenize,
    /// Eigenvalues of the homogenized operator.
    Spectrum,
    /// Eigenvalue corrections and predictions for every eps.
    Expand {
        /// Also write the assembled eigenfunction at the first eps on this many points per axis.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Fine-grid reference eigenvalues for every eps.
    Reference,
    /// Full pipeline with error table and rate fits.
    Sweep,
    /// Runs the invariant suite.
    Verify {
        /// Test hook: perturbs the third-order tensor before the cyclic check.
        #[arg(long, hide = true, default_value_t = 0.0)]
        inject_fault: f64,
    },
    /// Log-log series and fitted lines from a sweep manifest.
    PlotData {
        /// Manifest written by `sweep` (default: <out>/manifest.json).
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Numerical(String),
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn io(e: std::io::Error) -> Failure {
    Failure::Numerical(format!("i/o error: {e}"))
}

fn load(global: &Global) -> Result<(RunConfig, String), Failure> {
    let path = global.config.as_ref().ok_or_else(|| Failure::Config("--config is required".into()))?;
    let src = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let cfg = RunConfig::from_toml(&src)?;
    Ok((cfg, src))
}

fn out_dir(global: &Global, cfg: Option<&RunConfig>) -> Result<PathBuf, Failure> {
    let dir = match (&global.out, cfg) {
        (Some(d), _) => d.clone(),
        (None, Some(c)) => PathBuf::from(&c.output.dir),
        (None, None) => PathBuf::from("out"),
    };
    std::fs::create_dir_all(&dir).map_err(io)?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(io)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn write_manifest(dir: &Path, m: &RunManifest) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(m).map_err(|e| Failure::Numerical(e.to_string()))?;
    write(&dir.join("manifest.json"), &text)
}

fn stage(global: &Global, stage: Stage) -> Result<(RunManifest, RunConfig, PathBuf), Failure> {
    let (cfg, src) = load(global)?;
    let m = run(&cfg, &src, stage)?;
    for w in &m.warnings {
        eprintln!("warning {}: {}", w.code, w.message);
    }
    let dir = out_dir(global, Some(&cfg))?;
    write_manifest(&dir, &m)?;
    Ok((m, cfg, dir))
}

fn samples(global: &Global, n: usize, dir: &Path) -> Result<(), Failure> {
    let (cfg, _) = load(global)?;
    let ctx = Context::new(&cfg)?;
    let (spec, _) = spectrum(&ctx)?;
    let (expansion, report, _) = expand_stage(&ctx, &spec)?;
    let pred = &report.predictions[0];
    let half = truncation_radius(report.lambda0, quadratic_lower_bound(&ctx.w), 3.0);
    let xs: Vec<f64> = (0..n).map(|i| -half + 2.0 * half * i as f64 / (n.max(2) - 1) as f64).collect();
    let grid = if cfg.problem.dim == 1 { EvalGrid::Line(xs.clone()) } else { EvalGrid::Tensor(xs.clone(), xs.clone()) };
    let mut header = if cfg.problem.dim == 1 { "x".to_string() } else { "x1,x2".to_string() };
    let mut columns = Vec::new();
    for (r, b) in expansion.branches.iter().enumerate() {
        let a = assemble(b, pred.epsilon, pred.order, &grid)?;
        header.push_str(&format!(",w_{r}"));
        columns.push(a.values);
    }
    let mut text = header + "\n";
    for p in 0..grid.len() {
        let coords = if cfg.problem.dim == 1 { format!("{}", xs[p]) } else { format!("{},{}", xs[p / n], xs[p % n]) };
        text.push_str(&coords);
        for c in &columns {
            text.push_str(&format!(",{}", c[p]));
        }
        text.push('\n');
    }
    write(&dir.join("w_eps.csv"), &text)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let g = &cli.global;
    if let Some(n) = g.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::Config(format!("cannot start {n} workers: {e}")))?;
    }
    match &cli.command {
        Command::Homogenize => {
            let (m, _, _) = stage(g, Stage::Homogenize)?;
            if let Some(h) = m.homogenize {
                println!("abar = {:?}", h.abar);
                println!("cyclic defect = {:e}", h.cyclic);
            }
        }
        Command::Spectrum => {
            let (m, _, _) = stage(g, Stage::Spectrum)?;
            if let Some(s) = m.spectrum {
                for (k, v) in s.eigenvalues.iter().enumerate() {
                    println!("lambda_{} = {v:.12}", k + 1);
                }
            }
        }
        Command::Expand { samples: n } => {
            let (m, _, dir) = stage(g, Stage::Expand)?;
            if let Some(e) = &m.expansion {
                println!("lambda0 = {:.12}, gap = {:.6}, cluster size = {}", e.lambda0, e.gap, e.cluster_size);
                for b in &e.branches {
                    println!("{}: mu = {:?}", b.label, b.mu);
                }
            }
            if let Some(n) = n {
                samples(g, *n, &dir)?;
            }
        }
        Command::Reference => {
            let (m, _, _) = stage(g, Stage::Reference)?;
            for r in m.references.unwrap_or_default() {
                println!("eps = {}: {} (h = {}, R = {})", r.epsilon, r.method, r.h, r.radius);
            }
        }
        Command::Sweep => {
            let (m, cfg, dir) = stage(g, Stage::Sweep)?;
            if let Some(s) = &m.sweep {
                let csv = rows_to_csv(&s.rows)?;
                if cfg.output.csv {
                    write(&dir.join("errors.csv"), &csv)?;
                }
                print!("{csv}");
                for f in &s.fits {
                    match &f.fit {
                        Some(fit) => println!("{}/{}: slope {:.4}, r2 {:.6}", f.branch, f.series, fit.slope, fit.r2),
                        None => println!("{}/{}: {}", f.branch, f.series, f.error.as_deref().unwrap_or("no fit")),
                    }
                }
            }
        }
        Command::Verify { inject_fault } => {
            let opts = VerifyOptions { tolerance_scale: g.tolerance_scale, perturb_abar3: *inject_fault };
            let report = verify(opts)?;
            for c in &report.checks {
                let status = if c.pass { "PASS" } else { "FAIL" };
                match c.lower {
                    Some(lo) => println!("{status} {:<32} {:.3e} in [{lo:e}, {:e}]", c.name, c.value, c.threshold),
                    None => println!("{status} {:<32} {:.3e} <= {:e}", c.name, c.value, c.threshold),
                }
            }
            if g.config.is_some() || g.out.is_some() {
                let dir = out_dir(g, None)?;
                let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Numerical(e.to_string()))?;
                write(&dir.join("verify.json"), &text)?;
            }
            if !report.passed {
                return Err(Failure::Invariant(format!("{} invariant(s) failed", report.failures().len())));
            }
        }
        Command::PlotData { manifest } => {
            let cfg = match &g.config {
                Some(_) => Some(load(g)?.0),
                None => None,
            };
            let dir = out_dir(g, cfg.as_ref())?;
            let path = manifest.clone().unwrap_or_else(|| dir.join("manifest.json"));
            let text = std::fs::read_to_string(&path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let m: RunManifest =
                serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            for s in plot_data(&m)? {
                write(&dir.join(s.file_name()), &s.to_csv()?)?;
                println!("{}/{}: slope {:.4}, intercept {:.4}, r2 {:.6}", s.branch, s.name, s.slope, s.intercept, s.r2);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invariant(m)) => {
            eprintln!("invariant failure: {m}");
            ExitCode::from(EXIT_INVARIANT)
        }
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}
