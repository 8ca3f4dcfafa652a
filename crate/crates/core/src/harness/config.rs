use crate::error::{Error, Result};
use crate::poly::{MultiIndex, SlowPolynomial};
use crate::torus::CoefficientSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// One monomial c x^e of the potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub exponents: Vec<u32>,
    pub coefficient: f64,
}

/// The potential W, either as explicit monomials or by name:
/// `"squared-norm"` is |x|^2, `"inverse-homogenized"` is x . abar^{-1} x.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialSpec {
    Named(String),
    Terms(Vec<Monomial>),
}

impl PotentialSpec {
    /// Builds W; `abar` is needed for the homogenized form.
    pub fn build(&self, dim: usize, abar: &[Vec<f64>]) -> Result<SlowPolynomial> {
        match self {
            PotentialSpec::Named(n) if n == "squared-norm" => Ok(SlowPolynomial::squared_norm(dim)),
            PotentialSpec::Named(n) if n == "inverse-homogenized" => {
                let m = nalgebra::DMatrix::from_fn(dim, dim, |i, j| abar[i][j]);
                let inv = m.try_inverse().ok_or_else(|| Error::Config("homogenized matrix is singular".into()))?;
                let q: Vec<Vec<f64>> = (0..dim).map(|i| (0..dim).map(|j| 0.5 * (inv[(i, j)] + inv[(j, i)])).collect()).collect();
                Ok(SlowPolynomial::quadratic_form(&q))
            }
            PotentialSpec::Named(n) => Err(Error::Config(format!("unknown potential '{n}'"))),
            PotentialSpec::Terms(terms) => {
                let mut p = SlowPolynomial::zero(dim);
                for t in terms {
                    if t.exponents.len() != dim {
                        return Err(Error::Config(format!("monomial {:?} does not have {dim} exponents", t.exponents)));
                    }
                    p.add_term(MultiIndex(t.exponents.clone()), t.coefficient);
                }
                Ok(p)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dim: usize,
    pub coefficient: CoefficientSpec,
    /// Upper ellipticity bound (a xi.xi <= theta |xi|^2); taken from the samples when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub potential: PotentialSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationConfig {
    /// Fourier modes per axis of the unit cell.
    pub torus_modes: usize,
    /// Hermite functions per axis.
    pub hermite_n: usize,
    /// Hermite length scale; chosen from abar and W when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hermite_scale: Option<f64>,
    /// Basis size for the self-convergence check of the macroscopic spectrum.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hermite_check_n: Option<usize>,
    /// Fine grid spacing h = eps / h_ratio.
    pub h_ratio: f64,
    /// Reject grids with eps / h below this.
    pub min_ratio: f64,
    pub radius_safety: f64,
    /// Fixed box half-width; overrides the safety rule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    pub richardson: bool,
    pub error_estimate: bool,
    pub max_unknowns: usize,
    pub cell_tolerance: f64,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        DiscretizationConfig {
            torus_modes: 64,
            hermite_n: 64,
            hermite_scale: None,
            hermite_check_n: None,
            h_ratio: 16.0,
            min_ratio: 8.0,
            radius_safety: 6.5,
            radius: None,
            richardson: true,
            error_estimate: true,
            max_unknowns: 1_000_000,
            cell_tolerance: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// 1-based eigenvalue index.
    pub j: usize,
    /// Sorted descending.
    pub epsilons: Vec<f64>,
    /// Expansion order P; chosen per eps by the log|log| rule when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    /// Order of the assembled eigenfunction; defaults to `order`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function_order: Option<usize>,
    /// Constant of the epsilon condition and of the automatic order.
    #[serde(default = "one")]
    pub c: f64,
    /// Macroscopic eigenvalues to compute.
    #[serde(default = "twelve")]
    pub count: usize,
    /// Tolerance below which the eigenvalues of the splitting matrix count as repeated.
    #[serde(default = "spacing")]
    pub degenerate_spacing: f64,
}

fn one() -> f64 {
    1.0
}

fn twelve() -> usize {
    12
}

fn spacing() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into(), csv: true }
    }
}

/// A complete run description, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub discretization: DiscretizationConfig,
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Largest supported eigenvalue index.
pub const MAX_INDEX: usize = 12;

impl RunConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<(Self, String)> {
        let src = std::fs::read_to_string(path)?;
        Ok((Self::from_toml(&src)?, src))
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        let d = &self.discretization;
        let e = &self.experiment;
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=2).contains(&p.dim) {
            return bad(format!("dim must be 1 or 2, got {}", p.dim));
        }
        if p.coefficient.dim() != p.dim {
            return bad(format!("coefficient is {}-dimensional, problem is {}", p.coefficient.dim(), p.dim));
        }
        if let Some(t) = p.theta {
            if !(t >= 1.0 && t.is_finite()) {
                return bad(format!("theta must be a finite bound >= 1, got {t}"));
            }
        }
        if d.torus_modes < 4 || d.torus_modes % 2 != 0 {
            return bad(format!("torus_modes must be even and >= 4, got {}", d.torus_modes));
        }
        if d.hermite_n < 8 {
            return bad(format!("hermite_n must be >= 8, got {}", d.hermite_n));
        }
        for (name, v) in [
            ("h_ratio", d.h_ratio),
            ("min_ratio", d.min_ratio),
            ("radius_safety", d.radius_safety),
            ("cell_tolerance", d.cell_tolerance),
            ("c", e.c),
            ("degenerate_spacing", e.degenerate_spacing),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if let Some(r) = d.radius {
            if !(r > 0.0) {
                return bad(format!("radius must be positive, got {r}"));
            }
        }
        if let Some(s) = d.hermite_scale {
            if !(s > 0.0) {
                return bad(format!("hermite_scale must be positive, got {s}"));
            }
        }
        if e.j == 0 || e.j > MAX_INDEX {
            return bad(format!("j must be in 1..={MAX_INDEX}, got {}", e.j));
        }
        if e.count < e.j + 1 {
            return bad(format!("count {} must exceed j = {}", e.count, e.j));
        }
        if e.epsilons.is_empty() {
            return bad("epsilon list is empty".into());
        }
        if e.epsilons.iter().any(|x| !(*x > 0.0 && *x < 1.0)) {
            return bad("epsilons must lie in (0, 1)".into());
        }
        if e.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return bad("epsilons must be sorted in strictly descending order".into());
        }
        if let PotentialSpec::Named(n) = &p.potential {
            if n != "squared-norm" && n != "inverse-homogenized" {
                return bad(format!("unknown potential '{n}'"));
            }
        }
        Ok(())
    }
}

/// Hex sha256 of the configuration text.
pub fn config_hash(src: &str) -> String {
    let digest = Sha256::digest(src.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[problem]
dim = 1
potential = "squared-norm"
coefficient = { kind = "expression", entries = [["1"]] }

[experiment]
j = 1
epsilons = [0.1]
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.discretization, DiscretizationConfig::default());
        assert_eq!(c.experiment.count, 12);
        let again = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn unsorted_epsilons_rejected() {
        let src = MINIMAL.replace("[0.1]", "[0.05, 0.1]");
        assert!(matches!(RunConfig::from_toml(&src), Err(Error::Config(_))));
    }

    #[test]
    fn theta_is_an_upper_bound() {
        let with = |t: &str| MINIMAL.replace("potential =", &format!("theta = {t}\npotential ="));
        assert!(RunConfig::from_toml(&with("4.0")).is_ok());
        assert!(RunConfig::from_toml(&with("0.5")).is_err());
    }

    #[test]
    fn explicit_terms() {
        let src = MINIMAL.replace(
            "potential = \"squared-norm\"",
            "potential = [{ exponents = [2], coefficient = 1.0 }, { exponents = [0], coefficient = 0.5 }]",
        );
        let c = RunConfig::from_toml(&src).unwrap();
        let w = c.problem.potential.build(1, &[vec![1.0]]).unwrap();
        assert_eq!(w.eval(&[2.0]), 4.5);
    }
}
