use super::{spectral, PeriodicField, TorusGrid};
use crate::error::{Error, Result};
use evalexpr::{
    build_operator_tree, ContextWithMutableFunctions, ContextWithMutableVariables, DefaultNumericTypes, Function,
    HashMapContext, Node, Value,
};
use serde::{Deserialize, Serialize};

/// How a coefficient field is given in a configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientSpec {
    /// Matrix entries as expressions in y1, y2 (row-major, d x d).
    Expression { entries: Vec<Vec<String>> },
    /// Matrix entries sampled on a uniform grid with `modes` points per axis.
    Samples { modes: usize, entries: Vec<Vec<Vec<f64>>> },
}

impl CoefficientSpec {
    pub fn dim(&self) -> usize {
        match self {
            CoefficientSpec::Expression { entries } => entries.len(),
            CoefficientSpec::Samples { entries, .. } => entries.len(),
        }
    }

    /// Diagonal coefficient from per-axis expressions.
    pub fn diagonal(exprs: &[&str]) -> Self {
        let d = exprs.len();
        let entries = (0..d)
            .map(|i| (0..d).map(|j| if i == j { exprs[i].to_string() } else { "0".to_string() }).collect())
            .collect();
        CoefficientSpec::Expression { entries }
    }
}

/// Appends ".0" to bare integer literals so that evaluation never falls
/// back to integer arithmetic.
fn floatify(expr: &str) -> String {
    let chars: Vec<char> = expr.chars().collect();
    let mut out = String::with_capacity(expr.len() + 8);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let prev_ident = i > 0 && (chars[i - 1].is_alphanumeric() || chars[i - 1] == '_' || chars[i - 1] == '.');
        if c.is_ascii_digit() && !prev_ident {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut has_dot = false;
            if i < chars.len() && chars[i] == '.' {
                has_dot = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let mantissa: String = chars[start..i].iter().collect();
            out.push_str(&mantissa);
            if !has_dot {
                out.push_str(".0");
            } else if mantissa.ends_with('.') {
                out.push('0');
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                out.push(chars[i]);
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    out.push(chars[i]);
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    out.push(chars[i]);
                    i += 1;
                }
            }
            continue;
        }
        out.push(c);
        i += 1;
    }
    out
}

fn unary(f: fn(f64) -> f64) -> Function<DefaultNumericTypes> {
    Function::new(move |arg: &Value<DefaultNumericTypes>| {
        let x = arg.as_number()?;
        Ok(Value::Float(f(x)))
    })
}

/// Compiled scalar expression in the variables y1, y2.
pub struct Expression {
    node: Node<DefaultNumericTypes>,
    source: String,
}

impl Expression {
    pub fn parse(src: &str) -> Result<Self> {
        let node = build_operator_tree::<DefaultNumericTypes>(&floatify(src))
            .map_err(|e| Error::Config(format!("cannot parse expression '{src}': {e}")))?;
        Ok(Expression { node, source: src.to_string() })
    }

    fn context() -> HashMapContext<DefaultNumericTypes> {
        let mut ctx = HashMapContext::new();
        let fns: [(&str, fn(f64) -> f64); 6] =
            [("cos", f64::cos), ("sin", f64::sin), ("exp", f64::exp), ("sqrt", f64::sqrt), ("tanh", f64::tanh), ("abs", f64::abs)];
        for (name, f) in fns {
            ctx.set_function(name.to_string(), unary(f)).expect("mutable context");
        }
        ctx.set_value("pi".to_string(), Value::Float(std::f64::consts::PI)).expect("mutable context");
        ctx
    }

    /// Samples on every grid point.
    pub fn sample(&self, grid: TorusGrid) -> Result<Vec<f64>> {
        let mut ctx = Expression::context();
        let mut out = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let p = grid.point(idx);
            ctx.set_value("y1".into(), Value::Float(p[0])).expect("mutable context");
            ctx.set_value("y".into(), Value::Float(p[0])).expect("mutable context");
            ctx.set_value("y2".into(), Value::Float(p[1])).expect("mutable context");
            let v = self
                .node
                .eval_number_with_context(&ctx)
                .map_err(|e| Error::Config(format!("cannot evaluate '{}': {e}", self.source)))?;
            out.push(v);
        }
        Ok(out)
    }
}

/// Symmetric, uniformly elliptic periodic coefficient a(y) with
/// |xi|^2 <= a xi.xi <= theta |xi|^2.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    pub a: PeriodicField,
    pub theta: f64,
    /// Entries resampled on the 3/2-padded grid, used by the cell operator.
    pub(crate) padded: Vec<Vec<f64>>,
    pub(crate) padded_n: usize,
    /// Mean of trace(a)/d, used to scale the preconditioner.
    pub(crate) scale: f64,
    pub warnings: Vec<String>,
}

impl CoefficientField {
    /// Validates symmetry and ellipticity. If `theta` is None the smallest
    /// admissible ratio (largest pointwise eigenvalue) is used.
    pub fn new(a: PeriodicField, theta: Option<f64>) -> Result<Self> {
        if a.rank != 2 {
            return Err(Error::InvalidCoefficient("coefficient must be a matrix field".into()));
        }
        let d = a.grid.dim;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in 0..a.grid.len() {
            let e = |i: usize, j: usize| a.entry(i, j)[p];
            if d == 2 {
                let asym = (e(0, 1) - e(1, 0)).abs();
                if asym > 1e-13 * (1.0 + e(0, 1).abs()) {
                    return Err(Error::InvalidCoefficient(format!("not symmetric at grid point {p}: asymmetry {asym:e}")));
                }
                let tr = e(0, 0) + e(1, 1);
                let det = e(0, 0) * e(1, 1) - e(0, 1) * e(1, 0);
                let disc = ((tr * tr / 4.0) - det).max(0.0).sqrt();
                lo = lo.min(tr / 2.0 - disc);
                hi = hi.max(tr / 2.0 + disc);
            } else {
                lo = lo.min(e(0, 0));
                hi = hi.max(e(0, 0));
            }
        }
        if lo < 1.0 - 1e-10 {
            return Err(Error::InvalidCoefficient(format!("lower ellipticity bound violated: min eigenvalue {lo}")));
        }
        let theta = match theta {
            Some(t) => {
                if hi > t * (1.0 + 1e-10) {
                    return Err(Error::InvalidCoefficient(format!("upper ellipticity bound violated: {hi} > theta = {t}")));
                }
                t
            }
            None => hi.max(1.0),
        };
        let mut warnings = Vec::new();
        if a.tail_energy() > 1e-20 {
            warnings.push("RoughCoefficient".to_string());
        }
        let n = a.grid.n;
        let m = spectral::padded_size(n);
        let padded = a
            .data
            .iter()
            .map(|c| spectral::inverse(d, m, &spectral::pad(d, n, m, &spectral::forward(d, n, c))))
            .collect();
        let scale = (0..d).map(|i| a.entry(i, i).iter().sum::<f64>() / a.grid.len() as f64).sum::<f64>() / d as f64;
        Ok(CoefficientField { a, theta, padded, padded_n: m, scale, warnings })
    }

    pub fn from_spec(spec: &CoefficientSpec, grid: TorusGrid, theta: Option<f64>) -> Result<Self> {
        let d = grid.dim;
        if spec.dim() != d {
            return Err(Error::Config(format!("coefficient has {} rows, expected {d}", spec.dim())));
        }
        let mut comps = Vec::with_capacity(d * d);
        match spec {
            CoefficientSpec::Expression { entries } => {
                for row in entries {
                    if row.len() != d {
                        return Err(Error::Config("coefficient matrix must be square".into()));
                    }
                    for e in row {
                        comps.push(Expression::parse(e)?.sample(grid)?);
                    }
                }
            }
            CoefficientSpec::Samples { modes, entries } => {
                let src = TorusGrid::new(d, *modes)?;
                for row in entries {
                    if row.len() != d {
                        return Err(Error::Config("coefficient matrix must be square".into()));
                    }
                    for e in row {
                        if e.len() != src.len() {
                            return Err(Error::Config(format!("expected {} samples, got {}", src.len(), e.len())));
                        }
                        let f = PeriodicField::scalar(src, e.clone());
                        let f = if *modes == grid.n { f } else { f.resample(grid.n)? };
                        comps.push(f.data[0].clone());
                    }
                }
            }
        }
        CoefficientField::new(PeriodicField::matrix(grid, comps), theta)
    }

    /// Constant coefficient matrix.
    pub fn constant(grid: TorusGrid, m: &[Vec<f64>]) -> Result<Self> {
        let d = grid.dim;
        let comps = (0..d * d).map(|k| vec![m[k / d][k % d]; grid.len()]).collect();
        CoefficientField::new(PeriodicField::matrix(grid, comps), None)
    }

    pub fn identity(grid: TorusGrid) -> Result<Self> {
        let d = grid.dim;
        let m: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        CoefficientField::constant(grid, &m)
    }

    pub fn grid(&self) -> TorusGrid {
        self.a.grid
    }

    pub fn dim(&self) -> usize {
        self.a.grid.dim
    }

    /// Same coefficient on a finer or coarser grid.
    pub fn resample(&self, n: usize) -> Result<Self> {
        CoefficientField::new(self.a.resample(n)?, Some(self.theta))
    }

    /// True when the field is diagonal with a_ii depending on y_i only.
    pub fn is_laminate_diagonal(&self) -> bool {
        let d = self.dim();
        let n = self.grid().n;
        if d == 1 {
            return true;
        }
        if self.a.entry(0, 1).iter().any(|v| v.abs() > 1e-14) {
            return false;
        }
        let a11 = self.a.entry(0, 0);
        let a22 = self.a.entry(1, 1);
        for i in 0..n {
            for j in 0..n {
                if (a11[i * n + j] - a11[i * n]).abs() > 1e-14 || (a22[i * n + j] - a22[j]).abs() > 1e-14 {
                    return false;
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_literals_become_floats() {
        assert_eq!(floatify("1/2 + cos(2*pi*y1)"), "1.0/2.0 + cos(2.0*pi*y1)");
        assert_eq!(floatify("1e3 + 2.5E-1 + y2"), "1.0e3 + 2.5E-1 + y2");
    }

    #[test]
    fn expression_sampling() {
        let g = TorusGrid::new(2, 4).unwrap();
        let v = Expression::parse("1/2 + sin(2*pi*y2)*cos(2*pi*y1)").unwrap().sample(g).unwrap();
        assert!((v[1] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn ellipticity_is_checked() {
        let g = TorusGrid::new(1, 16).unwrap();
        let spec = CoefficientSpec::diagonal(&["0.5 + 0*y1"]);
        assert!(CoefficientField::from_spec(&spec, g, None).is_err());
        let spec = CoefficientSpec::diagonal(&["2 + cos(2*pi*y1)"]);
        let a = CoefficientField::from_spec(&spec, g, None).unwrap();
        assert!((a.theta - 3.0).abs() < 1e-14);
        assert!(CoefficientField::from_spec(&spec, g, Some(2.0)).is_err());
    }
}
