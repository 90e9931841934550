//! Scalar coefficient fields over multi-time configuration space.
//!
//! Expressions are small immutable trees. Differentiation rewrites the tree
//! symbolically; the only simplifications performed are constant folding
//! and absorption of 0 and 1.

mod parser;

pub use parser::{parse, parse_constant, ParseError, ParseErrorKind};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("coordinate x{particle}_{mu} is not present in a {available}-particle configuration")]
    MissingCoordinate {
        particle: usize,
        mu: usize,
        available: usize,
    },
    #[error("value {value} violates the domain guard |v| >= {min_abs}")]
    Domain { value: f64, min_abs: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Sinh,
    Cosh,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply(self, z: Complex64) -> Complex64 {
        match self {
            Func::Exp => z.exp(),
            Func::Sin => z.sin(),
            Func::Cos => z.cos(),
            Func::Sinh => z.sinh(),
            Func::Cosh => z.cosh(),
            Func::Sqrt => branch_sqrt(z),
        }
    }
}

/// Principal square root, with negative reals mapped to `i·sqrt(|x|)`
/// regardless of the sign of a zero imaginary part.
pub fn branch_sqrt(z: Complex64) -> Complex64 {
    if z.im == 0.0 && z.re < 0.0 {
        Complex64::new(0.0, (-z.re).sqrt())
    } else {
        z.sqrt()
    }
}

/// One space-time point per particle, `(t, x, y, z)` in natural units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacetimeConfig(pub Vec<[f64; 4]>);

impl SpacetimeConfig {
    pub fn particles(&self) -> usize {
        self.0.len()
    }

    pub fn zeros(n: usize) -> Self {
        SpacetimeConfig(vec![[0.0; 4]; n])
    }

    /// Flattened coordinates `x_1^0..x_1^3, x_2^0..`.
    pub fn flat(&self) -> Vec<f64> {
        self.0.iter().flatten().copied().collect()
    }

    pub fn from_flat(v: &[f64]) -> Self {
        SpacetimeConfig(
            v.chunks(4)
                .map(|c| [c[0], c[1], c[2], c[3]])
                .collect(),
        )
    }

    pub fn get(&self, particle: usize, mu: usize) -> f64 {
        self.0[particle - 1][mu]
    }

    pub fn with(&self, particle: usize, mu: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.0[particle - 1][mu] = value;
        out
    }

    /// Adds `a` to every particle's four-vector.
    pub fn translated(&self, a: [f64; 4]) -> Self {
        SpacetimeConfig(
            self.0
                .iter()
                .map(|x| std::array::from_fn(|mu| x[mu] + a[mu]))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(Complex64),
    Param { name: Arc<str>, value: Complex64 },
    /// `x_k^μ`, `particle` is 1-based.
    Coord { particle: u8, mu: u8 },
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Num(ZERO)
    }

    pub fn one() -> Expr {
        Expr::Num(ONE)
    }

    pub fn real(v: f64) -> Expr {
        Expr::Num(Complex64::new(v, 0.0))
    }

    pub fn num(v: Complex64) -> Expr {
        Expr::Num(v)
    }

    pub fn param(name: &str, value: Complex64) -> Expr {
        Expr::Param {
            name: Arc::from(name),
            value,
        }
    }

    pub fn coord(particle: usize, mu: usize) -> Expr {
        assert!(particle >= 1 && mu < 4);
        Expr::Coord {
            particle: particle as u8,
            mu: mu as u8,
        }
    }

    fn as_num(&self) -> Option<Complex64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_num() == Some(ZERO)
    }

    pub fn is_one(&self) -> bool {
        self.as_num() == Some(ONE)
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Num(v) => Expr::Num(-v),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Expr::Num(x + y),
            (Some(x), _) if x == ZERO => b,
            (_, Some(y)) if y == ZERO => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Expr::Num(x - y),
            (Some(x), _) if x == ZERO => Expr::neg(b),
            (_, Some(y)) if y == ZERO => a,
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Expr::Num(x * y),
            (Some(x), _) if x == ZERO => Expr::zero(),
            (_, Some(y)) if y == ZERO => Expr::zero(),
            (Some(x), _) if x == ONE => b,
            (_, Some(y)) if y == ONE => a,
            (Some(x), _) if x == -ONE => Expr::neg(b),
            (_, Some(y)) if y == -ONE => Expr::neg(a),
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) if y != ZERO => Expr::Num(x / y),
            (Some(x), _) if x == ZERO => Expr::zero(),
            (_, Some(y)) if y == ONE => a,
            _ => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, n: u32) -> Expr {
        match (n, a.as_num()) {
            (0, _) => Expr::one(),
            (1, _) => a,
            (_, Some(x)) => Expr::Num(x.powu(n)),
            _ => Expr::Pow(Box::new(a), n),
        }
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        match a.as_num() {
            Some(x) if f != Func::Sqrt || x != ZERO => Expr::Num(f.apply(x)),
            _ => Expr::Call(f, Box::new(a)),
        }
    }

    /// Exact partial derivative with respect to `x_k^μ`.
    pub fn differentiate(&self, k: usize, mu: usize) -> Expr {
        match self {
            Expr::Num(_) | Expr::Param { .. } => Expr::zero(),
            Expr::Coord { particle, mu: m } => {
                if *particle as usize == k && *m as usize == mu {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Neg(a) => Expr::neg(a.differentiate(k, mu)),
            Expr::Add(a, b) => Expr::add(a.differentiate(k, mu), b.differentiate(k, mu)),
            Expr::Sub(a, b) => Expr::sub(a.differentiate(k, mu), b.differentiate(k, mu)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.differentiate(k, mu), (**b).clone()),
                Expr::mul((**a).clone(), b.differentiate(k, mu)),
            ),
            Expr::Div(a, b) => {
                let da = a.differentiate(k, mu);
                let db = b.differentiate(k, mu);
                Expr::sub(
                    Expr::div(da, (**b).clone()),
                    Expr::div(Expr::mul((**a).clone(), db), Expr::pow((**b).clone(), 2)),
                )
            }
            Expr::Pow(a, n) => {
                let da = a.differentiate(k, mu);
                Expr::mul(
                    Expr::mul(Expr::real(*n as f64), Expr::pow((**a).clone(), n - 1)),
                    da,
                )
            }
            Expr::Call(f, a) => {
                let da = a.differentiate(k, mu);
                if da.is_zero() {
                    return Expr::zero();
                }
                let inner = (**a).clone();
                let outer = match f {
                    Func::Exp => Expr::call(Func::Exp, inner),
                    Func::Sin => Expr::call(Func::Cos, inner),
                    Func::Cos => Expr::neg(Expr::call(Func::Sin, inner)),
                    Func::Sinh => Expr::call(Func::Cosh, inner),
                    Func::Cosh => Expr::call(Func::Sinh, inner),
                    Func::Sqrt => {
                        return Expr::div(
                            da,
                            Expr::mul(Expr::real(2.0), Expr::call(Func::Sqrt, inner)),
                        )
                    }
                };
                Expr::mul(outer, da)
            }
        }
    }

    pub fn evaluate(&self, x: &SpacetimeConfig) -> Result<Complex64, EvalError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Param { value, .. } => *value,
            Expr::Coord { particle, mu } => {
                let (p, m) = (*particle as usize, *mu as usize);
                if p > x.particles() {
                    return Err(EvalError::MissingCoordinate {
                        particle: p,
                        mu: m,
                        available: x.particles(),
                    });
                }
                Complex64::new(x.0[p - 1][m], 0.0)
            }
            Expr::Neg(a) => -a.evaluate(x)?,
            Expr::Add(a, b) => a.evaluate(x)? + b.evaluate(x)?,
            Expr::Sub(a, b) => a.evaluate(x)? - b.evaluate(x)?,
            Expr::Mul(a, b) => a.evaluate(x)? * b.evaluate(x)?,
            Expr::Div(a, b) => {
                let den = b.evaluate(x)?;
                if den == ZERO {
                    return Err(EvalError::DivisionByZero);
                }
                a.evaluate(x)? / den
            }
            Expr::Pow(a, n) => a.evaluate(x)?.powu(*n),
            Expr::Call(f, a) => f.apply(a.evaluate(x)?),
        })
    }

    /// Whether the expression mentions `x_k^μ` at all.
    pub fn depends_on(&self, k: usize, mu: usize) -> bool {
        self.any_coord(&|p, m| p == k && m == mu)
    }

    pub fn has_coordinates(&self) -> bool {
        self.any_coord(&|_, _| true)
    }

    /// Largest particle index referenced, 0 for none.
    pub fn max_particle(&self) -> usize {
        let mut out = 0;
        self.visit_coords(&mut |p, _| out = out.max(p));
        out
    }

    fn any_coord(&self, pred: &dyn Fn(usize, usize) -> bool) -> bool {
        let mut hit = false;
        self.visit_coords(&mut |p, m| hit |= pred(p, m));
        hit
    }

    fn visit_coords(&self, f: &mut dyn FnMut(usize, usize)) {
        match self {
            Expr::Num(_) | Expr::Param { .. } => {}
            Expr::Coord { particle, mu } => f(*particle as usize, *mu as usize),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.visit_coords(f),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.visit_coords(f);
                b.visit_coords(f);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(v) if v.im != 0.0 || v.re < 0.0 || v.re.is_sign_negative() => 0,
            _ => 5,
        }
    }
}

fn fmt_child(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => match (v.re, v.im) {
                (re, im) if im == 0.0 => write!(f, "{re}"),
                (re, im) if re == 0.0 && im == 1.0 => write!(f, "i"),
                (re, im) if re == 0.0 => write!(f, "{im}*i"),
                (re, im) => write!(f, "{re} + {im}*i"),
            },
            Expr::Param { name, .. } => write!(f, "{name}"),
            Expr::Coord { particle, mu } => write!(f, "x{particle}_{mu}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                fmt_child(f, a, 4)
            }
            Expr::Add(a, b) => {
                fmt_child(f, a, 1)?;
                write!(f, " + ")?;
                fmt_child(f, b, 1)
            }
            Expr::Sub(a, b) => {
                fmt_child(f, a, 1)?;
                write!(f, " - ")?;
                fmt_child(f, b, 2)
            }
            Expr::Mul(a, b) => {
                fmt_child(f, a, 2)?;
                write!(f, "*")?;
                fmt_child(f, b, 3)
            }
            Expr::Div(a, b) => {
                fmt_child(f, a, 2)?;
                write!(f, "/")?;
                fmt_child(f, b, 3)
            }
            Expr::Pow(a, n) => {
                fmt_child(f, a, 5)?;
                write!(f, "^{n}")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn params(pairs: &[(&str, f64)]) -> HashMap<String, Complex64> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), Complex64::new(*v, 0.0)))
            .collect()
    }

    fn at(points: &[[f64; 4]]) -> SpacetimeConfig {
        SpacetimeConfig(points.to_vec())
    }

    #[test]
    fn imaginary_unit_evaluates() {
        let e = parse("i", 2, &HashMap::new()).unwrap();
        let v = e.evaluate(&SpacetimeConfig::zeros(2)).unwrap();
        assert_eq!(v, Complex64::new(0.0, 1.0));
    }

    #[test]
    fn parameter_times_one() {
        let e = parse("c0*1", 2, &params(&[("c0", 0.75)])).unwrap();
        assert_eq!(
            e.evaluate(&SpacetimeConfig::zeros(2)).unwrap(),
            Complex64::new(0.75, 0.0)
        );
    }

    #[test]
    fn sqrt_of_negative_is_positive_imaginary() {
        let e = parse("sqrt(-4)", 1, &HashMap::new()).unwrap();
        let v = e.evaluate(&SpacetimeConfig::zeros(1)).unwrap();
        assert!((v - Complex64::new(0.0, 2.0)).norm() < 1e-15);
        let e = parse("sqrt(x1_0 - 5)", 1, &HashMap::new()).unwrap();
        let v = e.evaluate(&at(&[[1.0, 0.0, 0.0, 0.0]])).unwrap();
        assert!((v - Complex64::new(0.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn division_by_zero_is_reported() {
        let e = parse("1/(x1_0 - x2_0)", 2, &HashMap::new()).unwrap();
        assert_eq!(
            e.evaluate(&at(&[[1.0; 4], [1.0; 4]])),
            Err(EvalError::DivisionByZero)
        );
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let e = parse("3.5 + c0", 2, &params(&[("c0", 1.0)])).unwrap();
        assert!(e.differentiate(1, 3).is_zero());
    }

    #[test]
    fn product_rule_base_case() {
        let e = parse("x1_0 * x2_0", 2, &HashMap::new()).unwrap();
        let d = e.differentiate(1, 0);
        assert_eq!(d, Expr::coord(2, 0));
    }

    #[test]
    fn coordinate_derivative_is_kronecker_delta() {
        for k in 1..=2 {
            for mu in 0..4 {
                let e = Expr::coord(k, mu);
                for k2 in 1..=2 {
                    for mu2 in 0..4 {
                        let d = e.differentiate(k2, mu2);
                        let expected = if k == k2 && mu == mu2 { 1.0 } else { 0.0 };
                        assert_eq!(d, Expr::real(expected));
                    }
                }
            }
        }
    }

    #[test]
    fn dependency_tracking() {
        let e = parse("sin(x2_3) * exp(c)", 2, &params(&[("c", 1.0)])).unwrap();
        assert!(e.depends_on(2, 3));
        assert!(!e.depends_on(1, 3));
        assert_eq!(e.max_particle(), 2);
        assert!(!parse("c*2", 2, &params(&[("c", 1.0)])).unwrap().has_coordinates());
    }

    #[test]
    fn printing_round_trips_tricky_shapes() {
        let p = params(&[("c0", 0.3)]);
        for src in [
            "-x1_0^2",
            "a - (b - x1_1)",
            "(x1_0 + 1)^3",
            "x1_0 / (x2_0 * 2)",
            "-(x1_0 + x2_3)",
            "x1_0 * -x2_0",
            "2 * (-3)",
            "(1 + 2*i) * x1_2",
            "sqrt(x1_0)^2",
        ] {
            let src = src.replace("a", "c0").replace("b", "x2_1");
            let e = parse(&src, 2, &p).unwrap();
            let printed = e.to_string();
            let again = parse(&printed, 2, &p).unwrap();
            let x = at(&[[0.7, -0.2, 0.4, 1.1], [0.3, 0.9, -1.3, 0.5]]);
            let (a, b) = (e.evaluate(&x).unwrap(), again.evaluate(&x).unwrap());
            assert!((a - b).norm() < 1e-12, "{src} -> {printed}");
        }
    }
}
