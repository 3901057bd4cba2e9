//! Expression trees for dynamics and equilibrium equations.
//!
//! The language is deliberately small: rational functions of coordinates and
//! parameters with integer powers. That is enough to express every built-in
//! model, keeps symbolic differentiation exact, and makes canonical printing
//! feasible (structural-equality checks elsewhere rely on it).
//!
//! All constructors fold trivial algebra (`0 + e`, `1 * e`, constant
//! arithmetic, sign normalization), so any two `Expr`s built from the same
//! mathematical content through parser, differentiation, or intervention
//! transforms compare equal structurally.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::scalar::Scalar;

/// Arithmetic evaluation failure.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero while evaluating `{context}`")]
    DivisionByZero { context: String },
    #[error("unbound name `{0}`")]
    UnboundName(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr<T> {
    Const(T),
    /// Reference to a coordinate (a scalar component of a variable block).
    Var(String),
    /// Reference to a model parameter.
    Param(String),
    Neg(Box<Expr<T>>),
    Add(Box<Expr<T>>, Box<Expr<T>>),
    Sub(Box<Expr<T>>, Box<Expr<T>>),
    Mul(Box<Expr<T>>, Box<Expr<T>>),
    Div(Box<Expr<T>>, Box<Expr<T>>),
    /// Integer power; `e^0` folds to 1, negative exponents mean reciprocals.
    Pow(Box<Expr<T>>, i32),
}

/// Name-resolution environment for [`Expr::eval`].
pub trait Env<T> {
    fn coord(&self, name: &str) -> Option<T>;
    fn param(&self, name: &str) -> Option<T>;
}

/// Environment backed by two association lists; handy in tests and public API.
pub struct MapEnv<'a, T> {
    pub coords: &'a [(String, T)],
    pub params: &'a [(String, T)],
}

impl<T: Scalar> Env<T> for MapEnv<'_, T> {
    fn coord(&self, name: &str) -> Option<T> {
        self.coords.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
    fn param(&self, name: &str) -> Option<T> {
        self.params.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
}

impl<T: Scalar> Expr<T> {
    pub fn constant(c: T) -> Self {
        Expr::Const(c)
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    pub fn param(name: impl Into<String>) -> Self {
        Expr::Param(name.into())
    }

    /// Negation with sign normalization; `-0` folds to `0` so canonical
    /// printing never shows a negative zero, and a zero numerator absorbs the
    /// sign (printing `-0 / e` would not round-trip).
    pub fn neg(e: Expr<T>) -> Self {
        match e {
            Expr::Const(c) => {
                Expr::Const(if c == T::zero() { T::zero() } else { -c })
            }
            Expr::Neg(inner) => *inner,
            Expr::Div(a, b) if matches!(&*a, Expr::Const(c) if *c == T::zero()) => {
                Expr::Div(a, b)
            }
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn add(a: Expr<T>, b: Expr<T>) -> Self {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
            (Expr::Const(z), e) | (e, Expr::Const(z)) if z == T::zero() => e,
            (a, Expr::Neg(b)) => Expr::sub(a, *b),
            (Expr::Neg(a), b) => Expr::sub(b, *a),
            (a, b) => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr<T>, b: Expr<T>) -> Self {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
            (e, Expr::Const(z)) if z == T::zero() => e,
            (Expr::Const(z), e) if z == T::zero() => Expr::neg(e),
            (a, Expr::Neg(b)) => Expr::add(a, *b),
            (Expr::Neg(a), b) => Expr::neg(Expr::add(*a, b)),
            (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr<T>, b: Expr<T>) -> Self {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
            (Expr::Const(z), _) | (_, Expr::Const(z)) if z == T::zero() => {
                Expr::Const(T::zero())
            }
            (Expr::Const(o), e) | (e, Expr::Const(o)) if o == T::one() => e,
            // Negative constant factors surface as an outer negation, the one
            // form the printer/parser pair preserves.
            (Expr::Const(c), e) if c < T::zero() => {
                Expr::neg(Expr::mul(Expr::Const(-c), e))
            }
            (e, Expr::Const(c)) if c < T::zero() => {
                Expr::neg(Expr::mul(e, Expr::Const(-c)))
            }
            (Expr::Neg(a), b) => Expr::neg(Expr::mul(*a, b)),
            (a, Expr::Neg(b)) => Expr::neg(Expr::mul(a, *b)),
            (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    /// Division; `0 / e` is *not* folded away so that runtime division errors
    /// (and degenerate-mechanism detection) are preserved.
    pub fn div(a: Expr<T>, b: Expr<T>) -> Self {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) if y != T::zero() => Expr::Const(x / y),
            (e, Expr::Const(o)) if o == T::one() => e,
            (Expr::Const(c), e) if c < T::zero() => {
                Expr::neg(Expr::div(Expr::Const(-c), e))
            }
            (e, Expr::Const(c)) if c < T::zero() => {
                Expr::neg(Expr::div(e, Expr::Const(-c)))
            }
            (Expr::Neg(a), b) => Expr::neg(Expr::div(*a, b)),
            (a, Expr::Neg(b)) => Expr::neg(Expr::div(a, *b)),
            (a, b) => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(e: Expr<T>, n: i32) -> Self {
        match (e, n) {
            (_, 0) => Expr::Const(T::one()),
            (e, 1) => e,
            (Expr::Const(c), n) if n > 0 || c != T::zero() => Expr::Const(c.powi(n)),
            (e, n) => Expr::Pow(Box::new(e), n),
        }
    }

    /// Evaluate against an environment. Double-precision semantics: the only
    /// failures are division by zero and unresolved names; non-finite values
    /// never appear silently from a zero denominator.
    pub fn eval(&self, env: &impl Env<T>) -> Result<T, EvalError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(name) => env
                .coord(name)
                .ok_or_else(|| EvalError::UnboundName(name.clone())),
            Expr::Param(name) => env
                .param(name)
                .ok_or_else(|| EvalError::UnboundName(name.clone())),
            Expr::Neg(e) => Ok(-e.eval(env)?),
            Expr::Add(a, b) => Ok(a.eval(env)? + b.eval(env)?),
            Expr::Sub(a, b) => Ok(a.eval(env)? - b.eval(env)?),
            Expr::Mul(a, b) => Ok(a.eval(env)? * b.eval(env)?),
            Expr::Div(a, b) => {
                let num = a.eval(env)?;
                let den = b.eval(env)?;
                if den == T::zero() {
                    Err(EvalError::DivisionByZero {
                        context: self.to_string(),
                    })
                } else {
                    Ok(num / den)
                }
            }
            Expr::Pow(e, n) => {
                let base = e.eval(env)?;
                if *n < 0 && base == T::zero() {
                    Err(EvalError::DivisionByZero {
                        context: self.to_string(),
                    })
                } else {
                    Ok(base.powi(*n))
                }
            }
        }
    }

    /// Coordinate names syntactically present in the expression.
    pub fn free_coords(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::Var(name) = e {
                out.insert(name.clone());
            }
        });
        out
    }

    /// Parameter names syntactically present in the expression.
    pub fn free_params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::Param(name) = e {
                out.insert(name.clone());
            }
        });
        out
    }

    fn visit(&self, f: &mut impl FnMut(&Expr<T>)) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Param(_) => {}
            Expr::Neg(e) | Expr::Pow(e, _) => e.visit(f),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    /// True when `coord` occurs syntactically in the expression.
    pub fn depends_on(&self, coord: &str) -> bool {
        match self {
            Expr::Const(_) | Expr::Param(_) => false,
            Expr::Var(name) => name == coord,
            Expr::Neg(e) | Expr::Pow(e, _) => e.depends_on(coord),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on(coord) || b.depends_on(coord)
            }
        }
    }

    /// Symbolic partial derivative with respect to coordinate `coord`.
    /// Subtrees that do not mention `coord` differentiate to zero directly,
    /// which keeps quotient-rule output free of spurious dependencies.
    pub fn differentiate(&self, coord: &str) -> Expr<T> {
        if !self.depends_on(coord) {
            return Expr::Const(T::zero());
        }
        match self {
            Expr::Const(_) | Expr::Param(_) => Expr::Const(T::zero()),
            Expr::Var(name) => {
                if name == coord {
                    Expr::Const(T::one())
                } else {
                    Expr::Const(T::zero())
                }
            }
            Expr::Neg(e) => Expr::neg(e.differentiate(coord)),
            Expr::Add(a, b) => Expr::add(a.differentiate(coord), b.differentiate(coord)),
            Expr::Sub(a, b) => Expr::sub(a.differentiate(coord), b.differentiate(coord)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.differentiate(coord), b.as_ref().clone()),
                Expr::mul(a.as_ref().clone(), b.differentiate(coord)),
            ),
            Expr::Div(a, b) => {
                if !b.depends_on(coord) {
                    Expr::div(a.differentiate(coord), b.as_ref().clone())
                } else {
                    Expr::div(
                        Expr::sub(
                            Expr::mul(a.differentiate(coord), b.as_ref().clone()),
                            Expr::mul(a.as_ref().clone(), b.differentiate(coord)),
                        ),
                        Expr::pow(b.as_ref().clone(), 2),
                    )
                }
            }
            Expr::Pow(e, n) => Expr::mul(
                Expr::mul(
                    Expr::Const(T::from_i32(*n).expect("small exponent")),
                    Expr::pow(e.as_ref().clone(), n - 1),
                ),
                e.differentiate(coord),
            ),
        }
    }

    /// Replace coordinate references by expressions (typically constants).
    pub fn substitute_coords(&self, subst: &dyn Fn(&str) -> Option<Expr<T>>) -> Expr<T> {
        match self {
            Expr::Const(_) | Expr::Param(_) => self.clone(),
            Expr::Var(name) => subst(name).unwrap_or_else(|| self.clone()),
            Expr::Neg(e) => Expr::neg(e.substitute_coords(subst)),
            Expr::Add(a, b) => {
                Expr::add(a.substitute_coords(subst), b.substitute_coords(subst))
            }
            Expr::Sub(a, b) => {
                Expr::sub(a.substitute_coords(subst), b.substitute_coords(subst))
            }
            Expr::Mul(a, b) => {
                Expr::mul(a.substitute_coords(subst), b.substitute_coords(subst))
            }
            Expr::Div(a, b) => {
                Expr::div(a.substitute_coords(subst), b.substitute_coords(subst))
            }
            Expr::Pow(e, n) => Expr::pow(e.substitute_coords(subst), *n),
        }
    }

    /// Replace parameter references by their constant values.
    pub fn substitute_params(&self, lookup: &dyn Fn(&str) -> Option<T>) -> Expr<T> {
        match self {
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Param(name) => match lookup(name) {
                Some(v) => Expr::Const(v),
                None => self.clone(),
            },
            Expr::Neg(e) => Expr::neg(e.substitute_params(lookup)),
            Expr::Add(a, b) => {
                Expr::add(a.substitute_params(lookup), b.substitute_params(lookup))
            }
            Expr::Sub(a, b) => {
                Expr::sub(a.substitute_params(lookup), b.substitute_params(lookup))
            }
            Expr::Mul(a, b) => {
                Expr::mul(a.substitute_params(lookup), b.substitute_params(lookup))
            }
            Expr::Div(a, b) => {
                Expr::div(a.substitute_params(lookup), b.substitute_params(lookup))
            }
            Expr::Pow(e, n) => Expr::pow(e.substitute_params(lookup), *n),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Neg(..) => 2,
            Expr::Mul(..) | Expr::Div(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(_) | Expr::Var(_) | Expr::Param(_) => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let prec = self.precedence();
        let parens = prec < min;
        if parens {
            write!(f, "(")?;
        }
        match self {
            Expr::Const(c) => {
                if *c < T::zero() {
                    // Negative literals are parenthesized so that printing
                    // round-trips through the parser unambiguously.
                    write!(f, "(-{})", -*c)?;
                } else {
                    write!(f, "{c}")?;
                }
            }
            Expr::Var(name) | Expr::Param(name) => write!(f, "{name}")?,
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.fmt_prec(f, 3)?;
            }
            Expr::Add(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " + ")?;
                b.fmt_prec(f, 2)?;
            }
            Expr::Sub(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " - ")?;
                b.fmt_prec(f, 2)?;
            }
            Expr::Mul(a, b) => {
                a.fmt_prec(f, 3)?;
                write!(f, " * ")?;
                b.fmt_prec(f, 4)?;
            }
            Expr::Div(a, b) => {
                a.fmt_prec(f, 3)?;
                write!(f, " / ")?;
                b.fmt_prec(f, 4)?;
            }
            Expr::Pow(e, n) => {
                e.fmt_prec(f, 5)?;
                write!(f, "^{n}")?;
            }
        }
        if parens {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl<T: Scalar> fmt::Display for Expr<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv_x1dot() -> Expr<f64> {
        // X1 * (th11 - th12 * X2)
        Expr::mul(
            Expr::var("X1"),
            Expr::sub(
                Expr::param("th11"),
                Expr::mul(Expr::param("th12"), Expr::var("X2")),
            ),
        )
    }

    fn env(coords: &[(&str, f64)], params: &[(&str, f64)]) -> (Vec<(String, f64)>, Vec<(String, f64)>) {
        (
            coords.iter().map(|&(n, v)| (n.to_string(), v)).collect(),
            params.iter().map(|&(n, v)| (n.to_string(), v)).collect(),
        )
    }

    #[test]
    fn eval_interior_equilibrium_component() {
        let (c, p) = env(&[("X1", 1.0), ("X2", 1.0)], &[("th11", 1.0), ("th12", 1.0)]);
        let v = lv_x1dot().eval(&MapEnv { coords: &c, params: &p }).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn eval_off_equilibrium() {
        // Hand arithmetic: 2 * (1.5 - 1 * 0) = 3.0.
        let (c, p) = env(&[("X1", 2.0), ("X2", 0.0)], &[("th11", 1.5), ("th12", 1.0)]);
        let v = lv_x1dot().eval(&MapEnv { coords: &c, params: &p }).unwrap();
        assert_eq!(v, 3.0);
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let e: Expr<f64> = Expr::div(Expr::var("X"), Expr::var("X"));
        let (c, p) = env(&[("X", 0.0)], &[]);
        let err = e.eval(&MapEnv { coords: &c, params: &p }).unwrap_err();
        assert!(matches!(err, EvalError::DivisionByZero { .. }));
    }

    #[test]
    fn unbound_name_is_an_error() {
        let e: Expr<f64> = Expr::var("Y");
        let (c, p) = env(&[], &[]);
        assert_eq!(
            e.eval(&MapEnv { coords: &c, params: &p }).unwrap_err(),
            EvalError::UnboundName("Y".into())
        );
    }

    #[test]
    fn free_coords_of_lv_term() {
        let names = lv_x1dot().free_coords();
        assert_eq!(
            names.into_iter().collect::<Vec<_>>(),
            vec!["X1".to_string(), "X2".to_string()]
        );
    }

    #[test]
    fn free_coords_of_constant_is_empty() {
        let e: Expr<f64> = Expr::constant(5.0);
        assert!(e.free_coords().is_empty());
    }

    #[test]
    fn x_minus_x_is_syntactically_free_in_x() {
        let e: Expr<f64> = Expr::sub(Expr::var("X"), Expr::var("X"));
        assert_eq!(e.free_coords().len(), 1);
    }

    #[test]
    fn derivative_of_lv_term_in_x2() {
        // d/dX2 [X1 (th11 - th12 X2)] = -th12 X1 up to algebraic form.
        let d = lv_x1dot().differentiate("X2");
        let (c, p) = env(&[("X1", 2.5), ("X2", 7.0)], &[("th11", 1.0), ("th12", 3.0)]);
        let v = d.eval(&MapEnv { coords: &c, params: &p }).unwrap();
        assert_eq!(v, -3.0 * 2.5);
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let e: Expr<f64> = Expr::constant(4.0);
        assert_eq!(e.differentiate("X"), Expr::Const(0.0));
    }

    #[test]
    fn derivative_of_cube_matches_finite_difference() {
        let e: Expr<f64> = Expr::pow(Expr::var("X"), 3);
        let d = e.differentiate("X");
        let at = |x: f64, ex: &Expr<f64>| {
            let (c, p) = env(&[("X", x)], &[]);
            ex.eval(&MapEnv { coords: &c, params: &p }).unwrap()
        };
        let h = 1e-5;
        let fd = (at(2.0 + h, &e) - at(2.0 - h, &e)) / (2.0 * h);
        let sym = at(2.0, &d);
        assert!((sym - 12.0).abs() < 1e-12);
        assert!((sym - fd).abs() <= 1e-6, "fd={fd} sym={sym}");
    }

    #[test]
    fn derivative_free_coords_subset() {
        let e: Expr<f64> = Expr::mul(
            Expr::var("X"),
            Expr::add(Expr::var("Y"), Expr::constant(1.0)),
        );
        let d = e.differentiate("X");
        assert!(d.free_coords().is_subset(&e.free_coords()));
    }

    #[test]
    fn folding_normalizes_signs() {
        // -X2 * e  and  -(X2 * e) fold to the same tree.
        let a: Expr<f64> = Expr::mul(Expr::neg(Expr::var("X2")), Expr::var("Y"));
        let b: Expr<f64> = Expr::neg(Expr::mul(Expr::var("X2"), Expr::var("Y")));
        assert_eq!(a, b);
        // a - (-b) = a + b
        let c: Expr<f64> = Expr::sub(Expr::var("a"), Expr::neg(Expr::var("b")));
        assert_eq!(c, Expr::add(Expr::var("a"), Expr::var("b")));
    }

    #[test]
    fn printing_is_canonical() {
        assert_eq!(lv_x1dot().to_string(), "X1 * (th11 - th12 * X2)");
        let e: Expr<f64> = Expr::neg(Expr::mul(
            Expr::var("X2"),
            Expr::sub(
                Expr::param("th22"),
                Expr::mul(Expr::param("th21"), Expr::var("X1")),
            ),
        ));
        assert_eq!(e.to_string(), "-X2 * (th22 - th21 * X1)");
        let pw: Expr<f64> = Expr::sub(Expr::pow(Expr::var("X"), 2), Expr::constant(-1.0));
        assert_eq!(pw.to_string(), "X^2 - (-1)");
        let sub: Expr<f64> = Expr::sub(
            Expr::var("a"),
            Expr::sub(Expr::var("b"), Expr::var("c")),
        );
        assert_eq!(sub.to_string(), "a - (b - c)");
    }

    #[test]
    fn pow_zero_exponent_folds_to_one() {
        let e: Expr<f64> = Expr::pow(Expr::var("X"), 0);
        assert_eq!(e, Expr::Const(1.0));
    }
}
