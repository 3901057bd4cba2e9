//! Parser for the line-oriented model declaration language.
//!
//! ```text
//! param <name> = <real>
//! var <coord> in <interval>      # [a,b] / [a,inf) / (-inf,inf) / ...
//! block <name> = (<coord>, ...)  # optional; ungrouped coords are singletons
//! dyn <coord> = <expr>
//! init <coord> = <real>
//! ```
//!
//! Expressions: `expr := term (('+'|'-') term)*`, `term := factor (('*'|'/')
//! factor)*`, `factor := ['-'] atom ['^' integer]`, `atom := number | name |
//! '(' expr ')'`. `#` starts a comment. Declarations may appear in any order.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::expr::Expr;
use crate::model::{Block, Bound, Interval, ModelCore, ModelError, ModelSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("line {line}, column {col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn syntax(line: usize, col: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        col,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Sym(char),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(v) => write!(f, "`{v}`"),
            Tok::Sym(c) => write!(f, "`{c}`"),
        }
    }
}

/// Token plus 1-based column of its first character.
type Spanned = (Tok, usize);

fn tokenize(line_no: usize, line: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value: f64 = text
                .parse()
                .map_err(|_| syntax(line_no, col, format!("invalid number `{text}`")))?;
            out.push((Tok::Num(value), col));
        } else if "+-*/^()[],=".contains(c) {
            out.push((Tok::Sym(c), col));
            i += 1;
        } else {
            return Err(syntax(line_no, col, format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

/// Cursor over one line's tokens.
struct Cursor<'a> {
    toks: &'a [Spanned],
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|&(_, c)| c)
            .unwrap_or_else(|| self.toks.last().map(|&(_, c)| c + 1).unwrap_or(1))
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect_sym(&mut self, c: char) -> Result<(), ParseError> {
        let col = self.col();
        match self.next() {
            Some(Tok::Sym(s)) if s == c => Ok(()),
            Some(t) => Err(syntax(self.line, col, format!("expected `{c}`, found {t}"))),
            None => Err(syntax(self.line, col, format!("expected `{c}`"))),
        }
    }

    fn expect_ident(&mut self) -> Result<(String, usize), ParseError> {
        let col = self.col();
        match self.next() {
            Some(Tok::Ident(s)) => Ok((s, col)),
            Some(t) => Err(syntax(self.line, col, format!("expected a name, found {t}"))),
            None => Err(syntax(self.line, col, "expected a name")),
        }
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if self.pos < self.toks.len() {
            Err(syntax(
                self.line,
                self.col(),
                format!("unexpected trailing {}", self.toks[self.pos].0),
            ))
        } else {
            Ok(())
        }
    }

    /// Signed real literal; `inf` / `-inf` allowed iff `allow_inf`.
    fn signed_real(&mut self, allow_inf: bool) -> Result<f64, ParseError> {
        let col = self.col();
        let neg = matches!(self.peek(), Some(Tok::Sym('-')));
        if neg {
            self.next();
        }
        match self.next() {
            Some(Tok::Num(v)) => Ok(if neg { -v } else { v }),
            Some(Tok::Ident(s)) if allow_inf && s == "inf" => {
                Ok(if neg { f64::NEG_INFINITY } else { f64::INFINITY })
            }
            Some(t) => Err(syntax(self.line, col, format!("expected a number, found {t}"))),
            None => Err(syntax(self.line, col, "expected a number")),
        }
    }
}

const MAX_EXPR_DEPTH: usize = 200;

/// Expression parser; resolves every name against the declared coordinate and
/// parameter sets so unknown identifiers are reported with their position.
struct ExprParser<'a, T> {
    cur: Cursor<'a>,
    coords: &'a HashSet<String>,
    params: &'a HashSet<String>,
    _marker: std::marker::PhantomData<T>,
}

impl<'a, T: Scalar> ExprParser<'a, T> {
    fn expr(&mut self, depth: usize) -> Result<Expr<T>, ParseError> {
        if depth > MAX_EXPR_DEPTH {
            return Err(syntax(self.cur.line, self.cur.col(), "expression too deeply nested"));
        }
        let mut acc = self.term(depth + 1)?;
        loop {
            match self.cur.peek() {
                Some(Tok::Sym('+')) => {
                    self.cur.next();
                    acc = Expr::add(acc, self.term(depth + 1)?);
                }
                Some(Tok::Sym('-')) => {
                    self.cur.next();
                    acc = Expr::sub(acc, self.term(depth + 1)?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self, depth: usize) -> Result<Expr<T>, ParseError> {
        let mut acc = self.factor(depth + 1)?;
        loop {
            match self.cur.peek() {
                Some(Tok::Sym('*')) => {
                    self.cur.next();
                    acc = Expr::mul(acc, self.factor(depth + 1)?);
                }
                Some(Tok::Sym('/')) => {
                    self.cur.next();
                    acc = Expr::div(acc, self.factor(depth + 1)?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self, depth: usize) -> Result<Expr<T>, ParseError> {
        if depth > MAX_EXPR_DEPTH {
            return Err(syntax(self.cur.line, self.cur.col(), "expression too deeply nested"));
        }
        let neg = matches!(self.cur.peek(), Some(Tok::Sym('-')));
        if neg {
            self.cur.next();
        }
        let mut e = self.atom(depth + 1)?;
        if matches!(self.cur.peek(), Some(Tok::Sym('^'))) {
            self.cur.next();
            let col = self.cur.col();
            let exp_neg = matches!(self.cur.peek(), Some(Tok::Sym('-')));
            if exp_neg {
                self.cur.next();
            }
            let n = match self.cur.next() {
                Some(Tok::Num(v)) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => v as i32,
                Some(t) => {
                    return Err(syntax(
                        self.cur.line,
                        col,
                        format!("expected an integer exponent, found {t}"),
                    ))
                }
                None => return Err(syntax(self.cur.line, col, "expected an integer exponent")),
            };
            e = Expr::pow(e, if exp_neg { -n } else { n });
        }
        Ok(if neg { Expr::neg(e) } else { e })
    }

    fn atom(&mut self, depth: usize) -> Result<Expr<T>, ParseError> {
        let col = self.cur.col();
        match self.cur.next() {
            Some(Tok::Num(v)) => Ok(Expr::constant(T::of(v))),
            Some(Tok::Ident(name)) => {
                if self.coords.contains(&name) {
                    Ok(Expr::var(name))
                } else if self.params.contains(&name) {
                    Ok(Expr::param(name))
                } else {
                    Err(syntax(
                        self.cur.line,
                        col,
                        format!("unknown identifier `{name}`"),
                    ))
                }
            }
            Some(Tok::Sym('(')) => {
                let e = self.expr(depth + 1)?;
                self.cur.expect_sym(')')?;
                Ok(e)
            }
            Some(t) => Err(syntax(self.cur.line, col, format!("expected an expression, found {t}"))),
            None => Err(syntax(self.cur.line, col, "expected an expression")),
        }
    }
}

struct RawLine {
    line_no: usize,
    toks: Vec<Spanned>,
}

/// Parse a model declaration from source text.
pub fn parse_model<T: Scalar>(text: &str) -> Result<ModelSpec<T>, ParseError> {
    // First pass: split statements and collect declared names.
    let mut param_lines = Vec::new();
    let mut var_lines = Vec::new();
    let mut block_lines = Vec::new();
    let mut dyn_lines = Vec::new();
    let mut init_lines = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let toks = tokenize(line_no, raw)?;
        if toks.is_empty() {
            continue;
        }
        let (head, col) = match &toks[0] {
            (Tok::Ident(s), c) => (s.clone(), *c),
            (t, c) => return Err(syntax(line_no, *c, format!("expected a keyword, found {t}"))),
        };
        let rest = RawLine {
            line_no,
            toks: toks[1..].to_vec(),
        };
        match head.as_str() {
            "param" => param_lines.push(rest),
            "var" => var_lines.push(rest),
            "block" => block_lines.push(rest),
            "dyn" => dyn_lines.push(rest),
            "init" => init_lines.push(rest),
            other => {
                return Err(syntax(
                    line_no,
                    col,
                    format!("unknown keyword `{other}` (expected param/var/block/dyn/init)"),
                ))
            }
        }
    }

    let mut params: Vec<(String, T)> = Vec::new();
    let mut param_names = HashSet::new();
    for raw in &param_lines {
        let mut cur = Cursor { toks: &raw.toks, pos: 0, line: raw.line_no };
        let (name, ncol) = cur.expect_ident()?;
        cur.expect_sym('=')?;
        let value = cur.signed_real(false)?;
        cur.expect_end()?;
        if !param_names.insert(name.clone()) {
            return Err(syntax(raw.line_no, ncol, format!("duplicate declaration of `{name}`")));
        }
        params.push((name, T::of(value)));
    }

    let mut var_order: Vec<String> = Vec::new();
    let mut domains: HashMap<String, Interval<T>> = HashMap::new();
    for raw in &var_lines {
        let mut cur = Cursor { toks: &raw.toks, pos: 0, line: raw.line_no };
        let (name, ncol) = cur.expect_ident()?;
        match cur.next() {
            Some(Tok::Ident(kw)) if kw == "in" => {}
            _ => return Err(syntax(raw.line_no, ncol, "expected `in` after the coordinate name")),
        }
        let interval = parse_interval::<T>(&mut cur)?;
        cur.expect_end()?;
        if domains.insert(name.clone(), interval).is_some() {
            return Err(syntax(raw.line_no, ncol, format!("duplicate declaration of `{name}`")));
        }
        if param_names.contains(&name) {
            return Err(syntax(raw.line_no, ncol, format!("`{name}` is already a parameter")));
        }
        var_order.push(name);
    }

    let coord_set: HashSet<String> = var_order.iter().cloned().collect();

    // Block declarations group coordinates; leftover coordinates become
    // singleton blocks. Block order follows the earliest member coordinate.
    let mut grouped: HashMap<String, String> = HashMap::new(); // coord -> block
    let mut block_decls: Vec<(String, Vec<String>, usize)> = Vec::new();
    for raw in &block_lines {
        let mut cur = Cursor { toks: &raw.toks, pos: 0, line: raw.line_no };
        let (bname, bcol) = cur.expect_ident()?;
        cur.expect_sym('=')?;
        cur.expect_sym('(')?;
        let mut members = Vec::new();
        loop {
            let (coord, ccol) = cur.expect_ident()?;
            if !coord_set.contains(&coord) {
                return Err(syntax(raw.line_no, ccol, format!("unknown coordinate `{coord}`")));
            }
            if grouped.insert(coord.clone(), bname.clone()).is_some() {
                return Err(syntax(
                    raw.line_no,
                    ccol,
                    format!("coordinate `{coord}` already belongs to a block"),
                ));
            }
            members.push(coord);
            match cur.next() {
                Some(Tok::Sym(',')) => continue,
                Some(Tok::Sym(')')) => break,
                _ => return Err(syntax(raw.line_no, cur.col(), "expected `,` or `)`")),
            }
        }
        cur.expect_end()?;
        if block_decls.iter().any(|(n, _, _)| *n == bname) {
            return Err(syntax(raw.line_no, bcol, format!("duplicate declaration of `{bname}`")));
        }
        block_decls.push((bname, members, raw.line_no));
    }

    let decl_pos: HashMap<&str, usize> = var_order
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut blocks: Vec<(usize, Block<T>)> = Vec::new();
    for (bname, members, _) in &block_decls {
        let pos = members.iter().map(|c| decl_pos[c.as_str()]).min().unwrap();
        blocks.push((
            pos,
            Block {
                name: bname.clone(),
                coords: members.clone(),
                domains: members.iter().map(|c| domains[c]).collect(),
            },
        ));
    }
    for coord in &var_order {
        if !grouped.contains_key(coord) {
            blocks.push((
                decl_pos[coord.as_str()],
                Block {
                    name: coord.clone(),
                    coords: vec![coord.clone()],
                    domains: vec![domains[coord]],
                },
            ));
        }
    }
    blocks.sort_by_key(|(pos, _)| *pos);
    let blocks: Vec<Block<T>> = blocks.into_iter().map(|(_, b)| b).collect();

    // Second pass: dynamics and initial values, with name resolution.
    let mut dynamics: HashMap<String, Expr<T>> = HashMap::new();
    for raw in &dyn_lines {
        let mut cur = Cursor { toks: &raw.toks, pos: 0, line: raw.line_no };
        let (coord, ccol) = cur.expect_ident()?;
        if !coord_set.contains(&coord) {
            return Err(syntax(raw.line_no, ccol, format!("unknown coordinate `{coord}`")));
        }
        cur.expect_sym('=')?;
        let mut ep = ExprParser::<T> {
            cur,
            coords: &coord_set,
            params: &param_names,
            _marker: std::marker::PhantomData,
        };
        let e = ep.expr(0)?;
        ep.cur.expect_end()?;
        if dynamics.insert(coord.clone(), e).is_some() {
            return Err(syntax(raw.line_no, ccol, format!("duplicate dynamics for `{coord}`")));
        }
    }

    let mut inits: HashMap<String, T> = HashMap::new();
    for raw in &init_lines {
        let mut cur = Cursor { toks: &raw.toks, pos: 0, line: raw.line_no };
        let (coord, ccol) = cur.expect_ident()?;
        if !coord_set.contains(&coord) {
            return Err(syntax(raw.line_no, ccol, format!("unknown coordinate `{coord}`")));
        }
        cur.expect_sym('=')?;
        let value = cur.signed_real(false)?;
        cur.expect_end()?;
        if inits.insert(coord.clone(), T::of(value)).is_some() {
            return Err(syntax(raw.line_no, ccol, format!("duplicate initial value for `{coord}`")));
        }
    }

    let core = ModelCore::new(blocks, params)?;
    let mut dyn_vec = Vec::new();
    let mut init_vec = Vec::new();
    for block in core.blocks() {
        for coord in &block.coords {
            dyn_vec.push(
                dynamics
                    .get(coord)
                    .cloned()
                    .ok_or_else(|| ModelError::MissingDynamics(coord.clone()))?,
            );
            init_vec.push(
                inits
                    .get(coord)
                    .copied()
                    .ok_or_else(|| ModelError::MissingInit(coord.clone()))?,
            );
        }
    }
    Ok(ModelSpec::new(core, dyn_vec, init_vec)?)
}

fn parse_interval<T: Scalar>(cur: &mut Cursor) -> Result<Interval<T>, ParseError> {
    let col = cur.col();
    let lo_closed = match cur.next() {
        Some(Tok::Sym('[')) => true,
        Some(Tok::Sym('(')) => false,
        _ => return Err(syntax(cur.line, col, "expected `[` or `(` to open an interval")),
    };
    let lo = cur.signed_real(true)?;
    cur.expect_sym(',')?;
    let hi = cur.signed_real(true)?;
    let col = cur.col();
    let hi_closed = match cur.next() {
        Some(Tok::Sym(']')) => true,
        Some(Tok::Sym(')')) => false,
        _ => return Err(syntax(cur.line, col, "expected `]` or `)` to close an interval")),
    };
    if lo >= hi {
        return Err(syntax(cur.line, col, "interval bounds must satisfy lo < hi"));
    }
    if (lo.is_infinite() && lo_closed) || (hi.is_infinite() && hi_closed) {
        return Err(syntax(cur.line, col, "an infinite bound must be open"));
    }
    let lo = if lo.is_infinite() {
        Bound::Unbounded
    } else if lo_closed {
        Bound::Inclusive(T::of(lo))
    } else {
        Bound::Exclusive(T::of(lo))
    };
    let hi = if hi.is_infinite() {
        Bound::Unbounded
    } else if hi_closed {
        Bound::Inclusive(T::of(hi))
    } else {
        Bound::Exclusive(T::of(hi))
    };
    Ok(Interval { lo, hi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_lotka_volterra;

    const LV_SOURCE: &str = "\
param th11 = 1.0
param th12 = 1.0
param th21 = 1.0
param th22 = 1.0
var X1 in [0,inf)
var X2 in [0,inf)
dyn X1 = X1 * (th11 - th12 * X2)
dyn X2 = -X2 * (th22 - th21 * X1)
init X1 = 1.0
init X2 = 1.0
";

    #[test]
    fn lotka_volterra_source_matches_builtin() {
        let parsed = parse_model::<f64>(LV_SOURCE).unwrap();
        let builtin = builtin_lotka_volterra((1.0, 1.0, 1.0, 1.0), (1.0, 1.0)).unwrap();
        assert_eq!(parsed, builtin);
        assert_eq!(parsed.core().n_blocks(), 2);
        assert_eq!(parsed.core().params().len(), 4);
    }

    #[test]
    fn zero_dynamics_singleton() {
        let m = parse_model::<f64>("var X in (-inf,inf)\ndyn X = 0\ninit X = 1\n").unwrap();
        assert_eq!(m.core().n_blocks(), 1);
        assert_eq!(m.dynamics()[0], Expr::Const(0.0));
        assert_eq!(m.inits()[0], 1.0);
    }

    #[test]
    fn unknown_identifier_reports_position() {
        let err = parse_model::<f64>("var X in (-inf,inf)\ndyn X = X + Y\ninit X = 0\n")
            .unwrap_err();
        match err {
            ParseError::Syntax { line, col, message } => {
                assert_eq!(line, 2);
                assert_eq!(col, 13);
                assert!(message.contains("unknown identifier `Y`"), "{message}");
            }
            other => panic!("expected syntax error, got {other}"),
        }
    }

    #[test]
    fn duplicate_declaration_is_rejected() {
        let err =
            parse_model::<f64>("param a = 1\nparam a = 2\nvar X in (-inf,inf)\ndyn X = 0\ninit X = 0\n")
                .unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn missing_dynamics_is_rejected() {
        let err = parse_model::<f64>("var X in (-inf,inf)\ninit X = 0\n").unwrap_err();
        assert!(matches!(err, ParseError::Model(ModelError::MissingDynamics(_))));
    }

    #[test]
    fn missing_init_is_rejected() {
        let err = parse_model::<f64>("var X in (-inf,inf)\ndyn X = 0\n").unwrap_err();
        assert!(matches!(err, ParseError::Model(ModelError::MissingInit(_))));
    }

    #[test]
    fn init_outside_domain_is_rejected() {
        let err = parse_model::<f64>("var X in [0,1]\ndyn X = 0\ninit X = 2\n").unwrap_err();
        assert!(matches!(
            err,
            ParseError::Model(ModelError::InitOutsideDomain { .. })
        ));
    }

    #[test]
    fn blocks_group_coordinates() {
        let src = "\
var Q in (-inf,inf)
var P in (-inf,inf)
block X = (Q, P)
dyn Q = P
dyn P = -Q
init Q = 1
init P = 0
";
        let m = parse_model::<f64>(src).unwrap();
        assert_eq!(m.core().n_blocks(), 1);
        assert_eq!(m.core().blocks()[0].name, "X");
        assert_eq!(m.core().blocks()[0].dim(), 2);
    }

    #[test]
    fn syntax_error_has_line_and_column() {
        let err = parse_model::<f64>("var X in (-inf,inf)\ndyn X = 1 + * 2\ninit X = 0\n")
            .unwrap_err();
        match err {
            ParseError::Syntax { line, col, .. } => {
                assert_eq!(line, 2);
                assert_eq!(col, 13);
            }
            other => panic!("expected syntax error, got {other}"),
        }
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let src = "# a comment\n\nvar X in (-inf,inf)  # trailing\ndyn X = 0\ninit X = 0\n";
        assert!(parse_model::<f64>(src).is_ok());
    }

    #[test]
    fn print_parse_round_trip() {
        let m = builtin_lotka_volterra((1.25, 0.5, 2.0, 1.0), (0.75, 2.0)).unwrap();
        let printed = m.print();
        let reparsed = parse_model::<f64>(&printed).unwrap();
        assert_eq!(m, reparsed);
        // Printing is a fixed point.
        assert_eq!(printed, reparsed.print());
    }

    #[test]
    fn negative_exponent_round_trips() {
        let src = "var X in (0,inf)\ndyn X = X^-2 - 1\ninit X = 1\n";
        let m = parse_model::<f64>(src).unwrap();
        let printed = m.print();
        assert!(printed.contains("X^-2"));
        assert_eq!(parse_model::<f64>(&printed).unwrap(), m);
    }
}
