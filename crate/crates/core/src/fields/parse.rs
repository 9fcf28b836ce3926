//! Expression-string grammar used by scenario files.
//!
//! ```text
//! expr   := term  (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('-' | '+') unary | power
//! power  := atom ('^' integer)?
//! atom   := number | 'pi' | 'x' index | call | '(' expr ')'
//! call   := name '(' arg (',' arg)* ')'
//! arg    := expr | '[' expr (',' expr)* ']'
//! ```
//!
//! Coordinates are `x1 .. xn` (one-based). Functions:
//!
//! | call | meaning |
//! |------|---------|
//! | `abs(e)`, `sqrt(e)`, `sin(e)`, `cos(e)`, `exp(e)` | the usual |
//! | `min(a, b, ...)`, `max(a, b, ...)` | pointwise min / max |
//! | `atan2(y, x)` | four-quadrant angle |
//! | `pwl(e, x0, y0, x1, y1, ...)` | piecewise-linear map of `e` through the knots, extended linearly |
//! | `plateau(e, r0, r1)` | C1 cubic step, 1 for `e <= r0`, 0 for `e >= r1` |
//! | `bump(c, r)` | radial bump `(1 - |x - c|^2/r^2)^4` centred at `(c, ..., c)` |
//! | `bump([c1, .., cn], r)` | radial bump with a vector centre |
//! | `bump(e, c, r)` | univariate bump of the expression `e` |
//! | `bump([e1, .., ek], [c1, .., ck], r)` | bump of a vector of expressions |
//!
//! Knots, radii and centres must be constant expressions (`pi/2` is fine).

use std::sync::Arc;

use super::expr::{Expr, PiecewiseLinear};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| Error::Parse {
                offset: start,
                message: format!("bad number '{text}'"),
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
            {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/^(),[]".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            return Err(Error::Parse {
                offset: i,
                message: format!("unexpected character '{c}'"),
            });
        }
    }
    Ok(out)
}

enum Arg {
    Scalar(Arc<Expr>),
    Vector(Vec<Arc<Expr>>),
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    arity: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.src.len(), |t| t.0)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn expr(&mut self) -> Result<Arc<Expr>> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::add(lhs, self.term()?);
            } else if self.eat('-') {
                lhs = Expr::sub(lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Arc<Expr>> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::mul(lhs, self.unary()?);
            } else if self.eat('/') {
                lhs = Expr::div(lhs, self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Arc<Expr>> {
        if self.eat('-') {
            Ok(Expr::neg(self.unary()?))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Arc<Expr>> {
        let base = self.atom()?;
        if self.eat('^') {
            match self.peek() {
                Some(Tok::Num(v)) if *v >= 0.0 && v.fract() == 0.0 && *v <= 64.0 => {
                    let k = *v as u32;
                    self.pos += 1;
                    Ok(Expr::pow(base, k))
                }
                _ => self.err("exponent must be a small nonnegative integer literal"),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Arc<Expr>> {
        let start = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::constant(v))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if name == "pi" {
                    return Ok(Expr::constant(std::f64::consts::PI));
                }
                if let Some(idx) = name.strip_prefix('x') {
                    if let Ok(k) = idx.parse::<usize>() {
                        if k == 0 || k > self.arity {
                            return Err(Error::Parse {
                                offset: start,
                                message: format!(
                                    "coordinate {name} out of range for dimension {}",
                                    self.arity
                                ),
                            });
                        }
                        return Ok(Expr::coord(k - 1));
                    }
                }
                if self.peek() != Some(&Tok::Sym('(')) {
                    return Err(Error::Parse {
                        offset: start,
                        message: format!("unknown identifier '{name}'"),
                    });
                }
                self.pos += 1;
                let mut args = vec![self.arg()?];
                while self.eat(',') {
                    args.push(self.arg()?);
                }
                self.expect(')')?;
                self.call(&name, args, start)
            }
            _ => self.err("expected a number, coordinate, call or '('"),
        }
    }

    fn arg(&mut self) -> Result<Arg> {
        if self.eat('[') {
            let mut items = vec![self.expr()?];
            while self.eat(',') {
                items.push(self.expr()?);
            }
            self.expect(']')?;
            Ok(Arg::Vector(items))
        } else {
            Ok(Arg::Scalar(self.expr()?))
        }
    }

    fn call(&self, name: &str, args: Vec<Arg>, at: usize) -> Result<Arc<Expr>> {
        let fail = |message: String| Error::Parse {
            offset: at,
            message,
        };
        let scalar = |a: &Arg| match a {
            Arg::Scalar(e) => Ok(e.clone()),
            Arg::Vector(_) => Err(fail(format!("{name}: unexpected vector argument"))),
        };
        let constant = |e: &Arc<Expr>| {
            if e.coord_span() == 0 {
                Ok(e.eval(&[]))
            } else {
                Err(fail(format!("{name}: argument must be a constant")))
            }
        };
        let want = |k: usize| {
            if args.len() == k {
                Ok(())
            } else {
                Err(fail(format!(
                    "{name} takes {k} argument(s), got {}",
                    args.len()
                )))
            }
        };
        let unary = |f: fn(Arc<Expr>) -> Arc<Expr>| -> Result<Arc<Expr>> {
            want(1)?;
            Ok(f(scalar(&args[0])?))
        };
        match name {
            "abs" => unary(Expr::abs),
            "sqrt" => unary(Expr::sqrt),
            "sin" => unary(Expr::sin),
            "cos" => unary(Expr::cos),
            "exp" => unary(Expr::exp),
            "atan2" => {
                want(2)?;
                Ok(Expr::atan2(scalar(&args[0])?, scalar(&args[1])?))
            }
            "min" | "max" => {
                if args.len() < 2 {
                    return Err(fail(format!("{name} needs at least two arguments")));
                }
                let f = if name == "min" { Expr::min } else { Expr::max };
                let mut it = args.iter();
                let mut acc = scalar(it.next().unwrap())?;
                for a in it {
                    acc = f(acc, scalar(a)?);
                }
                Ok(acc)
            }
            "pwl" => {
                if args.len() < 5 || args.len().is_multiple_of(2) {
                    return Err(fail(
                        "pwl(e, x0, y0, x1, y1, ...) needs at least two knots".into(),
                    ));
                }
                let e = scalar(&args[0])?;
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for pair in args[1..].chunks(2) {
                    xs.push(constant(&scalar(&pair[0])?)?);
                    ys.push(constant(&scalar(&pair[1])?)?);
                }
                let map = PiecewiseLinear::new(xs, ys).map_err(|e| fail(e.to_string()))?;
                Ok(Expr::pwl(e, map))
            }
            "plateau" => {
                want(3)?;
                let e = scalar(&args[0])?;
                let r0 = constant(&scalar(&args[1])?)?;
                let r1 = constant(&scalar(&args[2])?)?;
                Expr::plateau(e, r0, r1).map_err(|e| fail(e.to_string()))
            }
            "bump" => self.bump(args, &fail, &scalar, &constant),
            _ => Err(fail(format!("unknown function '{name}'"))),
        }
    }

    fn bump(
        &self,
        args: Vec<Arg>,
        fail: &dyn Fn(String) -> Error,
        scalar: &dyn Fn(&Arg) -> Result<Arc<Expr>>,
        constant: &dyn Fn(&Arc<Expr>) -> Result<f64>,
    ) -> Result<Arc<Expr>> {
        let consts = |v: &[Arc<Expr>]| v.iter().map(constant).collect::<Result<Vec<f64>>>();
        let all_coords = || (0..self.arity).map(Expr::coord).collect::<Vec<_>>();
        let (exprs, center, radius) = match args.as_slice() {
            [Arg::Scalar(c), r] => (all_coords(), vec![constant(c)?; self.arity], scalar(r)?),
            [Arg::Vector(c), r] => (all_coords(), consts(c)?, scalar(r)?),
            [Arg::Scalar(e), c, r] => (vec![e.clone()], vec![constant(&scalar(c)?)?], scalar(r)?),
            [Arg::Vector(e), Arg::Vector(c), r] => (e.clone(), consts(c)?, scalar(r)?),
            _ => return Err(fail("bump: unrecognised argument pattern".into())),
        };
        if exprs.len() != center.len() {
            return Err(fail(format!(
                "bump: {} argument(s) but centre has {} component(s)",
                exprs.len(),
                center.len()
            )));
        }
        Expr::bump(exprs, center, constant(&radius)?).map_err(|e| fail(e.to_string()))
    }
}

/// Parse an expression over coordinates `x1 .. x{arity}`.
pub fn parse_expr(src: &str, arity: usize) -> Result<Arc<Expr>> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        arity,
        src,
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

/// Parse a constant expression such as `-pi/2`.
pub fn parse_constant(src: &str) -> Result<f64> {
    let e = parse_expr(src, 0)?;
    Ok(e.eval(&[]))
}
