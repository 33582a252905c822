//! Reader and writer for the potential text format.
//!
//! ```text
//! potential { n = 2; kind = normalized; basepoint = (0, 0); }
//! coeff[-1] {
//!   B1 = [[z, 0], [-z, 0], [0, 1], [0, i]];
//! }
//! ```

use std::collections::BTreeMap;
use std::fmt::Write;

use super::rational::{Poly, RationalExpr};
use super::{ExprMatrix, Potential, PotentialKind};
use crate::error::{Error, Result};
use crate::linalg::C64;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Word(String),
    Punct(char),
    Eof,
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if ch.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if ch == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        if ch.is_ascii_digit() || (ch == '.' && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent only when followed by a digit, so "2e" never swallows a word
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                line: start_line,
                column: start_col,
                message: format!("bad number literal '{s}'"),
            })?;
            col += i - start;
            out.push(Spanned {
                tok: Tok::Num(v),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Spanned {
                tok: Tok::Word(chars[start..i].iter().collect()),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        if "{}[]()=;,+-*/^".contains(ch) {
            out.push(Spanned {
                tok: Tok::Punct(ch),
                line,
                col,
            });
            i += 1;
            col += 1;
            continue;
        }
        return Err(Error::Parse {
            line,
            column: col,
            message: format!("unexpected character '{ch}'"),
        });
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        let t = &self.toks[self.pos];
        Err(Error::Parse {
            line: t.line,
            column: t.col,
            message: message.into(),
        })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn punct(&mut self, c: char) -> Result<()> {
        if *self.peek() == Tok::Punct(c) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected '{c}', found {}", describe(self.peek())))
        }
    }

    fn keyword(&mut self, w: &str) -> Result<()> {
        match self.peek() {
            Tok::Word(s) if s == w => {
                self.bump();
                Ok(())
            }
            t => self.err(format!("expected '{w}', found {}", describe(t))),
        }
    }

    fn word(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Word(s) => {
                self.bump();
                Ok(s)
            }
            t => self.err(format!("expected a name, found {}", describe(&t))),
        }
    }

    fn signed_number(&mut self) -> Result<f64> {
        let mut sign = 1.0;
        while let Tok::Punct(c @ ('-' | '+')) = self.peek() {
            if *c == '-' {
                sign = -sign;
            }
            self.bump();
        }
        match self.peek() {
            Tok::Num(v) => {
                let v = *v;
                self.bump();
                Ok(sign * v)
            }
            t => self.err(format!("expected a number, found {}", describe(t))),
        }
    }

    fn integer(&mut self) -> Result<i64> {
        let v = self.signed_number()?;
        if v.fract() != 0.0 || v.abs() > 1e9 {
            self.pos -= 1;
            return self.err("expected an integer");
        }
        Ok(v as i64)
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<RationalExpr> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Tok::Punct('+') => {
                    self.bump();
                    acc = &acc + &self.term()?;
                }
                Tok::Punct('-') => {
                    self.bump();
                    acc = &acc - &self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    // term := unary (('*' | '/') unary | <juxtaposed> power)*
    fn term(&mut self) -> Result<RationalExpr> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Tok::Punct('*') => {
                    self.bump();
                    acc = &acc * &self.unary()?;
                }
                Tok::Punct('/') => {
                    self.bump();
                    let at = self.pos;
                    let rhs = self.unary()?;
                    acc = acc.div(&rhs).or_else(|_| {
                        self.pos = at;
                        self.err("division by the zero polynomial")
                    })?;
                }
                Tok::Num(_) | Tok::Word(_) | Tok::Punct('(') => {
                    acc = &acc * &self.power()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<RationalExpr> {
        match self.peek() {
            Tok::Punct('-') => {
                self.bump();
                Ok(-&self.unary()?)
            }
            Tok::Punct('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<RationalExpr> {
        let base = self.atom()?;
        if *self.peek() == Tok::Punct('^') {
            self.bump();
            let at = self.pos;
            let e = self.integer()?;
            return base.powi(e as i32).or_else(|_| {
                self.pos = at;
                self.err("negative power of the zero polynomial")
            });
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<RationalExpr> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(RationalExpr::real(v))
            }
            Tok::Word(w) => {
                // "iz" and similar run-together names are products of i and z
                if w.chars().all(|c| c == 'i' || c == 'z') {
                    self.bump();
                    let mut acc = RationalExpr::real(1.0);
                    for c in w.chars() {
                        let f = if c == 'i' {
                            RationalExpr::constant(C64::new(0.0, 1.0))
                        } else {
                            RationalExpr::z()
                        };
                        acc = &acc * &f;
                    }
                    Ok(acc)
                } else {
                    self.err(format!("unknown symbol '{w}'"))
                }
            }
            Tok::Punct('(') => {
                self.bump();
                let e = self.expr()?;
                self.punct(')')?;
                Ok(e)
            }
            t => self.err(format!("expected an expression, found {}", describe(&t))),
        }
    }

    fn matrix(&mut self) -> Result<(Vec<Vec<RationalExpr>>, usize, usize)> {
        let (line, col) = (self.toks[self.pos].line, self.toks[self.pos].col);
        self.punct('[')?;
        let mut rows = Vec::new();
        loop {
            self.punct('[')?;
            let mut row = vec![self.expr()?];
            while *self.peek() == Tok::Punct(',') {
                self.bump();
                row.push(self.expr()?);
            }
            self.punct(']')?;
            rows.push(row);
            if *self.peek() == Tok::Punct(',') {
                self.bump();
            } else {
                break;
            }
        }
        self.punct(']')?;
        let w = rows[0].len();
        if rows.iter().any(|r| r.len() != w) {
            return Err(Error::Parse {
                line,
                column: col,
                message: "rows of different length".into(),
            });
        }
        Ok((rows, line, col))
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Word(w) => format!("'{w}'"),
        Tok::Punct(c) => format!("'{c}'"),
        Tok::Eof => "end of input".into(),
    }
}

pub fn parse_potential(text: &str) -> Result<Potential> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    p.keyword("potential")?;
    p.punct('{')?;
    p.keyword("n")?;
    p.punct('=')?;
    let n = p.integer()?;
    if n < 1 {
        p.pos -= 1;
        return p.err("n must be at least 1");
    }
    let n = n as usize;
    p.punct(';')?;
    p.keyword("kind")?;
    p.punct('=')?;
    let kind_word = p.word()?;
    let kind = match kind_word.as_str() {
        "normalized" => PotentialKind::Normalized,
        "holomorphic" => PotentialKind::Holomorphic,
        "constant" => PotentialKind::Constant,
        other => {
            p.pos -= 1;
            return p.err(format!("unknown kind '{other}'"));
        }
    };
    p.punct(';')?;
    p.keyword("basepoint")?;
    p.punct('=')?;
    p.punct('(')?;
    let re = p.signed_number()?;
    p.punct(',')?;
    let im = p.signed_number()?;
    p.punct(')')?;
    p.punct(';')?;
    p.punct('}')?;

    let m = n + 4;
    let mut terms: BTreeMap<i64, ExprMatrix> = BTreeMap::new();
    while *p.peek() != Tok::Eof {
        p.keyword("coeff")?;
        p.punct('[')?;
        let power = p.integer()?;
        p.punct(']')?;
        if terms.contains_key(&power) {
            return p.err(format!("duplicate coeff[{power}] block"));
        }
        p.punct('{')?;
        let mut mat = ExprMatrix::zeros(m, m);
        while *p.peek() != Tok::Punct('}') {
            let name = p.word()?;
            p.punct('=')?;
            let (rows, line, col) = p.matrix()?;
            p.punct(';')?;
            let (want_r, want_c) = match name.as_str() {
                "B1" => (4, n),
                "A1" => (4, 4),
                "A2" => (n, n),
                "FULL" => (m, m),
                other => {
                    return Err(Error::Parse {
                        line,
                        column: col,
                        message: format!("unknown block name '{other}'"),
                    })
                }
            };
            if rows.len() != want_r || rows[0].len() != want_c {
                return Err(Error::Parse {
                    line,
                    column: col,
                    message: format!(
                        "{name} must be {want_r}x{want_c}, found {}x{}",
                        rows.len(),
                        rows[0].len()
                    ),
                });
            }
            match name.as_str() {
                "B1" => mat.set_b1(&rows),
                "A1" => mat.set_block(0, 0, &rows),
                "A2" => mat.set_block(4, 4, &rows),
                _ => mat.set_block(0, 0, &rows),
            }
        }
        p.punct('}')?;
        terms.insert(power, mat);
    }
    Ok(Potential::from_parts(n, kind, C64::new(re, im), terms))
}

fn write_rows(out: &mut String, rows: &[Vec<&RationalExpr>]) {
    out.push('[');
    for (i, row) in rows.iter().enumerate() {
        if i > 0 {
            out.push_str(",\n      ");
        }
        out.push('[');
        for (j, e) in row.iter().enumerate() {
            if j > 0 {
                out.push_str(", ");
            }
            write!(out, "{e}").unwrap();
        }
        out.push(']');
    }
    out.push(']');
}

/// Text form; block names are used when the matrix has the matching shape.
pub fn serialize_potential(p: &Potential) -> String {
    let n = p.n();
    let m = n + 4;
    let mut out = String::new();
    let kind = match p.kind() {
        PotentialKind::Normalized => "normalized",
        PotentialKind::Holomorphic => "holomorphic",
        PotentialKind::Constant => "constant",
    };
    let b = p.basepoint();
    writeln!(
        out,
        "potential {{ n = {n}; kind = {kind}; basepoint = ({}, {}); }}",
        b.re, b.im
    )
    .unwrap();
    for (&j, mat) in p.terms() {
        writeln!(out, "coeff[{j}] {{").unwrap();
        let block = |r0: usize, c0: usize, r: usize, c: usize| -> Vec<Vec<&RationalExpr>> {
            (0..r).map(|i| (0..c).map(|k| mat.get(r0 + i, c0 + k)).collect()).collect()
        };
        if mat.is_zero() {
        } else if j.rem_euclid(2) == 1 && mat.is_b1_form() {
            out.push_str("  B1 = ");
            write_rows(&mut out, &block(0, 4, 4, n));
            out.push_str(";\n");
        } else if j.rem_euclid(2) == 0 && mat.is_block_diagonal() {
            out.push_str("  A1 = ");
            write_rows(&mut out, &block(0, 0, 4, 4));
            out.push_str(";\n  A2 = ");
            write_rows(&mut out, &block(4, 4, n, n));
            out.push_str(";\n");
        } else {
            out.push_str("  FULL = ");
            write_rows(&mut out, &block(0, 0, m, m));
            out.push_str(";\n");
        }
        out.push_str("}\n");
    }
    out
}

/// Parse a single expression in z.
pub fn parse_expr(text: &str) -> Result<RationalExpr> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return p.err(format!("unexpected {}", describe(p.peek())));
    }
    Ok(e)
}

#[allow(dead_code)]
fn poly_from(coeffs: &[(f64, f64)]) -> Poly {
    Poly::new(coeffs.iter().map(|&(a, b)| C64::new(a, b)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn expressions() {
        let e = parse_expr("2*z^2 - i*z + 1/2").unwrap();
        assert_eq!(e.numerator(), &poly_from(&[(0.5, 0.0), (0.0, -1.0), (2.0, 0.0)]));
        let e = parse_expr("iz").unwrap();
        assert_eq!(e.eval(c(2.0, 0.0)).unwrap(), c(0.0, 2.0));
        let e = parse_expr("(z+1)/(z-1)").unwrap();
        assert!((e.eval(c(3.0, 0.0)).unwrap() - c(2.0, 0.0)).norm() < 1e-15);
        let e = parse_expr("-(3z)^2").unwrap();
        assert_eq!(e.eval(c(1.0, 0.0)).unwrap(), c(-9.0, 0.0));
        assert_eq!(parse_expr("1e-3").unwrap().as_constant(), Some(c(1e-3, 0.0)));
        assert_eq!(parse_expr("z^-1").unwrap().eval(c(4.0, 0.0)).unwrap(), c(0.25, 0.0));
    }

    #[test]
    fn syntax_error_position() {
        match parse_expr("z+") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (1, 3)),
            other => panic!("{other:?}"),
        }
        match parse_expr("1/(z-z)") {
            Err(Error::Parse { message, .. }) => assert!(message.contains("zero polynomial")),
            other => panic!("{other:?}"),
        }
        assert!(parse_expr("y").is_err());
    }

    #[test]
    fn header_errors() {
        let bad = "potential { n = 2; kind = weird; basepoint = (0,0); }";
        match parse_potential(bad) {
            Err(Error::Parse { line: 1, column, .. }) => assert_eq!(column, 27),
            other => panic!("{other:?}"),
        }
        let text = "potential { n = 2; kind = normalized; basepoint = (0,0); }\ncoeff[-1] {\n  B1 = [[1,2,3]];\n}";
        match parse_potential(text) {
            Err(Error::Parse { line: 3, message, .. }) => assert!(message.contains("4x2")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_block_is_zero() {
        let text = "potential { n = 1; kind = holomorphic; basepoint = (0.5,-1); }\ncoeff[0] { }\n";
        let p = parse_potential(text).unwrap();
        assert_eq!(p.basepoint(), c(0.5, -1.0));
        assert!(p.terms()[&0].is_zero());
    }

    #[test]
    fn display_roundtrip() {
        for s in ["(1 + 2*i)*z^3 - 0.1", "(z^2+1)/(z - 2i)", "-3.25*i", "0"] {
            let e = parse_expr(s).unwrap();
            let back = parse_expr(&e.to_string()).unwrap();
            assert_eq!(back, e, "{s} -> {e}");
        }
    }
}
