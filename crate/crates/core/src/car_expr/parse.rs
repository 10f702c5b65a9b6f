//! Text form of polynomials.
//!
//! ```text
//! expr   := ['+'|'-'] term (('+'|'-') term)*
//! term   := factor ('*' factor)*
//! factor := scalar | 'a' '(' dyadic ')' | 'ad' '(' dyadic ')' | '(' expr ')'
//! dyadic := int | int '/' pow2
//! scalar := float | float 'i' | '(' float [',' float] ')'
//! ```

use num_complex::Complex64;

use super::{CarPolynomial, GeneratorSymbol};
use crate::dyadic::{log2_exact, DyadicIndex, MAX_EXPONENT};
use crate::error::{Error, Result};

pub fn parse_expression(text: &str) -> Result<CarPolynomial> {
    let mut p = Parser {
        chars: text.chars().collect(),
        pos: 0,
    };
    let value = p.expr()?;
    p.skip_ws();
    if p.pos < p.chars.len() {
        return Err(p.error(format!("unexpected {:?}", p.chars[p.pos])));
    }
    Ok(value)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Syntax {
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
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
            Err(self.error(format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<CarPolynomial> {
        self.skip_ws();
        let negate = if self.eat('-') {
            true
        } else {
            self.eat('+');
            false
        };
        let first = self.term()?;
        let mut acc = if negate { -first } else { first };
        loop {
            if self.eat('+') {
                acc = acc + self.term()?;
            } else if self.eat('-') {
                acc = acc - self.term()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<CarPolynomial> {
        let mut acc = self.factor()?;
        while self.eat('*') {
            acc = acc.multiply(&self.factor()?);
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<CarPolynomial> {
        if let Some(c) = self.scalar()? {
            return Ok(CarPolynomial::scalar(c));
        }
        if self.eat('(') {
            let inner = self.expr()?;
            self.expect(')')?;
            return Ok(inner);
        }
        let rest: String = self.chars[self.pos..].iter().take(2).collect();
        let dagger = if rest == "ad" {
            self.pos += 2;
            true
        } else if rest.starts_with('a') {
            self.pos += 1;
            false
        } else {
            return Err(self.error("expected a(..), ad(..), a scalar or '('"));
        };
        self.expect('(')?;
        let index = self.dyadic()?;
        self.expect(')')?;
        Ok(CarPolynomial::generator(GeneratorSymbol { index, dagger }))
    }

    fn integer(&mut self) -> Result<i64> {
        self.skip_ws();
        let start = self.pos;
        if self.peek() == Some('-') {
            self.pos += 1;
        }
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse().map_err(|_| {
            self.pos = start;
            self.error("expected an integer")
        })
    }

    fn dyadic(&mut self) -> Result<DyadicIndex> {
        let numerator = self.integer()?;
        if !self.eat('/') {
            return Ok(DyadicIndex::integer(numerator));
        }
        self.skip_ws();
        let column = self.pos + 1;
        let denominator = self.integer()?;
        match log2_exact(denominator) {
            Some(e) if e <= MAX_EXPONENT => Ok(DyadicIndex::new(numerator, e)),
            Some(_) => Err(Error::Syntax {
                column,
                message: "denominator too large".into(),
            }),
            None => Err(Error::NonDyadic {
                column,
                denominator,
            }),
        }
    }

    /// Scans a float literal without consuming it on failure.
    fn float(&mut self) -> Option<f64> {
        self.skip_ws();
        let start = self.pos;
        let mut end = start;
        let at = |i: usize| self.chars.get(i).copied();
        if matches!(at(end), Some('-' | '+')) {
            end += 1;
        }
        let digits_from = end;
        while at(end).is_some_and(|c| c.is_ascii_digit() || c == '.') {
            end += 1;
        }
        if end == digits_from {
            return None;
        }
        if matches!(at(end), Some('e' | 'E')) {
            let mut e = end + 1;
            if matches!(at(e), Some('-' | '+')) {
                e += 1;
            }
            if at(e).is_some_and(|c| c.is_ascii_digit()) {
                while at(e).is_some_and(|c| c.is_ascii_digit()) {
                    e += 1;
                }
                end = e;
            }
        }
        let s: String = self.chars[start..end].iter().collect();
        let value = s.parse().ok()?;
        self.pos = end;
        Some(value)
    }

    fn scalar(&mut self) -> Result<Option<Complex64>> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let value = self
                    .float()
                    .ok_or_else(|| self.error("malformed number"))?;
                if self.peek() == Some('i') {
                    self.pos += 1;
                    Ok(Some(Complex64::new(0.0, value)))
                } else {
                    Ok(Some(Complex64::new(value, 0.0)))
                }
            }
            Some('(') => {
                let saved = self.pos;
                self.pos += 1;
                if let Some(re) = self.float() {
                    let im = if self.eat(',') { self.float() } else { Some(0.0) };
                    if let Some(im) = im {
                        if self.eat(')') {
                            return Ok(Some(Complex64::new(re, im)));
                        }
                    }
                }
                self.pos = saved;
                Ok(None)
            }
            _ => Ok(None),
        }
    }
}

/// Deterministic rendering; `parse_expression(&render(p)) == p`.
pub(super) fn render(p: &CarPolynomial) -> String {
    let mut out = String::new();
    for (i, (word, c)) in p.terms().enumerate() {
        let first = i == 0;
        let (negative, magnitude) = if c.im == 0.0 {
            (c.re < 0.0, format_real(c.re.abs()))
        } else if c.re == 0.0 {
            (c.im < 0.0, format!("{}i", c.im.abs()))
        } else {
            (false, format!("({},{})", c.re, c.im))
        };
        match (first, negative) {
            (true, true) => out.push('-'),
            (true, false) => {}
            (false, true) => out.push_str(" - "),
            (false, false) => out.push_str(" + "),
        }
        let word_text = word.to_string();
        if word.degree() == 0 {
            out.push_str(&magnitude);
        } else if magnitude == "1" {
            out.push_str(&word_text);
        } else {
            out.push_str(&magnitude);
            out.push('*');
            out.push_str(&word_text);
        }
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

fn format_real(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::car_expr::tests::arb_poly;
    use proptest::prelude::*;

    type P = CarPolynomial;

    #[test]
    fn simple_monomial() {
        let p = parse_expression("ad(0)*a(0)").unwrap();
        assert_eq!(p, P::ad(0) * P::a(0));
    }

    #[test]
    fn dyadic_indices() {
        let p = parse_expression("a(1/2) + 2*ad(-3/4)").unwrap();
        let expected = P::a(DyadicIndex::new(1, 1))
            + P::ad(DyadicIndex::new(-3, 2)).scale(Complex64::new(2.0, 0.0));
        assert_eq!(p, expected);
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn non_dyadic_rejected() {
        assert_eq!(
            parse_expression("a(1/3)"),
            Err(Error::NonDyadic {
                column: 5,
                denominator: 3
            })
        );
    }

    #[test]
    fn syntax_error_columns() {
        match parse_expression("ad(0) * b(1)") {
            Err(Error::Syntax { column, .. }) => assert_eq!(column, 9),
            other => panic!("unexpected {other:?}"),
        }
        match parse_expression("a(0") {
            Err(Error::Syntax { column, .. }) => assert_eq!(column, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_expression("a(0) +").is_err());
        assert!(parse_expression("").is_err());
    }

    #[test]
    fn scalars_and_groups() {
        let p = parse_expression("(0.5,-1)*a(0) + 2i + (2)*(a(1)+ad(1))").unwrap();
        let expected = P::a(0).scale(Complex64::new(0.5, -1.0))
            + P::scalar(Complex64::new(0.0, 2.0))
            + P::position(1).scale(Complex64::new(2.0, 0.0));
        assert_eq!(p, expected);
        assert_eq!(parse_expression("-1e-3*a(0)").unwrap(), P::a(0).scale(Complex64::new(-1e-3, 0.0)));
        assert_eq!(parse_expression("a(0)*2*ad(1)").unwrap(), parse_expression("2*a(0)*ad(1)").unwrap());
    }

    #[test]
    fn rendering() {
        assert_eq!(parse_expression("a(0)*ad(0)").unwrap().to_string(), "1 - ad(0)*a(0)");
        assert_eq!(P::zero().to_string(), "0");
        let p = parse_expression("-2i*a(1/2) + (1,2)").unwrap();
        assert_eq!(p.to_string(), "(1,2) - 2i*a(1/2)");
    }

    proptest! {
        #[test]
        fn render_round_trip(p in arb_poly()) {
            let text = render(&p);
            prop_assert_eq!(parse_expression(&text).unwrap(), p.clone());
            let json = serde_json::to_string(&p).unwrap();
            prop_assert_eq!(serde_json::from_str::<CarPolynomial>(&json).unwrap(), p);
        }
    }
}
