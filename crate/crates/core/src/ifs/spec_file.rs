//! Plain-text fractal specification files.
//!
//! ```text
//! # Sierpinski gasket written out by hand
//! dim  = 2
//! beta = 2
//! name = my-gasket          # optional
//!
//! [map]
//! U     = 1 0 0 1           # row-major, d*d entries
//! gamma = 0 0
//!
//! [map]
//! U = 1 0 0 1; gamma = 1/2 0
//!
//! [map]
//! U = 1 0 0 1; gamma = 1/4 sqrt(3)/4
//! ```
//!
//! Alternatively a whole file may be the single line `preset = sierpinski-gasket`.
//! Numbers are whitespace-separated arithmetic expressions over `+ - * / ^`,
//! parentheses, `pi`, and `sqrt sin cos tan`. `γ` is accepted for `gamma`.
//! The first map must be `U = I, gamma = 0`. Errors cite 1-based line numbers.

use super::{AffineMap, IfsSpec};
use crate::error::{Error, Result};

/// A top-level `key = value` line not understood by the fractal grammar.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtraKey {
    pub key: String,
    pub value: String,
    pub line: usize,
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Parses a fractal spec, rejecting any key outside the fractal grammar.
pub fn parse_spec(text: &str) -> Result<IfsSpec> {
    let (spec, extras) = parse_spec_with_extras(text)?;
    if let Some(x) = extras.first() {
        return Err(perr(x.line, format!("unknown key '{}'", x.key)));
    }
    spec.ok_or_else(|| perr(1, "no fractal defined (need `preset` or dim/beta/[map] sections)"))
}

#[derive(Default)]
struct MapDraft {
    line: usize,
    u: Option<Vec<f64>>,
    gamma: Option<Vec<f64>>,
}

/// Parses the fractal part of a document and hands back unrecognised
/// top-level keys, so that experiment configs can share the grammar.
pub fn parse_spec_with_extras(text: &str) -> Result<(Option<IfsSpec>, Vec<ExtraKey>)> {
    let mut dim: Option<(usize, usize)> = None;
    let mut beta: Option<(f64, usize)> = None;
    let mut name: Option<String> = None;
    let mut preset: Option<(String, usize)> = None;
    let mut maps: Vec<MapDraft> = Vec::new();
    let mut extras = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            if content == "[map]" {
                maps.push(MapDraft { line, ..Default::default() });
                continue;
            }
            return Err(perr(line, format!("unknown section '{content}'")));
        }
        for stmt in content.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = stmt
                .split_once('=')
                .ok_or_else(|| perr(line, format!("expected `key = value`, got '{stmt}'")))?;
            let key = key.trim();
            let value = value.trim();
            if let Some(m) = maps.last_mut() {
                match key {
                    "U" | "u" => {
                        if m.u.is_some() {
                            return Err(perr(line, "duplicate U in map section"));
                        }
                        m.u = Some(parse_numbers(value, line)?);
                        continue;
                    }
                    "gamma" | "γ" => {
                        if m.gamma.is_some() {
                            return Err(perr(line, "duplicate gamma in map section"));
                        }
                        m.gamma = Some(parse_numbers(value, line)?);
                        continue;
                    }
                    _ => return Err(perr(line, format!("unknown key '{key}' inside [map]"))),
                }
            }
            match key {
                "dim" => {
                    let d: usize = value
                        .parse()
                        .map_err(|_| perr(line, format!("dim must be a positive integer, got '{value}'")))?;
                    if d == 0 {
                        return Err(perr(line, "dim must be positive"));
                    }
                    dim = Some((d, line));
                }
                "beta" => beta = Some((eval_expr(value, line)?, line)),
                "name" => name = Some(value.to_string()),
                "preset" => preset = Some((value.to_string(), line)),
                _ => extras.push(ExtraKey { key: key.to_string(), value: value.to_string(), line }),
            }
        }
    }

    if let Some((p, line)) = preset {
        if dim.is_some() || beta.is_some() || !maps.is_empty() {
            return Err(perr(line, "`preset` cannot be combined with dim/beta/[map]"));
        }
        let spec = IfsSpec::preset(&p).map_err(|e| perr(line, e.to_string()))?;
        return Ok((Some(spec), extras));
    }
    if dim.is_none() && beta.is_none() && maps.is_empty() {
        return Ok((None, extras));
    }
    let (d, _) = dim.ok_or_else(|| perr(1, "missing `dim`"))?;
    let (b, bline) = beta.ok_or_else(|| perr(1, "missing `beta`"))?;
    let mut out = Vec::with_capacity(maps.len());
    for m in maps {
        let u = m.u.ok_or_else(|| perr(m.line, "map section without U"))?;
        let g = m.gamma.ok_or_else(|| perr(m.line, "map section without gamma"))?;
        if u.len() != d * d {
            return Err(perr(m.line, format!("U needs {} entries, got {}", d * d, u.len())));
        }
        if g.len() != d {
            return Err(perr(m.line, format!("gamma needs {d} entries, got {}", g.len())));
        }
        out.push(AffineMap::new(u, g));
    }
    let spec = IfsSpec { dim: d, beta: b, maps: out, preset_name: name };
    spec.validate().map_err(|e| perr(bline, e.to_string()))?;
    Ok((Some(spec), extras))
}

fn parse_numbers(value: &str, line: usize) -> Result<Vec<f64>> {
    value.split_whitespace().map(|t| eval_expr(t, line)).collect()
}

/// Evaluates one arithmetic expression (no whitespace inside).
pub fn eval_expr(src: &str, line: usize) -> Result<f64> {
    let mut p = ExprParser { s: src.as_bytes(), pos: 0, line, src };
    let v = p.sum()?;
    if p.pos != p.s.len() {
        return Err(p.fail("trailing characters"));
    }
    if !v.is_finite() {
        return Err(p.fail("value is not finite"));
    }
    Ok(v)
}

struct ExprParser<'a> {
    s: &'a [u8],
    pos: usize,
    line: usize,
    src: &'a str,
}

impl ExprParser<'_> {
    fn fail(&self, what: &str) -> Error {
        perr(self.line, format!("{what} in expression '{}' at column {}", self.src, self.pos + 1))
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn sum(&mut self) -> Result<f64> {
        let mut v = self.product()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let r = self.product()?;
            v = if c == b'+' { v + r } else { v - r };
        }
        Ok(v)
    }

    fn product(&mut self) -> Result<f64> {
        let mut v = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let r = self.unary()?;
            v = if c == b'*' { v * r } else { v / r };
        }
        Ok(v)
    }

    fn power(&mut self) -> Result<f64> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let e = self.unary()?;
            return Ok(base.powf(e));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<f64> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(-self.unary()?)
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn atom(&mut self) -> Result<f64> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let v = self.sum()?;
                if self.peek() != Some(b')') {
                    return Err(self.fail("missing ')'"));
                }
                self.pos += 1;
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while let Some(c) = self.peek() {
                    let exp_sign = (c == b'-' || c == b'+')
                        && matches!(self.s.get(self.pos.wrapping_sub(1)), Some(b'e' | b'E'));
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let tok = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
                tok.parse::<f64>().map_err(|_| self.fail("bad number"))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric()) {
                    self.pos += 1;
                }
                let ident = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
                if ident == "pi" {
                    return Ok(std::f64::consts::PI);
                }
                let f: fn(f64) -> f64 = match ident {
                    "sqrt" => f64::sqrt,
                    "sin" => f64::sin,
                    "cos" => f64::cos,
                    "tan" => f64::tan,
                    _ => return Err(self.fail(&format!("unknown identifier '{ident}'"))),
                };
                if self.peek() != Some(b'(') {
                    return Err(self.fail("expected '(' after function name"));
                }
                Ok(f(self.atom()?))
            }
            _ => Err(self.fail("unexpected character")),
        }
    }
}
