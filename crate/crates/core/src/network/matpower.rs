//! MATPOWER `.m` subset: `baseMVA`, `bus`, `gen`, `branch`, plus an optional
//! per-branch `risk` column vector. Everything else is skipped.

use super::{Bus, Generator, Line, Load, NetworkCase, Shunt};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str,
    Assign,
    Open(char),
    Close(char),
    Semi,
    Comma,
    Newline,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Spanned>> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let mut push = |tok| {
            out.push(Spanned {
                tok,
                line: l0,
                column: c0,
            })
        };
        match c {
            '\n' => {
                push(Tok::Newline);
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            '%' | '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            c if c.is_whitespace() => {}
            '=' => push(Tok::Assign),
            ';' => push(Tok::Semi),
            ',' => push(Tok::Comma),
            '[' | '{' | '(' => push(Tok::Open(c)),
            ']' | '}' | ')' => push(Tok::Close(c)),
            '\'' | '"' => {
                let quote = c;
                i += 1;
                col += 1;
                while i < chars.len() && chars[i] != quote {
                    if chars[i] == '\n' {
                        return Err(syntax(l0, c0, "unterminated string"));
                    }
                    i += 1;
                    col += 1;
                }
                if i == chars.len() {
                    return Err(syntax(l0, c0, "unterminated string"));
                }
                push(Tok::Str);
            }
            c if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' => {
                let start = i;
                i += 1;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric()
                        || chars[i] == '.'
                        || ((chars[i] == '-' || chars[i] == '+')
                            && matches!(chars[i - 1], 'e' | 'E')))
                {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let value = match word.as_str() {
                    "Inf" | "+Inf" => f64::INFINITY,
                    "-Inf" => f64::NEG_INFINITY,
                    w => w
                        .parse::<f64>()
                        .map_err(|_| syntax(l0, c0, format!("invalid number `{w}`")))?,
                };
                push(Tok::Num(value));
                col += i - start;
                continue;
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.')
                {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let tok = match word.as_str() {
                    "Inf" => Tok::Num(f64::INFINITY),
                    _ => Tok::Ident(word),
                };
                push(tok);
                col += i - start;
                continue;
            }
            other => return Err(syntax(l0, c0, format!("unexpected character `{other}`"))),
        }
        i += 1;
        col += 1;
    }
    Ok(out)
}

enum Value {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
    Other,
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn skip_line(&mut self) {
        while let Some(t) = self.peek() {
            let newline = t.tok == Tok::Newline;
            self.pos += 1;
            if newline {
                break;
            }
        }
    }

    fn error_here(&self, message: &str) -> Error {
        match self.peek().or(self.toks.last()) {
            Some(t) => syntax(t.line, t.column, message),
            None => syntax(1, 1, message),
        }
    }

    fn statements(&mut self) -> Result<Vec<(String, Value, usize)>> {
        let mut out = Vec::new();
        while let Some(t) = self.peek().cloned() {
            match &t.tok {
                Tok::Newline | Tok::Semi | Tok::Comma => self.pos += 1,
                Tok::Ident(word) if word == "function" || word == "end" => self.skip_line(),
                Tok::Ident(word) => {
                    self.pos += 1;
                    match self.peek().map(|s| &s.tok) {
                        Some(Tok::Assign) => self.pos += 1,
                        _ => return Err(self.error_here("expected `=` after identifier")),
                    }
                    let value = self.value()?;
                    out.push((word.clone(), value, t.line));
                }
                _ => return Err(syntax(t.line, t.column, "expected an assignment")),
            }
        }
        Ok(out)
    }

    fn value(&mut self) -> Result<Value> {
        let t = self
            .peek()
            .cloned()
            .ok_or_else(|| self.error_here("missing value"))?;
        match t.tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Value::Scalar(v))
            }
            Tok::Str => {
                self.pos += 1;
                Ok(Value::Other)
            }
            Tok::Open('[') => {
                self.pos += 1;
                self.matrix(t.line, t.column).map(Value::Matrix)
            }
            Tok::Open(open) => {
                // cell arrays and the like: skip to the matching close
                let close = if open == '{' { '}' } else { ')' };
                let mut depth = 0usize;
                while let Some(s) = self.peek().cloned() {
                    self.pos += 1;
                    match s.tok {
                        Tok::Open(c) if c == open => depth += 1,
                        Tok::Close(c) if c == close => {
                            depth -= 1;
                            if depth == 0 {
                                return Ok(Value::Other);
                            }
                        }
                        _ => {}
                    }
                }
                Err(syntax(t.line, t.column, "unbalanced brackets"))
            }
            _ => Err(syntax(t.line, t.column, "expected a number, string or matrix")),
        }
    }

    fn matrix(&mut self, line: usize, column: usize) -> Result<Vec<Vec<f64>>> {
        let mut rows = Vec::new();
        let mut row = Vec::new();
        loop {
            let t = self
                .peek()
                .cloned()
                .ok_or_else(|| syntax(line, column, "unterminated matrix"))?;
            self.pos += 1;
            match t.tok {
                Tok::Num(v) => row.push(v),
                Tok::Comma => {}
                Tok::Semi | Tok::Newline => {
                    if !row.is_empty() {
                        rows.push(std::mem::take(&mut row));
                    }
                }
                Tok::Close(']') => {
                    if !row.is_empty() {
                        rows.push(row);
                    }
                    return Ok(rows);
                }
                _ => return Err(syntax(t.line, t.column, "unexpected token in matrix")),
            }
        }
    }
}

fn col(row: &[f64], k: usize, table: &str, line: usize) -> Result<f64> {
    row.get(k).copied().ok_or_else(|| {
        Error::semantic(
            format!("{table} row {line}"),
            format!("missing column {}", k + 1),
        )
    })
}

/// Parse the supported MATPOWER subset into a per-unit case.
pub fn parse_matpower(text: &str) -> Result<NetworkCase> {
    let mut parser = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let mut name = String::new();
    let mut base = None;
    let (mut bus_t, mut gen_t, mut branch_t, mut risk_t) = (None, None, None, None);
    for (ident, value, _) in parser.statements()? {
        let field = ident.rsplit('.').next().unwrap_or(&ident).to_string();
        match (field.as_str(), value) {
            ("baseMVA", Value::Scalar(v)) => base = Some(v),
            ("bus", Value::Matrix(m)) => bus_t = Some(m),
            ("gen", Value::Matrix(m)) => gen_t = Some(m),
            ("branch", Value::Matrix(m)) => branch_t = Some(m),
            ("risk", Value::Matrix(m)) => risk_t = Some(m),
            ("baseMVA" | "bus" | "gen" | "branch" | "risk", _) => {
                return Err(Error::semantic(
                    format!("mpc.{field}"),
                    "unexpected value shape",
                ))
            }
            _ => {}
        }
        if name.is_empty() {
            if let Some(stem) = ident.strip_suffix(&format!(".{field}")) {
                if stem != "mpc" {
                    name = stem.to_string();
                }
            }
        }
    }

    let base = base.ok_or_else(|| Error::semantic("mpc.baseMVA", "missing baseMVA"))?;
    if !(base > 0.0) {
        return Err(Error::semantic("mpc.baseMVA", "baseMVA must be positive"));
    }
    let bus_t = bus_t.ok_or_else(|| Error::semantic("mpc.bus", "missing bus table"))?;
    let gen_t = gen_t.ok_or_else(|| Error::semantic("mpc.gen", "missing gen table"))?;
    let branch_t = branch_t.ok_or_else(|| Error::semantic("mpc.branch", "missing branch table"))?;

    let mut buses = Vec::new();
    let mut loads = Vec::new();
    let mut shunts = Vec::new();
    for (k, row) in bus_t.iter().enumerate() {
        let id = col(row, 0, "bus", k + 1)? as i64;
        let (pd, qd) = (col(row, 2, "bus", k + 1)?, col(row, 3, "bus", k + 1)?);
        let (gs, bs) = (col(row, 4, "bus", k + 1)?, col(row, 5, "bus", k + 1)?);
        buses.push(Bus {
            id,
            v_max: col(row, 11, "bus", k + 1)?,
            v_min: col(row, 12, "bus", k + 1)?,
        });
        if pd != 0.0 || qd != 0.0 {
            loads.push(Load {
                bus: id,
                p_base: pd / base,
                q_base: qd / base,
            });
        }
        if gs != 0.0 || bs != 0.0 {
            shunts.push(Shunt {
                bus: id,
                gs: gs / base,
                bs: bs / base,
            });
        }
    }

    let mut gens = Vec::new();
    for (k, row) in gen_t.iter().enumerate() {
        if col(row, 7, "gen", k + 1)? <= 0.0 {
            continue;
        }
        gens.push(Generator {
            bus: col(row, 0, "gen", k + 1)? as i64,
            q_max: col(row, 3, "gen", k + 1)? / base,
            q_min: col(row, 4, "gen", k + 1)? / base,
            p_max: col(row, 8, "gen", k + 1)? / base,
        });
    }

    let risks: Option<Vec<f64>> = risk_t.map(|m| m.into_iter().flatten().collect());
    if let Some(r) = &risks {
        if r.len() != branch_t.len() {
            return Err(Error::semantic(
                "mpc.risk",
                format!("{} risk values for {} branches", r.len(), branch_t.len()),
            ));
        }
    }

    let mut lines = Vec::new();
    for (k, row) in branch_t.iter().enumerate() {
        let n = k + 1;
        if col(row, 10, "branch", n)? <= 0.0 {
            continue;
        }
        let (r, x, bc) = (
            col(row, 2, "branch", n)?,
            col(row, 3, "branch", n)?,
            col(row, 4, "branch", n)?,
        );
        let z2 = r * r + x * x;
        if z2 == 0.0 {
            return Err(Error::semantic(
                format!("branch row {n}"),
                "zero series impedance",
            ));
        }
        let ratio = match col(row, 8, "branch", n)? {
            v if v == 0.0 => 1.0,
            v => v,
        };
        let shift = col(row, 9, "branch", n)?.to_radians();
        let (theta_min, theta_max) = match (row.get(11), row.get(12)) {
            (Some(&lo), Some(&hi)) => (lo.to_radians(), hi.to_radians()),
            _ => {
                return Err(Error::semantic(
                    format!("branch row {n}"),
                    "missing angle limits (angmin/angmax)",
                ))
            }
        };
        lines.push(Line {
            id: n as i64,
            from_bus: col(row, 0, "branch", n)? as i64,
            to_bus: col(row, 1, "branch", n)? as i64,
            g: r / z2,
            b: -x / z2,
            g_fr: 0.0,
            g_to: 0.0,
            b_fr: bc / 2.0,
            b_to: bc / 2.0,
            tap_mag: ratio,
            tap_re: ratio * shift.cos(),
            tap_im: ratio * shift.sin(),
            thermal: col(row, 5, "branch", n)? / base,
            theta_min,
            theta_max,
            risk: risks.as_ref().map_or(1.0, |r| r[k]),
        });
    }

    NetworkCase::from_parts(name, base, buses, lines, gens, loads, shunts)
}
