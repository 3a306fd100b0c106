//! Plain-text problem format.
//!
//! ```text
//! vars: x1 x2
//! minimize: x1 + x2
//! subject_to:
//!   x1^3 + x2 + 1 >= 0
//!   x2^3 - x1 + 1 >= 0
//! ```
//!
//! Blank lines and text after `#` are ignored.

use std::fmt;

use thiserror::Error;

use crate::poly::{Polynomial, PopProblem};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}, column {col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

fn err<T>(line: usize, col: usize, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        line,
        col,
        msg: msg.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Geq,
    Eq,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Geq => ">=",
            Relation::Eq => "==",
        })
    }
}

/// Parsed file with variable names kept for printing.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemFile {
    pub vars: Vec<String>,
    pub problem: PopProblem,
}

impl ProblemFile {
    /// Render back into the text format.
    pub fn to_text(&self) -> String {
        let mut s = format!("vars: {}\n", self.vars.join(" "));
        s.push_str(&format!(
            "minimize: {}\n",
            self.problem.objective.to_string_with(&self.vars)
        ));
        if !self.problem.equalities.is_empty() || !self.problem.inequalities.is_empty() {
            s.push_str("subject_to:\n");
            for p in &self.problem.inequalities {
                s.push_str(&format!("  {} >= 0\n", p.to_string_with(&self.vars)));
            }
            for p in &self.problem.equalities {
                s.push_str(&format!("  {} == 0\n", p.to_string_with(&self.vars)));
            }
        }
        s
    }
}

pub fn parse_problem(text: &str) -> Result<PopProblem, ParseError> {
    parse_problem_file(text).map(|f| f.problem)
}

pub fn parse_problem_file(text: &str) -> Result<ProblemFile, ParseError> {
    let mut vars: Option<Vec<String>> = None;
    let mut objective: Option<Polynomial> = None;
    let mut in_constraints = false;
    let mut equalities = Vec::new();
    let mut inequalities = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('#').next().unwrap_or("");
        let trimmed = line.trim_start();
        let indent = line.len() - trimmed.len();
        let trimmed = trimmed.trim_end();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("vars:") {
            if vars.is_some() {
                return err(line_no, indent + 1, "duplicate vars line");
            }
            let names: Vec<String> = rest
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            if names.is_empty() {
                return err(line_no, indent + 1, "no variables declared");
            }
            for (i, n) in names.iter().enumerate() {
                let valid = n.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                    && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
                if !valid {
                    return err(line_no, indent + 1, format!("invalid variable name '{}'", n));
                }
                if names[..i].contains(n) {
                    return err(line_no, indent + 1, format!("variable '{}' declared twice", n));
                }
            }
            vars = Some(names);
            continue;
        }
        let Some(names) = vars.as_ref() else {
            return err(line_no, indent + 1, "expected 'vars:' before anything else");
        };
        if let Some(rest) = trimmed.strip_prefix("minimize:") {
            if objective.is_some() {
                return err(line_no, indent + 1, "duplicate minimize line");
            }
            let col0 = indent + "minimize:".len();
            if rest.trim().is_empty() {
                return err(line_no, col0 + 1, "empty objective");
            }
            objective = Some(parse_expr(rest, names, line_no, col0)?);
            in_constraints = false;
            continue;
        }
        if trimmed == "subject_to:" {
            in_constraints = true;
            continue;
        }
        if !in_constraints {
            return err(line_no, indent + 1, "expected 'minimize:' or 'subject_to:'");
        }
        let (pos, rel, oplen) = if let Some(p) = line.find(">=") {
            (p, Relation::Geq, 2)
        } else if let Some(p) = line.find("==") {
            (p, Relation::Eq, 2)
        } else if let Some(p) = line.find("<=") {
            // a <= b is read as b - a >= 0
            let lhs = parse_expr(&line[..p], names, line_no, 0)?;
            let rhs = parse_expr(&line[p + 2..], names, line_no, p + 2)?;
            inequalities.push(rhs - lhs);
            continue;
        } else {
            return err(line_no, indent + 1, "constraint needs '>=', '<=' or '=='");
        };
        let lhs = parse_expr(&line[..pos], names, line_no, 0)?;
        let rhs = parse_expr(&line[pos + oplen..], names, line_no, pos + oplen)?;
        let p = lhs - rhs;
        match rel {
            Relation::Geq => inequalities.push(p),
            Relation::Eq => equalities.push(p),
        }
    }
    let Some(vars) = vars else {
        return err(1, 1, "missing 'vars:' line");
    };
    let Some(objective) = objective else {
        return err(text.lines().count().max(1), 1, "missing 'minimize:' line");
    };
    let problem = PopProblem::new(objective, equalities, inequalities)
        .expect("all polynomials built over the declared variables");
    Ok(ProblemFile { vars, problem })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

/// Tokens with their 1-based column.
fn lex(s: &str, line: usize, col0: usize) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = col0 + i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            let lit: String = chars[start..i].iter().collect();
            let v: f64 = lit
                .parse()
                .or_else(|_| err(line, col, format!("malformed number '{}'", lit)))?;
            out.push((Tok::Num(v), col));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if "+-*^()".contains(c) {
            out.push((Tok::Op(c), col));
            i += 1;
        } else {
            return err(line, col, format!("unexpected character '{}'", c));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    names: &'a [String],
    line: usize,
    end_col: usize,
}

fn parse_expr(s: &str, names: &[String], line: usize, col0: usize) -> Result<Polynomial, ParseError> {
    let toks = lex(s, line, col0)?;
    let end_col = col0 + s.chars().count() + 1;
    if toks.is_empty() {
        return err(line, col0 + 1, "empty expression");
    }
    let mut p = Parser {
        toks,
        pos: 0,
        names,
        line,
        end_col,
    };
    let e = p.sum()?;
    if let Some((t, col)) = p.toks.get(p.pos) {
        let what = match t {
            Tok::Ident(_) | Tok::Num(_) | Tok::Op('(') => "implicit multiplication is not allowed".to_string(),
            _ => format!("unexpected token {:?}", t),
        };
        return err(line, *col, what);
    }
    Ok(e)
}

impl Parser<'_> {
    fn n(&self) -> usize {
        self.names.len()
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |(_, c)| *c)
    }

    fn sum(&mut self) -> Result<Polynomial, ParseError> {
        let mut acc = self.product()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let c = *c;
            self.pos += 1;
            let rhs = self.product()?;
            acc = if c == '+' { acc + rhs } else { acc - rhs };
        }
        Ok(acc)
    }

    fn product(&mut self) -> Result<Polynomial, ParseError> {
        let mut acc = self.unary()?;
        while let Some(Tok::Op('*')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            acc = acc * rhs;
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Polynomial, ParseError> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(-self.unary()?)
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Polynomial, ParseError> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let col = self.col();
            match self.toks.get(self.pos) {
                Some((Tok::Num(v), _)) if v.fract() == 0.0 && *v >= 0.0 && *v <= u32::MAX as f64 => {
                    let e = *v as u32;
                    self.pos += 1;
                    if let Some(Tok::Op('^')) = self.peek() {
                        return err(self.line, self.col(), "chained exponents need parentheses");
                    }
                    Ok(base.pow(e))
                }
                _ => err(self.line, col, "malformed exponent: expected a nonnegative integer"),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Polynomial, ParseError> {
        let col = self.col();
        match self.toks.get(self.pos).cloned() {
            Some((Tok::Num(v), _)) => {
                self.pos += 1;
                Ok(Polynomial::constant(self.n(), v))
            }
            Some((Tok::Ident(name), _)) => {
                self.pos += 1;
                match self.names.iter().position(|n| *n == name) {
                    Some(i) => Ok(Polynomial::var(self.n(), i)),
                    None => err(self.line, col, format!("undeclared variable '{}'", name)),
                }
            }
            Some((Tok::Op('('), _)) => {
                self.pos += 1;
                let e = self.sum()?;
                match self.peek() {
                    Some(Tok::Op(')')) => {
                        self.pos += 1;
                        Ok(e)
                    }
                    _ => err(self.line, self.col(), "expected ')'"),
                }
            }
            Some((t, _)) => err(self.line, col, format!("unexpected token {:?}", t)),
            None => err(self.line, col, "unexpected end of expression"),
        }
    }
}
