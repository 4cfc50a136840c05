//! A tiny interpreter for the C subset the classifier exporter emits:
//! one `int f(float a, float b, float c)` function whose body is nested
//! `if (x <op> literal) {..} else {..}` blocks ending in `return <int>;`.
//!
//! Written against C semantics, not against the exporter: parameters are
//! stored as `float`, an unsuffixed literal is a `double` and the
//! comparison promotes the parameter to `double`. A literal with an `f`
//! suffix is compared in `float`.
#![allow(dead_code)]

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Punct(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CError(pub String);

impl fmt::Display for CError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, CError> {
    Err(CError(msg.into()))
}

const PUNCT: [&str; 12] = ["<=", ">=", "==", "!=", "<", ">", "(", ")", "{", "}", ";", ","];

fn lex(src: &str) -> Result<Vec<Tok>, CError> {
    let b = src.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    while i < b.len() {
        let c = b[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if src[i..].starts_with("/*") {
            let end = src[i + 2..].find("*/").ok_or_else(|| CError("unterminated comment".into()))?;
            i += end + 4;
        } else if src[i..].starts_with("//") {
            i += src[i..].find('\n').unwrap_or(src.len() - i);
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push(Tok::Ident(src[start..i].to_string()));
        } else if c.is_ascii_digit() || c == b'.' || c == b'-' {
            let start = i;
            i += 1;
            while i < b.len() {
                let d = b[i];
                let exp_sign = (d == b'-' || d == b'+') && matches!(b[i - 1], b'e' | b'E');
                if d.is_ascii_digit() || d == b'.' || d == b'e' || d == b'E' || d == b'f' || d == b'F' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            out.push(Tok::Number(src[start..i].to_string()));
        } else if let Some(p) = PUNCT.iter().find(|p| src[i..].starts_with(**p)) {
            out.push(Tok::Punct(p));
            i += p.len();
        } else {
            return err(format!("unexpected character {:?} at byte {i}", c as char));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Literal {
    Double(f64),
    Float(f32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
    Ne,
}

#[derive(Debug, Clone, PartialEq)]
enum Stmt {
    Return(i64),
    If { param: usize, op: Op, lit: Literal, then: Vec<Stmt>, otherwise: Vec<Stmt> },
}

/// A parsed classifier function.
#[derive(Debug, Clone, PartialEq)]
pub struct CFunction {
    pub name: String,
    pub params: Vec<String>,
    body: Vec<Stmt>,
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn next(&mut self) -> Result<Tok, CError> {
        let t = self.toks.get(self.pos).cloned().ok_or_else(|| CError("unexpected end of input".into()))?;
        self.pos += 1;
        Ok(t)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn punct(&mut self, p: &str) -> Result<(), CError> {
        match self.next()? {
            Tok::Punct(q) if q == p => Ok(()),
            t => err(format!("expected {p:?}, found {t:?}")),
        }
    }

    fn keyword(&mut self, k: &str) -> Result<(), CError> {
        match self.next()? {
            Tok::Ident(s) if s == k => Ok(()),
            t => err(format!("expected {k:?}, found {t:?}")),
        }
    }

    fn ident(&mut self) -> Result<String, CError> {
        match self.next()? {
            Tok::Ident(s) => Ok(s),
            t => err(format!("expected identifier, found {t:?}")),
        }
    }

    fn function(&mut self) -> Result<CFunction, CError> {
        self.keyword("int")?;
        let name = self.ident()?;
        self.punct("(")?;
        let mut params = Vec::new();
        loop {
            self.keyword("float")?;
            params.push(self.ident()?);
            match self.next()? {
                Tok::Punct(",") => continue,
                Tok::Punct(")") => break,
                t => err(format!("expected ',' or ')', found {t:?}"))?,
            }
        }
        let body = self.block(&params)?;
        if self.pos != self.toks.len() {
            return err("trailing tokens after function body");
        }
        Ok(CFunction { name, params, body })
    }

    fn block(&mut self, params: &[String]) -> Result<Vec<Stmt>, CError> {
        self.punct("{")?;
        let mut stmts = Vec::new();
        while self.peek() != Some(&Tok::Punct("}")) {
            stmts.push(self.stmt(params)?);
        }
        self.punct("}")?;
        Ok(stmts)
    }

    fn stmt(&mut self, params: &[String]) -> Result<Stmt, CError> {
        match self.ident()?.as_str() {
            "return" => {
                let v = match self.next()? {
                    Tok::Number(n) => n.parse::<i64>().map_err(|_| CError(format!("bad int {n:?}")))?,
                    t => err(format!("expected integer, found {t:?}"))?,
                };
                self.punct(";")?;
                Ok(Stmt::Return(v))
            }
            "if" => {
                self.punct("(")?;
                let var = self.ident()?;
                let param = params
                    .iter()
                    .position(|p| *p == var)
                    .ok_or_else(|| CError(format!("undeclared identifier {var:?}")))?;
                let op = match self.next()? {
                    Tok::Punct("<=") => Op::Le,
                    Tok::Punct("<") => Op::Lt,
                    Tok::Punct(">=") => Op::Ge,
                    Tok::Punct(">") => Op::Gt,
                    Tok::Punct("==") => Op::Eq,
                    Tok::Punct("!=") => Op::Ne,
                    t => err(format!("expected comparison, found {t:?}"))?,
                };
                let lit = match self.next()? {
                    Tok::Number(n) => literal(&n)?,
                    t => err(format!("expected literal, found {t:?}"))?,
                };
                self.punct(")")?;
                let then = self.block(params)?;
                let otherwise = if self.peek() == Some(&Tok::Ident("else".into())) {
                    self.pos += 1;
                    if self.peek() == Some(&Tok::Ident("if".into())) {
                        vec![self.stmt(params)?]
                    } else {
                        self.block(params)?
                    }
                } else {
                    Vec::new()
                };
                Ok(Stmt::If { param, op, lit, then, otherwise })
            }
            other => err(format!("unsupported statement starting with {other:?}")),
        }
    }
}

fn literal(text: &str) -> Result<Literal, CError> {
    let bad = || CError(format!("bad floating literal {text:?}"));
    if let Some(body) = text.strip_suffix(['f', 'F']) {
        return body.parse::<f32>().map(Literal::Float).map_err(|_| bad());
    }
    if !text.contains(['.', 'e', 'E']) {
        // Integer constant, converted to double by the usual arithmetic conversions.
        return text.parse::<i64>().map(|v| Literal::Double(v as f64)).map_err(|_| bad());
    }
    text.parse::<f64>().map(Literal::Double).map_err(|_| bad())
}

fn compare<T: PartialOrd>(a: T, op: Op, b: T) -> bool {
    match op {
        Op::Le => a <= b,
        Op::Lt => a < b,
        Op::Ge => a >= b,
        Op::Gt => a > b,
        Op::Eq => a == b,
        Op::Ne => a != b,
    }
}

fn exec(stmts: &[Stmt], args: &[f32]) -> Option<i64> {
    for s in stmts {
        match s {
            Stmt::Return(v) => return Some(*v),
            Stmt::If { param, op, lit, then, otherwise } => {
                let x = args[*param];
                let taken = match *lit {
                    Literal::Double(d) => compare(f64::from(x), *op, d),
                    Literal::Float(f) => compare(x, *op, f),
                };
                if let Some(v) = exec(if taken { then } else { otherwise }, args) {
                    return Some(v);
                }
            }
        }
    }
    None
}

impl CFunction {
    pub fn parse(src: &str) -> Result<CFunction, CError> {
        Parser { toks: lex(src)?, pos: 0 }.function()
    }

    /// Calls the function. Arguments are converted to `float` first, as a
    /// C caller passing doubles would.
    pub fn call(&self, args: &[f64]) -> Result<i64, CError> {
        if args.len() != self.params.len() {
            return err(format!("expected {} arguments, got {}", self.params.len(), args.len()));
        }
        let args: Vec<f32> = args.iter().map(|&a| a as f32).collect();
        exec(&self.body, &args).ok_or_else(|| CError("control reached end of non-void function".into()))
    }
}
