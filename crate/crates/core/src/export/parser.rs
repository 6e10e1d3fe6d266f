//! Parser for the Verilog-A subset produced by the emitter.

use super::lexer::{lex, Tok, Token};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Real,
    Integer,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Real(f64),
    Var(String),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Binary(&'static str, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    /// `$name(args)`
    System(String, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Block(Vec<Stmt>),
    Assign(String, Expr),
    If(Expr, Box<Stmt>, Option<Box<Stmt>>),
    For {
        init: (String, Expr),
        cond: Expr,
        step: (String, Expr),
        body: Box<Stmt>,
    },
    /// `V(a, b) <+ expr` or `I(...) <+ expr`
    Contribution {
        access: String,
        nodes: Vec<String>,
        value: Expr,
    },
    /// `@(event) stmt`
    Event(String, Box<Stmt>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Function {
    pub name: String,
    pub ret: Ty,
    pub inputs: Vec<String>,
    pub locals: Vec<(String, Ty)>,
    pub body: Stmt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub ty: Ty,
    pub default: Expr,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Module {
    pub name: String,
    pub ports: Vec<String>,
    pub includes: Vec<String>,
    pub parameters: Vec<Parameter>,
    pub variables: Vec<(String, Ty)>,
    pub nets: Vec<String>,
    pub functions: Vec<Function>,
    pub analog: Vec<Stmt>,
}

impl Module {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }
}

const KEYWORDS: [&str; 18] = [
    "module", "endmodule", "inout", "input", "output", "electrical", "parameter", "real",
    "integer", "analog", "function", "endfunction", "begin", "end", "if", "else", "for",
    "initial_step",
];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

fn binary_precedence(p: &str) -> Option<u8> {
    Some(match p {
        "||" => 1,
        "&&" => 2,
        "==" | "!=" => 3,
        "<" | "<=" | ">" | ">=" => 4,
        "+" | "-" => 5,
        "*" | "/" => 6,
        _ => return None,
    })
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, off: usize) -> Option<&Tok> {
        self.toks.get(self.pos + off).map(|t| &t.tok)
    }

    fn error(&self, msg: impl Into<String>) -> Error {
        let loc = match self.toks.get(self.pos).or(self.toks.last()) {
            Some(t) => format!("line {}:{}", t.line, t.col),
            None => "line 1:1".to_string(),
        };
        Error::parse(loc, msg)
    }

    fn next(&mut self) -> Result<Tok> {
        let t = self
            .toks
            .get(self.pos)
            .map(|t| t.tok.clone())
            .ok_or_else(|| self.error("unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Tok::Punct(q)) if *q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(w)) if w == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        let hit = self.is_punct(p);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        let hit = self.is_kw(kw);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn expect_punct(&mut self, p: &str) -> Result<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{p}', found {:?}", self.peek())))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{kw}', found {:?}", self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(w)) if !KEYWORDS.contains(&w.as_str()) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            other => Err(self.error(format!("expected identifier, found {other:?}"))),
        }
    }

    fn ident_list(&mut self) -> Result<Vec<String>> {
        let mut names = vec![self.ident()?];
        while self.eat_punct(",") {
            names.push(self.ident()?);
        }
        Ok(names)
    }

    fn ty(&mut self) -> Option<Ty> {
        if self.eat_kw("real") {
            Some(Ty::Real)
        } else if self.eat_kw("integer") {
            Some(Ty::Integer)
        } else {
            None
        }
    }

    fn module(&mut self) -> Result<Module> {
        let mut m = Module::default();
        while let Some(Tok::Directive(d)) = self.peek() {
            if d != "include" {
                return Err(self.error(format!("unsupported directive `{d}")));
            }
            self.pos += 1;
            match self.next()? {
                Tok::Str(s) => m.includes.push(s),
                _ => return Err(self.error("expected file name after `include")),
            }
        }
        self.expect_kw("module")?;
        m.name = self.ident()?;
        self.expect_punct("(")?;
        if !self.is_punct(")") {
            m.ports = self.ident_list()?;
        }
        self.expect_punct(")")?;
        self.expect_punct(";")?;
        loop {
            if self.eat_kw("endmodule") {
                break;
            }
            if self.eat_kw("inout") || self.eat_kw("input") || self.eat_kw("output") {
                for p in self.ident_list()? {
                    if !m.ports.contains(&p) {
                        return Err(self.error(format!("'{p}' is not a port")));
                    }
                }
                self.expect_punct(";")?;
            } else if self.eat_kw("electrical") {
                m.nets.extend(self.ident_list()?);
                self.expect_punct(";")?;
            } else if self.eat_kw("parameter") {
                let ty = self
                    .ty()
                    .ok_or_else(|| self.error("parameter needs a type (real or integer)"))?;
                let name = self.ident()?;
                self.expect_punct("=")?;
                let default = self.expr()?;
                self.expect_punct(";")?;
                m.parameters.push(Parameter { name, ty, default });
            } else if let Some(ty) = self.ty() {
                for n in self.ident_list()? {
                    m.variables.push((n, ty));
                }
                self.expect_punct(";")?;
            } else if self.eat_kw("analog") {
                if self.eat_kw("function") {
                    m.functions.push(self.function()?);
                } else {
                    m.analog.push(self.stmt()?);
                }
            } else {
                return Err(self.error(format!("unsupported module item {:?}", self.peek())));
            }
        }
        if self.pos != self.toks.len() {
            return Err(self.error("text after endmodule"));
        }
        Ok(m)
    }

    fn function(&mut self) -> Result<Function> {
        let ret = self.ty().unwrap_or(Ty::Real);
        let name = self.ident()?;
        self.expect_punct(";")?;
        let mut inputs = Vec::new();
        let mut locals = Vec::new();
        loop {
            if self.eat_kw("input") {
                inputs.extend(self.ident_list()?);
                self.expect_punct(";")?;
            } else if let Some(ty) = self.ty() {
                for n in self.ident_list()? {
                    locals.push((n, ty));
                }
                self.expect_punct(";")?;
            } else {
                break;
            }
        }
        let body = self.stmt()?;
        self.expect_kw("endfunction")?;
        for i in &inputs {
            if !locals.iter().any(|(n, _)| n == i) {
                return Err(self.error(format!("input '{i}' of {name} has no type declaration")));
            }
        }
        Ok(Function {
            name,
            ret,
            inputs,
            locals,
            body,
        })
    }

    fn stmt(&mut self) -> Result<Stmt> {
        if self.eat_kw("begin") {
            let mut body = Vec::new();
            while !self.eat_kw("end") {
                if self.peek().is_none() {
                    return Err(self.error("missing 'end'"));
                }
                body.push(self.stmt()?);
            }
            return Ok(Stmt::Block(body));
        }
        if self.eat_kw("if") {
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            let then = Box::new(self.stmt()?);
            let other = if self.eat_kw("else") {
                Some(Box::new(self.stmt()?))
            } else {
                None
            };
            return Ok(Stmt::If(cond, then, other));
        }
        if self.eat_kw("for") {
            self.expect_punct("(")?;
            let init = self.assignment()?;
            self.expect_punct(";")?;
            let cond = self.expr()?;
            self.expect_punct(";")?;
            let step = self.assignment()?;
            self.expect_punct(")")?;
            let body = Box::new(self.stmt()?);
            return Ok(Stmt::For {
                init,
                cond,
                step,
                body,
            });
        }
        if self.eat_punct("@") {
            self.expect_punct("(")?;
            self.expect_kw("initial_step")?;
            self.expect_punct(")")?;
            return Ok(Stmt::Event("initial_step".into(), Box::new(self.stmt()?)));
        }
        if matches!(self.peek(), Some(Tok::Ident(w)) if w == "V" || w == "I")
            && matches!(self.peek_at(1), Some(Tok::Punct("(")))
        {
            let access = self.ident()?;
            self.expect_punct("(")?;
            let nodes = self.ident_list()?;
            self.expect_punct(")")?;
            self.expect_punct("<+")?;
            let value = self.expr()?;
            self.expect_punct(";")?;
            return Ok(Stmt::Contribution {
                access,
                nodes,
                value,
            });
        }
        let (name, value) = self.assignment()?;
        self.expect_punct(";")?;
        Ok(Stmt::Assign(name, value))
    }

    fn assignment(&mut self) -> Result<(String, Expr)> {
        let name = self.ident()?;
        self.expect_punct("=")?;
        Ok((name, self.expr()?))
    }

    fn expr(&mut self) -> Result<Expr> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Punct(p)) => match binary_precedence(p) {
                    Some(prec) if prec >= min_prec => (*p, prec),
                    _ => break,
                },
                _ => break,
            };
            self.pos += 1;
            let rhs = self.binary(op.1 + 1)?;
            lhs = Expr::Binary(op.0, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_punct("-") {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat_punct("!") {
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn args(&mut self) -> Result<Vec<Expr>> {
        self.expect_punct("(")?;
        let mut args = Vec::new();
        if !self.eat_punct(")") {
            loop {
                args.push(self.expr()?);
                if self.eat_punct(")") {
                    break;
                }
                self.expect_punct(",")?;
            }
        }
        Ok(args)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(Expr::Int(v))
            }
            Some(Tok::Real(v)) => {
                self.pos += 1;
                Ok(Expr::Real(v))
            }
            Some(Tok::Punct("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Some(Tok::System(name)) => {
                self.pos += 1;
                Ok(Expr::System(name, self.args()?))
            }
            Some(Tok::Ident(_)) => {
                let name = self.ident()?;
                if self.is_punct("(") {
                    Ok(Expr::Call(name, self.args()?))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            other => Err(self.error(format!("expected expression, found {other:?}"))),
        }
    }
}

pub fn parse_module(src: &str) -> Result<Module> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    p.module()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
`include "disciplines.vams"
module m(a, b);
  inout a, b;
  electrical a, b;
  parameter real g = 1.5;
  real x;
  analog function real sq;
    input y;
    real y;
    begin
      sq = y * y;
    end
  endfunction
  analog begin
    @(initial_step) x = 0.0;
    x = sq(V(a, b)) + -g * 2;
    V(a, b) <+ x;
  end
endmodule
"#;

    #[test]
    fn parses_small_module() {
        let m = parse_module(SMALL).unwrap();
        assert_eq!(m.name, "m");
        assert_eq!(m.ports, vec!["a", "b"]);
        assert_eq!(m.parameters[0].default, Expr::Real(1.5));
        assert_eq!(m.function("sq").unwrap().inputs, vec!["y"]);
        assert_eq!(m.analog.len(), 1);
    }

    #[test]
    fn precedence_is_conventional() {
        let m = parse_module("module m(); real x; analog x = 1 + 2 * 3 - 4 / 2 < 5 && 1; endmodule").unwrap();
        let Stmt::Assign(_, e) = &m.analog[0] else { panic!() };
        let Expr::Binary(op, lhs, _) = e else { panic!() };
        assert_eq!(*op, "&&");
        let Expr::Binary(op, lhs, _) = lhs.as_ref() else { panic!() };
        assert_eq!(*op, "<");
        let Expr::Binary(op, ..) = lhs.as_ref() else { panic!() };
        assert_eq!(*op, "-");
    }

    #[test]
    fn constructs_outside_subset_rejected() {
        for bad in [
            "module m(); analog begin while (1) x = 1; end endmodule",
            "module m(); real x; analog begin case (x) endcase end endmodule",
            "module m(); analog x = ddt(1); extra endmodule",
            "`define X 1 module m(); endmodule",
            "module m(); analog begin x = 1; endmodule",
            "module m(); endmodule trailing",
        ] {
            assert!(matches!(parse_module(bad), Err(Error::Parse { .. })), "{bad}");
        }
    }
}
