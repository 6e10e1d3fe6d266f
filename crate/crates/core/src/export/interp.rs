//! Executes analog functions of a parsed module. Only what the emitter
//! produces is supported; anything else is an error.

use std::collections::HashMap;

use super::parser::{Expr, Function, Module, Stmt, Ty};
use crate::error::{Error, Result};

/// Upper bound on executed loop iterations per call.
const LOOP_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
}

impl Value {
    pub fn as_real(self) -> f64 {
        match self {
            Value::Int(i) => i as f64,
            Value::Real(r) => r,
        }
    }

    fn truthy(self) -> bool {
        self.as_real() != 0.0
    }

    fn coerce(self, ty: Ty) -> Value {
        match ty {
            Ty::Real => Value::Real(self.as_real()),
            Ty::Integer => match self {
                Value::Int(i) => Value::Int(i),
                Value::Real(r) => Value::Int(r.round() as i64),
            },
        }
    }
}

fn runtime(msg: impl Into<String>) -> Error {
    Error::validation(format!("interpreter: {}", msg.into()))
}

pub struct Interpreter<'m> {
    module: &'m Module,
    depth: usize,
}

struct Frame {
    vars: HashMap<String, (Ty, Value)>,
    budget: usize,
}

impl<'m> Interpreter<'m> {
    pub fn new(module: &'m Module) -> Self {
        Self { module, depth: 0 }
    }

    /// Calls analog function `name` with real arguments.
    pub fn call(&mut self, name: &str, args: &[f64]) -> Result<f64> {
        let args: Vec<Value> = args.iter().map(|&a| Value::Real(a)).collect();
        Ok(self.call_values(name, &args)?.as_real())
    }

    fn call_values(&mut self, name: &str, args: &[Value]) -> Result<Value> {
        let f: &Function = self
            .module
            .function(name)
            .ok_or_else(|| runtime(format!("unknown function '{name}'")))?;
        if args.len() != f.inputs.len() {
            return Err(runtime(format!(
                "{name} takes {} arguments, got {}",
                f.inputs.len(),
                args.len()
            )));
        }
        if self.depth > 16 {
            return Err(runtime("call depth exceeded (recursion is not supported)"));
        }
        let mut frame = Frame {
            vars: HashMap::new(),
            budget: LOOP_BUDGET,
        };
        for (n, ty) in &f.locals {
            let zero = match ty {
                Ty::Real => Value::Real(0.0),
                Ty::Integer => Value::Int(0),
            };
            frame.vars.insert(n.clone(), (*ty, zero));
        }
        frame.vars.insert(f.name.clone(), (f.ret, Value::Real(0.0).coerce(f.ret)));
        for (n, v) in f.inputs.iter().zip(args) {
            let ty = frame.vars[n].0;
            frame.vars.insert(n.clone(), (ty, v.coerce(ty)));
        }
        self.depth += 1;
        let res = self.exec(&f.body, &mut frame);
        self.depth -= 1;
        res?;
        Ok(frame.vars[&f.name].1)
    }

    fn assign(&self, frame: &mut Frame, name: &str, v: Value) -> Result<()> {
        let slot = frame
            .vars
            .get_mut(name)
            .ok_or_else(|| runtime(format!("assignment to undeclared '{name}'")))?;
        slot.1 = v.coerce(slot.0);
        Ok(())
    }

    fn exec(&mut self, s: &Stmt, frame: &mut Frame) -> Result<()> {
        match s {
            Stmt::Block(body) => {
                for st in body {
                    self.exec(st, frame)?;
                }
            }
            Stmt::Assign(name, e) => {
                let v = self.eval(e, frame)?;
                self.assign(frame, name, v)?;
            }
            Stmt::If(c, t, e) => {
                if self.eval(c, frame)?.truthy() {
                    self.exec(t, frame)?;
                } else if let Some(e) = e {
                    self.exec(e, frame)?;
                }
            }
            Stmt::For {
                init,
                cond,
                step,
                body,
            } => {
                let v = self.eval(&init.1, frame)?;
                self.assign(frame, &init.0, v)?;
                while self.eval(cond, frame)?.truthy() {
                    if frame.budget == 0 {
                        return Err(runtime("loop budget exhausted"));
                    }
                    frame.budget -= 1;
                    self.exec(body, frame)?;
                    let v = self.eval(&step.1, frame)?;
                    self.assign(frame, &step.0, v)?;
                }
            }
            Stmt::Contribution { .. } | Stmt::Event(..) => {
                return Err(runtime("contributions and events are not allowed in functions"));
            }
        }
        Ok(())
    }

    fn eval(&mut self, e: &Expr, frame: &mut Frame) -> Result<Value> {
        Ok(match e {
            Expr::Int(i) => Value::Int(*i),
            Expr::Real(r) => Value::Real(*r),
            Expr::Var(n) => {
                frame
                    .vars
                    .get(n)
                    .ok_or_else(|| runtime(format!("undeclared variable '{n}'")))?
                    .1
            }
            Expr::Neg(a) => match self.eval(a, frame)? {
                Value::Int(i) => Value::Int(-i),
                Value::Real(r) => Value::Real(-r),
            },
            Expr::Not(a) => Value::Int(i64::from(!self.eval(a, frame)?.truthy())),
            Expr::Binary(op, a, b) => {
                let (x, y) = (self.eval(a, frame)?, self.eval(b, frame)?);
                binary(op, x, y)?
            }
            Expr::Call(name, args) => {
                let vals = args
                    .iter()
                    .map(|a| self.eval(a, frame))
                    .collect::<Result<Vec<_>>>()?;
                match builtin(name, &vals)? {
                    Some(v) => v,
                    None => self.call_values(name, &vals)?,
                }
            }
            Expr::System(name, _) => {
                return Err(runtime(format!("${name} is not available in functions")));
            }
        })
    }
}

fn binary(op: &str, x: Value, y: Value) -> Result<Value> {
    if let (Value::Int(a), Value::Int(b)) = (x, y) {
        return Ok(Value::Int(match op {
            "+" => a.wrapping_add(b),
            "-" => a.wrapping_sub(b),
            "*" => a.wrapping_mul(b),
            "/" => {
                if b == 0 {
                    return Err(runtime("integer division by zero"));
                }
                a / b
            }
            _ => i64::from(compare(op, a as f64, b as f64)?),
        }));
    }
    let (a, b) = (x.as_real(), y.as_real());
    Ok(match op {
        "+" => Value::Real(a + b),
        "-" => Value::Real(a - b),
        "*" => Value::Real(a * b),
        "/" => Value::Real(a / b),
        _ => Value::Int(i64::from(compare(op, a, b)?)),
    })
}

fn compare(op: &str, a: f64, b: f64) -> Result<bool> {
    Ok(match op {
        "<" => a < b,
        "<=" => a <= b,
        ">" => a > b,
        ">=" => a >= b,
        "==" => a == b,
        "!=" => a != b,
        "&&" => a != 0.0 && b != 0.0,
        "||" => a != 0.0 || b != 0.0,
        _ => return Err(runtime(format!("unsupported operator {op}"))),
    })
}

fn builtin(name: &str, args: &[Value]) -> Result<Option<Value>> {
    let arity = |n: usize| -> Result<()> {
        if args.len() == n {
            Ok(())
        } else {
            Err(runtime(format!("{name} takes {n} arguments")))
        }
    };
    let r = |i: usize| args[i].as_real();
    let v = match name {
        "exp" => {
            arity(1)?;
            r(0).exp()
        }
        "ln" => {
            arity(1)?;
            r(0).ln()
        }
        "floor" => {
            arity(1)?;
            r(0).floor()
        }
        "sqrt" => {
            arity(1)?;
            r(0).sqrt()
        }
        "abs" => {
            arity(1)?;
            r(0).abs()
        }
        "min" => {
            arity(2)?;
            r(0).min(r(1))
        }
        "max" => {
            arity(2)?;
            r(0).max(r(1))
        }
        "V" | "I" => return Err(runtime(format!("{name}() is not available in functions"))),
        _ => return Ok(None),
    };
    Ok(Some(Value::Real(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::export::parser::parse_module;

    fn module(body: &str) -> Module {
        parse_module(&format!("module m(); {body} endmodule")).unwrap()
    }

    #[test]
    fn loops_branches_and_integer_arithmetic() {
        let m = module(
            "analog function real f; input x; real x; real acc; integer i; begin
               acc = 0.0;
               for (i = 0; i < 10; i = i + 1) begin
                 if (i / 3 == 1) acc = acc + x; else acc = acc - 1;
               end
               f = acc;
             end endfunction",
        );
        // i/3 == 1 for i in 3..6
        assert_eq!(Interpreter::new(&m).call("f", &[2.5]).unwrap(), 3.0 * 2.5 - 7.0);
    }

    #[test]
    fn nested_calls_and_builtins() {
        let m = module(
            "analog function real sq; input y; real y; sq = y * y; endfunction
             analog function real g; input a, b; real a, b; g = sqrt(sq(a) + sq(b)) + min(a, -b) + exp(0.0); endfunction",
        );
        let v = Interpreter::new(&m).call("g", &[3.0, 4.0]).unwrap();
        assert_eq!(v, 5.0 - 4.0 + 1.0);
    }

    #[test]
    fn unsupported_runtime_constructs_rejected() {
        let m = module("analog function real f; input x; real x; f = ddt(x); endfunction");
        assert!(Interpreter::new(&m).call("f", &[1.0]).is_err());
        let m = module("analog function real f; input x; real x; f = $rdist_uniform(x, 0, 1); endfunction");
        assert!(Interpreter::new(&m).call("f", &[1.0]).is_err());
        let m = module("analog function real f; input x; real x; f = f(x); endfunction");
        assert!(Interpreter::new(&m).call("f", &[1.0]).is_err());
        let m = module("analog function real f; input x; real x; y = 1; endfunction");
        assert!(Interpreter::new(&m).call("f", &[1.0]).is_err());
        let m = module("analog function real f; input x; real x; integer i; for (i = 0; i >= 0; i = i + 1) f = x; endfunction");
        assert!(Interpreter::new(&m).call("f", &[1.0]).is_err());
    }
}
