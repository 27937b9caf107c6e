//! Small expression language for coefficient matrices in CLI config files.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?            // right-associative, binds above unary minus
//! atom  := NUMBER | 'pi' | 'e' | 't' | 'theta'
//!        | 'par' '.' IDENT | 'par' '[' INT ']'
//!        | FUNC '(' expr {',' expr} ')'
//!        | 'sol' '(' INT ',' expr ')'
//!        | '(' expr ')'
//! ```
//!
//! `^` is exponentiation. Functions: `sin`, `cos`, `tan`, `exp`, `log`
//! (natural), `sqrt`, `abs`, `min`, `max`. `par[i]` is 1-based positional
//! parameter access; `sol(i, e)` evaluates component `i` (1-based) of the
//! bound periodic solution at time `e`. Division by zero follows IEEE
//! semantics; the assembly rejects non-finite coefficient values.

use std::fmt;

use crate::model::Params;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn name(&self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "tan" => Some(Func::Tan),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            "abs" => Some(Func::Abs),
            "min" => Some(Func::Min),
            "max" => Some(Func::Max),
            _ => None,
        }
    }
}

/// Abstract syntax tree of a coefficient expression.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    EulerE,
    Time,
    Theta,
    Param(String),
    ParamIndex(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
    Sol(usize, Box<Expr>),
}

/// Evaluation context: the current time, optionally the kernel variable
/// `theta`, and the bound parameters/solution.
pub struct EvalCtx<'a> {
    pub t: f64,
    pub theta: Option<f64>,
    pub params: &'a Params,
}

impl Expr {
    pub fn eval(&self, ctx: &EvalCtx) -> Result<f64> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Pi => std::f64::consts::PI,
            Expr::EulerE => std::f64::consts::E,
            Expr::Time => ctx.t,
            Expr::Theta => ctx
                .theta
                .ok_or_else(|| Error::Eval("theta is not available in this coefficient".into()))?,
            Expr::Param(name) => ctx
                .params
                .get(name)
                .ok_or_else(|| Error::Eval(format!("unbound parameter `par.{name}`")))?,
            Expr::ParamIndex(i) => ctx
                .params
                .get_index(*i)
                .ok_or_else(|| Error::Eval(format!("parameter index {i} out of range")))?,
            Expr::Neg(e) => -e.eval(ctx)?,
            Expr::Bin(op, l, r) => {
                let (a, b) = (l.eval(ctx)?, r.eval(ctx)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(ctx)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Exp => a.exp(),
                    Func::Log => a.ln(),
                    Func::Sqrt => a.sqrt(),
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval(ctx)?),
                    Func::Max => a.max(args[1].eval(ctx)?),
                }
            }
            Expr::Sol(component, e) => {
                let time = e.eval(ctx)?;
                let sol = ctx.params.solution().ok_or_else(|| {
                    Error::Eval("sol(..) used but no solution fixture is bound".into())
                })?;
                sol.eval(*component, time)?
            }
        })
    }

    /// Checks that every reference is resolvable: parameters exist, `sol`
    /// has a bound fixture with the referenced component and `theta` is
    /// only used where permitted.
    pub fn bind_check(&self, params: &Params, allow_theta: bool) -> Result<()> {
        match self {
            Expr::Theta if !allow_theta => Err(Error::Config(
                "theta may only appear in distributed-delay kernels (C coefficients)".into(),
            )),
            Expr::Param(name) => params
                .get(name)
                .map(|_| ())
                .ok_or_else(|| Error::Config(format!("unknown parameter `par.{name}`"))),
            Expr::ParamIndex(i) => params
                .get_index(*i)
                .map(|_| ())
                .ok_or_else(|| Error::Config(format!("parameter index {i} out of range"))),
            Expr::Neg(e) => e.bind_check(params, allow_theta),
            Expr::Bin(_, l, r) => {
                l.bind_check(params, allow_theta)?;
                r.bind_check(params, allow_theta)
            }
            Expr::Call(_, args) => {
                for a in args {
                    a.bind_check(params, allow_theta)?;
                }
                Ok(())
            }
            Expr::Sol(component, e) => {
                let sol = params.solution().ok_or_else(|| {
                    Error::Config("sol(..) used but no solution fixture is bound".into())
                })?;
                if *component == 0 || *component > sol.components() {
                    return Err(Error::Config(format!(
                        "sol component {component} out of range 1..={}",
                        sol.components()
                    )));
                }
                e.bind_check(params, allow_theta)
            }
            _ => Ok(()),
        }
    }

    pub fn uses_theta(&self) -> bool {
        match self {
            Expr::Theta => true,
            Expr::Neg(e) | Expr::Sol(_, e) => e.uses_theta(),
            Expr::Bin(_, l, r) => l.uses_theta() || r.uses_theta(),
            Expr::Call(_, args) => args.iter().any(Expr::uses_theta),
            _ => false,
        }
    }
}

impl fmt::Display for Expr {
    /// Canonical fully parenthesized form; re-parsing it reproduces the AST.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Pi => write!(f, "pi"),
            Expr::EulerE => write!(f, "e"),
            Expr::Time => write!(f, "t"),
            Expr::Theta => write!(f, "theta"),
            Expr::Param(name) => write!(f, "par.{name}"),
            Expr::ParamIndex(i) => write!(f, "par[{i}]"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Expr::Sol(component, e) => write!(f, "sol({component}, {e})"),
        }
    }
}

/// Parses an expression source string.
pub fn parse(source: &str) -> Result<Expr> {
    let mut p = Parser {
        src: source.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Syntax {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Bin(BinOp::Add, Box::new(lhs), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Bin(BinOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::Bin(BinOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exponent = self.unary()?;
            Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(c) => Err(self.error(&format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_digit() || *c == b'.')
        {
            self.pos += 1;
        }
        if self.src.get(self.pos).is_some_and(|c| *c == b'e' || *c == b'E') {
            let mark = self.pos;
            self.pos += 1;
            if self.src.get(self.pos).is_some_and(|c| *c == b'+' || *c == b'-') {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
                while self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
                    self.pos += 1;
                }
            } else {
                // not an exponent after all (e.g. "2*e")
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| Error::Syntax {
                position: start,
                message: format!("invalid number literal `{text}`"),
            })
    }

    fn identifier(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match name {
            "pi" => Ok(Expr::Pi),
            "e" => Ok(Expr::EulerE),
            "t" => Ok(Expr::Time),
            "theta" => Ok(Expr::Theta),
            "par" => {
                if self.eat(b'.') {
                    self.skip_ws();
                    let ps = self.pos;
                    while self
                        .src
                        .get(self.pos)
                        .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
                    {
                        self.pos += 1;
                    }
                    if self.pos == ps {
                        return Err(self.error("expected parameter name after `par.`"));
                    }
                    let pname = std::str::from_utf8(&self.src[ps..self.pos]).unwrap();
                    Ok(Expr::Param(pname.to_string()))
                } else if self.eat(b'[') {
                    let idx = self.integer()?;
                    self.expect(b']')?;
                    Ok(Expr::ParamIndex(idx))
                } else {
                    Err(self.error("expected `.` or `[` after `par`"))
                }
            }
            "sol" => {
                self.expect(b'(')?;
                let component = self.integer()?;
                self.expect(b',')?;
                let time = self.expr()?;
                self.expect(b')')?;
                Ok(Expr::Sol(component, Box::new(time)))
            }
            _ => match Func::from_name(name) {
                Some(func) => {
                    self.expect(b'(')?;
                    let mut args = vec![self.expr()?];
                    while self.eat(b',') {
                        args.push(self.expr()?);
                    }
                    self.expect(b')')?;
                    if args.len() != func.arity() {
                        return Err(Error::Syntax {
                            position: start,
                            message: format!(
                                "{} takes {} argument(s), got {}",
                                func.name(),
                                func.arity(),
                                args.len()
                            ),
                        });
                    }
                    Ok(Expr::Call(func, args))
                }
                None => Err(Error::Syntax {
                    position: start,
                    message: format!("unknown identifier or function `{name}`"),
                }),
            },
        }
    }

    fn integer(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.error("expected an integer"));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::Syntax {
                position: start,
                message: "integer out of range".into(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::NodeFamily;
    use crate::model::PeriodicSolutionPW;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn eval_str(src: &str, t: f64, theta: Option<f64>, params: &Params) -> Result<f64> {
        parse(src)?.eval(&EvalCtx { t, theta, params })
    }

    #[test]
    fn precedence() {
        let p = Params::new();
        assert_eq!(eval_str("2+3*4", 0.0, None, &p).unwrap(), 14.0);
        assert_eq!(eval_str("2*3^2", 0.0, None, &p).unwrap(), 18.0);
        assert_eq!(eval_str("2^3^2", 0.0, None, &p).unwrap(), 512.0);
        assert_eq!(eval_str("2^-1", 0.0, None, &p).unwrap(), 0.5);
        assert_eq!(eval_str("-theta^2", 0.0, Some(2.0), &p).unwrap(), -4.0);
        assert_eq!(eval_str("10-4-3", 0.0, None, &p).unwrap(), 3.0);
        assert_eq!(eval_str("16/4/2", 0.0, None, &p).unwrap(), 2.0);
    }

    #[test]
    fn syntax_error_position() {
        match parse("sin(") {
            Err(Error::Syntax { position, .. }) => assert_eq!(position, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
        assert!(parse("2 +").is_err());
        assert!(parse("fnord(1)").is_err());
        assert!(parse("min(1)").is_err());
        assert!(parse("1 2").is_err());
    }

    #[test]
    fn quadratic_re_kernel_expression() {
        let sol = PeriodicSolutionPW::from_samples(
            1,
            4.0,
            vec![0.0, 2.0, 4.0],
            12,
            NodeFamily::ChebExtrema,
            |_, t| crate::model::quadratic_re_solution(t, 4.0),
        )
        .unwrap();
        let params = Params::new().with("gamma", 4.0).with_solution(Arc::new(sol));
        let expr = parse("par.gamma/2*(1-2*sol(1,t+theta))").unwrap();
        expr.bind_check(&params, true).unwrap();
        let got = expr
            .eval(&EvalCtx { t: 0.0, theta: Some(-2.0), params: &params })
            .unwrap();
        assert_relative_eq!(got, -std::f64::consts::PI / 4.0, epsilon = 1e-9);
    }

    #[test]
    fn trig_and_exp() {
        let p = Params::new().with("gamma", 12.0).with("tau_s", 10.0);
        assert_relative_eq!(
            eval_str("sin(pi/2*t)", 1.0, None, &p).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let v = eval_str("exp(-par.gamma*par.tau_s)", 0.0, None, &p).unwrap();
        assert_relative_eq!(v, (-120.0f64).exp(), max_relative = 1e-14);
        assert!((v - 7.667e-53).abs() < 1e-55);
    }

    #[test]
    fn division_by_zero_is_ieee() {
        let p = Params::new();
        assert!(eval_str("1/0", 0.0, None, &p).unwrap().is_infinite());
        assert!(eval_str("0/0", 0.0, None, &p).unwrap().is_nan());
    }

    #[test]
    fn eval_errors() {
        let p = Params::new();
        assert!(matches!(
            eval_str("par.gamma", 0.0, None, &p),
            Err(Error::Eval(_))
        ));
        assert!(matches!(
            eval_str("sol(1, t)", 0.0, None, &p),
            Err(Error::Eval(_))
        ));
        assert!(matches!(
            eval_str("theta", 0.0, None, &p),
            Err(Error::Eval(_))
        ));
    }

    #[test]
    fn bind_check_rejects_theta_outside_kernels() {
        let p = Params::new();
        let e = parse("theta + 1").unwrap();
        assert!(e.bind_check(&p, false).is_err());
        assert!(e.bind_check(&p, true).is_ok());
    }

    fn random_expr(rng: &mut ChaCha8Rng, depth: usize, with_sol: bool) -> Expr {
        let leaf = depth == 0 || rng.random_bool(0.3);
        if leaf {
            match rng.random_range(0..7) {
                0 => Expr::Num((rng.random_range(0..50) as f64) / 8.0),
                1 => Expr::Pi,
                2 => Expr::EulerE,
                3 => Expr::Time,
                4 => Expr::Theta,
                5 => Expr::Param("alpha".into()),
                _ => Expr::ParamIndex(rng.random_range(1..=2)),
            }
        } else {
            match rng.random_range(0..10) {
                0..=4 => {
                    let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow]
                        [rng.random_range(0..5)];
                    Expr::Bin(
                        op,
                        Box::new(random_expr(rng, depth - 1, with_sol)),
                        Box::new(random_expr(rng, depth - 1, with_sol)),
                    )
                }
                5 => Expr::Neg(Box::new(random_expr(rng, depth - 1, with_sol))),
                6..=8 => {
                    let f = [
                        Func::Sin,
                        Func::Cos,
                        Func::Tan,
                        Func::Exp,
                        Func::Log,
                        Func::Sqrt,
                        Func::Abs,
                        Func::Min,
                        Func::Max,
                    ][rng.random_range(0..9)];
                    let args = (0..f.arity())
                        .map(|_| random_expr(rng, depth - 1, with_sol))
                        .collect();
                    Expr::Call(f, args)
                }
                _ if with_sol => {
                    Expr::Sol(1, Box::new(random_expr(rng, depth - 1, false)))
                }
                _ => Expr::Neg(Box::new(random_expr(rng, depth - 1, with_sol))),
            }
        }
    }

    #[test]
    fn parse_print_parse_fixpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..500 {
            let e = random_expr(&mut rng, 4, true);
            let printed = e.to_string();
            let reparsed = parse(&printed)
                .unwrap_or_else(|err| panic!("failed to re-parse `{printed}`: {err}"));
            assert_eq!(e, reparsed, "printed form `{printed}`");
        }
    }

    // ----- reference shunting-yard evaluator, independent of the
    // recursive-descent path -----

    #[derive(Clone, Debug, PartialEq)]
    enum Tok {
        Num(f64),
        Op(char),
        UnaryMinus,
        LParen,
        RParen,
        Comma,
        Word(String),
    }

    fn tokenize(src: &str) -> Vec<Tok> {
        let b = src.as_bytes();
        let mut out = Vec::new();
        let mut i = 0;
        let mut prev_operand = false;
        while i < b.len() {
            let c = b[i];
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == b'.' {
                let s = i;
                while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                    i += 1;
                }
                out.push(Tok::Num(src[s..i].parse().unwrap()));
                prev_operand = true;
            } else if c.is_ascii_alphabetic() || c == b'_' {
                let s = i;
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_' || b[i] == b'.'
                    || b[i] == b'[' || b[i] == b']')
                {
                    i += 1;
                }
                out.push(Tok::Word(src[s..i].to_string()));
                prev_operand = true;
            } else {
                match c {
                    b'(' => {
                        out.push(Tok::LParen);
                        prev_operand = false;
                    }
                    b')' => {
                        out.push(Tok::RParen);
                        prev_operand = true;
                    }
                    b',' => {
                        out.push(Tok::Comma);
                        prev_operand = false;
                    }
                    b'-' if !prev_operand => {
                        out.push(Tok::UnaryMinus);
                    }
                    op => {
                        out.push(Tok::Op(op as char));
                        prev_operand = false;
                    }
                }
                i += 1;
            }
        }
        out
    }

    fn prec(t: &Tok) -> u8 {
        match t {
            Tok::Op('+') | Tok::Op('-') => 1,
            Tok::Op('*') | Tok::Op('/') => 2,
            Tok::UnaryMinus => 3,
            Tok::Op('^') => 4,
            _ => 0,
        }
    }

    fn right_assoc(t: &Tok) -> bool {
        matches!(t, Tok::Op('^') | Tok::UnaryMinus)
    }

    fn shunting_yard_eval(src: &str, ctx: &EvalCtx) -> f64 {
        let tokens = tokenize(src);
        let mut output: Vec<Tok> = Vec::new();
        let mut ops: Vec<Tok> = Vec::new();
        for tok in tokens {
            match &tok {
                Tok::Num(_) => output.push(tok),
                Tok::Word(w) => {
                    if Func::from_name(w).is_some() || w == "sol" {
                        ops.push(tok);
                    } else {
                        output.push(tok);
                    }
                }
                Tok::Comma => {
                    while let Some(top) = ops.last() {
                        if matches!(top, Tok::LParen) {
                            break;
                        }
                        output.push(ops.pop().unwrap());
                    }
                }
                Tok::LParen => ops.push(tok),
                Tok::RParen => {
                    while let Some(top) = ops.pop() {
                        if matches!(top, Tok::LParen) {
                            break;
                        }
                        output.push(top);
                    }
                    if let Some(Tok::Word(_)) = ops.last() {
                        output.push(ops.pop().unwrap());
                    }
                }
                Tok::Op(_) | Tok::UnaryMinus => {
                    while let Some(top) = ops.last() {
                        let keep = prec(top) > prec(&tok)
                            || (prec(top) == prec(&tok) && !right_assoc(&tok));
                        if keep && !matches!(top, Tok::LParen) {
                            output.push(ops.pop().unwrap());
                        } else {
                            break;
                        }
                    }
                    ops.push(tok);
                }
            }
        }
        while let Some(op) = ops.pop() {
            output.push(op);
        }

        let mut stack: Vec<f64> = Vec::new();
        for tok in output {
            match tok {
                Tok::Num(v) => stack.push(v),
                Tok::UnaryMinus => {
                    let a = stack.pop().unwrap();
                    stack.push(-a);
                }
                Tok::Op(op) => {
                    let b = stack.pop().unwrap();
                    let a = stack.pop().unwrap();
                    stack.push(match op {
                        '+' => a + b,
                        '-' => a - b,
                        '*' => a * b,
                        '/' => a / b,
                        '^' => a.powf(b),
                        _ => unreachable!(),
                    });
                }
                Tok::Word(w) => match w.as_str() {
                    "pi" => stack.push(std::f64::consts::PI),
                    "e" => stack.push(std::f64::consts::E),
                    "t" => stack.push(ctx.t),
                    "theta" => stack.push(ctx.theta.unwrap()),
                    "sol" => {
                        let time = stack.pop().unwrap();
                        let comp = stack.pop().unwrap() as usize;
                        stack.push(ctx.params.solution().unwrap().eval(comp, time).unwrap());
                    }
                    name if name.starts_with("par.") => {
                        stack.push(ctx.params.get(&name[4..]).unwrap())
                    }
                    name if name.starts_with("par[") => {
                        let idx: usize = name[4..name.len() - 1].parse().unwrap();
                        stack.push(ctx.params.get_index(idx).unwrap());
                    }
                    name => {
                        let f = Func::from_name(name).unwrap();
                        let mut args = Vec::new();
                        for _ in 0..f.arity() {
                            args.push(stack.pop().unwrap());
                        }
                        args.reverse();
                        stack.push(match f {
                            Func::Sin => args[0].sin(),
                            Func::Cos => args[0].cos(),
                            Func::Tan => args[0].tan(),
                            Func::Exp => args[0].exp(),
                            Func::Log => args[0].ln(),
                            Func::Sqrt => args[0].sqrt(),
                            Func::Abs => args[0].abs(),
                            Func::Min => args[0].min(args[1]),
                            Func::Max => args[0].max(args[1]),
                        });
                    }
                },
                _ => unreachable!(),
            }
        }
        assert_eq!(stack.len(), 1);
        stack[0]
    }

    #[test]
    fn agrees_with_shunting_yard_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let sol = PeriodicSolutionPW::from_samples(
            1,
            2.0,
            vec![0.0, 1.0, 2.0],
            6,
            NodeFamily::ChebExtrema,
            |_, t| (std::f64::consts::PI * t).sin() + 0.2,
        )
        .unwrap();
        let params = Params::new()
            .with("alpha", 1.7)
            .with("beta", -0.4)
            .with_solution(Arc::new(sol));
        let mut checked = 0;
        let mut attempts = 0;
        while checked < 1000 && attempts < 20000 {
            attempts += 1;
            let e = random_expr(&mut rng, 4, true);
            let src = e.to_string();
            let ctx = EvalCtx {
                t: rng.random_range(-2.0..2.0),
                theta: Some(rng.random_range(-1.0..0.0)),
                params: &params,
            };
            let mine = match e.eval(&ctx) {
                Ok(v) if v.is_finite() => v,
                _ => continue,
            };
            let reference = shunting_yard_eval(&src, &ctx);
            if !reference.is_finite() {
                continue;
            }
            assert!(
                (mine - reference).abs() <= 1e-14 * reference.abs().max(1.0),
                "`{src}`: {mine} vs {reference}"
            );
            checked += 1;
        }
        assert!(checked >= 1000, "only {checked} comparable expressions");
    }
}
