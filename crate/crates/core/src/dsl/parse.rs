//! Recursive-descent parser for the model grammar, followed by identifier
//! resolution against the declared states, inputs, and parameters.

use super::lex::{lex, Pos, Tok};
use super::{BinOp, DslError, Expr, Func, InputDecl, JumpKind, ModelAst, Subsystem};
use std::collections::HashMap;

const KEYWORDS: &[&str] = &[
    "model", "theta", "param", "input", "sub", "flow", "jump", "point", "hist",
];

/// Expression with unresolved identifiers.
#[derive(Debug, Clone)]
enum Raw {
    Const(f64),
    Ref {
        name: String,
        delay: Option<f64>,
        pos: Pos,
    },
    Call {
        name: String,
        args: Vec<Raw>,
        pos: Pos,
    },
    Neg(Box<Raw>),
    Bin(BinOp, Box<Raw>, Box<Raw>),
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    idx: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.idx].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.idx].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.idx].0.clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, DslError> {
        let p = self.pos();
        Err(DslError::Syntax {
            line: p.line,
            col: p.col,
            msg: msg.into(),
        })
    }

    fn expect(&mut self, t: Tok) -> Result<(), DslError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.err(format!(
                "expected {}, found {}",
                t.describe(),
                self.peek().describe()
            ))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), DslError> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.bump();
                Ok(())
            }
            other => {
                let found = other.describe();
                self.err(format!("expected '{kw}', found {found}"))
            }
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), DslError> {
        let p = self.pos();
        match self.bump() {
            Tok::Ident(s) => Ok((s, p)),
            other => {
                self.idx -= 1;
                self.err(format!("expected identifier, found {}", other.describe()))
            }
        }
    }

    fn declared_ident(&mut self) -> Result<(String, Pos), DslError> {
        let (s, p) = self.ident()?;
        if KEYWORDS.contains(&s.as_str()) || Func::from_name(&s).is_some() {
            return Err(DslError::Syntax {
                line: p.line,
                col: p.col,
                msg: format!("'{s}' is reserved and cannot be declared"),
            });
        }
        Ok((s, p))
    }

    fn number(&mut self) -> Result<f64, DslError> {
        // optional leading minus for literal declarations
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match self.bump() {
            Tok::Number(n) => Ok(if neg { -n } else { n }),
            other => {
                self.idx -= 1;
                self.err(format!("expected number, found {}", other.describe()))
            }
        }
    }

    fn integer(&mut self) -> Result<usize, DslError> {
        let p = self.pos();
        let n = self.number()?;
        if n.fract() != 0.0 || n < 1.0 {
            return Err(DslError::Syntax {
                line: p.line,
                col: p.col,
                msg: format!("expected positive integer, found {n}"),
            });
        }
        Ok(n as usize)
    }

    // expr = term (("+"|"-") term)*
    fn expr(&mut self) -> Result<Raw, DslError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    acc = Raw::Bin(BinOp::Add, Box::new(acc), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    acc = Raw::Bin(BinOp::Sub, Box::new(acc), Box::new(self.term()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    // term = factor (("*"|"/") factor)*
    fn term(&mut self) -> Result<Raw, DslError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    acc = Raw::Bin(BinOp::Mul, Box::new(acc), Box::new(self.factor()?));
                }
                Tok::Slash => {
                    self.bump();
                    acc = Raw::Bin(BinOp::Div, Box::new(acc), Box::new(self.factor()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    // factor = ("-")? power
    fn factor(&mut self) -> Result<Raw, DslError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            Ok(Raw::Neg(Box::new(self.power()?)))
        } else {
            self.power()
        }
    }

    // power = atom ("^" factor)?
    fn power(&mut self) -> Result<Raw, DslError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let e = self.factor()?;
            Ok(Raw::Bin(BinOp::Pow, Box::new(base), Box::new(e)))
        } else {
            Ok(base)
        }
    }

    // atom = NUMBER | ref | ident "(" expr ("," expr)* ")" | "(" expr ")"
    fn atom(&mut self) -> Result<Raw, DslError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Number(n) => {
                self.bump();
                Ok(Raw::Const(n))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen)?;
                    Ok(Raw::Call { name, args, pos })
                } else if *self.peek() == Tok::At {
                    self.bump();
                    let p2 = self.pos();
                    match self.bump() {
                        Tok::Number(d) => Ok(Raw::Ref {
                            name,
                            delay: Some(d),
                            pos,
                        }),
                        other => Err(DslError::Syntax {
                            line: p2.line,
                            col: p2.col,
                            msg: format!(
                                "expected nonnegative delay after '@', found {}",
                                other.describe()
                            ),
                        }),
                    }
                } else {
                    Ok(Raw::Ref {
                        name,
                        delay: None,
                        pos,
                    })
                }
            }
            other => self.err(format!("expected expression, found {}", other.describe())),
        }
    }
}

struct RawSub {
    name: String,
    dim: usize,
    flows: Vec<(String, Pos, Raw)>,
    jumps: Vec<(String, Pos, JumpKind, Raw)>,
}

struct RawModel {
    name: String,
    theta: f64,
    params: Vec<(String, f64)>,
    inputs: Vec<InputDecl>,
    subs: Vec<RawSub>,
}

fn parse_raw(text: &str) -> Result<RawModel, DslError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, idx: 0 };
    p.expect_keyword("model")?;
    let (name, _) = p.declared_ident()?;
    p.expect(Tok::LBrace)?;

    let mut theta = 0.0;
    if matches!(p.peek(), Tok::Ident(s) if s == "theta") {
        p.bump();
        theta = p.number()?;
        p.expect(Tok::Semi)?;
    }
    let mut params = Vec::new();
    while matches!(p.peek(), Tok::Ident(s) if s == "param") {
        p.bump();
        let (pname, _) = p.declared_ident()?;
        p.expect(Tok::Eq)?;
        let v = p.number()?;
        p.expect(Tok::Semi)?;
        params.push((pname, v));
    }
    let mut inputs = Vec::new();
    while matches!(p.peek(), Tok::Ident(s) if s == "input") {
        p.bump();
        let (iname, _) = p.declared_ident()?;
        p.expect(Tok::LBracket)?;
        let dim = p.integer()?;
        p.expect(Tok::RBracket)?;
        p.expect(Tok::Semi)?;
        inputs.push(InputDecl { name: iname, dim });
    }

    let mut subs = Vec::new();
    while matches!(p.peek(), Tok::Ident(s) if s == "sub") {
        p.bump();
        let (sname, _) = p.declared_ident()?;
        p.expect(Tok::LBracket)?;
        let dim = p.integer()?;
        p.expect(Tok::RBracket)?;
        p.expect(Tok::LBrace)?;
        let mut flows = Vec::new();
        let mut jumps = Vec::new();
        loop {
            match p.peek().clone() {
                Tok::Ident(s) if s == "flow" => {
                    p.bump();
                    let (cname, cpos) = p.declared_ident()?;
                    p.expect(Tok::Prime)?;
                    p.expect(Tok::Eq)?;
                    let e = p.expr()?;
                    p.expect(Tok::Semi)?;
                    flows.push((cname, cpos, e));
                }
                Tok::Ident(s) if s == "jump" => {
                    p.bump();
                    let kind = match p.peek() {
                        Tok::Ident(k) if k == "point" => {
                            p.bump();
                            JumpKind::Pointwise
                        }
                        Tok::Ident(k) if k == "hist" => {
                            p.bump();
                            JumpKind::History
                        }
                        other => {
                            let found = other.describe();
                            return p.err(format!(
                                "expected 'point' or 'hist', found {found}"
                            ));
                        }
                    };
                    let (cname, cpos) = p.declared_ident()?;
                    p.expect(Tok::Eq)?;
                    let e = p.expr()?;
                    p.expect(Tok::Semi)?;
                    jumps.push((cname, cpos, kind, e));
                }
                Tok::RBrace => {
                    p.bump();
                    break;
                }
                other => {
                    let found = other.describe();
                    return p.err(format!("expected 'flow', 'jump' or '}}', found {found}"));
                }
            }
        }
        if flows.is_empty() {
            return p.err(format!("subsystem '{sname}' needs at least one flow equation"));
        }
        subs.push(RawSub {
            name: sname,
            dim,
            flows,
            jumps,
        });
    }
    p.expect(Tok::RBrace)?;
    if *p.peek() != Tok::Eof {
        let found = p.peek().describe();
        return p.err(format!("trailing content after model: {found}"));
    }
    Ok(RawModel {
        name,
        theta,
        params,
        inputs,
        subs,
    })
}

enum Symbol {
    State { sub: usize, comp: usize },
    Input { input: usize, comp: usize },
    Param(usize),
}

struct Resolver {
    symbols: HashMap<String, Symbol>,
}

impl Resolver {
    fn build(raw: &RawModel) -> Result<Self, DslError> {
        let mut symbols: HashMap<String, Symbol> = HashMap::new();
        let mut define = |name: String, sym: Symbol, pos: Pos| -> Result<(), DslError> {
            if symbols.insert(name.clone(), sym).is_some() {
                return Err(DslError::Resolve {
                    line: pos.line,
                    col: pos.col,
                    msg: format!("duplicate identifier '{name}'"),
                });
            }
            Ok(())
        };
        for (si, s) in raw.subs.iter().enumerate() {
            for (ci, (cname, cpos, _)) in s.flows.iter().enumerate() {
                define(cname.clone(), Symbol::State { sub: si, comp: ci }, *cpos)?;
            }
        }
        let origin = Pos { line: 1, col: 1 };
        for (pi, (pname, _)) in raw.params.iter().enumerate() {
            define(pname.clone(), Symbol::Param(pi), origin)?;
        }
        for (ii, decl) in raw.inputs.iter().enumerate() {
            if decl.dim == 1 {
                define(decl.name.clone(), Symbol::Input { input: ii, comp: 0 }, origin)?;
            } else {
                for c in 0..decl.dim {
                    define(
                        format!("{}{}", decl.name, c + 1),
                        Symbol::Input { input: ii, comp: c },
                        origin,
                    )?;
                }
            }
        }
        Ok(Self { symbols })
    }

    fn resolve(&self, raw: &Raw, theta: f64) -> Result<Expr, DslError> {
        match raw {
            Raw::Const(c) => Ok(Expr::Const(*c)),
            Raw::Neg(e) => Ok(Expr::negate(self.resolve(e, theta)?)),
            Raw::Bin(op, l, r) => Ok(Expr::bin(
                *op,
                self.resolve(l, theta)?,
                self.resolve(r, theta)?,
            )),
            Raw::Call { name, args, pos } => {
                let f = Func::from_name(name).ok_or_else(|| DslError::Resolve {
                    line: pos.line,
                    col: pos.col,
                    msg: format!("unknown function '{name}'"),
                })?;
                if args.len() != f.arity() {
                    return Err(DslError::Resolve {
                        line: pos.line,
                        col: pos.col,
                        msg: format!(
                            "function '{name}' takes {} argument(s), got {}",
                            f.arity(),
                            args.len()
                        ),
                    });
                }
                let args = args
                    .iter()
                    .map(|a| self.resolve(a, theta))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Expr::Call(f, args))
            }
            Raw::Ref { name, delay, pos } => {
                let sym = self.symbols.get(name).ok_or(DslError::UnknownIdent {
                    line: pos.line,
                    col: pos.col,
                    name: name.clone(),
                })?;
                match sym {
                    Symbol::State { sub, comp } => {
                        let d = delay.unwrap_or(0.0);
                        if d < 0.0 {
                            return Err(DslError::Resolve {
                                line: pos.line,
                                col: pos.col,
                                msg: format!("negative delay on '{name}'"),
                            });
                        }
                        if d > theta + 1e-12 {
                            return Err(DslError::Resolve {
                                line: pos.line,
                                col: pos.col,
                                msg: format!(
                                    "delay {d} on '{name}' exceeds declared theta {theta}"
                                ),
                            });
                        }
                        Ok(Expr::State {
                            sub: *sub,
                            comp: *comp,
                            delay: d,
                        })
                    }
                    Symbol::Input { input, comp } => {
                        if delay.is_some() {
                            return Err(DslError::Resolve {
                                line: pos.line,
                                col: pos.col,
                                msg: format!("delayed input reference '{name}' unsupported"),
                            });
                        }
                        Ok(Expr::Input {
                            input: *input,
                            comp: *comp,
                        })
                    }
                    Symbol::Param(pi) => {
                        if delay.is_some() {
                            return Err(DslError::Resolve {
                                line: pos.line,
                                col: pos.col,
                                msg: format!("cannot delay parameter '{name}'"),
                            });
                        }
                        Ok(Expr::Param(*pi))
                    }
                }
            }
        }
    }
}

/// Parse a model description. See the module docs for the grammar.
pub fn parse_model(text: &str) -> Result<ModelAst, DslError> {
    let raw = parse_raw(text)?;
    let resolver = Resolver::build(&raw)?;
    let mut subsystems = Vec::new();
    for rs in &raw.subs {
        let comp_names: Vec<String> = rs.flows.iter().map(|f| f.0.clone()).collect();
        let flow = rs
            .flows
            .iter()
            .map(|(_, _, e)| resolver.resolve(e, raw.theta))
            .collect::<Result<Vec<_>, _>>()?;
        let mut jump: Vec<Option<Expr>> = vec![None; comp_names.len()];
        let mut jump_kinds = Vec::new();
        for (cname, cpos, kind, e) in &rs.jumps {
            let ci = comp_names
                .iter()
                .position(|c| c == cname)
                .ok_or_else(|| DslError::Resolve {
                    line: cpos.line,
                    col: cpos.col,
                    msg: format!(
                        "jump target '{cname}' is not a component of subsystem '{}'",
                        rs.name
                    ),
                })?;
            jump[ci] = Some(resolver.resolve(e, raw.theta)?);
            jump_kinds.push(*kind);
        }
        subsystems.push(Subsystem {
            name: rs.name.clone(),
            dim: rs.dim,
            comp_names,
            flow,
            jump,
            jump_kinds,
        });
    }
    Ok(ModelAst {
        name: raw.name,
        theta: raw.theta,
        params: raw.params,
        inputs: raw.inputs,
        subsystems,
    })
}

/// Parse a single expression against an existing model's symbols (used by
/// certificate files).
pub fn parse_expr_str(text: &str, model: &ModelAst) -> Result<Expr, DslError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, idx: 0 };
    let raw = p.expr()?;
    if *p.peek() != Tok::Eof {
        let found = p.peek().describe();
        return p.err(format!("trailing content after expression: {found}"));
    }
    let raw_model = RawModel {
        name: model.name.clone(),
        theta: model.theta,
        params: model.params.clone(),
        inputs: model.inputs.clone(),
        subs: Vec::new(),
    };
    let mut resolver = Resolver::build(&raw_model)?;
    for (si, s) in model.subsystems.iter().enumerate() {
        for (ci, cname) in s.comp_names.iter().enumerate() {
            resolver
                .symbols
                .insert(cname.clone(), Symbol::State { sub: si, comp: ci });
        }
    }
    resolver.resolve(&raw, model.theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(text: &str) -> ModelAst {
        parse_model(text).unwrap()
    }

    #[test]
    fn quadratic_coupling_parses_to_expected_shape() {
        let m = single(
            "model m { sub a[1] { flow x1' = -x1 + x2^2; } sub b[1] { flow x2' = -x2; } }",
        );
        // add(neg(var x1), pow(var x2, 2))
        let e = &m.subsystems[0].flow[0];
        match e {
            Expr::Bin(BinOp::Add, l, r) => {
                assert_eq!(
                    **l,
                    Expr::negate(Expr::State {
                        sub: 0,
                        comp: 0,
                        delay: 0.0
                    })
                );
                assert_eq!(
                    **r,
                    Expr::bin(
                        BinOp::Pow,
                        Expr::State {
                            sub: 1,
                            comp: 0,
                            delay: 0.0
                        },
                        Expr::Const(2.0)
                    )
                );
            }
            other => panic!("unexpected shape {other:?}"),
        }
    }

    #[test]
    fn delayed_references_resolve() {
        let m = single(
            "model m { theta 0.03; input nu[3];
               sub a[1] { flow e1' = -1*e1 + 0.25*e2@0.03 + 0.25*e3@0.03 - 1*nu1; }
               sub b[1] { flow e2' = -e2; }
               sub c[1] { flow e3' = -e3; } }",
        );
        let mut delays = Vec::new();
        m.subsystems[0].flow[0].visit_delays(&mut delays);
        assert_eq!(delays, vec![0.03, 0.03]);
    }

    impl Expr {
        fn visit_delays(&self, out: &mut Vec<f64>) {
            match self {
                Expr::State { delay, .. } if *delay > 0.0 => out.push(*delay),
                Expr::Neg(e) => e.visit_delays(out),
                Expr::Bin(_, l, r) => {
                    l.visit_delays(out);
                    r.visit_delays(out);
                }
                Expr::Call(_, args) => args.iter().for_each(|a| a.visit_delays(out)),
                _ => {}
            }
        }
    }

    #[test]
    fn syntax_error_carries_position() {
        let err = parse_model("model m { sub a[1] { flow x1' = -x1 +; } }").unwrap_err();
        match err {
            DslError::Syntax { line, col, ref msg } => {
                assert_eq!(line, 1);
                assert!(col >= 38, "col={col}");
                assert!(msg.contains("expected expression"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier_and_arity_errors() {
        let err = parse_model("model m { sub a[1] { flow x' = -y; } }").unwrap_err();
        assert!(matches!(err, DslError::UnknownIdent { ref name, .. } if name == "y"));
        let err = parse_model("model m { sub a[1] { flow x' = min(x); } }").unwrap_err();
        assert!(matches!(err, DslError::Resolve { ref msg, .. } if msg.contains("argument")));
    }

    #[test]
    fn delay_beyond_theta_rejected_at_parse() {
        let err =
            parse_model("model m { theta 0.03; sub a[1] { flow x' = -x@0.05; } }").unwrap_err();
        assert!(matches!(err, DslError::Resolve { ref msg, .. } if msg.contains("exceeds")));
    }

    #[test]
    fn precedence_minus_binds_over_whole_power() {
        let m = single("model m { sub a[1] { flow x' = -x^2; } }");
        let e = &m.subsystems[0].flow[0];
        assert_eq!(
            *e,
            Expr::negate(Expr::bin(
                BinOp::Pow,
                Expr::State {
                    sub: 0,
                    comp: 0,
                    delay: 0.0
                },
                Expr::Const(2.0)
            ))
        );
    }

    #[test]
    fn pow_is_right_associative() {
        let m = single("model m { sub a[1] { flow x' = x^2^3; } }");
        let e = &m.subsystems[0].flow[0];
        match e {
            Expr::Bin(BinOp::Pow, _, r) => {
                assert!(matches!(**r, Expr::Bin(BinOp::Pow, _, _)));
            }
            other => panic!("{other:?}"),
        }
    }
}
