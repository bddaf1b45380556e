//! Model-description language: per-subsystem flow and jump expressions with
//! delayed state references, declared inputs, and named parameters.
//!
//! ```text
//! model ncs {
//!   theta 0.03;
//!   param k = 0.25;
//!   input nu[3];
//!   sub e1[1] {
//!     flow e1' = -1*e1 + k*e2@0.03 + k*e3@0.03 - nu1;
//!   }
//!   ...
//! }
//! ```
//!
//! `x@tau` reads state `x` delayed by the literal nonnegative offset `tau`
//! (delays must be constants so method-of-steps integration stays
//! well-defined). A declared input `u[k]` with `k >= 2` is referenced as
//! `u1 .. uk`; a one-dimensional input by its bare name. A subsystem without
//! a `jump` block jumps identically. `#` starts a line comment. Files use
//! the `.imp` extension, UTF-8.
//!
//! Operator precedence: `^` (right-associative) above `*`/`/` above `+`/`-`;
//! a leading `-` negates a whole power, so `-x^2` is `-(x^2)` and `(-x)^2`
//! needs the parentheses.

mod eval;
mod lex;
mod parse;
mod print;

pub use eval::{eval_expr, eval_pointwise, EvalEnv, EvalError};
pub use parse::{parse_expr_str, parse_model};
pub use print::{print_expr, print_model};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DslError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}, column {col}: unknown identifier '{name}'")]
    UnknownIdent { line: usize, col: usize, name: String },
    #[error("line {line}, column {col}: {msg}")]
    Resolve { line: usize, col: usize, msg: String },
}

/// Binary operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// The fixed function set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Abs,
    Sign,
    Exp,
    Ln,
    Sin,
    Cos,
    Min,
    Max,
    Pow,
}

impl Func {
    pub fn from_name(s: &str) -> Option<Func> {
        match s {
            "sqrt" => Some(Func::Sqrt),
            "abs" => Some(Func::Abs),
            "sign" => Some(Func::Sign),
            "exp" => Some(Func::Exp),
            "ln" => Some(Func::Ln),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "min" => Some(Func::Min),
            "max" => Some(Func::Max),
            "pow" => Some(Func::Pow),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Min => "min",
            Func::Max => "max",
            Func::Pow => "pow",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Func::Min | Func::Max | Func::Pow => 2,
            _ => 1,
        }
    }
}

/// A resolved expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// State component read, possibly delayed (`delay >= 0`).
    State { sub: usize, comp: usize, delay: f64 },
    /// Component of a declared input.
    Input { input: usize, comp: usize },
    Param(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    pub fn negate(e: Expr) -> Expr {
        Expr::Neg(Box::new(e))
    }

    /// Largest delay referenced anywhere in the tree.
    pub fn max_delay(&self) -> f64 {
        match self {
            Expr::State { delay, .. } => *delay,
            Expr::Neg(e) => e.max_delay(),
            Expr::Bin(_, l, r) => l.max_delay().max(r.max_delay()),
            Expr::Call(_, args) => args.iter().map(|a| a.max_delay()).fold(0.0, f64::max),
            _ => 0.0,
        }
    }

    /// Smallest strictly positive delay, if any.
    pub fn min_positive_delay(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        self.visit(&mut |e| {
            if let Expr::State { delay, .. } = e {
                if *delay > 0.0 && best.map(|b| *delay < b).unwrap_or(true) {
                    best = Some(*delay);
                }
            }
        });
        best
    }

    pub fn has_delayed_ref(&self) -> bool {
        self.max_delay() > 0.0
    }

    fn visit<F: FnMut(&Expr)>(&self, f: &mut F) {
        f(self);
        match self {
            Expr::Neg(e) => e.visit(f),
            Expr::Bin(_, l, r) => {
                l.visit(f);
                r.visit(f);
            }
            Expr::Call(_, args) => {
                for a in args {
                    a.visit(f);
                }
            }
            _ => {}
        }
    }
}

/// Jump semantics: `point` replaces the state value at the impulse; `hist`
/// rewrites the whole state window `(t-θ, t]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpKind {
    Pointwise,
    History,
}

#[derive(Debug, Clone)]
pub struct InputDecl {
    pub name: String,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct Subsystem {
    pub name: String,
    /// Declared dimension (validated against the flow list length).
    pub dim: usize,
    pub comp_names: Vec<String>,
    pub flow: Vec<Expr>,
    /// Per-component jump expression; `None` means identity.
    pub jump: Vec<Option<Expr>>,
    /// Kind tags seen on this subsystem's jump lines.
    pub jump_kinds: Vec<JumpKind>,
}

#[derive(Debug, Clone)]
pub struct ModelAst {
    pub name: String,
    pub theta: f64,
    pub params: Vec<(String, f64)>,
    pub inputs: Vec<InputDecl>,
    pub subsystems: Vec<Subsystem>,
}

impl ModelAst {
    pub fn dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.comp_names.len()).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.dims().iter().sum()
    }

    pub fn param_values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.1).collect()
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.inputs.iter().position(|i| i.name == name)
    }

    pub fn sub_index(&self, name: &str) -> Option<usize> {
        self.subsystems.iter().position(|s| s.name == name)
    }

    pub fn comp_index(&self, name: &str) -> Option<(usize, usize)> {
        for (si, s) in self.subsystems.iter().enumerate() {
            if let Some(ci) = s.comp_names.iter().position(|c| c == name) {
                return Some((si, ci));
            }
        }
        None
    }

    pub fn comp_name(&self, sub: usize, comp: usize) -> &str {
        &self.subsystems[sub].comp_names[comp]
    }

    /// The one jump kind used by the model (`Pointwise` when no jump lines).
    pub fn jump_kind(&self) -> JumpKind {
        for s in &self.subsystems {
            if let Some(k) = s.jump_kinds.first() {
                return *k;
            }
        }
        JumpKind::Pointwise
    }

    pub fn has_jump_exprs(&self) -> bool {
        self.subsystems
            .iter()
            .any(|s| s.jump.iter().any(|j| j.is_some()))
    }

    fn all_exprs(&self) -> impl Iterator<Item = &Expr> {
        self.subsystems.iter().flat_map(|s| {
            s.flow
                .iter()
                .chain(s.jump.iter().filter_map(|j| j.as_ref()))
        })
    }

    pub fn max_delay_used(&self) -> f64 {
        self.all_exprs().map(|e| e.max_delay()).fold(0.0, f64::max)
    }

    pub fn min_positive_delay(&self) -> Option<f64> {
        self.all_exprs()
            .filter_map(|e| e.min_positive_delay())
            .fold(None, |acc, d| {
                Some(acc.map(|a: f64| a.min(d)).unwrap_or(d))
            })
    }
}

/// Consistency diagnostics for a (possibly programmatically built) model.
/// The list is empty iff dimensions are consistent, every delay fits in the
/// declared `theta`, and jump kinds are uniform.
pub fn validate_model(m: &ModelAst) -> Vec<String> {
    let mut out = Vec::new();
    if m.theta < 0.0 {
        out.push(format!("theta {} must be >= 0", m.theta));
    }
    for s in &m.subsystems {
        if s.dim != s.flow.len() {
            out.push(format!(
                "subsystem {} declares dimension {} but defines {} flow equation(s)",
                s.name,
                s.dim,
                s.flow.len()
            ));
        }
        if s.comp_names.len() != s.flow.len() || s.jump.len() != s.flow.len() {
            out.push(format!(
                "subsystem {}: component/flow/jump list lengths disagree",
                s.name
            ));
        }
    }
    let kinds: Vec<JumpKind> = m
        .subsystems
        .iter()
        .flat_map(|s| s.jump_kinds.iter().copied())
        .collect();
    if kinds.windows(2).any(|w| w[0] != w[1]) {
        out.push("jump kinds must be uniform across subsystems (point vs hist)".into());
    }
    let d = m.max_delay_used();
    if d > m.theta + 1e-12 {
        out.push(format!(
            "delay {} exceeds horizon theta={}",
            d, m.theta
        ));
    }
    if m.jump_kind() == JumpKind::History {
        for s in &m.subsystems {
            for j in s.jump.iter().flatten() {
                if j.has_delayed_ref() {
                    out.push(format!(
                        "subsystem {}: history jumps must be pointwise expressions \
                         (delayed references form an unsupported window map)",
                        s.name
                    ));
                }
            }
        }
    }
    out
}
