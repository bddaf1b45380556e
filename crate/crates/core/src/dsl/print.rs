//! Canonical printing. Re-parsing the printed form reproduces the same
//! tree, with one normalization: a negative constant prints as a negation.

use super::{BinOp, Expr, JumpKind, ModelAst};

// grammar levels: expr(1) < term(2) < factor(3) < power(4) < atom(5)
fn level(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, _, _) => 1,
        Expr::Bin(BinOp::Mul | BinOp::Div, _, _) => 2,
        Expr::Neg(_) => 3,
        Expr::Const(c) if *c < 0.0 => 3,
        Expr::Bin(BinOp::Pow, _, _) => 4,
        _ => 5,
    }
}

fn fmt(e: &Expr, model: &ModelAst, min_level: u8, out: &mut String) {
    let needs_parens = level(e) < min_level;
    if needs_parens {
        out.push('(');
    }
    match e {
        Expr::Const(c) => {
            if *c < 0.0 {
                out.push('-');
                out.push_str(&format!("{:?}", -c));
            } else {
                out.push_str(&format!("{c:?}"));
            }
        }
        Expr::State { sub, comp, delay } => {
            out.push_str(model.comp_name(*sub, *comp));
            if *delay > 0.0 {
                out.push('@');
                out.push_str(&format!("{delay:?}"));
            }
        }
        Expr::Input { input, comp } => {
            let decl = &model.inputs[*input];
            if decl.dim == 1 {
                out.push_str(&decl.name);
            } else {
                out.push_str(&format!("{}{}", decl.name, comp + 1));
            }
        }
        Expr::Param(i) => out.push_str(&model.params[*i].0),
        Expr::Neg(inner) => {
            out.push('-');
            fmt(inner, model, 4, out);
        }
        Expr::Bin(op, l, r) => {
            let (sym, lv, ll, rl) = match op {
                BinOp::Add => (" + ", 1, 1, 2),
                BinOp::Sub => (" - ", 1, 1, 2),
                BinOp::Mul => ("*", 2, 2, 3),
                BinOp::Div => ("/", 2, 2, 3),
                BinOp::Pow => ("^", 4, 5, 3),
            };
            let _ = lv;
            fmt(l, model, ll, out);
            out.push_str(sym);
            fmt(r, model, rl, out);
        }
        Expr::Call(f, args) => {
            out.push_str(f.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                fmt(a, model, 1, out);
            }
            out.push(')');
        }
    }
    if needs_parens {
        out.push(')');
    }
}

pub fn print_expr(e: &Expr, model: &ModelAst) -> String {
    let mut s = String::new();
    fmt(e, model, 1, &mut s);
    s
}

/// Canonical text form of a model (parses back to an equal AST).
pub fn print_model(m: &ModelAst) -> String {
    let mut out = format!("model {} {{\n", m.name);
    if m.theta != 0.0 {
        out.push_str(&format!("  theta {:?};\n", m.theta));
    }
    for (name, v) in &m.params {
        if *v < 0.0 {
            out.push_str(&format!("  param {name} = -{:?};\n", -v));
        } else {
            out.push_str(&format!("  param {name} = {v:?};\n"));
        }
    }
    for decl in &m.inputs {
        out.push_str(&format!("  input {}[{}];\n", decl.name, decl.dim));
    }
    for s in &m.subsystems {
        out.push_str(&format!("  sub {}[{}] {{\n", s.name, s.dim));
        for (ci, e) in s.flow.iter().enumerate() {
            out.push_str(&format!(
                "    flow {}' = {};\n",
                s.comp_names[ci],
                print_expr(e, m)
            ));
        }
        for (ci, j) in s.jump.iter().enumerate() {
            if let Some(e) = j {
                let kind = match s.jump_kinds.first().copied().unwrap_or(JumpKind::Pointwise) {
                    JumpKind::Pointwise => "point",
                    JumpKind::History => "hist",
                };
                out.push_str(&format!(
                    "    jump {kind} {} = {};\n",
                    s.comp_names[ci],
                    print_expr(e, m)
                ));
            }
        }
        out.push_str("  }\n");
    }
    out.push_str("}\n");
    out
}
