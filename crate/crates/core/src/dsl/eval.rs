//! Expression evaluation. Delayed state reads go through the Hermite
//! history reconstruction; delay-0 reads come from the supplied current
//! state, which during an integrator stage is the stage estimate rather
//! than the last stored sample.

use super::print::print_expr;
use super::{BinOp, Expr, Func, ModelAst};
use crate::state::{eval_samples_scalar, HistSample, Side};
use crate::BlockVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("division by zero in '{expr}'")]
    DivZero { expr: String },
    #[error("{func} of negative value {arg} in '{expr}'")]
    Domain { func: String, arg: f64, expr: String },
    #[error("non-real result in '{expr}'")]
    NonReal { expr: String },
    #[error("delayed reference in '{expr}' but no history supplied")]
    NoHistory { expr: String },
    #[error("delayed read at t={t} is ahead of the stored history in '{expr}'")]
    ReadAhead { t: f64, expr: String },
    #[error("history lookup failed in '{expr}': {msg}")]
    History { expr: String, msg: String },
}

/// Everything an expression may read.
pub struct EvalEnv<'a> {
    pub model: &'a ModelAst,
    /// Time-ordered samples backing delayed reads (`None` for pointwise
    /// evaluation of delay-free expressions).
    pub history: Option<&'a [HistSample]>,
    /// Time of the last history sample.
    pub right_time: f64,
    /// Evaluation time minus `right_time` (an RK stage inside the current
    /// step evaluates slightly past the stored history).
    pub stage_offset: f64,
    /// Delay-0 state reads.
    pub current: &'a BlockVector,
    /// Input component values at the evaluation time.
    pub inputs: Option<&'a dyn Fn(usize, usize) -> f64>,
    pub params: &'a [f64],
}

impl<'a> EvalEnv<'a> {
    /// Pointwise environment: no history, no inputs, evaluation at the
    /// state `x` itself.
    pub fn point(model: &'a ModelAst, x: &'a BlockVector, params: &'a [f64]) -> Self {
        Self {
            model,
            history: None,
            right_time: 0.0,
            stage_offset: 0.0,
            current: x,
            inputs: None,
            params,
        }
    }

    fn flat_index(&self, sub: usize, comp: usize) -> usize {
        self.model.dims()[..sub].iter().sum::<usize>() + comp
    }
}

pub fn eval_expr(e: &Expr, env: &EvalEnv) -> Result<f64, EvalError> {
    let v = eval_inner(e, env)?;
    if v.is_nan() {
        return Err(EvalError::NonReal {
            expr: print_expr(e, env.model),
        });
    }
    Ok(v)
}

/// Evaluate a delay-free expression at a point state.
pub fn eval_pointwise(
    e: &Expr,
    model: &ModelAst,
    x: &BlockVector,
    params: &[f64],
) -> Result<f64, EvalError> {
    eval_expr(e, &EvalEnv::point(model, x, params))
}

fn eval_inner(e: &Expr, env: &EvalEnv) -> Result<f64, EvalError> {
    match e {
        Expr::Const(c) => Ok(*c),
        Expr::Param(i) => Ok(env.params[*i]),
        Expr::Input { input, comp } => Ok(match env.inputs {
            Some(f) => f(*input, *comp),
            None => 0.0,
        }),
        Expr::State { sub, comp, delay } => {
            if *delay == 0.0 {
                return Ok(env.current.block_comp(*sub, *comp));
            }
            let samples = env.history.ok_or_else(|| EvalError::NoHistory {
                expr: print_expr(e, env.model),
            })?;
            let t_query = env.right_time + env.stage_offset - delay;
            if t_query > env.right_time + 1e-9 * env.right_time.abs().max(1.0) {
                return Err(EvalError::ReadAhead {
                    t: t_query,
                    expr: print_expr(e, env.model),
                });
            }
            let t_query = t_query.min(env.right_time);
            eval_samples_scalar(samples, t_query, Side::Right, env.flat_index(*sub, *comp))
                .map_err(|err| EvalError::History {
                    expr: print_expr(e, env.model),
                    msg: err.to_string(),
                })
        }
        Expr::Neg(inner) => Ok(-eval_inner(inner, env)?),
        Expr::Bin(op, l, r) => {
            let a = eval_inner(l, env)?;
            let b = eval_inner(r, env)?;
            match op {
                BinOp::Add => Ok(a + b),
                BinOp::Sub => Ok(a - b),
                BinOp::Mul => Ok(a * b),
                BinOp::Div => {
                    if b == 0.0 {
                        Err(EvalError::DivZero {
                            expr: print_expr(e, env.model),
                        })
                    } else {
                        Ok(a / b)
                    }
                }
                BinOp::Pow => pow(a, b, e, env.model),
            }
        }
        Expr::Call(f, args) => {
            let a = eval_inner(&args[0], env)?;
            match f {
                Func::Sqrt => {
                    if a < 0.0 {
                        Err(EvalError::Domain {
                            func: "sqrt".into(),
                            arg: a,
                            expr: print_expr(e, env.model),
                        })
                    } else {
                        Ok(a.sqrt())
                    }
                }
                Func::Abs => Ok(a.abs()),
                Func::Sign => Ok(if a > 0.0 {
                    1.0
                } else if a < 0.0 {
                    -1.0
                } else {
                    0.0
                }),
                Func::Exp => Ok(a.exp()),
                Func::Ln => {
                    if a <= 0.0 {
                        Err(EvalError::Domain {
                            func: "ln".into(),
                            arg: a,
                            expr: print_expr(e, env.model),
                        })
                    } else {
                        Ok(a.ln())
                    }
                }
                Func::Sin => Ok(a.sin()),
                Func::Cos => Ok(a.cos()),
                Func::Min => Ok(a.min(eval_inner(&args[1], env)?)),
                Func::Max => Ok(a.max(eval_inner(&args[1], env)?)),
                Func::Pow => {
                    let b = eval_inner(&args[1], env)?;
                    pow(a, b, e, env.model)
                }
            }
        }
    }
}

fn pow(a: f64, b: f64, e: &Expr, model: &ModelAst) -> Result<f64, EvalError> {
    let v = a.powf(b);
    if v.is_nan() {
        Err(EvalError::Domain {
            func: "pow".into(),
            arg: a,
            expr: print_expr(e, model),
        })
    } else {
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_expr_str, parse_model};
    use crate::state::HistorySegment;

    fn two_state_model() -> ModelAst {
        parse_model(
            "model m { theta 1.0; sub a[1] { flow x1' = -x1; } sub b[1] { flow x2' = -x2; } }",
        )
        .unwrap()
    }

    #[test]
    fn arithmetic_examples() {
        let m = two_state_model();
        let x = BlockVector::from_blocks(vec![vec![2.0], vec![3.0]]).unwrap();
        let e = parse_expr_str("-x1 + x2^2", &m).unwrap();
        assert_eq!(eval_pointwise(&e, &m, &x, &[]).unwrap(), 7.0);

        let x = BlockVector::from_blocks(vec![vec![4.0], vec![1.0]]).unwrap();
        let e = parse_expr_str("-x2 + 0.5*sqrt(abs(x1))", &m).unwrap();
        assert_eq!(eval_pointwise(&e, &m, &x, &[]).unwrap(), 0.0);
    }

    #[test]
    fn delayed_read_against_constant_history() {
        let m = two_state_model();
        let x = BlockVector::from_blocks(vec![vec![2.0], vec![2.0]]).unwrap();
        let seg = HistorySegment::constant(1.0, 0.0, x.clone());
        let e = parse_expr_str("x1@0.5", &m).unwrap();
        let env = EvalEnv {
            model: &m,
            history: Some(seg.samples()),
            right_time: 0.0,
            stage_offset: 0.0,
            current: &x,
            inputs: None,
            params: &[],
        };
        assert_eq!(eval_expr(&e, &env).unwrap(), 2.0);
    }

    #[test]
    fn division_by_zero_names_the_subexpression() {
        let m = two_state_model();
        let x = BlockVector::from_blocks(vec![vec![1.0], vec![0.0]]).unwrap();
        let e = parse_expr_str("x1 / x2", &m).unwrap();
        let err = eval_pointwise(&e, &m, &x, &[]).unwrap_err();
        assert!(matches!(err, EvalError::DivZero { ref expr } if expr.contains("x1/x2")
            || expr.contains("x1 / x2")));
    }

    #[test]
    fn delay_free_expr_depends_only_on_the_rightmost_sample() {
        let m = two_state_model();
        let e = parse_expr_str("-x1 + x2^2", &m).unwrap();
        let x = BlockVector::from_blocks(vec![vec![2.0], vec![3.0]]).unwrap();
        // two histories with completely different content but the same
        // right end
        let seg_a = HistorySegment::constant(1.0, 0.0, x.clone());
        let wild = BlockVector::from_blocks(vec![vec![-50.0], vec![9.0]]).unwrap();
        let seg_b = HistorySegment::new(
            1.0,
            vec![
                crate::state::HistSample::new(-1.0, wild.clone(), wild.clone()),
                crate::state::HistSample::new(0.0, x.clone(), wild),
            ],
        )
        .unwrap();
        for seg in [seg_a, seg_b] {
            let env = EvalEnv {
                model: &m,
                history: Some(seg.samples()),
                right_time: 0.0,
                stage_offset: 0.0,
                current: &x,
                inputs: None,
                params: &[],
            };
            assert_eq!(eval_expr(&e, &env).unwrap(), 7.0);
        }
    }

    #[test]
    fn sign_at_zero_is_zero() {
        let m = two_state_model();
        let x = BlockVector::from_blocks(vec![vec![0.0], vec![-2.0]]).unwrap();
        let e = parse_expr_str("sign(x1) + sign(x2)", &m).unwrap();
        assert_eq!(eval_pointwise(&e, &m, &x, &[]).unwrap(), -1.0);
    }

    #[test]
    fn sqrt_and_ln_domain_errors() {
        let m = two_state_model();
        let x = BlockVector::from_blocks(vec![vec![-1.0], vec![0.0]]).unwrap();
        let e = parse_expr_str("sqrt(x1)", &m).unwrap();
        assert!(matches!(
            eval_pointwise(&e, &m, &x, &[]),
            Err(EvalError::Domain { .. })
        ));
        let e = parse_expr_str("ln(x2)", &m).unwrap();
        assert!(matches!(
            eval_pointwise(&e, &m, &x, &[]),
            Err(EvalError::Domain { .. })
        ));
    }
}
