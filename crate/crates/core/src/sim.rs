//! Fixed-step RK4 integration of impulsive systems in all three forms:
//! delay-free, delayed with pointwise jumps, and delayed with whole-window
//! jumps.
//!
//! Impulse times are exogenous, so no event detection is needed: the last
//! step before each impulse is shortened to land on it exactly. Delayed
//! references inside stage evaluations read the Hermite-reconstructed
//! history; `dt` is clamped to the smallest positive delay so no stage ever
//! reads ahead of the stored history (method of steps).
//!
//! Jumps use left limits of state and input. For piecewise-constant inputs
//! the left limit is the value of the piece ending at the impulse; constant
//! and sinusoidal signals coincide with their left limits.

use crate::dsl::{eval_expr, EvalEnv, EvalError, JumpKind, ModelAst};
use crate::dwell::ImpulseSequence;
use crate::state::{
    eval_samples, HistSample, HistoryJumpEvent, HistorySegment, JumpEvent, Side, StateError,
    Trajectory,
};
use crate::BlockVector;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("model validation failed: {0}")]
    Validation(String),
    #[error("evaluation at t={t}: {source}")]
    Eval {
        t: f64,
        #[source]
        source: EvalError,
    },
    #[error("diverged: |x| = {norm:.3e} exceeds cap {cap:.1e}; last finite time t={t_last}")]
    Diverged { t_last: f64, norm: f64, cap: f64 },
    #[error(transparent)]
    State(#[from] StateError),
    #[error("jump at t={t}: {msg}")]
    Jump { t: f64, msg: String },
}

/// A scalar input signal.
#[derive(Debug, Clone)]
pub enum Signal {
    Constant(f64),
    /// Piecewise-constant: `(start, value)` pieces, right-continuous;
    /// value 0 before the first piece.
    Steps(Vec<(f64, f64)>),
    /// `amplitude * sin(omega * t + phase)`.
    Sine {
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
}

impl Signal {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Signal::Constant(v) => *v,
            Signal::Steps(pieces) => {
                let idx = pieces.partition_point(|p| p.0 <= t);
                if idx == 0 {
                    0.0
                } else {
                    pieces[idx - 1].1
                }
            }
            Signal::Sine {
                amplitude,
                omega,
                phase,
            } => amplitude * (omega * t + phase).sin(),
        }
    }

    /// Left limit at `t` (differs from `eval` only for `Steps`).
    pub fn eval_left(&self, t: f64) -> f64 {
        match self {
            Signal::Steps(pieces) => {
                let idx = pieces.partition_point(|p| p.0 < t);
                if idx == 0 {
                    0.0
                } else {
                    pieces[idx - 1].1
                }
            }
            _ => self.eval(t),
        }
    }

    /// Parse `const:V`, `sine:AMP:OMEGA[:PHASE]`, or `steps:t0:v0,t1:v1,...`.
    pub fn parse(spec: &str) -> Result<Signal, SimError> {
        let bad = || SimError::Config(format!("cannot parse signal spec '{spec}'"));
        let mut parts = spec.splitn(2, ':');
        let kind = parts.next().ok_or_else(bad)?;
        let rest = parts.next().unwrap_or("");
        match kind {
            "const" => Ok(Signal::Constant(rest.parse().map_err(|_| bad())?)),
            "sine" => {
                let nums: Vec<f64> = rest
                    .split(':')
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad())?;
                match nums.as_slice() {
                    [a, w] => Ok(Signal::Sine {
                        amplitude: *a,
                        omega: *w,
                        phase: 0.0,
                    }),
                    [a, w, p] => Ok(Signal::Sine {
                        amplitude: *a,
                        omega: *w,
                        phase: *p,
                    }),
                    _ => Err(bad()),
                }
            }
            "steps" => {
                let mut pieces = Vec::new();
                for item in rest.split(',') {
                    let mut kv = item.split(':');
                    let t: f64 = kv.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                    let v: f64 = kv.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                    pieces.push((t, v));
                }
                if pieces.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(bad());
                }
                Ok(Signal::Steps(pieces))
            }
            _ => Err(bad()),
        }
    }
}

/// Named input signals for a simulation run. Inputs declared by the model
/// but not present here read as zero.
#[derive(Debug, Clone, Default)]
pub struct InputBank {
    signals: BTreeMap<String, Vec<Signal>>,
}

impl InputBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: &str, signals: Vec<Signal>) -> &mut Self {
        self.signals.insert(name.to_string(), signals);
        self
    }

    pub fn with(mut self, name: &str, signals: Vec<Signal>) -> Self {
        self.set(name, signals);
        self
    }

    /// Resolve against a model's declared inputs.
    pub fn bind<'a>(&'a self, model: &ModelAst) -> Result<BoundInputs<'a>, SimError> {
        for name in self.signals.keys() {
            if model.input_index(name).is_none() {
                return Err(SimError::Config(format!(
                    "signal '{name}' does not match any declared input"
                )));
            }
        }
        let mut per_input = Vec::with_capacity(model.inputs.len());
        for decl in &model.inputs {
            match self.signals.get(&decl.name) {
                Some(sig) => {
                    if sig.len() != decl.dim {
                        return Err(SimError::Config(format!(
                            "input '{}' declares {} component(s), {} signal(s) supplied",
                            decl.name,
                            decl.dim,
                            sig.len()
                        )));
                    }
                    per_input.push(Some(sig.as_slice()));
                }
                None => per_input.push(None),
            }
        }
        Ok(BoundInputs { per_input })
    }
}

/// Input signals resolved against a model (index-addressable).
pub struct BoundInputs<'a> {
    per_input: Vec<Option<&'a [Signal]>>,
}

impl BoundInputs<'_> {
    pub fn eval(&self, input: usize, comp: usize, t: f64) -> f64 {
        match self.per_input.get(input).and_then(|s| *s) {
            Some(sig) => sig[comp].eval(t),
            None => 0.0,
        }
    }

    pub fn eval_left(&self, input: usize, comp: usize, t: f64) -> f64 {
        match self.per_input.get(input).and_then(|s| *s) {
            Some(sig) => sig[comp].eval_left(t),
            None => 0.0,
        }
    }

    /// Euclidean norm over the listed `(input, component)` pairs.
    pub fn norm_at(&self, comps: &[(usize, usize)], t: f64, left: bool) -> f64 {
        comps
            .iter()
            .map(|&(i, c)| {
                let v = if left {
                    self.eval_left(i, c, t)
                } else {
                    self.eval(i, c, t)
                };
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Euclidean norm over every declared input component.
    pub fn full_norm_at(&self, model: &ModelAst, t: f64, left: bool) -> f64 {
        let mut acc = 0.0;
        for (i, decl) in model.inputs.iter().enumerate() {
            for c in 0..decl.dim {
                let v = if left {
                    self.eval_left(i, c, t)
                } else {
                    self.eval(i, c, t)
                };
                acc += v * v;
            }
        }
        acc.sqrt()
    }
}

/// Fixed-step integration settings.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Norm bound above which the run aborts as diverged.
    pub blowup_cap: f64,
    pub inputs: InputBank,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self {
            dt,
            horizon,
            blowup_cap: 1e9,
            inputs: InputBank::new(),
        }
    }

    pub fn with_inputs(mut self, inputs: InputBank) -> Self {
        self.inputs = inputs;
        self
    }
}

/// Initial condition: a point (delay-free), or an initial history on
/// `[t0 - θ, t0]`. A `Point` on a delayed model is promoted to a constant
/// history.
#[derive(Debug, Clone)]
pub enum InitialState {
    Point(BlockVector),
    ConstantHistory(BlockVector),
    SampledHistory(Vec<(f64, BlockVector)>),
}

/// What happens at an impulse.
pub enum JumpRule<'r> {
    /// Apply the model's jump expressions (identity if none).
    FromModel,
    /// Caller-supplied pointwise jump (protocol logic etc.).
    Custom(&'r mut dyn FnMut(&JumpContext) -> Result<BlockVector, SimError>),
}

/// Left-limit information handed to a custom jump.
pub struct JumpContext<'a> {
    pub t: f64,
    pub left: &'a BlockVector,
    pub model: &'a ModelAst,
    pub inputs: &'a BoundInputs<'a>,
}

/// Result of applying a jump map at one impulse.
#[derive(Debug, Clone)]
pub enum JumpResult {
    Pointwise(BlockVector),
    /// Replacement window spanning `(t - θ, t]`.
    History(Vec<HistSample>),
}

fn eval_flow(
    model: &ModelAst,
    params: &[f64],
    samples: &[HistSample],
    right_time: f64,
    stage_offset: f64,
    current: &BlockVector,
    inputs: &BoundInputs,
) -> Result<BlockVector, SimError> {
    let t_eval = right_time + stage_offset;
    let input_fn = |i: usize, c: usize| inputs.eval(i, c, t_eval);
    let env = EvalEnv {
        model,
        history: Some(samples),
        right_time,
        stage_offset,
        current,
        inputs: Some(&input_fn),
        params,
    };
    let mut data = Vec::with_capacity(model.total_dim());
    for sub in &model.subsystems {
        for e in &sub.flow {
            data.push(eval_expr(e, &env).map_err(|source| SimError::Eval { t: t_eval, source })?);
        }
    }
    Ok(BlockVector::from_flat(model.dims(), data)?)
}

fn rk4(
    model: &ModelAst,
    params: &[f64],
    samples: &[HistSample],
    t: f64,
    h: f64,
    x: &BlockVector,
    k1: &BlockVector,
    inputs: &BoundInputs,
) -> Result<BlockVector, SimError> {
    let half = 0.5 * h;
    let y2 = x.saxpy(half, k1);
    let k2 = eval_flow(model, params, samples, t, half, &y2, inputs)?;
    let y3 = x.saxpy(half, &k2);
    let k3 = eval_flow(model, params, samples, t, half, &y3, inputs)?;
    let y4 = x.saxpy(h, &k3);
    let k4 = eval_flow(model, params, samples, t, h, &y4, inputs)?;
    let data: Vec<f64> = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &xi)| {
            xi + h / 6.0 * (k1.data()[i] + 2.0 * k2.data()[i] + 2.0 * k3.data()[i] + k4.data()[i])
        })
        .collect();
    Ok(BlockVector::from_flat(x.dims().to_vec(), data)?)
}

/// One classical RK4 step from the right end of `history`.
pub fn step_flow(
    model: &ModelAst,
    history: &HistorySegment,
    inputs: &InputBank,
    t: f64,
    dt: f64,
) -> Result<BlockVector, SimError> {
    let bound = inputs.bind(model)?;
    let params = model.param_values();
    let x = history.right_value().clone();
    let k1 = eval_flow(model, &params, history.samples(), t, 0.0, &x, &bound)?;
    rk4(model, &params, history.samples(), t, dt, &x, &k1, &bound)
}

fn model_jump_pointwise(
    model: &ModelAst,
    params: &[f64],
    samples: &[HistSample],
    t: f64,
    left: &BlockVector,
    inputs: &BoundInputs,
) -> Result<BlockVector, SimError> {
    let input_fn = |i: usize, c: usize| inputs.eval_left(i, c, t);
    let env = EvalEnv {
        model,
        history: Some(samples),
        right_time: t,
        stage_offset: 0.0,
        current: left,
        inputs: Some(&input_fn),
        params,
    };
    let mut out = left.clone();
    for (si, sub) in model.subsystems.iter().enumerate() {
        for (ci, j) in sub.jump.iter().enumerate() {
            if let Some(e) = j {
                let v = eval_expr(e, &env).map_err(|source| SimError::Eval { t, source })?;
                out.set_block_comp(si, ci, v);
            }
        }
    }
    Ok(out)
}

fn model_jump_history(
    model: &ModelAst,
    params: &[f64],
    window: &[HistSample],
    t: f64,
    inputs: &BoundInputs,
) -> Result<Vec<HistSample>, SimError> {
    // pointwise lift: the jump expressions are applied at every stored
    // sample of the window; u enters as its left limit at the impulse
    let input_fn = |i: usize, c: usize| inputs.eval_left(i, c, t);
    let apply = |x: &BlockVector| -> Result<BlockVector, SimError> {
        let env = EvalEnv {
            model,
            history: None,
            right_time: t,
            stage_offset: 0.0,
            current: x,
            inputs: Some(&input_fn),
            params,
        };
        let mut v = x.clone();
        for (si, sub) in model.subsystems.iter().enumerate() {
            for (ci, j) in sub.jump.iter().enumerate() {
                if let Some(e) = j {
                    let val =
                        eval_expr(e, &env).map_err(|source| SimError::Eval { t, source })?;
                    v.set_block_comp(si, ci, val);
                }
            }
        }
        Ok(v)
    };
    let mut values: Vec<BlockVector> = Vec::with_capacity(window.len());
    for s in window {
        values.push(apply(&s.x)?);
    }
    // Transformed derivatives by differencing the jump image along the
    // original Hermite reconstruction (chain rule without symbolic
    // derivatives). One-sided at window ends and at duplicated jump rows.
    let n = window.len();
    let span = window[n - 1].t - window[0].t;
    let step = if n > 1 { (span / (n - 1) as f64).max(1e-12) } else { 1.0 };
    let h_fd = 1e-6 * step;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let ti = window[i].t;
        let is_left_row = i + 1 < n && window[i + 1].t == ti;
        let is_post_row = i > 0 && window[i - 1].t == ti;
        let mut a = (ti - h_fd).max(window[0].t);
        let mut b = (ti + h_fd).min(window[n - 1].t);
        if is_left_row {
            b = ti;
        }
        if is_post_row {
            a = ti;
        }
        let dx = if b > a {
            let side = if b == ti { Side::Left } else { Side::Right };
            let xa = eval_samples(window, a, side).map_err(SimError::State)?;
            let xb = eval_samples(window, b, side).map_err(SimError::State)?;
            let ga = apply(&xa)?;
            let gb = apply(&xb)?;
            let data: Vec<f64> = gb
                .data()
                .iter()
                .zip(ga.data())
                .map(|(vb, va)| (vb - va) / (b - a))
                .collect();
            BlockVector::from_flat(values[0].dims().to_vec(), data).map_err(SimError::State)?
        } else {
            fd_deriv(window, &values, i)
        };
        out.push(HistSample::new(window[i].t, values[i].clone(), dx));
    }
    Ok(out)
}

fn fd_deriv(window: &[HistSample], values: &[BlockVector], i: usize) -> BlockVector {
    let n = window.len();
    let pick = |a: usize, b: usize| -> BlockVector {
        let hgap = window[b].t - window[a].t;
        if hgap <= 0.0 {
            return BlockVector::zeros(values[0].dims().to_vec());
        }
        let data: Vec<f64> = values[b]
            .data()
            .iter()
            .zip(values[a].data())
            .map(|(vb, va)| (vb - va) / hgap)
            .collect();
        BlockVector::from_flat(values[0].dims().to_vec(), data).unwrap()
    };
    if n == 1 {
        BlockVector::zeros(values[0].dims().to_vec())
    } else if i == 0 {
        pick(0, 1)
    } else if i == n - 1 {
        pick(n - 2, n - 1)
    } else if window[i + 1].t > window[i - 1].t {
        pick(i - 1, i + 1)
    } else {
        BlockVector::zeros(values[0].dims().to_vec())
    }
}

/// Apply the model's jump map to a left-limit history window.
pub fn apply_jump(
    model: &ModelAst,
    kind: JumpKind,
    left_history: &HistorySegment,
    inputs: &InputBank,
    t: f64,
) -> Result<JumpResult, SimError> {
    let bound = inputs.bind(model)?;
    let params = model.param_values();
    match kind {
        JumpKind::Pointwise => {
            let post = model_jump_pointwise(
                model,
                &params,
                left_history.samples(),
                t,
                left_history.right_value(),
                &bound,
            )?;
            Ok(JumpResult::Pointwise(post))
        }
        JumpKind::History => {
            let post =
                model_jump_history(model, &params, left_history.samples(), t, &bound)?;
            Ok(JumpResult::History(post))
        }
    }
}

/// Integrate the model over `[seq.t0, cfg.horizon]` applying the model's
/// jump map at each impulse time.
pub fn simulate(
    model: &ModelAst,
    seq: &ImpulseSequence,
    init: &InitialState,
    cfg: &SimConfig,
) -> Result<Trajectory, SimError> {
    simulate_with(model, seq, init, cfg, &mut JumpRule::FromModel)
}

/// Integrate with a caller-controlled jump rule.
pub fn simulate_with(
    model: &ModelAst,
    seq: &ImpulseSequence,
    init: &InitialState,
    cfg: &SimConfig,
    jump_rule: &mut JumpRule,
) -> Result<Trajectory, SimError> {
    let diags = crate::dsl::validate_model(model);
    if !diags.is_empty() {
        return Err(SimError::Validation(diags.join("; ")));
    }
    if !(cfg.dt > 0.0) {
        return Err(SimError::Config(format!("dt {} must be > 0", cfg.dt)));
    }
    let t0 = seq.t0();
    let horizon = cfg.horizon;
    if horizon < t0 {
        return Err(SimError::Config(format!(
            "horizon {horizon} before start {t0}"
        )));
    }
    let theta = model.theta;
    let dims = model.dims();
    let params = model.param_values();
    let bound = cfg.inputs.bind(model)?;
    let kind = model.jump_kind();

    let mut traj = Trajectory::new(t0, dims.clone());

    // dt clamped to the smallest positive delay (method of steps)
    let mut dt = cfg.dt;
    if let Some(dmin) = model.min_positive_delay() {
        if dt > dmin {
            traj.push_warning(format!(
                "dt {} clamped to the smallest delay {dmin} (method of steps)",
                dt
            ));
            dt = dmin;
        }
    }

    let times: Vec<f64> = seq
        .times()
        .iter()
        .copied()
        .filter(|&t| t <= horizon + 1e-9 * horizon.abs().max(1.0))
        .collect();
    if let Some(gap) = times.windows(2).map(|w| w[1] - w[0]).fold(None, |a: Option<f64>, g| {
        Some(a.map(|x| x.min(g)).unwrap_or(g))
    }) {
        if dt > gap * (1.0 + 1e-9) {
            return Err(SimError::Config(format!(
                "dt {dt} exceeds the minimum inter-impulse gap {gap}"
            )));
        }
    }

    // --- initial history -------------------------------------------------
    // Live buffer rows carry the history-side derivative; the flow-side row
    // at t0 (duplicate instant, dx = f) starts the forward integration.
    let mut hist: Vec<HistSample> = Vec::new();
    let zeros = BlockVector::zeros(dims.clone());
    let x0: BlockVector = match init {
        InitialState::Point(x) | InitialState::ConstantHistory(x) => {
            if !x.same_shape(&zeros) {
                return Err(SimError::Config(format!(
                    "initial state has dims {:?}, model needs {:?}",
                    x.dims(),
                    dims
                )));
            }
            if theta > 0.0 {
                hist.push(HistSample::new(t0 - theta, x.clone(), zeros.clone()));
                hist.push(HistSample::new(t0, x.clone(), zeros.clone()));
            }
            x.clone()
        }
        InitialState::SampledHistory(rows) => {
            if rows.is_empty() {
                return Err(SimError::Config("empty initial history".into()));
            }
            for (rt, rx) in rows {
                if !rx.same_shape(&zeros) {
                    return Err(SimError::Config(format!(
                        "history row at t={rt} has dims {:?}, model needs {:?}",
                        rx.dims(),
                        dims
                    )));
                }
            }
            let first = rows[0].0;
            let last = rows[rows.len() - 1].0;
            if last != t0 {
                return Err(SimError::Config(format!(
                    "initial history must end exactly at t0={t0} (ends at {last})"
                )));
            }
            if theta > 0.0 && first > t0 - theta + 1e-12 {
                return Err(SimError::Config(format!(
                    "initial history must cover [{}, {t0}] (starts at {first})",
                    t0 - theta
                )));
            }
            // derivatives by finite differences of the supplied rows
            let tmp: Vec<HistSample> = rows
                .iter()
                .map(|(rt, rx)| HistSample::new(*rt, rx.clone(), zeros.clone()))
                .collect();
            let vals: Vec<BlockVector> = rows.iter().map(|r| r.1.clone()).collect();
            for i in 0..tmp.len() {
                let dx = fd_deriv(&tmp, &vals, i);
                hist.push(HistSample::new(tmp[i].t, vals[i].clone(), dx));
            }
            rows[rows.len() - 1].1.clone()
        }
    };

    // flow-side row at t0 (duplicate instant when an initial history is
    // stored: the history side keeps its own derivative, the flow side
    // starts the forward integration)
    let f0 = eval_flow(model, &params, &hist, t0, 0.0, &x0, &bound)?;
    hist.push(HistSample::new(t0, x0.clone(), f0));
    for s in &hist {
        traj.push_sample(s.clone());
    }

    // --- main loop --------------------------------------------------------
    let mut t = t0;
    let mut x = x0;
    let keep_span = theta + 4.0 * dt;

    let mut segment_ends: Vec<(f64, bool)> = times.iter().map(|&tk| (tk, true)).collect();
    if segment_ends.last().map(|&(tk, _)| tk < horizon).unwrap_or(true) {
        segment_ends.push((horizon, false));
    }

    for (te, is_impulse) in segment_ends {
        // integrate flow over (t, te]
        while t < te {
            let remaining = te - t;
            let h = if remaining <= dt * (1.0 + 1e-9) {
                remaining
            } else {
                dt
            };
            let k1 = hist.last().unwrap().dx.clone();
            let x_new = rk4(model, &params, &hist, t, h, &x, &k1, &bound)?;
            let t_new = if (remaining - h).abs() <= 1e-12 * te.abs().max(1.0) {
                te
            } else {
                t + h
            };
            let norm = x_new.norm();
            if !norm.is_finite() || norm > cfg.blowup_cap {
                return Err(SimError::Diverged {
                    t_last: t,
                    norm,
                    cap: cfg.blowup_cap,
                });
            }
            let f_new = eval_flow(model, &params, &hist, t, t_new - t, &x_new, &bound)?;
            let row = HistSample::new(t_new, x_new.clone(), f_new);
            hist.push(row.clone());
            traj.push_sample(row);
            t = t_new;
            x = x_new;
            // trim the live buffer, keeping the bracketing row at or before
            // the cutoff so the window edge stays interpolable
            let cutoff = t - keep_span;
            let at_or_before = hist.partition_point(|s| s.t <= cutoff);
            if at_or_before > 1 {
                hist.drain(..at_or_before - 1);
            }
        }

        if !is_impulse {
            continue;
        }

        // --- impulse at te ------------------------------------------------
        let pre = x.clone();
        match (&kind, &mut *jump_rule) {
            (JumpKind::Pointwise, JumpRule::FromModel) => {
                let post = model_jump_pointwise(model, &params, &hist, te, &pre, &bound)?;
                finish_pointwise_jump(
                    model, &params, &bound, &mut hist, &mut traj, te, pre, &post,
                )?;
                x = post;
            }
            (JumpKind::Pointwise, JumpRule::Custom(cb)) => {
                let post = cb(&JumpContext {
                    t: te,
                    left: &pre,
                    model,
                    inputs: &bound,
                })?;
                if !post.same_shape(&pre) {
                    return Err(SimError::Jump {
                        t: te,
                        msg: "custom jump returned a state of wrong shape".into(),
                    });
                }
                finish_pointwise_jump(
                    model, &params, &bound, &mut hist, &mut traj, te, pre, &post,
                )?;
                x = post;
            }
            (JumpKind::History, JumpRule::FromModel) => {
                // restrict the live buffer to the window (te - θ, te]
                let from = hist.partition_point(|s| s.t < te - theta - 1e-12);
                let window: Vec<HistSample> = hist[from..].to_vec();
                let new_window = model_jump_history(model, &params, &window, te, &bound)?;
                let post = new_window.last().unwrap().x.clone();
                traj.push_event(JumpEvent {
                    t: te,
                    pre: pre.clone(),
                    post: post.clone(),
                });
                traj.push_history_event(HistoryJumpEvent {
                    t: te,
                    pre: window,
                    post: new_window.clone(),
                });
                hist = new_window;
                // forward derivative at the new right end
                let f_post = eval_flow(model, &params, &hist, te, 0.0, &post, &bound)?;
                if let Some(last) = hist.last_mut() {
                    last.dx = f_post.clone();
                }
                traj.push_sample(HistSample::new(te, post.clone(), f_post));
                x = post;
            }
            (JumpKind::History, JumpRule::Custom(_)) => {
                return Err(SimError::Jump {
                    t: te,
                    msg: "custom jump rules support pointwise jumps only".into(),
                });
            }
        }

        let norm = x.norm();
        if !norm.is_finite() || norm > cfg.blowup_cap {
            return Err(SimError::Diverged {
                t_last: te,
                norm,
                cap: cfg.blowup_cap,
            });
        }
    }

    Ok(traj)
}

fn finish_pointwise_jump(
    model: &ModelAst,
    params: &[f64],
    bound: &BoundInputs,
    hist: &mut Vec<HistSample>,
    traj: &mut Trajectory,
    te: f64,
    pre: BlockVector,
    post: &BlockVector,
) -> Result<(), SimError> {
    traj.push_event(JumpEvent {
        t: te,
        pre,
        post: post.clone(),
    });
    let f_post = eval_flow(model, params, hist, te, 0.0, post, bound)?;
    let row = HistSample::new(te, post.clone(), f_post);
    hist.push(row.clone());
    traj.push_sample(row);
    Ok(())
}
