//! Numerical verification of certificate implications along simulated
//! trajectories.
//!
//! The upper right-hand derivative is estimated by the one-sided forward
//! difference `(V(x(t+h)) - V(x(t)))/h` at the integration resolution; the
//! decay implication is asserted up to `tol·(1 + V)`. Checks are skipped at
//! nonsmooth points of a composite (argmax ties within relative width 1e-9)
//! and near the origin (`|x| < 1e-12`).
//!
//! Premises are evaluated with `>=`, matching the implication form: a
//! report is empty iff every sampled implication held; `premise_hits`
//! records how often the premise region was actually exercised, so a clean
//! report can be told apart from a vacuous one.

use super::cert::{CertificateSet, CompositeCertificate};
use crate::dsl::{eval_pointwise, EvalError, Expr, ModelAst};
use crate::kfun::KFunction;
use crate::sim::{InputBank, SimError};
use crate::state::{HistSample, Side, StateError, Trajectory};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Flow,
    Jump,
    RazumikhinGate,
    Sandwich,
}

impl std::fmt::Display for CheckKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CheckKind::Flow => write!(f, "flow"),
            CheckKind::Jump => write!(f, "jump"),
            CheckKind::RazumikhinGate => write!(f, "razumikhin-gate"),
            CheckKind::Sandwich => write!(f, "sandwich"),
        }
    }
}

/// One failed implication: `lhs` exceeded the tolerance-padded `rhs`, so
/// the slack `margin = rhs - lhs` is negative.
#[derive(Debug, Clone)]
pub struct Violation {
    pub t: f64,
    pub kind: CheckKind,
    pub subsystem: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct ViolationReport {
    pub tol: f64,
    /// Sample instants inspected.
    pub checked: usize,
    /// How often a premise held (the implication was live, not vacuous).
    pub premise_hits: usize,
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    fn new(tol: f64) -> Self {
        Self {
            tol,
            checked: 0,
            premise_hits: 0,
            violations: Vec::new(),
        }
    }

    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn record(&mut self, t: f64, kind: CheckKind, subsystem: Option<usize>, lhs: f64, rhs: f64) {
        if lhs > rhs {
            self.violations.push(Violation {
                t,
                kind,
                subsystem,
                lhs,
                rhs,
                margin: rhs - lhs,
            });
        }
    }
}

impl std::fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "checked: {} premise_hits: {} violations: {}",
            self.checked,
            self.premise_hits,
            self.violations.len()
        )?;
        for v in self.violations.iter().take(10) {
            writeln!(
                f,
                "  t={:.6} {} sub={} lhs={:.6e} rhs={:.6e} margin={:.3e}",
                v.t,
                v.kind,
                v.subsystem.map(|s| s.to_string()).unwrap_or_else(|| "-".into()),
                v.lhs,
                v.rhs,
                v.margin
            )?;
        }
        Ok(())
    }
}

const ZERO_BAND: f64 = 1e-12;

fn guard_dims(model: &ModelAst, traj: &Trajectory) -> Result<(), CheckError> {
    if traj.dims() != model.dims().as_slice() {
        return Err(CheckError::Unsupported(format!(
            "trajectory has block dims {:?}, model needs {:?}",
            traj.dims(),
            model.dims()
        )));
    }
    Ok(())
}

// Per-sample values of every subsystem's V along the trajectory.
fn v_series(
    certs: &CertificateSet,
    model: &ModelAst,
    traj: &Trajectory,
    params: &[f64],
) -> Result<Vec<Vec<f64>>, CheckError> {
    let mut out = vec![Vec::with_capacity(traj.samples().len()); certs.n()];
    for s in traj.samples() {
        for (i, col) in out.iter_mut().enumerate() {
            col.push(certs.eval_v(i, model, &s.x, params)?);
        }
    }
    Ok(out)
}

// Sliding-window suprema: out[i] = max over samples j <= i within
// `times[i] - theta <= times[j]`.
fn window_sups(times: &[f64], values: &[f64], theta: f64) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    let mut dq: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    for i in 0..values.len() {
        while let Some(&b) = dq.back() {
            if values[b] <= values[i] {
                dq.pop_back();
            } else {
                break;
            }
        }
        dq.push_back(i);
        let cutoff = times[i] - theta - 1e-9 * times[i].abs().max(1.0);
        while let Some(&f) = dq.front() {
            if times[f] < cutoff {
                dq.pop_front();
            } else {
                break;
            }
        }
        out[i] = values[*dq.front().unwrap()];
    }
    out
}

// Indices of consecutive sample pairs usable for a forward difference
// (strictly increasing time, first sample at or after t0).
fn flow_pairs(traj: &Trajectory) -> Vec<(usize, usize)> {
    let s = traj.samples();
    let mut out = Vec::new();
    for i in 0..s.len().saturating_sub(1) {
        if s[i].t >= traj.t0 && s[i + 1].t > s[i].t {
            out.push((i, i + 1));
        }
    }
    out
}

// Index of the left-limit row of each recorded event.
fn event_rows(traj: &Trajectory) -> Vec<usize> {
    let s = traj.samples();
    let mut out = Vec::new();
    let mut from = 0usize;
    for ev in traj.events() {
        let mut idx = None;
        for (k, smp) in s.iter().enumerate().skip(from) {
            if smp.t == ev.t && smp.x == ev.pre {
                idx = Some(k);
                break;
            }
            if smp.t > ev.t {
                break;
            }
        }
        if let Some(k) = idx {
            from = k;
            out.push(k);
        } else {
            // identity jumps store equal rows; fall back to the first row
            // at the event time
            let k = s.partition_point(|smp| smp.t < ev.t);
            out.push(k);
            from = k;
        }
    }
    out
}

/// Flow implication of each per-subsystem certificate (delay-free
/// premise): wherever `V_i ≥ max{max_j γ_ij V_j, γ_i^u(|u_i|)}`, the
/// forward-difference derivative must not exceed `-c_i V_i` up to
/// tolerance.
pub fn check_flow(
    certs: &CertificateSet,
    model: &ModelAst,
    traj: &Trajectory,
    inputs: &InputBank,
    tol: f64,
) -> Result<ViolationReport, CheckError> {
    guard_dims(model, traj)?;
    let bound = inputs.bind(model)?;
    let params = model.param_values();
    let vs = v_series(certs, model, traj, &params)?;
    let samples = traj.samples();
    let mut rep = ViolationReport::new(tol);
    for (i0, i1) in flow_pairs(traj) {
        let t = samples[i0].t;
        let h = samples[i1].t - t;
        rep.checked += 1;
        for (i, sc) in certs.subs.iter().enumerate() {
            let vi = vs[i][i0];
            if vi < ZERO_BAND {
                continue;
            }
            let gain_dom = (0..certs.n())
                .map(|j| sc.gains[j] * vs[j][i0])
                .fold(0.0, f64::max);
            let u_norm = certs.input_norm(i, model, &bound, t, false);
            let premise = vi >= gain_dom.max(certs.gain_u_at(i, u_norm));
            if !premise {
                continue;
            }
            rep.premise_hits += 1;
            let dplus = (vs[i][i1] - vi) / h;
            let rhs = -sc.c * vi + tol * (1.0 + vi);
            rep.record(t, CheckKind::Flow, Some(i), dplus, rhs);
        }
    }
    Ok(rep)
}

/// Flow implication of a composite certificate: wherever
/// `V ≥ γ_u(|u|)`, the forward difference of `V = max_i V_i/s_i` must not
/// exceed `-c V` up to tolerance. Argmax ties and near-zero states are
/// skipped.
pub fn check_flow_composite(
    comp: &CompositeCertificate,
    model: &ModelAst,
    traj: &Trajectory,
    inputs: &InputBank,
    tol: f64,
) -> Result<ViolationReport, CheckError> {
    guard_dims(model, traj)?;
    let bound = inputs.bind(model)?;
    let params = model.param_values();
    let samples = traj.samples();
    let mut rep = ViolationReport::new(tol);
    for (i0, i1) in flow_pairs(traj) {
        let t = samples[i0].t;
        let h = samples[i1].t - t;
        rep.checked += 1;
        if samples[i0].x.norm() < ZERO_BAND {
            continue;
        }
        let cv0 = comp.eval(model, &samples[i0].x, &params)?;
        if cv0.tie {
            continue;
        }
        let u_norm = bound.full_norm_at(model, t, false);
        if cv0.value < comp.gamma_u_at(u_norm) {
            continue;
        }
        rep.premise_hits += 1;
        let cv1 = comp.eval(model, &samples[i1].x, &params)?;
        let dplus = (cv1.value - cv0.value) / h;
        let rhs = -comp.c * cv0.value + tol * (1.0 + cv0.value);
        rep.record(t, CheckKind::Flow, Some(cv0.argmax), dplus, rhs);
    }
    Ok(rep)
}

/// Jump-condition form: the gated exponential contraction, or the
/// unconditional max-form with internal gains on the right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpForm {
    Exponential,
    MaxForm,
}

/// Jump implication of each per-subsystem certificate at every recorded
/// event, from the stored pre/post values.
pub fn check_jump(
    certs: &CertificateSet,
    model: &ModelAst,
    traj: &Trajectory,
    inputs: &InputBank,
    form: JumpForm,
    tol: f64,
) -> Result<ViolationReport, CheckError> {
    guard_dims(model, traj)?;
    let bound = inputs.bind(model)?;
    let params = model.param_values();
    let mut rep = ViolationReport::new(tol);
    for ev in traj.events() {
        rep.checked += 1;
        for (i, sc) in certs.subs.iter().enumerate() {
            let vi_pre = certs.eval_v(i, model, &ev.pre, &params)?;
            let vi_post = certs.eval_v(i, model, &ev.post, &params)?;
            let u_norm = certs.input_norm(i, model, &bound, ev.t, true);
            match form {
                JumpForm::Exponential => {
                    let gain_dom = (0..certs.n())
                        .map(|j| {
                            certs
                                .eval_v(j, model, &ev.pre, &params)
                                .map(|v| sc.gains[j] * v)
                        })
                        .collect::<Result<Vec<_>, _>>()?
                        .into_iter()
                        .fold(0.0, f64::max);
                    let premise = vi_pre >= gain_dom.max(certs.gain_u_at(i, u_norm));
                    if !premise {
                        continue;
                    }
                    rep.premise_hits += 1;
                    let rhs = (-sc.d).exp() * vi_pre;
                    rep.record(
                        ev.t,
                        CheckKind::Jump,
                        Some(i),
                        vi_post,
                        rhs + tol * (1.0 + rhs),
                    );
                }
                JumpForm::MaxForm => {
                    rep.premise_hits += 1;
                    let mut rhs = (-sc.d).exp() * vi_pre;
                    for j in 0..certs.n() {
                        if sc.gains[j] > 0.0 {
                            let vj = certs.eval_v(j, model, &ev.pre, &params)?;
                            rhs = rhs.max(sc.gains[j] * vj);
                        }
                    }
                    rhs = rhs.max(certs.gain_u_at(i, u_norm));
                    rep.record(
                        ev.t,
                        CheckKind::Jump,
                        Some(i),
                        vi_post,
                        rhs + tol * (1.0 + rhs),
                    );
                }
            }
        }
    }
    Ok(rep)
}

/// Gated exponential jump contraction of a composite certificate.
pub fn check_jump_composite(
    comp: &CompositeCertificate,
    model: &ModelAst,
    traj: &Trajectory,
    inputs: &InputBank,
    tol: f64,
) -> Result<ViolationReport, CheckError> {
    guard_dims(model, traj)?;
    let bound = inputs.bind(model)?;
    let params = model.param_values();
    let mut rep = ViolationReport::new(tol);
    for ev in traj.events() {
        rep.checked += 1;
        let pre = comp.eval(model, &ev.pre, &params)?;
        let post = comp.eval(model, &ev.post, &params)?;
        let u_norm = bound.full_norm_at(model, ev.t, true);
        if pre.value < comp.gamma_u_at(u_norm) {
            continue;
        }
        rep.premise_hits += 1;
        let rhs = (-comp.d).exp() * pre.value;
        rep.record(
            ev.t,
            CheckKind::Jump,
            None,
            post.value,
            rhs + tol * (1.0 + rhs),
        );
    }
    Ok(rep)
}

/// Whether a linear delay-gain coefficient passes the Razumikhin gate
/// `γ_t(r) < e^{-μ} r`.
pub fn razumikhin_gate(gamma_t: f64, mu: f64) -> bool {
    gamma_t < (-mu).exp()
}

/// Per-subsystem Razumikhin implications along a trajectory with history:
/// the premise compares `V_i` now against windowed suprema
/// `‖V_j^t‖ = sup_{[t-θ, t]} V_j` through the linear gains, the flow must
/// then decay at rate `c_i`, and at events the unconditional max-form jump
/// bound (with window suprema) must hold.
pub fn check_razumikhin(
    certs: &CertificateSet,
    model: &ModelAst,
    traj: &Trajectory,
    inputs: &InputBank,
    tol: f64,
) -> Result<ViolationReport, CheckError> {
    guard_dims(model, traj)?;
    if !traj.history_events().is_empty() {
        return Err(CheckError::Unsupported(
            "razumikhin checks apply to pointwise-jump systems".into(),
        ));
    }
    let bound = inputs.bind(model)?;
    let params = model.param_values();
    let theta = model.theta;
    let samples = traj.samples();
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let vs = v_series(certs, model, traj, &params)?;
    let sups: Vec<Vec<f64>> = vs
        .iter()
        .map(|col| window_sups(&times, col, theta))
        .collect();
    let mut rep = ViolationReport::new(tol);

    for (i0, i1) in flow_pairs(traj) {
        let t = times[i0];
        let h = times[i1] - t;
        rep.checked += 1;
        for (i, sc) in certs.subs.iter().enumerate() {
            let vi = vs[i][i0];
            if vi < ZERO_BAND {
                continue;
            }
            let gain_dom = (0..certs.n())
                .map(|j| sc.gains[j] * sups[j][i0])
                .fold(0.0, f64::max);
            let u_norm = certs.input_norm(i, model, &bound, t, false);
            if vi < gain_dom.max(certs.gain_u_at(i, u_norm)) {
                continue;
            }
            rep.premise_hits += 1;
            let dplus = (vs[i][i1] - vi) / h;
            let rhs = -sc.c * vi + tol * (1.0 + vi);
            rep.record(t, CheckKind::Flow, Some(i), dplus, rhs);
        }
    }

    for (ev, &row) in traj.events().iter().zip(&event_rows(traj)) {
        rep.checked += 1;
        for (i, sc) in certs.subs.iter().enumerate() {
            let vi_pre = certs.eval_v(i, model, &ev.pre, &params)?;
            let vi_post = certs.eval_v(i, model, &ev.post, &params)?;
            let u_norm = certs.input_norm(i, model, &bound, ev.t, true);
            let mut rhs = (-sc.d).exp() * vi_pre;
            for j in 0..certs.n() {
                if sc.gains[j] > 0.0 {
                    rhs = rhs.max(sc.gains[j] * sups[j][row]);
                }
            }
            rhs = rhs.max(certs.gain_u_at(i, u_norm));
            rep.premise_hits += 1;
            rep.record(
                ev.t,
                CheckKind::Jump,
                Some(i),
                vi_post,
                rhs + tol * (1.0 + rhs),
            );
        }
    }
    Ok(rep)
}

/// Razumikhin implications of a composite certificate, including the gain
/// gate `γ_t < e^{-μ}`.
pub fn check_razumikhin_composite(
    comp: &CompositeCertificate,
    model: &ModelAst,
    traj: &Trajectory,
    inputs: &InputBank,
    mu: f64,
    tol: f64,
) -> Result<ViolationReport, CheckError> {
    guard_dims(model, traj)?;
    if !traj.history_events().is_empty() {
        return Err(CheckError::Unsupported(
            "razumikhin checks apply to pointwise-jump systems".into(),
        ));
    }
    let gamma_t = comp.gamma_t.ok_or_else(|| {
        CheckError::Unsupported("composite certificate carries no delay gain".into())
    })?;
    let bound = inputs.bind(model)?;
    let params = model.param_values();
    let theta = model.theta;
    let samples = traj.samples();
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let values: Vec<f64> = samples
        .iter()
        .map(|s| comp.eval(model, &s.x, &params).map(|cv| cv.value))
        .collect::<Result<_, _>>()?;
    let sups = window_sups(&times, &values, theta);
    let mut rep = ViolationReport::new(tol);

    rep.checked += 1;
    rep.record(
        traj.t0,
        CheckKind::RazumikhinGate,
        None,
        gamma_t,
        (-mu).exp(),
    );

    for (i0, i1) in flow_pairs(traj) {
        let t = times[i0];
        let h = times[i1] - t;
        rep.checked += 1;
        if samples[i0].x.norm() < ZERO_BAND {
            continue;
        }
        let cv0 = comp.eval(model, &samples[i0].x, &params)?;
        if cv0.tie {
            continue;
        }
        let u_norm = bound.full_norm_at(model, t, false);
        if cv0.value < (gamma_t * sups[i0]).max(comp.gamma_u_at(u_norm)) {
            continue;
        }
        rep.premise_hits += 1;
        let dplus = (values[i1] - cv0.value) / h;
        let rhs = -comp.c * cv0.value + tol * (1.0 + cv0.value);
        rep.record(t, CheckKind::Flow, Some(cv0.argmax), dplus, rhs);
    }

    for (ev, &row) in traj.events().iter().zip(&event_rows(traj)) {
        rep.checked += 1;
        let pre = comp.eval(model, &ev.pre, &params)?;
        let post = comp.eval(model, &ev.post, &params)?;
        let u_norm = bound.full_norm_at(model, ev.t, true);
        if pre.value < (gamma_t * sups[row]).max(comp.gamma_u_at(u_norm)) {
            continue;
        }
        rep.premise_hits += 1;
        let rhs = (-comp.d).exp() * pre.value;
        rep.record(
            ev.t,
            CheckKind::Jump,
            None,
            post.value,
            rhs + tol * (1.0 + rhs),
        );
    }
    Ok(rep)
}

/// Functional forms supported by the Krasovskii check: the supremum of a
/// pointwise expression over the window, its trapezoid integral, or the
/// expression at the window's right end.
#[derive(Debug, Clone)]
pub enum Functional {
    SupWindow(Expr),
    IntegralWindow(Expr),
    AtZero(Expr),
}

/// An exponential certificate whose `V` is a functional on the state
/// window.
#[derive(Debug, Clone)]
pub struct KrasovskiiCert {
    pub functional: Functional,
    pub c: f64,
    pub d: f64,
    pub gamma_u: Option<KFunction>,
    pub psi1: KFunction,
    pub psi2: KFunction,
}

impl KrasovskiiCert {
    fn eval_window(
        &self,
        model: &ModelAst,
        window: &[HistSample],
        params: &[f64],
    ) -> Result<f64, CheckError> {
        let expr = match &self.functional {
            Functional::SupWindow(e) | Functional::IntegralWindow(e) | Functional::AtZero(e) => e,
        };
        if expr.has_delayed_ref() {
            return Err(CheckError::Unsupported(
                "functional expressions must be pointwise (delay-free)".into(),
            ));
        }
        match &self.functional {
            Functional::AtZero(_) => {
                let last = window.last().expect("nonempty window");
                Ok(eval_pointwise(expr, model, &last.x, params)?)
            }
            Functional::SupWindow(_) => {
                let mut m = f64::NEG_INFINITY;
                for s in window {
                    m = m.max(eval_pointwise(expr, model, &s.x, params)?);
                }
                Ok(m)
            }
            Functional::IntegralWindow(_) => {
                let mut acc = 0.0;
                let mut prev: Option<(f64, f64)> = None;
                for s in window {
                    let v = eval_pointwise(expr, model, &s.x, params)?;
                    if let Some((pt, pv)) = prev {
                        acc += 0.5 * (v + pv) * (s.t - pt);
                    }
                    prev = Some((s.t, v));
                }
                Ok(acc)
            }
        }
    }

    fn gamma_u_at(&self, r: f64) -> f64 {
        match &self.gamma_u {
            Some(f) => f.eval(r).unwrap_or(f64::INFINITY),
            None => 0.0,
        }
    }
}

/// Verify a Krasovskii functional certificate along a trajectory: flow
/// decay of the functional, the sandwich `ψ1(|φ(0)|) ≤ V(φ) ≤ ψ2(|φ|_a)`
/// with the sup norm as `|·|_a`, and the jump contraction on whole windows.
///
/// Windows are evaluated at sample resolution. For trajectories of
/// whole-window jump systems the per-event replacement windows recorded by
/// the integrator are used, so the checked state is the one the system
/// actually evolved.
pub fn check_krasovskii(
    kc: &KrasovskiiCert,
    model: &ModelAst,
    traj: &Trajectory,
    inputs: &InputBank,
    tol: f64,
) -> Result<ViolationReport, CheckError> {
    guard_dims(model, traj)?;
    if traj.history_events().is_empty() {
        check_krasovskii_sliding(kc, model, traj, inputs, tol)
    } else {
        check_krasovskii_windows(kc, model, traj, inputs, tol)
    }
}

fn krasovskii_expr(kc: &KrasovskiiCert) -> Result<&Expr, CheckError> {
    let expr = match &kc.functional {
        Functional::SupWindow(e) | Functional::IntegralWindow(e) | Functional::AtZero(e) => e,
    };
    if expr.has_delayed_ref() {
        return Err(CheckError::Unsupported(
            "functional expressions must be pointwise (delay-free)".into(),
        ));
    }
    Ok(expr)
}

fn check_krasovskii_sliding(
    kc: &KrasovskiiCert,
    model: &ModelAst,
    traj: &Trajectory,
    inputs: &InputBank,
    tol: f64,
) -> Result<ViolationReport, CheckError> {
    let bound = inputs.bind(model)?;
    let params = model.param_values();
    let theta = model.theta;
    let expr = krasovskii_expr(kc)?;
    let samples = traj.samples();
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let gvals: Vec<f64> = samples
        .iter()
        .map(|s| eval_pointwise(expr, model, &s.x, &params))
        .collect::<Result<_, _>>()?;
    let norms: Vec<f64> = samples.iter().map(|s| s.x.norm()).collect();
    let sup_g = window_sups(&times, &gvals, theta);
    let sup_norm = window_sups(&times, &norms, theta);
    // prefix trapezoid for the integral form
    let mut prefix = vec![0.0; gvals.len()];
    for i in 1..gvals.len() {
        prefix[i] = prefix[i - 1] + 0.5 * (gvals[i] + gvals[i - 1]) * (times[i] - times[i - 1]);
    }
    let v_at = |i: usize| -> f64 {
        match &kc.functional {
            Functional::SupWindow(_) => sup_g[i],
            Functional::AtZero(_) => gvals[i],
            Functional::IntegralWindow(_) => {
                let cutoff = times[i] - theta - 1e-9 * times[i].abs().max(1.0);
                let j = times.partition_point(|&t| t < cutoff);
                prefix[i] - prefix[j]
            }
        }
    };

    let mut rep = ViolationReport::new(tol);
    for (i0, i1) in flow_pairs(traj) {
        let t = times[i0];
        let h = times[i1] - t;
        rep.checked += 1;
        let v0 = v_at(i0);
        let lo = kc.psi1.eval(norms[i0]).unwrap_or(f64::INFINITY);
        let hi = kc.psi2.eval(sup_norm[i0]).unwrap_or(0.0);
        rep.record(t, CheckKind::Sandwich, None, lo, v0 + tol * (1.0 + v0));
        rep.record(t, CheckKind::Sandwich, None, v0, hi + tol * (1.0 + hi));
        let u_norm = bound.full_norm_at(model, t, false);
        if v0 < kc.gamma_u_at(u_norm) || v0 < ZERO_BAND {
            continue;
        }
        rep.premise_hits += 1;
        let dplus = (v_at(i1) - v0) / h;
        let rhs = -kc.c * v0 + tol * (1.0 + v0);
        rep.record(t, CheckKind::Flow, None, dplus, rhs);
    }

    for (ev, &row) in traj.events().iter().zip(&event_rows(traj)) {
        rep.checked += 1;
        let post_row = if row + 1 < samples.len() && samples[row + 1].t == ev.t {
            row + 1
        } else {
            row
        };
        let v_pre = v_at(row);
        let v_post = v_at(post_row);
        let u_norm = bound.full_norm_at(model, ev.t, true);
        if v_pre < kc.gamma_u_at(u_norm) {
            continue;
        }
        rep.premise_hits += 1;
        let rhs = (-kc.d).exp() * v_pre;
        rep.record(ev.t, CheckKind::Jump, None, v_post, rhs + tol * (1.0 + rhs));
    }
    Ok(rep)
}

fn check_krasovskii_windows(
    kc: &KrasovskiiCert,
    model: &ModelAst,
    traj: &Trajectory,
    inputs: &InputBank,
    tol: f64,
) -> Result<ViolationReport, CheckError> {
    let bound = inputs.bind(model)?;
    let params = model.param_values();
    let theta = model.theta;
    let mut rep = ViolationReport::new(tol);

    let samples = traj.samples();
    for (i0, i1) in flow_pairs(traj) {
        let t = samples[i0].t;
        let h = samples[i1].t - t;
        rep.checked += 1;
        let w0 = traj.window_at(t, theta, Side::Right)?;
        let v0 = kc.eval_window(model, w0.samples(), &params)?;
        let phi0 = w0.right_value().norm();
        let lo = kc.psi1.eval(phi0).unwrap_or(f64::INFINITY);
        let hi = kc.psi2.eval(w0.sup_norm()).unwrap_or(0.0);
        rep.record(t, CheckKind::Sandwich, None, lo, v0 + tol * (1.0 + v0));
        rep.record(t, CheckKind::Sandwich, None, v0, hi + tol * (1.0 + hi));
        let u_norm = bound.full_norm_at(model, t, false);
        if v0 < kc.gamma_u_at(u_norm) || v0 < ZERO_BAND {
            continue;
        }
        rep.premise_hits += 1;
        let w1 = traj.window_at(samples[i1].t, theta, Side::Right)?;
        let v1 = kc.eval_window(model, w1.samples(), &params)?;
        let dplus = (v1 - v0) / h;
        let rhs = -kc.c * v0 + tol * (1.0 + v0);
        rep.record(t, CheckKind::Flow, None, dplus, rhs);
    }

    for ev in traj.events() {
        rep.checked += 1;
        let pre = traj.window_at(ev.t, theta, Side::Left)?;
        let post = traj.window_at(ev.t, theta, Side::Right)?;
        let v_pre = kc.eval_window(model, pre.samples(), &params)?;
        let v_post = kc.eval_window(model, post.samples(), &params)?;
        let u_norm = bound.full_norm_at(model, ev.t, true);
        if v_pre < kc.gamma_u_at(u_norm) {
            continue;
        }
        rep.premise_hits += 1;
        let rhs = (-kc.d).exp() * v_pre;
        rep.record(
            ev.t,
            CheckKind::Jump,
            None,
            v_post,
            rhs + tol * (1.0 + rhs),
        );
    }
    Ok(rep)
}
