//! The explicit ISS envelope check: along a simulated trajectory, assert
//!
//! `|x(t)| ≤ max{ β(‖ξ‖, t - t0), γ̂(‖u‖_{[t0, t]}) }`
//!
//! with `β(r, τ) = ψ1^{-1}(e^{μ - λτ} ψ2(r))` and
//! `γ̂(r) = ψ1^{-1}(e^{μ + |d|} γ_u(r))`, built from a certificate's
//! sandwich bounds and rates. `‖ξ‖` is the sup norm of the initial
//! condition (the whole initial history for a delay system).

use crate::dsl::ModelAst;
use crate::kfun::KFunction;
use crate::lyapunov::cert::CompositeCertificate;
use crate::lyapunov::check::CheckError;
use crate::sim::InputBank;
use crate::state::Trajectory;

/// Outcome of the envelope sweep. `worst_margin >= 0` means the bound held
/// at every sample.
#[derive(Debug, Clone)]
pub struct EnvelopeReport {
    pub holds: bool,
    pub worst_margin: f64,
    pub worst_t: f64,
    pub checked: usize,
    pub xi_norm: f64,
}

/// Sweep the trajectory against the envelope built from `(ψ1, ψ2, d, γ_u)`.
pub fn iss_envelope(
    psi1: &KFunction,
    psi2: &KFunction,
    d: f64,
    gamma_u: Option<&KFunction>,
    mu: f64,
    lambda: f64,
    traj: &Trajectory,
    model: &ModelAst,
    inputs: &InputBank,
) -> Result<EnvelopeReport, CheckError> {
    if traj.dims() != model.dims().as_slice() {
        return Err(CheckError::Unsupported(format!(
            "trajectory has block dims {:?}, model needs {:?}",
            traj.dims(),
            model.dims()
        )));
    }
    let bound = inputs.bind(model)?;
    // ‖ξ‖: sup over the initial segment (just |x(t0)| when delay-free)
    let xi_norm = traj
        .samples()
        .iter()
        .filter(|s| s.t <= traj.t0)
        .map(|s| s.x.norm())
        .fold(0.0, f64::max);
    let psi2_xi = psi2
        .eval(xi_norm)
        .map_err(|e| CheckError::Unsupported(e.to_string()))?;

    let mut usup = 0.0f64;
    let mut worst_margin = f64::INFINITY;
    let mut worst_t = traj.t0;
    let mut checked = 0usize;
    let mut gamma_branch = 0.0f64;
    let mut last_usup = -1.0f64;
    for s in traj.samples() {
        if s.t < traj.t0 {
            continue;
        }
        usup = usup.max(bound.full_norm_at(model, s.t, false));
        checked += 1;
        let beta = psi1
            .invert((mu - lambda * (s.t - traj.t0)).exp() * psi2_xi)
            .map_err(|e| CheckError::Unsupported(e.to_string()))?;
        if usup != last_usup {
            let g = match gamma_u {
                Some(f) => f
                    .eval(usup)
                    .map_err(|e| CheckError::Unsupported(e.to_string()))?,
                None => 0.0,
            };
            gamma_branch = psi1
                .invert((mu + d.abs()).exp() * g)
                .map_err(|e| CheckError::Unsupported(e.to_string()))?;
            last_usup = usup;
        }
        let envelope = beta.max(gamma_branch);
        let margin = envelope - s.x.norm();
        if margin < worst_margin {
            worst_margin = margin;
            worst_t = s.t;
        }
    }
    Ok(EnvelopeReport {
        holds: worst_margin >= 0.0,
        worst_margin,
        worst_t,
        checked,
        xi_norm,
    })
}

/// Envelope check against a composite certificate (requires composite
/// sandwich bounds).
pub fn iss_envelope_composite(
    comp: &CompositeCertificate,
    mu: f64,
    lambda: f64,
    traj: &Trajectory,
    model: &ModelAst,
    inputs: &InputBank,
) -> Result<EnvelopeReport, CheckError> {
    let psi1 = comp.psi1.as_ref().ok_or_else(|| {
        CheckError::Unsupported("composite certificate has no sandwich bounds".into())
    })?;
    let psi2 = comp.psi2.as_ref().ok_or_else(|| {
        CheckError::Unsupported("composite certificate has no sandwich bounds".into())
    })?;
    iss_envelope(
        psi1,
        psi2,
        comp.d,
        comp.gamma_u.as_ref(),
        mu,
        lambda,
        traj,
        model,
        inputs,
    )
}
