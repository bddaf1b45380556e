//! Composite-certificate construction for interconnections with linear
//! internal gains, and the full stability gate combining small-gain,
//! dwell-time, and flavor-specific conditions.
//!
//! Given per-subsystem certificates and the gain matrix Γ, the composite
//! function is `V(x) = max_i V_i(x_i)/s_i` with `s` a scaling vector:
//!
//! - delay-free and Krasovskii flavors need `Γ(s) < s`; the composite rates
//!   are `c = min_i c_i` and
//!   `d = min{ min_i d_i, min_{i≠j} -ln((s_j/s_i) γ_ij) }`;
//! - the Razumikhin flavor needs `Γ(s) < min{e^{-μ}, e^{-d-μ}} s` with
//!   `d = min_i d_i`, keeps that `d` as the composite jump rate, and adds
//!   the linear delay gain `γ_t = max{e^d, 1}·max_{k,j} (s_j/s_k) γ_kj`
//!   (which then satisfies the gate `γ_t < e^{-μ}` by construction).
//!
//! The aggregated external gain is
//! `γ_u(r) = max{e^d, 1}·max_i γ_i^u(r)/s_i`, closed in the K-function
//! algebra when the parts share a kind.

use super::cert::{CertificateSet, CompositeCertificate, Flavor};
use crate::dwell::{adt_supremum, in_class, DwellParams, ImpulseSequence};
use crate::kfun::KFunction;
use crate::smallgain::{cycle_condition, find_scaling_vector, max_cycle_mean, GainMatrix};
use crate::state::RateCoeffs;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error(
        "small-gain condition fails: max cycle mean {rho} >= {alpha}; \
         worst cycle {cycle:?} with gain product {product}"
    )]
    SmallGain {
        alpha: f64,
        rho: f64,
        cycle: Vec<usize>,
        product: f64,
    },
    #[error("razumikhin composition requires mu")]
    MuRequired,
    #[error("cannot aggregate external gains: {0}")]
    GainKind(String),
    #[error("{0}")]
    Dim(String),
}

/// Build the composite certificate of an interconnection.
pub fn compose(
    certs: &CertificateSet,
    gamma: &GainMatrix,
    flavor: Flavor,
    mu: Option<f64>,
) -> Result<CompositeCertificate, ComposeError> {
    let n = certs.n();
    if gamma.n() != n {
        return Err(ComposeError::Dim(format!(
            "{n} certificates, {}x{} gain matrix",
            gamma.n(),
            gamma.n()
        )));
    }
    if n == 0 {
        return Err(ComposeError::Dim("no subsystems".into()));
    }
    let d_min = certs.subs.iter().map(|s| s.d).fold(f64::INFINITY, f64::min);
    let alpha = match flavor {
        Flavor::DelayFree | Flavor::Krasovskii => 1.0,
        Flavor::Razumikhin => {
            let mu = mu.ok_or(ComposeError::MuRequired)?;
            (-mu).exp().min((-d_min - mu).exp())
        }
    };
    let rho = max_cycle_mean(gamma);
    let s = match find_scaling_vector(gamma, alpha) {
        Some(s) => s,
        None => {
            let rep = cycle_condition(gamma, alpha);
            return Err(ComposeError::SmallGain {
                alpha,
                rho,
                cycle: rep.worst_cycle,
                product: rep.worst_value,
            });
        }
    };

    let c = certs.subs.iter().map(|sc| sc.c).fold(f64::INFINITY, f64::min);
    let d = match flavor {
        Flavor::Razumikhin => d_min,
        Flavor::DelayFree | Flavor::Krasovskii => {
            let mut d = d_min;
            for i in 0..n {
                for j in 0..n {
                    let g = gamma.get(i, j);
                    if g > 0.0 {
                        d = d.min(-((s[j] / s[i]) * g).ln());
                    }
                }
            }
            d
        }
    };

    let factor = d.exp().max(1.0);
    let gamma_u = aggregate_gain_u(certs, &s, factor)?;
    let gamma_t = match flavor {
        Flavor::Razumikhin => {
            let mut coeff = 0.0f64;
            for k in 0..n {
                for j in 0..n {
                    coeff = coeff.max((s[j] / s[k]) * gamma.get(k, j));
                }
            }
            Some(factor * coeff)
        }
        _ => None,
    };

    let (psi1, psi2) = composite_sandwich(certs, &s);

    Ok(CompositeCertificate {
        flavor,
        s,
        parts: certs.clone(),
        c,
        d,
        gamma_u,
        gamma_t,
        psi1,
        psi2,
    })
}

fn aggregate_gain_u(
    certs: &CertificateSet,
    s: &[f64],
    factor: f64,
) -> Result<Option<KFunction>, ComposeError> {
    let mut slope: Option<f64> = None;
    let mut power: Option<(f64, f64)> = None;
    let mut any = false;
    for (i, sc) in certs.subs.iter().enumerate() {
        match &sc.gain_u {
            None => {}
            Some(KFunction::Linear { slope: k }) => {
                any = true;
                let v = k / s[i];
                slope = Some(slope.map(|cur: f64| cur.max(v)).unwrap_or(v));
            }
            Some(KFunction::Power { coeff, exponent }) => {
                any = true;
                match power {
                    None => power = Some((coeff / s[i], *exponent)),
                    Some((cur, e)) if e == *exponent => {
                        power = Some((cur.max(coeff / s[i]), e));
                    }
                    Some((_, e)) => {
                        return Err(ComposeError::GainKind(format!(
                            "power exponents differ ({e} vs {exponent})"
                        )))
                    }
                }
            }
            Some(other) => {
                return Err(ComposeError::GainKind(format!(
                    "unsupported external-gain kind {other}"
                )))
            }
        }
    }
    if !any {
        return Ok(None);
    }
    match (slope, power) {
        (Some(k), None) => Ok(Some(KFunction::linear(factor * k))),
        (None, Some((coeff, e))) => Ok(Some(KFunction::power(factor * coeff, e))),
        (Some(_), Some(_)) => Err(ComposeError::GainKind(
            "mixed linear and power external gains".into(),
        )),
        (None, None) => Ok(None),
    }
}

// V ≥ max_i ψ1_i(|x_i|)/s_i ≥ min_j(σ1_j/s_j)·max_i|x_i| and
// max_i|x_i| ≥ |x|/√n; V ≤ max_i σ2_i|x_i|/s_i ≤ max_i(σ2_i/s_i)·|x|.
// Only available when every part's bounds are linear.
fn composite_sandwich(
    certs: &CertificateSet,
    s: &[f64],
) -> (Option<KFunction>, Option<KFunction>) {
    let n = certs.n() as f64;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (i, sc) in certs.subs.iter().enumerate() {
        match (&sc.psi1, &sc.psi2) {
            (KFunction::Linear { slope: a }, KFunction::Linear { slope: b }) => {
                lo = lo.min(a / s[i]);
                hi = hi.max(b / s[i]);
            }
            _ => return (None, None),
        }
    }
    (
        Some(KFunction::linear(lo / n.sqrt())),
        Some(KFunction::linear(hi)),
    )
}

/// One sub-condition of the stability gate.
#[derive(Debug, Clone)]
pub struct GateCheck {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

/// Structured verdict of the full stability gate: composite construction,
/// dwell-time class membership, and the flavor-specific side conditions.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub flavor: Flavor,
    pub mu: f64,
    pub lambda: f64,
    /// Max cycle geometric mean of the gain matrix.
    pub rho: f64,
    pub checks: Vec<GateCheck>,
    pub composite: Option<CompositeCertificate>,
    pub iss: bool,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "flavor: {}", self.flavor)?;
        writeln!(f, "mu: {:?}", self.mu)?;
        writeln!(f, "lambda: {:?}", self.lambda)?;
        writeln!(f, "rho: {:?}", self.rho)?;
        if let Some(comp) = &self.composite {
            writeln!(f, "c: {:?}", comp.c)?;
            writeln!(f, "d: {:?}", comp.d)?;
            let s: Vec<String> = comp.s.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(f, "s: [{}]", s.join(", "))?;
            if let Some(gt) = comp.gamma_t {
                writeln!(f, "gamma_t: {:?}", gt)?;
            }
        }
        for c in &self.checks {
            writeln!(
                f,
                "check {}: {} ({})",
                c.name,
                if c.ok { "pass" } else { "FAIL" },
                c.detail
            )?;
        }
        write!(f, "iss: {}", self.iss)
    }
}

/// Run the full gate: compose the certificates, test the impulse sequence
/// against the dwell-time class for the composite rates, and apply the
/// flavor side conditions. `d = 0` routes to the flow-decay requirement
/// `c > 0` (jumps that neither expand nor contract cannot destabilize).
pub fn theorem_gate(
    certs: &CertificateSet,
    gamma: &GainMatrix,
    seq: &ImpulseSequence,
    flavor: Flavor,
    mu: f64,
    lambda: f64,
) -> Verdict {
    let mut checks = Vec::new();
    let rho = max_cycle_mean(gamma);
    let composite = match compose(certs, gamma, flavor, Some(mu)) {
        Ok(c) => {
            let alpha_desc = match flavor {
                Flavor::Razumikhin => format!(
                    "rho {rho:.6} < alpha {:.6}",
                    (-mu).exp().min((-(c.d) - mu).exp())
                ),
                _ => format!("rho {rho:.6} < 1"),
            };
            checks.push(GateCheck {
                name: "small-gain",
                ok: true,
                detail: alpha_desc,
            });
            Some(c)
        }
        Err(e) => {
            checks.push(GateCheck {
                name: "small-gain",
                ok: false,
                detail: e.to_string(),
            });
            None
        }
    };

    let mut iss = composite.is_some();
    if let Some(comp) = &composite {
        let rates = RateCoeffs::new(comp.c, comp.d);
        match DwellParams::new(mu, lambda) {
            Ok(params) => {
                let sup = adt_supremum(seq, comp.c, comp.d, lambda).unwrap_or(f64::INFINITY);
                let ok = in_class(seq, params, rates);
                checks.push(GateCheck {
                    name: "dwell-time",
                    ok,
                    detail: format!("sup {sup:.6} vs mu {mu:?}"),
                });
                iss &= ok;
            }
            Err(e) => {
                checks.push(GateCheck {
                    name: "dwell-time",
                    ok: false,
                    detail: e.to_string(),
                });
                iss = false;
            }
        }

        if comp.d != 0.0 {
            checks.push(GateCheck {
                name: "jump-rate",
                ok: true,
                detail: format!("d = {:?} != 0", comp.d),
            });
        } else {
            let ok = comp.c > 0.0;
            checks.push(GateCheck {
                name: "jump-rate",
                ok,
                detail: format!(
                    "d = 0: jumps do not destabilize, flow decay c = {:?} must be > 0",
                    comp.c
                ),
            });
            iss &= ok;
        }

        if flavor == Flavor::Razumikhin {
            let coeff = comp.gamma_t.unwrap_or(f64::INFINITY);
            let bound = (-mu).exp();
            let ok = coeff < bound;
            checks.push(GateCheck {
                name: "razumikhin-gain",
                ok,
                detail: format!("gamma_t {coeff:.6} vs e^(-mu) {bound:.6}"),
            });
            iss &= ok;
        }
    }

    Verdict {
        flavor,
        mu,
        lambda,
        rho,
        checks,
        composite,
        iss,
    }
}
