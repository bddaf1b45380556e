//! Ready-made example systems with known certificates.

use crate::dsl::{parse_expr_str, parse_model, ModelAst};
use crate::kfun::KFunction;
use crate::lyapunov::{CertificateSet, SubsystemCert};
use std::f64::consts::E;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("{0}")]
    Param(String),
}

/// Two coupled scalar subsystems with quadratic and square-root
/// cross-coupling and amplifying jumps:
///
/// ```text
/// x1' = -x1 + x2^2          x1 -> e·x1 at impulses
/// x2' = -x2 + 0.5·sqrt(|x1|) x2 -> e·x2 at impulses
/// ```
///
/// With `V1 = |x1|` and `V2 = |x2|` the natural coupling gains are
/// nonlinear (`r^2` and `sqrt(r)`); squaring the second coordinate — using
/// `W2 = x2^2/a^2` with `a` in the feasibility interval — turns both
/// internal gains linear, so the scaled-max composition applies. The
/// composite then has flow rate `c = min{ε1, 2 ε2}` and jump rate
/// `d = -2` (the squared coordinate doubles the jump's log-factor, and the
/// coupling terms stay subunit for `a` inside the interval).
///
/// Feasibility requires `(1 - ε1)(1 - ε2)^2 > 1/4`; the rate-optimal
/// margin split is `ε1 = 2 ε2`.
#[derive(Debug, Clone)]
pub struct NonlinearPair {
    pub eps1: f64,
    pub eps2: f64,
    /// Squaring scale, inside `(1/(2(1-ε2)), sqrt(1-ε1))`.
    pub a: f64,
}

impl NonlinearPair {
    /// Margin-optimal configuration `ε1 = 2 ε2` with `a` at the interval
    /// midpoint.
    pub fn new(eps2: f64) -> Result<Self, SampleError> {
        Self::with_margins(2.0 * eps2, eps2)
    }

    pub fn with_margins(eps1: f64, eps2: f64) -> Result<Self, SampleError> {
        if !(0.0 < eps1 && eps1 < 1.0 && 0.0 < eps2 && eps2 < 1.0) {
            return Err(SampleError::Param(format!(
                "margins must lie in (0,1): eps1={eps1}, eps2={eps2}"
            )));
        }
        let (lo, hi) = Self::interval(eps1, eps2);
        if lo >= hi {
            return Err(SampleError::Param(format!(
                "feasibility interval ({lo}, {hi}) empty: \
                 (1-eps1)(1-eps2)^2 = {} must exceed 1/4",
                Self::product(eps1, eps2)
            )));
        }
        Ok(Self {
            eps1,
            eps2,
            a: 0.5 * (lo + hi),
        })
    }

    /// `(1-ε1)(1-ε2)^2`, the quantity that must exceed 1/4.
    pub fn product(eps1: f64, eps2: f64) -> f64 {
        (1.0 - eps1) * (1.0 - eps2) * (1.0 - eps2)
    }

    pub fn feasibility_product(&self) -> f64 {
        Self::product(self.eps1, self.eps2)
    }

    /// Admissible interval for the squaring scale `a`.
    pub fn interval(eps1: f64, eps2: f64) -> (f64, f64) {
        (0.5 / (1.0 - eps2), (1.0 - eps1).sqrt())
    }

    pub fn model(&self) -> ModelAst {
        let text = format!(
            "model pair {{
  sub a[1] {{ flow x1' = -x1 + x2^2; jump point x1 = {e:?}*x1; }}
  sub b[1] {{ flow x2' = -x2 + 0.5*sqrt(abs(x1)); jump point x2 = {e:?}*x2; }}
}}",
            e = E
        );
        parse_model(&text).expect("builtin model parses")
    }

    /// Certificates in the squared second coordinate: `V1 = |x1|`,
    /// `W2 = x2^2/a^2`, with linear internal gains
    /// `γ̃12 = a^2/(1-ε1)` and `γ̃21 = 1/(4 a^2 (1-ε2)^2)`.
    pub fn certificates(&self, model: &ModelAst) -> CertificateSet {
        let a2 = self.a * self.a;
        let g12 = a2 / (1.0 - self.eps1);
        let g21 = 1.0 / (4.0 * a2 * (1.0 - self.eps2) * (1.0 - self.eps2));
        let v2_text = format!("x2^2/{a2:?}");
        CertificateSet {
            subs: vec![
                SubsystemCert {
                    name: model.subsystems[0].name.clone(),
                    v: parse_expr_str("abs(x1)", model).expect("builtin expr"),
                    c: self.eps1,
                    d: -1.0,
                    gains: vec![0.0, g12],
                    gain_u: None,
                    psi1: KFunction::identity(),
                    psi2: KFunction::identity(),
                    input_comps: None,
                },
                SubsystemCert {
                    name: model.subsystems[1].name.clone(),
                    v: parse_expr_str(&v2_text, model).expect("builtin expr"),
                    c: 2.0 * self.eps2,
                    d: -2.0,
                    gains: vec![g21, 0.0],
                    gain_u: None,
                    psi1: KFunction::power(1.0 / a2, 2.0),
                    psi2: KFunction::power(1.0 / a2, 2.0),
                    input_comps: None,
                },
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::validate_model;
    use crate::lyapunov::{compose, Flavor};

    #[test]
    fn benchmark_margins_are_feasible_and_tight() {
        let pair = NonlinearPair::new(0.267).unwrap();
        assert!((pair.eps1 - 0.534).abs() < 1e-12);
        let p = pair.feasibility_product();
        assert!((p - 0.2504).abs() < 5e-4, "product {p}");
        assert!(p > 0.25);
        let (lo, hi) = NonlinearPair::interval(pair.eps1, pair.eps2);
        assert!(lo < pair.a && pair.a < hi);
        // pushing the margin slightly harder empties the interval
        assert!(NonlinearPair::new(0.28).is_err());
    }

    #[test]
    fn model_and_certificates_validate() {
        let pair = NonlinearPair::new(0.267).unwrap();
        let m = pair.model();
        assert_eq!(validate_model(&m), Vec::<String>::new());
        let certs = pair.certificates(&m);
        assert_eq!(certs.validate(&m), Vec::<String>::new());
    }

    #[test]
    fn composite_rates_match_the_construction() {
        let pair = NonlinearPair::new(0.267).unwrap();
        let m = pair.model();
        let certs = pair.certificates(&m);
        let gm = certs.gain_matrix().unwrap();
        // both transformed gains are strictly below one inside the interval
        assert!(gm.get(0, 1) < 1.0 && gm.get(1, 0) < 1.0);
        let comp = compose(&certs, &gm, Flavor::DelayFree, None).unwrap();
        assert!((comp.c - 0.534).abs() < 1e-12, "c = {}", comp.c);
        assert!((comp.d - (-2.0)).abs() < 1e-12, "d = {}", comp.d);
    }
}
