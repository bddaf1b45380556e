//! Comparison functions of class K: continuous, zero at zero, strictly
//! increasing. Kept as a small closed algebra (linear / power / tabulated)
//! so certificates stay serializable and invertible; no symbolic algebra.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KfunError {
    #[error("argument {0} outside domain [0, inf)")]
    NegativeArg(f64),
    #[error("argument {arg} beyond tabulated domain [0, {max}]")]
    BeyondTable { arg: f64, max: f64 },
    #[error("value {y} not attained by a bounded (tabulated) function")]
    Range { y: f64 },
    #[error("invalid definition: {0}")]
    Invalid(String),
    #[error("cannot parse K-function spec '{0}'")]
    Parse(String),
}

/// A class-K comparison function. Linear and power kinds are unbounded
/// (class K-infinity); a tabulated kind is defined on `[0, r_max]` only.
#[derive(Debug, Clone, PartialEq)]
pub enum KFunction {
    Linear { slope: f64 },
    Power { coeff: f64, exponent: f64 },
    Tabulated { points: Vec<(f64, f64)> },
}

impl KFunction {
    pub fn identity() -> Self {
        KFunction::Linear { slope: 1.0 }
    }

    pub fn linear(slope: f64) -> Self {
        KFunction::Linear { slope }
    }

    pub fn power(coeff: f64, exponent: f64) -> Self {
        KFunction::Power { coeff, exponent }
    }

    /// Check the defining properties (zero at zero, strictly increasing).
    pub fn validate(&self) -> Result<(), KfunError> {
        match self {
            KFunction::Linear { slope } => {
                if !(slope.is_finite() && *slope > 0.0) {
                    return Err(KfunError::Invalid(format!("linear slope {slope} <= 0")));
                }
            }
            KFunction::Power { coeff, exponent } => {
                if !(coeff.is_finite() && *coeff > 0.0) {
                    return Err(KfunError::Invalid(format!("power coeff {coeff} <= 0")));
                }
                if !(exponent.is_finite() && *exponent > 0.0) {
                    return Err(KfunError::Invalid(format!("power exponent {exponent} <= 0")));
                }
            }
            KFunction::Tabulated { points } => {
                if points.is_empty() {
                    return Err(KfunError::Invalid("empty table".into()));
                }
                if points[0] != (0.0, 0.0) {
                    return Err(KfunError::Invalid("table must start at (0, 0)".into()));
                }
                for w in points.windows(2) {
                    if w[1].0 <= w[0].0 || w[1].1 <= w[0].1 {
                        return Err(KfunError::Invalid(format!(
                            "table not strictly increasing at r={}",
                            w[1].0
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// True for kinds that are unbounded (class K-infinity).
    pub fn is_unbounded(&self) -> bool {
        !matches!(self, KFunction::Tabulated { .. })
    }

    pub fn eval(&self, r: f64) -> Result<f64, KfunError> {
        if r < 0.0 {
            return Err(KfunError::NegativeArg(r));
        }
        match self {
            KFunction::Linear { slope } => Ok(slope * r),
            KFunction::Power { coeff, exponent } => Ok(coeff * r.powf(*exponent)),
            KFunction::Tabulated { points } => {
                let (r_max, _) = points[points.len() - 1];
                if r > r_max {
                    return Err(KfunError::BeyondTable { arg: r, max: r_max });
                }
                let idx = points.partition_point(|p| p.0 < r);
                if idx < points.len() && points[idx].0 == r {
                    return Ok(points[idx].1);
                }
                let (r0, v0) = points[idx - 1];
                let (r1, v1) = points[idx];
                Ok(v0 + (v1 - v0) * (r - r0) / (r1 - r0))
            }
        }
    }

    /// Inverse by bisection with exponential bracket growth: returns `x`
    /// with `|f(x) - y| <= 1e-10 * max(1, y)`.
    pub fn invert(&self, y: f64) -> Result<f64, KfunError> {
        if y < 0.0 {
            return Err(KfunError::NegativeArg(y));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        let tol = 1e-10 * y.max(1.0);
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        // grow the bracket until f(hi) >= y
        let mut grow = 0;
        loop {
            match self.eval(hi) {
                Ok(v) if v >= y => break,
                Ok(_) => {}
                Err(KfunError::BeyondTable { .. }) => {
                    // bounded function: y attainable only if <= f(r_max)
                    if let KFunction::Tabulated { points } = self {
                        let (r_max, v_max) = points[points.len() - 1];
                        if v_max < y {
                            return Err(KfunError::Range { y });
                        }
                        hi = r_max;
                        break;
                    }
                    unreachable!()
                }
                Err(e) => return Err(e),
            }
            lo = hi;
            hi *= 2.0;
            grow += 1;
            if grow > 4000 {
                return Err(KfunError::Range { y });
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = self.eval(mid)?;
            if (v - y).abs() <= tol {
                return Ok(mid);
            }
            if v < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo) <= f64::EPSILON * hi.max(1.0) {
                return Ok(0.5 * (lo + hi));
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Parse a textual spec: `id`, `linear:S`, or `power:C:E`.
    pub fn parse(spec: &str) -> Result<Self, KfunError> {
        let parts: Vec<&str> = spec.trim().split(':').collect();
        let f = match parts.as_slice() {
            ["id"] => KFunction::identity(),
            ["linear", s] => KFunction::linear(
                s.parse()
                    .map_err(|_| KfunError::Parse(spec.to_string()))?,
            ),
            ["power", c, e] => KFunction::power(
                c.parse()
                    .map_err(|_| KfunError::Parse(spec.to_string()))?,
                e.parse()
                    .map_err(|_| KfunError::Parse(spec.to_string()))?,
            ),
            _ => return Err(KfunError::Parse(spec.to_string())),
        };
        f.validate()?;
        Ok(f)
    }
}

impl std::fmt::Display for KFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KFunction::Linear { slope } if *slope == 1.0 => write!(f, "id"),
            KFunction::Linear { slope } => write!(f, "linear:{slope:?}"),
            KFunction::Power { coeff, exponent } => write!(f, "power:{coeff:?}:{exponent:?}"),
            KFunction::Tabulated { points } => write!(f, "table[{} pts]", points.len()),
        }
    }
}
