//! Certificate data model and the certificate file format.
//!
//! A per-subsystem exponential certificate carries a scalar expression `V`
//! over that subsystem's states, flow/jump rate coefficients `c` and `d`,
//! linear internal gain coefficients toward every other subsystem, an
//! optional external-input gain, and the sandwich bounds `ψ1, ψ2` with
//! `ψ1(|x|) ≤ V(x) ≤ ψ2(|x|)`.
//!
//! Text format (one block per subsystem, `#` comments):
//!
//! ```text
//! cert sub1 {
//!   V = abs(x1);
//!   c = 0.1;
//!   d = 0;
//!   gain sub2 = 0.8333;
//!   gainU = linear:1.0;      # or zero
//!   psi1 = id;               # id | linear:S | power:C:E
//!   psi2 = id;
//!   inputs = mu1, nu1;       # optional: components of this node's input
//! }
//! ```
//!
//! When `inputs` is omitted the subsystem's external input is taken to be
//! the full declared input vector.

use crate::dsl::{eval_pointwise, parse_expr_str, EvalError, Expr, ModelAst};
use crate::kfun::{KFunction, KfunError};
use crate::sim::BoundInputs;
use crate::smallgain::{GainError, GainMatrix};
use crate::BlockVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CertError {
    #[error("certificate parse: {0}")]
    Parse(String),
    #[error("unknown subsystem '{0}' in certificate file")]
    UnknownSub(String),
    #[error("subsystem '{0}' has no certificate block")]
    MissingSub(String),
    #[error(transparent)]
    Kfun(#[from] KfunError),
    #[error(transparent)]
    Gain(#[from] GainError),
    #[error("certificate invalid: {0}")]
    Invalid(String),
}

/// Exponential ISS-Lyapunov data for one subsystem.
#[derive(Debug, Clone)]
pub struct SubsystemCert {
    pub name: String,
    /// Scalar expression over this subsystem's own states (delay-free).
    pub v: Expr,
    /// Flow decay rate.
    pub c: f64,
    /// Jump rate (contraction factor `e^{-d}`).
    pub d: f64,
    /// Linear internal gains toward each subsystem (`gains[i] = 0` for
    /// itself).
    pub gains: Vec<f64>,
    /// External-input gain (`None` = no external input enters).
    pub gain_u: Option<KFunction>,
    pub psi1: KFunction,
    pub psi2: KFunction,
    /// Input components forming this node's external input `u_i`
    /// (`None` = every declared input component).
    pub input_comps: Option<Vec<(usize, usize)>>,
}

/// Per-subsystem certificates aligned with a model's subsystem list.
#[derive(Debug, Clone)]
pub struct CertificateSet {
    pub subs: Vec<SubsystemCert>,
}

impl CertificateSet {
    pub fn n(&self) -> usize {
        self.subs.len()
    }

    /// Internal gains as a matrix (the subject of small-gain analysis).
    pub fn gain_matrix(&self) -> Result<GainMatrix, CertError> {
        let rows: Vec<Vec<f64>> = self.subs.iter().map(|s| s.gains.clone()).collect();
        Ok(GainMatrix::from_rows(rows)?)
    }

    /// Evaluate `V_i` at a full-state point.
    pub fn eval_v(
        &self,
        i: usize,
        model: &ModelAst,
        x: &BlockVector,
        params: &[f64],
    ) -> Result<f64, EvalError> {
        eval_pointwise(&self.subs[i].v, model, x, params)
    }

    /// `|u_i(t)|`: Euclidean norm of the subsystem's input components.
    pub fn input_norm(
        &self,
        i: usize,
        model: &ModelAst,
        bound: &BoundInputs,
        t: f64,
        left: bool,
    ) -> f64 {
        match &self.subs[i].input_comps {
            Some(comps) => bound.norm_at(comps, t, left),
            None => bound.full_norm_at(model, t, left),
        }
    }

    /// Value of the external gain at `r` (0 when absent).
    pub fn gain_u_at(&self, i: usize, r: f64) -> f64 {
        match &self.subs[i].gain_u {
            Some(f) => f.eval(r).unwrap_or(f64::INFINITY),
            None => 0.0,
        }
    }

    /// Numeric consistency diagnostics: `V(0) = 0`, positivity off zero,
    /// and the sandwich bounds, each on a deterministic grid of states.
    pub fn validate(&self, model: &ModelAst) -> Vec<String> {
        let mut out = Vec::new();
        if self.subs.len() != model.subsystems.len() {
            out.push(format!(
                "{} certificates for {} subsystems",
                self.subs.len(),
                model.subsystems.len()
            ));
            return out;
        }
        let params = model.param_values();
        let dims = model.dims();
        let n = self.subs.len();
        for (i, sc) in self.subs.iter().enumerate() {
            if sc.gains.len() != n {
                out.push(format!(
                    "{}: {} gains for {} subsystems",
                    sc.name,
                    sc.gains.len(),
                    n
                ));
                continue;
            }
            if sc.gains[i] != 0.0 {
                out.push(format!("{}: self-gain must be 0", sc.name));
            }
            if sc.gains.iter().any(|g| *g < 0.0) {
                out.push(format!("{}: negative internal gain", sc.name));
            }
            if sc.v.has_delayed_ref() {
                out.push(format!("{}: V must be delay-free", sc.name));
            }
            let zero = BlockVector::zeros(dims.clone());
            match eval_pointwise(&sc.v, model, &zero, &params) {
                Ok(v0) if v0.abs() <= 1e-9 => {}
                Ok(v0) => out.push(format!("{}: V(0) = {v0}, expected 0", sc.name)),
                Err(e) => out.push(format!("{}: V(0) evaluation failed: {e}", sc.name)),
            }
            // positivity and sandwich on a radial grid over this block
            let m = dims[i];
            'grid: for dir in 0..2 * m {
                let comp = dir / 2;
                let sgn = if dir % 2 == 0 { 1.0 } else { -1.0 };
                for k in -3..=3 {
                    let r = 10f64.powi(k);
                    let mut x = BlockVector::zeros(dims.clone());
                    x.set_block_comp(i, comp, sgn * r);
                    let v = match eval_pointwise(&sc.v, model, &x, &params) {
                        Ok(v) => v,
                        Err(e) => {
                            out.push(format!("{}: V evaluation failed: {e}", sc.name));
                            break 'grid;
                        }
                    };
                    if v <= 0.0 {
                        out.push(format!(
                            "{}: V not positive at |x_{comp}| = {r} (V = {v})",
                            sc.name
                        ));
                        break 'grid;
                    }
                    let lo = sc.psi1.eval(r).unwrap_or(f64::INFINITY);
                    let hi = sc.psi2.eval(r).unwrap_or(0.0);
                    let tol = 1e-9 * v.abs().max(1.0);
                    if v < lo - tol || v > hi + tol {
                        out.push(format!(
                            "{}: sandwich violated at |x_{}| = {r}: psi1 = {lo}, V = {v}, psi2 = {hi}",
                            sc.name, comp
                        ));
                        break 'grid;
                    }
                }
            }
        }
        out
    }

    /// Parse a certificate file against a model. Blocks may appear in any
    /// order; every subsystem needs exactly one block.
    pub fn parse(text: &str, model: &ModelAst) -> Result<Self, CertError> {
        let stripped: String = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .collect::<Vec<_>>()
            .join("\n");
        let mut subs: Vec<Option<SubsystemCert>> = vec![None; model.subsystems.len()];
        let mut rest = stripped.trim();
        while !rest.is_empty() {
            let Some(pos) = rest.find("cert") else {
                if rest.trim().is_empty() {
                    break;
                }
                return Err(CertError::Parse(format!(
                    "unexpected content: '{}'",
                    rest.trim().chars().take(30).collect::<String>()
                )));
            };
            rest = rest[pos + 4..].trim_start();
            let brace = rest
                .find('{')
                .ok_or_else(|| CertError::Parse("missing '{' after cert name".into()))?;
            let name = rest[..brace].trim().to_string();
            let close = rest
                .find('}')
                .ok_or_else(|| CertError::Parse(format!("cert {name}: missing '}}'")))?;
            let body = &rest[brace + 1..close];
            rest = rest[close + 1..].trim_start();

            let si = model
                .sub_index(&name)
                .ok_or_else(|| CertError::UnknownSub(name.clone()))?;
            let cert = parse_block(&name, si, body, model)?;
            if subs[si].is_some() {
                return Err(CertError::Parse(format!("duplicate cert block '{name}'")));
            }
            subs[si] = Some(cert);
        }
        let mut out = Vec::with_capacity(subs.len());
        for (i, s) in subs.into_iter().enumerate() {
            match s {
                Some(c) => out.push(c),
                None => return Err(CertError::MissingSub(model.subsystems[i].name.clone())),
            }
        }
        Ok(Self { subs: out })
    }
}

fn parse_kfun_field(name: &str, val: &str) -> Result<KFunction, CertError> {
    KFunction::parse(val).map_err(|e| CertError::Parse(format!("{name}: {e}")))
}

fn parse_block(
    name: &str,
    sub_index: usize,
    body: &str,
    model: &ModelAst,
) -> Result<SubsystemCert, CertError> {
    let n = model.subsystems.len();
    let mut v: Option<Expr> = None;
    let mut c: Option<f64> = None;
    let mut d: Option<f64> = None;
    let mut gains = vec![0.0; n];
    let mut gain_u: Option<KFunction> = None;
    let mut psi1 = KFunction::identity();
    let mut psi2 = KFunction::identity();
    let mut input_comps: Option<Vec<(usize, usize)>> = None;

    for field in body.split(';') {
        let field = field.trim();
        if field.is_empty() {
            continue;
        }
        let (key, val) = field
            .split_once('=')
            .ok_or_else(|| CertError::Parse(format!("{name}: field '{field}' needs '='")))?;
        let key = key.trim();
        let val = val.trim();
        match key {
            "V" => {
                let e = parse_expr_str(val, model)
                    .map_err(|e| CertError::Parse(format!("{name}: V: {e}")))?;
                v = Some(e);
            }
            "c" => {
                c = Some(
                    val.parse()
                        .map_err(|e| CertError::Parse(format!("{name}: c: {e}")))?,
                )
            }
            "d" => {
                d = Some(
                    val.parse()
                        .map_err(|e| CertError::Parse(format!("{name}: d: {e}")))?,
                )
            }
            "gainU" => {
                gain_u = if val == "zero" {
                    None
                } else {
                    Some(parse_kfun_field(name, val)?)
                };
            }
            "psi1" => psi1 = parse_kfun_field(name, val)?,
            "psi2" => psi2 = parse_kfun_field(name, val)?,
            "inputs" => {
                let mut comps = Vec::new();
                for item in val.split(',') {
                    let item = item.trim();
                    comps.push(resolve_input_name(item, model).ok_or_else(|| {
                        CertError::Parse(format!("{name}: unknown input component '{item}'"))
                    })?);
                }
                input_comps = Some(comps);
            }
            _ if key.starts_with("gain ") || key.starts_with("gain\t") => {
                let target = key[4..].trim();
                let ti = model
                    .sub_index(target)
                    .ok_or_else(|| CertError::UnknownSub(target.to_string()))?;
                if ti == sub_index {
                    return Err(CertError::Parse(format!(
                        "{name}: self-gain entry not allowed"
                    )));
                }
                gains[ti] = val
                    .parse()
                    .map_err(|e| CertError::Parse(format!("{name}: gain {target}: {e}")))?;
            }
            _ => return Err(CertError::Parse(format!("{name}: unknown field '{key}'"))),
        }
    }

    let v = v.ok_or_else(|| CertError::Parse(format!("{name}: missing V")))?;
    let c = c.ok_or_else(|| CertError::Parse(format!("{name}: missing c")))?;
    let d = d.ok_or_else(|| CertError::Parse(format!("{name}: missing d")))?;
    Ok(SubsystemCert {
        name: name.to_string(),
        v,
        c,
        d,
        gains,
        gain_u,
        psi1,
        psi2,
        input_comps,
    })
}

fn resolve_input_name(name: &str, model: &ModelAst) -> Option<(usize, usize)> {
    for (i, decl) in model.inputs.iter().enumerate() {
        if decl.dim == 1 && decl.name == name {
            return Some((i, 0));
        }
        if decl.dim >= 2 {
            if let Some(idx) = name.strip_prefix(&decl.name) {
                if let Ok(k) = idx.parse::<usize>() {
                    if k >= 1 && k <= decl.dim {
                        return Some((i, k - 1));
                    }
                }
            }
        }
    }
    None
}

/// Which composition (and trajectory check) discipline a composite
/// certificate follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    DelayFree,
    Razumikhin,
    Krasovskii,
}

impl std::fmt::Display for Flavor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Flavor::DelayFree => write!(f, "delayfree"),
            Flavor::Razumikhin => write!(f, "razumikhin"),
            Flavor::Krasovskii => write!(f, "krasovskii"),
        }
    }
}

impl std::str::FromStr for Flavor {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "delayfree" => Ok(Flavor::DelayFree),
            "razumikhin" => Ok(Flavor::Razumikhin),
            "krasovskii" => Ok(Flavor::Krasovskii),
            other => Err(format!("unknown flavor '{other}'")),
        }
    }
}

/// The scaled-max certificate `V(x) = max_i V_i(x_i)/s_i` of an
/// interconnection, with aggregated rates and gains.
#[derive(Debug, Clone)]
pub struct CompositeCertificate {
    pub flavor: Flavor,
    /// Scaling vector with `Γ(s) < α s`.
    pub s: Vec<f64>,
    pub parts: CertificateSet,
    pub c: f64,
    pub d: f64,
    pub gamma_u: Option<KFunction>,
    /// Razumikhin delay-gain coefficient (linear), when applicable.
    pub gamma_t: Option<f64>,
    /// Composite sandwich bounds (available when every part's bounds are
    /// linear).
    pub psi1: Option<KFunction>,
    pub psi2: Option<KFunction>,
}

/// Value of the composite function at a state, with the attaining block
/// and a tie flag (ties within relative width 1e-9 are nonsmooth points
/// that trajectory checks skip).
#[derive(Debug, Clone, Copy)]
pub struct CompositeValue {
    pub value: f64,
    pub argmax: usize,
    pub tie: bool,
}

impl CompositeCertificate {
    pub fn eval(
        &self,
        model: &ModelAst,
        x: &BlockVector,
        params: &[f64],
    ) -> Result<CompositeValue, EvalError> {
        let mut best = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        let mut arg = 0;
        for (i, sc) in self.parts.subs.iter().enumerate() {
            let vi = eval_pointwise(&sc.v, model, x, params)? / self.s[i];
            if vi > best {
                second = best;
                best = vi;
                arg = i;
            } else if vi > second {
                second = vi;
            }
        }
        let tie = second > best - 1e-9 * best.abs().max(1e-300);
        Ok(CompositeValue {
            value: best,
            argmax: arg,
            tie,
        })
    }

    pub fn gamma_u_at(&self, r: f64) -> f64 {
        match &self.gamma_u {
            Some(f) => f.eval(r).unwrap_or(f64::INFINITY),
            None => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_model;

    fn model() -> ModelAst {
        parse_model(
            "model m { theta 0.03; input nu[3]; input mu[3];
               sub s1[1] { flow e1' = -1*e1 + 0.25*e2@0.03 + 0.25*e3@0.03 - nu1; }
               sub s2[1] { flow e2' = -2*e2 + 0.7*e1@0.03 + 0.65*e3@0.03 - nu2; }
               sub s3[1] { flow e3' = -0.5*e3 + 0.15*e1@0.03 + 0.1*e2@0.03 - nu3; } }",
        )
        .unwrap()
    }

    const CERTS: &str = "
# benchmark certificates
cert s1 { V = abs(e1); c = 0.1; d = 0; gain s2 = 0.8333; gain s3 = 0.8333;
          gainU = linear:3.3334; psi1 = id; psi2 = id; inputs = mu1, nu1; }
cert s2 { V = abs(e2); c = 0.1; d = 0; gain s1 = 1.1053; gain s3 = 1.0263;
          gainU = linear:1.579; psi1 = id; psi2 = id; inputs = mu2, nu2; }
cert s3 { V = abs(e3); c = 0.1; d = 0; gain s1 = 1.125; gain s2 = 0.75;
          gainU = linear:7.5; psi1 = id; psi2 = id; inputs = mu3, nu3; }
";

    #[test]
    fn parse_and_validate_certificate_file() {
        let m = model();
        let certs = CertificateSet::parse(CERTS, &m).unwrap();
        assert_eq!(certs.n(), 3);
        assert_eq!(certs.subs[0].gains, vec![0.0, 0.8333, 0.8333]);
        assert_eq!(certs.subs[1].c, 0.1);
        assert_eq!(certs.subs[2].input_comps, Some(vec![(1, 2), (0, 2)]));
        assert_eq!(certs.validate(&m), Vec::<String>::new());
        let gm = certs.gain_matrix().unwrap();
        assert_eq!(gm.get(1, 0), 1.1053);
    }

    #[test]
    fn missing_block_and_unknown_sub_errors() {
        let m = model();
        let partial = "cert s1 { V = abs(e1); c = 0.1; d = 0; }";
        assert!(matches!(
            CertificateSet::parse(partial, &m),
            Err(CertError::MissingSub(_))
        ));
        let bogus = "cert nope { V = abs(e1); c = 0.1; d = 0; }";
        assert!(matches!(
            CertificateSet::parse(bogus, &m),
            Err(CertError::UnknownSub(_))
        ));
    }

    #[test]
    fn validation_flags_broken_sandwich() {
        let m = model();
        let bad = CERTS.replace("cert s1 { V = abs(e1)", "cert s1 { V = 2*abs(e1)");
        let certs = CertificateSet::parse(&bad, &m).unwrap();
        let diags = certs.validate(&m);
        assert!(diags.iter().any(|d| d.contains("sandwich")), "{diags:?}");
    }

    #[test]
    fn composite_eval_reports_argmax_and_tie() {
        let m = model();
        let certs = CertificateSet::parse(CERTS, &m).unwrap();
        let comp = CompositeCertificate {
            flavor: Flavor::Razumikhin,
            s: vec![1.0, 2.0, 1.0],
            parts: certs,
            c: 0.1,
            d: 0.0,
            gamma_u: Some(KFunction::linear(7.5)),
            gamma_t: Some(0.98),
            psi1: None,
            psi2: None,
        };
        let params = m.param_values();
        let x = BlockVector::from_blocks(vec![vec![0.5], vec![2.0], vec![0.2]]).unwrap();
        let cv = comp.eval(&m, &x, &params).unwrap();
        assert_eq!(cv.argmax, 1);
        assert!((cv.value - 1.0).abs() < 1e-12);
        assert!(!cv.tie);
        let x = BlockVector::from_blocks(vec![vec![0.5], vec![1.0], vec![0.2]]).unwrap();
        let cv = comp.eval(&m, &x, &params).unwrap();
        assert!(cv.tie);
    }
}
