//! Networked estimation benchmark: `n` coupled scalar nodes with constant
//! inter-node delays share one measurement channel. At each send instant
//! exactly one node's estimate is refreshed, so that node's estimation
//! error resets to the measurement noise while every other error is
//! untouched. The error dynamics form an impulsive delay system
//!
//! ```text
//! e_i'(t) = -a_i e_i(t) + Σ_{j≠i} a_ij e_j(t - τ_ij) - b_i ν_i
//! e_i(t_k) = μ_i(t_k)⁻  if node i is served, else unchanged
//! ```
//!
//! with disturbances `ν` and measurement noise `μ`. `V_i = |e_i|` is an
//! exponential Razumikhin certificate for node `i` with rates
//! `c_i = ε_i`, `d_i = 0`, internal gains `γ_ij = n|a_ij|/(a_i - ε_i)`,
//! and external gain `max{1, n|b_i|/(a_i - ε_i)}·r` (over `u_i = (μ_i, ν_i)`).
//!
//! The channel scheduler is either greedy largest-error-first ("TOD-like",
//! ties to the lowest index) or round-robin.

use crate::dsl::{parse_expr_str, parse_model, DslError, ModelAst};
use crate::dwell::{generate_sequence, DwellError, SequenceKind};
use crate::kfun::KFunction;
use crate::lyapunov::{
    iss_envelope_composite, theorem_gate, CertError, CertificateSet, CheckError, EnvelopeReport,
    Flavor, SubsystemCert, Verdict,
};
use crate::sim::{simulate_with, InitialState, InputBank, JumpRule, Signal, SimConfig, SimError};
use crate::smallgain::{cycle_condition, CycleReport, GainError, GainMatrix};
use crate::state::{RateCoeffs, Trajectory};
use crate::svg::{line_chart, SvgError};
use crate::BlockVector;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NcsError {
    #[error("parameter error: {0}")]
    Param(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error(transparent)]
    Cert(#[from] CertError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error(transparent)]
    Dwell(#[from] DwellError),
    #[error(transparent)]
    Gain(#[from] GainError),
    #[error(transparent)]
    Svg(#[from] SvgError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Channel-access scheduling rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Serve the node with the largest current error (lowest index wins
    /// ties).
    Tod,
    /// Cyclic service.
    RoundRobin,
}

impl std::str::FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tod" => Ok(Protocol::Tod),
            "rr" | "roundrobin" => Ok(Protocol::RoundRobin),
            other => Err(format!("unknown protocol '{other}'")),
        }
    }
}

/// Scheduler state carried across impulses.
#[derive(Debug, Clone, Default)]
pub struct ProtocolState {
    pub last_served: Option<usize>,
}

/// Benchmark parameters.
#[derive(Debug, Clone)]
pub struct NcsParams {
    pub n: usize,
    /// Self-rates `a_i > 0`.
    pub a: Vec<f64>,
    /// Coupling matrix `a_ij` (diagonal ignored).
    pub coupling: Vec<Vec<f64>>,
    /// Disturbance gains `b_i`.
    pub b: Vec<f64>,
    /// Delays `τ_ij ≥ 0`.
    pub tau: Vec<Vec<f64>>,
    /// Decay margins `ε_i ∈ [0, a_i)`.
    pub eps: Vec<f64>,
    pub protocol: Protocol,
    pub send_period: f64,
    /// Disturbance signals `ν_i`.
    pub nu: Vec<Signal>,
    /// Measurement-noise signals `μ_i`.
    pub noise: Vec<Signal>,
    /// Constant initial error history on `[-θ, 0]`.
    pub xi: Vec<f64>,
}

impl Default for NcsParams {
    /// The three-node benchmark configuration: constant disturbance
    /// `ν ≡ 2` and per-node sinusoidal measurement noise
    /// `μ_i(t) = 0.05 sin(13 i t)` (bounded, deterministic, distinct per
    /// node).
    fn default() -> Self {
        NcsParams {
            n: 3,
            a: vec![1.0, 2.0, 0.5],
            coupling: vec![
                vec![0.0, 0.25, 0.25],
                vec![0.7, 0.0, 0.65],
                vec![0.15, 0.1, 0.0],
            ],
            b: vec![1.0, 1.0, 1.0],
            tau: vec![vec![0.03; 3]; 3],
            eps: vec![0.1, 0.1, 0.1],
            protocol: Protocol::Tod,
            send_period: 0.1,
            nu: vec![Signal::Constant(2.0); 3],
            noise: (0..3)
                .map(|i| Signal::Sine {
                    amplitude: 0.05,
                    omega: 13.0 * (i + 1) as f64,
                    phase: 0.0,
                })
                .collect(),
            xi: vec![0.9, 0.3, 0.6],
        }
    }
}

/// Derived per-node certificate data.
#[derive(Debug, Clone)]
pub struct NcsGains {
    pub gamma: GainMatrix,
    /// External-input gain slopes `max{1, n|b_i|/(a_i - ε_i)}`.
    pub gain_u: Vec<f64>,
    pub rates: Vec<RateCoeffs>,
}

impl NcsParams {
    fn check_shapes(&self) -> Result<(), NcsError> {
        let n = self.n;
        if n == 0 {
            return Err(NcsError::Param("n must be >= 1".into()));
        }
        let lens = [
            self.a.len(),
            self.b.len(),
            self.eps.len(),
            self.nu.len(),
            self.noise.len(),
            self.xi.len(),
            self.coupling.len(),
            self.tau.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(NcsError::Param(format!(
                "parameter vectors must all have length n = {n}"
            )));
        }
        if self.coupling.iter().any(|r| r.len() != n) || self.tau.iter().any(|r| r.len() != n) {
            return Err(NcsError::Param("coupling/tau must be n x n".into()));
        }
        if !(self.send_period > 0.0) {
            return Err(NcsError::Param(format!(
                "send period {} must be > 0",
                self.send_period
            )));
        }
        for i in 0..n {
            if !(self.a[i] > 0.0) {
                return Err(NcsError::Param(format!("a[{i}] = {} must be > 0", self.a[i])));
            }
            if !(self.eps[i] >= 0.0 && self.eps[i] < self.a[i]) {
                return Err(NcsError::Param(format!(
                    "eps[{i}] = {} must lie in [0, a_{i} = {})",
                    self.eps[i], self.a[i]
                )));
            }
            for j in 0..n {
                if self.tau[i][j] < 0.0 {
                    return Err(NcsError::Param(format!(
                        "tau[{i}][{j}] = {} must be >= 0",
                        self.tau[i][j]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn theta(&self) -> f64 {
        let mut t: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j && self.coupling[i][j] != 0.0 {
                    t = t.max(self.tau[i][j]);
                }
            }
        }
        t
    }

    /// The per-node certificate ingredients:
    /// `γ_ij = n|a_ij|/(a_i - ε_i)`, external slope
    /// `max{1, n|b_i|/(a_i - ε_i)}`, rates `(c_i, d_i) = (ε_i, 0)`.
    pub fn derive_gains(&self) -> Result<NcsGains, NcsError> {
        self.check_shapes()?;
        let n = self.n;
        let nf = n as f64;
        let mut rows = vec![vec![0.0; n]; n];
        let mut gain_u = Vec::with_capacity(n);
        let mut rates = Vec::with_capacity(n);
        for i in 0..n {
            let margin = self.a[i] - self.eps[i];
            for j in 0..n {
                if i != j {
                    rows[i][j] = nf * self.coupling[i][j].abs() / margin;
                }
            }
            gain_u.push((nf * self.b[i].abs() / margin).max(1.0));
            rates.push(RateCoeffs::new(self.eps[i], 0.0));
        }
        Ok(NcsGains {
            gamma: GainMatrix::from_rows(rows)?,
            gain_u,
            rates,
        })
    }

    fn ref_name(&self, base: &str, i: usize) -> String {
        if self.n == 1 {
            base.to_string()
        } else {
            format!("{base}{}", i + 1)
        }
    }

    /// Build the error-dynamics model (flows only; the reset is the
    /// protocol's job and enters as a custom jump rule).
    pub fn build_model(&self) -> Result<ModelAst, NcsError> {
        self.check_shapes()?;
        let theta = self.theta();
        let mut text = String::from("model ncs {\n");
        if theta > 0.0 {
            let _ = writeln!(text, "  theta {theta:?};");
        }
        let _ = writeln!(text, "  input nu[{}];", self.n);
        let _ = writeln!(text, "  input mu[{}];", self.n);
        for i in 0..self.n {
            let mut rhs = format!("-{:?}*e{}", self.a[i], i + 1);
            for j in 0..self.n {
                let aij = self.coupling[i][j];
                if i != j && aij != 0.0 {
                    let delay = self.tau[i][j];
                    if delay > 0.0 {
                        let _ = write!(rhs, " + {aij:?}*e{}@{delay:?}", j + 1);
                    } else {
                        let _ = write!(rhs, " + {aij:?}*e{}", j + 1);
                    }
                }
            }
            if self.b[i] != 0.0 {
                let _ = write!(rhs, " - {:?}*{}", self.b[i], self.ref_name("nu", i));
            }
            let _ = writeln!(text, "  sub s{0}[1] {{ flow e{0}' = {rhs}; }}", i + 1);
        }
        text.push('}');
        Ok(parse_model(&text)?)
    }

    /// The per-node certificates `V_i = |e_i|` with the derived gains.
    pub fn certificates(&self, model: &ModelAst) -> Result<CertificateSet, NcsError> {
        let gains = self.derive_gains()?;
        let mu_idx = model
            .input_index("mu")
            .ok_or_else(|| NcsError::Param("model lacks the 'mu' input".into()))?;
        let nu_idx = model
            .input_index("nu")
            .ok_or_else(|| NcsError::Param("model lacks the 'nu' input".into()))?;
        let mut subs = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let v = parse_expr_str(&format!("abs(e{})", i + 1), model)?;
            let mut row = vec![0.0; self.n];
            for j in 0..self.n {
                row[j] = gains.gamma.get(i, j);
            }
            subs.push(SubsystemCert {
                name: model.subsystems[i].name.clone(),
                v,
                c: gains.rates[i].c,
                d: gains.rates[i].d,
                gains: row,
                gain_u: Some(KFunction::linear(gains.gain_u[i])),
                psi1: KFunction::identity(),
                psi2: KFunction::identity(),
                input_comps: Some(vec![(mu_idx, i), (nu_idx, i)]),
            });
        }
        Ok(CertificateSet { subs })
    }

    pub fn input_bank(&self) -> InputBank {
        InputBank::new()
            .with("nu", self.nu.clone())
            .with("mu", self.noise.clone())
    }

    /// Scheduler decision from the left-limit error vector.
    pub fn protocol_select(&self, state: &mut ProtocolState, e_left: &BlockVector) -> usize {
        let serve = match self.protocol {
            Protocol::Tod => {
                let mut best = 0usize;
                let mut best_v = f64::NEG_INFINITY;
                for i in 0..self.n {
                    let v = e_left.block_norm(i);
                    if v > best_v {
                        best_v = v;
                        best = i;
                    }
                }
                best
            }
            Protocol::RoundRobin => match state.last_served {
                Some(k) => (k + 1) % self.n,
                None => 0,
            },
        };
        state.last_served = Some(serve);
        serve
    }

    /// Simulate the protocolled error system; returns the trajectory and
    /// the Euclidean-norm series of the error.
    pub fn simulate_error_system(
        &self,
        horizon: f64,
        dt: f64,
    ) -> Result<(Trajectory, Vec<(f64, f64)>), NcsError> {
        let model = self.build_model()?;
        let seq = generate_sequence(
            SequenceKind::Periodic {
                period: self.send_period,
            },
            0.0,
            horizon,
        )?;
        let init = InitialState::ConstantHistory(BlockVector::from_blocks(
            self.xi.iter().map(|&v| vec![v]).collect(),
        )
        .map_err(|e| NcsError::Param(e.to_string()))?);
        let cfg = SimConfig::new(dt, horizon).with_inputs(self.input_bank());
        let mu_idx = model.input_index("mu").expect("declared above");
        let mut state = ProtocolState::default();
        let mut jump = |ctx: &crate::sim::JumpContext<'_>| -> Result<BlockVector, SimError> {
            let serve = self.protocol_select(&mut state, ctx.left);
            let mut post = ctx.left.clone();
            post.set_block_comp(serve, 0, ctx.inputs.eval_left(mu_idx, serve, ctx.t));
            Ok(post)
        };
        let traj = simulate_with(&model, &seq, &init, &cfg, &mut JumpRule::Custom(&mut jump))?;
        let norms = traj.norm_series();
        Ok((traj, norms))
    }
}

/// Options for the end-to-end pipeline.
#[derive(Debug, Clone)]
pub struct ReproduceOptions {
    pub out_dir: PathBuf,
    pub horizon: f64,
    pub dt: f64,
    pub mu: f64,
    pub lambda: f64,
}

impl ReproduceOptions {
    pub fn new(out_dir: impl AsRef<Path>) -> Self {
        Self {
            out_dir: out_dir.as_ref().to_path_buf(),
            horizon: 6.0,
            dt: 1e-3,
            mu: 0.01,
            // half the slowest flow margin
            lambda: 0.05,
        }
    }
}

/// Everything the pipeline produced.
#[derive(Debug)]
pub struct ReproduceReport {
    pub gains: NcsGains,
    pub cycle: CycleReport,
    pub verdict: Verdict,
    pub envelope: Option<EnvelopeReport>,
    pub norm_series: Vec<(f64, f64)>,
    pub files: Vec<PathBuf>,
}

/// Run the whole pipeline: derive gains, check the cycle condition, gate
/// the composite certificate, simulate under the protocol, check the ISS
/// envelope, and write `gains.txt`, `verdict.txt`, `traj.csv`, `norm.csv`,
/// and `norm.svg` into the output directory.
pub fn reproduce(params: &NcsParams, opts: &ReproduceOptions) -> Result<ReproduceReport, NcsError> {
    let gains = params.derive_gains()?;
    let cycle = cycle_condition(&gains.gamma, 1.0);
    let model = params.build_model()?;
    let certs = params.certificates(&model)?;
    let seq = generate_sequence(
        SequenceKind::Periodic {
            period: params.send_period,
        },
        0.0,
        opts.horizon,
    )?;
    let verdict = theorem_gate(
        &certs,
        &gains.gamma,
        &seq,
        Flavor::Razumikhin,
        opts.mu,
        opts.lambda,
    );
    let (traj, norm_series) = params.simulate_error_system(opts.horizon, opts.dt)?;
    let bank = params.input_bank();
    let envelope = match &verdict.composite {
        Some(comp) => Some(iss_envelope_composite(
            comp,
            opts.mu,
            opts.lambda,
            &traj,
            &model,
            &bank,
        )?),
        None => None,
    };

    std::fs::create_dir_all(&opts.out_dir)?;
    let mut files = Vec::new();

    let gains_path = opts.out_dir.join("gains.txt");
    std::fs::write(&gains_path, format_gains(&gains))?;
    files.push(gains_path);

    let verdict_path = opts.out_dir.join("verdict.txt");
    let mut vtext = String::new();
    let _ = writeln!(vtext, "{verdict}");
    let _ = writeln!(
        vtext,
        "cycle_ok: {} worst_cycle: {} worst_product: {:.5} rho: {:.5}",
        cycle.ok,
        format_cycle(&cycle.worst_cycle),
        cycle.worst_value,
        cycle.rho
    );
    if let Some(env) = &envelope {
        let _ = writeln!(
            vtext,
            "envelope_holds: {} worst_margin: {:.6} at_t: {:.3} xi_norm: {:.5}",
            env.holds, env.worst_margin, env.worst_t, env.xi_norm
        );
    }
    std::fs::write(&verdict_path, vtext)?;
    files.push(verdict_path);

    let traj_path = opts.out_dir.join("traj.csv");
    std::fs::write(&traj_path, traj.to_csv())?;
    files.push(traj_path);

    let norm_path = opts.out_dir.join("norm.csv");
    let mut ncsv = String::from("t,norm\n");
    for (t, v) in &norm_series {
        let _ = writeln!(ncsv, "{t:?},{v:?}");
    }
    std::fs::write(&norm_path, ncsv)?;
    files.push(norm_path);

    let svg_path = opts.out_dir.join("norm.svg");
    std::fs::write(
        &svg_path,
        line_chart(&norm_series, "Euclidean norm of the estimation error")?,
    )?;
    files.push(svg_path);

    Ok(ReproduceReport {
        gains,
        cycle,
        verdict,
        envelope,
        norm_series,
        files,
    })
}

fn format_cycle(cycle: &[usize]) -> String {
    if cycle.is_empty() {
        return "-".into();
    }
    let mut ids: Vec<String> = cycle.iter().map(|i| (i + 1).to_string()).collect();
    ids.push((cycle[0] + 1).to_string());
    ids.join("->")
}

fn format_gains(g: &NcsGains) -> String {
    let n = g.gamma.n();
    let mut out = String::from("gamma:\n");
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{:.4}", g.gamma.get(i, j))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    let gu: Vec<String> = g.gain_u.iter().map(|v| format!("{v:.4}")).collect();
    let _ = writeln!(out, "gainU: {}", gu.join(" "));
    let c: Vec<String> = g.rates.iter().map(|r| format!("{:.4}", r.c)).collect();
    let d: Vec<String> = g.rates.iter().map(|r| format!("{:.4}", r.d)).collect();
    let _ = writeln!(out, "c: {}", c.join(" "));
    let _ = writeln!(out, "d: {}", d.join(" "));
    out
}
