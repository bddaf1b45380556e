//! Command-line front door.
//!
//! Exit codes: 0 = success / positive verdict, 1 = analysis completed with
//! a negative verdict, 2 = usage error, 3 = runtime error (divergence,
//! parse failure, I/O). Results go to stdout as `key: value` lines; bulk
//! data goes to files; diagnostics go to stderr.

use clap::{Args, Parser, Subcommand};
use impulsive_core::dsl::{parse_model, validate_model, ModelAst};
use impulsive_core::dwell::{
    adt_supremum, generate_sequence, in_class, parse_sequence_file, DwellParams, ImpulseSequence,
    SequenceKind,
};
use impulsive_core::lyapunov::{
    check_flow, check_flow_composite, check_jump, check_jump_composite, check_razumikhin,
    check_razumikhin_composite, theorem_gate, CertificateSet, Flavor, JumpForm, Verdict,
};
use impulsive_core::ncs::{reproduce, NcsParams, Protocol, ReproduceOptions};
use impulsive_core::sim::{simulate, InitialState, InputBank, Signal, SimConfig};
use impulsive_core::smallgain::{cycle_condition, find_scaling_vector, GainMatrix};
use impulsive_core::state::RateCoeffs;
use impulsive_core::svg::line_chart;
use impulsive_core::BlockVector;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "impulsive",
    version,
    about = "Simulation and input-to-state stability certification of impulsive systems"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Suppress notes on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Seed for generators without an explicit seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate a model under an impulse sequence and write the
    /// trajectory CSV.
    Simulate(SimulateArgs),
    /// Max-algebra analysis of a gain-matrix file.
    Smallgain(SmallgainArgs),
    /// Evaluate the average dwell-time condition for an impulse sequence.
    Dwell(DwellArgs),
    /// Check certificates and the stability gate for a model.
    Certify(CertifyArgs),
    /// Networked-estimation benchmark.
    #[command(subcommand)]
    Ncs(NcsCmd),
    /// Fan out simulations over a list of impulse periods.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    /// `periodic:P | poisson:R[:seedN] | file:PATH`
    #[arg(long)]
    impulses: String,
    /// Comma-separated initial state (constant initial history for delay
    /// models).
    #[arg(long)]
    init: String,
    #[arg(long)]
    horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Trajectory CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Optional SVG plot path.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Plotted series: `norm` or a state component name.
    #[arg(long, default_value = "norm")]
    series: String,
    /// Input signal NAME=SPEC with SPEC one of const:V, sine:AMP:OMEGA,
    /// steps:t0:v0,t1:v1,... (repeatable).
    #[arg(long = "input")]
    inputs: Vec<String>,
    /// Divergence cap on the state norm.
    #[arg(long, default_value_t = 1e9)]
    blowup: f64,
}

#[derive(Args)]
struct SmallgainArgs {
    /// Gain-matrix file: first line n, then n rows.
    #[arg(long)]
    gains: PathBuf,
    /// Feasibility threshold for the scaling vector.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

#[derive(Args)]
struct DwellArgs {
    /// `periodic:P | poisson:R[:seedN] | file:PATH`
    #[arg(long)]
    impulses: String,
    #[arg(long, allow_negative_numbers = true)]
    c: f64,
    #[arg(long, allow_negative_numbers = true)]
    d: f64,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    horizon: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    t0: f64,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    cert: PathBuf,
    #[arg(long)]
    impulses: String,
    #[arg(long)]
    flavor: Flavor,
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    lambda: f64,
    #[arg(long, default_value_t = 10.0)]
    horizon: f64,
    /// Also simulate from this initial state and run trajectory checks.
    #[arg(long)]
    init: Option<String>,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Tolerance of the trajectory checks.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long = "input")]
    inputs: Vec<String>,
}

#[derive(Subcommand)]
enum NcsCmd {
    /// Run the full benchmark pipeline and write its artifacts.
    Reproduce(NcsArgs),
}

#[derive(Args)]
struct NcsArgs {
    #[arg(long, default_value = "ncs-out")]
    out: PathBuf,
    #[arg(long, default_value = "tod")]
    protocol: Protocol,
    #[arg(long, default_value_t = 6.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 0.01)]
    mu: f64,
    #[arg(long, default_value_t = 0.05)]
    lambda: f64,
    #[arg(long = "send-period", default_value_t = 0.1)]
    send_period: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    init: String,
    /// Comma-separated impulse periods, one run each.
    #[arg(long)]
    periods: String,
    #[arg(long)]
    horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Output directory (per-run CSVs plus index.csv).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    threads: usize,
    #[arg(long = "input")]
    inputs: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<u8, String> {
    match cli.cmd {
        Cmd::Simulate(a) => cmd_simulate(a, cli.quiet),
        Cmd::Smallgain(a) => cmd_smallgain(a),
        Cmd::Dwell(a) => cmd_dwell(a, cli.seed),
        Cmd::Certify(a) => cmd_certify(a, cli.seed),
        Cmd::Ncs(NcsCmd::Reproduce(a)) => cmd_ncs(a, cli.quiet),
        Cmd::Sweep(a) => cmd_sweep(a, cli.quiet),
    }
}

fn read(path: &PathBuf) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn parse_impulse_spec(
    spec: &str,
    t0: f64,
    horizon: f64,
    default_seed: u64,
) -> Result<ImpulseSequence, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["periodic", p] => {
            let period: f64 = p.parse().map_err(|e| format!("period: {e}"))?;
            generate_sequence(SequenceKind::Periodic { period }, t0, horizon)
                .map_err(|e| e.to_string())
        }
        ["poisson", r] => {
            let rate: f64 = r.parse().map_err(|e| format!("rate: {e}"))?;
            generate_sequence(
                SequenceKind::Poisson {
                    rate,
                    seed: default_seed,
                },
                t0,
                horizon,
            )
            .map_err(|e| e.to_string())
        }
        ["poisson", r, s] => {
            let rate: f64 = r.parse().map_err(|e| format!("rate: {e}"))?;
            let seed: u64 = s
                .strip_prefix("seed")
                .unwrap_or(s)
                .parse()
                .map_err(|e| format!("seed: {e}"))?;
            generate_sequence(SequenceKind::Poisson { rate, seed }, t0, horizon)
                .map_err(|e| e.to_string())
        }
        ["file", path] => {
            let text =
                std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
            parse_sequence_file(&text, t0, horizon).map_err(|e| e.to_string())
        }
        _ => Err(format!(
            "cannot parse impulse spec '{spec}' (periodic:P | poisson:R[:seedN] | file:PATH)"
        )),
    }
}

fn parse_init(text: &str, model: &ModelAst) -> Result<InitialState, String> {
    let vals: Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|e| format!("--init: {e}"))?;
    if vals.len() != model.total_dim() {
        return Err(format!(
            "--init has {} components, model needs {}",
            vals.len(),
            model.total_dim()
        ));
    }
    let mut data = vals;
    let mut blocks = Vec::new();
    for d in model.dims() {
        let rest = data.split_off(d);
        blocks.push(data);
        data = rest;
    }
    let x = BlockVector::from_blocks(blocks).map_err(|e| e.to_string())?;
    Ok(if model.theta > 0.0 {
        InitialState::ConstantHistory(x)
    } else {
        InitialState::Point(x)
    })
}

fn parse_input_flags(flags: &[String], model: &ModelAst) -> Result<InputBank, String> {
    let mut per_name: std::collections::BTreeMap<String, Vec<(Option<usize>, Signal)>> =
        Default::default();
    for flag in flags {
        let (name_part, spec) = flag
            .split_once('=')
            .ok_or_else(|| format!("--input '{flag}' needs NAME=SPEC"))?;
        let signal = Signal::parse(spec).map_err(|e| e.to_string())?;
        // NAME may address one component of a vector input: e.g. nu2
        let (base, comp) = match model.input_index(name_part) {
            Some(_) => (name_part.to_string(), None),
            None => {
                let Some(decl) = model.inputs.iter().find(|d| {
                    d.dim >= 2
                        && name_part.starts_with(&d.name)
                        && name_part[d.name.len()..].parse::<usize>().is_ok()
                }) else {
                    return Err(format!("--input: unknown input '{name_part}'"));
                };
                let k: usize = name_part[decl.name.len()..].parse().unwrap();
                if k < 1 || k > decl.dim {
                    return Err(format!("--input: component {k} out of range"));
                }
                (decl.name.clone(), Some(k - 1))
            }
        };
        per_name.entry(base).or_default().push((comp, signal));
    }
    let mut bank = InputBank::new();
    for (name, entries) in per_name {
        let dim = model.inputs[model.input_index(&name).unwrap()].dim;
        let mut signals = vec![Signal::Constant(0.0); dim];
        for (comp, sig) in entries {
            match comp {
                Some(c) => signals[c] = sig,
                None => {
                    for s in signals.iter_mut() {
                        *s = sig.clone();
                    }
                }
            }
        }
        bank.set(&name, signals);
    }
    Ok(bank)
}

fn load_model(path: &PathBuf) -> Result<ModelAst, String> {
    let model = parse_model(&read(path)?).map_err(|e| e.to_string())?;
    let diags = validate_model(&model);
    if !diags.is_empty() {
        return Err(format!("model invalid: {}", diags.join("; ")));
    }
    Ok(model)
}

fn cmd_simulate(a: SimulateArgs, quiet: bool) -> Result<u8, String> {
    let model = load_model(&a.model)?;
    let seq = parse_impulse_spec(&a.impulses, 0.0, a.horizon, 0)?;
    let init = parse_init(&a.init, &model)?;
    let mut cfg = SimConfig::new(a.dt, a.horizon).with_inputs(parse_input_flags(&a.inputs, &model)?);
    cfg.blowup_cap = a.blowup;
    let traj = simulate(&model, &seq, &init, &cfg).map_err(|e| e.to_string())?;
    for w in traj.warnings() {
        eprintln!("warning: {w}");
    }
    std::fs::write(&a.out, traj.to_csv()).map_err(|e| e.to_string())?;
    if let Some(svg_path) = &a.svg {
        let series: Vec<(f64, f64)> = if a.series == "norm" {
            traj.norm_series()
        } else {
            let (sub, comp) = model
                .comp_index(&a.series)
                .ok_or_else(|| format!("--series: unknown component '{}'", a.series))?;
            traj.samples()
                .iter()
                .filter(|s| s.t >= traj.t0)
                .map(|s| (s.t, s.x.block_comp(sub, comp)))
                .collect()
        };
        let svg = line_chart(&series, &a.series).map_err(|e| e.to_string())?;
        std::fs::write(svg_path, svg).map_err(|e| e.to_string())?;
    }
    let end = traj.end_time();
    println!("samples: {}", traj.samples().len());
    println!("events: {}", traj.events().len());
    println!(
        "final_norm: {:?}",
        traj.value_at(end).map_err(|e| e.to_string())?.norm()
    );
    if !quiet {
        eprintln!("trajectory written to {}", a.out.display());
    }
    Ok(0)
}

fn cmd_smallgain(a: SmallgainArgs) -> Result<u8, String> {
    let gm = GainMatrix::parse(&read(&a.gains)?).map_err(|e| e.to_string())?;
    let rep = cycle_condition(&gm, a.alpha);
    println!("rho: {:.5}", rep.rho);
    println!("alpha: {:?}", a.alpha);
    println!("smallgain: {}", rep.ok);
    if rep.worst_cycle.is_empty() {
        println!("worst_cycle: - (acyclic)");
    } else {
        let mut ids: Vec<String> = rep.worst_cycle.iter().map(|i| (i + 1).to_string()).collect();
        ids.push((rep.worst_cycle[0] + 1).to_string());
        println!("worst_cycle: {}", ids.join("->"));
        println!("worst_product: {:.5}", rep.worst_value);
    }
    match find_scaling_vector(&gm, a.alpha) {
        Some(s) => {
            let sv: Vec<String> = s.iter().map(|v| format!("{v:.6}")).collect();
            println!("s: [{}]", sv.join(", "));
        }
        None => println!("s: infeasible"),
    }
    Ok(if rep.ok { 0 } else { 1 })
}

fn cmd_dwell(a: DwellArgs, seed: u64) -> Result<u8, String> {
    let seq = parse_impulse_spec(&a.impulses, a.t0, a.horizon, seed)?;
    let sup = adt_supremum(&seq, a.c, a.d, a.lambda).map_err(|e| e.to_string())?;
    let params = DwellParams::new(a.mu, a.lambda).map_err(|e| e.to_string())?;
    let member = in_class(&seq, params, RateCoeffs::new(a.c, a.d));
    println!("impulses: {}", seq.times().len());
    println!("sup: {sup:?}");
    println!("in_class: {member}");
    Ok(if member { 0 } else { 1 })
}

fn print_verdict(v: &Verdict) {
    println!("{v}");
}

fn cmd_certify(a: CertifyArgs, seed: u64) -> Result<u8, String> {
    let model = load_model(&a.model)?;
    let certs = CertificateSet::parse(&read(&a.cert)?, &model).map_err(|e| e.to_string())?;
    let diags = certs.validate(&model);
    if !diags.is_empty() {
        return Err(format!("certificates invalid: {}", diags.join("; ")));
    }
    let gamma = certs.gain_matrix().map_err(|e| e.to_string())?;
    let seq = parse_impulse_spec(&a.impulses, 0.0, a.horizon, seed)?;
    let verdict = theorem_gate(&certs, &gamma, &seq, a.flavor, a.mu, a.lambda);
    print_verdict(&verdict);
    let mut all_ok = verdict.iss;

    if let Some(init_text) = &a.init {
        let init = parse_init(init_text, &model)?;
        let bank = parse_input_flags(&a.inputs, &model)?;
        let cfg = SimConfig::new(a.dt, a.horizon).with_inputs(bank.clone());
        let traj = simulate(&model, &seq, &init, &cfg).map_err(|e| e.to_string())?;
        let mut report = |name: &str, rep: impulsive_core::lyapunov::ViolationReport| {
            println!(
                "trajectory {}: violations {} (checked {}, premise hits {})",
                name,
                rep.violations.len(),
                rep.checked,
                rep.premise_hits
            );
            all_ok &= rep.ok();
        };
        match a.flavor {
            Flavor::Razumikhin => {
                let rep = check_razumikhin(&certs, &model, &traj, &bank, a.tol)
                    .map_err(|e| e.to_string())?;
                report("razumikhin", rep);
                if let Some(comp) = &verdict.composite {
                    let rep = check_razumikhin_composite(comp, &model, &traj, &bank, a.mu, a.tol)
                        .map_err(|e| e.to_string())?;
                    report("razumikhin-composite", rep);
                }
            }
            Flavor::DelayFree | Flavor::Krasovskii => {
                let rep =
                    check_flow(&certs, &model, &traj, &bank, a.tol).map_err(|e| e.to_string())?;
                report("flow", rep);
                let rep = check_jump(&certs, &model, &traj, &bank, JumpForm::MaxForm, a.tol)
                    .map_err(|e| e.to_string())?;
                report("jump", rep);
                if let Some(comp) = &verdict.composite {
                    let rep = check_flow_composite(comp, &model, &traj, &bank, a.tol)
                        .map_err(|e| e.to_string())?;
                    report("flow-composite", rep);
                    let rep = check_jump_composite(comp, &model, &traj, &bank, a.tol)
                        .map_err(|e| e.to_string())?;
                    report("jump-composite", rep);
                }
            }
        }
    }
    Ok(if all_ok { 0 } else { 1 })
}

fn cmd_ncs(a: NcsArgs, quiet: bool) -> Result<u8, String> {
    let params = NcsParams {
        protocol: a.protocol,
        send_period: a.send_period,
        ..NcsParams::default()
    };
    let opts = ReproduceOptions {
        out_dir: a.out.clone(),
        horizon: a.horizon,
        dt: a.dt,
        mu: a.mu,
        lambda: a.lambda,
    };
    let report = reproduce(&params, &opts).map_err(|e| e.to_string())?;
    print_verdict(&report.verdict);
    println!(
        "cycle_ok: {} rho: {:.5} worst_product: {:.5}",
        report.cycle.ok, report.cycle.rho, report.cycle.worst_value
    );
    if let Some(env) = &report.envelope {
        println!(
            "envelope_holds: {} worst_margin: {:.6}",
            env.holds, env.worst_margin
        );
    }
    if !quiet {
        for f in &report.files {
            eprintln!("wrote {}", f.display());
        }
    }
    Ok(if report.verdict.iss { 0 } else { 1 })
}

fn cmd_sweep(a: SweepArgs, quiet: bool) -> Result<u8, String> {
    let model = load_model(&a.model)?;
    let periods: Result<Vec<f64>, _> =
        a.periods.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let periods = periods.map_err(|e| format!("--periods: {e}"))?;
    if periods.is_empty() {
        return Err("--periods is empty".into());
    }
    let init = parse_init(&a.init, &model)?;
    let bank = parse_input_flags(&a.inputs, &model)?;
    std::fs::create_dir_all(&a.out).map_err(|e| e.to_string())?;

    struct RunResult {
        period: f64,
        status: String,
        sup_norm: f64,
        final_norm: f64,
        file: String,
    }

    let threads = a.threads.max(1);
    let mut results: Vec<Option<RunResult>> = Vec::new();
    results.resize_with(periods.len(), || None);
    let results_mutex = std::sync::Mutex::new(&mut results);
    let next = std::sync::atomic::AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..threads.min(periods.len()) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if k >= periods.len() {
                    break;
                }
                let period = periods[k];
                let file = format!("run_{k:03}_period_{period}.csv");
                let out_path = a.out.join(&file);
                let run = (|| -> Result<RunResult, String> {
                    let seq =
                        generate_sequence(SequenceKind::Periodic { period }, 0.0, a.horizon)
                            .map_err(|e| e.to_string())?;
                    let cfg = SimConfig::new(a.dt, a.horizon).with_inputs(bank.clone());
                    match simulate(&model, &seq, &init, &cfg) {
                        Ok(traj) => {
                            std::fs::write(&out_path, traj.to_csv()).map_err(|e| e.to_string())?;
                            let end = traj.end_time();
                            Ok(RunResult {
                                period,
                                status: "ok".into(),
                                sup_norm: traj.sup_norm(traj.t0, end).unwrap_or(f64::NAN),
                                final_norm: traj
                                    .value_at(end)
                                    .map(|x| x.norm())
                                    .unwrap_or(f64::NAN),
                                file,
                            })
                        }
                        Err(e) => Ok(RunResult {
                            period,
                            status: format!("diverged({e})").replace(',', ";"),
                            sup_norm: f64::NAN,
                            final_norm: f64::NAN,
                            file: String::new(),
                        }),
                    }
                })();
                let mut guard = results_mutex.lock().unwrap();
                guard[k] = run.ok();
            });
        }
    });

    let mut index = String::from("period,status,sup_norm,final_norm,file\n");
    for r in results.iter().flatten() {
        index.push_str(&format!(
            "{:?},{},{:?},{:?},{}\n",
            r.period, r.status, r.sup_norm, r.final_norm, r.file
        ));
    }
    // the merged index is written last, after every worker is done
    std::fs::write(a.out.join("index.csv"), index).map_err(|e| e.to_string())?;
    if !quiet {
        eprintln!("sweep finished: {} runs in {}", periods.len(), a.out.display());
    }
    println!("runs: {}", periods.len());
    Ok(0)
}
