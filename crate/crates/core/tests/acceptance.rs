#![allow(clippy::needless_range_loop)]

//! Acceptance suite: one test per release criterion, each printing a
//! `ACCEPTANCE <n> PASS` line (visible with `--nocapture`) and enforcing
//! its runtime budget.

mod common;

use common::{brute_force_cycle_mean, enumerate_cycles};
use impulsive_core::dsl::parse_model;
use impulsive_core::dwell::{
    adt_supremum, adt_supremum_mode, generate_sequence, in_class, CountMode, DwellParams,
    ImpulseSequence, SequenceKind,
};
use impulsive_core::lyapunov::{
    check_flow, check_flow_composite, check_jump, check_jump_composite, check_razumikhin,
    compose, iss_envelope_composite, theorem_gate, Flavor, JumpForm,
};
use impulsive_core::ncs::{reproduce, NcsParams, ReproduceOptions};
use impulsive_core::samples::NonlinearPair;
use impulsive_core::sim::{simulate, InitialState, Signal, SimConfig};
use impulsive_core::smallgain::{find_scaling_vector, max_cycle_mean, GainMatrix};
use impulsive_core::state::RateCoeffs;
use impulsive_core::BlockVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn budget(start: Instant, secs: f64, what: &str) {
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < secs,
        "{what}: took {elapsed:.2}s, budget {secs}s"
    );
}

/// 1. The benchmark pipeline recomputes the published gain matrix
///    entrywise to 5e-5.
#[test]
fn acceptance_1_gain_matrix_regression() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let report = reproduce(&NcsParams::default(), &ReproduceOptions::new(dir.path())).unwrap();
    let want = [
        [0.0, 0.8333, 0.8333],
        [1.1053, 0.0, 1.0263],
        [1.1250, 0.7500, 0.0],
    ];
    for i in 0..3 {
        for j in 0..3 {
            let got = report.gains.gamma.get(i, j);
            assert!(
                (got - want[i][j]).abs() < 5e-5,
                "gamma[{i}][{j}] = {got}, want {}",
                want[i][j]
            );
        }
    }
    budget(start, 1.0, "criterion 1");
    println!("ACCEPTANCE 1 PASS: gain matrix reproduced entrywise to 5e-5");
}

/// 2. All five simple-cycle products are subunit; the max cycle mean is
///    0.98721 ± 1e-4 and matches brute-force enumeration to 1e-9 relative.
#[test]
fn acceptance_2_cycle_condition() {
    let start = Instant::now();
    let gamma = NcsParams::default().derive_gains().unwrap().gamma;
    let cycles = enumerate_cycles(&gamma);
    assert_eq!(cycles.len(), 5, "three 2-cycles and two 3-cycles");
    for (cycle, product) in &cycles {
        assert!(*product < 1.0, "cycle {cycle:?} product {product}");
    }
    let rho = max_cycle_mean(&gamma);
    let brute = brute_force_cycle_mean(&gamma);
    assert!(
        (rho - brute).abs() <= 1e-9 * brute,
        "karp {rho} vs enumeration {brute}"
    );
    assert!((rho - 0.98721).abs() < 1e-4, "rho = {rho}");
    budget(start, 1.0, "criterion 2");
    println!("ACCEPTANCE 2 PASS: five subunit cycles, rho = {rho:.5} matches enumeration");
}

/// 3. The benchmark impulse schedule satisfies the dwell-time condition
///    exactly: supremum 0 and class membership at mu = 0.01.
#[test]
fn acceptance_3_dwell_gate() {
    let start = Instant::now();
    let seq = generate_sequence(SequenceKind::Periodic { period: 0.1 }, 0.0, 10.0).unwrap();
    let sup = adt_supremum(&seq, 0.1, 0.0, 0.05).unwrap();
    assert_eq!(sup, 0.0, "supremum must be exactly 0");
    assert!(in_class(
        &seq,
        DwellParams::new(0.01, 0.05).unwrap(),
        RateCoeffs::new(0.1, 0.0)
    ));
    budget(start, 1.0, "criterion 3");
    println!("ACCEPTANCE 3 PASS: dwell supremum exactly 0, class membership at mu = 0.01");
}

/// 4. Composite arithmetic of the coupled nonlinear pair: feasibility
///    product 0.2504 ± 5e-4 above 1/4, composite rates c = 0.534 and
///    d = -2, gate passes for period-10 impulses (supremum 2 ± 1e-9) and
///    fails for period-0.5, and the gated configuration simulates bounded.
#[test]
fn acceptance_4_composite_arithmetic() {
    let start = Instant::now();
    let pair = NonlinearPair::new(0.267).unwrap();
    let p = pair.feasibility_product();
    assert!((p - 0.2504).abs() < 5e-4 && p > 0.25, "product {p}");

    let model = pair.model();
    let certs = pair.certificates(&model);
    let gamma = certs.gain_matrix().unwrap();
    let comp = compose(&certs, &gamma, Flavor::DelayFree, None).unwrap();
    assert!((comp.c - 0.534).abs() < 1e-12, "c = {}", comp.c);
    assert!((comp.d + 2.0).abs() < 1e-12, "d = {}", comp.d);

    let slow = generate_sequence(SequenceKind::Periodic { period: 10.0 }, 0.0, 100.0).unwrap();
    let sup = adt_supremum(&slow, comp.c, comp.d, 0.334).unwrap();
    assert!((sup - 2.0).abs() <= 1e-9, "dwell supremum {sup}");
    let verdict = theorem_gate(&certs, &gamma, &slow, Flavor::DelayFree, 2.1, 0.334);
    assert!(verdict.iss, "{verdict}");

    let fast = generate_sequence(SequenceKind::Periodic { period: 0.5 }, 0.0, 100.0).unwrap();
    let verdict_fast = theorem_gate(&certs, &gamma, &fast, Flavor::DelayFree, 2.1, 0.334);
    assert!(!verdict_fast.iss, "{verdict_fast}");

    // under the passing gate the trajectory stays bounded over a long run
    let init = InitialState::Point(BlockVector::from_blocks(vec![vec![1.0], vec![1.0]]).unwrap());
    let cfg = SimConfig::new(1e-3, 100.0);
    let traj = simulate(&model, &slow, &init, &cfg).unwrap();
    let sup_norm = traj.sup_norm(0.0, 100.0).unwrap();
    assert!(sup_norm.is_finite() && sup_norm < 100.0, "sup norm {sup_norm}");

    budget(start, 5.0, "criterion 4");
    println!(
        "ACCEPTANCE 4 PASS: product {p:.4}, c 0.534, d -2, gate pass/fail by period, sup |x| = {sup_norm:.3}"
    );
}

/// 5. Integrator fidelity: impulsive closed form to 1e-8, fourth-order
///    error decay under step halving, exact first method-of-steps segment.
#[test]
fn acceptance_5_integrator_fidelity() {
    let start = Instant::now();
    let m = parse_model("model m { sub a[1] { flow x' = -x; jump point x = 0.5*x; } }").unwrap();
    let seq = generate_sequence(SequenceKind::Periodic { period: 0.1 }, 0.0, 1.0).unwrap();
    let init = InitialState::Point(BlockVector::single(vec![1.0]).unwrap());
    let traj = simulate(&m, &seq, &init, &SimConfig::new(1e-3, 1.0)).unwrap();
    let got = traj.value_at(1.0).unwrap().get(0);
    let want = 0.5f64.powi(10) * (-1.0f64).exp();
    assert!((got - want).abs() < 1e-8, "closed form: {got} vs {want}");

    // error ratio >= 12 per halving (asymptotically 16)
    let closed = |t: f64, n: i32| 0.5f64.powi(n) * (-t).exp();
    let mut errs = Vec::new();
    for dt in [1e-2, 5e-3, 2.5e-3] {
        let traj = simulate(&m, &seq, &init, &SimConfig::new(dt, 1.0)).unwrap();
        let mut emax: f64 = 0.0;
        for s in traj.samples() {
            let n = (s.t * 10.0 + 1e-9).floor() as i32;
            let e = (s.x.get(0) - closed(s.t, n))
                .abs()
                .min((s.x.get(0) - closed(s.t, (n - 1).max(0))).abs());
            emax = emax.max(e);
        }
        errs.push(emax);
    }
    assert!(errs[0] / errs[1] >= 12.0, "ratios {errs:?}");
    assert!(errs[1] / errs[2] >= 12.0, "ratios {errs:?}");

    // first method-of-steps segment of x'(t) = -x(t - 0.5), history 1:
    // x(t) = 1 - t exactly
    let md = parse_model("model m { theta 0.5; sub a[1] { flow x' = -x@0.5; } }").unwrap();
    let empty = ImpulseSequence::new(0.0, 0.25, vec![]).unwrap();
    let ih = InitialState::ConstantHistory(BlockVector::single(vec![1.0]).unwrap());
    let traj = simulate(&md, &empty, &ih, &SimConfig::new(0.05, 0.25)).unwrap();
    for s in traj.samples().iter().filter(|s| s.t >= 0.0) {
        assert!(
            (s.x.get(0) - (1.0 - s.t)).abs() < 1e-9,
            "t={} x={}",
            s.t,
            s.x.get(0)
        );
    }
    budget(start, 5.0, "criterion 5");
    println!(
        "ACCEPTANCE 5 PASS: closed form to 1e-8, halving ratios {:.1}/{:.1}, delay segment exact",
        errs[0] / errs[1],
        errs[1] / errs[2]
    );
}

/// 6. Certificate checks on both benchmark systems are clean at tolerance
///    1e-3 and flag a tenfold inflated flow rate.
#[test]
fn acceptance_6_certificate_checks() {
    let start = Instant::now();
    let tol = 1e-3;

    // --- coupled nonlinear pair -----------------------------------------
    let pair = NonlinearPair::new(0.267).unwrap();
    let model = pair.model();
    let certs = pair.certificates(&model);
    let gamma = certs.gain_matrix().unwrap();
    let seq = generate_sequence(SequenceKind::Periodic { period: 10.0 }, 0.0, 40.0).unwrap();
    let init = InitialState::Point(BlockVector::from_blocks(vec![vec![1.0], vec![1.0]]).unwrap());
    let cfg = SimConfig::new(1e-3, 40.0);
    let traj = simulate(&model, &seq, &init, &cfg).unwrap();

    let rep = check_flow(&certs, &model, &traj, &cfg.inputs, tol).unwrap();
    assert!(rep.ok(), "pair flow: {rep}");
    assert!(rep.premise_hits > 0, "pair flow premise never exercised");
    let rep = check_jump(&certs, &model, &traj, &cfg.inputs, JumpForm::MaxForm, tol).unwrap();
    assert!(rep.ok(), "pair jump: {rep}");
    let comp = compose(&certs, &gamma, Flavor::DelayFree, None).unwrap();
    let rep = check_flow_composite(&comp, &model, &traj, &cfg.inputs, tol).unwrap();
    assert!(rep.ok(), "pair composite flow: {rep}");
    assert!(rep.premise_hits > 0);
    let rep = check_jump_composite(&comp, &model, &traj, &cfg.inputs, tol).unwrap();
    assert!(rep.ok(), "pair composite jump: {rep}");

    // falsification: tenfold flow rates must be flagged — for either
    // subsystem alone (the inflated rates exceed both subsystems' maximal
    // decay rates, so any premise instant violates)
    for i in 0..2 {
        let mut inflated = certs.clone();
        inflated.subs[i].c *= 10.0;
        let rep = check_flow(&inflated, &model, &traj, &cfg.inputs, tol).unwrap();
        assert!(!rep.ok(), "inflated c_{i} was not flagged");
        assert!(rep.violations.iter().all(|v| v.subsystem == Some(i)));
    }

    // --- networked error system -----------------------------------------
    let params = NcsParams::default();
    let nmodel = params.build_model().unwrap();
    let ncerts = params.certificates(&nmodel).unwrap();
    let bank = params.input_bank();
    let (ntraj, _) = params.simulate_error_system(6.0, 1e-3).unwrap();
    let rep = check_razumikhin(&ncerts, &nmodel, &ntraj, &bank, tol).unwrap();
    assert!(rep.ok(), "ncs razumikhin: {rep}");

    // zero exogenous signals exercise the premise region
    let quiet = NcsParams {
        nu: vec![Signal::Constant(0.0); 3],
        noise: vec![Signal::Constant(0.0); 3],
        ..NcsParams::default()
    };
    let qbank = quiet.input_bank();
    let (qtraj, _) = quiet.simulate_error_system(6.0, 1e-3).unwrap();
    let rep = check_razumikhin(&ncerts, &nmodel, &qtraj, &qbank, tol).unwrap();
    assert!(rep.ok(), "ncs quiet razumikhin: {rep}");
    assert!(rep.premise_hits > 0, "quiet premise never exercised");

    let mut ninflated = ncerts.clone();
    for sc in &mut ninflated.subs {
        sc.c *= 10.0;
    }
    let rep = check_razumikhin(&ninflated, &nmodel, &qtraj, &qbank, tol).unwrap();
    assert!(!rep.ok(), "inflated ncs certificates were not flagged");

    // node 1 alone, whose premise fires from the start with decay rate
    // well under the inflated 1.0
    let mut single = ncerts.clone();
    single.subs[0].c *= 10.0;
    let rep = check_razumikhin(&single, &nmodel, &qtraj, &qbank, tol).unwrap();
    assert!(!rep.ok(), "inflated c of node 1 was not flagged");

    budget(start, 30.0, "criterion 6");
    println!("ACCEPTANCE 6 PASS: clean checks at 1e-3, tenfold inflation flagged");
}

/// 7. The full benchmark trajectory satisfies the explicit ISS envelope
///    pointwise; the worst margin is nonnegative.
#[test]
fn acceptance_7_iss_envelope() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let report = reproduce(&NcsParams::default(), &ReproduceOptions::new(dir.path())).unwrap();
    assert!(report.verdict.iss, "{}", report.verdict);
    let env = report.envelope.expect("composite certificate exists");
    assert!(
        env.holds && env.worst_margin >= 0.0,
        "worst margin {} at t = {}",
        env.worst_margin,
        env.worst_t
    );
    // the envelope also holds for the zero-input run, where the decaying
    // branch alone must dominate
    let quiet = NcsParams {
        nu: vec![Signal::Constant(0.0); 3],
        noise: vec![Signal::Constant(0.0); 3],
        ..NcsParams::default()
    };
    let model = quiet.build_model().unwrap();
    let (traj, _) = quiet.simulate_error_system(6.0, 1e-3).unwrap();
    let comp = report.verdict.composite.as_ref().unwrap();
    let env0 = iss_envelope_composite(comp, 0.01, 0.05, &traj, &model, &quiet.input_bank()).unwrap();
    assert!(env0.holds, "zero-input margin {}", env0.worst_margin);
    budget(start, 60.0, "criterion 7");
    println!(
        "ACCEPTANCE 7 PASS: envelope holds, worst margin {:.3} (driven) / {:.3} (zero-input)",
        env.worst_margin, env0.worst_margin
    );
}

/// 8. On 500 random gain matrices the Karp value matches cycle
///    enumeration to 1e-9 relative, scaling-vector feasibility matches the
///    threshold test, and every returned vector verifies strictly.
#[test]
fn acceptance_8_smallgain_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20240817);
    for round in 0..500 {
        let n = rng.random_range(1..=6usize);
        let mut rows = vec![vec![0.0; n]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if i != j && rng.random::<f64>() < 0.55 {
                    *v = 10f64.powf(rng.random_range(-2.0..2.0));
                }
            }
        }
        let gm = GainMatrix::from_rows(rows).unwrap();
        let rho = max_cycle_mean(&gm);
        let brute = brute_force_cycle_mean(&gm);
        assert!(
            (rho - brute).abs() <= 1e-9 * brute.max(1e-300),
            "round {round}: karp {rho} vs enumeration {brute}"
        );
        for alpha in [0.3, 1.0, 3.0] {
            match find_scaling_vector(&gm, alpha) {
                Some(s) => {
                    assert!(rho < alpha, "round {round}: feasible but rho {rho} >= {alpha}");
                    let image = gm.apply(&s).unwrap();
                    for (k, (im, si)) in image.iter().zip(&s).enumerate() {
                        assert!(
                            *im < alpha * si,
                            "round {round} alpha {alpha}: component {k} not strict"
                        );
                    }
                }
                None => assert!(
                    rho >= alpha,
                    "round {round}: infeasible but rho {rho} < {alpha}"
                ),
            }
        }
    }
    budget(start, 30.0, "criterion 8");
    println!("ACCEPTANCE 8 PASS: 500 random matrices agree with the enumeration oracle");
}

/// 9. Semi-open and closed impulse counting give the same dwell-class
///    membership on 1000 random draws.
#[test]
fn acceptance_9_lemma_agreement() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(424242);
    let mut memberships = [0usize; 2];
    for round in 0..1000 {
        let horizon = 2.0 + 8.0 * rng.random::<f64>();
        let k = rng.random_range(0..12usize);
        let mut times: Vec<f64> = (0..k)
            .map(|_| rng.random::<f64>() * horizon * 0.98 + 1e-3)
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        let seq = ImpulseSequence::new(0.0, horizon, times).unwrap();
        let c = rng.random_range(-2.0..2.0);
        let mag = rng.random_range(0.1..2.0);
        let d = if rng.random::<bool>() { mag } else { -mag };
        let lambda = rng.random_range(0.01..1.0);
        let mu = rng.random_range(0.01..3.0);
        let sup_semi = adt_supremum_mode(&seq, c, d, lambda, CountMode::SemiOpen).unwrap();
        let sup_closed = adt_supremum_mode(&seq, c, d, lambda, CountMode::Closed).unwrap();
        assert!(
            (sup_semi - sup_closed).abs() <= 1e-12 * sup_semi.abs().max(1.0),
            "round {round}: {sup_semi} vs {sup_closed}"
        );
        let in_semi = sup_semi <= mu;
        let in_closed = sup_closed <= mu;
        assert_eq!(in_semi, in_closed, "round {round}");
        memberships[usize::from(in_semi)] += 1;
    }
    assert!(
        memberships[0] > 50 && memberships[1] > 50,
        "draws too one-sided: {memberships:?}"
    );
    budget(start, 10.0, "criterion 9");
    println!(
        "ACCEPTANCE 9 PASS: 1000 draws agree ({} out / {} in)",
        memberships[0], memberships[1]
    );
}
