//! Impulse-time sequences and the average dwell-time condition
//! `-d N(t,s) - (c - λ)(t - s) ≤ μ` for all `t0 ≤ s ≤ t`.
//!
//! The supremum of the left side over a finite horizon is computed exactly:
//! writing `N(t,s) = C(t) - C(s)` with `C` the impulse counting function,
//! the objective splits as `φ(t) - φ(s)` where
//! `φ(p) = -d C(p) + (λ - c) p`. Both factors are piecewise linear with
//! breakpoints only at impulse times, so the supremum is attained with `s`
//! and `t` drawn from `{t0, horizon} ∪ {t_k, t_k - 0}`; a single sweep with
//! a running minimum of `φ(s)` evaluates every candidate pair.
//!
//! Analysis is horizon-bounded. For periodic sequences an additional
//! per-period rate test `d + (c - λ)·period ≥ 0` is applied, which makes
//! the finite-horizon verdict valid for the unbounded horizon as well.

use crate::state::RateCoeffs;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Guard for the O(k²)-candidate computation.
pub const MAX_IMPULSES: usize = 100_000;

#[derive(Debug, Error)]
pub enum DwellError {
    #[error("impulse times must be strictly increasing (at t={0})")]
    NotIncreasing(f64),
    #[error("impulse time {t} outside ({t0}, {horizon}]")]
    OutOfRange { t: f64, t0: f64, horizon: f64 },
    #[error("interval start {s} exceeds end {t}")]
    BadInterval { s: f64, t: f64 },
    #[error("{got} impulses exceed the cap of {cap}")]
    TooMany { got: usize, cap: usize },
    #[error("{0}")]
    BadParam(String),
    #[error("cannot read sequence file: {0}")]
    Io(String),
}

/// Dwell-time class parameters: the slack `μ > 0` and decay margin `λ > 0`
/// of the sequence class `S[μ, λ]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwellParams {
    pub mu: f64,
    pub lambda: f64,
}

impl DwellParams {
    pub fn new(mu: f64, lambda: f64) -> Result<Self, DwellError> {
        if !(mu > 0.0) {
            return Err(DwellError::BadParam(format!("mu {mu} must be > 0")));
        }
        if !(lambda > 0.0) {
            return Err(DwellError::BadParam(format!("lambda {lambda} must be > 0")));
        }
        Ok(Self { mu, lambda })
    }
}

/// Counting convention for `N`: impulses in `(s, t]` (the default) or in
/// the closed interval `[s, t]` (the `N*` variant).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountMode {
    SemiOpen,
    Closed,
}

/// A strictly increasing, finite set of impulse times in `(t0, horizon]`.
#[derive(Debug, Clone)]
pub struct ImpulseSequence {
    t0: f64,
    horizon: f64,
    times: Vec<f64>,
    /// Set when generated periodically; enables the unbounded-horizon rate
    /// test in [`in_class`].
    period: Option<f64>,
}

impl ImpulseSequence {
    pub fn new(t0: f64, horizon: f64, times: Vec<f64>) -> Result<Self, DwellError> {
        if horizon < t0 {
            return Err(DwellError::BadParam(format!(
                "horizon {horizon} before t0 {t0}"
            )));
        }
        if times.len() > MAX_IMPULSES {
            return Err(DwellError::TooMany {
                got: times.len(),
                cap: MAX_IMPULSES,
            });
        }
        for w in times.windows(2) {
            if w[1] <= w[0] {
                return Err(DwellError::NotIncreasing(w[1]));
            }
        }
        let hi_slack = horizon + 1e-9 * horizon.abs().max(1.0);
        for &t in &times {
            if t <= t0 || t > hi_slack {
                return Err(DwellError::OutOfRange { t, t0, horizon });
            }
        }
        Ok(Self {
            t0,
            horizon,
            times,
            period: None,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    /// Smallest gap between consecutive impulse times (`None` if < 2).
    pub fn min_gap(&self) -> Option<f64> {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(None, |acc: Option<f64>, g| {
                Some(acc.map(|a| a.min(g)).unwrap_or(g))
            })
    }

    /// Number of impulse times in `(s, t]` (semi-open) or `[s, t]` (closed).
    pub fn count(&self, s: f64, t: f64, mode: CountMode) -> Result<usize, DwellError> {
        if s > t {
            return Err(DwellError::BadInterval { s, t });
        }
        let lo = match mode {
            CountMode::SemiOpen => self.times.partition_point(|&x| x <= s),
            CountMode::Closed => self.times.partition_point(|&x| x < s),
        };
        let hi = self.times.partition_point(|&x| x <= t);
        Ok(hi.saturating_sub(lo))
    }
}

/// Generator kinds for impulse sequences.
#[derive(Debug, Clone)]
pub enum SequenceKind {
    Periodic { period: f64 },
    Poisson { rate: f64, seed: u64 },
    Explicit(Vec<f64>),
}

pub fn generate_sequence(
    kind: SequenceKind,
    t0: f64,
    horizon: f64,
) -> Result<ImpulseSequence, DwellError> {
    match kind {
        SequenceKind::Periodic { period } => {
            if !(period > 0.0) {
                return Err(DwellError::BadParam(format!("period {period} must be > 0")));
            }
            let mut times = Vec::new();
            let slack = period * 1e-9;
            let mut k = 1u64;
            loop {
                let t = t0 + period * k as f64;
                if t > horizon + slack {
                    break;
                }
                times.push(t.min(horizon));
                k += 1;
                if times.len() > MAX_IMPULSES {
                    return Err(DwellError::TooMany {
                        got: times.len(),
                        cap: MAX_IMPULSES,
                    });
                }
            }
            let mut seq = ImpulseSequence::new(t0, horizon, times)?;
            seq.period = Some(period);
            Ok(seq)
        }
        SequenceKind::Poisson { rate, seed } => {
            if !(rate > 0.0) {
                return Err(DwellError::BadParam(format!("rate {rate} must be > 0")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut times = Vec::new();
            let mut t = t0;
            loop {
                let u: f64 = rng.random::<f64>();
                let gap = -(1.0 - u).ln() / rate;
                t += gap;
                if t > horizon {
                    break;
                }
                times.push(t);
                if times.len() > MAX_IMPULSES {
                    return Err(DwellError::TooMany {
                        got: times.len(),
                        cap: MAX_IMPULSES,
                    });
                }
            }
            ImpulseSequence::new(t0, horizon, times)
        }
        SequenceKind::Explicit(times) => ImpulseSequence::new(t0, horizon, times),
    }
}

/// Parse a sequence file: one time per line, `#` comments.
pub fn parse_sequence_file(text: &str, t0: f64, horizon: f64) -> Result<ImpulseSequence, DwellError> {
    let mut times = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let t: f64 = line
            .parse()
            .map_err(|e| DwellError::Io(format!("line {}: {e}", i + 1)))?;
        times.push(t);
    }
    ImpulseSequence::new(t0, horizon, times)
}

// A candidate boundary point: an instant with a one-sided shift. `side` is
// -1 for t_k - 0, 0 for t_k itself, +1 for t_k + 0. Each candidate value is
// an attained value or a one-sided limit of the objective, so evaluating
// all pairs computes the exact supremum.
#[derive(Clone, Copy)]
struct Cand {
    t: f64,
    side: i8,
}

/// `sup -d N(t,s) - (c-λ)(t-s)` over `t0 ≤ s ≤ t ≤ horizon` with the
/// semi-open count, computed exactly over candidate boundary points (see
/// module docs).
pub fn adt_supremum(seq: &ImpulseSequence, c: f64, d: f64, lambda: f64) -> Result<f64, DwellError> {
    adt_supremum_mode(seq, c, d, lambda, CountMode::SemiOpen)
}

/// Same supremum with the chosen counting convention. The conventions give
/// the same value: an `s = t_k - 0` boundary of the semi-open count carries
/// the same impulse count as `s = t_k` of the closed count, and vice versa
/// with `t_k + 0`, so the candidate value sets coincide.
pub fn adt_supremum_mode(
    seq: &ImpulseSequence,
    c: f64,
    d: f64,
    lambda: f64,
    mode: CountMode,
) -> Result<f64, DwellError> {
    if seq.times.len() > MAX_IMPULSES {
        return Err(DwellError::TooMany {
            got: seq.times.len(),
            cap: MAX_IMPULSES,
        });
    }
    let mut cands: Vec<Cand> = Vec::with_capacity(3 * seq.times.len() + 2);
    cands.push(Cand { t: seq.t0, side: 0 });
    for &tk in &seq.times {
        cands.push(Cand { t: tk, side: -1 });
        cands.push(Cand { t: tk, side: 0 });
        cands.push(Cand { t: tk, side: 1 });
    }
    cands.push(Cand {
        t: seq.horizon,
        side: 0,
    });
    cands.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap().then(a.side.cmp(&b.side)));

    let below = |t: f64| seq.times.partition_point(|&x| x < t);
    let upto = |t: f64| seq.times.partition_point(|&x| x <= t);

    // Count of impulses up to an end boundary (identical in both modes: the
    // end is inclusive) and up to a start boundary (the subtracted count;
    // semi-open excludes the start instant, closed includes it).
    let count_end = |p: &Cand| -> usize {
        if p.side < 0 {
            below(p.t)
        } else {
            upto(p.t)
        }
    };
    let count_start = |p: &Cand| -> usize {
        match mode {
            CountMode::SemiOpen => {
                if p.side < 0 {
                    below(p.t)
                } else {
                    upto(p.t)
                }
            }
            CountMode::Closed => {
                if p.side > 0 {
                    upto(p.t)
                } else {
                    below(p.t)
                }
            }
        }
    };

    // F(s,t) = -d N + (λ-c)(t-s) = φ_end(t) - φ_start(s); sweep with a
    // running minimum evaluates every candidate pair s ≤ t.
    let mut best = f64::NEG_INFINITY;
    let mut min_start = f64::INFINITY;
    for p in &cands {
        let phi_start = -d * count_start(p) as f64 + (lambda - c) * p.t;
        min_start = min_start.min(phi_start);
        let phi_end = -d * count_end(p) as f64 + (lambda - c) * p.t;
        best = best.max(phi_end - min_start);
    }
    Ok(best.max(0.0))
}

/// Membership of `seq` in the dwell-time class `S[μ, λ]` for the given rate
/// coefficients: the finite-horizon supremum must not exceed `μ`, and for
/// periodic sequences the per-period rate test must hold so that the
/// verdict extends beyond the horizon.
pub fn in_class(seq: &ImpulseSequence, params: DwellParams, rates: RateCoeffs) -> bool {
    let sup = match adt_supremum(seq, rates.c, rates.d, params.lambda) {
        Ok(s) => s,
        Err(_) => return false,
    };
    if sup > params.mu {
        return false;
    }
    if let Some(period) = seq.period {
        let per_period = rates.d + (rates.c - params.lambda) * period;
        if per_period < -1e-9 * rates.d.abs().max(1.0) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn explicit(t0: f64, horizon: f64, times: &[f64]) -> ImpulseSequence {
        ImpulseSequence::new(t0, horizon, times.to_vec()).unwrap()
    }

    #[test]
    fn counting_conventions() {
        let seq = explicit(0.0, 1.0, &[0.1, 0.2, 0.3]);
        assert_eq!(seq.count(0.1, 0.3, CountMode::SemiOpen).unwrap(), 2);
        assert_eq!(seq.count(0.1, 0.3, CountMode::Closed).unwrap(), 3);
        assert_eq!(seq.count(0.1, 0.1, CountMode::SemiOpen).unwrap(), 0);
        assert_eq!(seq.count(0.1, 0.1, CountMode::Closed).unwrap(), 1);
        assert!(seq.count(0.3, 0.1, CountMode::SemiOpen).is_err());
    }

    #[test]
    fn periodic_generation_matches_expected_times() {
        let seq = generate_sequence(SequenceKind::Periodic { period: 0.1 }, 0.0, 0.35).unwrap();
        let want = [0.1, 0.2, 0.3];
        assert_eq!(seq.times().len(), 3);
        for (got, want) in seq.times().iter().zip(want) {
            assert!((got - want).abs() < 1e-12);
        }
        // horizon exactly on an impulse is included
        let seq = generate_sequence(SequenceKind::Periodic { period: 0.1 }, 0.0, 0.3).unwrap();
        assert_eq!(seq.times().len(), 3);
    }

    #[test]
    fn explicit_and_poisson_determinism() {
        let seq = generate_sequence(SequenceKind::Explicit(vec![0.5]), 0.0, 1.0).unwrap();
        assert_eq!(seq.times(), &[0.5]);
        let a = generate_sequence(SequenceKind::Poisson { rate: 2.0, seed: 7 }, 0.0, 50.0).unwrap();
        let b = generate_sequence(SequenceKind::Poisson { rate: 2.0, seed: 7 }, 0.0, 50.0).unwrap();
        assert_eq!(a.times(), b.times());
        assert!(!a.times().is_empty());
        let c = generate_sequence(SequenceKind::Poisson { rate: 2.0, seed: 8 }, 0.0, 50.0).unwrap();
        assert_ne!(a.times(), c.times());
    }

    #[test]
    fn adt_supremum_stable_flow_no_jump_penalty() {
        // d = 0: only the flow-margin term matters and it is <= 0 for λ < c
        let seq = generate_sequence(SequenceKind::Periodic { period: 0.1 }, 0.0, 10.0).unwrap();
        let sup = adt_supremum(&seq, 0.1, 0.0, 0.05).unwrap();
        assert_eq!(sup, 0.0);
        assert!(in_class(
            &seq,
            DwellParams::new(0.01, 0.05).unwrap(),
            RateCoeffs::new(0.1, 0.0)
        ));
    }

    #[test]
    fn adt_supremum_empty_sequence() {
        let seq = explicit(0.0, 10.0, &[]);
        let sup = adt_supremum(&seq, 1.0, -1.0, 0.5).unwrap();
        assert_eq!(sup, 0.0);
    }

    #[test]
    fn adt_supremum_destabilizing_jumps_period_ten() {
        // worst pair is s -> t_k^-, t = t_k: each amplifying jump costs
        // -d = 2 and ten-second gaps repay exactly 2, so the supremum is 2.
        let seq = generate_sequence(SequenceKind::Periodic { period: 10.0 }, 0.0, 100.0).unwrap();
        let sup = adt_supremum(&seq, 0.534, -2.0, 0.334).unwrap();
        assert!((sup - 2.0).abs() < 1e-9, "sup={sup}");
        assert!(in_class(
            &seq,
            DwellParams::new(2.1, 0.334).unwrap(),
            RateCoeffs::new(0.534, -2.0)
        ));
        assert!(!in_class(
            &seq,
            DwellParams::new(1.9, 0.334).unwrap(),
            RateCoeffs::new(0.534, -2.0)
        ));
    }

    #[test]
    fn frequent_jumps_fail_the_class() {
        let seq = generate_sequence(SequenceKind::Periodic { period: 0.5 }, 0.0, 100.0).unwrap();
        assert!(!in_class(
            &seq,
            DwellParams::new(2.1, 0.334).unwrap(),
            RateCoeffs::new(0.534, -2.0)
        ));
    }

    #[test]
    fn mu_monotonicity() {
        let seq = generate_sequence(SequenceKind::Periodic { period: 1.0 }, 0.0, 30.0).unwrap();
        let rates = RateCoeffs::new(0.8, -0.5);
        let mut was_in = false;
        for k in 1..=40 {
            let mu = 0.05 * k as f64;
            let now = in_class(&seq, DwellParams::new(mu, 0.2).unwrap(), rates);
            assert!(!was_in || now, "membership lost when mu grew to {mu}");
            was_in = now;
        }
    }

    // brute-force oracle: dense grid over (s, t) pairs
    fn brute_force_sup(seq: &ImpulseSequence, c: f64, d: f64, lambda: f64, grid: usize) -> f64 {
        let span = seq.horizon() - seq.t0();
        let mut best = f64::NEG_INFINITY;
        for i in 0..=grid {
            let s = seq.t0() + span * i as f64 / grid as f64;
            for j in i..=grid {
                let t = seq.t0() + span * j as f64 / grid as f64;
                let n = seq.count(s, t, CountMode::SemiOpen).unwrap() as f64;
                best = best.max(-d * n - (c - lambda) * (t - s));
            }
        }
        best
    }

    #[test]
    fn supremum_matches_dense_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let horizon = 5.0 + 5.0 * rng.random::<f64>();
            let n = rng.random_range(0..8usize);
            let mut times: Vec<f64> = (0..n)
                .map(|_| rng.random::<f64>() * horizon * 0.98 + 0.01)
                .collect();
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            times.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            let seq = ImpulseSequence::new(0.0, horizon, times).unwrap();
            let c = rng.random_range(-1.0..1.0);
            let d = rng.random_range(-2.0..2.0);
            let lambda = rng.random_range(0.01..1.0);
            let grid = 400;
            let brute = brute_force_sup(&seq, c, d, lambda, grid);
            let exact = adt_supremum(&seq, c, d, lambda).unwrap();
            // both window endpoints may sit up to one cell away from their
            // optimal boundary position
            let resolution = 2.0 * (horizon / grid as f64) * (c - lambda).abs() + 1e-9;
            assert!(
                exact >= brute - 1e-9 && exact <= brute + resolution,
                "exact={exact} brute={brute} resolution={resolution}"
            );
        }
    }
}
