//! Block-structured states, history windows, and trajectories.
//!
//! States are partitioned into per-subsystem blocks; the total state is the
//! stacked vector. Signals are right-continuous with left limits: at a jump
//! time the stored sample takes the post-jump value and the left limit is
//! kept as a separate sample at the same instant (left-limit row first).
//! Between samples the signal is reconstructed by cubic Hermite
//! interpolation using the derivatives recorded by the integrator.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("time {t} outside stored span [{lo}, {hi}]")]
    OutOfSpan { t: f64, lo: f64, hi: f64 },
    #[error("empty window [{a}, {b}]")]
    EmptyWindow { a: f64, b: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Flow rate `c` and jump rate `d` of an exponential certificate.
///
/// `c` is the continuous decay rate (1/time); `d` is the log contraction
/// factor of a jump (`V` shrinks by `e^{-d}` across an impulse, so negative
/// `d` means amplifying jumps).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCoeffs {
    pub c: f64,
    pub d: f64,
}

impl RateCoeffs {
    pub fn new(c: f64, d: f64) -> Self {
        Self { c, d }
    }
}

/// A real vector partitioned into fixed-size blocks, one per subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl BlockVector {
    /// Build from flat data and block dimensions. Total dimension must match
    /// and be positive.
    pub fn from_flat(dims: Vec<usize>, data: Vec<f64>) -> Result<Self, StateError> {
        let total: usize = dims.iter().sum();
        if total == 0 {
            return Err(StateError::Invalid("total dimension must be > 0".into()));
        }
        if data.len() != total {
            return Err(StateError::DimMismatch {
                expected: total,
                got: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn from_blocks(blocks: Vec<Vec<f64>>) -> Result<Self, StateError> {
        let dims: Vec<usize> = blocks.iter().map(|b| b.len()).collect();
        let data: Vec<f64> = blocks.into_iter().flatten().collect();
        Self::from_flat(dims, data)
    }

    /// Single-block vector.
    pub fn single(data: Vec<f64>) -> Result<Self, StateError> {
        let dims = vec![data.len()];
        Self::from_flat(dims, data)
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let total: usize = dims.iter().sum();
        Self {
            dims,
            data: vec![0.0; total],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        self.data.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.dims.len()
    }

    fn block_offset(&self, i: usize) -> usize {
        self.dims[..i].iter().sum()
    }

    pub fn block(&self, i: usize) -> &[f64] {
        let off = self.block_offset(i);
        &self.data[off..off + self.dims[i]]
    }

    /// Component `comp` of block `i`.
    pub fn block_comp(&self, i: usize, comp: usize) -> f64 {
        self.data[self.block_offset(i) + comp]
    }

    pub fn set_block_comp(&mut self, i: usize, comp: usize, v: f64) {
        let off = self.block_offset(i);
        self.data[off + comp] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize) -> f64 {
        self.data[i]
    }

    pub fn set(&mut self, i: usize, v: f64) {
        self.data[i] = v;
    }

    /// Euclidean norm of the full stacked vector.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Euclidean norm of block `i`.
    pub fn block_norm(&self, i: usize) -> f64 {
        self.block(i).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `self + k * other` (same shape).
    pub fn saxpy(&self, k: f64, other: &Self) -> Self {
        debug_assert_eq!(self.dims, other.dims);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + k * b)
            .collect();
        Self {
            dims: self.dims.clone(),
            data,
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dims == other.dims
    }
}

/// One stored sample of a signal: time, value, and time-derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct HistSample {
    pub t: f64,
    pub x: BlockVector,
    pub dx: BlockVector,
}

impl HistSample {
    pub fn new(t: f64, x: BlockVector, dx: BlockVector) -> Self {
        Self { t, x, dx }
    }
}

/// Which one-sided value to take at a stored jump instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// The left limit (pre-jump row).
    Left,
    /// The right-continuous value (post-jump row).
    Right,
}

fn slack(t: f64) -> f64 {
    1e-9 * t.abs().max(1.0)
}

/// Cubic Hermite basis evaluation on `[t0, t1]` with node derivatives.
fn hermite(
    t0: f64,
    x0: &[f64],
    m0: &[f64],
    t1: f64,
    x1: &[f64],
    m1: &[f64],
    t: f64,
    out: &mut [f64],
) {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    for i in 0..out.len() {
        out[i] = h00 * x0[i] + h * h10 * m0[i] + h01 * x1[i] + h * h11 * m1[i];
    }
}

/// Derivative of the Hermite interpolant at `t`.
fn hermite_deriv(
    t0: f64,
    x0: &[f64],
    m0: &[f64],
    t1: f64,
    x1: &[f64],
    m1: &[f64],
    t: f64,
    out: &mut [f64],
) {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    // d/dt = (1/h) d/ds of the basis polynomials
    let g00 = (6.0 * s2 - 6.0 * s) / h;
    let g10 = 3.0 * s2 - 4.0 * s + 1.0;
    let g01 = (-6.0 * s2 + 6.0 * s) / h;
    let g11 = 3.0 * s2 - 2.0 * s;
    for i in 0..out.len() {
        out[i] = g00 * x0[i] + g10 * m0[i] + g01 * x1[i] + g11 * m1[i];
    }
}

/// Evaluate a sorted sample list at time `t`, honoring the duplicated-row
/// convention at jump instants.
pub fn eval_samples(samples: &[HistSample], t: f64, side: Side) -> Result<BlockVector, StateError> {
    eval_samples_inner(samples, t, side, false)
}

/// Like [`eval_samples`] but returns the interpolant's derivative.
pub fn eval_samples_deriv(
    samples: &[HistSample],
    t: f64,
    side: Side,
) -> Result<BlockVector, StateError> {
    eval_samples_inner(samples, t, side, true)
}

enum Bracket {
    Exact(usize),
    Span(usize, usize, f64),
}

fn locate(samples: &[HistSample], t: f64, side: Side) -> Result<Bracket, StateError> {
    if samples.is_empty() {
        return Err(StateError::Invalid("no stored samples".into()));
    }
    let lo = samples[0].t;
    let hi = samples[samples.len() - 1].t;
    let eps = slack(t);
    if t < lo - eps || t > hi + eps {
        return Err(StateError::OutOfSpan { t, lo, hi });
    }
    let t = t.clamp(lo, hi);
    match side {
        Side::Right => {
            // last sample with time <= t
            let idx = samples.partition_point(|s| s.t <= t);
            if idx > 0 && samples[idx - 1].t == t {
                return Ok(Bracket::Exact(idx - 1));
            }
            Ok(Bracket::Span(idx - 1, idx, t))
        }
        Side::Left => {
            // first sample with time >= t
            let idx = samples.partition_point(|s| s.t < t);
            if idx < samples.len() && samples[idx].t == t {
                return Ok(Bracket::Exact(idx));
            }
            Ok(Bracket::Span(idx - 1, idx, t))
        }
    }
}

fn eval_samples_inner(
    samples: &[HistSample],
    t: f64,
    side: Side,
    deriv: bool,
) -> Result<BlockVector, StateError> {
    match locate(samples, t, side)? {
        Bracket::Exact(i) => {
            let s = &samples[i];
            Ok(if deriv { s.dx.clone() } else { s.x.clone() })
        }
        Bracket::Span(i0, i1, t) => interp(samples, i0, i1, t, deriv),
    }
}

/// Single flat-index component of the interpolated state (avoids allocating
/// a full vector on hot delayed-read paths).
pub fn eval_samples_scalar(
    samples: &[HistSample],
    t: f64,
    side: Side,
    flat_index: usize,
) -> Result<f64, StateError> {
    match locate(samples, t, side)? {
        Bracket::Exact(i) => Ok(samples[i].x.data()[flat_index]),
        Bracket::Span(i0, i1, t) => {
            let a = &samples[i0];
            let b = &samples[i1];
            let mut out = [0.0f64];
            hermite(
                a.t,
                &a.x.data()[flat_index..flat_index + 1],
                &a.dx.data()[flat_index..flat_index + 1],
                b.t,
                &b.x.data()[flat_index..flat_index + 1],
                &b.dx.data()[flat_index..flat_index + 1],
                t,
                &mut out,
            );
            Ok(out[0])
        }
    }
}

fn interp(
    samples: &[HistSample],
    i0: usize,
    i1: usize,
    t: f64,
    deriv: bool,
) -> Result<BlockVector, StateError> {
    let a = &samples[i0];
    let b = &samples[i1];
    let mut out = vec![0.0; a.x.total_dim()];
    if deriv {
        hermite_deriv(
            a.t,
            a.x.data(),
            a.dx.data(),
            b.t,
            b.x.data(),
            b.dx.data(),
            t,
            &mut out,
        );
    } else {
        hermite(
            a.t,
            a.x.data(),
            a.dx.data(),
            b.t,
            b.x.data(),
            b.dx.data(),
            t,
            &mut out,
        );
    }
    BlockVector::from_flat(a.x.dims().to_vec(), out)
}

/// A state segment over `[t - θ, t]`: the delayed part of the state of a
/// time-delay system, with enough samples to evaluate anywhere inside.
#[derive(Debug, Clone)]
pub struct HistorySegment {
    theta: f64,
    samples: Vec<HistSample>,
}

impl HistorySegment {
    /// Samples must be time-ordered; duplicated instants are permitted only
    /// as (left-limit row, post-jump row) pairs.
    pub fn new(theta: f64, samples: Vec<HistSample>) -> Result<Self, StateError> {
        if samples.is_empty() {
            return Err(StateError::Invalid("history needs >= 1 sample".into()));
        }
        if theta < 0.0 {
            return Err(StateError::Invalid("theta must be >= 0".into()));
        }
        for w in samples.windows(2) {
            if w[1].t < w[0].t {
                return Err(StateError::Invalid(format!(
                    "history samples out of order at t={}",
                    w[1].t
                )));
            }
        }
        let span = samples[samples.len() - 1].t - samples[0].t;
        if span + slack(span) < theta {
            return Err(StateError::Invalid(format!(
                "history spans {span}, needs at least theta={theta}"
            )));
        }
        Ok(Self { theta, samples })
    }

    /// Constant segment `≡ x` on `[t_right - θ, t_right]`.
    pub fn constant(theta: f64, t_right: f64, x: BlockVector) -> Self {
        let zero = BlockVector::zeros(x.dims().to_vec());
        let mut samples = Vec::new();
        if theta > 0.0 {
            samples.push(HistSample::new(t_right - theta, x.clone(), zero.clone()));
        }
        samples.push(HistSample::new(t_right, x, zero));
        Self { theta, samples }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn right_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    pub fn right_value(&self) -> &BlockVector {
        &self.samples[self.samples.len() - 1].x
    }

    pub fn samples(&self) -> &[HistSample] {
        &self.samples
    }

    /// Value at offset `τ ∈ [-θ, 0]` from the right end (right-continuous at
    /// stored jump instants).
    pub fn eval(&self, tau: f64) -> Result<BlockVector, StateError> {
        self.eval_side(tau, Side::Right)
    }

    /// Left limit at offset `τ`.
    pub fn eval_left(&self, tau: f64) -> Result<BlockVector, StateError> {
        self.eval_side(tau, Side::Left)
    }

    fn eval_side(&self, tau: f64, side: Side) -> Result<BlockVector, StateError> {
        if tau > slack(tau) || tau < -self.theta - slack(self.theta) {
            return Err(StateError::OutOfSpan {
                t: tau,
                lo: -self.theta,
                hi: 0.0,
            });
        }
        eval_samples(&self.samples, self.right_time() + tau, side)
    }

    /// Supremum of `f` over the stored samples of the window.
    pub fn sup_map<F: Fn(&BlockVector) -> f64>(&self, f: F) -> f64 {
        self.samples
            .iter()
            .map(|s| f(&s.x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sup norm of the window (`|φ|_a` with the sup norm).
    pub fn sup_norm(&self) -> f64 {
        self.sup_map(|x| x.norm())
    }
}

/// A recorded jump: time, left limit, post-jump value.
#[derive(Debug, Clone)]
pub struct JumpEvent {
    pub t: f64,
    pub pre: BlockVector,
    pub post: BlockVector,
}

/// A recorded whole-window jump: the internal state window immediately
/// before and after the impulse (both span `(t - θ, t]`).
#[derive(Debug, Clone)]
pub struct HistoryJumpEvent {
    pub t: f64,
    pub pre: Vec<HistSample>,
    pub post: Vec<HistSample>,
}

/// A simulated solution: right-continuous piecewise samples with jump
/// events. Samples may start before `t0` (the initial history of a delay
/// system); at each jump instant the left-limit row precedes the post-jump
/// row.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t0: f64,
    dims: Vec<usize>,
    samples: Vec<HistSample>,
    events: Vec<JumpEvent>,
    history_events: Vec<HistoryJumpEvent>,
    warnings: Vec<String>,
}

impl Trajectory {
    pub fn new(t0: f64, dims: Vec<usize>) -> Self {
        Self {
            t0,
            dims,
            samples: Vec::new(),
            events: Vec::new(),
            history_events: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn push_sample(&mut self, s: HistSample) {
        debug_assert!(self
            .samples
            .last()
            .map(|last| s.t >= last.t)
            .unwrap_or(true));
        self.samples.push(s);
    }

    pub fn push_event(&mut self, ev: JumpEvent) {
        self.events.push(ev);
    }

    pub fn push_history_event(&mut self, ev: HistoryJumpEvent) {
        self.history_events.push(ev);
    }

    pub fn push_warning(&mut self, w: String) {
        self.warnings.push(w);
    }

    pub fn samples(&self) -> &[HistSample] {
        &self.samples
    }

    pub fn events(&self) -> &[JumpEvent] {
        &self.events
    }

    pub fn history_events(&self) -> &[HistoryJumpEvent] {
        &self.history_events
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn start_time(&self) -> f64 {
        self.samples.first().map(|s| s.t).unwrap_or(self.t0)
    }

    pub fn end_time(&self) -> f64 {
        self.samples.last().map(|s| s.t).unwrap_or(self.t0)
    }

    /// Right-continuous value at `t`.
    pub fn value_at(&self, t: f64) -> Result<BlockVector, StateError> {
        eval_samples(&self.samples, t, Side::Right)
    }

    /// Left limit at `t`.
    pub fn left_value_at(&self, t: f64) -> Result<BlockVector, StateError> {
        eval_samples(&self.samples, t, Side::Left)
    }

    /// `sup_{t ∈ [a,b]} |x(t)|` over samples, event pre-values, and the
    /// interpolated window endpoints.
    pub fn sup_norm(&self, a: f64, b: f64) -> Result<f64, StateError> {
        if a > b {
            return Err(StateError::EmptyWindow { a, b });
        }
        let mut m = self.value_at(a)?.norm().max(self.value_at(b)?.norm());
        for s in &self.samples {
            if s.t >= a && s.t <= b {
                m = m.max(s.x.norm());
            }
        }
        Ok(m)
    }

    /// Euclidean-norm series over `t ≥ t0` (jump instants contribute both
    /// rows; exact duplicates collapse).
    pub fn norm_series(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for s in self.samples.iter().filter(|s| s.t >= self.t0) {
            let entry = (s.t, s.x.norm());
            if out.last() != Some(&entry) {
                out.push(entry);
            }
        }
        out
    }

    /// The state window `[t - θ, t]` as seen by the system at time `t`.
    ///
    /// For models with whole-window jumps the stored per-event replacement
    /// windows take precedence over the as-observed samples, reproducing the
    /// internal state the integrator actually evolved.
    pub fn window_at(&self, t: f64, theta: f64, side: Side) -> Result<HistorySegment, StateError> {
        let start = t - theta;
        // A query exactly at a whole-window jump instant returns the stored
        // pre/post window as-is.
        if let Some(eh) = self
            .history_events
            .iter()
            .rev()
            .find(|e| (e.t - t).abs() <= slack(t))
        {
            return match side {
                Side::Left => HistorySegment::new(theta, eh.pre.clone()),
                Side::Right => HistorySegment::new(theta, eh.post.clone()),
            };
        }
        // Latest whole-window jump strictly before the query instant.
        let ev = self
            .history_events
            .iter()
            .rev()
            .find(|e| e.t < t - slack(t));
        let mut out: Vec<HistSample> = Vec::new();
        if let Some(eh) = ev {
            if eh.t > start {
                // replaced part
                for s in &eh.post {
                    if s.t >= start - slack(start) {
                        out.push(s.clone());
                    }
                }
                // flow part strictly after the event
                for s in &self.samples {
                    if s.t > eh.t + slack(eh.t) && s.t <= t {
                        out.push(s.clone());
                    }
                }
                self.finish_window(&mut out, start, t, side)?;
                return HistorySegment::new(theta, out);
            }
        }
        // plain extraction
        let synth_start = self.sample_at(start, Side::Right)?;
        out.push(synth_start);
        for s in &self.samples {
            if s.t > start && s.t < t {
                out.push(s.clone());
            }
        }
        self.finish_window(&mut out, start, t, side)?;
        HistorySegment::new(theta, out)
    }

    fn finish_window(
        &self,
        out: &mut Vec<HistSample>,
        start: f64,
        t: f64,
        side: Side,
    ) -> Result<(), StateError> {
        // left-limit rows exactly at t (kept for Side::Left; both for Right)
        for s in &self.samples {
            if s.t == t {
                out.push(s.clone());
            }
        }
        match side {
            Side::Left => {
                // drop a trailing post-jump row if t is a duplicated instant
                while out.len() >= 2
                    && out[out.len() - 1].t == out[out.len() - 2].t
                    && out[out.len() - 1].t == t
                {
                    out.pop();
                }
            }
            Side::Right => {}
        }
        if out.last().map(|s| s.t != t).unwrap_or(true) {
            let synth = self.sample_at(t, side)?;
            out.push(synth);
        }
        if out.is_empty() {
            return Err(StateError::EmptyWindow { a: start, b: t });
        }
        Ok(())
    }

    fn sample_at(&self, t: f64, side: Side) -> Result<HistSample, StateError> {
        let x = eval_samples(&self.samples, t, side)?;
        let dx = eval_samples_deriv(&self.samples, t, side)?;
        Ok(HistSample::new(t, x, dx))
    }

    /// CSV serialization: header `t,x1,...,xN`, one row per sample with
    /// round-trip float formatting. Identical consecutive rows (same time,
    /// same values) are collapsed, so jump instants appear exactly twice.
    pub fn to_csv(&self) -> String {
        let n = self.dims.iter().sum::<usize>();
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",x{i}"));
        }
        out.push('\n');
        let mut prev: Option<&HistSample> = None;
        for s in &self.samples {
            if let Some(p) = prev {
                if p.t == s.t && p.x == s.x {
                    prev = Some(s);
                    continue;
                }
            }
            out.push_str(&format!("{:?}", s.t));
            for v in s.x.data() {
                out.push_str(&format!(",{v:?}"));
            }
            out.push('\n');
            prev = Some(s);
        }
        out
    }
}

/// Parse a trajectory CSV produced by [`Trajectory::to_csv`] back into
/// `(time, values)` rows.
pub fn parse_csv(text: &str) -> Result<Vec<(f64, Vec<f64>)>, StateError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let t: f64 = parts
            .next()
            .ok_or_else(|| StateError::Invalid(format!("row {i}: empty")))?
            .parse()
            .map_err(|e| StateError::Invalid(format!("row {i}: {e}")))?;
        let vals: Result<Vec<f64>, _> = parts.map(|p| p.parse::<f64>()).collect();
        let vals = vals.map_err(|e| StateError::Invalid(format!("row {i}: {e}")))?;
        rows.push((t, vals));
    }
    Ok(rows)
}
