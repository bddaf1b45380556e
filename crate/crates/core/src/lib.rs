// Negated comparisons like `!(x > 0.0)` are deliberate: they reject NaN
// parameters that a plain `x <= 0.0` would let through. Indexed loops are
// kept where the code is stencil or matrix arithmetic, and the numeric
// kernels take their natural argument lists.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]

//! Simulation and stability certification of impulsive dynamical systems.
//!
//! An impulsive system evolves along an ordinary (possibly delayed)
//! differential equation between prescribed impulse times and jumps
//! instantaneously at each impulse. This crate provides:
//!
//! - [`state`] — block-structured state vectors, history windows with
//!   cubic-Hermite reconstruction, and right-continuous trajectories;
//! - [`kfun`] — a small closed algebra of comparison functions (class K)
//!   with numeric inversion;
//! - [`dsl`] — a text format for model descriptions with delayed state
//!   references (`x@0.03`), plus the expression evaluator;
//! - [`dwell`] — impulse-time sequences and exact evaluation of the
//!   average dwell-time condition `-d N(t,s) - (c-λ)(t-s) ≤ μ`;
//! - [`sim`] — fixed-step RK4 integration of all three system forms
//!   (delay-free, delayed with pointwise jumps, delayed with
//!   whole-history jumps);
//! - [`smallgain`] — max-algebra analysis of linear gain matrices:
//!   gain operator, cycle condition, max cycle geometric mean (Karp),
//!   and scaling-vector synthesis via difference constraints;
//! - [`lyapunov`] — exponential ISS-Lyapunov / Razumikhin / Krasovskii
//!   certificates, trajectory-based verification of their flow and jump
//!   implications, composite-certificate construction for interconnections,
//!   and ISS envelope checking;
//! - [`ncs`] — a networked-estimation benchmark: coupled linear nodes with
//!   delays whose estimation errors are reset over a shared channel under
//!   a TOD-like protocol, analyzed and simulated end to end;
//! - [`svg`] — a minimal SVG line-chart writer for trajectory plots.
//!
//! All analysis runs over a finite horizon `[t0, T]`; for periodic impulse
//! sequences the dwell-time check additionally verifies the per-period rate
//! test, which extends the verdict to the unbounded horizon.

pub mod dsl;
pub mod dwell;
pub mod kfun;
pub mod lyapunov;
pub mod ncs;
pub mod samples;
pub mod sim;
pub mod smallgain;
pub mod state;
pub mod svg;

pub use kfun::KFunction;
pub use state::{BlockVector, HistorySegment, RateCoeffs, Trajectory};
