//! Exponential ISS certificates and their machine checks.
//!
//! The certificate model covers three disciplines over the same data:
//! plain exponential ISS-Lyapunov functions (delay-free systems),
//! Razumikhin functions (pointwise `V` with a windowed premise for delay
//! systems), and Krasovskii functionals (whole-window `V`). Trajectory
//! checks verify the flow/jump implications numerically; [`compose()`] builds
//! the certificate of an interconnection from per-subsystem certificates
//! under the small-gain condition; [`theorem_gate`] combines everything
//! with the dwell-time class test into a single structured verdict; and
//! [`iss_envelope`] checks the resulting explicit trajectory bound.

pub mod cert;
pub mod check;
pub mod compose;
pub mod envelope;

pub use cert::{
    CertError, CertificateSet, CompositeCertificate, CompositeValue, Flavor, SubsystemCert,
};
pub use check::{
    check_flow, check_flow_composite, check_jump, check_jump_composite, check_krasovskii,
    check_razumikhin, check_razumikhin_composite, razumikhin_gate, CheckError, CheckKind,
    Functional, JumpForm, KrasovskiiCert, Violation, ViolationReport,
};
pub use compose::{compose, theorem_gate, ComposeError, GateCheck, Verdict};
pub use envelope::{iss_envelope, iss_envelope_composite, EnvelopeReport};
