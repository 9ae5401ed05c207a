//! Weighted circle method toolkit for quadratic forms.
//!
//! For a non-singular integral quadratic form `f(x) = xᵀFx`, a target `t` and a
//! weight sequence `a_x`, this crate computes the objects that make up the
//! asymptotic for the weighted count
//!
//! ```text
//! R(X) = Σ_{0 ≤ x ≤ X, f(x) = t} a_{x_1} ⋯ a_{x_s}
//! ```
//!
//! namely the residue-class coefficients `κ(q, h)` of the weights, the complete
//! exponential sums `S_t(q, a)` and `B(q)`, the truncated singular series, the
//! weighted p-adic densities, the real density `σ∞` over a constructed box, and
//! the brute-force count itself. Every exact identity between these objects is
//! checkable: κ lives in exact rational arithmetic and all phases are computed
//! from exact integer residues.
//!
//! Modules map onto the pipeline:
//!
//! * [`forms`]: the form, its block structure and the mixed-term rank condition.
//! * [`weights`]: weight models, κ, smooth approximants and condition audits.
//! * [`expsums`]: `S(α)`, `S_t(q, a)`, `B(q)` and the singular series.
//! * [`localdens`]: `M(p^m)`, local factors and the sign-condition witness search.
//! * [`realdens`]: box construction, `σ∞` and the singular integral.
//! * [`counter`]: brute-force weighted counts and prediction reports.
//! * [`arcs`]: arc schedules, rational approximation and Weyl diagnostics.

pub mod arcs;
pub mod arith;
pub mod counter;
mod enumerate;
pub mod error;
pub mod expsums;
pub mod forms;
pub mod localdens;
pub mod numeric;
mod par;
pub mod realdens;
pub mod weights;

pub use error::{Error, Result};
pub use forms::QuadraticForm;
pub use weights::WeightModel;

/// Version tag written into every serialized report.
pub const SCHEMA_VERSION: u32 = 1;
