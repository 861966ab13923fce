//! Exact information-flow analysis for finite closed-loop feedback systems.
//!
//! The model is a loop of four symbol streams over a finite horizon `n`: a
//! message `x0`, channel inputs `x_i` produced by an encoder
//! `p(x_i | x0, x^{i-1}, e^{i-1})`, channel outputs `y_i` from a forward
//! channel `p(y_i | x^i, y^{i-1})`, and feedback symbols `e_i` from a
//! feedback channel `p(e_i | e^{i-1}, y^i)`. Alphabets are finite and the
//! kernels are arbitrary per-step conditional tables, so the joint
//! distribution over trajectories `(x0, x1, y1, e1, …, xn, yn, en)` can be
//! enumerated exactly.
//!
//! On top of the exact joint the crate computes, in bits:
//!
//! * entropy and conditional mutual information over arbitrary coordinate
//!   selections ([`trajectory`]);
//! * directed information `I(x^n → y^n) = Σ_i I(x^i; y_i | y^{i-1})`, its
//!   causally conditioned form `I(x^n → y^n || z^n) = Σ_i I(x^i; y_i |
//!   y^{i-1}, z^i)`, delayed variants, and a catalog of named flow
//!   quantities ([`functionals`]);
//! * numerical verification of the conservation identities that relate
//!   those flows, with residuals, scope rules, and a seeded fuzzer
//!   ([`identity`]);
//! * ancestral sampling and plug-in estimation from finite batches, with
//!   convergence studies against the exact values ([`montecarlo`]).
//!
//! All probabilities are `f64`, logarithms base 2, `0·log 0 = 0`. Dense
//! enumeration is bounded by a configurable guard
//! ([`trajectory::DEFAULT_GUARD`]).

pub mod error;
pub mod functionals;
pub mod identity;
pub mod index;
pub mod montecarlo;
pub mod system;
pub mod trajectory;

pub use error::{Error, Result};
pub use functionals::{
    generalized_di, named_quantities, CatalogEntry, DiEvaluation, InfoQuery, QuantityCatalog,
    QuantityId, QueryForm, StreamLag,
};
pub use identity::{
    fuzz, verify, verify_all, FuzzConfig, FuzzSummary, IdentityId, IdentityReport, Relation,
    Verdict, DEFAULT_TOLERANCE_BITS,
};
pub use montecarlo::{
    convergence_study, empirical_distribution, estimate, sample, ConvergenceStudy, SampleBatch,
};
pub use system::{
    generate_random, Alphabets, Coord, EncoderMode, KernelName, KernelRole, KernelSpec, Stream,
    SystemSpec, ValidationReport,
};
pub use trajectory::{
    build_joint, build_joint_default, DistKind, Selector, TrajectoryDistribution, DEFAULT_GUARD,
};

#[cfg(test)]
pub(crate) mod testutil;
