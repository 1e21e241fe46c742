//! Kernels, dual-form kernel ridge regression, posterior variance and the
//! complexity diagnostics that enter the bonus and regret analysis.

pub mod diagnostics;
pub mod krr;
pub mod lemmas;
pub mod spec;

pub use diagnostics::{
    coverage_constant, effective_dimension, effective_dimension_of_gram, information_gain,
    ComplexityDiagnostics,
};
pub use krr::{DomainCache, KrrCheckpoint, KrrModel, UncertaintyState};
pub use lemmas::{elliptical_potential_check, self_normalized_check, InequalityReport};
pub use spec::KernelSpec;
