//! Numeric checks of the gradient identities and discrepancy bounds.
//!
//! Every check evaluates both sides exactly with the enumeration oracle and
//! returns a [`TheoremReport`].

mod checks;
mod fixed_point;
mod report;
mod suite;

pub use checks::{
    check_corollary, check_is_identity, check_thm1, check_thm3, check_thm4, check_thm4_residual, check_thm5, Thm5Regime,
};
pub use fixed_point::{
    check_thm2_fixed_point, eps_approx, error_decomposition, ApproxConfig, ApproxFit, ErrorDecomposition,
    FixedPointConfig, FixedPointOutcome,
};
pub use report::{ReportContext, TheoremReport, BOUND_TOLERANCE, IDENTITY_TOLERANCE};
pub use suite::{verify_suite, SuiteConfig, SuiteSummary};
