//! Acceptance checks for gemon-core, runnable as the `acceptance` test.

pub mod criteria;
pub mod random;

pub use criteria::Outcome;
