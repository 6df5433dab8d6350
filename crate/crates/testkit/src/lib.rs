//! Test-only helpers: a naive re-implementation of the allocation replay,
//! an auditor that re-checks simulator invariants from the decision trace,
//! and fixtures shared by the unit, integration and acceptance suites.

pub mod audit;
pub mod fixtures;
pub mod oracle;
pub mod recovery;
