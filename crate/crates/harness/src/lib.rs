//! Scenario files, the verification pipeline and reports for
//! `vertexeuler-core`.

pub mod error;
pub mod pipeline;
pub mod report;
pub mod scenario;

pub use error::{HarnessError, Result};
pub use report::{Format, Report};
pub use scenario::Scenario;
