#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod atlas;
pub mod covering;
pub mod error;
pub mod euler_mq;
pub mod flat_bundle;
pub mod gaussian_fiber;
pub mod graded_forms;
pub mod linalg;
pub mod local_index;
pub mod quadrature;

pub use error::{Error, Result};
