//! Straight-line reference implementations for test cross-checks.
//!
//! Nothing here is shared with the production crates: inputs and outputs are
//! plain `f64` slices and integer ids, and the mixture arithmetic runs in
//! multi-precision floating point.

pub mod mixture;
pub mod ranking;
