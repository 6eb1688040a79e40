//! Runs the listings of the cefkit guide as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/geometry.md")]
pub mod geometry {}

#[doc = include_str!("../../../book/src/motions.md")]
pub mod motions {}

#[doc = include_str!("../../../book/src/layouts.md")]
pub mod layouts {}

#[doc = include_str!("../../../book/src/cef.md")]
pub mod cef {}

#[doc = include_str!("../../../book/src/fault-injection.md")]
pub mod fault_injection {}

#[doc = include_str!("../../../book/src/planning.md")]
pub mod planning {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
