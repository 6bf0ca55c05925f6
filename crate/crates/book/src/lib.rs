//! The `tfusion` guide. Each module holds one chapter so that its code samples
//! run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/student-t.md")]
pub mod student_t {}

#[doc = include_str!("../../../book/src/stkf.md")]
pub mod stkf {}

#[doc = include_str!("../../../book/src/fusion.md")]
pub mod fusion {}

#[doc = include_str!("../../../book/src/network.md")]
pub mod network {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[doc = include_str!("../../../book/src/diagnostics.md")]
pub mod diagnostics {}
