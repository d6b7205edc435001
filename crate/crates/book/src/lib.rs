//! Compiles the guide's code samples as doc-tests, so `cargo test` keeps the
//! book in sync with the library.

#![doc = include_str!("../../../book/src/introduction.md")]

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/analytic.md")]
pub mod analytic {}

#[doc = include_str!("../../../book/src/traces.md")]
pub mod traces {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/search.md")]
pub mod search {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
