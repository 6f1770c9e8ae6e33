//! The chapters of `book/src`, included verbatim so `cargo test` compiles and
//! runs every Rust snippet in the guide.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/hybrid-loss.md")]
pub mod hybrid_loss {}

#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}

#[doc = include_str!("../../../book/src/federation.md")]
pub mod federation {}

#[doc = include_str!("../../../book/src/latency.md")]
pub mod latency {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
