//! The guide in `book/` is plain mdbook, which cannot build listings that
//! depend on workspace crates. Each chapter is pulled in here instead so that
//! `cargo test --doc` compiles and runs every listing.

#[doc = include_str!("../../../book/src/index.md")]
pub mod index {}
#[doc = include_str!("../../../book/src/environments.md")]
pub mod environments {}
#[doc = include_str!("../../../book/src/diffusion.md")]
pub mod diffusion {}
#[doc = include_str!("../../../book/src/shared-control.md")]
pub mod shared_control {}
#[doc = include_str!("../../../book/src/joint-learning.md")]
pub mod joint_learning {}
#[doc = include_str!("../../../book/src/recording.md")]
pub mod recording {}
#[doc = include_str!("../../../book/src/service.md")]
pub mod service {}
