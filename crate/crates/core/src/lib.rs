pub mod bounds;
pub mod error;
pub mod harness;
pub mod numkernel;
pub mod regan;
pub mod regulator;
pub mod sysmodel;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/regularizability.md")]
    mod regularizability {}
    #[doc = include_str!("../../../book/src/dgr.md")]
    mod dgr {}
    #[doc = include_str!("../../../book/src/fdgr.md")]
    mod fdgr {}
    #[doc = include_str!("../../../book/src/instability.md")]
    mod instability {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
