//! Meta-learning trust supervision for classifier ensembles.
//!
//! An ensemble's softmax outputs are normalised into an
//! [uncertainty shape descriptor](descriptor), a small regression
//! [network](supervisor) predicts how many members are right, and a
//! [memory-backed loss](trust_loss) learns the threshold above which that
//! prediction is trusted. [`decision`] turns predictions into votes, trust
//! flags and trusted metrics; [`loops`] runs the static, online and
//! active-learning evaluation modes.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codec;
pub mod decision;
pub mod descriptor;
pub mod ensemble;
pub mod error;
pub mod loops;
pub mod numerics;
pub mod pipeline;
pub mod supervisor;
pub mod trust_loss;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/descriptor.md")]
    mod descriptor {}
    #[doc = include_str!("../../../book/src/supervisor.md")]
    mod supervisor {}
    #[doc = include_str!("../../../book/src/threshold.md")]
    mod threshold {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/modes.md")]
    mod modes {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
