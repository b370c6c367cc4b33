//! Dense linear algebra, seeded sampling, the adam optimizer and a
//! central-difference gradient used as a test oracle.

mod adam;
mod finite_diff;
pub(crate) mod matrix;
mod rng;

pub use adam::{adam_step, AdamState};
pub use finite_diff::finite_diff_grad;
pub use matrix::Matrix;
pub use rng::{derive_seed, SeededRng};
