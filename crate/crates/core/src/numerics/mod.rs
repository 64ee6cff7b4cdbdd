//! Dense linear algebra, small MLPs with hand-written backward passes,
//! Adam, and a finite-difference gradient checker.

mod adam;
mod gradcheck;
mod matrix;
pub(crate) mod mlp;
mod params;
mod svd;

pub use adam::AdamState;
pub use gradcheck::grad_check;
pub use matrix::{axpy, cosine, dot, norm, Matrix};
pub use mlp::{sigmoid, Activation, Layer, MlpParams, MlpTape};
pub use params::{FlatParams, ParamKind, Parameterized};
pub use svd::{default_rcond, pinv, svd, Svd};
