//! Dense matrices, layer primitives, Adam and gradient checking.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod matrix;

pub use adam::{Adam, ParamBlock};
pub use gradcheck::{gradient_check, GradCheckOptions, GradCheckReport, Parameters};
pub use layers::{cross_entropy, cross_entropy_labels, one_hot, relu, softmax, Affine};
pub use matrix::Matrix;
