//! Coupled rank-(L,M,N) block-term decomposition for fusing a low-resolution
//! hyperspectral image with a high-resolution multispectral image.

pub mod degradation;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod regularization;
pub mod solver;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Matrix, Mode, Tensor3};
