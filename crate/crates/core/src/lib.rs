pub mod analysis;
pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod dsp;
pub mod error;
pub mod frontends;
pub mod grad_check;
pub mod ops;
pub mod params;
pub mod selftest;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
