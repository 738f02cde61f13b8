//! Matrices and the FQTA binary archive used for models, calibration sets
//! and quantized outputs.

mod archive;
mod matrix;

pub use archive::{
    read_archive, write_archive, Tensor, TensorArchive, DTYPE_F64, DTYPE_I32, MAGIC, VERSION,
};
pub use matrix::{IntMatrix, Matrix};
