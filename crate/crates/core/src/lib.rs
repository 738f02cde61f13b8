//! FlattenQuant: per-tensor INT4/INT8 post-training quantization of linear
//! layers whose activations carry outlier channels.
//!
//! Large channels are flattened into extra channels of bounded magnitude and
//! the matching weight rows are repeated, so `X W` is unchanged while a single
//! per-tensor scale covers the whole tensor. Bit widths are chosen per layer
//! by a KL-divergence ratio and the integer GEMM is simulated exactly.

pub mod calibration;
pub mod cli;
pub mod config;
pub mod error;
pub mod flatten;
pub mod gptq;
pub mod pipeline;
pub mod quantize;
pub mod smoothing;
pub mod synth;
pub mod tensor_io;

pub use config::{Mode, QuantConfig};
pub use error::{Error, Result};
pub use tensor_io::{IntMatrix, Matrix, Tensor, TensorArchive};
