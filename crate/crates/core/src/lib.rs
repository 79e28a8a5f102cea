//! Wavelet channel attention at desk scale.
//!
//! The crate provides: a dense f64 tensor core with strided grouped
//! convolution; 2D discrete wavelet transforms in banded-matrix and
//! convolution forms with perfect reconstruction for orthonormal 2-tap
//! banks; Gram-Schmidt generation of random orthonormal filter banks and
//! their assignment to channel groups; squeeze-excite-scale channel
//! attention whose squeeze can be plain pooling or a wavelet recursion;
//! and a small differentiable-network trainer with exact backward passes
//! throughout.
//!
//! The central identity the library is built around: recursively taking
//! the averaging-Haar approximation of an image reproduces its global
//! average exactly, and the orthonormal variant reproduces it up to a
//! factor of two per level. The test and verification suites pin this down
//! numerically, alongside cross-path transform equivalence, Parseval
//! energy balance, and finite-difference gradient checks.

pub mod attention;
pub mod checks;
pub mod data;
pub mod error;
pub mod fdcheck;
pub mod filterbank;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod wavelet;

pub use attention::{AttentionBlock, SqueezeMode};
pub use error::{Error, Result};
pub use filterbank::FilterAssignment;
pub use rng::Rng;
pub use tensor::Tensor;
pub use wavelet::{NormMode, Subbands, WaveletBank};
