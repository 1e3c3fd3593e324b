//! Deterministic numeric foundation: tensors, seeded randomness,
//! small-matrix decompositions, FFT, and the brute-force differentiation
//! oracles the rest of the crate is validated against.
//!
//! Values are immutable after construction and all operations are pure, so
//! everything here is safe to call from concurrent workers; `Rng` streams
//! are split, never shared.

pub mod diff;
pub mod fft;
pub mod linalg;
pub mod rng;
pub mod tensor;

pub use diff::{exact_jacobian, finite_difference_jacobian, DiffMap, FnMap};
pub use fft::{fft2, ifft2, Complex, Spectrum};
pub use linalg::{svd_small, Mat, Svd};
pub use rng::Rng;
pub use tensor::Tensor;
