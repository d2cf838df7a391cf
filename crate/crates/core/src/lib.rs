//! High-precision laboratory for Fibonacci unimodal maps `f(x) = λ(1 − |2x − 1|^ℓ)`.

pub mod combinatorics;
pub mod distortion;
pub mod error;
pub mod induced;
pub mod map;
pub mod nest;
pub mod real;
pub mod walk;

pub use error::{Error, Result};
pub use map::{FibMap, IntervalR, Side};
pub use real::{PrecisionPolicy, Real};
