//! Attribution operators over small neural networks, the algebra that
//! composes them, and a SQL-like query language that lowers onto it.
//!
//! - [`nn`]: forward/gradient runtime, stage truncation, head retraining
//! - [`attribution`]: Shapley (exact and sampled), integrated gradients and
//!   SmoothGrad kernels for the identity, projection, selection, join and
//!   anti-join operators
//! - [`algebra`]: expression trees, validation, law-based normalization,
//!   evaluation
//! - [`qlang`]: lexer, parser, printer and binder for queries
//! - [`analysis`]: what-if input edits and spectral-signature scoring

pub mod algebra;
pub mod analysis;
pub mod attribution;
pub mod nn;
pub mod qlang;
