//! Certifiably optimal k-sparse generalized linear models.
//!
//! The relaxation `min F(Xβ) + 2λ2·g(β)` is solved by restarted FISTA with an
//! exact pool-adjacent-violators prox, every iterate yields a safe Fenchel
//! lower bound, and [`bnb::certify`] closes the remaining gap by branching.

pub mod bnb;
pub mod cli;
pub mod data;
pub mod error;
pub mod fista;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod perspective;
pub mod prox;
pub mod support;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
pub use model::{LossKind, ProblemInstance};
pub use support::Restriction;
