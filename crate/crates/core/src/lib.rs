//! Quanvolutional neural networks under adversarial attack.
//!
//! A 4-qubit statevector simulator drives a quanvolutional feature extractor
//! with five filter-circuit families. Small classical networks are trained on
//! top, attacked with FGSM, PGD and MIM, and swept across perturbation budgets.

pub mod ansatz;
pub mod attacks;
pub mod data;
pub mod error;
pub mod harness;
pub mod image;
pub mod nn;
pub mod qsim;
pub mod quanv;
pub mod seed;
pub mod verify;

pub use error::{Error, FormatError, Result};
