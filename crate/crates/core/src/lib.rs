//! Robust identification of gene-environment interactions for censored
//! survival outcomes under the accelerated failure time model.

pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod robust;
pub mod sim;

pub use error::{GxeError, Result};
