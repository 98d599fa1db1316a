//! Transfer-learning workbench for predicting onflow parameters (angle of
//! attack and onflow speed) from sparse airfoil surface-pressure arrays.

pub mod aerogen;
pub mod architectures;
pub mod error;
pub mod experiments;
pub mod fsutil;
pub mod nn;
pub mod pipeline;
pub mod quasirandom;
pub mod transfer;

pub use error::{Error, Result};
