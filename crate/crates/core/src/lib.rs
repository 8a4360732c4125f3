//! Cramér-Rao bounds for sensing moving targets with wide-band OFDM over
//! near-field uniform linear arrays.
//!
//! The crate builds the noise-free received signal for point targets seen by
//! a transmit and a receive ULA, differentiates it analytically with respect
//! to target location, velocity and reflection coefficient, assembles the
//! Fisher information over all subcarriers, and compares the resulting bounds
//! with far-field and near-field closed-form approximations.

// `!(x > 0.0)` is used on purpose so that NaN fails domain checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::type_complexity)]

pub mod closedform;
pub mod derivatives;
pub mod error;
pub mod experiments;
pub mod fim;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod scene;

pub use error::{Error, Result};
