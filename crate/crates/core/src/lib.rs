//! Lower bounds, conjectured upper bounds and large-system limits for the
//! sum capacity of synchronous CDMA channels with binary inputs and binary
//! (±1) signatures, `Y = A X / √m + N`.
//!
//! * [`numerics`]: log-space combinatorics, quadrature, golden search.
//! * [`noise`]: the noise families and their functionals.
//! * [`finite_bounds`]: bounds for a finite spreading gain `m` and `n` users.
//! * [`asymptotic`]: limits with `n / m → β` and the replica fixed point.
//! * [`oracle`]: exhaustive and Monte Carlo ground truth at desk scale.
//! * [`cli`]: command-line front end and figure tables.

pub mod asymptotic;
pub mod cli;
pub mod error;
pub mod finite_bounds;
pub mod noise;
pub mod numerics;
pub mod oracle;

pub use error::{Error, Result};
