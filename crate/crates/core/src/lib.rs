//! Helper-assisted multi-channel P2P video-on-demand.
//!
//! The crate couples two distributed algorithms that together minimize the
//! load on a central video server:
//!
//! * [`allocator`]: projected primal-dual dynamics that split each helper's
//!   upload bandwidth across its users and its storage across videos, plus an
//!   exhaustive oracle for tiny instances.
//! * [`topology`]: neighbor choking (soft-worst and uniform variants) that
//!   rewires the helper/user overlay, with exact configuration-space tooling
//!   to compare chain behavior against the Gibbs target.
//!
//! [`sim`] runs both inside a seeded discrete-event simulator and
//! [`harness`] loads scenarios, samples populations and writes metrics.

pub mod allocator;
pub mod error;
pub mod harness;
pub mod model;
pub mod sim;
pub mod topology;

pub use error::{Error, Result};
