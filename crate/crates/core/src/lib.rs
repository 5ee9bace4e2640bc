//! Simulation and verification toolkit for finite-state-modulated Markov
//! additive processes (MAPs) and the self-similar Markov processes (ssMps)
//! they generate through the Lamperti–Kiu transform.
//!
//! The crate is organised around the pipeline
//!
//! ```text
//!   MapSpec --simulate--> (xi, Theta) --Lamperti-Kiu--> X = e^xi * Theta
//!      |                       |                            |
//!      |                 first passage,               exit laws, scaling,
//!   dual spec            Wiener-Hopf probes,          entrance paths at 0
//!      |                 stationary overshoots
//!      v                       |
//!   conditioned-to-stay-negative sampling --time reversal--> entrance law
//! ```
//!
//! Everything is seeded: each Monte-Carlo replica owns an [`rng::RngStream`]
//! and reductions are merged in replica order, so experiment outputs are
//! reproducible bit-for-bit for a fixed `(seed, stream)` assignment.

pub mod battery;
pub mod conditioning;
pub mod cones;
pub mod dual;
pub mod error;
pub mod fluctuation;
pub mod gamma;
pub mod lamperti;
pub mod linalg;
pub mod rng;
pub mod simulate;
pub mod spec;
pub mod stationary;
pub mod stats;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use spec::{JumpLaw, MapSpec};
