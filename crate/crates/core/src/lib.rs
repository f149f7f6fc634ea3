//! Observer-based boundary control of the 1D reaction–diffusion equation
//! with delayed Neumann actuation and delayed non-local measurement.
//!
//! The crate covers the whole design loop: the cosine modal model
//! ([`modal`]), Lyapunov gain synthesis ([`gains`]), reduced-order LMI
//! stability certificates ([`lmi`], solved by the interior-point backend in
//! [`sdp`]), the Halanay decay-rate equation ([`halanay`]) and closed-loop
//! simulation of the truncated modal system ([`sim`]).

pub mod config;
pub mod error;
pub mod gains;
pub mod halanay;
pub mod lmi;
pub mod modal;
pub mod parallel;
pub mod quad;
pub mod reproduce;
pub mod sdp;
pub mod sim;

pub use error::{Error, Result};
