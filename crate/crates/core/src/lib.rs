//! Neumann oscillator on the unit sphere, simulated two ways: direct
//! constrained integration of `(q, qdot)`, and the flow of Mumford
//! coordinates `(U, V, W)` on the spectral curve `y^2 = A(x) Q(x)` with
//! positions recovered from the al functions `q_i = frak_al_i`.
//!
//! * [`poly`] dense real polynomials (division, interpolation, real roots)
//! * [`curve`] branch data and the polynomials `A`, `Q`, `f`
//! * [`neumann`] the direct dynamics and the Uhlenbeck constants
//! * [`mumford`] the triple, its flow and the divisor view
//! * [`alfn`] al functions, branch tracking and identity residuals
//! * [`spectral`] state to spectrum and back, round trips, conservation reports
//! * [`cli`] the command-line surface

#![allow(clippy::needless_range_loop)]

pub mod alfn;
pub mod cli;
pub mod curve;
pub mod error;
pub mod exec;
pub mod mumford;
pub mod neumann;
pub mod ode;
pub mod poly;
pub mod spectral;

pub use curve::CurveSpec;
pub use error::{Error, Result};
pub use exec::Execution;
pub use mumford::{Divisor, MumfordTriple};
pub use neumann::{NeumannState, Trajectory};
pub use poly::Poly;
pub use spectral::SpectralData;
