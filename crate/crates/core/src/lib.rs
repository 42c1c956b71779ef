//! Forward and inverse problems for the Westervelt equation on the unit cube.
//!
//! The cube `Ω = [-1, 1]³` carries a sound speed `c` ([`media`]) and a
//! nonlinearity `β`. [`solvers`] integrates the time-integrated form with
//! Crank–Nicolson in time, Picard iteration on the nonlinear factor and
//! preconditioned conjugate gradients, and computes the Neumann trace.
//! [`geodesic`], [`fermi`] and [`jacobi`] trace rays of `c⁻²dx²`, build Fermi
//! coordinates along their null lifts and solve the complex Jacobi system.
//! [`beam`] assembles Gaussian beams on those charts, [`transform`] holds the
//! Jacobi-weighted ray transform, the beam pairing and the boundary/interior
//! identity, and [`experiments`] and [`stability`] run the sweeps and
//! perturbation studies.
//!
//! Runnable examples live in `examples/`: `forward_solve`, `rays`,
//! `beam_residual`, `pairing`, `identity_check`, `linearization`, `sweeps`
//! and `stability`.

pub mod beam;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fermi;
pub mod fields;
pub mod geodesic;
pub mod jacobi;
pub mod media;
pub mod ode;
pub mod solvers;
pub mod stability;
pub mod transform;

pub use error::{Error, Result};
