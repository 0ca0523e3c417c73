//! Numerical laboratory for a gantry crane carrying a heavy chain under
//! collocated backstepping boundary feedback.
//!
//! The chain obeys a wave equation with spatially varying tension, the
//! payload and the cart enter as dynamic boundary conditions. The crate
//! covers the parameter checks, a second-order semi-discretization with the
//! energy inner product, Crank-Nicolson simulation with the Lyapunov
//! identities, spectra and resolvent sweeps of the discrete generator, and a
//! continuous-level resolvent solver built on the Green's function of
//! `y'' + (tau^2 / P) y = 0`.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod discretization;
pub mod error;
pub mod functions;
pub mod grid;
pub mod model;
pub mod ode;
pub mod operator;
pub mod resolvent_bvp;
pub mod simulation;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64;
