//! Certification of input-to-state stability for switched nonlinear systems
//! under rate-bounded switching, plus trajectory simulation to exercise the
//! certified envelopes.
//!
//! The pieces, bottom up:
//!
//! - [`expr`]: arithmetic expressions for vector fields, Lyapunov functions
//!   and gains, with symbolic differentiation and a compiled evaluator.
//! - [`family`]: a validated family of subsystems with their Lyapunov data
//!   and the sampled checks of that data.
//! - [`ratefn`]: the rate functions bounding activation time and switch
//!   counts, the decay-rate condition, and the summability estimate.
//! - [`signal`]: switching signals, bound checking and signal generators.
//! - [`certificate`]: the cascade functions and certificate assembly.
//! - [`sim`]: RK4 integration and trajectory-side checks.
//! - [`cli`]: configuration files and the command-line workflows.

pub mod certificate;
pub mod cli;
pub mod expr;
pub mod family;
pub mod ratefn;
pub mod signal;
pub mod sim;
