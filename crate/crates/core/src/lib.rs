//! Bayesian inference of switching rates, emission rates and hidden states
//! for a two-state blinking emitter observed through accumulated photon
//! counts.

pub mod bessel;
pub mod ctmc;
pub mod error;
pub mod forward;
pub mod io;
pub mod kernels;
pub mod multistep;
pub mod posterior;
pub mod quadrature;
pub mod simulate;
pub mod single;
pub mod state;
pub mod threshold;

pub use error::{Error, Result};
