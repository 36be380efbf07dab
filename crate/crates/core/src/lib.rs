//! Joint survival model with a conditionally Poisson biomarker: piecewise
//! exponential Cox likelihood, Dirichlet-process mixture of gammas for the
//! latent density, MCMC, Cox and SIMEX comparators, and simulation studies.

pub mod cox;
pub mod data;
pub mod diagnostics;
pub mod dist;
pub mod dp;
pub mod error;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod mcmc;
pub mod mh;
pub mod sim;
pub mod simex;

pub use error::{Error, Result};
