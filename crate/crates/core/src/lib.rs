//! Monte Carlo simulation and Bayesian phase estimation for twin-Fock
//! Mach-Zehnder interferometry with lossy photodetectors.
//!
//! The library models a Mach-Zehnder interferometer fed with twin Fock
//! states `|n>|n>`. Each burst measurement yields photon counts at the two
//! output ports; detector loss is modeled as independent binomial thinning
//! per port. Burst likelihoods come from the squared associated Legendre
//! weight, and the phase is recovered from the peak of the accumulated
//! posterior. The experiment harness sweeps photon number and detector
//! efficiency to study how the phase error scales between the Heisenberg
//! limit `1/N` and the shot-noise limit `1/sqrt(N)`.

pub mod bayes;
pub mod cli;
pub mod experiment;
pub mod interferometer;
pub mod output;
pub mod specfun;

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid (j, m) pair: 2j = {twice_j}, 2m = {twice_m}")]
    InvalidPair { twice_j: i64, twice_m: i64 },

    #[error("argument out of range: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
