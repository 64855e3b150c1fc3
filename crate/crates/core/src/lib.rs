//! kerrsim: a desk-scale simulator of a flux-tunable multimode Kerr
//! resonator operated as a cavity bifurcation amplifier.
//!
//! The crate is organized around the experiment it reproduces:
//! [`circuit`] maps device parameters and flux to mode frequencies and Kerr
//! coefficients, [`dynamics`] solves the driven Kerr-oscillator steady states
//! and stochastic switching, [`protocol`] assembles pulsed switching
//! probability curves, [`spectroscopy`] detects coupled modes through the
//! cross-Kerr shift, [`noise`] injects phenomenological noise sources, and
//! [`analysis`] provides the nonlinear least-squares fits used to extract
//! parameters back out of the generated data.

pub mod analysis;
pub mod circuit;
pub mod config;
pub mod constants;
pub mod dynamics;
pub mod error;
pub mod noise;
pub mod protocol;
pub mod seeds;
pub mod spectroscopy;
pub mod stats;

pub use circuit::{
    critical_photon_number, josephson_inductance, kerr_coefficients, CircuitParams, FluxPoint,
    Linewidths, ModeSpectrum,
};
pub use dynamics::{
    bistability_region, activation_width, effective_temperature, steady_state, DriveSpec, SteadyState,
    ThermalEnvironment,
};
pub use error::{KerrError, Result};
pub use noise::NoiseSpec;
pub use protocol::{PulseSpec, SCurve};
