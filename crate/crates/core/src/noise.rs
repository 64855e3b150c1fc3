//! Phenomenological noise sources: quasi-static flux noise, pulse-to-pulse
//! drive jitter, and an optional excess white frequency-noise term.
//!
//! The quasi-static flux model draws one Gaussian flux offset per pulse (or
//! per curve) and holds it fixed for the duration; it broadens the measured
//! S-curve width through the local slope of the tuning curve. Drive jitter
//! and excess frequency noise are resampled per pulse inside the trajectory
//! integrator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::circuit::{CircuitParams, FluxPoint};
use crate::error::{KerrError, Result};
use crate::stats::GAUSS_10_90;

/// When the quasi-static flux offset is redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResamplePolicy {
    /// Fresh draw for every pulse (fast noise relative to the repetition
    /// rate).
    PerPulse,
    /// One draw shared by all pulses of a curve (slow drift).
    PerCurve,
}

/// All phenomenological noise strengths. `off()` disables everything.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    /// RMS quasi-static flux noise, units of Phi0.
    pub sigma_flux: f64,
    /// Relative RMS drive-amplitude jitter (fraction of the amplitude).
    pub drive_amp_jitter: f64,
    /// RMS drive-frequency jitter, Hz.
    pub drive_freq_jitter: f64,
    /// RMS excess white noise on nu_3, Hz; models dephasing beyond the
    /// quasi-static flux term.
    pub excess_freq_noise: f64,
    /// Resampling cadence for the quasi-static flux draw.
    pub resample: ResamplePolicy,
}

impl NoiseSpec {
    pub fn off() -> Self {
        Self {
            sigma_flux: 0.0,
            drive_amp_jitter: 0.0,
            drive_freq_jitter: 0.0,
            excess_freq_noise: 0.0,
            resample: ResamplePolicy::PerPulse,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_flux < 0.0
            || self.drive_amp_jitter < 0.0
            || self.drive_freq_jitter < 0.0
            || self.excess_freq_noise < 0.0
        {
            return Err(KerrError::Config("noise strengths must be >= 0".into()));
        }
        Ok(())
    }

    /// Quasi-static flux offset for one draw, units of Phi0. Deterministic in
    /// the seed; zero cost when sigma_flux = 0.
    pub fn sample_quasistatic_flux(&self, seed: u64) -> f64 {
        if self.sigma_flux == 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: f64 = StandardNormal.sample(&mut rng);
        self.sigma_flux * z
    }
}

/// First-order flux-noise broadening of a 10-90 S-curve width:
///
/// ```text
/// Delta S(phi) = Delta S_0 + g * |d nu_3 / d phi| * sigma_flux,
/// ```
///
/// with g the Gaussian 10-90 factor. The additive form models the observed
/// linear growth of the width along the tuning curve.
pub fn broadened_width(
    params: &CircuitParams,
    flux: FluxPoint,
    intrinsic_width: f64,
    sigma_flux: f64,
) -> Result<f64> {
    if intrinsic_width < 0.0 || sigma_flux < 0.0 {
        return Err(KerrError::InvalidParams(
            "widths and noise strengths must be >= 0".into(),
        ));
    }
    let slope = params.mode_frequency_derivative(3, flux, 1e-5)?;
    Ok(intrinsic_width + GAUSS_10_90 * slope.abs() * sigma_flux)
}

/// Drive-jitter contribution to the 10-90 width, combined with the intrinsic
/// width in quadrature. `freq_jitter` acts directly; `amp_jitter` acts through
/// the power sensitivity of the spinodal frequency, d nu_sw / d ln P.
pub fn jitter_broadened_width(
    intrinsic_width: f64,
    freq_jitter: f64,
    amp_jitter: f64,
    dnu_sw_dlnp: f64,
) -> f64 {
    // Relative amplitude jitter a translates to relative power jitter 2a.
    let freq_term = GAUSS_10_90 * freq_jitter;
    let amp_term = GAUSS_10_90 * 2.0 * amp_jitter * dnu_sw_dlnp.abs();
    (intrinsic_width * intrinsic_width + freq_term * freq_term + amp_term * amp_term).sqrt()
}
