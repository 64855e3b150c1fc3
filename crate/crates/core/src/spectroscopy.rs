//! Cross-Kerr spectroscopy: detecting the other resonator modes through the
//! frequency pull they exert on the bifurcating mode.
//!
//! The bifurcating mode is biased on the steep edge of its S-curve
//! (P_s = 10%). A weak CW probe populates a target mode; its steady-state
//! occupation pulls nu_3 through the cross-Kerr coupling, which moves the
//! switching curve and registers as a change of P_s. Sweeping the probe maps
//! out a Lorentzian replica of the target mode line.
//!
//! Sign convention: the steady-state cubic uses delta_nu - 2 K n with K > 0,
//! so the effective resonance (and with it nu_3 under a cross-Kerr load)
//! moves up in frequency with occupation: the pull is +lambda_{3,n} n_bar.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{lorentzian_fit, levenberg_marquardt, FitResult};
use crate::circuit::{kerr_coefficients, odd_mode_frequency_for, CircuitParams, ModeSpectrum};
use crate::error::{KerrError, Result};
use crate::protocol::SwitchingSetup;
use crate::seeds;
use crate::stats::binomial_ci;

/// Steady-state photon occupation of a linearly probed mode:
/// n_bar = (2 P / gamma_n) * (gamma_n/2)^2 / ((nu - nu_n)^2 + (gamma_n/2)^2)
/// for a probe of photon flux P. Fails the linearity guard when the Kerr
/// shift of the probed mode exceeds a tenth of its linewidth at the peak.
pub fn coupled_mode_occupation(
    spectrum: &ModeSpectrum,
    mode: usize,
    nu_probe: f64,
    photon_flux: f64,
) -> Result<f64> {
    let i = spectrum
        .index_of(mode)
        .ok_or_else(|| KerrError::InvalidParams(format!("mode {mode} not in spectrum")))?;
    let (nu_n, gamma_n, k_n) = (
        spectrum.frequencies[i],
        spectrum.linewidths[i],
        spectrum.self_kerr[i],
    );
    if photon_flux < 0.0 {
        return Err(KerrError::InvalidParams("photon_flux must be >= 0".into()));
    }
    let n_peak = 2.0 * photon_flux / gamma_n;
    let shift = k_n.abs() * n_peak;
    let limit = 0.1 * gamma_n;
    if shift > limit {
        return Err(KerrError::LinearityViolated { shift, limit });
    }
    let hw = 0.5 * gamma_n;
    let det = nu_probe - nu_n;
    Ok(n_peak * hw * hw / (det * det + hw * hw))
}

/// Cross-Kerr pull of nu_3 produced by `occupation` photons in `mode`.
/// Even modes are uncoupled and cannot pull the bifurcating mode.
pub fn cross_kerr_shift(spectrum: &ModeSpectrum, mode: usize, occupation: f64) -> Result<f64> {
    if mode % 2 == 0 {
        return Err(KerrError::UncoupledMode(mode));
    }
    let lambda = spectrum
        .lambda(3, mode)
        .ok_or_else(|| KerrError::InvalidParams(format!("mode {mode} not in spectrum")))?;
    Ok(lambda * occupation)
}

/// Scan configuration for one probed mode.
#[derive(Debug, Clone, Copy)]
pub struct ScanConfig {
    /// Scan span in units of the probed mode's linewidth.
    pub span_linewidths: f64,
    pub n_points: usize,
    /// Targeted on-resonance P_s enhancement above the 10% bias; the probe
    /// power is chosen to reach it, capped by the linearity guard.
    pub target_delta_ps: f64,
    /// Pulses per scan point.
    pub n_pulses: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            span_linewidths: 12.0,
            n_points: 61,
            target_delta_ps: 0.5,
            n_pulses: 2000,
        }
    }
}

/// One probe-frequency sample of a spectroscopy scan.
#[derive(Debug, Clone, Copy)]
pub struct SpectroscopyPoint {
    pub nu_probe: f64,
    pub p_s: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Completed scan of one mode, with its Lorentzian line fit.
#[derive(Debug, Clone)]
pub struct SpectroscopyScan {
    pub mode: usize,
    pub points: Vec<SpectroscopyPoint>,
    /// Probe photon flux used, photons/s.
    pub probe_flux: f64,
    /// Bias drive frequency (P_s = 10% operating point), Hz.
    pub nu_bias: f64,
    /// Cross-Kerr coupling lambda_{3,mode}, Hz per photon.
    pub lambda: f64,
    /// Lorentzian fit: center, fwhm, amp, offset.
    pub fit: FitResult,
}

impl SpectroscopyScan {
    pub fn center(&self) -> f64 {
        self.fit.param("center").unwrap_or(f64::NAN)
    }

    pub fn center_sigma(&self) -> f64 {
        self.fit.sigma("center").unwrap_or(f64::NAN)
    }
}

/// Runs a cross-Kerr spectroscopy scan of `mode`.
///
/// The bifurcating mode is biased at P_s = 10% on its switching curve; each
/// scan point populates the probed mode, converts the occupation into a nu_3
/// pull, and samples `n_pulses` Bernoulli switching outcomes from the shifted
/// curve. The off-resonance baseline is re-measured at both scan ends and a
/// drift beyond 0.05 aborts the scan.
pub fn run_scan(setup: &SwitchingSetup, mode: usize, cfg: &ScanConfig) -> Result<SpectroscopyScan> {
    if mode % 2 == 0 {
        return Err(KerrError::UncoupledMode(mode));
    }
    if cfg.n_points < 8 || cfg.n_pulses == 0 {
        return Err(KerrError::Config(
            "scan needs >= 8 points and >= 1 pulse per point".into(),
        ));
    }
    let spectrum = kerr_coefficients(&setup.params, setup.flux, &[3, mode], &setup.linewidths)?;
    let i = spectrum.index_of(mode).unwrap();
    let (nu_n, gamma_n, k_n) = (
        spectrum.frequencies[i],
        spectrum.linewidths[i],
        spectrum.self_kerr[i],
    );
    let lambda = spectrum.lambda(3, mode).unwrap();
    if lambda == 0.0 {
        return Err(KerrError::UncoupledMode(mode));
    }

    let curve = setup.analytic_curve()?;
    let nu_bias = curve.nu_at_level(0.10)?;

    // Probe power for the requested on-resonance enhancement, capped by the
    // linearity guard of the probed mode.
    let target_level = (0.10 + cfg.target_delta_ps).min(0.95);
    let nu_target = curve.nu_at_level(target_level)?;
    let shift_needed = nu_bias - nu_target;
    if shift_needed <= 0.0 {
        return Err(KerrError::Config(
            "bias and target levels are inverted; cannot choose a probe power".into(),
        ));
    }
    let n_peak_guard = if k_n > 0.0 {
        0.1 * gamma_n / k_n
    } else {
        f64::INFINITY
    };
    let n_peak = (shift_needed / lambda).min(n_peak_guard);
    let probe_flux = 0.5 * gamma_n * n_peak;

    let span = cfg.span_linewidths * gamma_n;
    let step = span / (cfg.n_points - 1) as f64;
    let label = 0x5343_414e_u64 ^ mode as u64;
    let sample_point = |idx: u64, nu_probe: f64| -> Result<SpectroscopyPoint> {
        let occ = coupled_mode_occupation(&spectrum, mode, nu_probe, probe_flux)?;
        let shift = cross_kerr_shift(&spectrum, mode, occ)?;
        let p = curve.p_s(nu_bias - shift);
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::task_seed(setup.master_seed, label, idx));
        let switched = (0..cfg.n_pulses).filter(|_| rng.gen::<f64>() < p).count() as u64;
        let (ci_low, ci_high) = binomial_ci(switched, cfg.n_pulses as u64, 0.95);
        Ok(SpectroscopyPoint {
            nu_probe,
            p_s: switched as f64 / cfg.n_pulses as f64,
            ci_low,
            ci_high,
        })
    };

    let points: Vec<SpectroscopyPoint> = (0..cfg.n_points)
        .map(|k| {
            let nu_probe = nu_n - 0.5 * span + k as f64 * step;
            sample_point(k as u64, nu_probe)
        })
        .collect::<Result<_>>()?;

    // Bias stability: the off-resonance baseline at the two scan ends must
    // agree within 0.05.
    let before = points.first().unwrap().p_s;
    let after = points.last().unwrap().p_s;
    if (before - after).abs() > 0.05 {
        return Err(KerrError::BiasDrift { before, after });
    }

    let xs: Vec<f64> = points.iter().map(|p| p.nu_probe).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.p_s).collect();
    let fit = lorentzian_fit(&xs, &ys)?;
    Ok(SpectroscopyScan {
        mode,
        points,
        probe_flux,
        nu_bias,
        lambda,
        fit,
    })
}

/// Single-photon frequency sensitivity of the device: the S-curve width
/// expressed in photons of the probed mode, width / lambda_{3,mode}.
pub fn photon_sensitivity(width_10_90: f64, lambda: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Err(KerrError::UncoupledMode(0));
    }
    Ok(width_10_90 / lambda.abs())
}

/// Re-extracts the array participation from measured odd-mode centers.
///
/// Fits (nu1_bare, l_array) of the odd-mode resonance condition to the
/// centers, then converts to beta = l_array / (l_wg + l_array) with l_wg
/// taken from `template`. Returns the fit, beta, and its propagated sigma.
pub fn beta_from_mode_centers(
    template: &CircuitParams,
    centers: &[(usize, f64)],
) -> Result<(FitResult, f64, f64)> {
    if centers.len() < 3 {
        return Err(KerrError::InsufficientSpan(
            "need at least 3 mode centers for a 2-parameter fit".into(),
        ));
    }
    let xs: Vec<f64> = centers.iter().map(|(m, _)| *m as f64).collect();
    let ys: Vec<f64> = centers.iter().map(|(_, nu)| *nu).collect();
    let z0 = template.z0;
    let model = move |p: &[f64], x: f64| -> Result<f64> {
        odd_mode_frequency_for(p[0], z0, p[1], x as usize)
    };
    let l_array0 = template.l_array(crate::circuit::FluxPoint::new(0.0))?;
    let fit = levenberg_marquardt(
        &model,
        &xs,
        &ys,
        None,
        &[template.nu_fundamental_bare, l_array0],
        &[template.nu_fundamental_bare, l_array0],
        &["nu1_bare", "l_array"],
    )?;
    let l = fit.param("l_array").unwrap();
    let sigma_l = fit.sigma("l_array").unwrap();
    let beta = l / (template.l_wg + l);
    // d beta / d l = l_wg / (l_wg + l)^2.
    let dbeta_dl = template.l_wg / ((template.l_wg + l) * (template.l_wg + l));
    Ok((fit, beta, dbeta_dl * sigma_l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{FluxPoint, Linewidths};
    use crate::protocol::Engine;
    use approx::assert_relative_eq;

    fn full_spectrum() -> ModeSpectrum {
        let p = CircuitParams::sample_device();
        kerr_coefficients(&p, FluxPoint::new(0.0), &[1, 2, 3, 4, 5, 7], &Linewidths::single(212e3))
            .unwrap()
    }

    #[test]
    fn occupation_is_lorentzian() {
        let s = full_spectrum();
        let nu1 = s.frequency(1).unwrap();
        let g1 = s.linewidth(1).unwrap();
        let flux = 0.5 * g1 * 20.0; // 20 photons at the peak, inside the guard
        let peak = coupled_mode_occupation(&s, 1, nu1, flux).unwrap();
        assert_relative_eq!(peak, 2.0 * flux / g1, max_relative = 1e-12);
        // Adding half a linewidth to a GHz center rounds the detuning slightly.
        let half = coupled_mode_occupation(&s, 1, nu1 + 0.5 * g1, flux).unwrap();
        assert_relative_eq!(half, 0.5 * peak, max_relative = 1e-9);
    }

    #[test]
    fn linearity_guard_trips() {
        let s = full_spectrum();
        let g1 = s.linewidth(1).unwrap();
        let k1 = s.kerr(1).unwrap();
        // Peak occupation just past the guard.
        let n_bad = 0.11 * g1 / k1;
        let err =
            coupled_mode_occupation(&s, 1, s.frequency(1).unwrap(), 0.5 * g1 * n_bad).unwrap_err();
        assert!(matches!(err, KerrError::LinearityViolated { .. }));
    }

    #[test]
    fn shift_is_linear_in_occupation_and_rejects_even_modes() {
        let s = full_spectrum();
        let lam = s.lambda(3, 1).unwrap();
        assert_relative_eq!(
            cross_kerr_shift(&s, 1, 10.0).unwrap(),
            10.0 * lam,
            max_relative = 1e-12
        );
        assert!(matches!(
            cross_kerr_shift(&s, 2, 10.0),
            Err(KerrError::UncoupledMode(2))
        ));
    }

    #[test]
    fn scan_detects_mode_at_model_frequency() {
        let mut setup = SwitchingSetup::sample(Engine::Analytic);
        // Bias drive: upper spinodal at the reference detuning.
        let spectrum = setup.spectrum().unwrap();
        let (nu3, gamma, _) = spectrum.mode3();
        let env = setup.environment(nu3);
        let delta = crate::dynamics::delta_nu_for_width(&spectrum, &env, 0.5e-6).unwrap();
        let region = crate::dynamics::bistability_region(&spectrum).unwrap();
        let (_, upper) = region.spinodal_drives(delta).unwrap();
        setup.pulse.plateau_power = upper / (0.5 * gamma);

        let cfg = ScanConfig {
            n_pulses: 3000,
            ..ScanConfig::default()
        };
        let scan = run_scan(&setup, 1, &cfg).unwrap();
        let nu1_model = setup
            .params
            .mode_frequency(1, setup.flux)
            .unwrap();
        let err = (scan.center() - nu1_model).abs();
        let tol = scan.center_sigma().max(0.02 * setup.linewidths.gamma3());
        assert!(err < 3.0 * tol, "center off by {err} Hz (sigma {})", scan.center_sigma());
        // Enhancement peak sits above the 10% baseline.
        let peak = scan.points.iter().map(|p| p.p_s).fold(0.0, f64::max);
        assert!(peak > 0.4, "peak {peak}");
        assert!(scan.points.first().unwrap().p_s < 0.2);
    }

    #[test]
    fn beta_reextraction_roundtrip() {
        let p = CircuitParams::sample_device();
        let centers: Vec<(usize, f64)> = [1usize, 5, 7]
            .iter()
            .map(|&m| (m, p.mode_frequency(m, FluxPoint::new(0.0)).unwrap()))
            .collect();
        let (_, beta, sigma) = beta_from_mode_centers(&p, &centers).unwrap();
        let truth = p.beta(FluxPoint::new(0.0)).unwrap();
        assert!(
            (beta - truth).abs() < sigma.max(1e-6),
            "beta {beta} vs {truth} (sigma {sigma})"
        );
    }

    #[test]
    fn photon_sensitivity_examples() {
        let s = full_spectrum();
        let lam = s.lambda(3, 1).unwrap();
        let sens = photon_sensitivity(2.66e3, lam).unwrap();
        assert!(sens > 5.0 && sens < 25.0, "sensitivity {sens}");
    }
}
