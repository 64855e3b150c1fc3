//! Run configuration: a strict TOML schema (unknown keys are rejected) plus
//! the conversions into domain types. Config-file units are the laboratory
//! ones (uA, GHz, kHz, pF, nH, mK); everything internal is SI.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::circuit::{CircuitParams, FluxPoint, Linewidths};
use crate::dynamics::{bistability_region, delta_nu_for_width};
use crate::error::{KerrError, Result};
use crate::noise::{NoiseSpec, ResamplePolicy};
use crate::protocol::{Engine, PulseSpec, SwitchingSetup};

#[allow(non_snake_case)]
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub device: DeviceConfig,
    #[serde(default)]
    pub calibration: Option<CalibrationConfig>,
    #[serde(default)]
    pub operating_point: OperatingPointConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub pulse: PulseConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub tune: TuneConfig,
    #[serde(default)]
    pub scurve: ScurveConfig,
    #[serde(default)]
    pub spectroscopy: SpectroscopyConfig,
    #[serde(default)]
    pub noise_sweep: NoiseSweepConfig,
    #[serde(default)]
    pub fit: Option<FitConfig>,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub n_squids: usize,
    pub i_c_uA: f64,
    pub z0_ohm: f64,
    pub nu1_bare_GHz: f64,
    pub c_end_pF: f64,
    #[serde(default)]
    pub areal_dispersion: f64,
    /// FWHM linewidth per mode index; mode 3 is mandatory.
    pub gamma_per_mode_kHz: BTreeMap<String, f64>,
    /// Waveguide inductance; optional when a [calibration] section fixes it.
    #[serde(default)]
    pub l_wg_nH: Option<f64>,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub nu3_target_GHz: f64,
    pub beta_target: f64,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatingPointConfig {
    pub phi_reduced: f64,
    pub temperature_mK: f64,
    /// Explicit measure-plateau drive, photons/s. When absent, the drive is
    /// placed at the switching spinodal of the reference detuning implied by
    /// `target_width_ppm`.
    pub photon_flux: Option<f64>,
    /// Relative S-curve width target used to pick the reference detuning.
    pub target_width_ppm: f64,
}

impl Default for OperatingPointConfig {
    fn default() -> Self {
        Self {
            phi_reduced: 0.0,
            temperature_mK: 8.0,
            photon_flux: None,
            target_width_ppm: 0.5,
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub sigma_flux_uPhi0: f64,
    pub drive_amp_jitter: f64,
    pub drive_freq_jitter_kHz: f64,
    pub excess_freq_noise_kHz: f64,
    /// "per_pulse" or "per_curve".
    pub resample: String,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_flux_uPhi0: 0.0,
            drive_amp_jitter: 0.0,
            drive_freq_jitter_kHz: 0.0,
            excess_freq_noise_kHz: 0.0,
            resample: "per_pulse".into(),
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseConfig {
    pub t_measure_over_gamma: f64,
    pub t_latch_over_gamma: f64,
    pub latch_power_fraction: f64,
    pub repetition_rate_kHz: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self {
            t_measure_over_gamma: 20.0,
            t_latch_over_gamma: 100.0,
            latch_power_fraction: 0.8,
            repetition_rate_kHz: 5.0,
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub master_seed: u64,
    pub n_pulses: usize,
    pub n_curves: usize,
    /// "analytic" or "sde".
    pub engine: String,
    pub dt_over_gamma: f64,
    pub dwell_over_gamma: f64,
    pub detection_noise_photons: f64,
    /// Pin the analytic-engine 10-90 width to a measured value, kHz.
    pub width_override_kHz: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 1,
            n_pulses: 1000,
            n_curves: 1,
            engine: "analytic".into(),
            dt_over_gamma: 0.02,
            dwell_over_gamma: 5.0,
            detection_noise_photons: 20.0,
            width_override_kHz: None,
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneConfig {
    pub phi_min: f64,
    pub phi_max: f64,
    pub n_points: usize,
    pub modes: Vec<usize>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            phi_min: 0.0,
            phi_max: 0.45,
            n_points: 91,
            modes: vec![1, 2, 3, 4, 5],
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScurveConfig {
    /// Grid half-span in units of the calibrated 10-90 width.
    pub span_widths: f64,
    pub n_points: usize,
}

impl Default for ScurveConfig {
    fn default() -> Self {
        Self {
            span_widths: 4.0,
            n_points: 41,
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectroscopyConfig {
    pub modes: Vec<usize>,
    pub span_linewidths: f64,
    pub n_points: usize,
    pub target_delta_ps: f64,
}

impl Default for SpectroscopyConfig {
    fn default() -> Self {
        Self {
            modes: vec![1, 5, 7],
            span_linewidths: 12.0,
            n_points: 61,
            target_delta_ps: 0.5,
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSweepConfig {
    /// "flux", "temperature" or "power".
    pub axis: String,
    pub min: f64,
    pub max: f64,
    pub n_points: usize,
    /// Also estimate each width by Monte Carlo (slow).
    pub mc: bool,
    /// Monte Carlo pulses per S-curve point when `mc` is set.
    pub mc_pulses: usize,
}

impl Default for NoiseSweepConfig {
    fn default() -> Self {
        Self {
            axis: "flux".into(),
            min: 0.0,
            max: 0.4,
            n_points: 9,
            mc: false,
            mc_pulses: 2000,
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// "tuning", "scurve", "flux-noise" or "lorentzian".
    pub kind: String,
    /// CSV produced by one of the run subcommands.
    pub input: String,
    /// Attempt number (attempt frequency times pulse length) for "scurve".
    #[serde(default)]
    pub attempts: Option<f64>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| KerrError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| KerrError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Built-in configuration describing the reference device at its
    /// zero-flux operating point.
    pub fn builtin_default() -> Config {
        Self::parse(DEFAULT_CONFIG_TOML).expect("builtin config parses")
    }

    /// Device parameters in SI units, calibrated when a [calibration]
    /// section is present.
    pub fn device_params(&self) -> Result<CircuitParams> {
        let d = &self.device;
        let l_wg = match (d.l_wg_nH, &self.calibration) {
            (Some(l), _) => l * 1e-9,
            // Placeholder; replaced by the calibration below.
            (None, Some(_)) => 10e-9,
            (None, None) => {
                return Err(KerrError::Config(
                    "either device.l_wg_nH or a [calibration] section is required".into(),
                ))
            }
        };
        let raw = CircuitParams {
            n_squids: d.n_squids,
            i_c: d.i_c_uA * 1e-6,
            c_end: d.c_end_pF * 1e-12,
            nu_fundamental_bare: d.nu1_bare_GHz * 1e9,
            z0: d.z0_ohm,
            l_wg,
            areal_dispersion: d.areal_dispersion,
        };
        let params = match &self.calibration {
            Some(c) => raw.calibrated(c.nu3_target_GHz * 1e9, c.beta_target)?,
            None => raw,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn linewidths(&self) -> Result<Linewidths> {
        let mut map = BTreeMap::new();
        for (key, gamma_khz) in &self.device.gamma_per_mode_kHz {
            let mode: usize = key
                .parse()
                .map_err(|_| KerrError::Config(format!("bad mode index '{key}'")))?;
            map.insert(mode, gamma_khz * 1e3);
        }
        Linewidths::new(map)
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        let resample = match self.noise.resample.as_str() {
            "per_pulse" => ResamplePolicy::PerPulse,
            "per_curve" => ResamplePolicy::PerCurve,
            other => {
                return Err(KerrError::Config(format!(
                    "noise.resample must be per_pulse or per_curve, got '{other}'"
                )))
            }
        };
        let spec = NoiseSpec {
            sigma_flux: self.noise.sigma_flux_uPhi0 * 1e-6,
            drive_amp_jitter: self.noise.drive_amp_jitter,
            drive_freq_jitter: self.noise.drive_freq_jitter_kHz * 1e3,
            excess_freq_noise: self.noise.excess_freq_noise_kHz * 1e3,
            resample,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn engine(&self) -> Result<Engine> {
        match self.run.engine.as_str() {
            "analytic" => Ok(Engine::Analytic),
            "sde" => Ok(Engine::Sde),
            other => Err(KerrError::Config(format!(
                "run.engine must be analytic or sde, got '{other}'"
            ))),
        }
    }

    pub fn flux(&self) -> FluxPoint {
        FluxPoint::new(self.operating_point.phi_reduced)
    }

    pub fn temperature(&self) -> f64 {
        self.operating_point.temperature_mK * 1e-3
    }

    /// Measure-plateau photon flux: the configured value, or the upper
    /// spinodal drive at the reference detuning implied by the width target.
    pub fn resolve_photon_flux(&self) -> Result<f64> {
        if let Some(flux) = self.operating_point.photon_flux {
            if flux <= 0.0 {
                return Err(KerrError::Config("photon_flux must be positive".into()));
            }
            return Ok(flux);
        }
        let params = self.device_params()?;
        let spectrum =
            crate::circuit::kerr_coefficients(&params, self.flux(), &[3], &self.linewidths()?)?;
        let (nu3, gamma, _) = spectrum.mode3();
        let env = crate::dynamics::ThermalEnvironment::new(self.temperature(), nu3);
        let target = self.operating_point.target_width_ppm * 1e-6;
        // Clamp below at two linewidths: at strongly tuned flux points the
        // width target would call for a detuning inside the critical one,
        // where no bistable window exists.
        let delta = delta_nu_for_width(&spectrum, &env, target)?.max(2.0 * gamma);
        let region = bistability_region(&spectrum)?;
        let (_, upper) = region.spinodal_drives(delta)?;
        Ok(upper / (0.5 * gamma))
    }

    /// Assembles the full switching setup used by the run subcommands.
    pub fn switching_setup(&self) -> Result<SwitchingSetup> {
        let params = self.device_params()?;
        let linewidths = self.linewidths()?;
        let gamma3 = linewidths.gamma3();
        let pulse = PulseSpec {
            nu_d: 0.0,
            plateau_power: self.resolve_photon_flux()?,
            latch_power_fraction: self.pulse.latch_power_fraction,
            t_measure: self.pulse.t_measure_over_gamma / gamma3,
            t_latch: self.pulse.t_latch_over_gamma / gamma3,
            repetition_rate: self.pulse.repetition_rate_kHz * 1e3,
        };
        pulse.validate(gamma3)?;
        Ok(SwitchingSetup {
            params,
            linewidths,
            flux: self.flux(),
            temperature: self.temperature(),
            noise: self.noise_spec()?,
            pulse,
            engine: self.engine()?,
            dt_over_gamma: self.run.dt_over_gamma,
            dwell_over_gamma: self.run.dwell_over_gamma,
            width_override: self.run.width_override_kHz.map(|w| w * 1e3),
            n_pulses: self.run.n_pulses,
            master_seed: self.run.master_seed,
        })
    }
}

/// Reference-device configuration shipped with the binary.
pub const DEFAULT_CONFIG_TOML: &str = r#"
[device]
n_squids = 7
i_c_uA = 6.72
z0_ohm = 50.0
nu1_bare_GHz = 1.8
c_end_pF = 7.0
areal_dispersion = 0.04

[device.gamma_per_mode_kHz]
3 = 212.0

[calibration]
nu3_target_GHz = 5.32
beta_target = 0.0254

[operating_point]
phi_reduced = 0.0
temperature_mK = 8.0
target_width_ppm = 0.5
"#;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn builtin_config_builds_a_setup() {
        let cfg = Config::builtin_default();
        let setup = cfg.switching_setup().unwrap();
        let spectrum = setup.spectrum().unwrap();
        let (nu3, gamma, _) = spectrum.mode3();
        assert_relative_eq!(nu3, 5.32e9, max_relative = 1e-9);
        assert_relative_eq!(gamma, 212e3, max_relative = 1e-12);
        assert!(setup.pulse.plateau_power > 0.0);
        assert_eq!(setup.engine, Engine::Analytic);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{DEFAULT_CONFIG_TOML}\n[run]\nbogus_key = 1\n");
        let err = Config::parse(&text).unwrap_err();
        assert!(matches!(err, KerrError::Config(_)));
    }

    #[test]
    fn unit_conversions() {
        let cfg = Config::builtin_default();
        let p = cfg.device_params().unwrap();
        assert_relative_eq!(p.i_c, 6.72e-6, max_relative = 1e-12);
        assert_relative_eq!(p.c_end, 7e-12, max_relative = 1e-12);
        let lw = cfg.linewidths().unwrap();
        assert_relative_eq!(lw.gamma3(), 212e3, max_relative = 1e-12);
        assert_relative_eq!(cfg.temperature(), 0.008, max_relative = 1e-12);
    }

    #[test]
    fn missing_l_wg_without_calibration_is_an_error() {
        let text = r#"
[device]
n_squids = 7
i_c_uA = 6.72
z0_ohm = 50.0
nu1_bare_GHz = 1.8
c_end_pF = 7.0
[device.gamma_per_mode_kHz]
3 = 212.0
"#;
        let cfg = Config::parse(text).unwrap();
        assert!(matches!(cfg.device_params(), Err(KerrError::Config(_))));
    }

    #[test]
    fn bad_engine_and_resample_are_rejected() {
        let mut cfg = Config::builtin_default();
        cfg.run.engine = "magic".into();
        assert!(cfg.engine().is_err());
        let mut cfg2 = Config::builtin_default();
        cfg2.noise.resample = "sometimes".into();
        assert!(cfg2.noise_spec().is_err());
    }
}
