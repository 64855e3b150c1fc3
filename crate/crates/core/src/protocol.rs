//! Pulsed switching protocol: repeated drive pulses, switching-probability
//! estimation, S-curves and their 10-90 width extraction.
//!
//! Two interchangeable engines estimate the per-pulse switching probability.
//! `Engine::Sde` integrates a stochastic trajectory through the measure and
//! latch plateaus and uses the dynamical latch criterion. `Engine::Analytic`
//! draws Bernoulli outcomes from the calibrated activation-law curve; it is
//! orders of magnitude faster and is exact in the regime where the activation
//! law holds. Both engines see the same phenomenological noise sources and
//! the same seed schedule, so ensembles are reproducible and independent of
//! evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::circuit::{kerr_coefficients, CircuitParams, FluxPoint, Linewidths, ModeSpectrum};
use crate::dynamics::{
    run_sde, steady_state_raw, switch_thresholds, AnalyticSCurve, DriveSpec, SdeOptions,
    SdeSystem, ThermalEnvironment, C64,
};
use crate::error::{KerrError, Result};
use crate::noise::{NoiseSpec, ResamplePolicy};
use crate::seeds;
use crate::stats::{binomial_ci, pav_non_increasing, MonotoneCubic};

/// One measurement pulse: rectangular measure plateau followed by a hold
/// plateau at reduced power that latches the outcome.
#[derive(Debug, Clone, Copy)]
pub struct PulseSpec {
    /// Drive frequency, Hz.
    pub nu_d: f64,
    /// Photon flux during the measure plateau, photons/s.
    pub plateau_power: f64,
    /// Power fraction of the latch plateau, in [0, 1].
    pub latch_power_fraction: f64,
    /// Measure-plateau duration, s.
    pub t_measure: f64,
    /// Latch-plateau duration, s.
    pub t_latch: f64,
    /// Pulse repetition rate, Hz.
    pub repetition_rate: f64,
}

impl PulseSpec {
    /// Default timing for a mode of FWHM linewidth `gamma`: 20/gamma measure,
    /// 100/gamma latch at 80% power, 5 kHz repetition.
    pub fn for_linewidth(gamma: f64) -> Self {
        Self {
            nu_d: 0.0,
            plateau_power: 0.0,
            latch_power_fraction: 0.8,
            t_measure: 20.0 / gamma,
            t_latch: 100.0 / gamma,
            repetition_rate: 5e3,
        }
    }

    pub fn validate(&self, gamma: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&self.latch_power_fraction) {
            return Err(KerrError::Config(
                "latch_power_fraction must lie in [0, 1]".into(),
            ));
        }
        if self.t_measure <= 0.0 || self.t_latch < 0.0 || self.plateau_power < 0.0 {
            return Err(KerrError::Config(
                "pulse durations must be positive and power >= 0".into(),
            ));
        }
        if self.repetition_rate <= 0.0 || 1.0 / self.repetition_rate < 10.0 / gamma {
            return Err(KerrError::Config(
                "repetition period must be at least 10/gamma".into(),
            ));
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.t_measure + self.t_latch
    }

    /// Residual photon fraction left from the previous pulse, relative to the
    /// low-branch steady value: exp(-2 pi gamma t_idle) for the idle gap
    /// between the end of one pulse and the start of the next.
    pub fn reset_residual(&self, gamma: f64) -> f64 {
        let gap = (1.0 / self.repetition_rate - self.total_duration()).max(0.0);
        (-2.0 * std::f64::consts::PI * gamma * gap).exp()
    }

    /// Fails unless the idle gap relaxes the mode below 1e-3 of the
    /// low-branch steady value before the next pulse.
    pub fn check_reset(&self, gamma: f64) -> Result<()> {
        let residual = self.reset_residual(gamma);
        if residual >= 1e-3 {
            return Err(KerrError::Config(format!(
                "pre-pulse residual occupation {residual:.2e} >= 1e-3; lower the repetition rate"
            )));
        }
        Ok(())
    }
}

/// Switching-probability engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    /// Bernoulli draws from the calibrated activation-law curve.
    Analytic,
    /// Full stochastic-trajectory integration.
    Sde,
}

/// Everything needed to estimate switching probabilities at one operating
/// point.
#[derive(Debug, Clone)]
pub struct SwitchingSetup {
    pub params: CircuitParams,
    pub linewidths: Linewidths,
    pub flux: FluxPoint,
    /// Fridge temperature, K.
    pub temperature: f64,
    pub noise: NoiseSpec,
    pub pulse: PulseSpec,
    pub engine: Engine,
    /// Integration step in units of 1/gamma (SDE engine).
    pub dt_over_gamma: f64,
    /// Dwell time for the latch criterion in units of 1/gamma.
    pub dwell_over_gamma: f64,
    /// Pin the activation-law 10-90 width to a measured value instead of the
    /// activation-theory prediction.
    pub width_override: Option<f64>,
    /// Pulses per probability estimate.
    pub n_pulses: usize,
    /// Master seed of the experiment.
    pub master_seed: u64,
}

impl SwitchingSetup {
    /// Baseline setup at the sample operating point.
    pub fn sample(engine: Engine) -> Self {
        let gamma3 = 212e3;
        Self {
            params: CircuitParams::sample_device(),
            linewidths: Linewidths::single(gamma3),
            flux: FluxPoint::new(0.0),
            temperature: 0.008,
            noise: NoiseSpec::off(),
            pulse: PulseSpec::for_linewidth(gamma3),
            engine: Engine::Analytic,
            dt_over_gamma: 0.02,
            dwell_over_gamma: 5.0,
            width_override: None,
            n_pulses: 1000,
            master_seed: 1,
        }
        .with_engine(engine)
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    /// Mode-3 spectrum at the nominal flux.
    pub fn spectrum(&self) -> Result<ModeSpectrum> {
        kerr_coefficients(&self.params, self.flux, &[3], &self.linewidths)
    }

    pub fn environment(&self, nu3: f64) -> ThermalEnvironment {
        ThermalEnvironment::new(self.temperature, nu3)
    }

    /// Calibrated activation-law curve at the nominal operating point.
    pub fn analytic_curve(&self) -> Result<AnalyticSCurve> {
        let spectrum = self.spectrum()?;
        let env = self.environment(spectrum.mode3().0);
        AnalyticSCurve::calibrate(
            &spectrum,
            &env,
            self.pulse.plateau_power,
            self.pulse.t_measure,
            self.width_override,
        )
    }

    /// Quasi-static flux offset for pulse `(curve, point, pulse)` under the
    /// configured resampling policy.
    fn flux_offset(&self, curve: u64, point: u64, pulse: u64) -> f64 {
        let seed = match self.noise.resample {
            ResamplePolicy::PerPulse => {
                seeds::pulse_noise_seed(self.master_seed, curve, point, pulse)
            }
            ResamplePolicy::PerCurve => seeds::curve_noise_seed(self.master_seed, curve),
        };
        self.noise.sample_quasistatic_flux(seed)
    }

    /// Frequency pull of mode 3 produced by a quasi-static flux offset,
    /// evaluated on the exact tuning curve.
    fn nu3_shift(&self, nu3_nominal: f64, delta_phi: f64) -> Result<f64> {
        if delta_phi == 0.0 {
            return Ok(0.0);
        }
        let shifted = self
            .params
            .mode_frequency(3, self.flux.offset(delta_phi))?;
        Ok(shifted - nu3_nominal)
    }

    /// Estimates P_s at drive frequency `nu_d` from `n_pulses` pulses,
    /// fanning the pulses out over the thread pool. `curve` and `point`
    /// index the seed schedule.
    pub fn switching_probability(&self, nu_d: f64, curve: u64, point: u64) -> Result<SCurvePoint> {
        let spectrum = self.spectrum()?;
        let (nu3, gamma, _) = spectrum.mode3();
        self.pulse.validate(gamma)?;
        self.noise.validate()?;
        let env = self.environment(nu3);

        let switched: u64 = match self.engine {
            Engine::Analytic => {
                let ctx = self.analytic_context(&spectrum)?;
                (0..self.n_pulses as u64)
                    .into_par_iter()
                    .map(|pulse| {
                        let dphi = self.flux_offset(curve, point, pulse);
                        let shift = self.nu3_shift(nu3, dphi)?;
                        let seed = seeds::pulse_seed(self.master_seed, curve, point, pulse);
                        Ok(u64::from(ctx.draw(nu_d, shift, &self.noise, seed)))
                    })
                    .try_reduce(|| 0u64, |a, b| Ok(a + b))?
            }
            Engine::Sde => (0..self.n_pulses as u64)
                .into_par_iter()
                .map(|pulse| {
                    let dphi = self.flux_offset(curve, point, pulse);
                    let shift = self.nu3_shift(nu3, dphi)?;
                    let seed = seeds::pulse_seed(self.master_seed, curve, point, pulse);
                    let sw =
                        self.sde_pulse(&spectrum.with_nu3_shift(shift), &env, nu_d, gamma, seed)?;
                    Ok(u64::from(sw))
                })
                .try_reduce(|| 0u64, |a, b| Ok(a + b))?,
        };

        let n = self.n_pulses as u64;
        let p_s = switched as f64 / n as f64;
        let (ci_low, ci_high) = binomial_ci(switched, n, 0.95);
        Ok(SCurvePoint {
            nu_d,
            p_s,
            ci_low,
            ci_high,
            n_switched: switched,
            n_pulses: n,
        })
    }

    /// One stochastic pulse; returns the dynamical latch decision. Pulses
    /// whose branch structure cannot bifurcate (drive below the lower
    /// spinodal, or detuning inside the monostable window) never switch.
    fn sde_pulse(
        &self,
        spectrum: &ModeSpectrum,
        env: &ThermalEnvironment,
        nu_d: f64,
        gamma: f64,
        seed: u64,
    ) -> Result<bool> {
        let drive = DriveSpec {
            nu_d,
            photon_flux: self.pulse.plateau_power,
            duration: self.pulse.t_measure,
        };
        let opts = SdeOptions {
            dt: self.dt_over_gamma / gamma,
            t_max: self.pulse.t_measure,
            dwell: self.dwell_over_gamma / gamma,
            alpha0: C64::new(0.0, 0.0),
            prepare_low_branch: true,
            record_every: 0,
            early_exit: true,
        };
        match crate::dynamics::simulate_trajectory(spectrum, env, &drive, &self.noise, seed, &opts)
        {
            Ok(out) => Ok(out.switched),
            Err(KerrError::NonconvergentBranches) => Ok(false),
            Err(e) => Err(e),
        }
    }

    /// Analytic-engine context shared by all pulses of a point: the
    /// calibrated curve plus the power sensitivity of the spinodal.
    fn analytic_context(&self, spectrum: &ModeSpectrum) -> Result<AnalyticContext> {
        let env = self.environment(spectrum.mode3().0);
        let curve = AnalyticSCurve::calibrate(
            spectrum,
            &env,
            self.pulse.plateau_power,
            self.pulse.t_measure,
            self.width_override,
        )?;
        // d nu_sw / d ln(power) from a symmetric relative step.
        let rel = 0.01;
        let up = AnalyticSCurve::calibrate(
            spectrum,
            &env,
            self.pulse.plateau_power * (1.0 + rel),
            self.pulse.t_measure,
            self.width_override,
        )?;
        let dn = AnalyticSCurve::calibrate(
            spectrum,
            &env,
            self.pulse.plateau_power * (1.0 - rel),
            self.pulse.t_measure,
            self.width_override,
        )?;
        let dlnp = (1.0 + rel).ln() - (1.0 - rel).ln();
        let dnu_sw_dlnp = (up.nu_sw - dn.nu_sw) / dlnp;
        Ok(AnalyticContext {
            curve,
            dnu_sw_dlnp,
        })
    }

    /// Acquires a full S-curve over the given frequency grid.
    pub fn s_curve(&self, grid: &[f64], curve_index: u64) -> Result<SCurve> {
        if grid.len() < 2 {
            return Err(KerrError::Config("frequency grid needs >= 2 points".into()));
        }
        let points: Vec<SCurvePoint> = grid
            .iter()
            .enumerate()
            .map(|(i, &nu_d)| self.switching_probability(nu_d, curve_index, i as u64))
            .collect::<Result<_>>()?;
        let curve = SCurve {
            points,
            curve_index,
        };
        let (lo, hi) = curve.p_range();
        if lo > 0.1 || hi < 0.9 {
            return Err(KerrError::GridTooNarrow { lo, hi });
        }
        Ok(curve)
    }

    /// Acquires `n_curves` repeated S-curves over the same grid.
    pub fn s_curves(&self, grid: &[f64], n_curves: usize) -> Result<Vec<SCurve>> {
        (0..n_curves as u64).map(|c| self.s_curve(grid, c)).collect()
    }
}

/// Per-point analytic-engine state.
struct AnalyticContext {
    curve: AnalyticSCurve,
    dnu_sw_dlnp: f64,
}

impl AnalyticContext {
    /// One Bernoulli pulse. Draw order per pulse: amplitude jitter, frequency
    /// jitter, excess frequency noise, then the Bernoulli uniform; matches the
    /// trajectory engine's per-pulse draws.
    fn draw(&self, nu_d: f64, nu3_shift: f64, noise: &NoiseSpec, seed: u64) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let za: f64 = StandardNormal.sample(&mut rng);
        let zf: f64 = StandardNormal.sample(&mut rng);
        let zn: f64 = StandardNormal.sample(&mut rng);
        let amp_factor = (1.0 + noise.drive_amp_jitter * za).max(0.0);
        // Relative power change 2 ln(amp_factor) moves the spinodal.
        let d_power = if amp_factor > 0.0 {
            2.0 * amp_factor.ln() * self.dnu_sw_dlnp
        } else {
            0.0
        };
        let nu_sw_shift = nu3_shift + noise.excess_freq_noise * zn + d_power;
        let nu_d_eff = nu_d + noise.drive_freq_jitter * zf;
        let p = self.curve.p_s(nu_d_eff - nu_sw_shift);
        rng.gen::<f64>() < p
    }
}

/// One switching-probability estimate.
#[derive(Debug, Clone, Copy)]
pub struct SCurvePoint {
    pub nu_d: f64,
    pub p_s: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_switched: u64,
    pub n_pulses: u64,
}

/// A switching-probability curve over a frequency grid.
#[derive(Debug, Clone)]
pub struct SCurve {
    pub points: Vec<SCurvePoint>,
    pub curve_index: u64,
}

impl SCurve {
    pub fn frequencies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.nu_d).collect()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.p_s).collect()
    }

    fn p_range(&self) -> (f64, f64) {
        let mut lo = 1.0_f64;
        let mut hi = 0.0_f64;
        for p in &self.points {
            lo = lo.min(p.p_s);
            hi = hi.max(p.p_s);
        }
        (lo, hi)
    }

    /// 10-90% width, via isotonic regression and monotone-cubic level
    /// crossings.
    pub fn width_10_90(&self) -> Result<f64> {
        width_10_90(
            &self.frequencies(),
            &self.probabilities(),
            &self
                .points
                .iter()
                .map(|p| p.n_pulses as f64)
                .collect::<Vec<_>>(),
        )
    }

    /// Frequency at which the monotone fit crosses `level`.
    pub fn nu_at_level(&self, level: f64) -> Result<f64> {
        let interp = monotone_fit(
            &self.frequencies(),
            &self.probabilities(),
            &self
                .points
                .iter()
                .map(|p| p.n_pulses as f64)
                .collect::<Vec<_>>(),
        )?;
        interp.crossing(level)
    }
}

/// Pools repeated curves point-by-point into a mean curve; confidence
/// intervals come from the pooled pulse counts.
pub fn average_curves(curves: &[SCurve]) -> Result<SCurve> {
    let first = curves
        .first()
        .ok_or_else(|| KerrError::DegenerateData("no curves to average".into()))?;
    let n_pts = first.points.len();
    if curves.iter().any(|c| c.points.len() != n_pts) {
        return Err(KerrError::DegenerateData(
            "curves have mismatched grids".into(),
        ));
    }
    let points = (0..n_pts)
        .map(|i| {
            let nu_d = first.points[i].nu_d;
            let switched: u64 = curves.iter().map(|c| c.points[i].n_switched).sum();
            let total: u64 = curves.iter().map(|c| c.points[i].n_pulses).sum();
            let (ci_low, ci_high) = binomial_ci(switched, total, 0.95);
            SCurvePoint {
                nu_d,
                p_s: switched as f64 / total as f64,
                ci_low,
                ci_high,
                n_switched: switched,
                n_pulses: total,
            }
        })
        .collect();
    Ok(SCurve {
        points,
        curve_index: u64::MAX,
    })
}

/// Monotone fit of a probability curve: isotonic regression in the detected
/// orientation followed by a monotone cubic interpolant.
fn monotone_fit(nu: &[f64], p: &[f64], weights: &[f64]) -> Result<MonotoneCubic> {
    if nu.len() < 2 {
        return Err(KerrError::DegenerateData("need >= 2 curve points".into()));
    }
    if nu.windows(2).any(|w| w[1] <= w[0]) {
        return Err(KerrError::DegenerateData(
            "frequency grid must be strictly increasing".into(),
        ));
    }
    // Orientation from the ends of the raw curve.
    let k = (nu.len() / 3).max(1);
    let head: f64 = p[..k].iter().sum::<f64>() / k as f64;
    let tail: f64 = p[p.len() - k..].iter().sum::<f64>() / k as f64;
    let fitted = if head >= tail {
        pav_non_increasing(p, weights)
    } else {
        let neg: Vec<f64> = p.iter().map(|y| -y).collect();
        pav_non_increasing(&neg, weights)
            .into_iter()
            .map(|y| -y)
            .collect()
    };
    MonotoneCubic::new(nu, &fitted)
}

/// 10-90% width of a probability curve on a strictly increasing grid.
pub fn width_10_90(nu: &[f64], p: &[f64], weights: &[f64]) -> Result<f64> {
    let interp = monotone_fit(nu, p, weights)?;
    let a = interp.crossing(0.1)?;
    let b = interp.crossing(0.9)?;
    Ok((a - b).abs())
}

/// Full two-plateau pulse with homodyne-style readout.
#[derive(Debug, Clone)]
pub struct PulseOutcome {
    /// Threshold decision on the trace integrated over the latch window.
    pub switched: bool,
    /// Dwell-latch decision from the underlying trajectory.
    pub dynamical_switch: bool,
    pub switch_time: Option<f64>,
    /// (t, alpha + detection noise) samples.
    pub trace: Vec<(f64, C64)>,
    /// Photon-number threshold used for the decision.
    pub threshold: f64,
    /// Noise-corrected mean photon number over the latch window.
    pub latch_mean_photons: f64,
}

/// Drives one full measure+latch pulse, records the transmitted quadrature
/// trace with additive detection noise, and thresholds the latch-window
/// average at the midpoint of the two branch photon numbers.
///
/// `detection_noise_photons` is the equivalent amplifier noise photon number
/// per recorded sample.
pub fn run_pulse(
    spectrum: &ModeSpectrum,
    env: &ThermalEnvironment,
    pulse: &PulseSpec,
    noise: &NoiseSpec,
    detection_noise_photons: f64,
    dt: f64,
    dwell: f64,
    record_every: usize,
    seed: u64,
) -> Result<PulseOutcome> {
    let (nu3, gamma, kerr) = spectrum.mode3();
    let dt_max = 0.02 / gamma;
    if dt > dt_max * (1.0 + 1e-12) {
        return Err(KerrError::StepSizeTooLarge { dt, max: dt_max });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let za: f64 = StandardNormal.sample(&mut rng);
    let zf: f64 = StandardNormal.sample(&mut rng);
    let zn: f64 = StandardNormal.sample(&mut rng);
    let amp_factor = (1.0 + noise.drive_amp_jitter * za).max(0.0);
    let nu_d = pulse.nu_d + noise.drive_freq_jitter * zf;
    let delta_nu = nu_d - (nu3 + noise.excess_freq_noise * zn);
    let f = 0.5 * gamma * pulse.plateau_power * amp_factor * amp_factor;

    // Decision threshold: midpoint of the branch photon numbers under the
    // latch drive when it is bistable, otherwise under the measure drive;
    // an undriven or monostable pulse can never read out as switched.
    let f_latch = f * pulse.latch_power_fraction;
    let thresholds = switch_thresholds(delta_nu, gamma, kerr, f_latch)
        .or_else(|_| switch_thresholds(delta_nu, gamma, kerr, f))
        .unwrap_or(crate::dynamics::SwitchThresholds {
            n_cross: f64::INFINITY,
            n_mid: f64::INFINITY,
        });

    let system = SdeSystem::new(delta_nu, gamma, kerr, f, env.n_eff);
    let latch_amp = pulse.latch_power_fraction.sqrt();
    let t_measure = pulse.t_measure;
    // Start on the metastable low branch: this stands in for the adiabatic
    // rise of the experimental pulse. A sudden step from vacuum would instead
    // overshoot into the high-amplitude basin well beyond the spinodal and
    // bury the activated switching statistics under a deterministic
    // ring-up transient.
    let n_low = steady_state_raw(delta_nu, gamma, kerr, f).low();
    let opts = SdeOptions {
        dt,
        t_max: pulse.total_duration(),
        dwell,
        alpha0: system.steady_amplitude(n_low),
        prepare_low_branch: false,
        record_every: record_every.max(1),
        early_exit: false,
    };
    let out = run_sde(
        &system,
        move |t| if t < t_measure { 1.0 } else { latch_amp },
        thresholds,
        &opts,
        &mut rng,
    )?;

    // Detection noise is drawn from a dedicated stream so the dynamics do not
    // depend on the recording cadence.
    let mut det_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4445_5445_4354);
    let sigma = (0.5 * detection_noise_photons).sqrt();
    let trace: Vec<(f64, C64)> = out
        .trace
        .iter()
        .map(|&(t, a)| {
            let zx: f64 = StandardNormal.sample(&mut det_rng);
            let zy: f64 = StandardNormal.sample(&mut det_rng);
            (t, a + C64::new(zx, zy) * sigma)
        })
        .collect();

    // Integrate the noisy trace over the latch window; subtracting the noise
    // floor makes the estimate unbiased.
    let latch_samples: Vec<f64> = trace
        .iter()
        .filter(|(t, _)| *t >= t_measure)
        .map(|(_, a)| a.norm_sqr())
        .collect();
    let latch_mean = if latch_samples.is_empty() {
        0.0
    } else {
        latch_samples.iter().sum::<f64>() / latch_samples.len() as f64 - detection_noise_photons
    };
    Ok(PulseOutcome {
        switched: latch_mean > thresholds.n_mid,
        dynamical_switch: out.switched,
        switch_time: out.switch_time,
        trace,
        threshold: thresholds.n_mid,
        latch_mean_photons: latch_mean,
    })
}

/// Photon number of the low branch under the measure drive, used by the
/// reset invariant.
pub fn low_branch_photons(spectrum: &ModeSpectrum, pulse: &PulseSpec) -> Result<f64> {
    let (nu3, gamma, kerr) = spectrum.mode3();
    let f = 0.5 * gamma * pulse.plateau_power;
    Ok(steady_state_raw(pulse.nu_d - nu3, gamma, kerr, f).low())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{bistability_region, delta_nu_for_width};

    /// Operating point at the reference detuning with the drive placed at the
    /// spinodal of that detuning.
    fn reference_setup(engine: Engine) -> (SwitchingSetup, f64) {
        let mut setup = SwitchingSetup::sample(engine);
        let spectrum = setup.spectrum().unwrap();
        let (nu3, gamma, _) = spectrum.mode3();
        let env = setup.environment(nu3);
        let delta = delta_nu_for_width(&spectrum, &env, 0.5e-6).unwrap();
        let region = bistability_region(&spectrum).unwrap();
        let (_, upper) = region.spinodal_drives(delta).unwrap();
        setup.pulse.plateau_power = upper / (0.5 * gamma);
        (setup, nu3 + delta)
    }

    #[test]
    fn reset_invariant() {
        let gamma = 212e3;
        let mut pulse = PulseSpec::for_linewidth(gamma);
        // Default 5 kHz leaves no idle gap after a 120/gamma pulse; 1 kHz
        // leaves ~92/gamma of relaxation.
        pulse.repetition_rate = 1e3;
        pulse.validate(gamma).unwrap();
        assert!(pulse.reset_residual(gamma) < 1e-3);
        pulse.check_reset(gamma).unwrap();
        let mut too_fast = pulse;
        too_fast.repetition_rate = 1.0 / (pulse.total_duration() + 1.0 / gamma);
        assert!(too_fast.check_reset(gamma).is_err());
    }

    #[test]
    fn analytic_point_estimates_track_the_curve() {
        let (mut setup, _) = reference_setup(Engine::Analytic);
        setup.n_pulses = 4000;
        let curve = setup.analytic_curve().unwrap();
        for level in [0.2, 0.5, 0.8] {
            let nu = curve.nu_at_level(level).unwrap();
            let pt = setup.switching_probability(nu, 0, 0).unwrap();
            assert!(
                pt.ci_low <= level + 0.02 && level - 0.02 <= pt.ci_high,
                "level {level}: p = {} ci = ({}, {})",
                pt.p_s,
                pt.ci_low,
                pt.ci_high
            );
        }
    }

    #[test]
    fn estimates_are_order_independent_and_deterministic() {
        let (mut setup, _) = reference_setup(Engine::Analytic);
        setup.n_pulses = 2000;
        let nu = setup.analytic_curve().unwrap().nu_at_level(0.5).unwrap();
        let a = setup.switching_probability(nu, 0, 0).unwrap();
        let b = setup.switching_probability(nu, 0, 0).unwrap();
        assert_eq!(a.n_switched, b.n_switched);
        // A single-thread pool must reproduce the default pool's count.
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let c = pool.install(|| setup.switching_probability(nu, 0, 0)).unwrap();
        assert_eq!(a.n_switched, c.n_switched);
    }

    #[test]
    fn s_curve_width_matches_calibration() {
        let (mut setup, _) = reference_setup(Engine::Analytic);
        setup.n_pulses = 3000;
        let curve = setup.analytic_curve().unwrap();
        let center = curve.nu_at_level(0.5).unwrap();
        let w = curve.width_10_90();
        let grid: Vec<f64> = (0..41).map(|i| center + (i as f64 - 20.0) * 0.15 * w).collect();
        let measured = setup.s_curve(&grid, 0).unwrap();
        let width = measured.width_10_90().unwrap();
        assert!(
            (width - w).abs() < 0.2 * w,
            "width {width} vs calibrated {w}"
        );
    }

    #[test]
    fn averaging_noise_free_curves_preserves_width() {
        let (mut setup, _) = reference_setup(Engine::Analytic);
        setup.n_pulses = 20_000;
        let curve = setup.analytic_curve().unwrap();
        let center = curve.nu_at_level(0.5).unwrap();
        let w = curve.width_10_90();
        let grid: Vec<f64> = (0..61).map(|i| center + (i as f64 - 30.0) * 0.12 * w).collect();
        let curves = setup.s_curves(&grid, 8).unwrap();
        let avg = average_curves(&curves).unwrap();
        let w_single = curves[0].width_10_90().unwrap();
        let w_avg = avg.width_10_90().unwrap();
        assert!(
            (w_avg - w_single).abs() < 0.01 * w_single,
            "avg {w_avg} vs single {w_single}"
        );
    }

    #[test]
    fn sde_pulse_beyond_spinodal_switches() {
        let (mut setup, nu_bias) = reference_setup(Engine::Sde);
        setup.n_pulses = 20;
        // Just inside the spinodal: deterministic switching.
        let pt = setup
            .switching_probability(nu_bias - 50e3, 0, 0)
            .unwrap();
        assert!(pt.p_s > 0.95, "p = {}", pt.p_s);
        // Far on the metastable side: no switching.
        let far = setup
            .switching_probability(nu_bias + 300e3, 0, 1)
            .unwrap();
        assert!(far.p_s < 0.05, "p = {}", far.p_s);
    }

    #[test]
    fn zero_drive_pulse_reads_out_unswitched() {
        let setup = SwitchingSetup::sample(Engine::Sde);
        let spectrum = setup.spectrum().unwrap();
        let (nu3, gamma, _) = spectrum.mode3();
        let env = ThermalEnvironment::noiseless();
        let mut pulse = PulseSpec::for_linewidth(gamma);
        pulse.nu_d = nu3;
        let out = run_pulse(
            &spectrum,
            &env,
            &pulse,
            &NoiseSpec::off(),
            20.0,
            0.02 / gamma,
            5.0 / gamma,
            4,
            3,
        )
        .unwrap();
        assert!(!out.switched);
        assert!(!out.dynamical_switch);
        // Trace is detection noise only: RMS photon number near the noise
        // floor of 20 per sample.
        let mean_n: f64 =
            out.trace.iter().map(|(_, a)| a.norm_sqr()).sum::<f64>() / out.trace.len() as f64;
        assert!((mean_n - 20.0).abs() < 3.0, "mean {mean_n}");
    }

    #[test]
    fn full_pulse_latches_the_switched_state() {
        let (setup, _) = reference_setup(Engine::Sde);
        let spectrum = setup.spectrum().unwrap();
        let (nu3, gamma, _) = spectrum.mode3();
        let env = ThermalEnvironment::noiseless();
        let region = bistability_region(&spectrum).unwrap();
        let delta = 4.1 * gamma;
        let (_, upper) = region.spinodal_drives(delta).unwrap();
        let mut pulse = setup.pulse;
        pulse.nu_d = nu3 + delta;
        pulse.plateau_power = 1.3 * upper / (0.5 * gamma);
        let out = run_pulse(
            &spectrum,
            &env,
            &pulse,
            &NoiseSpec::off(),
            20.0,
            0.005 / gamma,
            5.0 / gamma,
            8,
            5,
        )
        .unwrap();
        assert!(out.dynamical_switch);
        assert!(out.switched, "latch mean {} vs threshold {}", out.latch_mean_photons, out.threshold);
    }

    #[test]
    fn grid_too_narrow_is_detected() {
        let (mut setup, _) = reference_setup(Engine::Analytic);
        setup.n_pulses = 200;
        let curve = setup.analytic_curve().unwrap();
        let center = curve.nu_at_level(0.5).unwrap();
        let w = curve.width_10_90();
        // A grid much narrower than the transition cannot span 0.1..0.9.
        let grid: Vec<f64> = (0..5).map(|i| center + (i as f64 - 2.0) * 0.02 * w).collect();
        let err = setup.s_curve(&grid, 0).unwrap_err();
        assert!(matches!(err, KerrError::GridTooNarrow { .. }));
    }
}
