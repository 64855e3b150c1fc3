//! Driven Kerr-oscillator dynamics: rotating-frame steady states, bistability
//! boundaries, effective temperature, the activation-law switching model and
//! a stochastic-trajectory integrator that serves as its brute-force oracle.
//!
//! Conventions. All frequencies are plain Hz (nu, gamma FWHM, Kerr per
//! photon). The steady-state photon number n obeys the cubic
//!
//! ```text
//! n [ (delta_nu - 2 K n)^2 + (gamma/2)^2 ] = F
//! ```
//!
//! with F = (gamma/2) * photon_flux in Hz^2 units (symmetric two-port,
//! external coupling gamma_ext = gamma/2). The corresponding amplitude
//! equation, integrated by the trajectory oracle, is
//!
//! ```text
//! d alpha = [ i 2 pi (delta_nu - 2 K |alpha|^2) - pi gamma ] alpha dt
//!           - i 2 pi sqrt(F) dt + dW,
//! ```
//!
//! where dW is complex Gaussian noise with total variance
//! pi gamma n_eff dt (n_eff photons per unit amplitude-decay rate, i.e.
//! per-component variance pi gamma n_eff dt / 2). With this normalization
//! the stochastic switching statistics reproduce the activation-law width
//! of the analytic model; the undriven linear cavity settles to
//! <|alpha|^2> = n_eff / 2.

use nalgebra::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

use crate::circuit::ModeSpectrum;
use crate::constants::{BOLTZMANN, PLANCK};
use crate::error::{KerrError, Result};
use crate::noise::NoiseSpec;

pub type C64 = Complex<f64>;

/// Conversion between the cubic-model onset photon number and the reported
/// critical photon number N_c = 2 gamma / (sqrt(3) K). The two conventions
/// differ by this exact constant factor for every parameter set.
pub const ONSET_TO_REPORTED: f64 = 4.0;

/// CW or pulsed drive applied to the bifurcating mode.
#[derive(Debug, Clone, Copy)]
pub struct DriveSpec {
    /// Drive frequency, Hz.
    pub nu_d: f64,
    /// Injected photon flux, photons/s; encodes microwave power.
    pub photon_flux: f64,
    /// Pulse duration, s.
    pub duration: f64,
}

impl DriveSpec {
    pub fn validate(&self) -> Result<()> {
        if self.photon_flux < 0.0 || self.duration <= 0.0 {
            return Err(KerrError::InvalidParams(
                "photon_flux must be >= 0 and duration > 0".into(),
            ));
        }
        Ok(())
    }

    /// Cubic-model drive strength F = gamma_ext * photon_flux, Hz^2, with
    /// gamma_ext = gamma/2.
    pub fn strength(&self, gamma: f64) -> f64 {
        0.5 * gamma * self.photon_flux
    }
}

/// Effective temperature (h nu / 2 k_B) coth(h nu / 2 k_B T); the T = 0 limit
/// is h nu / 2 k_B exactly.
pub fn effective_temperature(temperature: f64, nu: f64) -> f64 {
    let quantum = PLANCK * nu / (2.0 * BOLTZMANN);
    if temperature <= 0.0 {
        return quantum;
    }
    let x = quantum / temperature;
    if x > 20.0 {
        quantum
    } else {
        quantum / x.tanh()
    }
}

/// Thermal environment of the mode: fridge temperature, effective
/// temperature, and the occupation-equivalent noise strength.
#[derive(Debug, Clone, Copy)]
pub struct ThermalEnvironment {
    /// Fridge temperature, K.
    pub temperature: f64,
    /// Effective temperature, K.
    pub t_eff: f64,
    /// k_B T_eff / (h nu): 1/2 at T = 0.
    pub n_eff: f64,
}

impl ThermalEnvironment {
    pub fn new(temperature: f64, nu: f64) -> Self {
        let t_eff = effective_temperature(temperature, nu);
        Self {
            temperature,
            t_eff,
            n_eff: BOLTZMANN * t_eff / (PLANCK * nu),
        }
    }

    /// Zero-noise environment, for deterministic trajectories.
    pub fn noiseless() -> Self {
        Self {
            temperature: 0.0,
            t_eff: 0.0,
            n_eff: 0.0,
        }
    }
}

/// Stability label of a steady-state branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
}

/// Steady-state branches at a given drive, sorted by photon number.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub branches: Vec<(f64, Stability)>,
    /// Set when two branches (nearly) merge at a spinodal.
    pub degenerate: bool,
}

impl SteadyState {
    pub fn is_bistable(&self) -> bool {
        self.branches.len() == 3
    }

    pub fn low(&self) -> f64 {
        self.branches[0].0
    }

    pub fn high(&self) -> f64 {
        self.branches[self.branches.len() - 1].0
    }

    pub fn unstable(&self) -> Option<f64> {
        self.branches
            .iter()
            .find(|(_, s)| *s == Stability::Unstable)
            .map(|(n, _)| *n)
    }
}

/// Real roots of a x^3 + b x^2 + c x + d, ascending. Roots are polished with
/// Newton steps on the original polynomial.
fn solve_cubic(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    if a == 0.0 {
        if b == 0.0 {
            if c == 0.0 {
                return vec![];
            }
            return vec![-d / c];
        }
        let disc = c * c - 4.0 * b * d;
        if disc < 0.0 {
            return vec![];
        }
        let s = disc.sqrt();
        let mut r = vec![(-c - s) / (2.0 * b), (-c + s) / (2.0 * b)];
        r.sort_by(|x, y| x.partial_cmp(y).unwrap());
        return r;
    }
    let p = b / a;
    let q = c / a;
    let r = d / a;
    // Depressed cubic t^3 + pp t + qq with x = t - p/3.
    let pp = q - p * p / 3.0;
    let qq = 2.0 * p * p * p / 27.0 - p * q / 3.0 + r;
    let disc = 0.25 * qq * qq + pp * pp * pp / 27.0;
    let shift = -p / 3.0;
    let mut roots = if disc > 0.0 {
        let s = disc.sqrt();
        let u = (-0.5 * qq + s).cbrt();
        let v = (-0.5 * qq - s).cbrt();
        vec![u + v + shift]
    } else {
        let m = 2.0 * (-pp / 3.0).max(0.0).sqrt();
        let arg = if m == 0.0 {
            0.0
        } else {
            (3.0 * qq / (pp * m)).clamp(-1.0, 1.0)
        };
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * PI * k as f64 / 3.0).cos() + shift)
            .collect()
    };
    let f = |x: f64| ((a * x + b) * x + c) * x + d;
    let fp = |x: f64| (3.0 * a * x + 2.0 * b) * x + c;
    for x in roots.iter_mut() {
        for _ in 0..3 {
            let d1 = fp(*x);
            if d1 != 0.0 {
                *x -= f(*x) / d1;
            }
        }
    }
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    roots
}

/// Drive strength that places a steady-state root at photon number `n`:
/// y(n) = n [(delta_nu - 2 K n)^2 + (gamma/2)^2], Hz^2.
pub fn drive_for_root(delta_nu: f64, gamma: f64, kerr: f64, n: f64) -> f64 {
    let det = delta_nu - 2.0 * kerr * n;
    n * (det * det + 0.25 * gamma * gamma)
}

/// Solves the steady-state cubic for the bifurcating mode.
pub fn steady_state(spectrum: &ModeSpectrum, drive: &DriveSpec) -> Result<SteadyState> {
    let (nu3, gamma, kerr) = spectrum.mode3();
    if gamma <= 0.0 {
        return Err(KerrError::InvalidParams("gamma must be positive".into()));
    }
    let delta_nu = drive.nu_d - nu3;
    let f = drive.strength(gamma);
    Ok(steady_state_raw(delta_nu, gamma, kerr, f))
}

/// Same, parameterized directly by detuning and drive strength.
pub fn steady_state_raw(delta_nu: f64, gamma: f64, kerr: f64, f: f64) -> SteadyState {
    if f == 0.0 {
        return SteadyState {
            branches: vec![(0.0, Stability::Stable)],
            degenerate: false,
        };
    }
    let half_g2 = 0.25 * gamma * gamma;
    if kerr == 0.0 {
        let n = f / (delta_nu * delta_nu + half_g2);
        return SteadyState {
            branches: vec![(n, Stability::Stable)],
            degenerate: false,
        };
    }
    let a = 4.0 * kerr * kerr;
    let b = -4.0 * delta_nu * kerr;
    let c = delta_nu * delta_nu + half_g2;
    let roots: Vec<f64> = solve_cubic(a, b, c, -f)
        .into_iter()
        .filter(|n| *n >= 0.0 || n.abs() < 1e-12)
        .map(|n| n.max(0.0))
        .collect();
    let scale = roots.iter().cloned().fold(0.0_f64, f64::max).max(1e-300);
    // Collapse near-coincident roots; a merge marks a spinodal.
    let mut distinct: Vec<f64> = Vec::new();
    let mut degenerate = false;
    for n in roots {
        if let Some(last) = distinct.last() {
            if (n - last).abs() < 1e-6 * scale {
                degenerate = true;
                continue;
            }
        }
        distinct.push(n);
    }
    let branches = match distinct.len() {
        3 => vec![
            (distinct[0], Stability::Stable),
            (distinct[1], Stability::Unstable),
            (distinct[2], Stability::Stable),
        ],
        _ => distinct.into_iter().map(|n| (n, Stability::Stable)).collect(),
    };
    SteadyState {
        branches,
        degenerate,
    }
}

/// Bistability boundaries of the bifurcating mode.
///
/// All detunings are expressed on the side selected by sign(K); for K > 0
/// the bistable window opens at delta_nu > +sqrt(3)/2 gamma.
#[derive(Debug, Clone)]
pub struct BistabilityRegion {
    /// Critical detuning (sqrt(3)/2) gamma sign(K), Hz.
    pub delta_nu_critical: f64,
    /// Photon number at the onset in the cubic convention, gamma/(2 sqrt(3) |K|).
    pub onset_photon_number: f64,
    /// Onset photon number in the reported convention, 2 gamma/(sqrt(3) |K|).
    pub onset_photon_number_reported: f64,
    /// Drive strength at the onset, Hz^2.
    pub critical_drive: f64,
    gamma: f64,
    kerr_abs: f64,
}

/// Stationary photon numbers of the response cubic (in mirrored coordinates
/// where K > 0 and delta > 0): n_-(barrier side) and n_+.
fn stationary_pair(delta: f64, gamma: f64, kerr_abs: f64) -> Option<(f64, f64)> {
    let disc = delta * delta - 0.75 * gamma * gamma;
    if delta <= 0.0 || disc <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let u_minus = (2.0 * delta - s) / 3.0;
    let u_plus = (2.0 * delta + s) / 3.0;
    Some((u_minus / (2.0 * kerr_abs), u_plus / (2.0 * kerr_abs)))
}

pub fn bistability_region(spectrum: &ModeSpectrum) -> Result<BistabilityRegion> {
    let (_, gamma, kerr) = spectrum.mode3();
    if kerr == 0.0 {
        return Err(KerrError::NonpositiveKerr(kerr));
    }
    let kerr_abs = kerr.abs();
    let onset = gamma / (2.0 * 3.0_f64.sqrt() * kerr_abs);
    let delta_c = 0.75_f64.sqrt() * gamma;
    Ok(BistabilityRegion {
        delta_nu_critical: delta_c * kerr.signum(),
        onset_photon_number: onset,
        onset_photon_number_reported: ONSET_TO_REPORTED * onset,
        critical_drive: drive_for_root(delta_c, gamma, kerr_abs, onset),
        gamma,
        kerr_abs,
    })
}

impl BistabilityRegion {
    /// Lower and upper spinodal drive strengths at a detuning beyond the
    /// critical one. `delta_nu` is measured on the sign(K) side (pass its
    /// magnitude).
    pub fn spinodal_drives(&self, delta_nu: f64) -> Result<(f64, f64)> {
        let (n_minus, n_plus) = stationary_pair(delta_nu.abs(), self.gamma, self.kerr_abs)
            .ok_or(KerrError::BelowBifurcation)?;
        let upper = drive_for_root(delta_nu.abs(), self.gamma, self.kerr_abs, n_minus);
        let lower = drive_for_root(delta_nu.abs(), self.gamma, self.kerr_abs, n_plus);
        Ok((lower, upper))
    }

    /// Detuning magnitude at which the low-amplitude branch disappears for a
    /// given drive strength (the switching spinodal), by bisection on the
    /// monotone map delta -> upper spinodal drive.
    pub fn spinodal_detuning(&self, drive: f64) -> Result<f64> {
        if drive <= self.critical_drive {
            return Err(KerrError::BelowBifurcation);
        }
        let delta_c = 0.75_f64.sqrt() * self.gamma;
        let upper_at = |delta: f64| -> f64 {
            match stationary_pair(delta, self.gamma, self.kerr_abs) {
                Some((n_minus, _)) => drive_for_root(delta, self.gamma, self.kerr_abs, n_minus),
                None => self.critical_drive,
            }
        };
        let mut lo = delta_c;
        let mut hi = 2.0 * delta_c;
        let mut guard = 0;
        while upper_at(hi) < drive {
            hi *= 2.0;
            guard += 1;
            if guard > 200 {
                return Err(KerrError::RootBracketingFailure {
                    mode: 3,
                    detail: "spinodal detuning bracket expansion failed".into(),
                });
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if upper_at(mid) < drive {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Relative S-curve width from the activation theory:
/// Delta S / nu_3 = (3^(2/3)/4) (beta^2/N)^(2/3) (k_B T_eff/E_j)^(2/3) (delta_nu/nu_3)^(1/3).
pub fn activation_width(spectrum: &ModeSpectrum, env: &ThermalEnvironment, delta_nu: f64) -> Result<f64> {
    if delta_nu <= 0.0 {
        return Err(KerrError::NonpositiveDetuning(delta_nu));
    }
    let (nu3, _, _) = spectrum.mode3();
    Ok(width_prefactor(spectrum, env) * (delta_nu / nu3).powf(1.0 / 3.0))
}

fn width_prefactor(spectrum: &ModeSpectrum, env: &ThermalEnvironment) -> f64 {
    let (nu3, _, _) = spectrum.mode3();
    let _ = nu3;
    let beta2_n = spectrum.beta * spectrum.beta / spectrum.n_squids as f64;
    let thermal = BOLTZMANN * env.t_eff / spectrum.e_j;
    (3.0_f64.powf(2.0 / 3.0) / 4.0) * beta2_n.powf(2.0 / 3.0) * thermal.powf(2.0 / 3.0)
}

/// Detuning at which the activation-law width equals `target_ratio`
/// (Delta S / nu_3); the inverse of [`activation_width`].
pub fn delta_nu_for_width(
    spectrum: &ModeSpectrum,
    env: &ThermalEnvironment,
    target_ratio: f64,
) -> Result<f64> {
    if target_ratio <= 0.0 {
        return Err(KerrError::InvalidParams("target ratio must be positive".into()));
    }
    let (nu3, _, _) = spectrum.mode3();
    let r = target_ratio / width_prefactor(spectrum, env);
    Ok(nu3 * r.powi(3))
}

/// Activation-law switching probability, calibrated so its 10-90% width
/// reproduces the requested target at the operating point.
///
/// P_s(nu_d) = 1 - exp(-Gamma t_p) with
/// Gamma = nu_attempt exp(-(x/w)^(3/2)), x the distance from the spinodal on
/// the metastable side; P_s = 1 at and beyond the spinodal.
#[derive(Debug, Clone)]
pub struct AnalyticSCurve {
    /// Spinodal frequency, Hz.
    pub nu_sw: f64,
    /// Barrier frequency scale, Hz.
    pub w: f64,
    /// sign(K): the metastable side is nu_d > nu_sw for K > 0.
    pub side: f64,
    /// nu_attempt * t_pulse.
    pub attempts: f64,
    /// Pulse duration used for the calibration, s.
    pub t_pulse: f64,
    width_10_90: f64,
}

impl AnalyticSCurve {
    /// Calibrates the curve for a drive at `photon_flux` and pulse length
    /// `t_pulse`. The 10-90 width target defaults to the activation-theory
    /// value at the operating spinodal detuning; pass `width_target` to pin
    /// it to a measured value instead.
    pub fn calibrate(
        spectrum: &ModeSpectrum,
        env: &ThermalEnvironment,
        photon_flux: f64,
        t_pulse: f64,
        width_target: Option<f64>,
    ) -> Result<Self> {
        let (nu3, gamma, kerr) = spectrum.mode3();
        if kerr == 0.0 {
            return Err(KerrError::NonpositiveKerr(kerr));
        }
        let region = bistability_region(spectrum)?;
        let f = 0.5 * gamma * photon_flux;
        let delta_sw = region.spinodal_detuning(f)?;
        let side = kerr.signum();
        let nu_sw = nu3 + side * delta_sw;
        let attempts = gamma * t_pulse;
        let (u10, u90) = (level_coord(attempts, 0.1)?, level_coord(attempts, 0.9)?);
        if u10 <= u90 {
            return Err(KerrError::Config(
                "pulse too short to develop an S-curve (attempts <= ln 10)".into(),
            ));
        }
        let target = match width_target {
            Some(t) => t,
            None => activation_width(spectrum, env, delta_sw)? * nu3,
        };
        let w = target / (u10 - u90);
        Ok(Self {
            nu_sw,
            w,
            side,
            attempts,
            t_pulse,
            width_10_90: target,
        })
    }

    pub fn p_s(&self, nu_d: f64) -> f64 {
        let x = self.side * (nu_d - self.nu_sw);
        if x <= 0.0 {
            return 1.0;
        }
        let barrier = (x / self.w).powf(1.5);
        let gamma_t = self.attempts * (-barrier).exp();
        1.0 - (-gamma_t).exp()
    }

    /// Frequency at which P_s equals `level`.
    pub fn nu_at_level(&self, level: f64) -> Result<f64> {
        let u = level_coord(self.attempts, level)?;
        Ok(self.nu_sw + self.side * self.w * u)
    }

    /// Exact 10-90 width of the calibrated curve.
    pub fn width_10_90(&self) -> f64 {
        self.width_10_90
    }
}

/// Distance from the spinodal (in units of w) at which P_s = level.
fn level_coord(attempts: f64, level: f64) -> Result<f64> {
    if !(0.0 < level && level < 1.0) {
        return Err(KerrError::RangeNotSpanned { lo: 0.0, hi: 1.0 });
    }
    let l = -(1.0 - level).ln();
    let arg = attempts / l;
    if arg <= 1.0 {
        return Err(KerrError::RangeNotSpanned { lo: 0.0, hi: level });
    }
    Ok(arg.ln().powf(2.0 / 3.0))
}

/// Integration and switch-detection options for a stochastic trajectory.
#[derive(Debug, Clone, Copy)]
pub struct SdeOptions {
    /// Time step, s; must satisfy dt <= 0.02/gamma.
    pub dt: f64,
    /// Total integration time, s.
    pub t_max: f64,
    /// Dwell time above the branch midpoint required to latch the switched
    /// flag, s. Default 5/gamma at the call sites.
    pub dwell: f64,
    /// Initial amplitude.
    pub alpha0: C64,
    /// Replace `alpha0` with the low-branch fixed point of the (possibly
    /// jittered) drive. This stands in for the adiabatic rise of the
    /// experimental pulse; a sudden step from vacuum overshoots into the
    /// high-amplitude basin well beyond the spinodal and buries the
    /// activated switching statistics under a deterministic ring-up.
    pub prepare_low_branch: bool,
    /// Record every k-th sample into the trace (0 = no trace).
    pub record_every: usize,
    /// Stop integrating once the switched flag latches.
    pub early_exit: bool,
}

/// Outcome of one stochastic trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryOutcome {
    pub switched: bool,
    /// Time of the unstable-branch crossing that led to the latch, s.
    pub switch_time: Option<f64>,
    pub final_alpha: C64,
    /// (t, alpha) samples when recording was requested.
    pub trace: Vec<(f64, C64)>,
}

/// One-mode rotating-frame stochastic system with fixed coefficients.
#[derive(Debug, Clone, Copy)]
pub struct SdeSystem {
    /// 2 pi (nu_d - nu_3), rad/s.
    pub delta_omega: f64,
    /// 2 pi K, rad/s per photon.
    pub kerr_omega: f64,
    /// pi gamma: amplitude decay rate, rad/s.
    pub kappa_half: f64,
    /// 2 pi sqrt(F): drive amplitude, rad/s.
    pub drive_amp: f64,
    /// Per-component noise power pi gamma n_eff / 2, rad/s.
    pub diffusion: f64,
}

impl SdeSystem {
    pub fn new(delta_nu: f64, gamma: f64, kerr: f64, f: f64, n_eff: f64) -> Self {
        Self {
            delta_omega: 2.0 * PI * delta_nu,
            kerr_omega: 2.0 * PI * kerr,
            kappa_half: PI * gamma,
            drive_amp: 2.0 * PI * f.max(0.0).sqrt(),
            diffusion: 0.5 * PI * gamma * n_eff,
        }
    }

    /// One split step: half a Kerr rotation, the exact linear step with
    /// drive and noise, half a Kerr rotation. The Kerr flow preserves
    /// |alpha|, so each half step is an exact phase rotation, and the linear
    /// flow (detuning, decay, constant drive) has a closed-form propagator;
    /// only the coupling between the two flows carries a step error, second
    /// order in dt. This keeps the step unconditionally stable and leaves
    /// the switching statistics insensitive to dt even when the detuning
    /// rotates the frame by a sizable angle per step.
    #[inline]
    pub fn step(&self, alpha: C64, envelope: f64, dt: f64, noise_scale: f64, rng: &mut ChaCha8Rng) -> C64 {
        let half_kerr =
            |a: C64| a * C64::from_polar(1.0, -self.kerr_omega * a.norm_sqr() * dt);
        let lin = C64::new(-self.kappa_half, self.delta_omega);
        let factor = (lin * dt).exp();
        let drive = C64::new(0.0, -envelope * self.drive_amp) * (factor - 1.0) / lin;
        let zx: f64 = StandardNormal.sample(rng);
        let zy: f64 = StandardNormal.sample(rng);
        half_kerr(factor * half_kerr(alpha) + drive + C64::new(zx, zy) * noise_scale)
    }

    /// Per-step noise amplitude: the exact per-component standard deviation
    /// accumulated by the decaying linear flow over one step,
    /// sqrt(diffusion (1 - e^{-2 kappa_half dt}) / (2 kappa_half)), which
    /// settles the undriven mode to diffusion / kappa_half photons at any dt
    /// and reduces to sqrt(diffusion dt) for small steps.
    pub fn noise_scale(&self, dt: f64) -> f64 {
        let decay = -(-2.0 * self.kappa_half * dt).exp_m1();
        (self.diffusion * decay / (2.0 * self.kappa_half)).sqrt()
    }

    /// Fixed-point amplitude on the branch with photon number `n`:
    /// alpha = -i eps / (kappa/2 - i (delta_omega - 2 K_omega n)), which
    /// satisfies |alpha|^2 = n when `n` is a root of the steady-state cubic.
    pub fn steady_amplitude(&self, n: f64) -> C64 {
        let rot = self.delta_omega - 2.0 * self.kerr_omega * n;
        C64::new(0.0, -self.drive_amp) / C64::new(self.kappa_half, -rot)
    }
}

/// Switch-detection thresholds derived from the steady-state branches.
#[derive(Debug, Clone, Copy)]
pub struct SwitchThresholds {
    /// Unstable-branch photon number (arming level).
    pub n_cross: f64,
    /// Midpoint of the two stable branches (dwell level).
    pub n_mid: f64,
}

/// Derives the detection thresholds at a given detuning and drive. Beyond the
/// switching spinodal (the low branch gone) the merged stationary point is
/// used. Fails with `NonconvergentBranches` when the drive cannot bifurcate.
pub fn switch_thresholds(delta_nu: f64, gamma: f64, kerr: f64, f: f64) -> Result<SwitchThresholds> {
    let ss = steady_state_raw(delta_nu, gamma, kerr, f);
    if ss.is_bistable() {
        return Ok(SwitchThresholds {
            n_cross: ss.unstable().unwrap(),
            n_mid: 0.5 * (ss.low() + ss.high()),
        });
    }
    // Single branch: usable only past the switching spinodal.
    let mirrored = delta_nu * kerr.signum();
    let (n_minus, _) = stationary_pair(mirrored, gamma, kerr.abs())
        .ok_or(KerrError::NonconvergentBranches)?;
    let upper = drive_for_root(mirrored, gamma, kerr.abs(), n_minus);
    if f < upper {
        return Err(KerrError::NonconvergentBranches);
    }
    Ok(SwitchThresholds {
        n_cross: n_minus,
        n_mid: 0.5 * (n_minus + ss.high()),
    })
}

/// Integrates one stochastic trajectory of the driven mode.
///
/// The trajectory is deterministic given (seed, dt, t_max). Drive jitter and
/// excess frequency noise from `noise` are resampled once per call, in a
/// fixed draw order; quasi-static flux noise acts through the spectrum and is
/// the caller's responsibility.
pub fn simulate_trajectory(
    spectrum: &ModeSpectrum,
    env: &ThermalEnvironment,
    drive: &DriveSpec,
    noise: &NoiseSpec,
    seed: u64,
    opts: &SdeOptions,
) -> Result<TrajectoryOutcome> {
    let (nu3, gamma, kerr) = spectrum.mode3();
    drive.validate()?;
    let dt_max = 0.02 / gamma;
    if opts.dt > dt_max * (1.0 + 1e-12) {
        return Err(KerrError::StepSizeTooLarge {
            dt: opts.dt,
            max: dt_max,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fixed draw order: amplitude jitter, frequency jitter, excess nu_3 noise.
    let za: f64 = StandardNormal.sample(&mut rng);
    let zf: f64 = StandardNormal.sample(&mut rng);
    let zn: f64 = StandardNormal.sample(&mut rng);
    let amp_factor = (1.0 + noise.drive_amp_jitter * za).max(0.0);
    let nu_d = drive.nu_d + noise.drive_freq_jitter * zf;
    let nu3_eff = nu3 + noise.excess_freq_noise * zn;
    let delta_nu = nu_d - nu3_eff;
    let f = drive.strength(gamma) * amp_factor * amp_factor;

    let thresholds = switch_thresholds(delta_nu, gamma, kerr, f)?;
    let system = SdeSystem::new(delta_nu, gamma, kerr, f, env.n_eff);
    let mut opts = opts.clone();
    if opts.prepare_low_branch {
        let n_low = steady_state_raw(delta_nu, gamma, kerr, f).low();
        opts.alpha0 = system.steady_amplitude(n_low);
    }
    run_sde(
        &system,
        |_| 1.0,
        thresholds,
        &opts,
        &mut rng,
    )
}

/// Core integration loop shared by trajectories and pulsed measurements.
pub fn run_sde(
    system: &SdeSystem,
    envelope: impl Fn(f64) -> f64,
    thresholds: SwitchThresholds,
    opts: &SdeOptions,
    rng: &mut ChaCha8Rng,
) -> Result<TrajectoryOutcome> {
    let steps = (opts.t_max / opts.dt).ceil() as usize;
    let noise_scale = system.noise_scale(opts.dt);
    let mut alpha = opts.alpha0;
    let mut trace = Vec::new();
    if opts.record_every > 0 {
        trace.reserve(steps / opts.record_every + 1);
        trace.push((0.0, alpha));
    }
    let mut armed_at: Option<f64> = None;
    let mut dwell_start: Option<f64> = None;
    let mut switched = false;
    let mut switch_time = None;
    let mut t = 0.0;
    for k in 0..steps {
        alpha = system.step(alpha, envelope(t), opts.dt, noise_scale, rng);
        t = (k + 1) as f64 * opts.dt;
        if opts.record_every > 0 && (k + 1) % opts.record_every == 0 {
            trace.push((t, alpha));
        }
        if !switched {
            let n = alpha.norm_sqr();
            if armed_at.is_none() && n >= thresholds.n_cross {
                armed_at = Some(t);
            }
            if armed_at.is_some() {
                if n >= thresholds.n_mid {
                    let start = *dwell_start.get_or_insert(t);
                    if t - start >= opts.dwell {
                        switched = true;
                        switch_time = armed_at;
                        if opts.early_exit && opts.record_every == 0 {
                            break;
                        }
                    }
                } else {
                    dwell_start = None;
                }
            }
        }
    }
    // A trajectory that ends above the midpoint after crossing counts as
    // switched even if the dwell window was cut short by t_max.
    if !switched && armed_at.is_some() && alpha.norm_sqr() >= thresholds.n_mid {
        switched = true;
        switch_time = armed_at;
    }
    Ok(TrajectoryOutcome {
        switched,
        switch_time,
        final_alpha: alpha,
        trace,
    })
}
