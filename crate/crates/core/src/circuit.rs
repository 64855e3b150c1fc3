//! Circuit model: maps device geometry, SQUID parameters and applied flux to
//! mode frequencies and Kerr coefficients.
//!
//! The device is a half-wave coplanar waveguide resonator with a series SQUID
//! array at its midpoint. Odd modes have a current antinode at the array and
//! are pulled down in frequency by the flux-dependent Josephson inductance;
//! even modes have a current node there and stay at their bare harmonics.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::constants::{FLUX_QUANTUM, PLANCK, RESISTANCE_QUANTUM};
use crate::error::{KerrError, Result};

/// Default guard on |cos(pi phi)| below which the junction inductance is
/// treated as divergent.
pub const DEFAULT_EPS_DIV: f64 = 1e-6;

/// Relative tolerance of the transcendental mode-frequency solve.
pub const MODE_SOLVER_REL_TOL: f64 = 1e-12;

/// Reduced magnetic flux phi = Phi/Phi0. Periodic with period 1; any real
/// value is accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxPoint {
    phi_reduced: f64,
}

impl FluxPoint {
    pub fn new(phi_reduced: f64) -> Self {
        Self { phi_reduced }
    }

    /// Raw value as given.
    pub fn phi(&self) -> f64 {
        self.phi_reduced
    }

    /// Value folded into [0, 1).
    pub fn reduced(&self) -> f64 {
        self.phi_reduced.rem_euclid(1.0)
    }

    /// |cos(pi phi)|, the SQUID inductance modulation factor. Computed from
    /// the distance to the nearest half-quantum so the symmetry about 0.5 is
    /// exact in floating point.
    pub fn cos_abs(&self) -> f64 {
        let d = (self.reduced() - 0.5).abs();
        (PI * d).sin()
    }

    /// Offset by a flux-noise sample (units of Phi0).
    pub fn offset(&self, delta: f64) -> Self {
        Self::new(self.phi_reduced + delta)
    }
}

/// Static device description.
#[derive(Debug, Clone)]
pub struct CircuitParams {
    /// Number of SQUIDs in the array (N).
    pub n_squids: usize,
    /// Average single-SQUID critical current, A.
    pub i_c: f64,
    /// End capacitors, F.
    pub c_end: f64,
    /// Bare fundamental without array loading, Hz.
    pub nu_fundamental_bare: f64,
    /// Waveguide characteristic impedance, ohm.
    pub z0: f64,
    /// Total waveguide inductance, H.
    pub l_wg: f64,
    /// SQUID area spread (dimensionless fraction); stored for sensitivity
    /// analysis, unused in the nominal model.
    pub areal_dispersion: f64,
}

impl CircuitParams {
    /// Validates the static invariants: positivity and the weak-participation
    /// regime beta(0) < 0.1.
    pub fn validate(&self) -> Result<()> {
        if self.n_squids < 1 {
            return Err(KerrError::InvalidParams("n_squids must be >= 1".into()));
        }
        if self.i_c <= 0.0 || self.z0 <= 0.0 || self.l_wg <= 0.0 || self.nu_fundamental_bare <= 0.0
        {
            return Err(KerrError::InvalidParams(
                "i_c, z0, l_wg and nu_fundamental_bare must be positive".into(),
            ));
        }
        let beta0 = self.beta(FluxPoint::new(0.0))?;
        if beta0 >= 0.1 {
            return Err(KerrError::InvalidParams(format!(
                "beta(0) = {beta0:.4} outside the weak-participation regime (< 0.1)"
            )));
        }
        Ok(())
    }

    /// Total SQUID-array inductance N * L_j(phi), H.
    pub fn l_array(&self, flux: FluxPoint) -> Result<f64> {
        Ok(self.n_squids as f64 * josephson_inductance(self.i_c, flux)?)
    }

    /// Participation ratio beta = L_array / (L_wg + L_array).
    pub fn beta(&self, flux: FluxPoint) -> Result<f64> {
        let la = self.l_array(flux)?;
        Ok(la / (self.l_wg + la))
    }

    /// Single-SQUID Josephson energy at the given flux, J.
    pub fn josephson_energy(&self, flux: FluxPoint) -> f64 {
        FLUX_QUANTUM * self.i_c * flux.cos_abs() / (2.0 * PI)
    }

    /// Resonant frequency of mode `n` at the given flux, Hz.
    ///
    /// Even modes sit exactly at n * nu1_bare (current node at the array).
    /// Odd modes solve the midpoint-series-inductor resonance condition
    /// cot(k l / 2) = omega L_array / (2 Z0) on the branch that reduces to
    /// the n-th bare odd mode as L_array -> 0.
    pub fn mode_frequency(&self, n: usize, flux: FluxPoint) -> Result<f64> {
        if n < 1 {
            return Err(KerrError::InvalidParams("mode index must be >= 1".into()));
        }
        if n % 2 == 0 {
            return Ok(n as f64 * self.nu_fundamental_bare);
        }
        let l_array = self.l_array(flux)?;
        self.odd_mode_frequency(n, l_array)
    }

    /// Odd-mode transcendental solve for a given array inductance.
    ///
    /// With nu1_bare = v/(2l) the condition becomes, in the half-line phase
    /// theta = pi nu / (2 nu1_bare):
    ///   cot(theta) = pi nu L_array / Z0,   nu = 2 nu1_bare theta / pi,
    /// with theta in ((n-1) pi/2, n pi/2]. The left side is strictly
    /// decreasing and the right side increasing on the branch, so the root is
    /// unique and bracketed by construction.
    fn odd_mode_frequency(&self, n: usize, l_array: f64) -> Result<f64> {
        odd_mode_frequency_for(self.nu_fundamental_bare, self.z0, l_array, n)
    }

    /// Central-difference derivative d nu_n / d phi at the given flux, Hz per
    /// unit of reduced flux.
    pub fn mode_frequency_derivative(&self, n: usize, flux: FluxPoint, h: f64) -> Result<f64> {
        let up = self.mode_frequency(n, flux.offset(h))?;
        let dn = self.mode_frequency(n, flux.offset(-h))?;
        Ok((up - dn) / (2.0 * h))
    }

    /// Second central-difference derivative d^2 nu_n / d phi^2.
    pub fn mode_frequency_curvature(&self, n: usize, flux: FluxPoint, h: f64) -> Result<f64> {
        let up = self.mode_frequency(n, flux.offset(h))?;
        let mid = self.mode_frequency(n, flux)?;
        let dn = self.mode_frequency(n, flux.offset(-h))?;
        Ok((up - 2.0 * mid + dn) / (h * h))
    }

    /// Returns a copy with (nu_fundamental_bare, l_wg) adjusted so that
    /// nu_3(0) = `nu3_target` and beta(0) = `beta_target` hold simultaneously.
    ///
    /// Both solves are closed-form: beta fixes L_wg directly, and the
    /// transcendental condition inverts exactly once nu_3 is pinned.
    pub fn calibrated(&self, nu3_target: f64, beta_target: f64) -> Result<CircuitParams> {
        if !(0.0 < beta_target && beta_target < 0.1) {
            return Err(KerrError::InvalidParams(format!(
                "beta target {beta_target} outside (0, 0.1)"
            )));
        }
        let l_array0 = self.l_array(FluxPoint::new(0.0))?;
        let l_wg = l_array0 * (1.0 - beta_target) / beta_target;
        // theta* = pi + arccot(pi nu3 L_array / Z0) on the n = 3 branch.
        let c = PI * nu3_target * l_array0 / self.z0;
        let theta = PI + (1.0 / c).atan();
        let nu1_bare = PI * nu3_target / (2.0 * theta);
        let out = CircuitParams {
            nu_fundamental_bare: nu1_bare,
            l_wg,
            ..self.clone()
        };
        out.validate()?;
        Ok(out)
    }

    /// Seven-SQUID niobium coplanar sample used by the default configs,
    /// benches and tests. Already calibrated to nu_3(0) = 5.32 GHz and
    /// beta(0) = 2.54%.
    pub fn sample_device() -> CircuitParams {
        let raw = CircuitParams {
            n_squids: 7,
            i_c: 6.72e-6,
            c_end: 7e-12,
            nu_fundamental_bare: 1.8e9,
            z0: 50.0,
            l_wg: 13e-9,
            areal_dispersion: 0.04,
        };
        raw.calibrated(5.32e9, 0.0254)
            .expect("sample device calibration")
    }
}

/// Odd-mode resonance for a given bare fundamental, waveguide impedance and
/// total array inductance, independent of any `CircuitParams` instance.
///
/// In the half-line phase theta = pi nu / (2 nu1_bare) the condition is
/// cot(theta) = pi nu L_array / Z0 with theta in ((n-1) pi/2, n pi/2]; the
/// shifted cotangent keeps the bracket edges finite.
pub fn odd_mode_frequency_for(nu1_bare: f64, z0: f64, l_array: f64, n: usize) -> Result<f64> {
    if n % 2 == 0 || n < 1 {
        return Err(KerrError::InvalidParams(format!(
            "mode {n} is not an odd mode"
        )));
    }
    if nu1_bare <= 0.0 || z0 <= 0.0 || l_array <= 0.0 {
        return Err(KerrError::InvalidParams(
            "nu1_bare, z0 and l_array must be positive".into(),
        ));
    }
    let theta_lo = (n - 1) as f64 * PI / 2.0;
    let theta_hi = n as f64 * PI / 2.0;
    let nu_of = |theta: f64| 2.0 * nu1_bare * theta / PI;
    let f = |theta: f64| {
        let x = theta - theta_lo;
        x.cos() / x.sin() - PI * nu_of(theta) * l_array / z0
    };
    let mut lo = theta_lo + 1e-12 * theta_hi;
    let mut hi = theta_hi;
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo > 0.0 && fhi <= 0.0) {
        return Err(KerrError::RootBracketingFailure {
            mode: n,
            detail: format!("f(lo) = {flo:e}, f(hi) = {fhi:e}"),
        });
    }
    // Bisection; 100 iterations takes the bracket well below the relative
    // tolerance of 1e-12.
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) < MODE_SOLVER_REL_TOL * hi {
            break;
        }
    }
    Ok(nu_of(0.5 * (lo + hi)))
}

/// Single-SQUID Josephson inductance L_j(phi) = Phi0 / (2 pi i_c |cos(pi phi)|).
pub fn josephson_inductance(i_c: f64, flux: FluxPoint) -> Result<f64> {
    josephson_inductance_with_eps(i_c, flux, DEFAULT_EPS_DIV)
}

/// Same with an explicit divergence guard on |cos|.
pub fn josephson_inductance_with_eps(i_c: f64, flux: FluxPoint, eps_div: f64) -> Result<f64> {
    if i_c <= 0.0 {
        return Err(KerrError::InvalidParams("i_c must be positive".into()));
    }
    let cos_abs = flux.cos_abs();
    if cos_abs <= eps_div {
        return Err(KerrError::DivergentInductance {
            phi: flux.phi(),
            cos_abs,
            eps: eps_div,
        });
    }
    Ok(FLUX_QUANTUM / (2.0 * PI * i_c * cos_abs))
}

/// Critical photon number for bifurcation, N_c = 2 gamma / (sqrt(3) K).
pub fn critical_photon_number(gamma: f64, k_self: f64) -> Result<f64> {
    if k_self <= 0.0 {
        return Err(KerrError::NonpositiveKerr(k_self));
    }
    if gamma <= 0.0 {
        return Err(KerrError::InvalidParams("gamma must be positive".into()));
    }
    Ok(2.0 * gamma / (3.0_f64.sqrt() * k_self))
}

/// Per-mode FWHM linewidths, Hz. Mode 3 is required; other modes fall back to
/// a constant-Q scaling gamma_n = gamma_3 * nu_n / nu_3.
#[derive(Debug, Clone)]
pub struct Linewidths {
    explicit: BTreeMap<usize, f64>,
}

impl Linewidths {
    pub fn new(explicit: BTreeMap<usize, f64>) -> Result<Self> {
        if !explicit.contains_key(&3) {
            return Err(KerrError::Config("linewidth of mode 3 is required".into()));
        }
        if explicit.values().any(|g| *g <= 0.0) {
            return Err(KerrError::Config("linewidths must be positive".into()));
        }
        Ok(Self { explicit })
    }

    pub fn single(gamma3: f64) -> Self {
        Self {
            explicit: BTreeMap::from([(3, gamma3)]),
        }
    }

    pub fn gamma3(&self) -> f64 {
        self.explicit[&3]
    }

    fn gamma(&self, mode: usize, nu_n: f64, nu3: f64) -> f64 {
        match self.explicit.get(&mode) {
            Some(g) => *g,
            None => self.gamma3() * nu_n / nu3,
        }
    }
}

/// Per-flux-point mode spectrum: frequencies, linewidths and the Kerr tensor.
#[derive(Debug, Clone)]
pub struct ModeSpectrum {
    pub modes: Vec<usize>,
    /// nu_n, Hz, aligned with `modes`.
    pub frequencies: Vec<f64>,
    /// gamma_n FWHM, Hz.
    pub linewidths: Vec<f64>,
    /// Self-Kerr K_n, Hz; zero for even modes.
    pub self_kerr: Vec<f64>,
    /// Cross-Kerr lambda_{n,m}, Hz; symmetric, zero rows/columns for even
    /// modes, zero diagonal.
    pub cross_kerr: Vec<Vec<f64>>,
    /// Participation ratio at this flux.
    pub beta: f64,
    /// Single-SQUID Josephson energy at this flux, J.
    pub e_j: f64,
    /// Number of SQUIDs in the array.
    pub n_squids: usize,
}

impl ModeSpectrum {
    pub fn index_of(&self, mode: usize) -> Option<usize> {
        self.modes.iter().position(|m| *m == mode)
    }

    pub fn frequency(&self, mode: usize) -> Option<f64> {
        self.index_of(mode).map(|i| self.frequencies[i])
    }

    pub fn linewidth(&self, mode: usize) -> Option<f64> {
        self.index_of(mode).map(|i| self.linewidths[i])
    }

    pub fn kerr(&self, mode: usize) -> Option<f64> {
        self.index_of(mode).map(|i| self.self_kerr[i])
    }

    pub fn lambda(&self, n: usize, m: usize) -> Option<f64> {
        let (i, j) = (self.index_of(n)?, self.index_of(m)?);
        Some(self.cross_kerr[i][j])
    }

    /// Shorthand for the bifurcating mode (mode 3) scalars used by the
    /// dynamics layer: (nu_3, gamma_3, K_3).
    pub fn mode3(&self) -> (f64, f64, f64) {
        let i = self.index_of(3).expect("spectrum must include mode 3");
        (self.frequencies[i], self.linewidths[i], self.self_kerr[i])
    }

    /// Copy with nu_3 displaced by `shift` Hz (cross-Kerr pull or frequency
    /// noise). Kerr entries are left untouched: the shift is small compared
    /// with nu_3 in every use.
    pub fn with_nu3_shift(&self, shift: f64) -> ModeSpectrum {
        let mut out = self.clone();
        if let Some(i) = out.index_of(3) {
            out.frequencies[i] += shift;
        }
        out
    }
}

/// Evaluates the full Kerr tensor at a flux point.
///
/// The anchor ratio is r = K_3/nu_3 = (beta^2/N)(h nu_3 / E_j); the tensor is
/// filled so that K_n/nu_n = r nu_n/nu_3 and lambda_{n,m} = r nu_n nu_m / nu_3,
/// which keeps lambda_{n,3}/nu_n = K_3/nu_3 exact for every coupled mode.
pub fn kerr_coefficients(
    params: &CircuitParams,
    flux: FluxPoint,
    modes: &[usize],
    linewidths: &Linewidths,
) -> Result<ModeSpectrum> {
    if modes.is_empty() {
        return Err(KerrError::InvalidParams("modes list is empty".into()));
    }
    let beta = params.beta(flux)?;
    let e_j = params.josephson_energy(flux);
    let nu3 = params.mode_frequency(3, flux)?;
    let ratio = (beta * beta / params.n_squids as f64) * PLANCK * nu3 / e_j;

    let bound = 2.0 * PI * params.z0 / RESISTANCE_QUANTUM;
    if ratio > bound {
        return Err(KerrError::KerrBoundExceeded { ratio, bound });
    }

    let frequencies: Vec<f64> = modes
        .iter()
        .map(|&n| params.mode_frequency(n, flux))
        .collect::<Result<_>>()?;
    let gammas: Vec<f64> = modes
        .iter()
        .zip(&frequencies)
        .map(|(&n, &nu)| linewidths.gamma(n, nu, nu3))
        .collect();
    let self_kerr: Vec<f64> = modes
        .iter()
        .zip(&frequencies)
        .map(|(&n, &nu)| if n % 2 == 0 { 0.0 } else { ratio * nu * nu / nu3 })
        .collect();
    let mut cross_kerr = vec![vec![0.0; modes.len()]; modes.len()];
    for (i, &n) in modes.iter().enumerate() {
        for (j, &m) in modes.iter().enumerate() {
            if i != j && n % 2 == 1 && m % 2 == 1 {
                cross_kerr[i][j] = ratio * frequencies[i] * frequencies[j] / nu3;
            }
        }
    }

    Ok(ModeSpectrum {
        modes: modes.to_vec(),
        frequencies,
        linewidths: gammas,
        self_kerr,
        cross_kerr,
        beta,
        e_j,
        n_squids: params.n_squids,
    })
}
