//! Parameter extraction: the nonlinear least-squares fits used to pull
//! device quantities back out of generated data, mirroring how the real
//! experiment is analyzed.

mod lm;

pub use lm::{levenberg_marquardt, FitResult};

use crate::circuit::{CircuitParams, FluxPoint};
use crate::error::{KerrError, Result};
use crate::stats::GAUSS_10_90;

/// Lorentzian line with constant offset:
/// y = offset + amp * (w/2)^2 / ((x - center)^2 + (w/2)^2).
pub fn lorentzian(x: f64, center: f64, fwhm: f64, amp: f64, offset: f64) -> f64 {
    let hw = 0.5 * fwhm;
    offset + amp * hw * hw / ((x - center) * (x - center) + hw * hw)
}

/// Fits a Lorentzian (peak or dip) to a trace. Parameter order:
/// center, fwhm, amp, offset.
///
/// Requires at least 8 points and a scan span of at least two estimated
/// linewidths so the baseline is constrained.
pub fn lorentzian_fit(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    if xs.len() < 8 {
        return Err(KerrError::InsufficientSpan(format!(
            "{} points; a Lorentzian fit needs at least 8",
            xs.len()
        )));
    }
    let mut sorted = ys.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let (i_max, y_max) = ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, y)| (i, *y))
        .unwrap();
    let (i_min, y_min) = ys
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, y)| (i, *y))
        .unwrap();
    // Peak or dip: whichever extremum departs further from the median.
    let (i_ext, amp0) = if (y_max - median).abs() >= (y_min - median).abs() {
        (i_max, y_max - median)
    } else {
        (i_min, y_min - median)
    };
    let center0 = xs[i_ext];
    // Width estimate from the half-maximum span around the extremum.
    let half = median + 0.5 * amp0;
    let above = |y: f64| if amp0 >= 0.0 { y >= half } else { y <= half };
    let mut lo = center0;
    let mut hi = center0;
    let mut crossed_left = false;
    let mut crossed_right = false;
    for i in (0..=i_ext).rev() {
        if !above(ys[i]) {
            crossed_left = true;
            break;
        }
        lo = xs[i];
    }
    for i in i_ext..xs.len() {
        if !above(ys[i]) {
            crossed_right = true;
            break;
        }
        hi = xs[i];
    }
    if !crossed_left || !crossed_right {
        return Err(KerrError::InsufficientSpan(
            "half-maximum points are not contained in the scan".into(),
        ));
    }
    let grid_step = ((xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64).abs();
    let fwhm0 = (hi - lo).abs().max(2.0 * grid_step);
    let span = (xs[xs.len() - 1] - xs[0]).abs();
    if span < 2.0 * fwhm0 {
        return Err(KerrError::InsufficientSpan(format!(
            "scan span {span:e} is below two estimated linewidths {:e}",
            2.0 * fwhm0
        )));
    }
    let model = |p: &[f64], x: f64| -> Result<f64> { Ok(lorentzian(x, p[0], p[1].abs(), p[2], p[3])) };
    let amp_scale = amp0.abs().max(1e-6);
    let mut fit = levenberg_marquardt(
        &model,
        xs,
        ys,
        None,
        &[center0, fwhm0, amp0, median],
        &[fwhm0, fwhm0, amp_scale, amp_scale],
        &["center", "fwhm", "amp", "offset"],
    )?;
    fit.params[1] = fit.params[1].abs();
    // A fitted linewidth comparable to the whole scan means the baseline was
    // never reached; the center and width are then unreliable.
    if fit.params[1] > 0.5 * span {
        return Err(KerrError::InsufficientSpan(format!(
            "fitted linewidth {:e} exceeds half the scan span {span:e}",
            fit.params[1]
        )));
    }
    let (x_lo, x_hi) = (xs[0].min(xs[xs.len() - 1]), xs[0].max(xs[xs.len() - 1]));
    if fit.params[0] < x_lo || fit.params[0] > x_hi {
        return Err(KerrError::InsufficientSpan(format!(
            "fitted center {:e} lies outside the scanned range [{x_lo:e}, {x_hi:e}]",
            fit.params[0]
        )));
    }
    Ok(fit)
}

/// Fits the flux tuning curve of the bifurcating mode, data (phi, nu_3),
/// for the SQUID critical current and the bare fundamental. The waveguide
/// inductance is taken from `template`: it does not enter the odd-mode
/// condition and cannot be constrained by this data.
///
/// Parameter order: i_c (A), nu1_bare (Hz).
pub fn tuning_curve_fit(
    template: &CircuitParams,
    phis: &[f64],
    nu3s: &[f64],
    i_c0: f64,
    nu1_bare0: f64,
) -> Result<FitResult> {
    let template = template.clone();
    let model = move |p: &[f64], phi: f64| -> Result<f64> {
        if p[0] <= 0.0 || p[1] <= 0.0 {
            return Err(KerrError::InvalidParams("nonpositive trial parameter".into()));
        }
        let trial = CircuitParams {
            i_c: p[0],
            nu_fundamental_bare: p[1],
            ..template.clone()
        };
        trial.mode_frequency(3, FluxPoint::new(phi))
    };
    levenberg_marquardt(
        &model,
        phis,
        nu3s,
        None,
        &[i_c0, nu1_bare0],
        &[i_c0, nu1_bare0],
        &["i_c", "nu1_bare"],
    )
}

/// Activation-law S-curve model evaluated on the metastable side `side`
/// (+1 when the bistable window opens above the resonance):
/// P_s = 1 - exp(-attempts * exp(-(side (nu - nu_sw)/w)^(3/2))), clamped to 1
/// on the deterministic side.
pub fn s_curve_model(nu: f64, nu_sw: f64, w: f64, side: f64, attempts: f64) -> f64 {
    let x = side * (nu - nu_sw);
    if x <= 0.0 {
        return 1.0;
    }
    1.0 - (-attempts * (-(x / w).powf(1.5)).exp()).exp()
}

/// Fits (nu_sw, w) of the activation law to one S-curve. `attempts`
/// (attempt frequency times pulse length) must be supplied: it is fully
/// degenerate with w on a single curve. Orientation is detected from the
/// data. Parameter order: nu_sw, w.
pub fn s_curve_fit(
    nus: &[f64],
    ps: &[f64],
    attempts: f64,
    nu_sw0: f64,
    w0: f64,
) -> Result<FitResult> {
    if attempts <= 0.0 || w0 <= 0.0 {
        return Err(KerrError::InvalidParams(
            "attempts and initial width must be positive".into(),
        ));
    }
    let k = (nus.len() / 3).max(1);
    let head: f64 = ps[..k].iter().sum::<f64>() / k as f64;
    let tail: f64 = ps[ps.len() - k..].iter().sum::<f64>() / k as f64;
    let side = if head >= tail { 1.0 } else { -1.0 };
    let model = move |p: &[f64], nu: f64| -> Result<f64> {
        if p[1] <= 0.0 {
            return Err(KerrError::InvalidParams("nonpositive trial width".into()));
        }
        Ok(s_curve_model(nu, p[0], p[1], side, attempts))
    };
    levenberg_marquardt(&model, nus, ps, None, &[nu_sw0, w0], &[w0, w0], &["nu_sw", "w"])
}

/// 10-90 width of a fitted activation-law curve.
pub fn s_curve_fit_width(fit: &FitResult, attempts: f64) -> f64 {
    let u = |level: f64| {
        let l = -(1.0_f64 - level).ln();
        (attempts / l).ln().powf(2.0 / 3.0)
    };
    fit.params[1] * (u(0.1) - u(0.9))
}

/// Fits the flux dependence of the S-curve width, data (phi, delta_s), to
/// the first-order broadening model
/// delta_s(phi) = delta_s0 + g |d nu_3/d phi| sigma_phi,
/// with the tuning-curve slope taken from `params`.
/// Parameter order: delta_s0 (Hz), sigma_phi (Phi0).
pub fn flux_noise_fit(
    params: &CircuitParams,
    phis: &[f64],
    widths: &[f64],
    delta_s0_init: f64,
    sigma_phi_init: f64,
) -> Result<FitResult> {
    let slopes: Vec<f64> = phis
        .iter()
        .map(|&phi| {
            params
                .mode_frequency_derivative(3, FluxPoint::new(phi), 1e-5)
                .map(f64::abs)
        })
        .collect::<Result<_>>()?;
    let phi_copy = phis.to_vec();
    let model = move |p: &[f64], phi: f64| -> Result<f64> {
        let i = phi_copy
            .iter()
            .position(|v| *v == phi)
            .ok_or_else(|| KerrError::DegenerateData("unknown abscissa".into()))?;
        Ok(p[0] + GAUSS_10_90 * slopes[i] * p[1].abs())
    };
    let mut fit = levenberg_marquardt(
        &model,
        phis,
        widths,
        None,
        &[delta_s0_init, sigma_phi_init],
        &[delta_s0_init.abs().max(1.0), sigma_phi_init.abs().max(1e-7)],
        &["delta_s0", "sigma_phi"],
    )?;
    fit.params[1] = fit.params[1].abs();
    Ok(fit)
}
