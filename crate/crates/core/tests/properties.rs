//! Property tests for the circuit model and the driven-mode dynamics:
//! randomized inputs must respect the structural invariants that the unit
//! tests only spot-check.

use kerrsim::circuit::{josephson_inductance, kerr_coefficients, CircuitParams, FluxPoint, Linewidths};
use kerrsim::dynamics::{bistability_region, steady_state_raw, Stability};
use kerrsim::protocol::{Engine, SwitchingSetup};
use proptest::prelude::*;

fn sample_spectrum(phi: f64) -> kerrsim::circuit::ModeSpectrum {
    let p = CircuitParams::sample_device();
    kerr_coefficients(&p, FluxPoint::new(phi), &[1, 2, 3, 4, 5], &Linewidths::single(212e3)).unwrap()
}

proptest! {
    #[test]
    fn josephson_inductance_is_periodic_and_symmetric(
        phi in -3.0..3.0f64,
        k in -3i32..=3,
    ) {
        let i_c = 6.72e-6;
        let base = josephson_inductance(i_c, FluxPoint::new(phi)).unwrap();
        let shifted = josephson_inductance(i_c, FluxPoint::new(phi + k as f64)).unwrap();
        let mirrored = josephson_inductance(i_c, FluxPoint::new(-phi)).unwrap();
        prop_assert!((shifted / base - 1.0).abs() < 1e-9);
        prop_assert!((mirrored / base - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kerr_tensor_ratios_are_consistent(phi in 0.0..0.45f64) {
        // The whole tensor hangs off one ratio: K_n = r nu_n^2 / nu_3 and
        // lambda_{n,m}^2 = K_n K_m for any pair of coupled odd modes.
        let s = sample_spectrum(phi);
        let r = s.kerr(3).unwrap() / s.frequency(3).unwrap();
        for &n in &[1usize, 3, 5] {
            let nu_n = s.frequency(n).unwrap();
            let k_n = s.kerr(n).unwrap();
            prop_assert!((k_n - r * nu_n * nu_n / s.frequency(3).unwrap()).abs() <= 1e-12 * k_n.abs().max(1e-9));
            for &m in &[1usize, 3, 5] {
                if m == n { continue; }
                let lam = s.lambda(n, m).unwrap();
                let k_m = s.kerr(m).unwrap();
                prop_assert!((lam * lam / (k_n * k_m) - 1.0).abs() < 1e-9);
            }
        }
        // Even modes carry no Kerr shift at all.
        prop_assert_eq!(s.kerr(2).unwrap(), 0.0);
        prop_assert_eq!(s.kerr(4).unwrap(), 0.0);
    }

    #[test]
    fn steady_state_roots_satisfy_the_cubic(
        delta_over_gamma in -6.0..6.0f64,
        log_f in -2.0..4.0f64,
        log_k in -3.0..0.0f64,
    ) {
        let gamma = 212e3;
        let kerr = gamma * 10f64.powf(log_k);
        let delta_nu = delta_over_gamma * gamma;
        let f = gamma * gamma * 10f64.powf(log_f);
        let state = steady_state_raw(delta_nu, gamma, kerr, f);
        prop_assert!(!state.branches.is_empty());
        for &(n, _) in &state.branches {
            let eff = delta_nu - 2.0 * kerr * n;
            let residual = n * (eff * eff + 0.25 * gamma * gamma) - f;
            prop_assert!(
                residual.abs() < 1e-9 * f,
                "residual {residual:e} at n {n}"
            );
        }
        // Stable and unstable branches must alternate in photon number.
        for pair in state.branches.windows(2) {
            prop_assert!(pair[0].0 < pair[1].0);
            prop_assert!(pair[0].1 != pair[1].1 || state.degenerate);
        }
        let _ = Stability::Stable;
    }

    #[test]
    fn tuning_curve_is_monotone_decreasing(phi in 0.0..0.44f64, step in 1e-4..0.01f64) {
        let p = CircuitParams::sample_device();
        let lo = p.mode_frequency(3, FluxPoint::new(phi)).unwrap();
        let hi = p.mode_frequency(3, FluxPoint::new(phi + step)).unwrap();
        prop_assert!(hi < lo, "nu3({}) = {lo} vs nu3({}) = {hi}", phi, phi + step);
    }

    #[test]
    fn bistable_window_opens_past_the_critical_detuning(
        phi in 0.0..0.4f64,
        margin in 1.05..8.0f64,
    ) {
        let s = sample_spectrum(phi);
        let region = bistability_region(&s).unwrap();
        let delta_nu = margin * region.delta_nu_critical;
        let (f_lo, f_hi) = region.spinodal_drives(delta_nu).unwrap();
        prop_assert!(f_lo < f_hi);
        // Midway between the spinodal drives the cubic has three branches.
        let (_, gamma, kerr) = s.mode3();
        let state = steady_state_raw(delta_nu, gamma, kerr, 0.5 * (f_lo + f_hi));
        prop_assert!(state.is_bistable());
        // Below the critical detuning no drive makes the state bistable.
        prop_assert!(region.spinodal_drives(0.9 * region.delta_nu_critical).is_err());
    }

    #[test]
    fn analytic_switching_counts_are_deterministic(seed in 0u64..1000) {
        let mut setup = SwitchingSetup::sample(Engine::Analytic);
        setup.master_seed = seed;
        setup.n_pulses = 200;
        // Bias the plateau drive to the upper spinodal of a convenient
        // detuning so the activation-law calibration has a bistable window.
        let spectrum = setup.spectrum().unwrap();
        let (nu3, gamma, _) = spectrum.mode3();
        let env = setup.environment(nu3);
        let delta = kerrsim::dynamics::delta_nu_for_width(&spectrum, &env, 0.5e-6).unwrap();
        let (_, upper) = bistability_region(&spectrum).unwrap().spinodal_drives(delta).unwrap();
        setup.pulse.plateau_power = upper / (0.5 * gamma);
        let curve = setup.analytic_curve().unwrap();
        let nu_d = curve.nu_at_level(0.5).unwrap();
        let a = setup.switching_probability(nu_d, 0, 0).unwrap();
        let b = setup.switching_probability(nu_d, 0, 0).unwrap();
        prop_assert_eq!(a.n_switched, b.n_switched);
        prop_assert!(a.p_s > 0.2 && a.p_s < 0.8, "p_s {}", a.p_s);
    }
}
