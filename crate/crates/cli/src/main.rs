//! Command-line driver: maps each simulated experiment to a seeded,
//! config-driven run with CSV outputs. Subcommands cover the flux tuning
//! curve, switching S-curves, cross-Kerr spectroscopy, width-versus-noise
//! sweeps, offline fits of previously written CSVs, and device calibration.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use kerrsim::analysis::{
    flux_noise_fit, lorentzian_fit, s_curve_fit, s_curve_fit_width, tuning_curve_fit, FitResult,
};
use kerrsim::circuit::{kerr_coefficients, FluxPoint};
use kerrsim::config::Config;
use kerrsim::dynamics::{bistability_region, AnalyticSCurve, ThermalEnvironment};
use kerrsim::error::KerrError;
use kerrsim::noise::{broadened_width, jitter_broadened_width};
use kerrsim::protocol::{average_curves, SCurve};
use kerrsim::spectroscopy::{beta_from_mode_centers, photon_sensitivity, run_scan, ScanConfig};

#[derive(Parser)]
#[command(name = "kerrsim", version, about = "Flux-tunable Kerr resonator simulator")]
struct Cli {
    /// Configuration file (TOML); the built-in reference device when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for CSV files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Suppress the timestamp comment line at the top of each CSV.
    #[arg(long, global = true)]
    no_header_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mode frequencies along the flux tuning curve.
    Tune {
        /// Validate the configuration and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Repeated switching S-curves plus their average and widths.
    Scurve {
        #[arg(long)]
        dry_run: bool,
    },
    /// Cross-Kerr spectroscopy scans of the coupled modes.
    Spectroscopy {
        #[arg(long)]
        dry_run: bool,
    },
    /// S-curve width versus flux, temperature or drive power.
    NoiseSweep {
        #[arg(long)]
        dry_run: bool,
    },
    /// Offline fit of a CSV produced by one of the run subcommands.
    Fit {
        #[arg(long)]
        dry_run: bool,
    },
    /// Derived device quantities at the configured operating point.
    Calibrate {
        #[arg(long)]
        dry_run: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}

fn exit_code(err: &KerrError) -> i32 {
    match err {
        KerrError::Config(_) | KerrError::InvalidParams(_) => 2,
        _ => 3,
    }
}

fn run(cli: Cli) -> Result<(), KerrError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| KerrError::Config(format!("thread pool: {e}")))?;
    }
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::builtin_default(),
    };
    if let Some(seed) = cli.seed {
        config.run.master_seed = seed;
    }
    let writer = CsvWriter {
        out_dir: cli.out.clone(),
        timestamp: !cli.no_header_timestamp,
    };
    match cli.command {
        Command::Tune { dry_run } => cmd_tune(&config, &writer, dry_run),
        Command::Scurve { dry_run } => cmd_scurve(&config, &writer, dry_run),
        Command::Spectroscopy { dry_run } => cmd_spectroscopy(&config, &writer, dry_run),
        Command::NoiseSweep { dry_run } => cmd_noise_sweep(&config, &writer, dry_run),
        Command::Fit { dry_run } => cmd_fit(&config, &writer, dry_run),
        Command::Calibrate { dry_run } => cmd_calibrate(&config, &writer, dry_run),
    }
}

struct CsvWriter {
    out_dir: PathBuf,
    timestamp: bool,
}

impl CsvWriter {
    fn write(&self, name: &str, header: &str, rows: &[String]) -> Result<PathBuf, KerrError> {
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| KerrError::Config(format!("{}: {e}", self.out_dir.display())))?;
        let mut text = String::new();
        if self.timestamp {
            let epoch = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let _ = writeln!(text, "# generated {epoch}");
        }
        let _ = writeln!(text, "{header}");
        for row in rows {
            let _ = writeln!(text, "{row}");
        }
        let path = self.out_dir.join(name);
        std::fs::write(&path, text).map_err(|e| KerrError::Config(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

fn linspace(min: f64, max: f64, n: usize) -> Result<Vec<f64>, KerrError> {
    if n < 2 || !(max > min) {
        return Err(KerrError::Config(format!(
            "grid needs n >= 2 and max > min, got n = {n}, [{min}, {max}]"
        )));
    }
    let step = (max - min) / (n - 1) as f64;
    Ok((0..n).map(|i| min + i as f64 * step).collect())
}

fn cmd_tune(config: &Config, writer: &CsvWriter, dry_run: bool) -> Result<(), KerrError> {
    let params = config.device_params()?;
    let t = &config.tune;
    let grid = linspace(t.phi_min, t.phi_max, t.n_points)?;
    if t.modes.is_empty() {
        return Err(KerrError::Config("tune.modes is empty".into()));
    }
    if dry_run {
        println!("config ok: tune over {} flux points, modes {:?}", grid.len(), t.modes);
        return Ok(());
    }
    let mut rows = Vec::with_capacity(grid.len() * t.modes.len());
    for &phi in &grid {
        for &mode in &t.modes {
            let nu = params.mode_frequency(mode, FluxPoint::new(phi))?;
            rows.push(format!("{phi},{mode},{nu}"));
        }
    }
    let path = writer.write("tune.csv", "phi_reduced,mode,frequency_Hz", &rows)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn s_curve_rows(curve: &SCurve, rows: &mut Vec<String>) {
    for p in &curve.points {
        rows.push(format!(
            "{},{},{},{},{},{}",
            p.nu_d, p.p_s, p.ci_low, p.ci_high, p.n_pulses, curve.curve_index
        ));
    }
}

const SCURVE_HEADER: &str = "nu_d_Hz,p_s,ci_low,ci_high,n_pulses,curve_index";

fn cmd_scurve(config: &Config, writer: &CsvWriter, dry_run: bool) -> Result<(), KerrError> {
    let setup = config.switching_setup()?;
    let theory = setup.analytic_curve()?;
    let s = &config.scurve;
    let center = theory.nu_at_level(0.5)?;
    let half = 0.5 * s.span_widths * theory.width_10_90();
    let grid = linspace(center - half, center + half, s.n_points)?;
    if dry_run {
        println!(
            "config ok: {} curves x {} points x {} pulses",
            config.run.n_curves, s.n_points, setup.n_pulses
        );
        return Ok(());
    }
    let curves = setup.s_curves(&grid, config.run.n_curves)?;
    let mut rows = Vec::new();
    for curve in &curves {
        s_curve_rows(curve, &mut rows);
    }
    let path = writer.write("scurve.csv", SCURVE_HEADER, &rows)?;
    println!("wrote {}", path.display());

    let averaged = average_curves(&curves)?;
    let mut avg_rows = Vec::new();
    s_curve_rows(&averaged, &mut avg_rows);
    let avg_path = writer.write("scurve_average.csv", SCURVE_HEADER, &avg_rows)?;
    println!("wrote {}", avg_path.display());

    println!("theory width_10_90_Hz {}", theory.width_10_90());
    for curve in &curves {
        match curve.width_10_90() {
            Ok(w) => println!("curve {} width_10_90_Hz {w}", curve.curve_index),
            Err(e) => println!("curve {} width_10_90_Hz unresolved ({e})", curve.curve_index),
        }
    }
    let w_avg = averaged.width_10_90()?;
    println!("average width_10_90_Hz {w_avg}");
    Ok(())
}

fn cmd_spectroscopy(config: &Config, writer: &CsvWriter, dry_run: bool) -> Result<(), KerrError> {
    let setup = config.switching_setup()?;
    let sp = &config.spectroscopy;
    if sp.modes.is_empty() {
        return Err(KerrError::Config("spectroscopy.modes is empty".into()));
    }
    let scan_cfg = ScanConfig {
        span_linewidths: sp.span_linewidths,
        n_points: sp.n_points,
        target_delta_ps: sp.target_delta_ps,
        n_pulses: config.run.n_pulses,
    };
    if dry_run {
        println!(
            "config ok: spectroscopy of modes {:?}, {} points each",
            sp.modes, sp.n_points
        );
        return Ok(());
    }
    let mut rows = Vec::new();
    let mut centers = Vec::new();
    let width = setup.analytic_curve()?.width_10_90();
    for &mode in &sp.modes {
        let scan = run_scan(&setup, mode, &scan_cfg)?;
        for p in &scan.points {
            rows.push(format!("{},{},{},{},{}", mode, p.nu_probe, p.p_s, p.ci_low, p.ci_high));
        }
        println!(
            "mode {} center_Hz {} sigma_Hz {} lambda_Hz {}",
            mode,
            scan.center(),
            scan.center_sigma(),
            scan.lambda
        );
        let sens = photon_sensitivity(width, scan.lambda)?;
        println!("mode {} photon_sensitivity {sens}", mode);
        centers.push((mode, scan.center()));
    }
    let path = writer.write("spectroscopy.csv", "mode,nu_probe_Hz,p_s,ci_low,ci_high", &rows)?;
    println!("wrote {}", path.display());
    if centers.len() >= 3 {
        let (_, beta, sigma_beta) = beta_from_mode_centers(&setup.params, &centers)?;
        println!("beta {beta} sigma {sigma_beta}");
    }
    Ok(())
}

/// Power sensitivity of the switching frequency, d nu_sw / d ln P, from a
/// two-sided recalibration of the activation curve.
fn nu_sw_power_slope(
    spectrum: &kerrsim::circuit::ModeSpectrum,
    env: &ThermalEnvironment,
    photon_flux: f64,
    t_pulse: f64,
) -> Result<f64, KerrError> {
    let up = AnalyticSCurve::calibrate(spectrum, env, 1.01 * photon_flux, t_pulse, None)?;
    let down = AnalyticSCurve::calibrate(spectrum, env, 0.99 * photon_flux, t_pulse, None)?;
    Ok((up.nu_sw - down.nu_sw) / (1.01_f64 / 0.99).ln())
}

fn cmd_noise_sweep(config: &Config, writer: &CsvWriter, dry_run: bool) -> Result<(), KerrError> {
    let ns = &config.noise_sweep;
    let grid = linspace(ns.min, ns.max, ns.n_points)?;
    let axis = ns.axis.as_str();
    if !matches!(axis, "flux" | "temperature" | "power") {
        return Err(KerrError::Config(format!(
            "noise_sweep.axis must be flux, temperature or power, got '{axis}'"
        )));
    }
    if dry_run {
        println!("config ok: {axis} sweep over {} points, mc = {}", grid.len(), ns.mc);
        return Ok(());
    }
    let base_flux = if axis == "power" {
        Some(config.resolve_photon_flux()?)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(grid.len());
    for &value in &grid {
        let mut point = config.clone();
        match axis {
            "flux" => point.operating_point.phi_reduced = value,
            "temperature" => point.operating_point.temperature_mK = value,
            "power" => point.operating_point.photon_flux = Some(base_flux.unwrap() * value),
            _ => unreachable!(),
        }
        let setup = point.switching_setup()?;
        let spectrum = setup.spectrum()?;
        let (nu3, _, _) = spectrum.mode3();
        let env = setup.environment(nu3);
        let curve = setup.analytic_curve()?;
        let intrinsic = curve.width_10_90();
        let slope = nu_sw_power_slope(&spectrum, &env, setup.pulse.plateau_power, setup.pulse.t_measure)?;
        let freq_jitter = setup
            .noise
            .drive_freq_jitter
            .hypot(setup.noise.excess_freq_noise);
        let with_jitter =
            jitter_broadened_width(intrinsic, freq_jitter, setup.noise.drive_amp_jitter, slope);
        let delta_s = broadened_width(&setup.params, setup.flux, with_jitter, setup.noise.sigma_flux)?;
        let (mc_width, mc_ci) = if ns.mc {
            let mut mc_setup = setup.clone();
            mc_setup.n_pulses = ns.mc_pulses;
            let center = curve.nu_at_level(0.5)?;
            let half = 2.0 * delta_s.max(intrinsic);
            let mc_grid = linspace(center - half, center + half, config.scurve.n_points)?;
            let mc_curve = mc_setup.s_curve(&mc_grid, 0)?;
            let w = mc_curve.width_10_90()?;
            (format!("{w}"), format!("{}", mc_width_ci(&mc_curve, ns.mc_pulses)?))
        } else {
            (String::new(), String::new())
        };
        rows.push(format!("{value},{delta_s},{intrinsic},{mc_width},{mc_ci}"));
    }
    let path = writer.write(
        "noise_sweep.csv",
        "axis_value,delta_s_Hz,delta_s_analytic_Hz,delta_s_mc_Hz,mc_ci_Hz",
        &rows,
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Delta-method 95% half-interval for a Monte Carlo 10-90 width: binomial
/// level uncertainty mapped through the local slope of the fitted curve.
fn mc_width_ci(curve: &SCurve, n_pulses: usize) -> Result<f64, KerrError> {
    let mut var = 0.0;
    for level in [0.1, 0.9] {
        let lo = curve.nu_at_level(level - 0.02)?;
        let hi = curve.nu_at_level(level + 0.02)?;
        let dnudp = (hi - lo) / 0.04;
        let sigma_p = (level * (1.0 - level) / n_pulses as f64).sqrt();
        var += (sigma_p * dnudp) * (sigma_p * dnudp);
    }
    Ok(1.96 * var.sqrt())
}

fn cmd_fit(config: &Config, writer: &CsvWriter, dry_run: bool) -> Result<(), KerrError> {
    let fit_cfg = config
        .fit
        .as_ref()
        .ok_or_else(|| KerrError::Config("a [fit] section is required".into()))?;
    let kind = fit_cfg.kind.as_str();
    if !matches!(kind, "lorentzian" | "tuning" | "scurve" | "flux-noise") {
        return Err(KerrError::Config(format!(
            "fit.kind must be lorentzian, tuning, scurve or flux-noise, got '{kind}'"
        )));
    }
    if dry_run {
        println!("config ok: {kind} fit of {}", fit_cfg.input);
        return Ok(());
    }
    let table = CsvTable::load(Path::new(&fit_cfg.input))?;
    let fit = match kind {
        "lorentzian" => {
            let (xs, ys) = table.xy_columns()?;
            lorentzian_fit(&xs, &ys)?
        }
        "tuning" => {
            let phi = table.column("phi_reduced")?;
            let mode = table.column("mode")?;
            let nu = table.column("frequency_Hz")?;
            let mut phis = Vec::new();
            let mut nu3s = Vec::new();
            for i in 0..phi.len() {
                if mode[i] == 3.0 {
                    phis.push(phi[i]);
                    nu3s.push(nu[i]);
                }
            }
            if phis.len() < 5 {
                return Err(KerrError::InsufficientSpan(format!(
                    "{} mode-3 rows; the tuning fit needs at least 5",
                    phis.len()
                )));
            }
            let template = config.device_params()?;
            tuning_curve_fit(&template, &phis, &nu3s, template.i_c, template.nu_fundamental_bare)?
        }
        "scurve" => {
            let nu = table.column("nu_d_Hz")?;
            let p = table.column("p_s")?;
            let index = table.column("curve_index")?;
            let mut nus = Vec::new();
            let mut ps = Vec::new();
            for i in 0..nu.len() {
                if index[i] == 0.0 {
                    nus.push(nu[i]);
                    ps.push(p[i]);
                }
            }
            // gamma * t_measure reduces to the configured pulse length in
            // units of 1/gamma.
            let attempts = fit_cfg.attempts.unwrap_or(config.pulse.t_measure_over_gamma);
            let i_mid = (0..ps.len())
                .min_by(|&a, &b| {
                    (ps[a] - 0.5).abs().partial_cmp(&(ps[b] - 0.5).abs()).unwrap()
                })
                .ok_or_else(|| KerrError::DegenerateData("empty S-curve".into()))?;
            let span = (nus[nus.len() - 1] - nus[0]).abs();
            let fit = s_curve_fit(&nus, &ps, attempts, nus[i_mid], 0.2 * span)?;
            println!("width_10_90_Hz {}", s_curve_fit_width(&fit, attempts));
            fit
        }
        "flux-noise" => {
            let phis = table.column("axis_value")?;
            let widths = table.column("delta_s_Hz")?;
            let params = config.device_params()?;
            let floor = widths.iter().cloned().fold(f64::INFINITY, f64::min);
            flux_noise_fit(&params, &phis, &widths, floor, 1e-6)?
        }
        _ => unreachable!(),
    };
    report_fit(kind, &fit, writer)
}

fn report_fit(kind: &str, fit: &FitResult, writer: &CsvWriter) -> Result<(), KerrError> {
    println!("fit {kind}");
    let mut rows = Vec::new();
    for (i, name) in fit.names.iter().enumerate() {
        println!("  {name} = {} +/- {}", fit.params[i], fit.sigmas[i]);
        rows.push(format!("{name},{},{}", fit.params[i], fit.sigmas[i]));
    }
    println!("  residual_rms = {}", fit.residual_rms);
    println!("  converged = {} ({} iterations)", fit.converged, fit.iterations);
    rows.push(format!("residual_rms,{},", fit.residual_rms));
    let path = writer.write("fit.csv", "param,value,sigma", &rows)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_calibrate(config: &Config, writer: &CsvWriter, dry_run: bool) -> Result<(), KerrError> {
    let params = config.device_params()?;
    if dry_run {
        println!("config ok: calibrate at phi = {}", config.operating_point.phi_reduced);
        return Ok(());
    }
    let flux = config.flux();
    let linewidths = config.linewidths()?;
    let spectrum = kerr_coefficients(&params, flux, &[1, 3, 5], &linewidths)?;
    let (nu3, gamma3, k3) = spectrum.mode3();
    let region = bistability_region(&spectrum)?;
    let quantities: Vec<(&str, f64)> = vec![
        ("i_c_A", params.i_c),
        ("l_wg_H", params.l_wg),
        ("l_array_H", params.l_array(flux)?),
        ("beta", params.beta(flux)?),
        ("nu1_bare_Hz", params.nu_fundamental_bare),
        ("nu1_Hz", spectrum.frequency(1).unwrap()),
        ("nu3_Hz", nu3),
        ("nu5_Hz", spectrum.frequency(5).unwrap()),
        ("gamma3_Hz", gamma3),
        ("k3_Hz", k3),
        ("lambda13_Hz", spectrum.lambda(1, 3).unwrap()),
        ("n_critical", region.onset_photon_number_reported),
        ("delta_nu_critical_Hz", region.delta_nu_critical),
    ];
    let mut rows = Vec::new();
    for (name, value) in &quantities {
        println!("{name} {value}");
        rows.push(format!("{name},{value}"));
    }
    let path = writer.write("calibrate.csv", "quantity,value", &rows)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Minimal CSV reader for the files this binary writes: comment lines start
/// with '#', the first remaining line is the header.
struct CsvTable {
    header: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl CsvTable {
    fn load(path: &Path) -> Result<Self, KerrError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| KerrError::Config(format!("{}: {e}", path.display())))?;
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| KerrError::Config(format!("{}: empty file", path.display())))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut columns = vec![Vec::new(); header.len()];
        for (row_index, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != header.len() {
                return Err(KerrError::Config(format!(
                    "{}: row {} has {} cells, header has {}",
                    path.display(),
                    row_index + 1,
                    cells.len(),
                    header.len()
                )));
            }
            for (cell, column) in cells.iter().zip(&mut columns) {
                let value = if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.parse().map_err(|_| {
                        KerrError::Config(format!("{}: bad number '{cell}'", path.display()))
                    })?
                };
                column.push(value);
            }
        }
        Ok(Self { header, columns })
    }

    fn column(&self, name: &str) -> Result<&Vec<f64>, KerrError> {
        self.header
            .iter()
            .position(|h| h == name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| KerrError::Config(format!("missing column '{name}'")))
    }

    /// First two columns as (x, y) for generic trace fits.
    fn xy_columns(&self) -> Result<(Vec<f64>, Vec<f64>), KerrError> {
        if self.columns.len() < 2 {
            return Err(KerrError::Config("need at least two columns".into()));
        }
        Ok((self.columns[0].clone(), self.columns[1].clone()))
    }
}
