//! One function per subcommand. Each returns the files it wrote, relative to
//! the output directory.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;

use raman_core::dynamics::{chirped_drive, evolve, pi_pulse_infidelity, pulse_pi, write_fidelity_csv};
use raman_core::model::{DriveParams, SystemParams};
use raman_core::resolvent::{calibrate_drive_power_with, read_measurements_csv, stark_shift_resolvent, ResolventConfig};
use raman_core::spectral::{dressed_pair, effective_coupling_pt, lambda_system_coupling};
use raman_core::spectroscopy::{add_multiplicative_noise, extract_coupling, probe_grid, synthesize, ResponseModel, TransmissionTrace};
use raman_core::stark::{stark_parallel_transport, StarkSolution};
use raman_core::units::{ghz, mhz, to_ghz, to_mhz};

use crate::config::{Grid, RunConfig};
use crate::error::{config_err, CliError, CliResult};

fn create(out: &Path, name: &str) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(out.join(name))?))
}

fn default_steps(omega_max: f64) -> usize {
    ((4000.0 * to_ghz(omega_max)).ceil() as usize).max(100)
}

fn solve_stark(params: &SystemParams, omega_max: f64, n_steps: Option<usize>) -> CliResult<StarkSolution> {
    Ok(stark_parallel_transport(params, omega_max, n_steps.unwrap_or_else(|| default_steps(omega_max)))?)
}

fn omega_grid(grid: &Grid, what: &str) -> CliResult<Vec<f64>> {
    Ok(grid.values(what)?.into_iter().map(ghz).collect())
}

/// First-order, exact and Λ-system couplings on an Ω grid.
pub fn spectrum(cfg: &RunConfig, out: &Path) -> CliResult<Vec<String>> {
    let block = RunConfig::block(&cfg.spectrum, "spectrum")?;
    let params = cfg.params()?;
    let grid = omega_grid(&block.omega_ghz, "spectrum.omega_ghz")?;
    let omega_max = grid.iter().copied().fold(0.0, f64::max);
    let stark = solve_stark(&params, omega_max, block.n_steps)?;
    let rows = grid
        .par_iter()
        .map(|&om| -> CliResult<[f64; 4]> {
            let d = DriveParams::new(&params, om, block.phi, stark.omega_d_at(om)?)?;
            let first = effective_coupling_pt(&params, &d, 0)?.norm();
            let exact = stark.gtilde_at(om)?.abs();
            let lambda = lambda_system_coupling(&params, &d)?.norm();
            Ok([om, first, exact, lambda])
        })
        .collect::<CliResult<Vec<_>>>()?;
    let name = "gtilde_vs_omega.csv";
    let mut w = csv::Writer::from_writer(create(out, name)?);
    w.write_record(["omega_2pi_ghz", "gtilde_first_order_2pi_mhz", "gtilde_exact_2pi_mhz", "g_lambda_2pi_mhz"])?;
    for [om, a, b, c] in rows {
        w.write_record([format!("{:.9}", to_ghz(om)), format!("{:.12e}", to_mhz(a)), format!("{:.12e}", to_mhz(b)), format!("{:.12e}", to_mhz(c))])?;
    }
    w.flush()?;
    Ok(vec![name.into()])
}

/// Exact Stark curve plus resolvent series at each requested order.
pub fn stark(cfg: &RunConfig, out: &Path) -> CliResult<Vec<String>> {
    let block = RunConfig::block(&cfg.stark, "stark")?;
    let params = cfg.params()?;
    let grid = omega_grid(&block.omega_ghz, "stark.omega_ghz")?;
    if block.orders.is_empty() || block.orders.iter().any(|&n| n < 2 || n % 2 == 1) {
        return Err(config_err(format!("stark.orders must be even and >= 2, got {:?}", block.orders)));
    }
    let omega_max = grid.iter().copied().fold(0.0, f64::max);
    let sol = solve_stark(&params, omega_max, block.n_steps)?;
    let numeric_name = "stark_numeric.csv";
    sol.write_csv(create(out, numeric_name)?)?;

    let jobs: Vec<(f64, usize)> = grid.iter().flat_map(|&om| block.orders.iter().map(move |&n| (om, n))).collect();
    let shifts = jobs
        .par_iter()
        .map(|&(om, n)| Ok(stark_shift_resolvent(&params, om, n)?.delta_f0g1))
        .collect::<CliResult<Vec<f64>>>()?;
    let name = "stark_resolvent.csv";
    let mut w = csv::Writer::from_writer(create(out, name)?);
    let mut header = vec!["omega_2pi_ghz".to_string(), "numeric_2pi_mhz".to_string()];
    header.extend(block.orders.iter().map(|n| format!("order{n}_2pi_mhz")));
    w.write_record(&header)?;
    for (i, &om) in grid.iter().enumerate() {
        let mut rec = vec![format!("{:.9}", to_ghz(om)), format!("{:.12e}", to_mhz(sol.stark_shift_at(om)?))];
        let k = block.orders.len();
        rec.extend(shifts[i * k..(i + 1) * k].iter().map(|d| format!("{:.12e}", to_mhz(*d))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(vec![numeric_name.into(), name.into()])
}

/// π-pulse infidelity over (T, Δt) and an optional trajectory.
pub fn dynamics(cfg: &RunConfig, out: &Path) -> CliResult<Vec<String>> {
    let block = RunConfig::block(&cfg.dynamics, "dynamics")?;
    let params = cfg.params()?;
    if block.total_times_ns.is_empty() || block.rise_times_ns.is_empty() {
        return Err(config_err("dynamics: empty duration or rise-time list"));
    }
    let mut jobs = Vec::new();
    for &t in &block.total_times_ns {
        for &r in &block.rise_times_ns {
            if !(r > 0.0 && 2.0 * r <= t) {
                return Err(config_err(format!("dynamics: rise {r} ns does not fit in T = {t} ns")));
            }
            jobs.push((t, r));
        }
    }
    let stark = solve_stark(&params, ghz(block.omega_max_ghz), block.n_steps)?;
    let points = jobs
        .par_iter()
        .map(|&(t, r)| Ok(pi_pulse_infidelity(&params, &stark, t, r)?))
        .collect::<CliResult<Vec<_>>>()?;
    let name = "fidelity_sweep.csv";
    write_fidelity_csv(&points, create(out, name)?)?;
    let mut files = vec![name.to_string()];

    if let Some(ts) = &block.time_series {
        if ts.samples < 2 {
            return Err(config_err("dynamics.time_series.samples must be >= 2"));
        }
        let pulse = pulse_pi(&stark, ts.total_ns, ts.rise_ns)?;
        let mut drive = chirped_drive(&pulse, &stark)?;
        if !ts.chirp {
            drive = drive.without_chirp();
        }
        let (f0, _) = dressed_pair(&params, stark.omega_d0())?;
        let n = ts.samples;
        let grid: Vec<f64> = (0..n).map(|i| ts.total_ns * i as f64 / (n - 1) as f64).collect();
        let res = evolve(&params, &drive, &f0, &grid)?;
        let name = "time_series.csv";
        res.write_csv(create(out, name)?)?;
        files.push(name.into());
    }
    Ok(files)
}

/// Peak-find and fit a measured or synthesized transmission trace.
pub fn fit(cfg: &RunConfig, out: &Path, seed: u64) -> CliResult<Vec<String>> {
    let block = RunConfig::block(&cfg.fit, "fit")?;
    let mut files = Vec::new();
    let trace = match (&block.trace_csv, &block.synthetic) {
        (Some(path), None) => {
            let file = File::open(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            TransmissionTrace::read_csv(file).map_err(|e| match e {
                raman_core::Error::Io(_) | raman_core::Error::Csv(_) | raman_core::Error::Config(_) => config_err(format!("{}: {e}", path.display())),
                other => CliError::Core(other),
            })?
        }
        (None, Some(s)) => {
            let m = ResponseModel::new(s.a0, mhz(s.gtilde_mhz), ghz(s.center_ghz), mhz(s.kappa_mhz), mhz(s.gamma_mhz))
                .map_err(|e| config_err(format!("fit.synthetic: {e}")))?;
            let grid = probe_grid(m.omega_d0 - mhz(s.half_span_mhz), m.omega_d0 + mhz(s.half_span_mhz), s.points);
            let clean = synthesize(&m, &grid).map_err(|e| config_err(format!("fit.synthetic: {e}")))?;
            let trace = if s.noise > 0.0 { add_multiplicative_noise(&clean, s.noise, seed)? } else { clean };
            let name = "trace.csv";
            trace.write_csv(create(out, name)?)?;
            files.push(name.to_string());
            trace
        }
        _ => return Err(config_err("fit: give exactly one of trace_csv or synthetic")),
    };
    let fit = extract_coupling(&trace)?;
    let m = fit.model;
    let sd = fit.std_errors();
    let summary = serde_json::json!({
        "a0": m.a0,
        "gtilde_2pi_mhz": to_mhz(m.gtilde),
        "omega_d0_2pi_ghz": to_ghz(m.omega_d0),
        "kappa_2pi_mhz": to_mhz(m.kappa),
        "gamma_2pi_mhz": to_mhz(m.gamma),
        "std_errors": sd.map(|s| serde_json::json!({
            "a0": s[0],
            "gtilde_2pi_mhz": to_mhz(s[1]),
            "omega_d0_2pi_ghz": to_ghz(s[2]),
            "kappa_2pi_mhz": to_mhz(s[3]),
            "gamma_2pi_mhz": to_mhz(s[4]),
        })),
        "iterations": fit.iterations,
    });
    let name = "fit_result.json";
    serde_json::to_writer_pretty(create(out, name)?, &summary)?;
    files.push(name.into());
    let name = "fit_residuals.csv";
    let mut w = csv::Writer::from_writer(create(out, name)?);
    w.write_record(["probe_ghz", "residual"])?;
    for (o, r) in trace.omegas().iter().zip(&fit.residuals) {
        w.write_record([format!("{:.12}", to_ghz(*o)), format!("{:.6e}", r)])?;
    }
    w.flush()?;
    files.push(name.into());
    Ok(files)
}

/// Drive-power conversion factor from measured Stark shifts.
pub fn calibrate(cfg: &RunConfig, out: &Path) -> CliResult<Vec<String>> {
    let block = RunConfig::block(&cfg.calibrate, "calibrate")?;
    let params = cfg.params()?;
    let path = &block.measurements_csv;
    let file = File::open(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let data = read_measurements_csv(file).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    if block.order_omega < 2 || block.order_omega % 2 == 1 {
        return Err(config_err(format!("calibrate.order_omega must be even and >= 2, got {}", block.order_omega)));
    }
    let fit = calibrate_drive_power_with(&params, &data, &ResolventConfig::with_order(block.order_omega))?;
    let summary = serde_json::json!({
        "k_2pi_ghz_per_sqrt_mw": to_ghz(fit.k),
        "k_std_2pi_ghz_per_sqrt_mw": fit.k_std.map(to_ghz),
        "iterations": fit.iterations,
        "points": data.len(),
    });
    let name = "calibration.json";
    serde_json::to_writer_pretty(create(out, name)?, &summary)?;
    let res_name = "calibration_residuals.csv";
    let mut w = csv::Writer::from_writer(create(out, res_name)?);
    w.write_record(["power_mw", "delta_f0g1_2pi_mhz", "residual_2pi_mhz"])?;
    for (m, r) in data.iter().zip(&fit.residuals) {
        w.write_record([format!("{}", m.power_mw), format!("{:.9e}", to_mhz(m.delta_f0g1)), format!("{:.6e}", to_mhz(*r))])?;
    }
    w.flush()?;
    Ok(vec![name.into(), res_name.into()])
}
