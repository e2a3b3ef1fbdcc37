use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use ppmt_core::analysis::{scaling_experiment, white_noise_calibration, CalibrationConfig, ScalingConfig};
use ppmt_core::estimators::{
    oracle_esd, ppmt_esd, psth_esd, relative_mse, ss_esd, EstimatorReport, Method, Observations,
};
use ppmt_core::io;
use ppmt_core::simgen::{generate, true_esd_reference};
use ppmt_core::taper::compute_dpss;
use ppmt_core::{Error, Exec, FreqGrid, HarmonicLayout, Result};
use serde::Serialize;

use crate::config::RunConfig;

fn write_text(path: &Path, text: &str) -> Result<()> {
    io::atomic_write(path, |w| Ok(w.write_all(text.as_bytes())?))
}

fn write_toml(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = toml::to_string_pretty(value).map_err(|e| Error::Validation(format!("cannot serialize report: {e}")))?;
    write_text(path, &text)
}

pub fn simulate(mut cfg: RunConfig) -> Result<()> {
    let seed = cfg.require_seed()?;
    let out = cfg.out_dir()?.to_path_buf();
    cfg.scenario.seed = seed;
    cfg.scenario.validate()?;
    let grid = FreqGrid::new(cfg.layout.n, cfg.layout.n_max, cfg.scenario.sample_rate)?;
    fs::create_dir_all(&out)?;

    let sim = generate(&cfg.scenario)?;
    let truth = true_esd_reference(&cfg.scenario, grid)?;
    io::save_raster(&out.join("raster.bin"), &sim.raster)?;
    io::save_series(&out.join("latent.bin"), &sim.latent)?;
    io::save_esd(&out.join("truth.esd"), &truth)?;
    io::save_esd_table(&out.join("truth.tsv"), &truth)?;
    cfg.paths.raster = Some(out.join("raster.bin"));
    cfg.paths.latent = Some(out.join("latent.bin"));
    if let Some(c) = &sim.continuous {
        io::save_series(&out.join("continuous.bin"), c)?;
        cfg.paths.continuous = Some(out.join("continuous.bin"));
        cfg.estimate.continuous_channels =
            (0..sim.latent.channels()).filter(|j| !sim.spiking_channels.contains(j)).collect();
        cfg.estimate.noise_variance = sim.noise_variance;
    }
    write_text(&out.join("run.toml"), &cfg.to_toml()?)?;
    eprintln!(
        "simulated {:?}: K={} J={} L={} into {}",
        cfg.scenario.case,
        sim.raster.bins(),
        sim.latent.channels(),
        sim.raster.trials(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TaperRecord {
    taper: usize,
    em_iterations: usize,
    converged_channels: usize,
    newton_iterations: usize,
    objective: Vec<f64>,
}

#[derive(Serialize)]
struct Diagnostics {
    method: Method,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    runtime_s: f64,
    tapers: Vec<TaperRecord>,
    config: RunConfig,
}

fn run_estimator(cfg: &RunConfig) -> Result<EstimatorReport> {
    let method = cfg.estimate.method;
    let need = |p: &Option<std::path::PathBuf>, what: &str| {
        p.clone().ok_or_else(|| Error::Validation(format!("method {} needs a {what} file", method.name())))
    };
    let tapers = compute_dpss(cfg.scenario.window_length, cfg.tapers.time_bandwidth, cfg.tapers.count)?;
    let exec = Exec::default();

    if method == Method::Oracle {
        let latent = io::load_series(&need(&cfg.paths.latent, "latent")?)?;
        let grid = FreqGrid::new(cfg.layout.n, cfg.layout.n_max, cfg.scenario.sample_rate)?;
        return oracle_esd(&latent, grid, &tapers, exec);
    }
    if method == Method::True {
        return Err(Error::Validation("the true ESD is written by `simulate`, not estimated".into()));
    }

    let raster = io::load_raster(&need(&cfg.paths.raster, "raster")?)?;
    let continuous = match (&cfg.paths.continuous, cfg.estimate.noise_variance) {
        (Some(path), Some(_)) => Some(io::load_series(path)?),
        (None, None) => None,
        (Some(_), None) => {
            return Err(Error::Validation("continuous channels need the observation noise variance".into()))
        }
        (None, Some(_)) => return Err(Error::Validation("a noise variance was given without continuous data".into())),
    };
    let continuous_channels: Vec<usize> = match &continuous {
        Some(c) if cfg.estimate.continuous_channels.is_empty() => {
            (raster.channels()..raster.channels() + c.channels()).collect()
        }
        Some(_) => cfg.estimate.continuous_channels.clone(),
        None => Vec::new(),
    };
    let obs = Observations { raster: &raster, continuous: continuous.as_ref(), continuous_channels: &continuous_channels };
    obs.validate()?;
    let layout = HarmonicLayout::for_samples(
        obs.channels(),
        raster.bins(),
        cfg.layout.n,
        cfg.layout.n_max,
        cfg.scenario.window_length,
        1.0 / raster.bin_width(),
    )?;
    match method {
        Method::Ppmt => ppmt_esd(&obs, &layout, &tapers, &cfg.ppmt, cfg.estimate.noise_variance),
        Method::Ss => ss_esd(&obs, layout.grid(), &tapers, &cfg.ss),
        Method::Psth => psth_esd(&obs, layout.grid(), &tapers, exec),
        Method::Oracle | Method::True => unreachable!(),
    }
}

pub fn estimate(cfg: RunConfig) -> Result<()> {
    let out = cfg.out_dir()?.to_path_buf();
    fs::create_dir_all(&out)?;
    let name = cfg.estimate.method.name();
    let start = Instant::now();
    let result = run_estimator(&cfg);
    let mut diag = Diagnostics {
        method: cfg.estimate.method,
        status: "ok",
        error: None,
        runtime_s: start.elapsed().as_secs_f64(),
        tapers: Vec::new(),
        config: cfg.clone(),
    };
    match &result {
        Ok(report) => {
            diag.tapers = report
                .diagnostics
                .iter()
                .map(|d| TaperRecord {
                    taper: d.taper,
                    em_iterations: d.em_iterations,
                    converged_channels: d.converged_channels,
                    newton_iterations: d.newton_iterations,
                    objective: d.objective.clone(),
                })
                .collect();
            io::save_esd(&out.join(format!("{name}.esd")), &report.esd)?;
            io::save_esd_table(&out.join(format!("{name}.tsv")), &report.esd)?;
        }
        Err(e) => {
            diag.status = "failed";
            diag.error = Some(e.to_string());
        }
    }
    write_toml(&out.join(format!("{name}.diagnostics.toml")), &diag)?;
    let report = result?;
    eprintln!("{}: {} windows, {:.1} s", report.method.label(), report.esd.windows(), report.runtime_s);
    Ok(())
}

/// Per-method relative MSE over runs: `(method, values)`.
pub fn mse_table(runs: &[&Path], methods: Option<&[Method]>) -> Result<Vec<(Method, Vec<f64>)>> {
    let first = runs.first().ok_or_else(|| Error::Validation("no runs to compare".into()))?;
    let methods: Vec<Method> = match methods {
        Some(m) => m.to_vec(),
        None => Method::ESTIMATORS
            .into_iter()
            .chain([Method::True])
            .filter(|m| first.join(format!("{}.esd", m.name())).exists())
            .collect(),
    };
    if methods.is_empty() {
        return Err(Error::Validation(format!("no estimates found in {}", first.display())));
    }
    let mut rows: Vec<(Method, Vec<f64>)> = methods.iter().map(|m| (*m, Vec::new())).collect();
    for dir in runs {
        let truth = io::load_esd(&dir.join("truth.esd"))?;
        for (method, values) in rows.iter_mut() {
            let est = io::load_esd(&dir.join(format!("{}.esd", method.name())))?;
            values.push(relative_mse(&est, &truth)?);
        }
    }
    Ok(rows)
}

pub fn format_table(rows: &[(Method, Vec<f64>)]) -> String {
    let mut s = String::new();
    let seeds = rows.first().map(|r| r.1.len()).unwrap_or(0);
    writeln!(s, "Relative MSE over {seeds} run(s)").unwrap();
    writeln!(s, "{:<12} {:>12} {:>12}", "Method", "Average", "Variance").unwrap();
    for (method, v) in rows {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        writeln!(s, "{:<12} {:>12.4} {:>12.4e}", method.label(), mean, var).unwrap();
    }
    s
}

pub fn compare(runs: &[std::path::PathBuf], methods: Option<&[Method]>, out: Option<&Path>) -> Result<()> {
    let dirs: Vec<&Path> = runs.iter().map(|p| p.as_path()).collect();
    let table = format_table(&mse_table(&dirs, methods)?);
    print!("{table}");
    if let Some(path) = out {
        write_text(path, &table)?;
    }
    Ok(())
}

pub fn dpss(length: usize, time_bandwidth: f64, count: usize, out: &Path) -> Result<()> {
    let set = compute_dpss(length, time_bandwidth, count)?;
    let mut s = String::new();
    let eig: Vec<String> = set.eigenvalues().iter().map(|c| format!("{c:.15}")).collect();
    writeln!(s, "# W={length} NW={time_bandwidth} eigenvalues: {}", eig.join(" ")).unwrap();
    let head: Vec<String> = (0..count).map(|p| format!("taper_{p}")).collect();
    writeln!(s, "index\t{}", head.join("\t")).unwrap();
    for t in 0..length {
        let row: Vec<String> = (0..count).map(|p| format!("{:.17e}", set.taper(p)[t])).collect();
        writeln!(s, "{t}\t{}", row.join("\t")).unwrap();
    }
    write_text(out, &s)?;
    eprintln!("eigenvalues: {}", eig.join(" "));
    Ok(())
}

pub fn verify_scaling(cfg: &ScalingConfig, out: &Path) -> Result<()> {
    let report = scaling_experiment(cfg)?;
    for row in &report.rows {
        eprintln!(
            "L={:>6}  bias {:.3e} (se {:.1e})  excess std {:.3e} (se {:.1e})  discard {:.3}",
            row.trials, row.mean_bias, row.bias_se, row.mean_excess_std, row.excess_std_se, row.discard_rate
        );
    }
    write_toml(out, &report)
}

pub fn verify_calibration(cfg: &CalibrationConfig, out: &Path) -> Result<()> {
    let report = white_noise_calibration(cfg)?;
    let (lo, hi) = report.mean_db_range();
    eprintln!(
        "mean within [{lo:.3}, {hi:.3}] dB of the true level, integrated power {:.4}, variance ratio {:.3}",
        report.integrated_power,
        report.variance_ratio()
    );
    write_toml(out, &report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layout() {
        let rows = vec![(Method::Oracle, vec![0.1, 0.3]), (Method::Ppmt, vec![0.5])];
        let t = format_table(&rows);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].contains("2 run(s)"));
        assert!(lines[2].starts_with("Oracle ESD"));
        assert!(lines[2].contains("0.2000"));
        assert!(lines[2].contains("2.0000e-2"));
        assert!(lines[3].contains("0.0000e0"));
    }
}
