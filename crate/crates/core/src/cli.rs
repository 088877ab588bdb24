// SPDX-License-Identifier: Apache-2.0

//! The `cdd-sense` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
//! error, 3 a fit did not converge (outputs written so far are kept and the
//! fit report carries `"converged": false`).

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{self, FitModel, FitOptions, RabiFit, SensitivityInputs};
use crate::config::{RunConfig, UnitSystem};
use crate::error::Error;
use crate::experiment::{self, SampleGrid};
use crate::io::{self, Cell};
use crate::model::{self, DriveConfig, Frame, HierarchyReport};
use crate::noise::{self, NoiseConfig};
use crate::propagate::{self, PropagationSpec, SpinState};
use crate::readout;
use crate::scan::{self, Objective, ProjectionInputs, ScanAxis, ScanSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FIT: i32 = 3;

/// Rows in the fine noiseless trace written by `simulate`.
const TRACE_SAMPLES: usize = 4000;

#[derive(Debug, Parser)]
#[command(name = "cdd-sense", version, about = "Concatenated dynamical decoupling magnetometry simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one configuration: trace, strobe record and fit.
    Simulate(RunArgs),
    /// Sweep one parameter and tabulate an objective.
    Scan(RunArgs),
    /// Smallest detectable field against total time, single vs double drive.
    Sensitivity(RunArgs),
    /// Fit a trace CSV with columns t, p1 and optionally p1_se.
    Fit(FitArgs),
    /// Tune noise strengths to a coherence-time ladder.
    Calibrate(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, short)]
    pub config: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Trace to fit.
    pub input: PathBuf,
    /// Optional config; only `fit_p` is used.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    pub out: PathBuf,
}

impl CommonArgs {
    fn overrides(&self) -> Vec<String> {
        let mut o = self.set.clone();
        if let Some(s) = self.seed {
            o.push(format!("seed={s}"));
        }
        if let Some(n) = self.trajectories {
            o.push(format!("trajectories={n}"));
        }
        o
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::FitNonConvergence { .. } => EXIT_FIT,
            _ => EXIT_FAILURE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: &Cli) -> CliResult {
    let common = match &cli.command {
        Command::Simulate(a) | Command::Scan(a) | Command::Sensitivity(a) | Command::Calibrate(a) => &a.common,
        Command::Fit(a) => &a.common,
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be >= 1"));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Sensitivity(a) => sensitivity(a),
        Command::Fit(a) => fit(a),
        Command::Calibrate(a) => calibrate(a),
    }
}

fn load(path: &Path, common: &CommonArgs) -> CliResult<RunConfig> {
    let rc = RunConfig::load(path, &common.overrides()).map_err(CliError::usage)?;
    rc.resolve().map_err(CliError::usage)?;
    Ok(rc)
}

fn prepare_out(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::from(Error::invalid(format!("cannot create {}: {e}", dir.display()))))
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    trajectories: usize,
    unit: UnitSystem,
    /// Seconds per internal time unit.
    time_unit_s: f64,
    /// Internal time units per input time unit.
    time_scale: f64,
    hierarchy: HierarchyReport,
}

fn write_provenance(out: &Path, command: &str, rc: &RunConfig) -> CliResult {
    let r = rc.resolve().map_err(CliError::usage)?;
    std::fs::write(out.join("config.toml"), rc.to_toml_string()?).map_err(Error::from)?;
    let meta = Meta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: rc.seed,
        trajectories: rc.trajectories,
        unit: rc.unit,
        time_unit_s: r.time_unit_s,
        time_scale: r.time_scale,
        hierarchy: model::validate_hierarchy(&r.drive, model::DEFAULT_MIN_RATIO),
    };
    io::write_json(&out.join("meta.json"), &meta)?;
    Ok(())
}

fn warn_hierarchy(drive: &DriveConfig) {
    let report = model::validate_hierarchy(drive, model::DEFAULT_MIN_RATIO);
    for check in report.ratios.iter().filter(|c| !c.pass) {
        eprintln!(
            "warning: scale separation {} = {:.3} is below {}",
            check.name, check.value, report.min_ratio
        );
    }
}

/// A fit with the input-unit readings attached.
#[derive(Debug, Serialize)]
pub struct FitReport {
    pub converged: bool,
    pub fit: RabiFit,
    /// Fitted oscillation frequency, cycles per input time unit.
    pub frequency: f64,
    /// Fitted decay time, input time units.
    pub t2: f64,
    /// Signal strength implied by the fitted rate, cycles per input time
    /// unit; absent without a config.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_estimate: Option<f64>,
}

fn fit_options(rc: Option<&RunConfig>) -> FitOptions {
    FitOptions {
        fixed_p: rc.and_then(|c| c.fit_p),
        ..FitOptions::default()
    }
}

/// Runs the fit and writes `fit.json`; a non-converged fit is still written.
fn fit_and_report(
    out: &Path,
    times: &[f64],
    values: &[f64],
    stderr: Option<&[f64]>,
    rc: Option<&RunConfig>,
) -> CliResult<RabiFit> {
    let opts = fit_options(rc);
    let (fit, converged, err) = match analysis::fit_signal(times, values, stderr, &opts) {
        Ok(f) => (f, true, None),
        Err(Error::FitNonConvergence { best, iterations, residual }) => (
            (*best).clone(),
            false,
            Some(Error::FitNonConvergence {
                iterations,
                residual,
                best,
            }),
        ),
        Err(e) => return Err(e.into()),
    };
    let scale = rc.map_or(1.0, RunConfig::time_scale);
    let g_estimate = rc.and_then(|c| {
        let factor = c.drive().signal_rate_factor();
        (fit.model == FitModel::DampedCosine).then(|| fit.frequency * scale / factor)
    });
    let report = FitReport {
        converged,
        frequency: fit.frequency * scale,
        t2: fit.t2 / scale,
        g_estimate,
        fit: fit.clone(),
    };
    io::write_json(&out.join("fit.json"), &report)?;
    match err {
        Some(e) => Err(e.into()),
        None => Ok(fit),
    }
}

fn simulate(a: &RunArgs) -> CliResult {
    let rc = load(&a.config, &a.common)?;
    let r = rc.resolve().map_err(CliError::usage)?;
    warn_hierarchy(&r.drive);
    let out = &a.common.out;
    prepare_out(out)?;
    write_provenance(out, "simulate", &rc)?;

    write_fine_trace(out, &rc, &r.drive, r.t_final)?;

    let grid = if r.drive.omega1 > 0.0 {
        SampleGrid::strobe(&r.drive, r.t_final, rc.strobe_stride)?
    } else {
        SampleGrid::covering(&r.drive, r.t_final, 400)?
    };
    let ens = experiment::run_rabi(&r.drive, &r.noise, &grid, &r.ensemble)?;
    let reps = vec![rc.repetitions.max(1); ens.times.len()];
    let photons = readout::photon_sample(&ens.mean, &r.fluorescence, &reps, rc.seed, 0)?;
    let k = 1.0 / r.time_scale;
    let rows: Vec<Vec<Cell>> = (0..ens.times.len())
        .map(|i| {
            vec![
                Cell::Float(ens.times[i] * k),
                Cell::Float(ens.mean[i]),
                Cell::Float(ens.stderr[i]),
                Cell::Int(photons.repetitions[i]),
                Cell::Int(photons.counts[i]),
                Cell::Float(photons.normalized[i]),
                Cell::Float(photons.sigma[i]),
            ]
        })
        .collect();
    io::write_csv(
        &out.join("strobe.csv"),
        &["t", "p1", "p1_se", "repetitions", "counts", "normalized", "sigma"],
        &rows,
    )?;

    // fit in input units, exactly as `fit` will see the CSV
    let times: Vec<f64> = ens.times.iter().map(|t| t * k).collect();
    let se = (ens.trajectories > 1).then_some(ens.stderr.as_slice());
    let fit = fit_and_report(out, &times, &ens.mean, se, Some(&rc))?;
    let envelope = if fit.t2.is_finite() {
        format!("exp(-(x/{})**{})", fit.t2, fit.p)
    } else {
        "1".into()
    };
    write_plot_script(
        out,
        &format!(
            "set xlabel 't'\nset ylabel 'P(-a)'\n\
             f(x) = {a}*{envelope}*cos(2*pi*{f}*x + {ph}) + {b}\n\
             plot 'strobe.csv' using 1:2:3 with yerrorbars title 'strobe', f(x) title 'fit'\n",
            a = fit.amplitude,
            f = fit.frequency,
            ph = fit.phase,
            b = fit.offset,
        ),
    )?;
    Ok(())
}

/// Writes `plot.gp`, a gnuplot script for the CSVs next to it.
fn write_plot_script(out: &Path, body: &str) -> CliResult {
    let text = format!("# gnuplot -p plot.gp\nset datafile separator ','\nset key autotitle columnhead\n{body}");
    std::fs::write(out.join("plot.gp"), text).map_err(Error::from)?;
    Ok(())
}

/// Noiseless pure-state evolution in the first rotating frame.
fn write_fine_trace(out: &Path, rc: &RunConfig, drive: &DriveConfig, t_final: f64) -> CliResult {
    let h = noise::noisy_hamiltonian(drive, &NoiseConfig::quiet(), 0, 0, Frame::Ip1, t_final)?;
    let sample_dt = t_final / TRACE_SAMPLES as f64;
    let spec = PropagationSpec::for_sampling(sample_dt, t_final, PropagationSpec::max_step(&h));
    let start = SpinState::pure(
        crate::pauli::ket_along(&readout::protected_axis(drive)),
        Frame::Ip1,
        0.0,
    );
    let trace = propagate::evolve(&start, &h, &spec)?;
    let amps = trace.amplitudes.as_ref().expect("pure evolution records amplitudes");
    let k = 1.0 / rc.time_scale();
    let rows: Vec<Vec<Cell>> = (0..trace.times.len())
        .map(|i| {
            let b = crate::pauli::Field::from(trace.bloch[i]);
            vec![
                Cell::Float(trace.times[i] * k),
                Cell::Float(trace.p0[i]),
                Cell::Float(trace.p1[i]),
                Cell::Float(readout::readout_population(drive, &b)),
                Cell::Float(b.x),
                Cell::Float(b.y),
                Cell::Float(b.z),
                Cell::Float(amps[i][0].re),
                Cell::Float(amps[i][0].im),
                Cell::Float(amps[i][1].re),
                Cell::Float(amps[i][1].im),
            ]
        })
        .collect();
    io::write_csv(
        &out.join("trace.csv"),
        &["t", "p0", "p1", "readout", "bx", "by", "bz", "re0", "im0", "re1", "im1"],
        &rows,
    )?;
    Ok(())
}

fn fit(a: &FitArgs) -> CliResult {
    let rc = match &a.config {
        Some(p) => Some(load(p, &a.common)?),
        None => None,
    };
    let table = io::read_trace_csv(&a.input).map_err(CliError::usage)?;
    let out = &a.common.out;
    prepare_out(out)?;
    // an all-zero error column means a single deterministic trajectory
    let se = table
        .stderr
        .as_deref()
        .filter(|s| s.iter().any(|&x| x > 0.0));
    fit_and_report(out, &table.times, &table.values, se, rc.as_ref())?;
    Ok(())
}

fn cmd_scan(a: &RunArgs) -> CliResult {
    let rc = load(&a.config, &a.common)?;
    let r = rc.resolve().map_err(CliError::usage)?;
    let axis: ScanAxis = rc
        .scan_axis
        .as_deref()
        .ok_or_else(|| CliError::usage("scan needs scan_axis"))?
        .parse()
        .map_err(CliError::usage)?;
    let objective: Objective = rc.objective.parse().map_err(CliError::usage)?;
    // every axis is a frequency
    let values: Vec<f64> = rc.scan_values.iter().map(|&v| rc.angular(v)).collect();
    let mut spec = ScanSpec::new(axis, values, r.drive, r.noise);
    spec.trajectories = rc.trajectories;
    spec.seed = rc.seed;
    spec.objective = objective;
    spec.t_final = r.t_final;
    spec.samples = rc.scan_samples;
    spec.frame = rc.frame;
    spec.fluorescence = r.fluorescence;
    spec.time_unit_s = r.time_unit_s;
    spec.fixed_p = rc.fit_p;
    spec.validate().map_err(CliError::usage)?;

    let out = &a.common.out;
    prepare_out(out)?;
    write_provenance(out, "scan", &rc)?;
    let table = scan::run_scan(&spec)?;

    let to_input = |x: f64| match objective {
        Objective::T2 => x / r.time_scale,
        _ => x,
    };
    let rows: Vec<Vec<Cell>> = table
        .rows
        .iter()
        .zip(&rc.scan_values)
        .map(|(row, &v)| {
            vec![
                Cell::Float(v),
                row.objective.map(to_input).into(),
                row.uncertainty.map(to_input).into(),
                Cell::Bool(row.hierarchy_ok),
                Cell::Text(row.error.clone().unwrap_or_default()),
            ]
        })
        .collect();
    io::write_csv(&out.join("scan.csv"), &["value", "objective", "uncertainty", "hierarchy_ok", "error"], &rows)?;
    io::write_json(&out.join("scan.json"), &table)?;

    if axis == ScanAxis::G && objective == Objective::T2 {
        let inputs = ProjectionInputs {
            fluorescence: r.fluorescence,
            alpha: r.drive.signal_rate_factor(),
            gamma: analysis::GAMMA_NV,
            time_unit_s: r.time_unit_s,
            reference_t2: rc.tau_single_naive.map(|t| rc.time(t)),
        };
        let proj = scan::project_sensitivity(&table, &inputs)?;
        let rows: Vec<Vec<Cell>> = proj
            .rows
            .iter()
            .map(|p| {
                vec![
                    Cell::Float(p.g * r.time_scale / (2.0 * PI)),
                    Cell::Float(p.t2 / r.time_scale),
                    Cell::Float(p.eta),
                ]
            })
            .collect();
        io::write_csv(&out.join("projection.csv"), &["g", "t2", "eta"], &rows)?;
        io::write_json(&out.join("projection.json"), &proj)?;
    }
    if table.rows.iter().any(|r| r.objective.is_none()) {
        eprintln!("warning: some scan points have no objective; see the error column");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SensitivityCurve {
    label: &'static str,
    alpha: f64,
    /// Sensing time per shot, s.
    tau_s: f64,
    /// `"config"` or `"simulated"`.
    tau_source: &'static str,
    eta: f64,
    bandwidth_hz: f64,
}

fn sensitivity(a: &RunArgs) -> CliResult {
    let rc = load(&a.config, &a.common)?;
    let r = rc.resolve().map_err(CliError::usage)?;
    if r.drive.omega1 <= 0.0 || r.drive.omega2 <= 0.0 || r.drive.g <= 0.0 {
        return Err(CliError::usage("sensitivity needs rabi1, rabi2 and g > 0"));
    }
    if !(rc.sensitivity_t_min > 0.0 && rc.sensitivity_t_max > rc.sensitivity_t_min) || rc.sensitivity_points < 2 {
        return Err(CliError::usage(
            "sensitivity needs 0 < sensitivity_t_min < sensitivity_t_max and at least 2 points",
        ));
    }
    let out = &a.common.out;
    prepare_out(out)?;
    write_provenance(out, "sensitivity", &rc)?;

    let double = r.drive;
    let mut single = DriveConfig::on_resonance(double.omega0, double.omega1, 0.0, double.g, double.phi);
    single.omega_s += double.detuning();
    let opts = fit_options(Some(&rc));
    let rabi_t2 = |cfg: &DriveConfig| -> crate::Result<f64> {
        let grid = SampleGrid::covering(cfg, r.t_final, rc.scan_samples)?;
        let ens = experiment::run_rabi(cfg, &r.noise, &grid, &r.ensemble)?;
        let o = FitOptions {
            model: Some(FitModel::DampedCosine),
            ..opts.clone()
        };
        let se = (ens.trajectories > 1).then_some(ens.stderr.as_slice());
        Ok(analysis::fit_signal(&ens.times, &ens.mean, se, &o)?.t2)
    };
    let pick = |given: Option<f64>, sim: &dyn Fn() -> crate::Result<f64>| -> crate::Result<(f64, &'static str)> {
        match given {
            Some(t) => Ok((rc.time(t), "config")),
            None => sim().map(|t| (t, "simulated")),
        }
    };
    let naive = pick(rc.tau_single_naive, &|| {
        let bare = DriveConfig { g: 0.0, ..single };
        let guess = rc.target_t2_single.map_or(r.t_final / 3.0, |t| rc.time(t));
        experiment::coherence_time(&bare, &r.noise, &rc.coherence_settings(), guess)
    })?;
    let single_tau = pick(rc.tau_single, &|| rabi_t2(&single))?;
    let double_tau = pick(rc.tau_double, &|| rabi_t2(&double))?;

    let n = rc.sensitivity_points;
    let (lo, hi) = (rc.sensitivity_t_min.ln(), rc.sensitivity_t_max.ln());
    let times_s: Vec<f64> = (0..n)
        .map(|k| rc.time((lo + (hi - lo) * k as f64 / (n - 1) as f64).exp()) * r.time_unit_s)
        .collect();

    let curves = [
        ("single_naive", analysis::ALPHA_SINGLE, naive),
        ("single", analysis::ALPHA_SINGLE, single_tau),
        ("double", analysis::ALPHA_DOUBLE, double_tau),
    ];
    let mut reports = Vec::new();
    let mut summary = Vec::new();
    for (label, alpha, (tau, source)) in curves {
        let inputs = SensitivityInputs {
            gamma: analysis::GAMMA_NV,
            alpha,
            tau: tau * r.time_unit_s,
            contrast: r.fluorescence.contrast,
            n_ph: r.fluorescence.n_ph,
        };
        let rep = analysis::sensitivity_report(&inputs, inputs.tau, 0.0, &times_s)?;
        summary.push(SensitivityCurve {
            label,
            alpha,
            tau_s: inputs.tau,
            tau_source: source,
            eta: rep.eta_closed_form,
            bandwidth_hz: rep.bandwidth,
        });
        reports.push(rep);
    }
    let rows: Vec<Vec<Cell>> = (0..n)
        .map(|i| {
            let mut row = vec![Cell::Float(times_s[i])];
            row.extend(reports.iter().map(|rep| Cell::Float(rep.rows[i].delta_b_min)));
            row
        })
        .collect();
    io::write_csv(
        &out.join("sensitivity.csv"),
        &["t_s", "dbmin_single_naive_t", "dbmin_single_t", "dbmin_double_t"],
        &rows,
    )?;
    io::write_json(&out.join("sensitivity.json"), &summary)?;
    write_plot_script(
        out,
        "set logscale xy\nset xlabel 't (s)'\nset ylabel 'dB_min (T)'\n\
         plot for [k=2:4] 'sensitivity.csv' using 1:k with lines\n",
    )?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct CalibrationOutput {
    report: noise::CalibrationReport,
    /// Achieved times in input units.
    achieved_input_units: noise::CoherenceTargets,
    worst_relative_error: f64,
}

fn calibrate(a: &RunArgs) -> CliResult {
    let rc = load(&a.config, &a.common)?;
    let r = rc.resolve().map_err(CliError::usage)?;
    let targets = rc
        .targets()
        .ok_or_else(|| CliError::usage("calibrate needs target_t2_star, target_t2_single and target_t2_double"))?;
    let out = &a.common.out;
    prepare_out(out)?;
    write_provenance(out, "calibrate", &rc)?;
    let report = noise::calibrate(&targets, &r.drive, &r.noise, &rc.coherence_settings())?;
    let k = r.time_scale;
    let output = CalibrationOutput {
        achieved_input_units: noise::CoherenceTargets {
            t2_star: report.achieved.t2_star / k,
            t2_single: report.achieved.t2_single / k,
            t2_double: report.achieved.t2_double / k,
        },
        worst_relative_error: report.worst_relative_error(),
        report,
    };
    io::write_json(&out.join("calibration.json"), &output)?;
    let calibrated = rc.with_noise(&output.report.noise);
    std::fs::write(out.join("calibrated.toml"), calibrated.to_toml_string()?).map_err(Error::from)?;
    Ok(())
}
