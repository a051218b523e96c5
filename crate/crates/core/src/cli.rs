// Copyright 2026 The qpt Authors
// SPDX-License-Identifier: Apache-2.0

//! Command-line front end. Every subcommand writes JSON or CSV; nothing is
//! rendered.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::channels::{change_basis, noisy_chi, pauli_basis, Basis, ChiMatrix, NoiseModel};
use crate::error::Error;
use crate::fidelity_stats::{
    compare_protocols, density_on, gx2_fit, run_campaign, CampaignConfig, ComparisonReport, ProtocolSamples,
};
use crate::gates::{cnot_via_sqiswap, gate_by_name};
use crate::phase_qubit::{physics_report, PhaseQubitParams};
use crate::protocols::{build_protocol, ProtocolName};
use crate::qmatrix::{ComplexMatrix, MatrixJson};
use crate::tomography::{mle_reconstruct, process_fidelity, simulate_counts, CountsRecord, MleOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable bounding the number of parallel campaign runs.
pub const THREADS_ENV: &str = "QPT_THREADS";

pub const DEFAULT_SHOTS: u64 = 100_000;
pub const DEFAULT_RUNS: usize = 200;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_BINS: usize = 40;

/// Upper bound on the number of coefficients in the fitted loss distribution.
const FIT_J_MAX: usize = 4096;

const GATE_NAMES: [&str; 4] = ["sqiswap", "iswap", "cnot", "identity"];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::DimensionMismatch(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "qpt", version, about = "Process tomography of phase-qubit gates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Operating-point report for a current-biased junction.
    Physics {
        /// Critical current in amperes.
        #[arg(long)]
        ic: f64,
        /// Bias current in amperes.
        #[arg(long)]
        ie: f64,
        /// Junction capacitance in farads.
        #[arg(long)]
        capacitance: f64,
        /// Highest harmonic level to list.
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Print a named gate.
    Gate {
        name: String,
        /// Pulse area g·t for the `interaction` gate.
        #[arg(long)]
        gt: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Chi-matrix utilities.
    Chi {
        #[command(subcommand)]
        action: ChiAction,
    },
    /// Protocol utilities.
    Protocol {
        #[command(subcommand)]
        action: ProtocolAction,
    },
    /// Sample tomography counts for a configured experiment.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Write the counts here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct a chi from simulated (or supplied) counts.
    Reconstruct {
        #[arg(long)]
        config: PathBuf,
        /// Counts file from `simulate`; sampled from the config when absent.
        #[arg(long)]
        counts: Option<PathBuf>,
        /// Include the reconstructed chi in the report.
        #[arg(long)]
        with_chi: bool,
        #[command(flatten)]
        strict: Strict,
    },
    /// Monte Carlo comparison of the standard and tetrahedron protocols.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        strict: Strict,
    },
}

#[derive(Debug, Args)]
struct Strict {
    /// Treat reconstruction non-convergence as a failure.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Subcommand)]
enum ChiAction {
    /// Write chi.json and chi.csv for a (noisy) gate.
    Export {
        #[arg(long)]
        gate: String,
        #[arg(long, default_value_t = 0.0)]
        p: f64,
        #[arg(long)]
        gt: Option<f64>,
        #[arg(long, default_value = "pauli")]
        basis: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum ProtocolAction {
    /// Describe a protocol as JSON.
    Show {
        name: String,
        #[arg(long, default_value_t = 2)]
        qubits: usize,
    },
}

/// Protocol selection in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolChoice {
    One(ProtocolName),
    Both,
}

impl ProtocolChoice {
    pub fn protocols(&self) -> Vec<ProtocolName> {
        match self {
            ProtocolChoice::One(p) => vec![*p],
            ProtocolChoice::Both => ProtocolName::ALL.to_vec(),
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            ProtocolChoice::One(p) => p.as_str(),
            ProtocolChoice::Both => "both",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    gate: String,
    #[serde(default)]
    noise_p: f64,
    #[serde(default)]
    protocol: Option<String>,
    #[serde(default)]
    shots: Option<u64>,
    #[serde(default)]
    runs: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    bins: Option<usize>,
    #[serde(default)]
    max_iterations: Option<usize>,
}

/// Validated experiment description. `noise_p = 0` means no noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub gate: String,
    pub noise_p: f64,
    pub protocol: ProtocolChoice,
    /// `None` when the file leaves it out; `compare` then uses
    /// [`DEFAULT_SHOTS`] while `simulate` and `reconstruct` refuse to run.
    pub shots: Option<u64>,
    pub runs: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub bins: usize,
    pub max_iterations: usize,
}

impl ExperimentConfig {
    pub fn shots_or_default(&self) -> u64 {
        self.shots.unwrap_or(DEFAULT_SHOTS)
    }

    fn required_shots(&self) -> Result<u64, CliError> {
        self.shots
            .ok_or_else(|| CliError::Config("missing field `shots`: this command needs an explicit shot count".into()))
    }

    fn single_protocol(&self) -> Result<ProtocolName, CliError> {
        match self.protocol {
            ProtocolChoice::One(p) => Ok(p),
            ProtocolChoice::Both => Err(CliError::Config(
                "field `protocol`: this command needs a single protocol (standard or tetrahedron)".into(),
            )),
        }
    }

    fn truth(&self) -> Result<ChiMatrix, CliError> {
        let gate = gate_by_name(&self.gate, None)?;
        Ok(noisy_chi(&NoiseModel::depolarizing(gate, self.noise_p)?)?)
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    let gate = raw.gate.to_ascii_lowercase();
    if !GATE_NAMES.contains(&gate.as_str()) {
        return Err(CliError::Config(format!(
            "field `gate`: unknown gate '{}'; valid gates are: {}",
            raw.gate,
            GATE_NAMES.join(", ")
        )));
    }
    if !(0.0..=1.0).contains(&raw.noise_p) {
        return Err(CliError::Config(format!("field `noise_p`: p must lie in [0,1], got {}", raw.noise_p)));
    }
    let protocol = match raw.protocol.as_deref().map(str::to_ascii_lowercase).as_deref() {
        None | Some("both") => ProtocolChoice::Both,
        Some(name) => ProtocolChoice::One(name.parse().map_err(|_| {
            CliError::Config(format!(
                "field `protocol`: unknown protocol '{name}'; valid protocols are: standard, tetrahedron, both"
            ))
        })?),
    };
    if raw.shots == Some(0) {
        return Err(CliError::Config("field `shots`: must be at least 1".into()));
    }
    let runs = raw.runs.unwrap_or(DEFAULT_RUNS);
    if runs == 0 {
        return Err(CliError::Config("field `runs`: must be at least 1".into()));
    }
    let bins = raw.bins.unwrap_or(DEFAULT_BINS);
    if bins < 2 {
        return Err(CliError::Config("field `bins`: must be at least 2".into()));
    }
    let max_iterations = raw.max_iterations.unwrap_or(MleOptions::default().max_iterations);
    if max_iterations == 0 {
        return Err(CliError::Config("field `max_iterations`: must be at least 1".into()));
    }
    Ok(ExperimentConfig {
        gate,
        noise_p: raw.noise_p,
        protocol,
        shots: raw.shots,
        runs,
        seed: raw.seed.unwrap_or(DEFAULT_SEED),
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from(".")),
        bins,
        max_iterations,
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_config(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Worker count from `QPT_THREADS`, if set.
pub fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
    }
}

/// Parses `args` (program name first) and runs the command, writing
/// stdout output to `out`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Physics { ic, ie, capacitance, levels } => {
            let params = PhaseQubitParams::new(ic, ie, capacitance)?;
            let report = physics_report(&params, levels)?;
            if let Some(w) = &report.warning {
                eprintln!("warning: {w}");
            }
            emit_json(out, &report)
        }
        Command::Gate { name, gt, json } => gate_command(&name, gt, json, out),
        Command::Chi { action: ChiAction::Export { gate, p, gt, basis, out: dir } } => {
            chi_export(&gate, p, gt, &basis, &dir, out)
        }
        Command::Protocol { action: ProtocolAction::Show { name, qubits } } => {
            let name: ProtocolName = name.parse()?;
            emit_json(out, &build_protocol(name, qubits)?.describe())
        }
        Command::Simulate { config, out: path } => {
            let cfg = load_config(&config)?;
            let record = simulate(&cfg)?;
            match path {
                Some(p) => write_json_file(&p, &record),
                None => emit_json(out, &record),
            }
        }
        Command::Reconstruct { config, counts, with_chi, strict } => {
            let cfg = load_config(&config)?;
            let report = reconstruct(&cfg, counts.as_deref(), with_chi)?;
            emit_json(out, &report)?;
            if strict.strict && !report.converged {
                return Err(CliError::Numerical(format!(
                    "reconstruction did not converge in {} iterations",
                    report.iterations
                )));
            }
            Ok(())
        }
        Command::Compare { config, strict } => {
            let cfg = load_config(&config)?;
            let summary = compare(&cfg, strict.strict)?;
            emit_json(out, &summary)
        }
    }
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| CliError::Config(format!("stdout: {e}")))
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn format_entry(re: f64, im: f64) -> String {
    // Avoid printing "-0.000000".
    let clean = |x: f64| if x.abs() < 5e-7 { 0.0 } else { x };
    format!("{:+.6}{:+.6}i", clean(re), clean(im))
}

fn gate_command(name: &str, gt: Option<f64>, json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let gate = gate_by_name(name, gt)?;
    if json {
        return emit_json(out, &MatrixJson::from(&gate.matrix));
    }
    let w = |e: std::io::Error| CliError::Config(format!("stdout: {e}"));
    writeln!(out, "{}", gate.label).map_err(w)?;
    for row in gate.matrix.row_iter() {
        let cells: Vec<String> = row.iter().map(|z| format_entry(z.re, z.im)).collect();
        writeln!(out, "{}", cells.join("  ")).map_err(w)?;
    }
    if name.eq_ignore_ascii_case("cnot") {
        let (_, convention, phase) = cnot_via_sqiswap()?;
        writeln!(
            out,
            "rotation convention {convention}; global phase {:.6} rad; deviation {:.3e}",
            phase.phase.arg(),
            phase.max_deviation
        )
        .map_err(w)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ChiExport {
    #[serde(rename = "S")]
    pub s: usize,
    pub basis: Basis,
    pub labels: Vec<String>,
    /// Unit-trace chi.
    pub matrix: MatrixJson,
    /// The same chi scaled to trace `S`.
    pub matrix_trace_s: MatrixJson,
}

fn chi_export(
    gate: &str,
    p: f64,
    gt: Option<f64>,
    basis: &str,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let basis = match basis.to_ascii_lowercase().as_str() {
        "pauli" => Basis::Pauli,
        "natural" => Basis::Natural,
        other => {
            return Err(CliError::Config(format!("unknown basis '{other}'; valid bases are: natural, pauli")));
        }
    };
    let gate = gate_by_name(gate, gt)?;
    let n_qubits = gate.dim().trailing_zeros() as usize;
    let chi = noisy_chi(&NoiseModel::depolarizing(gate, p)?)?;
    let n = chi.dim() * chi.dim();
    let (chi, labels) = match basis {
        Basis::Pauli => {
            let pb = pauli_basis(n_qubits)?;
            (change_basis(&chi, &pb)?, pb.labels.clone())
        }
        Basis::Natural => (chi, (0..n).map(|k| k.to_string()).collect()),
    };
    let unit = chi.matrix().clone();
    let scaled = unit.scale(chi.dim() as f64);
    let export = ChiExport {
        s: chi.dim(),
        basis,
        labels: labels.clone(),
        matrix: MatrixJson::from(&unit),
        matrix_trace_s: MatrixJson::from(&scaled),
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_json_file(&dir.join("chi.json"), &export)?;

    let path = dir.join("chi.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    let mut header = vec!["normalization".to_string(), "part".into(), "row".into()];
    header.extend(labels.iter().cloned());
    w.write_record(&header).map_err(|e| io_err(&path, e))?;
    for (norm, m) in [("unit", &unit), ("trace_s", &scaled)] {
        for (part, f) in [("re", (|z: num_complex::Complex64| z.re) as fn(_) -> f64), ("im", |z| z.im)] {
            for (r, label) in labels.iter().enumerate() {
                let mut rec = vec![norm.to_string(), part.to_string(), label.clone()];
                rec.extend((0..n).map(|col| f(m[(r, col)]).to_string()));
                w.write_record(&rec).map_err(|e| io_err(&path, e))?;
            }
        }
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    writeln!(out, "{}\n{}", dir.join("chi.json").display(), path.display())
        .map_err(|e| CliError::Config(format!("stdout: {e}")))
}

fn simulate(cfg: &ExperimentConfig) -> Result<CountsRecord, CliError> {
    let shots = cfg.required_shots()?;
    let name = cfg.single_protocol()?;
    let truth = cfg.truth()?;
    let protocol = build_protocol(name, truth.dim().trailing_zeros() as usize)?;
    Ok(simulate_counts(&truth, &protocol, shots, cfg.seed)?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub protocol: ProtocolName,
    pub shots: u64,
    pub seed: u64,
    pub fidelity: f64,
    #[serde(rename = "dF")]
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub tp_residual: f64,
    pub log_likelihood: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub chi: Option<MatrixJson>,
}

fn reconstruct(
    cfg: &ExperimentConfig,
    counts: Option<&Path>,
    with_chi: bool,
) -> Result<ReconstructionReport, CliError> {
    let truth = cfg.truth()?;
    let record = match counts {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            serde_json::from_str::<CountsRecord>(&text).map_err(|e| io_err(path, e))?
        }
        None => simulate(cfg)?,
    };
    let protocol = build_protocol(record.protocol, record.n_qubits)?;
    let opts = MleOptions { max_iterations: cfg.max_iterations, seed: cfg.seed, ..MleOptions::default() };
    let res = mle_reconstruct(&record, &protocol, &opts)?;
    let fidelity = process_fidelity(&res.chi_hat, &truth)?;
    Ok(ReconstructionReport {
        protocol: record.protocol,
        shots: record.total_shots(),
        seed: record.seed,
        fidelity,
        loss: (1.0 - fidelity).clamp(0.0, 1.0),
        iterations: res.iterations,
        converged: res.converged,
        tp_residual: res.tp_residual,
        log_likelihood: *res.log_likelihood.last().unwrap_or(&f64::NAN),
        chi: with_chi.then(|| MatrixJson::from(res.chi_hat.matrix() as &ComplexMatrix)),
    })
}

/// `summary.json` written by `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSummary {
    pub gate: String,
    pub noise_p: f64,
    pub shots: u64,
    pub runs: usize,
    pub seed: u64,
    pub mean_std: f64,
    pub mean_tet: f64,
    pub ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Effective degrees of freedom of the fitted loss distribution, per
    /// protocol; null when the samples admit no fit.
    pub fitted_nu: BTreeMap<String, Option<f64>>,
    pub nonconverged: usize,
}

fn compare(cfg: &ExperimentConfig, strict: bool) -> Result<CompareSummary, CliError> {
    if cfg.protocol != ProtocolChoice::Both {
        return Err(CliError::Config(format!(
            "field `protocol`: compare needs both protocols, got '{}'",
            cfg.protocol.as_str()
        )));
    }
    let campaign = CampaignConfig {
        gate: cfg.gate.clone(),
        noise_p: cfg.noise_p,
        protocols: cfg.protocol.protocols(),
        shots: cfg.shots_or_default(),
        runs: cfg.runs,
        seed: cfg.seed,
        exact: false,
        max_iterations: cfg.max_iterations,
        threads: threads_from_env()?,
    };
    let results = run_campaign(&campaign)?;
    let nonconverged = results.iter().flat_map(|p| &p.samples).filter(|s| !s.converged).count();
    if strict && nonconverged > 0 {
        return Err(CliError::Numerical(format!("{nonconverged} reconstructions did not converge")));
    }
    let find = |name: ProtocolName| -> &ProtocolSamples {
        results.iter().find(|p| p.protocol == name).expect("campaign covers both protocols")
    };
    let std = find(ProtocolName::Standard).losses();
    let tet = find(ProtocolName::Tetrahedron).losses();
    let report: ComparisonReport = compare_protocols(&std, &tet, cfg.seed)?;

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_samples(&dir.join("samples.csv"), &results)?;
    let upper = std.iter().chain(&tet).cloned().fold(0.0, f64::max);
    let d_std = density_on(&std, cfg.bins, upper)?;
    let d_tet = density_on(&tet, cfg.bins, upper)?;
    let path = dir.join("density.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    w.write_record(["bin_center", "density_std", "density_tet"]).map_err(|e| io_err(&path, e))?;
    for ((c, a), b) in d_std.centers().iter().zip(&d_std.density).zip(&d_tet.density) {
        w.write_record([c.to_string(), a.to_string(), b.to_string()]).map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;

    let fitted_nu = results
        .iter()
        .map(|p| (p.protocol.to_string(), gx2_fit(&p.losses(), FIT_J_MAX).ok().map(|c| c.effective_dof())))
        .collect();
    let summary = CompareSummary {
        gate: cfg.gate.clone(),
        noise_p: cfg.noise_p,
        shots: campaign.shots,
        runs: cfg.runs,
        seed: cfg.seed,
        mean_std: report.mean_std,
        mean_tet: report.mean_tet,
        ratio: report.ratio,
        ci_low: report.ci_low,
        ci_high: report.ci_high,
        fitted_nu,
        nonconverged,
    };
    write_json_file(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn write_samples(path: &Path, results: &[ProtocolSamples]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(["run", "protocol", "seed", "F", "dF", "converged", "iterations"]).map_err(|e| io_err(path, e))?;
    for s in results.iter().flat_map(|p| &p.samples) {
        w.write_record([
            s.run.to_string(),
            s.protocol.to_string(),
            s.seed.to_string(),
            s.fidelity.to_string(),
            s.loss.to_string(),
            s.converged.to_string(),
            s.iterations.to_string(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}
