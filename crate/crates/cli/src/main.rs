//! `m2p`: simulate latency measurement rigs and analyze their traces.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use m2p_core::audio::MouthToEarResult;
use m2p_core::estimator::{decode_display_trace, decode_pot_trace, LagSearch};
use m2p_core::experiment::{analyze, plot_series, run_batch, simulate, RunError};
use m2p_core::report::LatencyReport;
use m2p_core::rig::RawCapture;
use m2p_core::scenario::{Scenario, ScenarioError, PRESETS};
use m2p_core::trace::{read_trace_file, trace_to_string};

#[derive(Parser)]
#[command(name = "m2p", version, about = "Motion-to-photon and mouth-to-ear latency simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its traces and report.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate latency from trace files. The first trace supplies the
    /// platform; a second trace is treated as a remote display.
    Estimate {
        #[arg(required = true, num_args = 1..=2)]
        traces: Vec<PathBuf>,
        #[command(flatten)]
        lag: LagArgs,
        /// Mouth-to-ear result to include in the report.
        #[arg(long)]
        audio: Option<PathBuf>,
        /// Write the report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat a scenario with consecutive seeds and summarize.
    Batch {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        /// Write the summary here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write time_ms, pot_angle, display_angle columns for plotting.
    ExportPlot {
        #[arg(required = true, num_args = 1..=2)]
        traces: Vec<PathBuf>,
        /// Report whose latency is noted in the output header.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the bundled presets.
    Presets,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (TOML with dotted keys).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Bundled scenario name.
    #[arg(long)]
    preset: Option<String>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct LagArgs {
    #[arg(long, default_value_t = 500)]
    max_lag: usize,
    #[arg(long)]
    allow_negative_lag: bool,
}

impl LagArgs {
    fn search(&self) -> LagSearch {
        LagSearch {
            max_lag: self.max_lag,
            allow_negative: self.allow_negative_lag,
        }
    }
}

enum Failure {
    Validation(String),
    Io(String),
    Estimation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Io(_) => 2,
            Failure::Estimation(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Io(m) | Failure::Estimation(m) => m,
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Scenario(_) | RunError::Rig(_) => Failure::Validation(e.to_string()),
            RunError::Audio(_) | RunError::Estimation(_) => Failure::Estimation(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario, Failure> {
    let result = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let src = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            Scenario::from_toml(&src).map_err(|e| (Some(path.as_path()), e))
        }
        (None, Some(name)) => Scenario::preset(name).map_err(|e| (None, e)),
        (None, None) => unreachable!("clap requires one of --config and --preset"),
    };
    let scenario = result.map_err(|(path, e): (Option<&Path>, ScenarioError)| {
        let prefix = path.map(|p| format!("{}: ", p.display())).unwrap_or_default();
        Failure::Validation(format!("{prefix}{e}"))
    })?;
    Ok(match args.seed {
        Some(seed) => scenario.with_seed(seed),
        None => scenario,
    })
}

/// Writes every file into `dir` through temporary files and renames them
/// only once all have been written.
fn write_all_atomic(dir: &Path, files: &[(String, String)]) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut staged = Vec::new();
    for (name, contents) in files {
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
        tmp.write_all(contents.as_bytes())
            .and_then(|_| tmp.as_file().sync_all())
            .map_err(|e| io_err(&dir.join(name), e))?;
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, path) in staged {
        tmp.persist(&path).map_err(|e| io_err(&path, e.error))?;
    }
    Ok(())
}

fn write_file_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Failure::Io(format!("{}: not a file path", path.display())))?;
    write_all_atomic(dir, &[(name.to_string_lossy().into_owned(), contents.to_string())])
}

fn read_traces(paths: &[PathBuf]) -> Result<Vec<RawCapture>, Failure> {
    paths
        .iter()
        .map(|p| {
            read_trace_file(p).map_err(|e| match e {
                m2p_core::trace::TraceError::Io(io) => io_err(p, io),
                fmt => Failure::Validation(format!("{}: {fmt}", p.display())),
            })
        })
        .collect()
}

fn cmd_simulate(args: &ScenarioArgs, out: &Path) -> Result<String, Failure> {
    let scenario = load_scenario(args)?;
    let run = simulate(&scenario)?;
    let mut files: Vec<(String, String)> = run
        .captures
        .iter()
        .map(|c| (format!("trace_{}.csv", c.station_id), trace_to_string(c)))
        .collect();
    if let Some(a) = &run.audio {
        files.push(("audio.txt".into(), a.to_text()));
    }
    let report = run.report.to_text();
    files.push(("report.txt".into(), report.clone()));
    write_all_atomic(out, &files)?;
    Ok(report)
}

fn cmd_estimate(
    traces: &[PathBuf],
    lag: &LagArgs,
    audio: Option<&Path>,
    out: Option<&Path>,
) -> Result<String, Failure> {
    let captures = read_traces(traces)?;
    let audio = audio
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            MouthToEarResult::parse(&text).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))
        })
        .transpose()?;
    let report = analyze(&captures, lag.search(), audio).map_err(|e| {
        let files: Vec<String> = traces.iter().map(|p| p.display().to_string()).collect();
        Failure::Estimation(format!("{}: {e}", files.join(", ")))
    })?;
    let text = report.to_text();
    if let Some(path) = out {
        write_file_atomic(path, &text)?;
    }
    eprintln!(
        "best lag {} ms, peak coefficient {:.6}",
        report.motion_to_photon_ms, report.diagnostics.peak_coefficient
    );
    Ok(text)
}

fn cmd_batch(args: &ScenarioArgs, runs: usize, out: Option<&Path>) -> Result<String, Failure> {
    if runs == 0 {
        return Err(Failure::Validation("--runs must be at least 1".into()));
    }
    let scenario = load_scenario(args)?;
    let batch = run_batch(&scenario, runs).map_err(|e| Failure::Validation(e.to_string()))?;
    let text = batch.to_text();
    if let Some(path) = out {
        write_file_atomic(path, &text)?;
    }
    let failures = batch.failures();
    if !failures.is_empty() {
        print!("{text}");
        return Err(Failure::Estimation(format!("{} of {runs} runs failed", failures.len())));
    }
    Ok(text)
}

fn cmd_export_plot(traces: &[PathBuf], report: Option<&Path>, out: &Path) -> Result<String, Failure> {
    let captures = read_traces(traces)?;
    let first = &captures[0];
    let last = captures.last().expect("at least one trace");
    let decode_err = |p: &Path, e: m2p_core::estimator::EstimatorError| Failure::Estimation(format!("{}: {e}", p.display()));
    let pot = decode_pot_trace(first).map_err(|e| decode_err(&traces[0], e))?;
    let display = decode_display_trace(last).map_err(|e| decode_err(traces.last().unwrap(), e))?;
    let rows = plot_series(&pot, &display, first.angle_range_deg).map_err(|e| decode_err(&traces[0], e))?;

    let mut text = String::new();
    if let Some(path) = report {
        let src = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let r = LatencyReport::parse(&src).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
        let lag = match (&r.remote, captures.len()) {
            (Some(remote), 2) => remote.latency_ms,
            _ => r.motion_to_photon_ms,
        };
        writeln!(text, "# lag_ms={lag}").unwrap();
    }
    text.push_str("time_ms,pot_angle,display_angle\n");
    for row in &rows {
        writeln!(text, "{:.0},{:.6},{:.6}", row.time_ms, row.pot_angle, row.display_angle).unwrap();
    }
    write_file_atomic(out, &text)?;
    Ok(format!("wrote {} rows to {}\n", rows.len(), out.display()))
}

fn run(cli: Cli) -> Result<String, Failure> {
    match &cli.command {
        Command::Simulate { scenario, out } => cmd_simulate(scenario, out),
        Command::Estimate { traces, lag, audio, out } => cmd_estimate(traces, lag, audio.as_deref(), out.as_deref()),
        Command::Batch { scenario, runs, out } => cmd_batch(scenario, *runs, out.as_deref()),
        Command::ExportPlot { traces, report, out } => cmd_export_plot(traces, report.as_deref(), out),
        Command::Presets => Ok(PRESETS.iter().map(|(name, _)| format!("{name}\n")).collect()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
