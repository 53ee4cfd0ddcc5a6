//! `troop`: run kernels on the vector-cluster model and report CSV rows,
//! bank traces, sweeps and roofline tables.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use troop_sim::config::{parse_switch, ClusterConfig, Preset};
use troop_sim::engine::RunOptions;
use troop_sim::error::SimError;
use troop_sim::harness::{self, Experiment, Row, Sweep};
use troop_sim::kernels::{self, KernelKind, KernelSpec};
use troop_sim::roofline;

#[derive(Debug, Parser)]
#[command(name = "troop", version, about = "Cycle-accurate vector-cluster simulator")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a grid of sizes, unroll factors and feature sets.
    Sweep(SweepArgs),
    /// Compare every preset and kernel against the published utilizations.
    Figure5 {
        /// Write the simulated rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Exit non-zero when an anchored value is out of tolerance.
        #[arg(long)]
        strict: bool,
    },
    /// Normalized roofline table for every preset and kernel.
    Roofline {
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Steady-state summaries of the VRF bank-conflict scenarios.
    Scenarios {
        /// Write each scenario's trace to `<dir>/<name>.trace`.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// BASELINE, 2xBW or 2xBW_TROOP.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "dotp")]
    kernel: String,
    /// Vector length (AXPY, DOTP) or column count (GEMV, GEMM).
    #[arg(long)]
    n: Option<usize>,
    /// Row count for GEMV and GEMM.
    #[arg(long)]
    m: Option<usize>,
    /// Inner dimension for GEMM.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 64)]
    ew: u32,
    /// Defaults to the preset's reference shape.
    #[arg(long)]
    lmul: Option<usize>,
    #[arg(long)]
    unroll: Option<usize>,
    /// Write the bank trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the per-core instruction listings here.
    #[arg(long)]
    listing: Option<PathBuf>,
    /// `<name>=<on|off>`, repeatable.
    #[arg(long = "feature", value_name = "NAME=on|off")]
    features: Vec<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated sizes; defaults to `--n`.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Comma-separated unroll factors; defaults to `--unroll`.
    #[arg(long, value_delimiter = ',')]
    unrolls: Vec<usize>,
    /// One feature set per flag, e.g. `decoupled_vlsu=on,address_scrambling=off`.
    #[arg(long = "toggle", value_name = "SET")]
    toggles: Vec<String>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(PathBuf, io::Error),
    Sim(SimError),
    Failed(String),
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Sim(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Sim(SimError::Config(_)) | CliError::Sim(SimError::Kernel(_)) => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failed(m) => f.write_str(m),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Sim(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match cli.command {
        None => run_single(&cli.run),
        Some(Command::Sweep(args)) => run_sweep(&args),
        Some(Command::Figure5 { csv, strict }) => run_figure5(csv.as_deref(), strict),
        Some(Command::Roofline { csv }) => run_roofline(csv.as_deref()),
        Some(Command::Scenarios { trace_dir }) => run_scenarios(trace_dir.as_deref()),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

/// Write to `path`, or stdout when none is given.
fn emit(path: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, contents),
        None => io::stdout()
            .write_all(contents.as_bytes())
            .map_err(|e| CliError::Io(PathBuf::from("<stdout>"), e)),
    }
}

/// Config, its report label, and the preset it came from (if any).
fn load_config(args: &RunArgs) -> Result<(ClusterConfig, String, Option<Preset>), CliError> {
    let (mut config, label, preset) = match (&args.preset, &args.config) {
        (_, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.clone(), e))?;
            let cfg = ClusterConfig::parse(&text).map_err(|e| CliError::Sim(e.into()))?;
            let label = path.file_stem().map_or("config".into(), |s| s.to_string_lossy().into_owned());
            (cfg, label, None)
        }
        (Some(name), None) => {
            let p: Preset = name.parse().map_err(|e: troop_sim::error::ConfigError| CliError::Sim(e.into()))?;
            (p.config(), p.name().to_string(), Some(p))
        }
        (None, None) => (Preset::Baseline.config(), Preset::Baseline.name().to_string(), Some(Preset::Baseline)),
    };
    for f in &args.features {
        let (name, on) = parse_feature(f)?;
        config.features.set(name, on).map_err(|e| CliError::Sim(e.into()))?;
    }
    Ok((config, label, preset))
}

fn parse_feature(s: &str) -> Result<(&str, bool), CliError> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("feature `{s}` must be <name>=<on|off>")))?;
    let on = parse_switch(value.trim())
        .ok_or_else(|| CliError::Usage(format!("feature `{s}`: expected on or off, got `{value}`")))?;
    Ok((name.trim(), on))
}

fn build_spec(args: &RunArgs, preset: Option<Preset>) -> Result<KernelSpec, CliError> {
    let kind: KernelKind = args
        .kernel
        .parse()
        .map_err(|e: troop_sim::error::KernelError| CliError::Sim(e.into()))?;
    let reference = harness::reference_spec(preset.unwrap_or(Preset::Baseline), kind);
    let mut spec = match preset {
        Some(_) => reference,
        None => KernelSpec {
            n: reference.n,
            m: reference.m,
            k: reference.k,
            ..KernelSpec::new(kind, reference.n)
        },
    };
    if let Some(n) = args.n {
        spec.n = n;
        if kind == KernelKind::Gemm && args.m.is_none() && args.k.is_none() {
            (spec.m, spec.k) = (n, n);
        }
    }
    spec.m = args.m.unwrap_or(spec.m);
    spec.k = args.k.unwrap_or(spec.k);
    spec.element_width = args.ew;
    spec.lmul = args.lmul.unwrap_or(spec.lmul);
    spec.unroll = args.unroll.unwrap_or(spec.unroll);
    Ok(spec)
}

fn experiment(args: &RunArgs) -> Result<(Experiment, Option<Preset>), CliError> {
    let (config, label, preset) = load_config(args)?;
    let spec = build_spec(args, preset)?;
    Ok((
        Experiment {
            label,
            config,
            spec,
            seed: args.seed,
        },
        preset,
    ))
}

fn csv_text(rows: &[Row]) -> String {
    harness::csv_string(rows)
}

fn run_single(args: &RunArgs) -> Result<(), CliError> {
    let (exp, _) = experiment(args)?;
    if let Some(path) = &args.listing {
        let cfg = exp.config.clone().validate().map_err(SimError::from)?;
        let kernel = kernels::generate(&exp.spec, &cfg, exp.seed).map_err(SimError::from)?;
        let mut text = String::new();
        for (core, stream) in kernel.streams.iter().enumerate() {
            text.push_str(&format!("# core {core}\n"));
            text.push_str(&kernels::to_listing(stream));
        }
        write_file(path, &text)?;
    }
    let options = RunOptions {
        trace: args.trace.is_some(),
    };
    let (row, result) = harness::run_experiment(&exp, options)?;
    if let Some(path) = &args.trace {
        write_file(path, &result.trace_text())?;
    }
    emit(args.csv.as_deref(), &csv_text(&[row]))
}

fn run_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let (base, _) = experiment(&args.run)?;
    let mut sweep = Sweep::new(base);
    if !args.sizes.is_empty() {
        sweep.sizes = args.sizes.clone();
    }
    if !args.unrolls.is_empty() {
        sweep.unrolls = args.unrolls.clone();
    }
    if !args.toggles.is_empty() {
        sweep.features = args
            .toggles
            .iter()
            .map(|set| {
                set.split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|f| parse_feature(f).map(|(n, on)| (n.to_string(), on)))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
    }
    let mut rows = Vec::new();
    let mut failed = 0;
    for p in sweep.run() {
        match p.result {
            Ok(row) => rows.push(row),
            Err(e) => {
                failed += 1;
                let f: Vec<String> = p.features.iter().map(|(k, on)| format!("{k}={on}")).collect();
                eprintln!("row n={} unroll={} [{}] failed: {e}", p.size, p.unroll, f.join(","));
            }
        }
    }
    emit(args.run.csv.as_deref(), &csv_text(&rows))?;
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} sweep row(s) failed")));
    }
    Ok(())
}

fn run_figure5(csv: Option<&Path>, strict: bool) -> Result<(), CliError> {
    let report = harness::reproduce_figure5()?;
    print!("{}", report.to_text());
    if let Some(path) = csv {
        let rows: Vec<Row> = report
            .rows
            .iter()
            .map(|r| {
                let exp = Experiment::preset(r.preset, r.spec);
                harness::run_experiment(&exp, RunOptions::default()).map(|(row, _)| row)
            })
            .collect::<Result<_, _>>()?;
        write_file(path, &csv_text(&rows))?;
    }
    if strict && !report.passed() {
        return Err(CliError::Failed("some anchored values are out of tolerance".into()));
    }
    Ok(())
}

fn run_roofline(csv: Option<&Path>) -> Result<(), CliError> {
    let mut runs = Vec::new();
    for preset in Preset::ALL {
        let cfg = preset.validated();
        let r = cfg.bandwidth_to_compute_ratio().as_f64();
        for kind in KernelKind::ALL {
            let spec = harness::reference_spec(preset, kind);
            let m = kernels::operational_intensity(&spec, &cfg).map_err(SimError::from)?;
            let (row, _) = harness::run_experiment(&Experiment::preset(preset, spec), RunOptions::default())?;
            runs.push((format!("{}:{}", preset.name(), kind), m, r, row.utilization()));
        }
    }
    let table = roofline::roofline_table(&runs).map_err(|e| CliError::Failed(e.to_string()))?;
    emit(csv, &roofline::to_csv(&table))
}

fn run_scenarios(trace_dir: Option<&Path>) -> Result<(), CliError> {
    println!("scenario          window      util   period vlsu_stalls vfu_stalls shadow  pattern");
    for s in harness::Scenario::ALL {
        let r = harness::run_scenario(s)?;
        let pattern = r.pattern();
        println!(
            "{:<17} {:>4}..{:<4} {:>6.3} {:>6} {:>11} {:>10} {:>6}  {}",
            s.name(),
            r.window.0,
            r.window.1,
            r.utilization(),
            r.period().map_or("-".into(), |p| p.to_string()),
            r.vlsu_write_stalls,
            r.vfu_stalls,
            r.shadow_inserts,
            &pattern[..pattern.len().min(40)]
        );
        if let Some(dir) = trace_dir {
            let mut text = String::new();
            for e in &r.trace {
                text.push_str(&e.to_string());
                text.push('\n');
            }
            write_file(&dir.join(format!("{}.trace", s.name())), &text)?;
        }
    }
    Ok(())
}
