use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use twinscale::experiments::{
    resolve_config, run_experiment, ExperimentKind, Report, Selection, Table,
};
use twinscale::prelude::{CsiMode, Error, Precoder};

#[derive(Parser, Debug)]
#[command(name = "twinscale", version, about = "Twin-timescale V2I resource allocation experiments")]
struct Cli {
    /// `key = value` configuration file. Falls back to
    /// `$TWINSCALE_CONFIG_DIR/twinscale.conf`, then to built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output CSV path. Defaults to `<experiment>.csv`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    #[arg(long, global = true, value_enum, default_value_t = Which::Both)]
    precoder: Which,

    #[arg(long, global = true, value_enum, default_value_t = CsiArg::Both)]
    csi: CsiArg,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Optimal bandwidth against density for each latency budget.
    Stage1SweepDensity,
    /// Optimal bandwidth against the reliability target.
    Stage1SweepReliability,
    /// Per-vehicle powers and latencies at the configured density.
    Allocate,
    /// Largest latency against density, proposed and EPA.
    SweepDensityLatency,
    /// Largest latency against total power.
    SweepPowerLatency,
    /// Closed-form rate over a latency and reliability grid.
    TradeoffSurface,
    /// Closed-form against simulated ergodic rate.
    McValidate,
    /// Outer and inner iteration traces of the allocator.
    ConvergenceTrace,
}

impl Command {
    fn kind(self) -> ExperimentKind {
        match self {
            Command::Stage1SweepDensity => ExperimentKind::Stage1SweepDensity,
            Command::Stage1SweepReliability => ExperimentKind::Stage1SweepReliability,
            Command::Allocate => ExperimentKind::Allocate,
            Command::SweepDensityLatency => ExperimentKind::SweepDensityLatency,
            Command::SweepPowerLatency => ExperimentKind::SweepPowerLatency,
            Command::TradeoffSurface => ExperimentKind::TradeoffSurface,
            Command::McValidate => ExperimentKind::McValidate,
            Command::ConvergenceTrace => ExperimentKind::ConvergenceTrace,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Which {
    Mf,
    Zf,
    Both,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum CsiArg {
    Perfect,
    Imperfect,
    Both,
}

fn selection(p: Which, c: CsiArg) -> Selection {
    Selection {
        precoders: match p {
            Which::Mf => vec![Precoder::Mf],
            Which::Zf => vec![Precoder::Zf],
            Which::Both => Precoder::ALL.to_vec(),
        },
        csi: match c {
            CsiArg::Perfect => vec![CsiMode::Perfect],
            CsiArg::Imperfect => vec![CsiMode::Imperfect],
            CsiArg::Both => CsiMode::ALL.to_vec(),
        },
    }
}

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;

/// Bandwidth and worst latency per precoder, CSI and scheme, in kHz and ms.
fn print_allocation_summary(t: &Table) {
    let col = |n| t.column(n).expect("allocate schema");
    let (pre, csi, scheme) = (col("precoder"), col("csi"), col("scheme"));
    let (bw, lat) = (col("bandwidth_hz"), col("latency_s"));
    let mut groups: Vec<(String, f64, f64)> = Vec::new();
    for r in &t.rows {
        let key = format!("{}/{}/{}", r[pre], r[csi], r[scheme]);
        let b: f64 = r[bw].parse().unwrap_or(f64::NAN);
        let l: f64 = r[lat].parse().unwrap_or(f64::NAN);
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => g.2 = g.2.max(l),
            None => groups.push((key, b, l)),
        }
    }
    for (key, b, l) in groups {
        println!("{key:<22} B = {:9.3} kHz  max latency = {:.6} ms", b / 1e3, l * 1e3);
    }
}

fn report(kind: ExperimentKind, r: &Report) {
    for f in &r.files {
        println!("wrote {}", f.display());
    }
    if r.failed_rows > 0 {
        println!("{} row(s) carry an error marker", r.failed_rows);
    }
    for v in &r.violations {
        eprintln!("{kind}: violation: {v}");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let kind = cli.command.kind();

    let cfg = match resolve_config(cli.config.as_deref()) {
        Ok((cfg, src)) => {
            if let Some(p) = src {
                log::info!("config from {}", p.display());
            }
            cfg
        }
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let out = cli
        .out
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", kind.as_str())));
    let sel = selection(cli.precoder, cli.csi);

    match run_experiment(kind, &cfg, cli.seed, &sel, &out) {
        Ok(r) => {
            report(kind, &r);
            if kind == ExperimentKind::Allocate {
                if let Ok(t) = twinscale::experiments::read_csv(&out) {
                    print_allocation_summary(&t);
                }
            }
            ExitCode::SUCCESS
        }
        Err(e @ (Error::Config { .. } | Error::Io(_) | Error::Csv(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("{kind} failed: {e}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}
