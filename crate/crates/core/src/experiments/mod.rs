//! Configuration, the end-to-end twin-timescale run, and the parameter
//! sweeps behind each experiment, all writing CSV.
//!
//! Every experiment is a pure function of `(SystemConfig, seed, selection)`:
//! running it twice produces byte-identical files. Sweep points run on the
//! rayon pool and are collected in input order.

mod config;
mod sweeps;
mod table;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use crate::channel::CsiMode;
pub use config::{
    dbm_per_hz_to_watts, load_config, resolve_config, McSettings, SweepSettings, SystemConfig,
    CONFIG_DIR_ENV, CONFIG_FILE_NAME,
};
pub use sweeps::{
    allocate_table, check_latency_claims, convergence_tables, mc_validate_table,
    run_twin_timescale, stage1_density_table, stage1_reliability_table, sweep_power_table,
    tradeoff_table, twin_table, TwinRow,
};
pub use table::{emit_csv, fmt_f64, read_csv, Table};

use crate::channel::Precoder;
use crate::error::{Error, Result};

/// The experiments the command line exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    /// Optimal bandwidth against density, for each latency budget.
    Stage1SweepDensity,
    /// Optimal bandwidth against the reliability target.
    Stage1SweepReliability,
    /// Per-vehicle powers and latencies at the operating density.
    Allocate,
    /// Largest latency against density, proposed allocation and EPA.
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

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Stage1SweepDensity,
        ExperimentKind::Stage1SweepReliability,
        ExperimentKind::Allocate,
        ExperimentKind::SweepDensityLatency,
        ExperimentKind::SweepPowerLatency,
        ExperimentKind::TradeoffSurface,
        ExperimentKind::McValidate,
        ExperimentKind::ConvergenceTrace,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Stage1SweepDensity => "stage1-sweep-density",
            ExperimentKind::Stage1SweepReliability => "stage1-sweep-reliability",
            ExperimentKind::Allocate => "allocate",
            ExperimentKind::SweepDensityLatency => "sweep-density-latency",
            ExperimentKind::SweepPowerLatency => "sweep-power-latency",
            ExperimentKind::TradeoffSurface => "tradeoff-surface",
            ExperimentKind::McValidate => "mc-validate",
            ExperimentKind::ConvergenceTrace => "convergence-trace",
        }
    }

    /// Whether one failed point aborts the run. Sweeps mark the row instead.
    pub fn is_sweep(self) -> bool {
        !matches!(self, ExperimentKind::Allocate | ExperimentKind::ConvergenceTrace)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Precondition(format!("unknown experiment `{s}`")))
    }
}

/// Which precoders and CSI modes an experiment covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub precoders: Vec<Precoder>,
    pub csi: Vec<CsiMode>,
}

impl Default for Selection {
    fn default() -> Self {
        Self {
            precoders: Precoder::ALL.to_vec(),
            csi: CsiMode::ALL.to_vec(),
        }
    }
}

impl Selection {
    pub(crate) fn combos(&self) -> Vec<(Precoder, CsiMode)> {
        self.precoders
            .iter()
            .flat_map(|&p| self.csi.iter().map(move |&c| (p, c)))
            .collect()
    }
}

/// What [`run_experiment`] wrote and what it found.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub files: Vec<PathBuf>,
    /// Rows whose point failed and carry an error marker.
    pub failed_rows: usize,
    /// Post-run consistency checks that did not hold.
    pub violations: Vec<String>,
}

/// Builds the tables of one experiment without touching the file system.
/// The first table goes to the output path; a second one, if any, to
/// `<stem>_inner.csv` beside it.
pub fn build_tables(
    kind: ExperimentKind,
    cfg: &SystemConfig,
    seed: u64,
    sel: &Selection,
) -> Result<(Vec<Table>, Vec<String>)> {
    Ok(match kind {
        ExperimentKind::Stage1SweepDensity => (vec![stage1_density_table(cfg, sel)], vec![]),
        ExperimentKind::Stage1SweepReliability => {
            (vec![stage1_reliability_table(cfg, sel)], vec![])
        }
        ExperimentKind::Allocate => (vec![allocate_table(cfg, seed, sel)?], vec![]),
        ExperimentKind::SweepDensityLatency => {
            let rows = run_twin_timescale(cfg, &cfg.sweep.densities, seed, sel);
            let violations = check_latency_claims(&rows);
            (vec![twin_table(&rows)], violations)
        }
        ExperimentKind::SweepPowerLatency => (vec![sweep_power_table(cfg, seed, sel)], vec![]),
        ExperimentKind::TradeoffSurface => (vec![tradeoff_table(cfg, seed, sel)?], vec![]),
        ExperimentKind::McValidate => (vec![mc_validate_table(cfg, seed, sel)?], vec![]),
        ExperimentKind::ConvergenceTrace => {
            let (outer, inner) = convergence_tables(cfg, seed, sel)?;
            (vec![outer, inner], vec![])
        }
    })
}

/// Path of the secondary table written next to `out`.
pub fn inner_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{stem}_inner.csv"))
}

/// Runs one experiment and writes its CSV output.
pub fn run_experiment(
    kind: ExperimentKind,
    cfg: &SystemConfig,
    seed: u64,
    sel: &Selection,
    out: &Path,
) -> Result<Report> {
    let (tables, violations) = build_tables(kind, cfg, seed, sel)?;
    let mut report = Report {
        violations,
        ..Default::default()
    };
    for v in &report.violations {
        log::warn!("{kind}: {v}");
    }
    for (i, t) in tables.iter().enumerate() {
        let path = if i == 0 { out.to_path_buf() } else { inner_path(out) };
        if let Some(status) = t.column("status") {
            report.failed_rows += t.rows.iter().filter(|r| r[status] != "ok").count();
        }
        emit_csv(t, &path)?;
        report.files.push(path);
    }
    Ok(report)
}
