use rayon::prelude::*;

use crate::channel::{CsiMode, Precoder};
use crate::error::Result;
use crate::fbl::na_rate;
use crate::montecarlo::{tightness_report, TIGHTNESS_COLUMNS};
use crate::numerics::LOG2_E;
use crate::stage1::{
    asymptotic_worst_case_sinr, bandwidth_closed_form, optimal_bandwidth, Stage1Inputs,
};
use crate::stage2::{dinkelbach_allocate, epa_allocate, AllocationResult, PowerProblem};

use super::{fmt_f64, Selection, SystemConfig, Table};

const STATUS_OK: &str = "ok";

fn error_marker(e: &crate::Error) -> String {
    format!("error: {e}")
}

/// Row of `cells` or, on failure, NaN cells followed by the error marker.
fn row_or_marker(width: usize, r: Result<Vec<String>>) -> Vec<String> {
    match r {
        Ok(mut cells) => {
            cells.push(STATUS_OK.into());
            cells
        }
        Err(e) => {
            let mut cells = vec!["NaN".to_string(); width];
            cells.push(error_marker(&e));
            cells
        }
    }
}

const STAGE1_COLUMNS: [&str; 15] = [
    "precoder",
    "csi",
    "rho",
    "delta",
    "reliability",
    "K",
    "gamma_w",
    "discriminant",
    "bandwidth_hz",
    "total_power_w",
    "coherence_time_s",
    "worst_latency_s",
    "gamma_w_asymptotic",
    "bandwidth_asymptotic_hz",
    "status",
];

fn stage1_row(cfg: &SystemConfig, csi: CsiMode, inputs: &Stage1Inputs) -> Vec<String> {
    let head = vec![
        inputs.precoder.to_string(),
        csi.to_string(),
        fmt_f64(inputs.rho),
        fmt_f64(inputs.delta),
        fmt_f64(inputs.worst_reliability),
        fmt_f64(inputs.rho * cfg.traffic.road_length),
    ];
    let body = (|| {
        let r = optimal_bandwidth(inputs, &cfg.channel, &cfg.traffic)?;
        let g_inf = asymptotic_worst_case_sinr(inputs, &cfg.channel, &cfg.traffic);
        let (b_inf, _) = bandwidth_closed_form(
            g_inf,
            inputs.worst_rate,
            inputs.worst_reliability,
            inputs.delta * r.coherence_time,
        )?;
        Ok(vec![
            fmt_f64(r.gamma_w),
            fmt_f64(r.discriminant),
            fmt_f64(r.bandwidth),
            fmt_f64(r.total_power),
            fmt_f64(r.coherence_time),
            fmt_f64(r.worst_latency),
            fmt_f64(g_inf),
            fmt_f64(b_inf),
        ])
    })();
    let mut row = head;
    row.extend(row_or_marker(8, body));
    row
}

fn stage1_table(cfg: &SystemConfig, points: Vec<(CsiMode, Stage1Inputs)>) -> Table {
    let rows: Vec<_> = points.par_iter().map(|(c, p)| stage1_row(cfg, *c, p)).collect();
    Table {
        columns: STAGE1_COLUMNS.iter().map(|c| c.to_string()).collect(),
        rows,
    }
}

/// Optimal bandwidth over `stage1_densities × deltas`.
pub fn stage1_density_table(cfg: &SystemConfig, sel: &Selection) -> Table {
    let mut points = Vec::new();
    for (pre, csi) in sel.combos() {
        for &delta in &cfg.sweep.deltas {
            for &rho in &cfg.sweep.stage1_densities {
                let inputs = Stage1Inputs {
                    delta,
                    ..cfg.stage1_inputs(pre, csi, rho)
                };
                points.push((csi, inputs));
            }
        }
    }
    stage1_table(cfg, points)
}

/// Optimal bandwidth over `reliability_densities × reliabilities`.
pub fn stage1_reliability_table(cfg: &SystemConfig, sel: &Selection) -> Table {
    let mut points = Vec::new();
    for (pre, csi) in sel.combos() {
        for &rho in &cfg.sweep.reliability_densities {
            for &eps in &cfg.sweep.reliabilities {
                let inputs = Stage1Inputs {
                    worst_reliability: eps,
                    ..cfg.stage1_inputs(pre, csi, rho)
                };
                points.push((csi, inputs));
            }
        }
    }
    stage1_table(cfg, points)
}

/// Per-vehicle powers and latencies at the operating density, for the
/// proposed allocation and for EPA. Any failure aborts.
pub fn allocate_table(cfg: &SystemConfig, seed: u64, sel: &Selection) -> Result<Table> {
    let mut t = Table::new(&[
        "precoder",
        "csi",
        "scheme",
        "rho",
        "bandwidth_hz",
        "vue",
        "position_m",
        "pathloss",
        "power_w",
        "latency_s",
    ]);
    for (pre, csi) in sel.combos() {
        let (s1, problem) = cfg.instance(pre, csi, cfg.density, seed)?;
        let best = dinkelbach_allocate(&problem, &cfg.solver)?;
        let epa = epa_allocate(&problem)?;
        for (scheme, r) in [("proposed", &best), ("epa", &epa)] {
            for (k, v) in problem.vues().iter().enumerate() {
                t.push(vec![
                    pre.to_string(),
                    csi.to_string(),
                    scheme.into(),
                    fmt_f64(cfg.density),
                    fmt_f64(s1.bandwidth),
                    k.to_string(),
                    fmt_f64(v.position),
                    fmt_f64(v.pathloss),
                    fmt_f64(r.powers[k]),
                    fmt_f64(r.latencies[k]),
                ])?;
            }
        }
    }
    Ok(t)
}

/// One density report handled end to end.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinRow {
    pub rho: f64,
    pub precoder: Precoder,
    pub csi: CsiMode,
    /// Stage-1 bandwidth, allocation and EPA baseline, or the error text.
    pub outcome: std::result::Result<TwinOutcome, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwinOutcome {
    pub count: usize,
    pub bandwidth: f64,
    pub total_power: f64,
    pub proposed: AllocationResult,
    pub epa_max_latency: f64,
}

/// Handles each reported density in turn: bandwidth selection, fresh
/// population from `seed`, power allocation. Failed densities keep their
/// error and the run continues.
pub fn run_twin_timescale(
    cfg: &SystemConfig,
    densities: &[f64],
    seed: u64,
    sel: &Selection,
) -> Vec<TwinRow> {
    let points: Vec<_> = densities
        .iter()
        .flat_map(|&rho| sel.combos().into_iter().map(move |(p, c)| (rho, p, c)))
        .collect();
    points
        .par_iter()
        .map(|&(rho, precoder, csi)| {
            let outcome = (|| {
                let (s1, problem) = cfg.instance(precoder, csi, rho, seed)?;
                let proposed = dinkelbach_allocate(&problem, &cfg.solver)?;
                let epa = epa_allocate(&problem)?;
                Ok(TwinOutcome {
                    count: problem.len(),
                    bandwidth: s1.bandwidth,
                    total_power: s1.total_power,
                    proposed,
                    epa_max_latency: epa.max_latency,
                })
            })()
            .map_err(|e: crate::Error| {
                log::warn!("rho = {rho}, {precoder}/{csi}: {e}");
                error_marker(&e)
            });
            TwinRow {
                rho,
                precoder,
                csi,
                outcome,
            }
        })
        .collect()
}

/// Table form of [`run_twin_timescale`].
pub fn twin_table(rows: &[TwinRow]) -> Table {
    let mut t = Table::new(&[
        "rho",
        "K",
        "precoder",
        "csi",
        "bandwidth_hz",
        "total_power_w",
        "proposed_max_latency_s",
        "epa_max_latency_s",
        "eta_star",
        "outer_iterations",
        "inner_iterations",
        "degraded",
        "status",
    ]);
    for r in rows {
        let mut cells = vec![fmt_f64(r.rho)];
        match &r.outcome {
            Ok(o) => cells.extend([
                o.count.to_string(),
                r.precoder.to_string(),
                r.csi.to_string(),
                fmt_f64(o.bandwidth),
                fmt_f64(o.total_power),
                fmt_f64(o.proposed.max_latency),
                fmt_f64(o.epa_max_latency),
                fmt_f64(o.proposed.eta_star),
                o.proposed.outer_iterations.to_string(),
                o.proposed.total_inner_iterations.to_string(),
                o.proposed.degraded.to_string(),
                STATUS_OK.into(),
            ]),
            Err(msg) => {
                cells.extend(["NaN".into(), r.precoder.to_string(), r.csi.to_string()]);
                cells.extend(std::iter::repeat_n("NaN".to_string(), 8));
                cells.push(msg.clone());
            }
        }
        t.rows.push(cells);
    }
    t
}

/// Checks, row by row, that the proposed allocation is no worse than EPA and
/// that ZF beats MF at the same density and CSI.
pub fn check_latency_claims(rows: &[TwinRow]) -> Vec<String> {
    let mut out = Vec::new();
    for r in rows {
        if let Ok(o) = &r.outcome {
            if o.proposed.max_latency > o.epa_max_latency * (1.0 + 1e-12) {
                out.push(format!(
                    "rho = {}, {}/{}: proposed {} s above EPA {} s",
                    r.rho, r.precoder, r.csi, o.proposed.max_latency, o.epa_max_latency
                ));
            }
        }
    }
    for mf in rows.iter().filter(|r| r.precoder == Precoder::Mf) {
        let zf = rows
            .iter()
            .find(|r| r.precoder == Precoder::Zf && r.rho == mf.rho && r.csi == mf.csi);
        if let (Ok(a), Some(Ok(b))) = (&mf.outcome, zf.map(|r| &r.outcome)) {
            if b.proposed.max_latency >= a.proposed.max_latency {
                out.push(format!(
                    "rho = {}, {}: ZF {} s not below MF {} s",
                    mf.rho, mf.csi, b.proposed.max_latency, a.proposed.max_latency
                ));
            }
        }
    }
    out
}

/// Largest latency with `P_B = multiplier × P_0 B*` at the operating density.
pub fn sweep_power_table(cfg: &SystemConfig, seed: u64, sel: &Selection) -> Table {
    let points: Vec<_> = sel
        .combos()
        .into_iter()
        .flat_map(|(p, c)| cfg.sweep.power_multipliers.iter().map(move |&m| (p, c, m)))
        .collect();
    let rows: Vec<_> = points
        .par_iter()
        .map(|&(pre, csi, mult)| {
            let body = (|| {
                let (s1, base) = cfg.instance(pre, csi, cfg.density, seed)?;
                let p_b = mult * s1.total_power;
                let problem = cfg.problem_with(pre, base.vues().to_vec(), s1.bandwidth, p_b)?;
                let best = dinkelbach_allocate(&problem, &cfg.solver)?;
                let epa = epa_allocate(&problem)?;
                Ok(vec![
                    fmt_f64(s1.bandwidth),
                    fmt_f64(p_b),
                    fmt_f64(best.max_latency),
                    fmt_f64(epa.max_latency),
                ])
            })();
            let mut row = vec![
                pre.to_string(),
                csi.to_string(),
                fmt_f64(cfg.density),
                fmt_f64(mult),
            ];
            row.extend(row_or_marker(4, body));
            row
        })
        .collect();
    Table {
        columns: [
            "precoder",
            "csi",
            "rho",
            "power_multiplier",
            "bandwidth_hz",
            "total_power_w",
            "proposed_max_latency_s",
            "epa_max_latency_s",
            "status",
        ]
        .map(String::from)
        .to_vec(),
        rows,
    }
}

/// Closed-form rate of one vehicle under EPA over a latency × reliability
/// grid, next to its capacity `B log2(1+Γ)`.
pub fn tradeoff_table(cfg: &SystemConfig, seed: u64, sel: &Selection) -> Result<Table> {
    let mut t = Table::new(&[
        "precoder",
        "csi",
        "vue",
        "latency_s",
        "reliability",
        "theorem1_rate_bps",
        "capacity_bps",
    ]);
    let s = &cfg.sweep;
    let b = s.tradeoff_bandwidth;
    for (pre, csi) in sel.combos() {
        let vues = cfg.population(cfg.density, csi, seed)?;
        let k = s.tradeoff_vue.min(vues.len() - 1);
        let problem = cfg.problem_with(pre, vues, b, s.tradeoff_total_power)?;
        let p = problem.total_power() / problem.len() as f64;
        let sinr = problem.sinr(k, p)?;
        let capacity = b * sinr.ln_1p() * LOG2_E;
        for &l in &s.tradeoff_latencies {
            for &eps in &s.tradeoff_reliabilities {
                let rate = na_rate(sinr, l, eps, b)?;
                t.push(vec![
                    pre.to_string(),
                    csi.to_string(),
                    k.to_string(),
                    fmt_f64(l),
                    fmt_f64(eps),
                    fmt_f64(rate),
                    fmt_f64(capacity),
                ])?;
            }
        }
    }
    Ok(t)
}

/// Closed-form against simulated rate under EPA for every antenna count.
pub fn mc_validate_table(cfg: &SystemConfig, seed: u64, sel: &Selection) -> Result<Table> {
    let b = cfg.mc.bandwidth;
    let mut points = Vec::new();
    for &m in &cfg.mc.antennas {
        for (pre, csi) in sel.combos() {
            points.push((m, pre, csi));
        }
    }
    let mc = cfg.mc_config(seed);
    let chunks = points
        .par_iter()
        .map(|&(m, pre, csi)| {
            let vues = cfg.population(cfg.density, csi, seed)?;
            let sys = SystemConfig {
                antennas: m,
                ..cfg.clone()
            };
            let problem: PowerProblem =
                sys.problem_with(pre, vues, b, cfg.channel.total_power(b))?;
            let powers = vec![problem.total_power() / problem.len() as f64; problem.len()];
            tightness_report(&problem, &powers, csi, cfg.mc.latency, &mc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(&TIGHTNESS_COLUMNS);
    for row in chunks.into_iter().flatten() {
        t.push(vec![
            row.antennas.to_string(),
            row.precoder.to_string(),
            row.csi.to_string(),
            row.vue.to_string(),
            fmt_f64(row.theorem1_rate),
            fmt_f64(row.empirical_rate),
            fmt_f64(row.stderr),
            fmt_f64(row.rel_gap),
        ])?;
    }
    Ok(t)
}

/// Outer `(j, η_j, F_j)` and inner `(j, i, max h, min h, μ_i)` traces of the
/// allocator at the operating density.
pub fn convergence_tables(cfg: &SystemConfig, seed: u64, sel: &Selection) -> Result<(Table, Table)> {
    let mut outer = Table::new(&["precoder", "csi", "j", "eta_j", "F_j"]);
    let mut inner = Table::new(&["precoder", "csi", "j", "i", "max_h", "min_h", "mu_i"]);
    for (pre, csi) in sel.combos() {
        let (_, problem) = cfg.instance(pre, csi, cfg.density, seed)?;
        let r = dinkelbach_allocate(&problem, &cfg.solver)?;
        let tag = [pre.to_string(), csi.to_string()];
        for s in &r.outer_trace {
            let mut row = tag.to_vec();
            row.extend([s.j.to_string(), fmt_f64(s.eta), fmt_f64(s.f_value)]);
            outer.push(row)?;
        }
        for (j, trace) in r.inner_traces.iter().enumerate() {
            for s in trace {
                let mut row = tag.to_vec();
                row.extend([
                    j.to_string(),
                    s.iteration.to_string(),
                    fmt_f64(s.max_h),
                    fmt_f64(s.min_h),
                    fmt_f64(s.mu),
                ]);
                inner.push(row)?;
            }
        }
    }
    Ok((outer, inner))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SystemConfig {
        let mut cfg = SystemConfig::default();
        cfg.sweep.stage1_densities = vec![0.05, 0.1];
        cfg.sweep.densities = vec![0.05];
        cfg.sweep.power_multipliers = vec![1.0, 4.0];
        cfg.mc.antennas = vec![100];
        cfg.mc.realizations = 500;
        cfg
    }

    #[test]
    fn stage1_rows_have_status() {
        let t = stage1_density_table(&small(), &Selection::default());
        assert_eq!(t.rows.len(), 2 * 2 * 2 * 2);
        let s = t.column("status").unwrap();
        assert!(t.rows.iter().all(|r| r[s] == "ok"));
    }

    #[test]
    fn zf_with_too_few_antennas_is_marked() {
        let mut cfg = small();
        cfg.antennas = 15;
        cfg.sweep.stage1_densities = vec![0.05, 0.1];
        let sel = Selection {
            precoders: vec![Precoder::Zf],
            csi: vec![CsiMode::Perfect],
        };
        let t = stage1_density_table(&cfg, &sel);
        let s = t.column("status").unwrap();
        let statuses: Vec<_> = t.rows.iter().map(|r| r[s].clone()).collect();
        assert_eq!(statuses[0], "ok");
        assert!(statuses[1].starts_with("error"));
    }

    #[test]
    fn twin_run_is_deterministic_and_marks_failures() {
        let mut cfg = small();
        let a = run_twin_timescale(&cfg, &[0.05, 0.05], 9, &Selection::default());
        assert_eq!(twin_table(&a[..4]).rows, twin_table(&a[4..]).rows);
        assert!(check_latency_claims(&a).is_empty());

        // ZF needs more antennas than vehicles; MF does not.
        cfg.antennas = 8;
        let b = run_twin_timescale(&cfg, &[0.05], 9, &Selection::default());
        let t = twin_table(&b);
        assert_eq!(t.rows.len(), 4);
        let s = t.column("status").unwrap();
        let p = t.column("precoder").unwrap();
        for r in &t.rows {
            assert_eq!(r[s].starts_with("error"), r[p] == "zf", "{r:?}");
        }
    }

    #[test]
    fn violations_are_reported() {
        let cfg = small();
        let mut rows = run_twin_timescale(&cfg, &[0.05], 1, &Selection::default());
        if let Ok(o) = &mut rows[0].outcome {
            o.epa_max_latency = 0.0;
        }
        assert!(!check_latency_claims(&rows).is_empty());
    }

    #[test]
    fn power_sweep_decreases_latency() {
        let sel = Selection {
            precoders: vec![Precoder::Zf],
            csi: vec![CsiMode::Imperfect],
        };
        let t = sweep_power_table(&small(), 2, &sel);
        let l = t.floats("proposed_max_latency_s").unwrap();
        assert!(l[1] < l[0]);
    }

    #[test]
    fn tradeoff_has_negative_region_and_capacity_bound() {
        let sel = Selection {
            precoders: vec![Precoder::Mf],
            csi: vec![CsiMode::Imperfect],
        };
        let t = tradeoff_table(&small(), 0, &sel).unwrap();
        let r = t.floats("theorem1_rate_bps").unwrap();
        let c = t.floats("capacity_bps").unwrap();
        assert!(r.iter().zip(&c).all(|(r, c)| r <= c));
        assert!(r.iter().any(|&x| x < 0.0));
        assert!(c.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn convergence_trace_shapes() {
        let sel = Selection {
            precoders: vec![Precoder::Zf],
            csi: vec![CsiMode::Perfect],
        };
        let (o, i) = convergence_tables(&small(), 4, &sel).unwrap();
        assert!(!o.rows.is_empty() && i.rows.len() >= o.rows.len());
        let f = o.floats("F_j").unwrap();
        assert!(*f.last().unwrap() <= 1e-2);
    }
}
