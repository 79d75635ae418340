use crate::error::{Error, Result};

use super::equalizer::{equalize_maxmin, EqualizerConfig};
use super::{AllocationResult, PowerProblem};

/// Settings of the Dinkelbach outer loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DinkelbachConfig {
    /// Starting `η_0`; lowered to the equal-power ratio when it is above it.
    pub eta0: f64,
    /// Stop once `F_j ≤ zeta_p`.
    pub zeta_p: f64,
    pub max_outer: usize,
    pub equalizer: EqualizerConfig,
}

impl Default for DinkelbachConfig {
    fn default() -> Self {
        Self {
            eta0: -3e-2,
            zeta_p: 1e-2,
            max_outer: 100,
            equalizer: EqualizerConfig::default(),
        }
    }
}

/// One outer iteration: `F_j = min_k h_k(p_j)` evaluated at `η_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterStep {
    pub j: usize,
    pub eta: f64,
    pub f_value: f64,
    /// The previous iterate beat the equalizer's result and was kept.
    pub kept_previous: bool,
}

/// `F(η) = max_p min_k (f_k − η g_k)`, with the inner maximum taken by the
/// equalizer. Strictly decreasing in `η`, zero at the optimal ratio.
pub fn auxiliary_function(problem: &PowerProblem, eta: f64, cfg: &EqualizerConfig) -> Result<f64> {
    Ok(equalize_maxmin(problem, eta, cfg)?.min_h())
}

fn min_h(problem: &PowerProblem, powers: &[f64], eta: f64) -> Result<f64> {
    let mut m = f64::INFINITY;
    for (k, &p) in powers.iter().enumerate() {
        m = m.min(problem.parts(k, p)?.h(eta));
    }
    Ok(m)
}

/// Minimizes the largest latency over all power splits of `P_B`.
///
/// Each outer step solves the inner max-min problem at `η_j`, evaluates
/// `F_j`, and either stops (`F_j ≤ ζ_P`) or moves to
/// `η_{j+1} = min_k f_k(p_j)/g_k(p_j)`. The inner result is compared with
/// the previous iterate `p_{j-1}` (equal power at `j = 0`) and the better
/// of the two is taken as `p_j`. Equal power must be feasible for
/// every vehicle, otherwise the instance is reported infeasible.
///
/// ```
/// use twinscale::prelude::*;
/// use twinscale::channel::pathloss;
///
/// let sys = SystemConfig::default();
/// let b = 200e3;
/// let model = EffectiveSinrModel::new(
///     Precoder::Zf, 300, sys.channel.total_power(b), sys.channel.noise_power(b),
/// ).unwrap();
/// let vues = [10.0, 60.0, 120.0]
///     .iter()
///     .map(|&d| Vue::new(d, pathloss(&sys.channel, d).unwrap(), 0.8, 1e5, 1e-6).unwrap())
///     .collect();
/// let problem = PowerProblem::new(model, vues, b).unwrap();
///
/// let best = dinkelbach_allocate(&problem, &DinkelbachConfig::default()).unwrap();
/// let epa = epa_allocate(&problem).unwrap();
/// assert!(best.max_latency <= epa.max_latency);
/// ```
pub fn dinkelbach_allocate(
    problem: &PowerProblem,
    cfg: &DinkelbachConfig,
) -> Result<AllocationResult> {
    if !(cfg.eta0 < 0.0) {
        return Err(Error::domain("eta0", cfg.eta0, "must be negative"));
    }
    if !(cfg.zeta_p > 0.0) {
        return Err(Error::domain("zeta_p", cfg.zeta_p, "must be positive"));
    }
    let start = problem.min_ratio(&problem.equal_powers())?;
    let mut eta = cfg.eta0.min(start);
    if eta < cfg.eta0 {
        log::debug!("eta0 {} lowered to equal-power ratio {start}", cfg.eta0);
    }

    let mut outer_trace = Vec::new();
    let mut inner_traces = Vec::new();
    let mut total_inner = 0;
    let mut degraded = false;
    let mut previous = problem.equal_powers();
    for j in 0..cfg.max_outer {
        let st = equalize_maxmin(problem, eta, &cfg.equalizer)?;
        total_inner += st.iterations;
        degraded |= st.degraded;
        // The equalizer stops within zeta_s of the inner optimum, which can
        // land below the previous iterate. That iterate is feasible too, so
        // keep whichever scores higher; this is what keeps F_j >= 0.
        let held = min_h(problem, &previous, eta)?;
        let kept_previous = held > st.min_h();
        let (powers, f_value) = if kept_previous {
            (previous, held)
        } else {
            (st.powers.clone(), st.min_h())
        };
        inner_traces.push(st.trace);
        outer_trace.push(OuterStep {
            j,
            eta,
            f_value,
            kept_previous,
        });
        let next = problem.min_ratio(&powers)?;
        if f_value <= cfg.zeta_p {
            let latencies = problem.latencies(&powers)?;
            return Ok(AllocationResult {
                max_latency: latencies.iter().copied().fold(0.0, f64::max),
                powers,
                eta_star: next,
                latencies,
                outer_iterations: j + 1,
                total_inner_iterations: total_inner,
                outer_trace,
                inner_traces,
                degraded,
            });
        }
        eta = next;
        previous = powers;
    }
    Err(Error::NoConvergence {
        what: "Dinkelbach iteration",
        iterations: cfg.max_outer,
    })
}
