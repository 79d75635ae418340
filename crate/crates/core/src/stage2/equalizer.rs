use crate::error::{Error, Result};
use crate::numerics::compensated_sum;

use super::PowerProblem;

/// Settings of the max-min equalizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqualizerConfig {
    /// Stop once `max h − min h ≤ zeta_s`.
    pub zeta_s: f64,
    /// Initial step. `None` means `P_B / (2K)`.
    pub mu0: Option<f64>,
    /// Iteration cap; exceeding it is an error.
    pub max_iterations: usize,
    /// Step floor as a fraction of `P_B`; reaching it ends the run early
    /// with [`EqualizerState::degraded`] set.
    pub mu_floor: f64,
}

impl Default for EqualizerConfig {
    fn default() -> Self {
        Self {
            zeta_s: 1e-2,
            mu0: None,
            max_iterations: 100_000,
            mu_floor: 1e-15,
        }
    }
}

/// One equalizer iteration as seen from outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqualizerStep {
    pub iteration: usize,
    pub max_h: f64,
    pub min_h: f64,
    /// Step size after this iteration's accept/halve decision.
    pub mu: f64,
    pub accepted: bool,
}

/// Final state of [`equalize_maxmin`].
#[derive(Debug, Clone, PartialEq)]
pub struct EqualizerState {
    pub powers: Vec<f64>,
    /// `h_k` at `powers`.
    pub h: Vec<f64>,
    pub mu: f64,
    pub iterations: usize,
    pub degraded: bool,
    pub trace: Vec<EqualizerStep>,
}

impl EqualizerState {
    pub fn min_h(&self) -> f64 {
        self.h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_h(&self) -> f64 {
        self.h.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn spread(&self) -> f64 {
        self.max_h() - self.min_h()
    }
}

/// Index of the smallest and largest entry, lowest index on ties.
fn extremes(h: &[f64]) -> (usize, usize) {
    let (mut lo, mut hi) = (0, 0);
    for (k, &v) in h.iter().enumerate().skip(1) {
        if v < h[lo] {
            lo = k;
        }
        if v > h[hi] {
            hi = k;
        }
    }
    (lo, hi)
}

fn spread_with(h: &[f64], swap: [(usize, f64); 2]) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (k, &v) in h.iter().enumerate() {
        let v = swap.iter().find(|(i, _)| *i == k).map_or(v, |&(_, nv)| nv);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi - lo
}

/// Maximizes `min_k h_k(p_k)` with `h_k = f_k − η g_k` over the power
/// simplex by moving power from the best-off vehicle to the worst-off one.
///
/// Starts from equal power. A move of size `μ` is undone and `μ` halved when
/// the worst vehicle did not improve, the best one did not get worse, the
/// donor's power would drop to zero or below, or the spread did not shrink.
/// A move that makes the donor infeasible (`g ≤ 0`) counts as rejected.
pub fn equalize_maxmin(
    problem: &PowerProblem,
    eta: f64,
    cfg: &EqualizerConfig,
) -> Result<EqualizerState> {
    if !(eta < 0.0) {
        return Err(Error::domain("eta", eta, "must be negative"));
    }
    if !(cfg.zeta_s > 0.0) {
        return Err(Error::domain("zeta_s", cfg.zeta_s, "must be positive"));
    }
    let p_b = problem.total_power();
    let n = problem.len();
    let mut mu = cfg.mu0.unwrap_or(p_b / (2.0 * n as f64));
    if !(mu > 0.0 && mu < p_b) {
        return Err(Error::domain("mu0", mu, "must lie in (0, P_B)"));
    }
    let floor = cfg.mu_floor * p_b;

    let mut p = problem.equal_powers();
    let mut h = p
        .iter()
        .enumerate()
        .map(|(k, &pk)| Ok(problem.parts(k, pk)?.h(eta)))
        .collect::<Result<Vec<_>>>()?;

    let mut trace = Vec::new();
    let record = |trace: &mut Vec<EqualizerStep>, i, h: &[f64], mu, accepted| {
        let (lo, hi) = extremes(h);
        trace.push(EqualizerStep {
            iteration: i,
            max_h: h[hi],
            min_h: h[lo],
            mu,
            accepted,
        });
    };
    record(&mut trace, 0, &h, mu, true);

    let mut i = 0;
    let mut degraded = false;
    loop {
        let (lo, hi) = extremes(&h);
        let spread = h[hi] - h[lo];
        if spread <= cfg.zeta_s {
            break;
        }
        if mu < floor {
            log::debug!("equalizer step floor reached at spread {spread:e}");
            degraded = true;
            break;
        }
        if i >= cfg.max_iterations {
            return Err(Error::NoConvergence {
                what: "max-min equalizer",
                iterations: i,
            });
        }
        i += 1;

        let (p_lo, p_hi) = (p[lo] + mu, p[hi] - mu);
        let candidate = if p_hi > 0.0 {
            match (problem.parts(lo, p_lo), problem.parts(hi, p_hi)) {
                (Ok(a), Ok(b)) => Some((a.h(eta), b.h(eta))),
                (Err(e), _) | (_, Err(e)) if !e.is_infeasible() => return Err(e),
                _ => None,
            }
        } else {
            None
        };

        let accepted = match candidate {
            Some((h_lo, h_hi)) => {
                let new_spread = spread_with(&h, [(lo, h_lo), (hi, h_hi)]);
                let done = new_spread <= cfg.zeta_s;
                let good = h_lo > h[lo] && h_hi < h[hi] && new_spread < spread;
                if done || good {
                    p[lo] = p_lo;
                    p[hi] = p_hi;
                    h[lo] = h_lo;
                    h[hi] = h_hi;
                    rebalance(problem, &mut p, &mut h, hi, eta)?;
                    true
                } else {
                    false
                }
            }
            None => false,
        };
        if !accepted {
            mu *= 0.5;
        }
        record(&mut trace, i, &h, mu, accepted);
    }

    Ok(EqualizerState {
        powers: p,
        h,
        mu,
        iterations: i,
        degraded,
        trace,
    })
}

/// Pushes any rounding residue of `Σp = P_B` onto the donor.
fn rebalance(
    problem: &PowerProblem,
    p: &mut [f64],
    h: &mut [f64],
    donor: usize,
    eta: f64,
) -> Result<()> {
    let residue = problem.total_power() - compensated_sum(p.iter().copied());
    if residue != 0.0 && p[donor] + residue > 0.0 {
        p[donor] += residue;
        h[donor] = problem.parts(donor, p[donor])?.h(eta);
    }
    Ok(())
}
