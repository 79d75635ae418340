//! Short-timescale power allocation.
//!
//! With the bandwidth fixed, the base station splits `P_B` among the
//! vehicles to minimize the largest latency. Writing the latency of vehicle
//! `k` as `L_k = (f_k / g_k)²` with
//!
//! ```text
//! f_k = −√B Q⁻¹(ε_k) log2(e) sqrt(1 − (1+Γ_k)⁻²)   (< 0)
//! g_k =  B log2(1+Γ_k) − R_k                        (> 0 when feasible)
//! ```
//!
//! the problem becomes `max_p min_k f_k/g_k`, a max-min fractional program.
//! [`dinkelbach_allocate`] solves it with Dinkelbach's method, each step of
//! which is a max-min problem in `h_k = f_k − η g_k` solved by
//! [`equalize_maxmin`]. Every `h_k` depends on `p_k` only, so the inner
//! problem is solved by equalizing the `h_k` values.

mod dinkelbach;
mod equalizer;

pub use dinkelbach::{auxiliary_function, dinkelbach_allocate, DinkelbachConfig, OuterStep};
pub use equalizer::{equalize_maxmin, EqualizerConfig, EqualizerState, EqualizerStep};

use crate::channel::{EffectiveSinrModel, Vue};
use crate::error::{Error, Result};
use crate::fbl::{dispersion_factor, latency_at_sinr};
use crate::numerics::{gaussian_q_inv, LOG2_E};

/// Numerator and denominator of `−√L_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioParts {
    pub f: f64,
    pub g: f64,
}

impl RatioParts {
    /// `f / g = −√L`.
    pub fn ratio(&self) -> f64 {
        self.f / self.g
    }

    /// `f − η g`.
    pub fn h(&self, eta: f64) -> f64 {
        // Same value as f - eta g, but exactly zero when eta is this ratio.
        self.g * (self.ratio() - eta)
    }
}

fn parts_at_sinr(sinr: f64, q_inv: f64, rate: f64, bandwidth: f64) -> Result<RatioParts> {
    let capacity = bandwidth * sinr.ln_1p() * LOG2_E;
    let g = capacity - rate;
    if !(g > 1e-12 * capacity.max(rate)) {
        return Err(Error::InfeasibleRate { rate, capacity });
    }
    let f = -bandwidth.sqrt() * q_inv * LOG2_E * dispersion_factor(sinr).sqrt();
    Ok(RatioParts { f, g })
}

/// `(f_k, g_k)` for one vehicle at power `power`.
pub fn ratio_parts(
    model: &EffectiveSinrModel,
    vue: &Vue,
    power: f64,
    count: usize,
    bandwidth: f64,
) -> Result<RatioParts> {
    let sinr = model.effective_sinr(vue, power, count)?;
    parts_at_sinr(sinr, gaussian_q_inv(vue.reliability)?, vue.target_rate, bandwidth)
}

/// `h_k = f_k − η g_k` for one vehicle at power `power`.
pub fn h_value(
    model: &EffectiveSinrModel,
    vue: &Vue,
    power: f64,
    count: usize,
    bandwidth: f64,
    eta: f64,
) -> Result<f64> {
    Ok(ratio_parts(model, vue, power, count, bandwidth)?.h(eta))
}

/// A power allocation instance: precoder model, population and bandwidth,
/// with the per-vehicle constants cached.
#[derive(Debug, Clone)]
pub struct PowerProblem {
    model: EffectiveSinrModel,
    vues: Vec<Vue>,
    bandwidth: f64,
    phi: Vec<f64>,
    q_inv: Vec<f64>,
}

impl PowerProblem {
    pub fn new(model: EffectiveSinrModel, vues: Vec<Vue>, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::domain("bandwidth", bandwidth, "must be positive"));
        }
        model.check_population(vues.len())?;
        for v in &vues {
            v.validate()?;
        }
        let phi = vues
            .iter()
            .map(|v| model.phi(v, vues.len()))
            .collect::<Result<_>>()?;
        let q_inv = vues
            .iter()
            .map(|v| gaussian_q_inv(v.reliability))
            .collect::<Result<_>>()?;
        Ok(Self {
            model,
            vues,
            bandwidth,
            phi,
            q_inv,
        })
    }

    pub fn model(&self) -> &EffectiveSinrModel {
        &self.model
    }

    pub fn vues(&self) -> &[Vue] {
        &self.vues
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.vues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vues.is_empty()
    }

    pub fn total_power(&self) -> f64 {
        self.model.total_power
    }

    /// Effective SINR of vehicle `k` at power `power`.
    pub fn sinr(&self, k: usize, power: f64) -> Result<f64> {
        self.model.effective_sinr_with_phi(self.phi[k], power)
    }

    /// `(f_k, g_k)` of vehicle `k` at power `power`.
    pub fn parts(&self, k: usize, power: f64) -> Result<RatioParts> {
        let v = &self.vues[k];
        parts_at_sinr(self.sinr(k, power)?, self.q_inv[k], v.target_rate, self.bandwidth)
    }

    /// `min_k f_k/g_k` over an allocation.
    pub fn min_ratio(&self, powers: &[f64]) -> Result<f64> {
        let mut best = f64::INFINITY;
        for (k, &p) in powers.iter().enumerate() {
            best = best.min(self.parts(k, p)?.ratio());
        }
        Ok(best)
    }

    /// Per-vehicle latencies of an allocation.
    pub fn latencies(&self, powers: &[f64]) -> Result<Vec<f64>> {
        powers
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let v = &self.vues[k];
                latency_at_sinr(self.sinr(k, p)?, v.target_rate, v.reliability, self.bandwidth)
            })
            .collect()
    }

    pub(crate) fn equal_powers(&self) -> Vec<f64> {
        vec![self.total_power() / self.len() as f64; self.len()]
    }
}

/// Solution of the power allocation problem.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    /// Power per vehicle, W.
    pub powers: Vec<f64>,
    /// `min_k f_k/g_k` at `powers`, i.e. minus the square root of the largest latency.
    pub eta_star: f64,
    /// Latency per vehicle, s.
    pub latencies: Vec<f64>,
    /// Largest latency, `η*²`.
    pub max_latency: f64,
    /// Dinkelbach iterations performed, counting the terminating one.
    pub outer_iterations: usize,
    /// Equalizer iterations summed over all outer iterations.
    pub total_inner_iterations: usize,
    /// `(j, η_j, F_j)` for every outer iteration.
    pub outer_trace: Vec<OuterStep>,
    /// Equalizer trace of every outer iteration.
    pub inner_traces: Vec<Vec<EqualizerStep>>,
    /// Set when some equalizer run hit its step-size floor before reaching
    /// the spread tolerance.
    pub degraded: bool,
}

/// Equal power allocation, `p_k = P_B / K`.
pub fn epa_allocate(problem: &PowerProblem) -> Result<AllocationResult> {
    let powers = problem.equal_powers();
    let eta_star = problem.min_ratio(&powers)?;
    let latencies = problem.latencies(&powers)?;
    Ok(AllocationResult {
        max_latency: latencies.iter().copied().fold(0.0, f64::max),
        powers,
        eta_star,
        latencies,
        outer_iterations: 0,
        total_inner_iterations: 0,
        outer_trace: Vec::new(),
        inner_traces: Vec::new(),
        degraded: false,
    })
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use crate::channel::Precoder;
    use crate::fbl::latency;

    #[test]
    fn ratio_matches_latency() {
        let pr = problem(Precoder::Mf, 0.8, &[10.0, 100.0, 170.0]);
        for k in 0..3 {
            for p in [0.5, 5.0, 15.0] {
                let parts = pr.parts(k, p).unwrap();
                let l = latency(pr.model(), &pr.vues()[k], p, 3, pr.bandwidth()).unwrap();
                assert!(parts.f < 0.0 && parts.g > 0.0);
                assert!((parts.ratio() * parts.ratio() / l - 1.0).abs() < 1e-12);
                let free = ratio_parts(pr.model(), &pr.vues()[k], p, 3, pr.bandwidth()).unwrap();
                assert_eq!(free, parts);
            }
        }
    }

    #[test]
    fn half_reliability_has_zero_penalty() {
        let pr = problem(Precoder::Zf, 1.0, &[100.0]);
        let mut vue = pr.vues()[0];
        vue.reliability = 0.5;
        let parts = ratio_parts(pr.model(), &vue, 1.0, 1, pr.bandwidth()).unwrap();
        assert_eq!(parts.f, 0.0);
        assert_eq!(parts.ratio(), 0.0);
    }

    #[test]
    fn edge_vehicle_is_worse() {
        let pr = problem(Precoder::Zf, 0.8, &[0.0, 100.0]);
        let p = pr.total_power() / 2.0;
        assert!(pr.parts(0, p).unwrap().ratio() < pr.parts(1, p).unwrap().ratio());
    }

    #[test]
    fn h_at_zero_eta_is_f() {
        let pr = problem(Precoder::Mf, 0.8, &[50.0, 150.0]);
        let v = &pr.vues()[0];
        let h = h_value(pr.model(), v, 3.0, 2, pr.bandwidth(), 0.0).unwrap();
        assert_eq!(h, pr.parts(0, 3.0).unwrap().f);
    }

    #[test]
    fn infeasible_power_is_reported() {
        let pr = problem(Precoder::Zf, 0.8, &[0.0, 100.0]);
        assert!(pr.parts(0, 0.0).unwrap_err().is_infeasible());
        assert!(pr.parts(0, 1e-12).unwrap_err().is_infeasible());
    }

    #[test]
    fn epa_basics() {
        let pr = problem(Precoder::Zf, 0.8, &[20.0, 90.0, 160.0]);
        let r = epa_allocate(&pr).unwrap();
        assert_eq!(r.powers, vec![pr.total_power() / 3.0; 3]);
        assert!((r.max_latency / (r.eta_star * r.eta_star) - 1.0).abs() < 1e-12);
        assert_eq!(r.outer_iterations, 0);
    }

    #[test]
    fn zf_requires_more_antennas_than_vehicles() {
        let cfg = table1();
        let model = EffectiveSinrModel::new(Precoder::Zf, 2, 20.0, cfg.noise_power(2e5)).unwrap();
        let vues = vec![Vue::new(100.0, 1e-8, 1.0, 1e5, 1e-6).unwrap(); 2];
        assert!(matches!(
            PowerProblem::new(model, vues, 2e5),
            Err(Error::Precondition(_))
        ));
    }
}
