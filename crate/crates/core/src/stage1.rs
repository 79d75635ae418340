//! Long-timescale bandwidth selection.
//!
//! The bandwidth is chosen once per traffic report so that the weakest
//! vehicle, at the road edge with equal power sharing, meets
//! `L_W(B) ≤ δ T_C`. The worst-case SINR does not depend on `B` (power and
//! noise both scale with it), so the constraint is a quadratic in `√B` and
//! has a closed-form solution.

use crate::channel::{worst_case_pathloss, ChannelConfig, Precoder, Vue};
use crate::error::{Error, Result};
use crate::fbl::{dispersion_factor, latency_at_sinr};
use crate::numerics::{gaussian_q_inv, LOG2_E};
use crate::traffic::TrafficModel;

/// Everything the slow timescale needs besides the cell and road models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage1Inputs {
    /// Vehicle density `ρ`, vehicles/m.
    pub rho: f64,
    /// Fraction `δ` of the coherence time granted to one transmission.
    pub delta: f64,
    /// Strictest reliability over the population, `ε_W`.
    pub worst_reliability: f64,
    /// Largest rate requirement over the population, `R_W`, bit/s.
    pub worst_rate: f64,
    /// Lowest estimation accuracy over the population, `χ_th`.
    pub chi_th: f64,
    pub precoder: Precoder,
    /// Base-station antenna count `M`.
    pub antennas: u32,
}

impl Stage1Inputs {
    /// Builds inputs from a concrete population, pairing the strictest
    /// reliability with the largest rate even if they belong to different
    /// vehicles.
    pub fn from_population(
        vues: &[Vue],
        rho: f64,
        delta: f64,
        precoder: Precoder,
        antennas: u32,
    ) -> Result<Self> {
        if vues.is_empty() {
            return Err(Error::Precondition("population is empty".into()));
        }
        let fold = |f: fn(&Vue) -> f64, pick: fn(f64, f64) -> f64| {
            vues.iter().map(f).reduce(pick).unwrap()
        };
        Ok(Self {
            rho,
            delta,
            worst_reliability: fold(|v| v.reliability, f64::min),
            worst_rate: fold(|v| v.target_rate, f64::max),
            chi_th: fold(|v| v.accuracy, f64::min),
            precoder,
            antennas,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::domain("rho", self.rho, "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::domain("delta", self.delta, "must lie in (0, 1)"));
        }
        if !(self.worst_reliability > 0.0 && self.worst_reliability < 0.5) {
            return Err(Error::domain(
                "worst_reliability",
                self.worst_reliability,
                "must lie in (0, 0.5)",
            ));
        }
        if !(self.worst_rate > 0.0 && self.worst_rate.is_finite()) {
            return Err(Error::domain("worst_rate", self.worst_rate, "must be positive"));
        }
        if !(self.chi_th > 0.0 && self.chi_th <= 1.0) {
            return Err(Error::domain("chi_th", self.chi_th, "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Outcome of the bandwidth selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage1Result {
    /// Worst-case effective SINR `Γ_W`.
    pub gamma_w: f64,
    /// Discriminant `Δ` of the quadratic in `√B`.
    pub discriminant: f64,
    /// Optimal bandwidth `B*`, Hz.
    pub bandwidth: f64,
    /// Total transmit power `P_0 B*`, W.
    pub total_power: f64,
    /// Coherence time `T_C`, s.
    pub coherence_time: f64,
    /// Worst-case latency at `B*`, s. Equals `δ T_C` up to rounding.
    pub worst_latency: f64,
}

/// Worst-case effective SINR: edge path loss, accuracy `χ_th`, and equal
/// power `P_0 B / (ρ d_R)`. Here `ρ d_R` is kept real-valued.
///
/// * MF: `M P_0 / (P_0 (K−1) + [P_0 β_W (1−χ) + M N_0] / (χ β_W) · K M/(M−1))`
/// * ZF: `(P_0 / K) χ β_W (M−K) / [P_0 β_W (1−χ) + M N_0]`
pub fn worst_case_sinr(
    inputs: &Stage1Inputs,
    cfg: &ChannelConfig,
    traffic: &TrafficModel,
) -> Result<f64> {
    inputs.validate()?;
    cfg.validate()?;
    let k = inputs.rho * traffic.road_length;
    let m = f64::from(inputs.antennas);
    let (p0, n0, chi) = (cfg.signal_psd, cfg.noise_psd, inputs.chi_th);
    let beta = worst_case_pathloss(cfg);
    let impairment = p0 * beta * (1.0 - chi) + m * n0;
    match inputs.precoder {
        Precoder::Mf => {
            if inputs.antennas < 2 {
                return Err(Error::Precondition("matched filter needs M >= 2".into()));
            }
            Ok(m * p0 / (p0 * (k - 1.0) + impairment / (chi * beta) * k * m / (m - 1.0)))
        }
        Precoder::Zf => {
            if !(m > k) {
                return Err(Error::Precondition(format!(
                    "zero forcing needs M > rho d_R (M = {m}, rho d_R = {k})"
                )));
            }
            Ok(p0 / k * chi * beta * (m - k) / impairment)
        }
    }
}

/// Large-array limit `P_0 χ β_W / (N_0 ρ d_R)` of [`worst_case_sinr`].
pub fn asymptotic_worst_case_sinr(
    inputs: &Stage1Inputs,
    cfg: &ChannelConfig,
    traffic: &TrafficModel,
) -> f64 {
    cfg.signal_psd * inputs.chi_th * worst_case_pathloss(cfg)
        / (cfg.noise_psd * inputs.rho * traffic.road_length)
}

/// Worst-case latency `L_W(B)` at SINR `gamma_w`.
pub fn worst_case_latency(inputs: &Stage1Inputs, gamma_w: f64, bandwidth: f64) -> Result<f64> {
    latency_at_sinr(gamma_w, inputs.worst_rate, inputs.worst_reliability, bandwidth)
}

/// Largest `B` with `L_W(B) = budget`, where `budget = δ T_C`.
///
/// Returns `(B*, Δ)`. Writing `a = Q⁻¹(ε_W) log2(e) sqrt(1 − (1+Γ_W)⁻²)` and
/// `c = log2(1+Γ_W)`,
///
/// ```text
/// Δ  = a² + 4 budget c R_W
/// B* = [(a + √Δ) / (2 √budget c)]²
/// ```
pub fn bandwidth_closed_form(
    gamma_w: f64,
    worst_rate: f64,
    worst_reliability: f64,
    budget: f64,
) -> Result<(f64, f64)> {
    if !(gamma_w > 0.0 && gamma_w.is_finite()) {
        return Err(Error::domain("gamma_w", gamma_w, "must be positive"));
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::domain("budget", budget, "must be positive"));
    }
    let a = gaussian_q_inv(worst_reliability)? * LOG2_E * dispersion_factor(gamma_w).sqrt();
    let c = gamma_w.ln_1p() * LOG2_E;
    let discriminant = a * a + 4.0 * budget * c * worst_rate;
    let root = (a + discriminant.sqrt()) / (2.0 * budget.sqrt() * c);
    Ok((root * root, discriminant))
}

/// Solves the bandwidth problem for density `inputs.rho`.
///
/// ```
/// use twinscale::prelude::*;
/// use twinscale::stage1::optimal_bandwidth;
///
/// let sys = SystemConfig::default();
/// let inputs = Stage1Inputs {
///     rho: 0.05,
///     delta: 1.0 / 20.0,
///     worst_reliability: 1e-6,
///     worst_rate: 1e5,
///     chi_th: 0.8,
///     precoder: Precoder::Zf,
///     antennas: 300,
/// };
/// let r = optimal_bandwidth(&inputs, &sys.channel, &sys.traffic).unwrap();
/// let budget = inputs.delta * r.coherence_time;
/// assert!((r.worst_latency - budget).abs() <= 1e-9 * budget);
/// assert_eq!(r.total_power, sys.channel.signal_psd * r.bandwidth);
/// ```
pub fn optimal_bandwidth(
    inputs: &Stage1Inputs,
    cfg: &ChannelConfig,
    traffic: &TrafficModel,
) -> Result<Stage1Result> {
    let gamma_w = worst_case_sinr(inputs, cfg, traffic)?;
    let coherence_time = traffic.coherence_time(inputs.rho)?;
    let budget = inputs.delta * coherence_time;
    let (bandwidth, discriminant) = bandwidth_closed_form(
        gamma_w,
        inputs.worst_rate,
        inputs.worst_reliability,
        budget,
    )?;
    // The `+√Δ` root is the one with B log2(1+Γ_W) > R_W; the other is spurious.
    let worst_latency = worst_case_latency(inputs, gamma_w, bandwidth)?;
    Ok(Stage1Result {
        gamma_w,
        discriminant,
        bandwidth,
        total_power: cfg.total_power(bandwidth),
        coherence_time,
        worst_latency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{EffectiveSinrModel, Vue};
    use crate::numerics::{find_root_monotone, Tolerance};
    use crate::traffic::kmh_to_mps;

    fn cfg() -> ChannelConfig {
        ChannelConfig {
            bs_offset: 20.0,
            road_length: 200.0,
            gain_constant: 1e-3,
            pathloss_exponent: 3.8,
            noise_psd: 1e-16,
            signal_psd: 1e-4,
        }
    }

    fn traffic() -> TrafficModel {
        TrafficModel::new(kmh_to_mps(80.0), 0.15, 200.0, 2e9).unwrap()
    }

    fn inputs(rho: f64, precoder: Precoder, chi: f64) -> Stage1Inputs {
        Stage1Inputs {
            rho,
            delta: 1.0 / 20.0,
            worst_reliability: 1e-6,
            worst_rate: 1e5,
            chi_th: chi,
            precoder,
            antennas: 300,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn bisection_bandwidth(inp: &Stage1Inputs) -> f64 {
        let (c, t) = (cfg(), traffic());
        let g = worst_case_sinr(inp, &c, &t).unwrap();
        let budget = inp.delta * t.coherence_time(inp.rho).unwrap();
        let pole = inp.worst_rate / (g.ln_1p() * LOG2_E);
        let residual = |b: f64| match worst_case_latency(inp, g, b) {
            Ok(l) => l - budget,
            Err(_) => f64::INFINITY,
        };
        let tol = Tolerance::new(0.0, 1e-14, 400).unwrap();
        find_root_monotone(residual, pole * (1.0 + 1e-9), 1e10, tol).unwrap()
    }

    #[test]
    fn zf_perfect_csi_formula() {
        let (c, t) = (cfg(), traffic());
        let inp = inputs(0.05, Precoder::Zf, 1.0);
        let g = worst_case_sinr(&inp, &c, &t).unwrap();
        let beta = worst_case_pathloss(&c);
        let expected = (1e-4 / 10.0) * beta * 290.0 / (300.0 * 1e-16);
        assert!(rel(g, expected) < 1e-13);
    }

    #[test]
    fn matches_effective_sinr_at_any_bandwidth() {
        let (c, t) = (cfg(), traffic());
        for pre in Precoder::ALL {
            for chi in [1.0, 0.8] {
                let inp = inputs(0.05, pre, chi);
                let g = worst_case_sinr(&inp, &c, &t).unwrap();
                for b in [1e4, 2e5, 3e7] {
                    let model = EffectiveSinrModel::new(pre, 300, c.total_power(b), c.noise_power(b))
                        .unwrap();
                    let edge = Vue::new(0.0, worst_case_pathloss(&c), chi, 1e5, 1e-6).unwrap();
                    let direct = model.effective_sinr(&edge, c.total_power(b) / 10.0, 10).unwrap();
                    assert!(rel(g, direct) < 1e-12, "{pre} chi={chi} B={b}");
                }
            }
        }
    }

    #[test]
    fn denser_roads_lower_worst_case_sinr() {
        let (c, t) = (cfg(), traffic());
        for pre in Precoder::ALL {
            let a = worst_case_sinr(&inputs(0.05, pre, 0.8), &c, &t).unwrap();
            let b = worst_case_sinr(&inputs(0.15, pre, 0.8), &c, &t).unwrap();
            assert!(a > b);
        }
    }

    #[test]
    fn asymptotic_limit() {
        let (c, t) = (cfg(), traffic());
        for pre in Precoder::ALL {
            let inp = Stage1Inputs {
                antennas: 10_000_000,
                ..inputs(0.05, pre, 0.8)
            };
            let g = worst_case_sinr(&inp, &c, &t).unwrap();
            assert!(rel(g, asymptotic_worst_case_sinr(&inp, &c, &t)) < 1e-3);
        }
    }

    #[test]
    fn zf_antenna_precondition() {
        let (c, t) = (cfg(), traffic());
        let inp = Stage1Inputs {
            antennas: 10,
            ..inputs(0.05, Precoder::Zf, 1.0)
        };
        assert!(matches!(
            worst_case_sinr(&inp, &c, &t),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn closed_form_matches_bisection() {
        for rho in [0.01, 0.05, 0.1, 0.15] {
            for pre in Precoder::ALL {
                let inp = inputs(rho, pre, 0.8);
                let r = optimal_bandwidth(&inp, &cfg(), &traffic()).unwrap();
                assert!(rel(r.bandwidth, bisection_bandwidth(&inp)) < 1e-9);
                let budget = inp.delta * r.coherence_time;
                assert!((r.worst_latency - budget).abs() <= 1e-9 * budget);
                assert!(r.discriminant > 0.0);
            }
        }
    }

    #[test]
    fn latency_decreasing_with_pole() {
        let inp = inputs(0.05, Precoder::Zf, 1.0);
        let g = worst_case_sinr(&inp, &cfg(), &traffic()).unwrap();
        let pole = inp.worst_rate / (g.ln_1p() * LOG2_E);
        let near = worst_case_latency(&inp, g, pole * (1.0 + 1e-6)).unwrap();
        assert!(near > 1.0);
        let a = worst_case_latency(&inp, g, 2.0 * pole).unwrap();
        assert!(worst_case_latency(&inp, g, 4.0 * pole).unwrap() < a);
        assert!(worst_case_latency(&inp, g, 0.9 * pole).unwrap_err().is_infeasible());
    }

    #[test]
    fn bandwidth_trends() {
        let (c, t) = (cfg(), traffic());
        let b = |inp: Stage1Inputs| optimal_bandwidth(&inp, &c, &t).unwrap().bandwidth;
        for pre in Precoder::ALL {
            let base = inputs(0.05, pre, 0.8);
            assert!(b(base) < b(inputs(0.10, pre, 0.8)));
            assert!(b(base) >= b(inputs(0.05, pre, 1.0)));
            assert!(b(Stage1Inputs { worst_rate: 2e5, ..base }) > b(base));
            assert!(b(Stage1Inputs { delta: 1.0 / 40.0, ..base }) > b(base));
            let strict = b(Stage1Inputs {
                worst_reliability: 1e-9,
                ..base
            });
            assert!(strict > b(base));
            assert!(strict - b(base) < 150e3);
        }
    }

    #[test]
    fn discriminant_positive_on_grid() {
        for g in [1e-3, 1.0, 1e3, 1e6] {
            for r in [1e3, 1e5, 1e7] {
                for eps in [1e-9, 1e-6, 1e-3, 0.4] {
                    for budget in [1e-5, 1e-3, 1e-1] {
                        let (b, d) = bandwidth_closed_form(g, r, eps, budget).unwrap();
                        assert!(d > 0.0 && b > 0.0);
                        assert!(b * g.ln_1p() * LOG2_E > r);
                    }
                }
            }
        }
    }

    #[test]
    fn from_population_takes_worst_values() {
        let vues = [
            Vue::new(10.0, 1e-10, 0.9, 1e5, 1e-6).unwrap(),
            Vue::new(90.0, 1e-9, 0.7, 2e5, 1e-5).unwrap(),
            Vue::new(150.0, 1e-9, 1.0, 5e4, 1e-9).unwrap(),
        ];
        let inp = Stage1Inputs::from_population(&vues, 0.015, 0.05, Precoder::Mf, 64).unwrap();
        assert_eq!(inp.worst_reliability, 1e-9);
        assert_eq!(inp.worst_rate, 2e5);
        assert_eq!(inp.chi_th, 0.7);
        assert!(Stage1Inputs::from_population(&[], 0.015, 0.05, Precoder::Mf, 64).is_err());
    }
}
