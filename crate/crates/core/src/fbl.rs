//! Finite-blocklength rate and latency under the normal approximation.
//!
//! With `γ` the SINR, `B` the bandwidth, `L` the blocklength time and `ε` the
//! decoding error probability,
//!
//! ```text
//! R ≈ B [ log2(1+γ) − sqrt(V / (L B)) Q⁻¹(ε) ],   V = (1 − (1+γ)⁻²) (log2 e)²
//! ```
//!
//! Solving for `L` at a fixed rate gives the latency the optimizers work with.

use crate::channel::{EffectiveSinrModel, Vue};
use crate::error::{Error, Result};
use crate::numerics::{gaussian_q_inv, LOG2_E};

/// Rate and reliability requirement of one link over a given bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QosTarget {
    /// Required rate, bit/s.
    pub rate: f64,
    /// Target decoding error probability, in `(0, 0.5)`.
    pub reliability: f64,
    /// Bandwidth, Hz.
    pub bandwidth: f64,
}

impl QosTarget {
    pub fn new(rate: f64, reliability: f64, bandwidth: f64) -> Result<Self> {
        positive("rate", rate)?;
        if !(reliability > 0.0 && reliability < 0.5) {
            return Err(Error::domain("reliability", reliability, "must lie in (0, 0.5)"));
        }
        positive("bandwidth", bandwidth)?;
        Ok(Self {
            rate,
            reliability,
            bandwidth,
        })
    }

    /// Latency needed to meet this target at SINR `sinr`.
    pub fn latency_at(&self, sinr: f64) -> Result<f64> {
        latency_at_sinr(sinr, self.rate, self.reliability, self.bandwidth)
    }
}

/// Channel dispersion `V(γ)` in bit².
pub fn dispersion(sinr: f64) -> Result<f64> {
    check_sinr(sinr)?;
    Ok(dispersion_factor(sinr) * LOG2_E * LOG2_E)
}

/// `1 − (1+γ)⁻²`, computed without cancellation at small `γ`.
pub(crate) fn dispersion_factor(sinr: f64) -> f64 {
    // 1 − 1/(1+γ)² = γ(2+γ)/(1+γ)²
    let one_plus = 1.0 + sinr;
    sinr * (2.0 + sinr) / (one_plus * one_plus)
}

/// Normal-approximation achievable rate in bit/s.
///
/// Negative values are returned as is; they mean the blocklength is too short
/// for the requested reliability.
pub fn na_rate(sinr: f64, latency: f64, reliability: f64, bandwidth: f64) -> Result<f64> {
    check_sinr(sinr)?;
    positive("latency", latency)?;
    positive("bandwidth", bandwidth)?;
    let q = gaussian_q_inv(reliability)?;
    let v = dispersion(sinr)?;
    Ok(bandwidth * (sinr.ln_1p() * LOG2_E - (v / (latency * bandwidth)).sqrt() * q))
}

/// Closed-form approximation of the ergodic rate of vehicle `vue` when it
/// receives power `power`: [`na_rate`] evaluated at the effective SINR.
pub fn theorem1_rate(
    model: &EffectiveSinrModel,
    vue: &Vue,
    power: f64,
    count: usize,
    latency: f64,
    bandwidth: f64,
) -> Result<f64> {
    let sinr = model.effective_sinr(vue, power, count)?;
    na_rate(sinr, latency, vue.reliability, bandwidth)
}

/// Latency needed to carry `rate` at SINR `sinr` over `bandwidth`:
///
/// ```text
/// L = [ sqrt(B) Q⁻¹(ε) log2(e) sqrt(1 − (1+Γ)⁻²) / (B log2(1+Γ) − R) ]²
/// ```
///
/// Returns [`Error::InfeasibleRate`] when `R ≥ B log2(1+Γ)`.
///
/// ```
/// use twinscale::fbl::latency_at_sinr;
///
/// let l = latency_at_sinr(1100.0, 1e5, 1e-6, 200e3).unwrap();
/// assert!((l - 2.549_021_138_767_484_4e-6).abs() < 1e-18);
/// assert!(latency_at_sinr(0.1, 1e5, 1e-6, 200e3).is_err());
/// ```
pub fn latency_at_sinr(sinr: f64, rate: f64, reliability: f64, bandwidth: f64) -> Result<f64> {
    check_sinr(sinr)?;
    positive("rate", rate)?;
    positive("bandwidth", bandwidth)?;
    if !(reliability > 0.0 && reliability <= 0.5) {
        return Err(Error::domain("reliability", reliability, "must lie in (0, 0.5]"));
    }
    let capacity = bandwidth * sinr.ln_1p() * LOG2_E;
    let margin = capacity - rate;
    if !(margin > 1e-12 * capacity.max(rate)) {
        return Err(Error::InfeasibleRate { rate, capacity });
    }
    let numerator = bandwidth.sqrt() * gaussian_q_inv(reliability)? * LOG2_E
        * dispersion_factor(sinr).sqrt();
    let root = numerator / margin;
    Ok(root * root)
}

/// Latency of vehicle `vue` at power `power`, from its effective SINR and
/// its own rate and reliability targets.
pub fn latency(
    model: &EffectiveSinrModel,
    vue: &Vue,
    power: f64,
    count: usize,
    bandwidth: f64,
) -> Result<f64> {
    let sinr = model.effective_sinr(vue, power, count)?;
    latency_at_sinr(sinr, vue.target_rate, vue.reliability, bandwidth)
}

fn check_sinr(sinr: f64) -> Result<()> {
    if sinr >= 0.0 && sinr.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("sinr", sinr, "must be finite and >= 0"))
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(name, v, "must be positive and finite"))
    }
}
