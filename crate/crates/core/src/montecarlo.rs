//! Monte Carlo check of the closed-form ergodic rate.
//!
//! Under Rayleigh fading the instantaneous inverse SINR of vehicle `k`
//! reduces to a weighted sum of scalar random variables:
//!
//! * `Ω_B ~ Beta(1, M−1)`, the MF leakage from each interfering stream,
//! * `Ω_G ~ InvGamma(M, 1)` for MF and `InvGamma(M−K+1, 1)` for ZF, the
//!   inverse of the desired-signal gain.
//!
//! Sampling these directly is exact in distribution and avoids any matrix
//! algebra. Realizations are generated in fixed-size blocks, each with its
//! own ChaCha stream derived from the master seed, and block statistics are
//! merged in block order. Results therefore do not depend on how many
//! threads run the blocks.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::channel::{CsiMode, EffectiveSinrModel, Precoder, Vue};
use crate::error::{Error, Result};
use crate::fbl::{na_rate, theorem1_rate};
use crate::stage2::PowerProblem;

/// Realizations per RNG block.
const BLOCK: usize = 1024;

/// How the MF inter-stream interference is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterferenceSampling {
    /// One `Beta(1, M−1)` draw per interferer, weighted by `p_i / p_k`.
    /// Exact in distribution for any power split.
    #[default]
    PerInterferer,
    /// A single `Beta(1, M−1)` draw weighted by `(P_B − p_k) / p_k`. Has the
    /// right mean but overstates the interference variance by a factor of
    /// about `K − 1`.
    Aggregated,
}

/// Monte Carlo run settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub realizations: usize,
    pub seed: u64,
    /// Worker threads. Has no effect on the numbers produced.
    pub parallel_streams: usize,
    pub interference: InterferenceSampling,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            realizations: 10_000,
            seed: 0,
            parallel_streams: 1,
            interference: InterferenceSampling::PerInterferer,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::Precondition("realizations must be positive".into()));
        }
        if self.parallel_streams == 0 {
            return Err(Error::Precondition("parallel_streams must be positive".into()));
        }
        Ok(())
    }
}

/// Which small-scale fading variable to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmegaKind {
    /// `Beta(1, M−1)`.
    BetaMf,
    /// `InvGamma(M, 1)`.
    InvGammaMf,
    /// `InvGamma(M−K+1, 1)`.
    InvGammaZf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaSample {
    pub kind: OmegaKind,
    pub value: f64,
}

/// Pre-built sampler for one of the `Ω` variables.
#[derive(Debug, Clone, Copy)]
pub enum OmegaSampler {
    /// Inverse CDF `1 − U^{1/(M−1)}`; holds `1/(M−1)`.
    Beta(f64),
    InvGamma(Gamma<f64>),
}

impl OmegaSampler {
    pub fn new(kind: OmegaKind, antennas: u32, count: usize) -> Result<Self> {
        if antennas < 2 {
            return Err(Error::Precondition(format!(
                "need at least 2 antennas, got {antennas}"
            )));
        }
        let m = f64::from(antennas);
        let shape = match kind {
            OmegaKind::BetaMf => return Ok(OmegaSampler::Beta(1.0 / (m - 1.0))),
            OmegaKind::InvGammaMf => m,
            OmegaKind::InvGammaZf => {
                if count == 0 || count > antennas as usize {
                    return Err(Error::Precondition(format!(
                        "zero forcing needs 1 <= K <= M (M = {antennas}, K = {count})"
                    )));
                }
                m - count as f64 + 1.0
            }
        };
        let gamma = Gamma::new(shape, 1.0)
            .map_err(|e| Error::Precondition(format!("gamma shape {shape}: {e}")))?;
        Ok(OmegaSampler::InvGamma(gamma))
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            OmegaSampler::Beta(inv_b) => {
                let u: f64 = rng.sample(Open01);
                -(u.ln() * inv_b).exp_m1()
            }
            OmegaSampler::InvGamma(g) => 1.0 / g.sample(rng),
        }
    }
}

/// Draws one `Ω` value.
pub fn sample_omega<R: Rng + ?Sized>(
    kind: OmegaKind,
    antennas: u32,
    count: usize,
    rng: &mut R,
) -> Result<OmegaSample> {
    let value = OmegaSampler::new(kind, antennas, count)?.draw(rng);
    Ok(OmegaSample { kind, value })
}

/// Running mean and variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    m2: f64,
}

impl Stats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Stats) {
        if other.count == 0 {
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Mean of `f(rng)` over `mc.realizations` draws.
///
/// `salt` separates independent estimates made under one master seed; block
/// `b` of salt `s` uses ChaCha stream `(s << 32) | b`.
pub fn estimate<F>(mc: &McConfig, salt: u32, f: F) -> Result<Stats>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    mc.validate()?;
    let blocks = mc.realizations.div_ceil(BLOCK);
    let run = |b: usize| -> Result<Stats> {
        let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
        rng.set_stream((u64::from(salt) << 32) | b as u64);
        let len = BLOCK.min(mc.realizations - b * BLOCK);
        let mut s = Stats::default();
        for _ in 0..len {
            s.push(f(&mut rng)?);
        }
        Ok(s)
    };
    let parts: Vec<Result<Stats>> = if mc.parallel_streams == 1 {
        (0..blocks).map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(mc.parallel_streams)
            .build()
            .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
        pool.install(|| (0..blocks).into_par_iter().map(run).collect())
    };
    let mut total = Stats::default();
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// Sample statistics of one `Ω` variable.
pub fn omega_stats(kind: OmegaKind, antennas: u32, count: usize, mc: &McConfig) -> Result<Stats> {
    let s = OmegaSampler::new(kind, antennas, count)?;
    estimate(mc, 0, |rng| Ok(s.draw(rng)))
}

/// Draws the instantaneous inverse SINR of vehicle `k`.
pub struct InvSinrSampler {
    precoder: Precoder,
    /// `[P_B β (1−χ) + M σ²] / (p_k χ β)`.
    noise_weight: f64,
    /// MF interference weights `p_i / p_k`, `i ≠ k`.
    weights: Vec<f64>,
    beta: Option<OmegaSampler>,
    gamma: OmegaSampler,
}

impl InvSinrSampler {
    pub fn new(
        model: &EffectiveSinrModel,
        vue: &Vue,
        powers: &[f64],
        k: usize,
        sampling: InterferenceSampling,
    ) -> Result<Self> {
        let count = powers.len();
        model.check_population(count)?;
        let p_k = *powers
            .get(k)
            .ok_or_else(|| Error::Precondition(format!("vehicle {k} out of range")))?;
        if !(p_k > 0.0) {
            return Err(Error::domain("power", p_k, "must be positive"));
        }
        let m = f64::from(model.antennas);
        let impairment =
            model.total_power * vue.pathloss * (1.0 - vue.accuracy) + m * model.noise_power;
        let noise_weight = impairment / (p_k * vue.accuracy * vue.pathloss);
        Ok(match model.precoder {
            Precoder::Zf => Self {
                precoder: Precoder::Zf,
                noise_weight,
                weights: Vec::new(),
                beta: None,
                gamma: OmegaSampler::new(OmegaKind::InvGammaZf, model.antennas, count)?,
            },
            Precoder::Mf => {
                let weights = match sampling {
                    InterferenceSampling::PerInterferer => powers
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != k)
                        .map(|(_, &p)| p / p_k)
                        .collect(),
                    InterferenceSampling::Aggregated => {
                        vec![(model.total_power - p_k) / p_k]
                    }
                };
                Self {
                    precoder: Precoder::Mf,
                    noise_weight,
                    weights,
                    beta: Some(OmegaSampler::new(OmegaKind::BetaMf, model.antennas, count)?),
                    gamma: OmegaSampler::new(OmegaKind::InvGammaMf, model.antennas, count)?,
                }
            }
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut inv = 0.0;
        if let (Precoder::Mf, Some(beta)) = (self.precoder, &self.beta) {
            for w in &self.weights {
                inv += w * beta.draw(rng);
            }
        }
        inv + self.noise_weight * self.gamma.draw(rng)
    }

    /// `E[γ⁻¹]` with every `Ω` replaced by its mean; equals `1/Γ_k`.
    pub fn mean(&self, antennas: u32, count: usize) -> f64 {
        let m = f64::from(antennas);
        match self.precoder {
            Precoder::Zf => self.noise_weight / (m - count as f64),
            Precoder::Mf => self.weights.iter().sum::<f64>() / m + self.noise_weight / (m - 1.0),
        }
    }
}

/// One draw of `1/γ_k` for vehicle `k` under allocation `powers`.
pub fn instantaneous_inv_sinr<R: Rng + ?Sized>(
    model: &EffectiveSinrModel,
    vue: &Vue,
    powers: &[f64],
    k: usize,
    sampling: InterferenceSampling,
    rng: &mut R,
) -> Result<f64> {
    Ok(InvSinrSampler::new(model, vue, powers, k, sampling)?.draw(rng))
}

/// Empirical ergodic rate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Sample mean of the normal-approximation rate over fading realizations.
pub fn empirical_rate(
    problem: &PowerProblem,
    powers: &[f64],
    k: usize,
    latency: f64,
    mc: &McConfig,
) -> Result<RateEstimate> {
    let vue = &problem.vues()[k];
    let sampler = InvSinrSampler::new(problem.model(), vue, powers, k, mc.interference)?;
    let (eps, b) = (vue.reliability, problem.bandwidth());
    let salt = u32::try_from(k).map_err(|_| Error::Precondition("too many vehicles".into()))?;
    let s = estimate(mc, salt, |rng| na_rate(1.0 / sampler.draw(rng), latency, eps, b))?;
    Ok(RateEstimate {
        mean: s.mean,
        stderr: s.stderr(),
    })
}

/// One row of a tightness table.
#[derive(Debug, Clone, PartialEq)]
pub struct TightnessRow {
    pub antennas: u32,
    pub precoder: Precoder,
    pub csi: CsiMode,
    pub vue: usize,
    pub theorem1_rate: f64,
    pub empirical_rate: f64,
    pub stderr: f64,
    /// `(empirical − closed form) / closed form`.
    pub rel_gap: f64,
}

/// Column names of [`TightnessRow`] in CSV form.
pub const TIGHTNESS_COLUMNS: [&str; 8] = [
    "M",
    "precoder",
    "csi",
    "vue",
    "theorem1_rate",
    "empirical_rate",
    "stderr",
    "rel_gap",
];

/// Closed-form against simulated rate for every vehicle at `powers`.
pub fn tightness_report(
    problem: &PowerProblem,
    powers: &[f64],
    csi: CsiMode,
    latency: f64,
    mc: &McConfig,
) -> Result<Vec<TightnessRow>> {
    let model = problem.model();
    let count = problem.len();
    (0..count)
        .map(|k| {
            let vue = &problem.vues()[k];
            let closed = theorem1_rate(model, vue, powers[k], count, latency, problem.bandwidth())?;
            let est = empirical_rate(problem, powers, k, latency, mc)?;
            Ok(TightnessRow {
                antennas: model.antennas,
                precoder: model.precoder,
                csi,
                vue: k,
                theorem1_rate: closed,
                empirical_rate: est.mean,
                stderr: est.stderr,
                rel_gap: (est.mean - closed) / closed,
            })
        })
        .collect()
}
