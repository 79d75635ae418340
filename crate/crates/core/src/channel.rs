//! Large-scale fading geometry and the deterministic effective SINR seen by a
//! vehicle under matched-filter or zero-forcing precoding.
//!
//! The effective SINR `Γ_k` replaces the random instantaneous SINR by the
//! value obtained when every random factor is replaced by its mean. It is a
//! function of the vehicle's power share, its path loss `β_k` and its channel
//! estimation accuracy `χ_k` only, so the optimizers never touch small-scale
//! fading.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Linear transmit precoder at the base station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Precoder {
    /// Matched filter (conjugate beamforming).
    Mf,
    /// Zero forcing.
    Zf,
}

impl Precoder {
    pub const ALL: [Precoder; 2] = [Precoder::Mf, Precoder::Zf];

    pub fn as_str(self) -> &'static str {
        match self {
            Precoder::Mf => "mf",
            Precoder::Zf => "zf",
        }
    }
}

impl fmt::Display for Precoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Precoder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mf" => Ok(Precoder::Mf),
            "zf" => Ok(Precoder::Zf),
            other => Err(Error::Precondition(format!("unknown precoder `{other}`"))),
        }
    }
}

/// Whether the base station knows the channel exactly or only up to the
/// configured estimation accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CsiMode {
    Perfect,
    Imperfect,
}

impl CsiMode {
    pub const ALL: [CsiMode; 2] = [CsiMode::Perfect, CsiMode::Imperfect];

    /// Accuracy `χ` to use: 1 with perfect CSI, `imperfect` otherwise.
    pub fn accuracy(self, imperfect: f64) -> f64 {
        match self {
            CsiMode::Perfect => 1.0,
            CsiMode::Imperfect => imperfect,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CsiMode::Perfect => "perfect",
            CsiMode::Imperfect => "imperfect",
        }
    }
}

impl fmt::Display for CsiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CsiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "perfect" | "pcsi" => Ok(CsiMode::Perfect),
            "imperfect" | "ipcsi" => Ok(CsiMode::Imperfect),
            other => Err(Error::Precondition(format!("unknown CSI mode `{other}`"))),
        }
    }
}

/// Geometry, path-loss law and spectral densities of the cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    /// Perpendicular distance `d_B` from the base station to the road, m.
    pub bs_offset: f64,
    /// Road segment length `d_R`, m.
    pub road_length: f64,
    /// Path-loss constant `θ`.
    pub gain_constant: f64,
    /// Path-loss exponent `α`.
    pub pathloss_exponent: f64,
    /// Noise power spectral density `N_0`, W/Hz.
    pub noise_psd: f64,
    /// Transmit power spectral density `P_0`, W/Hz.
    pub signal_psd: f64,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("bs_offset", self.bs_offset),
            ("road_length", self.road_length),
            ("gain_constant", self.gain_constant),
            ("noise_psd", self.noise_psd),
            ("signal_psd", self.signal_psd),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(name, v, "must be positive and finite"));
            }
        }
        if !(self.pathloss_exponent > 2.0) {
            return Err(Error::domain(
                "pathloss_exponent",
                self.pathloss_exponent,
                "must exceed 2",
            ));
        }
        Ok(())
    }

    /// Noise power `N_0 B` over bandwidth `B`.
    pub fn noise_power(&self, bandwidth: f64) -> f64 {
        self.noise_psd * bandwidth
    }

    /// Total transmit power `P_0 B` over bandwidth `B`.
    pub fn total_power(&self, bandwidth: f64) -> f64 {
        self.signal_psd * bandwidth
    }
}

/// `β(d) = θ [(d − d_R/2)² + d_B²]^{−α/2}` for a vehicle `d` meters from the
/// start of the road.
pub fn pathloss(cfg: &ChannelConfig, position: f64) -> Result<f64> {
    if !(0.0..=cfg.road_length).contains(&position) {
        return Err(Error::domain(
            "position",
            position,
            "vehicle must be on the road segment",
        ));
    }
    let along = position - 0.5 * cfg.road_length;
    Ok(pathloss_at_sq_distance(cfg, along * along + cfg.bs_offset * cfg.bs_offset))
}

/// Path loss at the far ends of the segment, the weakest link on the road.
pub fn worst_case_pathloss(cfg: &ChannelConfig) -> f64 {
    let half = 0.5 * cfg.road_length;
    pathloss_at_sq_distance(cfg, cfg.bs_offset * cfg.bs_offset + half * half)
}

fn pathloss_at_sq_distance(cfg: &ChannelConfig, sq_distance: f64) -> f64 {
    cfg.gain_constant * sq_distance.powf(-0.5 * cfg.pathloss_exponent)
}

/// How vehicles are dropped on the road.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Independent uniform positions on `[0, d_R]`, reproducible from a seed.
    UniformRandom,
    /// Vehicle `k` (1-based) at `(k − 1/2) d_R / K`.
    Equispaced,
}

impl FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" | "uniform-random" => Ok(Placement::UniformRandom),
            "equispaced" => Ok(Placement::Equispaced),
            other => Err(Error::Precondition(format!("unknown placement `{other}`"))),
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::UniformRandom => "uniform",
            Placement::Equispaced => "equispaced",
        })
    }
}

/// Drops `count` vehicles on the road.
pub fn place_vues(cfg: &ChannelConfig, count: usize, seed: u64, mode: Placement) -> Vec<f64> {
    let d_r = cfg.road_length;
    match mode {
        Placement::Equispaced => (0..count)
            .map(|k| (k as f64 + 0.5) * d_r / count as f64)
            .collect(),
        Placement::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count).map(|_| d_r * rng.random::<f64>()).collect()
        }
    }
}

/// One vehicle: its channel and its service requirement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vue {
    /// Distance from the start of the road, m.
    pub position: f64,
    /// Large-scale fading gain `β_k`.
    pub pathloss: f64,
    /// Channel estimation accuracy `χ_k`; 1 means perfect CSI.
    pub accuracy: f64,
    /// Required rate `R_k`, bit/s.
    pub target_rate: f64,
    /// Target decoding error probability `ε_k`.
    pub reliability: f64,
}

impl Vue {
    pub fn new(
        position: f64,
        pathloss: f64,
        accuracy: f64,
        target_rate: f64,
        reliability: f64,
    ) -> Result<Self> {
        let v = Self {
            position,
            pathloss,
            accuracy,
            target_rate,
            reliability,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pathloss > 0.0) {
            return Err(Error::domain("pathloss", self.pathloss, "must be positive"));
        }
        if !(self.accuracy > 0.0 && self.accuracy <= 1.0) {
            return Err(Error::domain("accuracy", self.accuracy, "must lie in (0, 1]"));
        }
        if !(self.target_rate > 0.0) {
            return Err(Error::domain("target_rate", self.target_rate, "must be positive"));
        }
        if !(self.reliability > 0.0 && self.reliability < 0.5) {
            return Err(Error::domain(
                "reliability",
                self.reliability,
                "must lie in (0, 0.5)",
            ));
        }
        Ok(())
    }
}

/// Precoder plus the cell-wide quantities the effective SINR depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveSinrModel {
    pub precoder: Precoder,
    /// Base-station antenna count `M`.
    pub antennas: u32,
    /// Total transmit power `P_B`, W.
    pub total_power: f64,
    /// Noise power `σ²`, W.
    pub noise_power: f64,
}

impl EffectiveSinrModel {
    pub fn new(precoder: Precoder, antennas: u32, total_power: f64, noise_power: f64) -> Result<Self> {
        if precoder == Precoder::Mf && antennas < 2 {
            return Err(Error::Precondition(format!(
                "matched filter needs at least 2 antennas, got {antennas}"
            )));
        }
        if antennas == 0 {
            return Err(Error::Precondition("antenna count must be positive".into()));
        }
        if !(total_power > 0.0) {
            return Err(Error::domain("total_power", total_power, "must be positive"));
        }
        if !(noise_power > 0.0) {
            return Err(Error::domain("noise_power", noise_power, "must be positive"));
        }
        Ok(Self {
            precoder,
            antennas,
            total_power,
            noise_power,
        })
    }

    /// Checks that the model can serve `count` vehicles.
    pub fn check_population(&self, count: usize) -> Result<()> {
        if count == 0 {
            return Err(Error::Precondition("population is empty".into()));
        }
        if self.precoder == Precoder::Zf && self.antennas as usize <= count {
            return Err(Error::Precondition(format!(
                "zero forcing needs more antennas than vehicles (M = {}, K = {count})",
                self.antennas
            )));
        }
        Ok(())
    }

    /// Interference-plus-noise weight `P_B β (1 − χ) + M σ²` shared by both precoders.
    fn impairment(&self, vue: &Vue) -> f64 {
        self.total_power * vue.pathloss * (1.0 - vue.accuracy)
            + f64::from(self.antennas) * self.noise_power
    }

    /// The per-vehicle constant `φ_k`.
    ///
    /// * MF: `[P_B β (1−χ) + M σ²] / (χ β) · M / (M − 1)`, in watts.
    /// * ZF: `χ β (M − K) / [P_B β (1−χ) + M σ²]`, in 1/W.
    pub fn phi(&self, vue: &Vue, count: usize) -> Result<f64> {
        self.check_population(count)?;
        let m = f64::from(self.antennas);
        Ok(match self.precoder {
            Precoder::Mf => self.impairment(vue) / (vue.accuracy * vue.pathloss) * m / (m - 1.0),
            Precoder::Zf => {
                vue.accuracy * vue.pathloss * (m - count as f64) / self.impairment(vue)
            }
        })
    }

    /// Effective SINR `Γ_k` when vehicle `k` gets power `power` out of `P_B`.
    pub fn effective_sinr(&self, vue: &Vue, power: f64, count: usize) -> Result<f64> {
        let phi = self.phi(vue, count)?;
        self.effective_sinr_with_phi(phi, power)
    }

    /// Same as [`effective_sinr`](Self::effective_sinr) with `φ_k` precomputed.
    pub fn effective_sinr_with_phi(&self, phi: f64, power: f64) -> Result<f64> {
        let p_b = self.total_power;
        if !(power >= 0.0 && power <= p_b * (1.0 + 1e-12)) {
            return Err(Error::domain("power", power, "must lie in [0, P_B]"));
        }
        let power = power.min(p_b);
        Ok(match self.precoder {
            Precoder::Mf => f64::from(self.antennas) * power / (p_b - power + phi),
            Precoder::Zf => power * phi,
        })
    }
}

/// Large-array limit `p χ β / σ²` of the effective SINR.
pub fn asymptotic_sinr(vue: &Vue, power: f64, noise_power: f64) -> f64 {
    power * vue.accuracy * vue.pathloss / noise_power
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn table1() -> ChannelConfig {
        ChannelConfig {
            bs_offset: 20.0,
            road_length: 200.0,
            gain_constant: 1e-3,
            pathloss_exponent: 3.8,
            noise_psd: 1e-16,
            signal_psd: 1e-4,
        }
    }

    fn vue(pathloss: f64, accuracy: f64) -> Vue {
        Vue {
            position: 100.0,
            pathloss,
            accuracy,
            target_rate: 1e5,
            reliability: 1e-6,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn pathloss_examples() {
        let cfg = table1();
        assert!(rel(pathloss(&cfg, 100.0).unwrap(), 1.137_852_626_891_300_2e-8) < 1e-13);
        assert!(rel(pathloss(&cfg, 0.0).unwrap(), 2.331_506_632_987_384e-11) < 1e-13);
        assert!(rel(worst_case_pathloss(&cfg), 2.331_506_632_987_384e-11) < 1e-13);
        assert_eq!(pathloss(&cfg, 200.0).unwrap(), worst_case_pathloss(&cfg));
        assert!(pathloss(&cfg, -1.0).is_err());
        assert!(pathloss(&cfg, 200.5).is_err());
        let flat = ChannelConfig {
            pathloss_exponent: 0.0,
            ..cfg
        };
        assert_eq!(worst_case_pathloss(&flat), flat.gain_constant);
        assert!(flat.validate().is_err());
    }

    #[test]
    fn placement() {
        let cfg = table1();
        assert_eq!(place_vues(&cfg, 1, 0, Placement::Equispaced), vec![100.0]);
        assert_eq!(
            place_vues(&cfg, 4, 0, Placement::Equispaced),
            vec![25.0, 75.0, 125.0, 175.0]
        );
        let a = place_vues(&cfg, 50, 42, Placement::UniformRandom);
        let b = place_vues(&cfg, 50, 42, Placement::UniformRandom);
        assert_eq!(a, b);
        assert!(a.iter().all(|&d| (0.0..=200.0).contains(&d)));
        assert_ne!(a, place_vues(&cfg, 50, 43, Placement::UniformRandom));
    }

    #[test]
    fn zf_phi_examples() {
        let model = EffectiveSinrModel::new(Precoder::Zf, 300, 20.0, 2e-11).unwrap();
        let v = vue(1.138e-8, 0.8);
        assert!(rel(model.phi(&v, 10).unwrap(), 51.245_341_614_906_83) < 1e-13);
        let perfect = vue(1.138e-8, 1.0);
        let expected = 1.138e-8 * 290.0 / (300.0 * 2e-11);
        assert!(rel(model.phi(&perfect, 10).unwrap(), expected) < 1e-14);
        assert!(model.phi(&v, 300).is_err());
    }

    #[test]
    fn mf_phi_examples() {
        let model = EffectiveSinrModel::new(Precoder::Mf, 300, 20.0, 2e-11).unwrap();
        let v = vue(1.138e-8, 0.8);
        assert!(rel(model.phi(&v, 10).unwrap(), 5.677_977_558_469_65) < 1e-13);
        // φ/M → σ²/(χβ) as M grows
        let big = EffectiveSinrModel::new(Precoder::Mf, 10_000_000, 20.0, 2e-11).unwrap();
        let ratio = big.phi(&v, 10).unwrap() / 1e7;
        assert!(rel(ratio, 2e-11 / (0.8 * 1.138e-8)) < 1e-3);
        assert!(EffectiveSinrModel::new(Precoder::Mf, 1, 20.0, 2e-11).is_err());
    }

    #[test]
    fn effective_sinr_examples() {
        let zf = EffectiveSinrModel::new(Precoder::Zf, 300, 20.0, 2e-11).unwrap();
        let v = vue(1.138e-8, 1.0);
        assert_eq!(zf.effective_sinr(&v, 0.0, 10).unwrap(), 0.0);
        let g = zf.effective_sinr(&v, 2.0, 10).unwrap();
        assert!(rel(g, 1_100.066_666_666_666_7) < 1e-13);
        assert!(zf.effective_sinr(&v, 20.5, 10).is_err());
        assert!(zf.effective_sinr(&v, -0.1, 10).is_err());
    }

    #[test]
    fn mf_single_user_has_no_interference_term() {
        let mf = EffectiveSinrModel::new(Precoder::Mf, 64, 20.0, 2e-11).unwrap();
        let v = vue(1e-9, 0.9);
        let phi = mf.phi(&v, 1).unwrap();
        let g = mf.effective_sinr(&v, 20.0, 1).unwrap();
        assert!(rel(g, 64.0 * 20.0 / phi) < 1e-14);
    }

    #[test]
    fn imperfect_csi_hurts() {
        let zf = EffectiveSinrModel::new(Precoder::Zf, 300, 20.0, 2e-11).unwrap();
        let a = zf.effective_sinr(&vue(1e-9, 1.0), 2.0, 10).unwrap();
        let b = zf.effective_sinr(&vue(1e-9, 0.8), 2.0, 10).unwrap();
        assert!(a > b);
    }

    #[test]
    fn converges_to_large_array_limit() {
        // Edge vehicle at Table-1 scale: both precoders are within 1 % at M = 1e5.
        let cfg = table1();
        let (b, k) = (200e3, 10);
        let (p_b, sigma2) = (cfg.total_power(b), cfg.noise_power(b));
        for chi in [1.0, 0.8] {
            let v = vue(worst_case_pathloss(&cfg), chi);
            let limit = asymptotic_sinr(&v, p_b / k as f64, sigma2);
            for pre in Precoder::ALL {
                let m = EffectiveSinrModel::new(pre, 100_000, p_b, sigma2).unwrap();
                let g = m.effective_sinr(&v, p_b / k as f64, k).unwrap();
                assert!(rel(g, limit) < 0.01, "{pre} chi={chi}");
            }
        }
        // A road-midpoint vehicle has ~500x the SNR and needs a larger array.
        let v = vue(pathloss(&cfg, 100.0).unwrap(), 0.8);
        let limit = asymptotic_sinr(&v, p_b / k as f64, sigma2);
        for pre in Precoder::ALL {
            let m = EffectiveSinrModel::new(pre, 10_000_000, p_b, sigma2).unwrap();
            let g = m.effective_sinr(&v, p_b / k as f64, k).unwrap();
            assert!(rel(g, limit) < 0.01, "{pre}");
        }
    }

    proptest! {
        #[test]
        fn pathloss_symmetric_and_bounded(d in 0.0f64..200.0) {
            let cfg = table1();
            let a = pathloss(&cfg, d).unwrap();
            let b = pathloss(&cfg, 200.0 - d).unwrap();
            prop_assert!(rel(a, b) < 1e-12);
            prop_assert!(a >= worst_case_pathloss(&cfg) * (1.0 - 1e-12));
            prop_assert!(a <= pathloss(&cfg, 100.0).unwrap());
        }

        #[test]
        fn sinr_monotone(
            p in 0.1f64..19.0,
            chi in 0.5f64..0.99,
            beta in 1e-11f64..1e-8,
            m in 20u32..500,
            zf in proptest::bool::ANY,
        ) {
            let pre = if zf { Precoder::Zf } else { Precoder::Mf };
            let k = 10;
            let base = EffectiveSinrModel::new(pre, m, 20.0, 2e-11).unwrap();
            let v = vue(beta, chi);
            let g = base.effective_sinr(&v, p, k).unwrap();
            let h = 1e-3;
            prop_assert!(base.effective_sinr(&v, p + h, k).unwrap() > g);
            prop_assert!(base.effective_sinr(&vue(beta, chi + 0.01), p, k).unwrap() > g);
            prop_assert!(base.effective_sinr(&vue(beta * 1.01, chi), p, k).unwrap() > g);
            let more = EffectiveSinrModel { antennas: m + 1, ..base };
            prop_assert!(more.effective_sinr(&v, p, k).unwrap() > g);
            let noisier = EffectiveSinrModel { noise_power: 2.02e-11, ..base };
            prop_assert!(noisier.effective_sinr(&v, p, k).unwrap() < g);
        }
    }
}
