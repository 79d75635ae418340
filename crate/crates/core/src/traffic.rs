//! Macroscopic road traffic: Underwood speed–density law, vehicle count,
//! Doppler spread and coherence time.

use crate::error::{Error, Result};

/// Speed of light used for the carrier wavelength, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Converts km/h to m/s.
pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

/// One-dimensional road segment under the Underwood speed–density law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficModel {
    /// Free-flow speed `v_F`, m/s.
    pub free_flow_speed: f64,
    /// Density scale `ρ_m` of the exponential law, vehicles/m.
    pub max_density: f64,
    /// Segment length `d_R`, m.
    pub road_length: f64,
    /// Carrier frequency `f_C`, Hz.
    pub carrier_frequency: f64,
}

impl TrafficModel {
    pub fn new(
        free_flow_speed: f64,
        max_density: f64,
        road_length: f64,
        carrier_frequency: f64,
    ) -> Result<Self> {
        let m = Self {
            free_flow_speed,
            max_density,
            road_length,
            carrier_frequency,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        positive("free_flow_speed", self.free_flow_speed)?;
        positive("max_density", self.max_density)?;
        positive("road_length", self.road_length)?;
        positive("carrier_frequency", self.carrier_frequency)
    }

    /// Mean speed `v_F exp(-ρ/ρ_m)` at density `rho`.
    pub fn speed(&self, rho: f64) -> Result<f64> {
        check_density(rho)?;
        Ok(self.free_flow_speed * (-rho / self.max_density).exp())
    }

    /// Flow rate `ρ v(ρ)`, vehicles/s.
    pub fn flux(&self, rho: f64) -> Result<f64> {
        Ok(rho * self.speed(rho)?)
    }

    /// Number of vehicles on the segment, `ρ d_R` rounded to the nearest integer.
    pub fn num_vues(&self, rho: f64) -> Result<usize> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::domain("rho", rho, "must be positive"));
        }
        let exact = rho * self.road_length;
        let k = exact.round();
        if (exact - k).abs() > 1e-9 {
            log::warn!("rho * d_R = {exact} is not an integer; using K = {k}");
        }
        if k < 1.0 {
            return Err(Error::Precondition(format!(
                "density {rho} on a {} m road yields no vehicles",
                self.road_length
            )));
        }
        Ok(k as usize)
    }

    /// Maximum Doppler frequency `f_C v(ρ) / c`.
    pub fn max_doppler(&self, rho: f64) -> Result<f64> {
        Ok(self.carrier_frequency * self.speed(rho)? / SPEED_OF_LIGHT)
    }

    /// Coherence time `sqrt(9 / (16 π f_MD²))`.
    pub fn coherence_time(&self, rho: f64) -> Result<f64> {
        let f_md = self.max_doppler(rho)?;
        if f_md == 0.0 {
            return Err(Error::Precondition(
                "coherence time is unbounded at zero Doppler".into(),
            ));
        }
        Ok(3.0 / (4.0 * std::f64::consts::PI.sqrt() * f_md))
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(name, v, "must be positive and finite"))
    }
}

fn check_density(rho: f64) -> Result<()> {
    if rho >= 0.0 && !rho.is_nan() {
        Ok(())
    } else {
        Err(Error::domain("rho", rho, "density must be >= 0"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table1() -> TrafficModel {
        TrafficModel::new(kmh_to_mps(80.0), 0.15, 200.0, 2e9).unwrap()
    }

    #[test]
    fn speed_examples() {
        let m = table1();
        assert_eq!(m.speed(0.0).unwrap(), m.free_flow_speed);
        let at_max = m.speed(0.15).unwrap();
        assert!((at_max - m.free_flow_speed / std::f64::consts::E).abs() < 1e-12);
        let kmh = m.speed(0.05).unwrap() * 3.6;
        assert!((kmh - 57.322_504_845_903_14).abs() < 1e-9);
        assert!(m.speed(-0.01).is_err());
    }

    #[test]
    fn flux_peaks_at_density_scale() {
        let m = table1();
        assert_eq!(m.flux(0.0).unwrap(), 0.0);
        let expected = 0.15 * m.free_flow_speed / std::f64::consts::E;
        assert!((m.flux(0.15).unwrap() - expected).abs() < 1e-12);
        let n = 30_000;
        let best = (0..=n)
            .map(|i| 0.3 * i as f64 / n as f64)
            .max_by(|a, b| m.flux(*a).unwrap().total_cmp(&m.flux(*b).unwrap()))
            .unwrap();
        assert!((best - 0.15).abs() <= 0.3 / n as f64);
    }

    #[test]
    fn vehicle_count() {
        let m = table1();
        assert_eq!(m.num_vues(0.05).unwrap(), 10);
        assert_eq!(m.num_vues(0.15).unwrap(), 30);
        assert!(m.num_vues(0.002).is_err());
        assert!(m.num_vues(0.0).is_err());
        assert_eq!(m.num_vues(0.0512).unwrap(), 10);
    }

    #[test]
    fn doppler_and_coherence() {
        let m = table1();
        // f_C v / c with c = 2.998e8
        let f_md = m.max_doppler(0.05).unwrap();
        assert!((f_md - 106.223_602_486_663_6).abs() < 1e-9);
        let tc = m.coherence_time(0.05).unwrap();
        assert!((tc - 3.983_504_397_847_389e-3).abs() < 1e-15);
        assert!(m.coherence_time(0.10).unwrap() > tc);

        let doubled = TrafficModel {
            carrier_frequency: 4e9,
            ..m
        };
        assert!((doubled.max_doppler(0.05).unwrap() - 2.0 * f_md).abs() < 1e-12);
        assert!((doubled.coherence_time(0.05).unwrap() - tc / 2.0).abs() < 1e-15);
    }

    #[test]
    fn doppler_vanishes_in_dense_limit() {
        let m = table1();
        assert!(m.max_doppler(1e3).unwrap() < 1e-300);
        let stopped = TrafficModel {
            free_flow_speed: 0.0,
            ..m
        };
        assert!(stopped.coherence_time(0.05).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(TrafficModel::new(0.0, 0.15, 200.0, 2e9).is_err());
        assert!(TrafficModel::new(20.0, -0.15, 200.0, 2e9).is_err());
    }

    proptest! {
        #[test]
        fn doppler_coherence_product(rho in 0.0f64..0.3) {
            let m = table1();
            let prod = m.coherence_time(rho).unwrap() * m.max_doppler(rho).unwrap();
            let expected = 3.0 / (4.0 * std::f64::consts::PI.sqrt());
            prop_assert!((prod - expected).abs() <= 1e-12);
        }

        #[test]
        fn speed_decreasing(a in 0.0f64..0.3, b in 0.0f64..0.3) {
            prop_assume!(a < b);
            let m = table1();
            prop_assert!(m.speed(a).unwrap() > m.speed(b).unwrap());
            prop_assert!(m.coherence_time(a).unwrap() < m.coherence_time(b).unwrap());
        }
    }
}
