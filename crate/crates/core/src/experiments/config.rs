use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::channel::{pathloss, place_vues, ChannelConfig, CsiMode, EffectiveSinrModel, Placement, Precoder, Vue};
use crate::error::{Error, Result};
use crate::montecarlo::{InterferenceSampling, McConfig};
use crate::stage1::{optimal_bandwidth, Stage1Inputs, Stage1Result};
use crate::stage2::{DinkelbachConfig, PowerProblem};
use crate::traffic::{kmh_to_mps, TrafficModel};

/// Environment variable naming a directory that holds `twinscale.conf`.
pub const CONFIG_DIR_ENV: &str = "TWINSCALE_CONFIG_DIR";
/// File looked up inside [`CONFIG_DIR_ENV`].
pub const CONFIG_FILE_NAME: &str = "twinscale.conf";

/// Converts a spectral density in dBm/Hz to W/Hz.
pub fn dbm_per_hz_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Monte Carlo settings of the tightness experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct McSettings {
    pub realizations: usize,
    /// Blocklength time used for the rate comparison, s.
    pub latency: f64,
    /// Fixed bandwidth of the tightness experiment, Hz.
    pub bandwidth: f64,
    pub threads: usize,
    pub interference: InterferenceSampling,
    /// Antenna counts to sweep.
    pub antennas: Vec<u32>,
}

/// Grids of the sweep experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    /// Densities of the bandwidth-vs-density sweep.
    pub stage1_densities: Vec<f64>,
    /// Latency budgets `δ` of the bandwidth-vs-density sweep.
    pub deltas: Vec<f64>,
    /// Reliabilities of the bandwidth-vs-reliability sweep.
    pub reliabilities: Vec<f64>,
    /// Densities of the bandwidth-vs-reliability sweep.
    pub reliability_densities: Vec<f64>,
    /// Densities of the latency-vs-density sweep and the twin-timescale run.
    pub densities: Vec<f64>,
    /// Multipliers of `P_0 B*` in the latency-vs-power sweep.
    pub power_multipliers: Vec<f64>,
    pub tradeoff_latencies: Vec<f64>,
    pub tradeoff_reliabilities: Vec<f64>,
    pub tradeoff_bandwidth: f64,
    pub tradeoff_total_power: f64,
    /// Index of the vehicle whose rate surface is reported.
    pub tradeoff_vue: usize,
}

/// Every scalar the experiments need, in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub traffic: TrafficModel,
    pub channel: ChannelConfig,
    /// Estimation accuracy `χ` under imperfect CSI.
    pub accuracy: f64,
    pub antennas: u32,
    /// Rate requirement of every vehicle, bit/s.
    pub target_rate: f64,
    /// Reliability requirement of every vehicle.
    pub reliability: f64,
    pub delta: f64,
    /// Operating density of single-instance experiments, vehicles/m.
    pub density: f64,
    pub placement: Placement,
    pub solver: DinkelbachConfig,
    pub mc: McSettings,
    pub sweep: SweepSettings,
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

impl Default for SystemConfig {
    fn default() -> Self {
        let road_length = 200.0;
        Self {
            traffic: TrafficModel {
                free_flow_speed: kmh_to_mps(80.0),
                max_density: 0.15,
                road_length,
                carrier_frequency: 2e9,
            },
            channel: ChannelConfig {
                bs_offset: 20.0,
                road_length,
                gain_constant: 1e-3,
                pathloss_exponent: 3.8,
                noise_psd: dbm_per_hz_to_watts(-130.0),
                signal_psd: dbm_per_hz_to_watts(-10.0),
            },
            accuracy: 0.8,
            antennas: 300,
            target_rate: 1e5,
            reliability: 1e-6,
            delta: 1.0 / 20.0,
            density: 0.05,
            placement: Placement::UniformRandom,
            solver: DinkelbachConfig::default(),
            mc: McSettings {
                realizations: 10_000,
                latency: 1e-3,
                bandwidth: 200e3,
                threads: 1,
                interference: InterferenceSampling::PerInterferer,
                antennas: vec![50, 100, 200, 300, 400],
            },
            sweep: SweepSettings {
                stage1_densities: (0..=28).map(|i| 0.01 + 0.005 * i as f64).collect(),
                deltas: vec![1.0 / 20.0, 1.0 / 40.0],
                reliabilities: logspace(-9.0, -3.0, 7),
                reliability_densities: vec![0.05, 0.1],
                densities: vec![0.025, 0.05, 0.075, 0.1, 0.125, 0.15],
                power_multipliers: vec![1.0, 2.0, 4.0, 8.0, 16.0],
                tradeoff_latencies: logspace(-5.0, -2.0, 13),
                tradeoff_reliabilities: logspace(-9.0, -1.0, 9),
                tradeoff_bandwidth: 200e3,
                tradeoff_total_power: 10.0,
                tradeoff_vue: 0,
            },
        }
    }
}

impl SystemConfig {
    /// Parses `key = value` text. Missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: Some(line_no),
                field: line.to_string(),
                message: "expected `key = value`".into(),
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|message| Error::Config {
                    line: Some(line_no),
                    field: key.trim().to_string(),
                    message,
                })?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "bs_offset_m" => self.channel.bs_offset = num(v)?,
            "road_length_m" => {
                let d = num(v)?;
                self.channel.road_length = d;
                self.traffic.road_length = d;
            }
            "max_density" => self.traffic.max_density = num(v)?,
            "free_flow_speed_kmh" => self.traffic.free_flow_speed = kmh_to_mps(num(v)?),
            "carrier_frequency_hz" => self.traffic.carrier_frequency = num(v)?,
            "accuracy" => self.accuracy = num(v)?,
            "gain_constant" => self.channel.gain_constant = num(v)?,
            "pathloss_exponent" => self.channel.pathloss_exponent = num(v)?,
            "noise_psd_dbm_hz" => self.channel.noise_psd = dbm_per_hz_to_watts(num(v)?),
            "signal_psd_dbm_hz" => self.channel.signal_psd = dbm_per_hz_to_watts(num(v)?),
            "antennas" => self.antennas = num(v)?,
            "target_rate_bps" => self.target_rate = num(v)?,
            "reliability" => self.reliability = num(v)?,
            "delta" => self.delta = num(v)?,
            "density" => self.density = num(v)?,
            "placement" => self.placement = v.parse().map_err(|e: Error| e.to_string())?,
            "eta0" => self.solver.eta0 = num(v)?,
            "zeta_p" => self.solver.zeta_p = num(v)?,
            "zeta_s" => self.solver.equalizer.zeta_s = num(v)?,
            "mu0_w" => self.solver.equalizer.mu0 = Some(num(v)?),
            "max_inner" => self.solver.equalizer.max_iterations = num(v)?,
            "max_outer" => self.solver.max_outer = num(v)?,
            "mc_realizations" => self.mc.realizations = num(v)?,
            "mc_latency_s" => self.mc.latency = num(v)?,
            "mc_bandwidth_hz" => self.mc.bandwidth = num(v)?,
            "mc_threads" => self.mc.threads = num(v)?,
            "mc_interference" => {
                self.mc.interference = match v {
                    "per-interferer" => InterferenceSampling::PerInterferer,
                    "aggregated" => InterferenceSampling::Aggregated,
                    _ => return Err(format!("expected per-interferer or aggregated, got `{v}`")),
                }
            }
            "mc_antennas" => self.mc.antennas = list(v)?,
            "stage1_densities" => self.sweep.stage1_densities = list(v)?,
            "deltas" => self.sweep.deltas = list(v)?,
            "reliabilities" => self.sweep.reliabilities = list(v)?,
            "reliability_densities" => self.sweep.reliability_densities = list(v)?,
            "densities" => self.sweep.densities = list(v)?,
            "power_multipliers" => self.sweep.power_multipliers = list(v)?,
            "tradeoff_latencies_s" => self.sweep.tradeoff_latencies = list(v)?,
            "tradeoff_reliabilities" => self.sweep.tradeoff_reliabilities = list(v)?,
            "tradeoff_bandwidth_hz" => self.sweep.tradeoff_bandwidth = num(v)?,
            "tradeoff_total_power_dbw" => {
                self.sweep.tradeoff_total_power = 10f64.powf(num::<f64>(v)? / 10.0)
            }
            "tradeoff_vue" => self.sweep.tradeoff_vue = num(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Range checks that do not depend on the experiment being run.
    fn check(&self) -> Result<()> {
        let field = |f: &str, m: String| Error::Config {
            line: None,
            field: f.to_string(),
            message: m,
        };
        if self.channel.pathloss_exponent <= 2.0 {
            log::warn!(
                "pathloss_exponent = {} is not above 2; channel models will reject it",
                self.channel.pathloss_exponent
            );
        }
        self.traffic
            .validate()
            .map_err(|e| field("traffic", e.to_string()))?;
        if !(self.accuracy > 0.0 && self.accuracy <= 1.0) {
            return Err(field("accuracy", format!("{} is not in (0, 1]", self.accuracy)));
        }
        if !(self.reliability > 0.0 && self.reliability < 0.5) {
            return Err(field("reliability", format!("{} is not in (0, 0.5)", self.reliability)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(field("delta", format!("{} is not in (0, 1)", self.delta)));
        }
        if self.antennas < 2 {
            return Err(field("antennas", "at least 2 antennas are required".into()));
        }
        if self.mc.realizations == 0 || self.mc.threads == 0 {
            return Err(field("mc_realizations", "must be positive".into()));
        }
        Ok(())
    }

    /// Slow-timescale inputs at density `rho` with the configured targets.
    pub fn stage1_inputs(&self, precoder: Precoder, csi: CsiMode, rho: f64) -> Stage1Inputs {
        Stage1Inputs {
            rho,
            delta: self.delta,
            worst_reliability: self.reliability,
            worst_rate: self.target_rate,
            chi_th: csi.accuracy(self.accuracy),
            precoder,
            antennas: self.antennas,
        }
    }

    /// Bandwidth selection at the configured operating density.
    pub fn stage1(&self, precoder: Precoder, csi: CsiMode) -> Result<Stage1Result> {
        let inputs = self.stage1_inputs(precoder, csi, self.density);
        optimal_bandwidth(&inputs, &self.channel, &self.traffic)
    }

    /// `ρ d_R` vehicles placed from `seed`, all with the configured targets.
    pub fn population(&self, rho: f64, csi: CsiMode, seed: u64) -> Result<Vec<Vue>> {
        let count = self.traffic.num_vues(rho)?;
        place_vues(&self.channel, count, seed, self.placement)
            .into_iter()
            .map(|d| {
                Vue::new(
                    d,
                    pathloss(&self.channel, d)?,
                    csi.accuracy(self.accuracy),
                    self.target_rate,
                    self.reliability,
                )
            })
            .collect()
    }

    /// Runs the slow timescale at `rho` and builds the resulting power
    /// allocation problem over a freshly placed population.
    pub fn instance(
        &self,
        precoder: Precoder,
        csi: CsiMode,
        rho: f64,
        seed: u64,
    ) -> Result<(Stage1Result, PowerProblem)> {
        let vues = self.population(rho, csi, seed)?;
        let inputs = Stage1Inputs::from_population(&vues, rho, self.delta, precoder, self.antennas)?;
        let s1 = optimal_bandwidth(&inputs, &self.channel, &self.traffic)?;
        let problem = self.problem_with(precoder, vues, s1.bandwidth, s1.total_power)?;
        Ok((s1, problem))
    }

    /// Power allocation problem for given vehicles, bandwidth and total power.
    pub fn problem_with(
        &self,
        precoder: Precoder,
        vues: Vec<Vue>,
        bandwidth: f64,
        total_power: f64,
    ) -> Result<PowerProblem> {
        let model = EffectiveSinrModel::new(
            precoder,
            self.antennas,
            total_power,
            self.channel.noise_power(bandwidth),
        )?;
        PowerProblem::new(model, vues, bandwidth)
    }

    /// Monte Carlo settings with the given seed.
    pub fn mc_config(&self, seed: u64) -> McConfig {
        McConfig {
            realizations: self.mc.realizations,
            seed,
            parallel_streams: self.mc.threads,
            interference: self.mc.interference,
        }
    }
}

fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>()
        .map_err(|_| format!("cannot parse `{v}` as a number"))
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    let items = v
        .split(',')
        .map(|s| num(s.trim()))
        .collect::<std::result::Result<Vec<T>, String>>()?;
    if items.is_empty() {
        return Err("empty list".into());
    }
    Ok(items)
}

/// Reads a configuration file.
pub fn load_config(path: &Path) -> Result<SystemConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        line: None,
        field: path.display().to_string(),
        message: e.to_string(),
    })?;
    SystemConfig::parse(&text)
}

/// Picks the configuration to use: `explicit` if given, otherwise
/// `$TWINSCALE_CONFIG_DIR/twinscale.conf` if it exists, otherwise defaults.
pub fn resolve_config(explicit: Option<&Path>) -> Result<(SystemConfig, Option<PathBuf>)> {
    if let Some(p) = explicit {
        return Ok((load_config(p)?, Some(p.to_path_buf())));
    }
    if let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) {
        let p = PathBuf::from(dir).join(CONFIG_FILE_NAME);
        if p.is_file() {
            return Ok((load_config(&p)?, Some(p)));
        }
        log::debug!("{} not found, using defaults", p.display());
    }
    Ok((SystemConfig::default(), None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = SystemConfig::parse("").unwrap();
        assert_eq!(cfg, SystemConfig::default());
        assert_eq!(cfg.channel.bs_offset, 20.0);
        assert_eq!(cfg.channel.road_length, 200.0);
        assert_eq!(cfg.traffic.max_density, 0.15);
        assert!((cfg.traffic.free_flow_speed - 80.0 / 3.6).abs() < 1e-12);
        assert_eq!(cfg.accuracy, 0.8);
        assert_eq!(cfg.traffic.carrier_frequency, 2e9);
        assert_eq!(cfg.channel.gain_constant, 1e-3);
        assert_eq!(cfg.channel.pathloss_exponent, 3.8);
        assert!((cfg.channel.noise_psd / 1e-16 - 1.0).abs() < 1e-12);
        assert!((cfg.channel.signal_psd / 1e-4 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_conversions() {
        assert!((dbm_per_hz_to_watts(-130.0) / 1e-16 - 1.0).abs() < 1e-12);
        assert!((dbm_per_hz_to_watts(30.0) - 1.0).abs() < 1e-15);
        let cfg = SystemConfig::parse("free_flow_speed_kmh = 36\ntradeoff_total_power_dbw = 10").unwrap();
        assert!((cfg.traffic.free_flow_speed - 10.0).abs() < 1e-12);
        assert!((cfg.sweep.tradeoff_total_power - 10.0).abs() < 1e-12);
    }

    #[test]
    fn parses_values_comments_and_lists() {
        let text = "# cell\nantennas = 128   # fewer antennas\n\ndensities = 0.05, 0.1\nplacement = equispaced\n";
        let cfg = SystemConfig::parse(text).unwrap();
        assert_eq!(cfg.antennas, 128);
        assert_eq!(cfg.sweep.densities, vec![0.05, 0.1]);
        assert_eq!(cfg.placement, Placement::Equispaced);
    }

    #[test]
    fn malformed_number_names_field_and_line() {
        let err = SystemConfig::parse("antennas = 300\ndelta = abc\n").unwrap_err();
        match err {
            Error::Config { line, field, .. } => {
                assert_eq!(line, Some(2));
                assert_eq!(field, "delta");
            }
            other => panic!("{other:?}"),
        }
        assert!(err_field(SystemConfig::parse("colour = red")).contains("colour"));
        assert!(SystemConfig::parse("no equals sign").is_err());
        assert!(SystemConfig::parse("accuracy = 1.5").is_err());
        assert!(SystemConfig::parse("densities = 0.1, x").is_err());
    }

    fn err_field(r: Result<SystemConfig>) -> String {
        r.unwrap_err().to_string()
    }

    #[test]
    fn small_pathloss_exponent_is_accepted_with_warning() {
        let cfg = SystemConfig::parse("pathloss_exponent = 2").unwrap();
        assert!(cfg.channel.validate().is_err());
    }

    #[test]
    fn population_and_instance() {
        let cfg = SystemConfig::default();
        let vues = cfg.population(0.05, CsiMode::Imperfect, 3).unwrap();
        assert_eq!(vues.len(), 10);
        assert!(vues.iter().all(|v| v.accuracy == 0.8));
        assert_eq!(vues, cfg.population(0.05, CsiMode::Imperfect, 3).unwrap());
        let (s1, pr) = cfg.instance(Precoder::Zf, CsiMode::Perfect, 0.05, 3).unwrap();
        assert_eq!(pr.len(), 10);
        assert_eq!(pr.total_power(), s1.total_power);
        assert_eq!(pr.bandwidth(), s1.bandwidth);
    }

    #[test]
    fn load_and_resolve() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.conf");
        std::fs::write(&p, "antennas = 64\n").unwrap();
        assert_eq!(load_config(&p).unwrap().antennas, 64);
        let (cfg, used) = resolve_config(Some(&p)).unwrap();
        assert_eq!(cfg.antennas, 64);
        assert_eq!(used.as_deref(), Some(p.as_path()));
        assert!(load_config(&dir.path().join("missing.conf")).is_err());
    }
}
