use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::Method;
use crate::config::Config;
use crate::engine::{Engine, FaultEvent, FlightProfile, HealthFactors, SENSOR_NAMES};
use crate::error::{Error, Result};
use crate::linearize::{build_bank, ModelBank, OperatingPoint};

/// Where the fuel/altitude/Mach schedule comes from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ProfileRef {
    /// Built-in 520 s climb/cruise/descent mission.
    #[default]
    Reference,
    /// CSV file with header `t,mdot_f,alt_ft,mach`.
    Csv { path: PathBuf },
    /// Fixed condition held for `duration_s`.
    Constant { mdot_f: f64, alt_ft: f64, mach: f64, duration_s: f64 },
}

/// Sensor given by name (`T_C`, `P_C`, `N`, `T_T`, `P_T`) or 1-based number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SensorRef {
    Number(usize),
    Name(String),
}

impl SensorRef {
    /// 0-based channel.
    pub fn channel(&self) -> Result<usize> {
        match self {
            SensorRef::Number(n) if (1..=5).contains(n) => Ok(n - 1),
            SensorRef::Number(n) => Err(Error::Validation(format!("sensor number {n} outside 1..=5"))),
            SensorRef::Name(s) => sensor_channel(s),
        }
    }
}

/// Parses a sensor name or number into a 0-based channel.
pub fn sensor_channel(name: &str) -> Result<usize> {
    let t = name.trim();
    if let Ok(n) = t.parse::<usize>() {
        return SensorRef::Number(n).channel();
    }
    SENSOR_NAMES
        .iter()
        .position(|s| s.eq_ignore_ascii_case(t))
        .ok_or_else(|| Error::Validation(format!("unknown sensor `{name}`")))
}

/// Additive sensor bias switched on at `onset_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub sensor: SensorRef,
    /// Bias as a percentage of the sensor's cruise reading (negative for a low bias).
    pub severity_pct: f64,
    pub onset_s: f64,
}

/// Health-baseline refresh of the on-board models at `t_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineUpdate {
    pub t_s: f64,
    pub health: HealthFactors,
}

/// Optional per-sample series kept in the run output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordOptions {
    pub probabilities: bool,
    /// Healthy-mode fusion weights (filter-bank methods only).
    pub weights: bool,
    /// Normalized measurements and OBEM outputs.
    pub signals: bool,
}

fn one() -> f64 {
    1.0
}

fn mhkf() -> Method {
    Method::Mhkf
}

/// A single diagnosis session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub profile: ProfileRef,
    /// Simulated time; defaults to the whole profile.
    #[serde(default)]
    pub duration_s: Option<f64>,
    /// Health factors of the simulated engine.
    #[serde(default)]
    pub plant_health: HealthFactors,
    /// Health baselines of the on-board models; defaults to the plant's.
    #[serde(default)]
    pub obem_health: Option<HealthFactors>,
    /// Signed baseline estimation error per factor `[eta_c, eta_t, mdot_c, mdot_t]`, percent:
    /// the on-board baseline is `plant * (1 + rbee/100)`. Exclusive with `obem_health`.
    #[serde(default)]
    pub rbee_pct: Option<[f64; 4]>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    /// Multiplier on the measurement noise standard deviations.
    #[serde(default = "one")]
    pub noise_scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "mhkf")]
    pub method: Method,
    /// Model bank file; the mission bank is built when absent.
    #[serde(default)]
    pub bank: Option<PathBuf>,
    /// Overrides the configured two-level escalation.
    #[serde(default)]
    pub hierarchical: Option<bool>,
    /// Recompute MLKF gains every sample instead of using the stored steady-state gains.
    #[serde(default)]
    pub online_gains: bool,
    #[serde(default)]
    pub baseline_updates: Vec<BaselineUpdate>,
    #[serde(default)]
    pub record: RecordOptions,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: String::new(),
            profile: ProfileRef::Reference,
            duration_s: None,
            plant_health: HealthFactors::healthy(),
            obem_health: None,
            rbee_pct: None,
            faults: Vec::new(),
            noise_scale: 1.0,
            seed: 0,
            method: Method::Mhkf,
            bank: None,
            hierarchical: None,
            online_gains: false,
            baseline_updates: Vec::new(),
            record: RecordOptions::default(),
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse(origin, e))
    }

    /// Reads a TOML scenario; relative profile and bank paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s = Self::from_toml(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let ProfileRef::Csv { path: p } = &mut s.profile {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(b) = &mut s.bank {
            if b.is_relative() {
                *b = base.join(&*b);
            }
        }
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes to TOML")
    }

    pub fn flight_profile(&self) -> Result<FlightProfile> {
        match &self.profile {
            ProfileRef::Reference => Ok(FlightProfile::reference_mission()),
            ProfileRef::Csv { path } => FlightProfile::load(path),
            ProfileRef::Constant { mdot_f, alt_ft, mach, duration_s } => {
                if !(*duration_s > 0.0) {
                    return Err(Error::Validation("constant profile needs a positive duration".into()));
                }
                FlightProfile::new(FlightProfile::constant(*duration_s, *mdot_f, *alt_ft, *mach).samples().to_vec())
                    .map_err(|e| Error::Validation(e.to_string()))
            }
        }
    }

    /// Health baselines of the on-board models.
    pub fn obem_health(&self) -> Result<HealthFactors> {
        match (&self.obem_health, &self.rbee_pct) {
            (Some(_), Some(_)) => Err(Error::Validation("give either obem_health or rbee_pct, not both".into())),
            (Some(h), None) => Ok(*h),
            (None, Some(r)) => {
                let p = self.plant_health.as_array();
                Ok(HealthFactors::from_array([0, 1, 2, 3].map(|i| p[i] * (1.0 + r[i] / 100.0))))
            }
            (None, None) => Ok(self.plant_health),
        }
    }

    /// Number of plant samples.
    pub fn samples(&self, profile: &FlightProfile, dt: f64) -> Result<usize> {
        let span = profile.end() - profile.start();
        let duration = self.duration_s.unwrap_or(span);
        if !(duration > 0.0) || duration > span + 1e-9 {
            return Err(Error::Validation(format!(
                "duration {duration} s outside the profile length {span} s"
            )));
        }
        Ok((duration / dt + 1e-9).floor() as usize)
    }

    /// Fault events in sensor units, sorted by onset.
    pub fn fault_events(&self, engine: &Engine, dt: f64) -> Result<Vec<FaultEvent>> {
        let cruise = engine.design_outputs();
        let mut events = self
            .faults
            .iter()
            .map(|f| {
                let ch = f.sensor.channel()?;
                if !f.severity_pct.is_finite() || !f.onset_s.is_finite() || f.onset_s < 0.0 {
                    return Err(Error::Validation("fault severity and onset must be finite, onset >= 0".into()));
                }
                Ok(FaultEvent {
                    sensor: ch + 1,
                    bias: f.severity_pct / 100.0 * cruise[ch],
                    onset: (f.onset_s / dt).round() as usize,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        events.sort_by_key(|e| e.onset);
        Ok(events)
    }

    /// Rejects inconsistent scenarios before any simulation work.
    pub fn validate(&self, cfg: &Config) -> Result<()> {
        let v = |e: Error| match e {
            Error::InvalidInput(m) => Error::Validation(m),
            other => other,
        };
        let dt = cfg.linearize.dt;
        self.plant_health.validate().map_err(v)?;
        self.obem_health()?.validate().map_err(v)?;
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Validation("noise_scale must be finite and nonnegative".into()));
        }
        let profile = self.flight_profile()?;
        let n = self.samples(&profile, dt)?;
        if self.faults.len() > 2 {
            return Err(Error::Validation("at most two concurrent faults are supported".into()));
        }
        let engine_free = |f: &FaultSpec| -> Result<usize> {
            f.sensor.channel()?;
            if !f.severity_pct.is_finite() || !(f.onset_s >= 0.0) {
                return Err(Error::Validation("fault severity and onset must be finite, onset >= 0".into()));
            }
            Ok((f.onset_s / dt).round() as usize)
        };
        let mut events = Vec::new();
        for f in &self.faults {
            let onset = engine_free(f)?;
            if onset >= n {
                return Err(Error::Validation(format!("fault onset {} s is beyond the run", f.onset_s)));
            }
            events.push(FaultEvent { sensor: f.sensor.channel()? + 1, bias: f.severity_pct, onset });
        }
        let min_gap = (cfg.diagnosis.min_fault_interval_s / dt).round() as usize;
        FaultEvent::validate_set(&events, min_gap)?;
        for u in &self.baseline_updates {
            if !(u.t_s >= 0.0 && u.t_s < n as f64 * dt) {
                return Err(Error::Validation(format!("baseline update at {} s is outside the run", u.t_s)));
            }
            u.health.validate().map_err(v)?;
        }
        Ok(())
    }
}

/// Engine, configuration and model bank shared by many runs.
#[derive(Debug, Clone)]
pub struct Workbench {
    pub config: Config,
    pub engine: Engine,
    pub bank: Arc<ModelBank>,
}

impl Workbench {
    /// Builds the engine and the bank over the five mission operating points.
    pub fn new(config: Config) -> Result<Self> {
        config.validate()?;
        let engine = Engine::new(config.engine())?;
        let bank = build_bank(&engine, &OperatingPoint::mission_set(), &config.linearize)?;
        Ok(Self { config, engine, bank: Arc::new(bank) })
    }

    pub fn with_bank(config: Config, bank: ModelBank) -> Result<Self> {
        config.validate()?;
        if (bank.dt - config.linearize.dt).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "bank sampling period {} s differs from the configured {} s",
                bank.dt, config.linearize.dt
            )));
        }
        let engine = Engine::new(config.engine())?;
        Ok(Self { config, engine, bank: Arc::new(bank) })
    }

    /// Same engine and configuration with a subset of the bank's operating points.
    pub fn with_points(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self { config: self.config.clone(), engine: self.engine.clone(), bank: Arc::new(self.bank.subset(indices)?) })
    }

    pub fn dt(&self) -> f64 {
        self.bank.dt
    }
}
