use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of a flight profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    /// [s]
    pub t: f64,
    /// Fuel flow, opaque input unit (kg/s in the default model).
    pub mdot_f: f64,
    pub alt_ft: f64,
    pub mach: f64,
}

/// Time-indexed fuel flow / altitude / Mach schedule with linear interpolation between rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FlightProfile {
    samples: Vec<ProfileSample>,
}

/// Mission phase boundaries of the reference profile [s].
pub const CLIMB_END: f64 = 150.0;
pub const CRUISE_END: f64 = 350.0;
pub const MISSION_END: f64 = 520.0;

impl FlightProfile {
    pub fn new(samples: Vec<ProfileSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("flight profile has no rows".into()));
        }
        for w in samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::InvalidInput(format!(
                    "flight profile time must be strictly increasing (t = {} then {})",
                    w[0].t, w[1].t
                )));
            }
        }
        for s in &samples {
            if !(s.mdot_f > 0.0 && s.alt_ft >= 0.0 && s.mach >= 0.0)
                || ![s.t, s.mdot_f, s.alt_ft, s.mach].iter().all(|v| v.is_finite())
            {
                return Err(Error::InvalidInput(format!("invalid flight profile row {s:?}")));
            }
        }
        Ok(Self { samples })
    }

    /// Piecewise-linear reference mission: climb through the two climb operating points,
    /// cruise at 16404.2 ft / Mach 0.85, then descent through the two landing points.
    pub fn reference_mission() -> Self {
        // (t, mdot_f, alt_ft, mach) breakpoints
        let breakpoints: [(f64, f64, f64, f64); 10] = [
            (0.0, 0.38, 0.0, 0.1),
            (40.0, 0.38, 4070.538, 0.2109),
            (120.0, 0.38, 12708.33, 0.6585),
            (CLIMB_END, 0.38, 16404.2, 0.85),
            (160.0, 0.25, 16404.2, 0.85),
            (CRUISE_END, 0.25, 16404.2, 0.85),
            (360.0, 0.30, 15000.0, 0.80),
            (400.0, 0.30, 10424.87, 0.5402),
            (480.0, 0.30, 2322.835, 0.1203),
            (MISSION_END, 0.30, 0.0, 0.1),
        ];
        let samples = breakpoints
            .iter()
            .map(|&(t, mdot_f, alt_ft, mach)| ProfileSample { t, mdot_f, alt_ft, mach })
            .collect();
        Self::new(samples).expect("reference mission is well formed")
    }

    /// Constant-condition profile covering `[0, duration]`.
    pub fn constant(duration: f64, mdot_f: f64, alt_ft: f64, mach: f64) -> Self {
        let row = |t| ProfileSample { t, mdot_f, alt_ft, mach };
        Self::new(vec![row(0.0), row(duration)]).expect("constant profile is well formed")
    }

    pub fn samples(&self) -> &[ProfileSample] {
        &self.samples
    }

    pub fn start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    /// Interpolated row at time `t`, clamped to the profile ends.
    pub fn at(&self, t: f64) -> ProfileSample {
        let s = &self.samples;
        if t <= s[0].t {
            return ProfileSample { t, ..s[0] };
        }
        if t >= s[s.len() - 1].t {
            return ProfileSample { t, ..s[s.len() - 1] };
        }
        let i = s.partition_point(|r| r.t <= t);
        let (a, b) = (&s[i - 1], &s[i]);
        let w = (t - a.t) / (b.t - a.t);
        let lerp = |x: f64, y: f64| x + w * (y - x);
        ProfileSample {
            t,
            mdot_f: lerp(a.mdot_f, b.mdot_f),
            alt_ft: lerp(a.alt_ft, b.alt_ft),
            mach: lerp(a.mach, b.mach),
        }
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::InvalidInput(e.to_string()))?.clone();
        let expected = ["t", "mdot_f", "alt_ft", "mach"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::InvalidInput(format!(
                "flight profile header must be `t,mdot_f,alt_ft,mach`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for rec in rdr.deserialize() {
            rows.push(rec.map_err(|e: csv::Error| Error::InvalidInput(e.to_string()))?);
        }
        Self::new(rows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f).map_err(|e| Error::parse(path, e))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for s in &self.samples {
            w.serialize(s).map_err(|e| Error::InvalidInput(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(())
    }
}
