use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{discretize, linearize_engine, dare_gain, DiscretePwlModel, RiccatiOptions, Scaling};
use crate::engine::{Engine, HealthFactors};
use crate::error::{Error, Result};
use crate::linalg::{Mat4, Mat5, Vec4, Vec5};

pub const BANK_FORMAT_VERSION: u32 = 1;

/// Fuel flow and flight condition of one linearization anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub mdot_f: f64,
    pub alt_ft: f64,
    pub mach: f64,
}

impl OperatingPoint {
    pub const fn new(mdot_f: f64, alt_ft: f64, mach: f64) -> Self {
        Self { mdot_f, alt_ft, mach }
    }

    /// Two climb points, cruise, and two landing points of the reference mission.
    pub fn mission_set() -> Vec<OperatingPoint> {
        vec![
            Self::new(0.38, 4070.538, 0.2109),
            Self::new(0.38, 12708.33, 0.6585),
            Self::new(0.25, 16404.2, 0.85),
            Self::new(0.30, 10424.87, 0.5402),
            Self::new(0.30, 2322.835, 0.1203),
        ]
    }

    /// Reads a `mdot_f,alt_ft,mach` table, one operating point per row.
    pub fn load_table(path: &Path) -> Result<Vec<OperatingPoint>> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::parse(path, e))?;
        let mut points = Vec::new();
        for rec in rdr.deserialize() {
            let p: OperatingPoint = rec.map_err(|e| Error::parse(path, e))?;
            if !(p.mdot_f > 0.0 && p.alt_ft >= 0.0 && p.mach >= 0.0) {
                return Err(Error::parse(path, format!("invalid operating point {p:?}")));
            }
            points.push(p);
        }
        if points.is_empty() {
            return Err(Error::parse(path, "no operating points"));
        }
        Ok(points)
    }
}

/// Settings of the offline linearization pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearizeOptions {
    /// Sampling period of the discrete models [s].
    pub dt: f64,
    /// Process noise covariance is `process_noise * I` in normalized units.
    pub process_noise: f64,
    /// Measurement noise covariance is `measurement_noise * I` in normalized units.
    pub measurement_noise: f64,
    /// Per-state override of `process_noise`.
    pub process_noise_diag: Option<[f64; 4]>,
    /// Per-channel override of `measurement_noise`.
    pub measurement_noise_diag: Option<[f64; 5]>,
    /// Relative finite-difference step.
    pub fd_step: f64,
    pub riccati: RiccatiOptions,
}

impl Default for LinearizeOptions {
    fn default() -> Self {
        Self {
            dt: 0.01,
            process_noise: 8e-6,
            measurement_noise: 1e-4,
            // shaft speed is measured tightly; a looser random walk there colours its residual
            process_noise_diag: Some([8e-6, 1e-8, 8e-6, 8e-6]),
            // 25 times the sensor noise variance: (5 sd)^2 with sd in fractions of cruise
            measurement_noise_diag: Some([1.3225e-4, 6.724e-5, 6.5025e-6, 2.35225e-5, 6.724e-5]),
            fd_step: 1e-6,
            riccati: RiccatiOptions::default(),
        }
    }
}

impl LinearizeOptions {
    pub fn q(&self) -> Mat4 {
        match self.process_noise_diag {
            Some(d) => Mat4::from_diagonal(&Vec4::from(d)),
            None => Mat4::identity() * self.process_noise,
        }
    }

    pub fn r(&self) -> Mat5 {
        match self.measurement_noise_diag {
            Some(d) => Mat5::from_diagonal(&Vec5::from(d)),
            None => Mat5::identity() * self.measurement_noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let q_ok = self.process_noise_diag.is_none_or(|d| d.iter().all(|v| *v >= 0.0));
        let r_ok = self.measurement_noise_diag.is_none_or(|d| d.iter().all(|v| *v > 0.0));
        if !(self.dt > 0.0 && self.process_noise >= 0.0 && self.measurement_noise > 0.0 && self.fd_step > 0.0 && q_ok && r_ok) {
            return Err(Error::InvalidInput(
                "linearize: dt, fd_step and measurement noise must be positive, process noise nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Lookup table of discrete piecewise-linear models shared by every sensor hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBank {
    pub dt: f64,
    pub q: Mat4,
    pub r: Mat5,
    pub scaling: Scaling,
    pub models: Vec<DiscretePwlModel>,
}

/// Trims, linearizes and discretizes the engine at every operating point.
pub fn build_bank(engine: &Engine, points: &[OperatingPoint], opts: &LinearizeOptions) -> Result<ModelBank> {
    opts.validate()?;
    if points.is_empty() {
        return Err(Error::InvalidInput("at least one operating point is required".into()));
    }
    let scaling = Scaling::cruise(engine);
    let (q, r) = (opts.q(), opts.r());
    let models = points
        .par_iter()
        .enumerate()
        .map(|(idx, point)| {
            let id = idx + 1;
            let wrap = |e: Error| Error::OperatingPoint { id, source: Box::new(e) };
            let amb = engine.ambient(point.alt_ft, point.mach);
            let x_ss = engine.trim(point.mdot_f, &amb).map_err(wrap)?;
            let h = HealthFactors::healthy();
            let lin = linearize_engine(engine, &scaling, &h, &amb, &x_ss, point.mdot_f, opts.fd_step)
                .map_err(wrap)?;
            let (a, b) = discretize(&lin.a_c, &lin.b_c, opts.dt);
            let dare = dare_gain(&a, &lin.c_c, &q, &r, &opts.riccati).map_err(wrap)?;
            Ok(DiscretePwlModel {
                id,
                point: *point,
                a,
                b,
                c: lin.c_c,
                k: dare.k,
                p: dare.p,
                s: dare.s,
                x_ss: lin.x_ss,
                u_ss: lin.u_ss,
                y_ss: lin.y_ss,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelBank { dt: opts.dt, q, r, scaling, models })
}

type Rows = Vec<Vec<f64>>;

fn rows<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> Rows {
    (0..R).map(|i| (0..C).map(|j| m[(i, j)]).collect()).collect()
}

fn from_rows<const R: usize, const C: usize>(rows: &Rows, name: &str) -> Result<nalgebra::SMatrix<f64, R, C>> {
    if rows.len() != R || rows.iter().any(|r| r.len() != C) {
        return Err(Error::InvalidInput(format!("matrix `{name}` must be {R}x{C}")));
    }
    Ok(nalgebra::SMatrix::from_fn(|i, j| rows[i][j]))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRecord {
    id: usize,
    point: OperatingPoint,
    a: Rows,
    b: Vec<f64>,
    c: Rows,
    k: Rows,
    p: Rows,
    s: Rows,
    x_ss: Vec<f64>,
    u_ss: f64,
    y_ss: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankFile {
    format_version: u32,
    sha256: String,
    dt: f64,
    q: Rows,
    r: Rows,
    x_ref: Vec<f64>,
    y_ref: Vec<f64>,
    u_ref: f64,
    models: Vec<ModelRecord>,
}

impl ModelBank {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Bank restricted to the given model indices (0-based), keeping their ids.
    pub fn subset(&self, indices: &[usize]) -> Result<ModelBank> {
        let models = indices
            .iter()
            .map(|&i| self.models.get(i).cloned().ok_or(Error::InvalidInput(format!("no model at index {i}"))))
            .collect::<Result<Vec<_>>>()?;
        if models.is_empty() {
            return Err(Error::InvalidInput("empty model subset".into()));
        }
        Ok(ModelBank { models, ..self.clone() })
    }

    /// SHA-256 over the little-endian bytes of every stored number in file order.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(BANK_FORMAT_VERSION.to_le_bytes());
        let mut put = |v: f64| h.update(v.to_le_bytes());
        put(self.dt);
        self.q.transpose().iter().for_each(|v| put(*v));
        self.r.transpose().iter().for_each(|v| put(*v));
        self.scaling.x_ref.iter().chain(self.scaling.y_ref.iter()).for_each(|v| put(*v));
        put(self.scaling.u_ref);
        for m in &self.models {
            put(m.id as f64);
            [m.point.mdot_f, m.point.alt_ft, m.point.mach].into_iter().for_each(&mut put);
            m.a.transpose().iter().for_each(|v| put(*v));
            m.b.iter().for_each(|v| put(*v));
            m.c.transpose().iter().for_each(|v| put(*v));
            m.k.transpose().iter().for_each(|v| put(*v));
            m.p.transpose().iter().for_each(|v| put(*v));
            m.s.transpose().iter().for_each(|v| put(*v));
            m.x_ss.iter().for_each(|v| put(*v));
            put(m.u_ss);
            m.y_ss.iter().for_each(|v| put(*v));
        }
        hex::encode(h.finalize())
    }

    pub fn to_json(&self) -> String {
        let file = BankFile {
            format_version: BANK_FORMAT_VERSION,
            sha256: self.checksum(),
            dt: self.dt,
            q: rows(&self.q),
            r: rows(&self.r),
            x_ref: self.scaling.x_ref.iter().copied().collect(),
            y_ref: self.scaling.y_ref.iter().copied().collect(),
            u_ref: self.scaling.u_ref,
            models: self
                .models
                .iter()
                .map(|m| ModelRecord {
                    id: m.id,
                    point: m.point,
                    a: rows(&m.a),
                    b: m.b.iter().copied().collect(),
                    c: rows(&m.c),
                    k: rows(&m.k),
                    p: rows(&m.p),
                    s: rows(&m.s),
                    x_ss: m.x_ss.iter().copied().collect(),
                    u_ss: m.u_ss,
                    y_ss: m.y_ss.iter().copied().collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("bank serializes")
    }

    pub fn from_json(text: &str) -> Result<ModelBank> {
        let file: BankFile = serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        if file.format_version != BANK_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported bank format version {} (expected {BANK_FORMAT_VERSION})",
                file.format_version
            )));
        }
        let vec = |v: &Vec<f64>, n: usize, name: &str| {
            if v.len() != n {
                Err(Error::InvalidInput(format!("vector `{name}` must have {n} entries")))
            } else {
                Ok(v.clone())
            }
        };
        let models = file
            .models
            .iter()
            .map(|m| {
                Ok(DiscretePwlModel {
                    id: m.id,
                    point: m.point,
                    a: from_rows(&m.a, "a")?,
                    b: from_rows(&vec(&m.b, 4, "b")?.into_iter().map(|v| vec![v]).collect(), "b")?,
                    c: from_rows(&m.c, "c")?,
                    k: from_rows(&m.k, "k")?,
                    p: from_rows(&m.p, "p")?,
                    s: from_rows(&m.s, "s")?,
                    x_ss: Vec4::from_vec(vec(&m.x_ss, 4, "x_ss")?),
                    u_ss: m.u_ss,
                    y_ss: Vec5::from_vec(vec(&m.y_ss, 5, "y_ss")?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if models.is_empty() {
            return Err(Error::InvalidInput("model bank has no models".into()));
        }
        let bank = ModelBank {
            dt: file.dt,
            q: from_rows(&file.q, "q")?,
            r: from_rows(&file.r, "r")?,
            scaling: Scaling {
                x_ref: Vec4::from_vec(vec(&file.x_ref, 4, "x_ref")?),
                y_ref: Vec5::from_vec(vec(&file.y_ref, 5, "y_ref")?),
                u_ref: file.u_ref,
            },
            models,
        };
        let computed = bank.checksum();
        if computed != file.sha256 {
            return Err(Error::Checksum { stored: file.sha256, computed });
        }
        Ok(bank)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ModelBank> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelBank::from_json(&text).map_err(|e| match e {
            Error::Checksum { .. } => e,
            other => Error::parse(path, other),
        })
    }
}
