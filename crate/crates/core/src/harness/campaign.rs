use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics, ConfusionMatrix, Metrics, CONDITION_LABELS, NO_FAULT};
use super::run::{run_scenario, RunOutput};
use super::scenario::{sensor_channel, FaultSpec, ProfileRef, Scenario, SensorRef, Workbench};
use crate::baselines::Method;
use crate::engine::{HealthFactors, SENSOR_NAMES};
use crate::error::{Error, Result};

/// Environment variable holding the campaign worker count.
pub const WORKERS_ENV: &str = "MMHKF_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RbeeMagnitude {
    /// Every run uses the limit itself.
    #[default]
    Fixed,
    /// Magnitudes drawn uniformly in `[0, limit]`.
    Uniform,
}

/// Reference-baseline estimation error applied to the OBEM, per component. Efficiency and
/// flow of one component share a signed error; the sign is drawn per run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbeeSpec {
    pub compressor_pct: f64,
    pub turbine_pct: f64,
    pub magnitude: RbeeMagnitude,
}

impl RbeeSpec {
    /// Signed per-parameter errors `[eta_c, eta_t, mdot_c, mdot_t]` in percent.
    pub fn draw(&self, rng: &mut impl Rng) -> [f64; 4] {
        let mut one = |limit: f64| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let mag = match self.magnitude {
                RbeeMagnitude::Fixed => limit,
                RbeeMagnitude::Uniform => limit * rng.random::<f64>(),
            };
            sign * mag
        };
        let c = one(self.compressor_pct);
        let t = one(self.turbine_pct);
        [c, t, c, t]
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && (0.0..100.0).contains(&v);
        if !(ok(self.compressor_pct) && ok(self.turbine_pct)) {
            return Err(Error::Validation("rbee limits must lie in [0, 100) percent".into()));
        }
        Ok(())
    }
}

/// One point of an uncertainty sweep; unset fields keep the campaign values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepPoint {
    pub label: String,
    pub rbee: Option<RbeeSpec>,
    pub noise_scale: Option<f64>,
}

/// Conditions x runs Monte Carlo specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Campaign {
    pub name: String,
    pub seed: u64,
    /// Runs per condition.
    pub runs: usize,
    /// Sensor names plus "no_fault"; all six by default.
    pub conditions: Vec<String>,
    pub severity_pct: f64,
    pub onset_s: f64,
    pub profile: ProfileRef,
    pub duration_s: Option<f64>,
    pub plant_health: HealthFactors,
    pub rbee: Option<RbeeSpec>,
    pub noise_scale: f64,
    pub method: Method,
    /// Single-fault campaigns stay on the first level by default.
    pub hierarchical: bool,
    pub sweep: Vec<SweepPoint>,
}

impl Default for Campaign {
    fn default() -> Self {
        Self {
            name: "campaign".into(),
            seed: 0,
            runs: 50,
            conditions: CONDITION_LABELS[..5].iter().map(|s| s.to_string()).chain(["no_fault".to_string()]).collect(),
            severity_pct: 3.0,
            onset_s: 250.0,
            profile: ProfileRef::Reference,
            duration_s: None,
            plant_health: HealthFactors::new(0.96, 0.96, 0.96, 0.96),
            rbee: None,
            noise_scale: 1.0,
            method: Method::Mhkf,
            hierarchical: false,
            sweep: Vec::new(),
        }
    }
}

/// Maps a condition name to its confusion-matrix row.
pub fn condition_index(name: &str) -> Result<usize> {
    let lower = name.to_ascii_lowercase().replace([' ', '-'], "_");
    if lower == "no_fault" || lower == "nofault" || lower == "healthy" {
        return Ok(NO_FAULT);
    }
    sensor_channel(name)
}

impl Campaign {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let mut c: Campaign = toml::from_str(text).map_err(|e| Error::parse(origin, e))?;
        if let ProfileRef::Csv { path } = &mut c.profile {
            if path.is_relative() {
                if let Some(dir) = origin.parent() {
                    *path = dir.join(&*path);
                }
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("campaign serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 || self.conditions.is_empty() {
            return Err(Error::Validation("a campaign needs at least one run and one condition".into()));
        }
        for c in &self.conditions {
            condition_index(c).map_err(|_| Error::Validation(format!("unknown condition {c:?}")))?;
        }
        if let Some(r) = &self.rbee {
            r.validate()?;
        }
        for p in &self.sweep {
            if let Some(r) = &p.rbee {
                r.validate()?;
            }
            if p.noise_scale.is_some_and(|s| !(s >= 0.0 && s.is_finite())) {
                return Err(Error::Validation(format!("sweep point {:?}: bad noise scale", p.label)));
            }
        }
        Ok(())
    }

    /// The campaign with one sweep point applied.
    pub fn at(&self, point: &SweepPoint) -> Campaign {
        let mut c = self.clone();
        if !point.label.is_empty() {
            c.name = format!("{}_{}", self.name, point.label);
        }
        if point.rbee.is_some() {
            c.rbee = point.rbee;
        }
        if let Some(s) = point.noise_scale {
            c.noise_scale = s;
        }
        c.sweep.clear();
        c
    }

    /// Run list as `(global index, condition row)`.
    pub fn plan(&self) -> Result<Vec<(usize, usize)>> {
        let mut out = Vec::with_capacity(self.runs * self.conditions.len());
        for c in &self.conditions {
            let row = condition_index(c)?;
            for _ in 0..self.runs {
                out.push((out.len(), row));
            }
        }
        Ok(out)
    }

    /// Scenario of run `index` under `condition`; seed = campaign seed XOR run index.
    pub fn scenario(&self, index: usize, condition: usize) -> Scenario {
        let seed = self.seed ^ index as u64;
        let rbee_pct = self.rbee.map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            r.draw(&mut rng)
        });
        let faults = if condition == NO_FAULT {
            Vec::new()
        } else {
            vec![FaultSpec {
                sensor: SensorRef::Name(SENSOR_NAMES[condition].into()),
                severity_pct: self.severity_pct,
                onset_s: self.onset_s,
            }]
        };
        Scenario {
            name: format!("{}_{}_{index}", self.name, CONDITION_LABELS[condition].replace(' ', "_")),
            profile: self.profile.clone(),
            duration_s: self.duration_s,
            plant_health: self.plant_health,
            rbee_pct,
            faults,
            noise_scale: self.noise_scale,
            seed,
            method: self.method,
            hierarchical: Some(self.hierarchical),
            ..Scenario::default()
        }
    }
}

/// Per-run campaign record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub index: usize,
    pub seed: u64,
    pub condition: String,
    pub outcome: String,
    pub rbee_pct: Option<[f64; 4]>,
    pub false_alarm: bool,
    pub declarations: usize,
    /// Plant sample of the first declaration.
    pub first_declaration_k: Option<usize>,
    pub k_ds: Option<usize>,
    pub fdt_s: Option<f64>,
    pub bias_pct: Option<f64>,
    pub wmsne_pct: Option<f64>,
}

impl RunSummary {
    fn new(index: usize, condition: usize, sc: &Scenario, out: &RunOutput) -> Self {
        let outcome = out.classification.map_or(NO_FAULT, |s| s - 1);
        let sev = out.severities.first();
        RunSummary {
            index,
            seed: sc.seed,
            condition: CONDITION_LABELS[condition].to_string(),
            outcome: CONDITION_LABELS[outcome].to_string(),
            rbee_pct: sc.rbee_pct,
            false_alarm: out.false_alarm,
            declarations: out.declarations().count(),
            first_declaration_k: out.declarations().next().map(|e| e.k),
            k_ds: out.faults.first().and_then(|f| f.k_ds),
            fdt_s: out.faults.first().and_then(|f| f.fdt_s),
            bias_pct: sev.map(|s| s.bias_pct),
            wmsne_pct: sev.map(|s| s.wmsne_pct),
        }
    }

    pub fn condition_index(&self) -> usize {
        condition_index(&self.condition).unwrap_or(NO_FAULT)
    }

    pub fn outcome_index(&self) -> usize {
        condition_index(&self.outcome).unwrap_or(NO_FAULT)
    }
}

/// A run that ended in an error; excluded from the confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub index: usize,
    pub seed: u64,
    pub condition: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub name: String,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub runs: Vec<RunSummary>,
    pub failures: Vec<RunFailure>,
}

impl CampaignResult {
    pub fn fdts(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.fdt_s).collect()
    }
}

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|n| *n > 0)
}

/// Runs `job` over `0..n` on a pool sized by [`WORKERS_ENV`], keeping index order.
fn par_indexed<T: Send>(n: usize, job: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
    let run = || (0..n).into_par_iter().map(&job).collect::<Vec<_>>();
    match workers_from_env() {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::InvalidInput(format!("cannot start {w} workers: {e}")))?;
            Ok(pool.install(run))
        }
        None => Ok(run()),
    }
}

/// Executes every run of `campaign` (sweep ignored) and tallies the confusion matrix.
pub fn monte_carlo(wb: &Workbench, campaign: &Campaign) -> Result<CampaignResult> {
    campaign.validate()?;
    let plan = campaign.plan()?;
    // reject configuration errors once, before spending time on runs
    if let Some((i, c)) = plan.first() {
        campaign.scenario(*i, *c).validate(&wb.config)?;
    }
    let outcomes = par_indexed(plan.len(), |n| {
        let (index, condition) = plan[n];
        let sc = campaign.scenario(index, condition);
        run_scenario(wb, &sc).map(|out| RunSummary::new(index, condition, &sc, &out)).map_err(|e| RunFailure {
            index,
            seed: sc.seed,
            condition: CONDITION_LABELS[condition].to_string(),
            error: e.to_string(),
        })
    })?;
    let mut confusion = ConfusionMatrix::default();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => {
                confusion.record(r.condition_index(), r.outcome_index());
                runs.push(r);
            }
            Err(f) => failures.push(f),
        }
    }
    Ok(CampaignResult { name: campaign.name.clone(), metrics: metrics(&confusion), confusion, runs, failures })
}

/// One result per sweep point, or the plain campaign when the sweep is empty. Every point
/// reuses the same run seeds.
pub fn sweep(wb: &Workbench, campaign: &Campaign) -> Result<Vec<CampaignResult>> {
    if campaign.sweep.is_empty() {
        return Ok(vec![monte_carlo(wb, campaign)?]);
    }
    campaign.sweep.iter().map(|p| monte_carlo(wb, &campaign.at(p))).collect()
}

/// Onset x severity grid for detection-time statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdtSpec {
    pub seed: u64,
    pub runs: usize,
    pub sensors: Vec<String>,
    pub onsets_s: Vec<f64>,
    pub severities_pct: Vec<f64>,
    pub plant_health: HealthFactors,
    pub noise_scale: f64,
}

impl Default for FdtSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            runs: 10,
            sensors: SENSOR_NAMES.iter().map(|s| s.to_string()).collect(),
            onsets_s: vec![50.0, 250.0, 450.0],
            severities_pct: vec![2.0, 3.0, 4.0, 5.0, 6.0],
            plant_health: HealthFactors::new(0.96, 0.96, 0.96, 0.96),
            noise_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdtCell {
    pub onset_s: f64,
    pub severity_pct: f64,
    /// Mean over detected runs of all sensors.
    pub mean_fdt_s: Option<f64>,
    pub per_sensor_mean_fdt_s: Vec<Option<f64>>,
    pub detected: usize,
    /// Undetected or misattributed faults, excluded from the means.
    pub misses: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdtTable {
    pub sensors: Vec<String>,
    pub cells: Vec<FdtCell>,
}

impl FdtTable {
    pub fn cell(&self, onset_s: f64, severity_pct: f64) -> Option<&FdtCell> {
        self.cells.iter().find(|c| c.onset_s == onset_s && c.severity_pct == severity_pct)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("onset_s,severity_pct,mean_fdt_s,detected,misses,failures");
        for s in &self.sensors {
            out.push_str(&format!(",fdt_{s}"));
        }
        out.push('\n');
        let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.3}"));
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{}",
                c.onset_s,
                c.severity_pct,
                fmt(c.mean_fdt_s),
                c.detected,
                c.misses,
                c.failures
            ));
            for v in &c.per_sensor_mean_fdt_s {
                out.push(',');
                out.push_str(&fmt(*v));
            }
            out.push('\n');
        }
        out
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Mean detection time per (onset, severity); a run counts as detected only when its own
/// sensor is declared at or after the onset without an earlier false declaration.
pub fn fdt_table(wb: &Workbench, spec: &FdtSpec) -> Result<FdtTable> {
    let channels = spec.sensors.iter().map(|s| sensor_channel(s)).collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for &onset in &spec.onsets_s {
        for &sev in &spec.severities_pct {
            for (si, &ch) in channels.iter().enumerate() {
                for r in 0..spec.runs {
                    jobs.push((onset, sev, si, ch, r));
                }
            }
        }
    }
    let results = par_indexed(jobs.len(), |n| {
        let (onset, sev, _, ch, _) = jobs[n];
        let sc = Scenario {
            name: format!("fdt_{onset}_{sev}_{}", SENSOR_NAMES[ch]),
            plant_health: spec.plant_health,
            faults: vec![FaultSpec { sensor: SensorRef::Name(SENSOR_NAMES[ch].into()), severity_pct: sev, onset_s: onset }],
            noise_scale: spec.noise_scale,
            seed: spec.seed ^ n as u64,
            hierarchical: Some(false),
            ..Scenario::default()
        };
        run_scenario(wb, &sc).map(|o| if o.false_alarm { None } else { o.faults[0].fdt_s })
    })?;
    let mut cells = Vec::new();
    for &onset in &spec.onsets_s {
        for &sev in &spec.severities_pct {
            let mut all = Vec::new();
            let mut per = vec![Vec::new(); channels.len()];
            let (mut misses, mut failures) = (0, 0);
            for (job, res) in jobs.iter().zip(&results) {
                if job.0 != onset || job.1 != sev {
                    continue;
                }
                match res {
                    Ok(Some(f)) => {
                        all.push(*f);
                        per[job.2].push(*f);
                    }
                    Ok(None) => misses += 1,
                    Err(_) => failures += 1,
                }
            }
            cells.push(FdtCell {
                onset_s: onset,
                severity_pct: sev,
                mean_fdt_s: mean(&all),
                per_sensor_mean_fdt_s: per.iter().map(|v| mean(v)).collect(),
                detected: all.len(),
                misses,
                failures,
            });
        }
    }
    Ok(FdtTable { sensors: spec.sensors.clone(), cells })
}

/// Writes `config.snapshot`, `confusion.csv`, `metrics.json` and `runs/<condition>.jsonl`.
pub fn write_campaign(dir: &Path, snapshot: &str, result: &CampaignResult) -> Result<()> {
    let runs_dir = dir.join("runs");
    std::fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("config.snapshot", snapshot.to_string())?;
    write("confusion.csv", result.confusion.to_csv())?;
    let summary = serde_json::json!({
        "name": result.name,
        "fpr": result.metrics.fpr,
        "acc": result.metrics.acc,
        "ifdr": result.metrics.ifdr,
        "fpr_value": result.metrics.fpr.value(),
        "acc_value": result.metrics.acc.value(),
        "ifdr_value": result.metrics.ifdr.value(),
        "runs": result.runs.len(),
        "failed_runs": result.failures.len(),
        "failures": result.failures,
    });
    write("metrics.json", serde_json::to_string_pretty(&summary).expect("metrics serialize"))?;
    for label in CONDITION_LABELS {
        let rows: Vec<&RunSummary> = result.runs.iter().filter(|r| r.condition == label).collect();
        if rows.is_empty() {
            continue;
        }
        let path = runs_dir.join(format!("{}.jsonl", label.replace(' ', "_")));
        super::io::write_jsonl(&path, rows)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conditions_map_to_rows() {
        assert_eq!(condition_index("no_fault").unwrap(), NO_FAULT);
        assert_eq!(condition_index("No Fault").unwrap(), NO_FAULT);
        assert_eq!(condition_index("T_T").unwrap(), 3);
        assert!(condition_index("EGT").is_err());
    }

    #[test]
    fn seeds_are_campaign_seed_xor_index() {
        let c = Campaign { seed: 0b1010, runs: 3, ..Campaign::default() };
        let plan = c.plan().unwrap();
        assert_eq!(plan.len(), 18);
        assert_eq!(plan[4], (4, 1));
        assert_eq!(c.scenario(4, 1).seed, 0b1010 ^ 4);
        assert!(c.scenario(17, NO_FAULT).faults.is_empty());
    }

    #[test]
    fn rbee_draws_share_a_sign_per_component() {
        let c = Campaign {
            rbee: Some(RbeeSpec { compressor_pct: 3.0, turbine_pct: 2.0, magnitude: RbeeMagnitude::Fixed }),
            ..Campaign::default()
        };
        let mut signs = std::collections::HashSet::new();
        for i in 0..64 {
            let r = c.scenario(i, 0).rbee_pct.unwrap();
            assert_eq!(r[0], r[2]);
            assert_eq!(r[1], r[3]);
            assert_eq!(r[0].abs(), 3.0);
            assert_eq!(r[1].abs(), 2.0);
            signs.insert((r[0] > 0.0, r[1] > 0.0));
        }
        assert_eq!(signs.len(), 4);
        assert_eq!(c.scenario(5, 0).rbee_pct, c.scenario(5, 3).rbee_pct);
    }

    #[test]
    fn uniform_rbee_stays_within_limits() {
        let spec = RbeeSpec { compressor_pct: 3.0, turbine_pct: 2.0, magnitude: RbeeMagnitude::Uniform };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let r = spec.draw(&mut rng);
            assert!(r[0].abs() <= 3.0 && r[1].abs() <= 2.0);
        }
    }

    #[test]
    fn sweep_point_overrides() {
        let c = Campaign { sweep: vec![SweepPoint { label: "x20".into(), noise_scale: Some(20.0), rbee: None }], ..Campaign::default() };
        let p = c.at(&c.sweep[0]);
        assert_eq!(p.noise_scale, 20.0);
        assert_eq!(p.name, "campaign_x20");
        assert!(p.sweep.is_empty());
    }

    #[test]
    fn campaign_toml_round_trip_and_validation() {
        let text = "name = \"c\"\nruns = 2\nconditions = [\"T_C\", \"no_fault\"]\n[rbee]\ncompressor_pct = 3.0\nmagnitude = \"uniform\"\n";
        let c = Campaign::from_toml(text, Path::new("c.toml")).unwrap();
        assert_eq!(c.rbee.unwrap().magnitude, RbeeMagnitude::Uniform);
        assert_eq!(Campaign::from_toml(&c.to_toml(), Path::new("c.toml")).unwrap(), c);
        let bad = Campaign { conditions: vec!["EGT".into()], ..Campaign::default() };
        assert!(matches!(bad.validate(), Err(Error::Validation(_))));
    }
}
