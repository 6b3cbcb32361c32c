//! End-to-end estimation: compute budget → throughput exponent → GPU-time →
//! operational and embodied emissions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calibration::{derive_compute, AlphaStats, TrainingRecord, DEFAULT_COMPUTE_FACTOR};
use crate::devices::{DeviceDb, DeviceFamily, RegionTable};
use crate::emissions::{embodied_from_rate, operational_carbon, relative_error};
use crate::error::{Error, Result};
use crate::throughput::{solve_gpu_time, SolverConfig};
use crate::units::{CarbonIntensity, ComputeLoad, EmbodiedRate, PowerDraw, ThroughputParam};

#[derive(Debug, Clone, PartialEq)]
pub enum ComputeSource {
    TotalFlops(f64),
    ParamsData { params: f64, data_size: f64, factor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum IntensitySource {
    Region(String),
    Direct(f64),
}

/// How the throughput exponent is chosen for a device family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaMode {
    /// Calibrated family representative, or the reference range midpoint.
    Midpoint,
    /// Evaluate at both ends of the family interval as well as the midpoint.
    Interval,
    Explicit(f64),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeviceOverrides {
    pub tdp_w: Option<f64>,
    pub beta_g_per_gpuh: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRequest {
    pub compute: ComputeSource,
    pub device_raw: String,
    pub intensity: IntensitySource,
    pub pue: f64,
    pub alpha_mode: AlphaMode,
    pub overrides: DeviceOverrides,
}

impl EstimateRequest {
    /// Request for a record's own compute, device and grid.
    pub fn from_record(rec: &TrainingRecord, alpha_mode: AlphaMode) -> Result<Self> {
        let compute = derive_compute(rec, DEFAULT_COMPUTE_FACTOR)?;
        let intensity = match (rec.intensity_g_per_kwh, &rec.region) {
            (Some(g), _) => IntensitySource::Direct(g),
            (None, Some(r)) => IntensitySource::Region(r.clone()),
            (None, None) => {
                return Err(Error::domain(format!("{}: no grid intensity or region", rec.model)))
            }
        };
        Ok(Self {
            compute: ComputeSource::TotalFlops(compute.flop()),
            device_raw: rec.device_raw.clone(),
            intensity,
            pue: 1.0,
            alpha_mode,
            overrides: DeviceOverrides::default(),
        })
    }
}

/// Inputs the estimate was evaluated with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedInputs {
    pub family: String,
    pub log10_alpha: f64,
    pub tdp_w: f64,
    pub beta_g_per_gpuh: Option<f64>,
    pub intensity_g_per_kwh: f64,
    pub pue: f64,
}

/// Emissions are in kilograms. Interval fields are `[lo, hi]` and present
/// only in interval mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub gpu_hours: f64,
    pub energy_kwh: f64,
    pub operational_kg: f64,
    pub embodied_kg: f64,
    pub total_kg: f64,
    pub gpu_hours_interval: Option<[f64; 2]>,
    pub energy_kwh_interval: Option<[f64; 2]>,
    pub operational_interval_kg: Option<[f64; 2]>,
    pub embodied_interval_kg: Option<[f64; 2]>,
    pub total_interval_kg: Option<[f64; 2]>,
    pub resolved: ResolvedInputs,
}

/// Databases and solver settings an estimate is resolved against.
#[derive(Debug, Clone)]
pub struct EstimateContext<'a> {
    pub devices: &'a DeviceDb,
    pub regions: &'a RegionTable,
    pub alpha_stats: Option<&'a BTreeMap<String, AlphaStats>>,
    pub solver: SolverConfig,
}

impl<'a> EstimateContext<'a> {
    pub fn new(devices: &'a DeviceDb, regions: &'a RegionTable) -> Self {
        Self {
            devices,
            regions,
            alpha_stats: None,
            solver: SolverConfig::default(),
        }
    }

    /// `(lo, point, hi)` exponents for a family. Calibrated statistics take
    /// precedence over the reference range.
    fn alpha_band(&self, family: &DeviceFamily) -> (f64, f64, f64) {
        match self.alpha_stats.and_then(|s| s.get(&family.key)) {
            Some(s) => (s.interval_lo, s.representative, s.interval_hi),
            None => (family.alpha_log10_lo, family.alpha_midpoint(), family.alpha_log10_hi),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Point {
    gpu_hours: f64,
    energy_kwh: f64,
    operational_kg: f64,
    embodied_kg: f64,
}

fn evaluate(
    load: ComputeLoad,
    log10_alpha: f64,
    tdp: PowerDraw,
    beta: Option<EmbodiedRate>,
    intensity: CarbonIntensity,
    pue: f64,
    solver: &SolverConfig,
) -> Result<Point> {
    let param = ThroughputParam::from_log10(log10_alpha)?;
    let time = solve_gpu_time(load, param, solver)?;
    let (energy_kwh, operational) = operational_carbon(tdp, time, intensity, pue)?;
    let embodied = beta.map_or(0.0, |b| embodied_from_rate(time, b).kg());
    Ok(Point {
        gpu_hours: time.hours(),
        energy_kwh,
        operational_kg: operational.kg(),
        embodied_kg: embodied,
    })
}

fn ordered(a: f64, b: f64) -> [f64; 2] {
    if a <= b {
        [a, b]
    } else {
        [b, a]
    }
}

fn resolve_intensity(source: &IntensitySource, regions: &RegionTable) -> Result<CarbonIntensity> {
    match source {
        IntensitySource::Direct(g) => CarbonIntensity::from_g_per_kwh(*g),
        IntensitySource::Region(code) => regions.intensity(code),
    }
}

fn resolve_compute(source: &ComputeSource) -> Result<ComputeLoad> {
    match *source {
        ComputeSource::TotalFlops(f) => ComputeLoad::from_flop(f),
        ComputeSource::ParamsData { params, data_size, factor } => {
            if !(factor > 0.0) {
                return Err(Error::domain(format!("compute factor must be positive, got {factor}")));
            }
            ComputeLoad::from_flop(factor * params * data_size)
        }
    }
}

pub fn estimate(req: &EstimateRequest, ctx: &EstimateContext<'_>) -> Result<EstimateReport> {
    let load = resolve_compute(&req.compute)?;
    let family = ctx.devices.resolve(&req.device_raw)?;
    let intensity = resolve_intensity(&req.intensity, ctx.regions)?;
    let tdp = PowerDraw::from_watts(req.overrides.tdp_w.unwrap_or(family.tdp_w))?;
    let beta = match req.overrides.beta_g_per_gpuh.or(family.beta_g_per_gpuh) {
        Some(b) => Some(EmbodiedRate::from_g_per_gpuh(b)?),
        None => None,
    };

    let (lo, mid, hi) = ctx.alpha_band(family);
    let point_alpha = match req.alpha_mode {
        AlphaMode::Explicit(l) => l,
        AlphaMode::Midpoint | AlphaMode::Interval => mid,
    };
    let run = |l: f64| evaluate(load, l, tdp, beta, intensity, req.pue, &ctx.solver);
    let point = run(point_alpha)?;

    let mut report = EstimateReport {
        gpu_hours: point.gpu_hours,
        energy_kwh: point.energy_kwh,
        operational_kg: point.operational_kg,
        embodied_kg: point.embodied_kg,
        total_kg: point.operational_kg + point.embodied_kg,
        gpu_hours_interval: None,
        energy_kwh_interval: None,
        operational_interval_kg: None,
        embodied_interval_kg: None,
        total_interval_kg: None,
        resolved: ResolvedInputs {
            family: family.key.clone(),
            log10_alpha: point_alpha,
            tdp_w: tdp.watts(),
            beta_g_per_gpuh: beta.map(|b| b.g_per_gpuh()),
            intensity_g_per_kwh: intensity.g_per_kwh(),
            pue: req.pue,
        },
    };

    if req.alpha_mode == AlphaMode::Interval {
        // larger α finishes sooner, so the high exponent gives the low end
        let at_lo = run(lo)?;
        let at_hi = run(hi)?;
        report.gpu_hours_interval = Some(ordered(at_hi.gpu_hours, at_lo.gpu_hours));
        report.energy_kwh_interval = Some(ordered(at_hi.energy_kwh, at_lo.energy_kwh));
        report.operational_interval_kg = Some(ordered(at_hi.operational_kg, at_lo.operational_kg));
        report.embodied_interval_kg = Some(ordered(at_hi.embodied_kg, at_lo.embodied_kg));
        report.total_interval_kg = Some(ordered(
            at_hi.operational_kg + at_hi.embodied_kg,
            at_lo.operational_kg + at_lo.embodied_kg,
        ));
    }
    Ok(report)
}

/// A per-model exponent to validate against published figures, with the
/// reference predictions it should reproduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaFixture {
    pub model: String,
    pub log10_alpha: f64,
    #[serde(default)]
    pub reference_operational_t: Option<f64>,
    #[serde(default)]
    pub reference_embodied_kg: Option<f64>,
    #[serde(default)]
    pub actual_embodied_kg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub model: String,
    pub family: String,
    pub log10_alpha: f64,
    pub alpha_in_family_range: bool,
    pub gpu_hours: f64,
    pub predicted_operational_t: f64,
    pub reference_operational_t: Option<f64>,
    pub actual_tco2: f64,
    pub operational_delta_pct: f64,
    pub predicted_embodied_kg: f64,
    pub reference_embodied_kg: Option<f64>,
    pub actual_embodied_kg: Option<f64>,
    pub embodied_delta_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationTable {
    pub rows: Vec<ValidationRow>,
    /// `(model, reason)` for records that could not be validated.
    pub missing: Vec<(String, String)>,
}

/// Runs each record through the pipeline at its fixture exponent and
/// compares the result with the record's actual emissions.
pub fn validate_against_actuals(
    records: &[TrainingRecord],
    fixtures: &[AlphaFixture],
    ctx: &EstimateContext<'_>,
) -> ValidationTable {
    let by_model: BTreeMap<&str, &AlphaFixture> = fixtures.iter().map(|f| (f.model.as_str(), f)).collect();
    let mut table = ValidationTable::default();
    for rec in records {
        let row = (|| -> Result<ValidationRow> {
            let fixture = by_model
                .get(rec.model.as_str())
                .ok_or_else(|| Error::domain("no fixture exponent"))?;
            let actual = rec.actual_tco2.ok_or_else(|| Error::domain("no actual emissions"))?;
            let req = EstimateRequest::from_record(rec, AlphaMode::Explicit(fixture.log10_alpha))?;
            let rep = estimate(&req, ctx)?;
            let family = ctx.devices.get(&rep.resolved.family).expect("resolved above");
            let predicted_t = rep.operational_kg / 1000.0;
            Ok(ValidationRow {
                model: rec.model.clone(),
                family: family.key.clone(),
                log10_alpha: fixture.log10_alpha,
                alpha_in_family_range: (family.alpha_log10_lo..=family.alpha_log10_hi)
                    .contains(&fixture.log10_alpha),
                gpu_hours: rep.gpu_hours,
                predicted_operational_t: predicted_t,
                reference_operational_t: fixture.reference_operational_t,
                actual_tco2: actual,
                operational_delta_pct: relative_error(predicted_t, actual)?,
                predicted_embodied_kg: rep.embodied_kg,
                reference_embodied_kg: fixture.reference_embodied_kg,
                actual_embodied_kg: fixture.actual_embodied_kg,
                embodied_delta_pct: match fixture.actual_embodied_kg {
                    Some(a) => Some(relative_error(rep.embodied_kg, a)?),
                    None => None,
                },
            })
        })();
        match row {
            Ok(r) => table.rows.push(r),
            Err(e) => table.missing.push((rec.model.clone(), e.to_string())),
        }
    }
    table
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub model: String,
    pub total_tco2: f64,
    pub metric_name: String,
    pub metric_value: f64,
}

/// A model's estimate, as exchanged between `estimate --records` and `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEstimate {
    pub model: String,
    pub report: EstimateReport,
}

/// Joins estimates with each record's quality metric, ascending by total
/// emissions. Returns the points and one warning per skipped record.
pub fn scaling_report(records: &[TrainingRecord], estimates: &[ModelEstimate]) -> (Vec<ScatterPoint>, Vec<String>) {
    let by_model: BTreeMap<&str, &EstimateReport> =
        estimates.iter().map(|e| (e.model.as_str(), &e.report)).collect();
    let mut points = Vec::new();
    let mut warnings = Vec::new();
    for rec in records {
        let (Some(name), Some(value)) = (&rec.metric_name, rec.metric_value) else {
            warnings.push(format!("{}: no metric, skipped", rec.model));
            continue;
        };
        let Some(rep) = by_model.get(rec.model.as_str()) else {
            warnings.push(format!("{}: no estimate, skipped", rec.model));
            continue;
        };
        points.push(ScatterPoint {
            model: rec.model.clone(),
            total_tco2: rep.total_kg / 1000.0,
            metric_name: name.clone(),
            metric_value: value,
        });
    }
    points.sort_by(|a, b| a.total_tco2.total_cmp(&b.total_tco2).then_with(|| a.model.cmp(&b.model)));
    (points, warnings)
}
