//! Historical training records, per-record throughput calibration, and
//! per-family statistics of the calibrated exponents.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::devices::DeviceDb;
use crate::error::{Error, Result};
use crate::throughput::{calibrate_alpha, SolverConfig};
use crate::units::{ComputeLoad, GpuTime};

/// Exact header of the records CSV.
pub const RECORDS_HEADER: [&str; 13] = [
    "model",
    "params",
    "data_size",
    "total_flops",
    "device",
    "device_count",
    "gpu_hours",
    "wall_hours",
    "region",
    "intensity_g_per_kwh",
    "actual_tco2",
    "metric_name",
    "metric_value",
];

/// FLOP per parameter per token for a dense transformer (forward + backward).
pub const DEFAULT_COMPUTE_FACTOR: f64 = 6.0;

/// Half-width of the reported interval in units of the sample standard deviation.
pub const INTERVAL_HALF_WIDTH_SIGMAS: f64 = 0.6;

/// Samples further than this many standard deviations from the mean are flagged.
pub const OUTLIER_SIGMAS: f64 = 3.0;

/// One historical or prospective training run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub model: String,
    pub params: Option<f64>,
    pub data_size: Option<f64>,
    pub total_flops: Option<f64>,
    pub device_raw: String,
    pub device_count: Option<u64>,
    pub gpu_hours: Option<f64>,
    pub wall_hours: Option<f64>,
    pub region: Option<String>,
    pub intensity_g_per_kwh: Option<f64>,
    pub actual_tco2: Option<f64>,
    pub metric_name: Option<String>,
    pub metric_value: Option<f64>,
}

impl TrainingRecord {
    pub fn has_compute(&self) -> bool {
        self.total_flops.is_some() || (self.params.is_some() && self.data_size.is_some())
    }

    pub fn has_gpu_time(&self) -> bool {
        self.gpu_hours.is_some() || (self.device_count.is_some() && self.wall_hours.is_some())
    }

    /// Checks the record invariants, returning the first violation.
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.model.trim().is_empty() {
            return Err("missing model name".into());
        }
        if self.device_raw.trim().is_empty() {
            return Err("missing device".into());
        }
        let numerics = [
            ("params", self.params),
            ("data_size", self.data_size),
            ("total_flops", self.total_flops),
            ("gpu_hours", self.gpu_hours),
            ("wall_hours", self.wall_hours),
            ("intensity_g_per_kwh", self.intensity_g_per_kwh),
            ("actual_tco2", self.actual_tco2),
        ];
        for (name, v) in numerics {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(format!("{name} must be finite and non-negative, got {v}"));
                }
            }
        }
        if !self.has_compute() {
            return Err("no compute derivable".into());
        }
        if !self.has_gpu_time() {
            return Err("no GPU-time derivable".into());
        }
        Ok(())
    }
}

/// A CSV row that did not become a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: u64,
    pub model: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Ingested {
    pub records: Vec<TrainingRecord>,
    pub rejections: Vec<Rejection>,
}

fn parse_opt<T: std::str::FromStr>(field: &str, raw: &str) -> std::result::Result<Option<T>, String> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse()
        .map(Some)
        .map_err(|_| format!("field `{field}`: cannot parse {raw:?}"))
}

fn opt_string(raw: &str) -> Option<String> {
    let raw = raw.trim();
    (!raw.is_empty()).then(|| raw.to_string())
}

fn parse_row(row: &csv::StringRecord) -> std::result::Result<TrainingRecord, String> {
    let get = |i: usize| row.get(i).unwrap_or("");
    let rec = TrainingRecord {
        model: get(0).trim().to_string(),
        params: parse_opt("params", get(1))?,
        data_size: parse_opt("data_size", get(2))?,
        total_flops: parse_opt("total_flops", get(3))?,
        device_raw: get(4).trim().to_string(),
        device_count: parse_opt("device_count", get(5))?,
        gpu_hours: parse_opt("gpu_hours", get(6))?,
        wall_hours: parse_opt("wall_hours", get(7))?,
        region: opt_string(get(8)),
        intensity_g_per_kwh: parse_opt("intensity_g_per_kwh", get(9))?,
        actual_tco2: parse_opt("actual_tco2", get(10))?,
        metric_name: opt_string(get(11)),
        metric_value: parse_opt("metric_value", get(12))?,
    };
    rec.check()?;
    Ok(rec)
}

/// Reads records from CSV. Rows that fail to parse or violate the record
/// invariants go to the rejection list with a reason.
pub fn ingest_reader(reader: impl std::io::Read, origin: &str) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    if header.iter().map(str::trim).ne(RECORDS_HEADER.iter().copied()) {
        return Err(Error::Parse {
            path: origin.to_string(),
            message: format!("expected header `{}`", RECORDS_HEADER.join(",")),
        });
    }
    let mut out = Ingested::default();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != RECORDS_HEADER.len() {
            out.rejections.push(Rejection {
                line,
                model: row.get(0).unwrap_or("").trim().to_string(),
                reason: format!("expected {} fields, found {}", RECORDS_HEADER.len(), row.len()),
            });
            continue;
        }
        match parse_row(&row) {
            Ok(rec) => out.records.push(rec),
            Err(reason) => out.rejections.push(Rejection {
                line,
                model: row.get(0).unwrap_or("").trim().to_string(),
                reason,
            }),
        }
    }
    Ok(out)
}

pub fn ingest_records(path: impl AsRef<Path>) -> Result<Ingested> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, &path.display().to_string())
}

/// Training compute: `total_flops` when present, otherwise `factor · params · data_size`.
pub fn derive_compute(rec: &TrainingRecord, factor: f64) -> Result<ComputeLoad> {
    match (rec.total_flops, rec.params, rec.data_size) {
        (Some(flops), _, _) => ComputeLoad::from_flop(flops),
        (None, Some(p), Some(d)) => ComputeLoad::from_flop(factor * p * d),
        _ => Err(Error::domain(format!("{}: no compute derivable", rec.model))),
    }
}

/// GPU-time: `gpu_hours` when present, otherwise `device_count · wall_hours`.
pub fn derive_gpu_time(rec: &TrainingRecord) -> Result<GpuTime> {
    match (rec.gpu_hours, rec.device_count, rec.wall_hours) {
        (Some(h), _, _) => GpuTime::from_hours(h),
        (None, Some(n), Some(w)) => GpuTime::from_hours(n as f64 * w),
        _ => Err(Error::domain(format!("{}: no GPU-time derivable", rec.model))),
    }
}

/// A record's back-solved throughput exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub model: String,
    pub family: String,
    pub log10_alpha: f64,
}

pub fn calibrate_record(rec: &TrainingRecord, db: &DeviceDb, config: &SolverConfig) -> Result<Calibration> {
    let family = db.normalize(&rec.device_raw)?;
    let load = derive_compute(rec, DEFAULT_COMPUTE_FACTOR)?;
    let time = derive_gpu_time(rec)?;
    let param = calibrate_alpha(load, time, config)?;
    Ok(Calibration {
        model: rec.model.clone(),
        family,
        log10_alpha: param.log10_alpha(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFailure {
    pub model: String,
    pub reason: String,
}

/// Calibrates every record, ordered by model name.
pub fn calibrate_records(
    records: &[TrainingRecord],
    db: &DeviceDb,
    config: &SolverConfig,
) -> (Vec<Calibration>, Vec<CalibrationFailure>) {
    let mut sorted: Vec<&TrainingRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.model.cmp(&b.model));
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for rec in sorted {
        match calibrate_record(rec, db, config) {
            Ok(c) => ok.push(c),
            Err(e) => failed.push(CalibrationFailure {
                model: rec.model.clone(),
                reason: e.to_string(),
            }),
        }
    }
    (ok, failed)
}

/// Gaussian summary of one family's calibrated `log10(α)` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaStats {
    pub family: String,
    pub n: usize,
    /// Ascending.
    pub samples: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
    pub interval_lo: f64,
    pub interval_hi: f64,
    pub representative: f64,
    /// Samples more than three standard deviations from `mu`. Kept in `samples`.
    pub flagged: Vec<f64>,
}

impl AlphaStats {
    pub fn from_samples(family: impl Into<String>, mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("statistics need at least one sample"));
        }
        // sorting first makes the sums independent of input order
        samples.sort_by(f64::total_cmp);
        let n = samples.len();
        let mu = samples.iter().sum::<f64>() / n as f64;
        let sigma = if n > 1 {
            (samples.iter().map(|s| (s - mu).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let half = INTERVAL_HALF_WIDTH_SIGMAS * sigma;
        let flagged = samples
            .iter()
            .copied()
            .filter(|s| (s - mu).abs() > OUTLIER_SIGMAS * sigma)
            .collect();
        Ok(Self {
            family: family.into(),
            n,
            samples,
            mu,
            sigma,
            interval_lo: mu - half,
            interval_hi: mu + half,
            representative: mu,
            flagged,
        })
    }
}

/// Per-family statistics, ordered by family key. Empty input gives an empty result.
pub fn aggregate_stats<'a>(calibrations: impl IntoIterator<Item = (&'a str, f64)>) -> Vec<AlphaStats> {
    let mut by_family: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (family, l) in calibrations {
        by_family.entry(family).or_default().push(l);
    }
    by_family
        .into_iter()
        .map(|(family, samples)| AlphaStats::from_samples(family, samples).expect("non-empty group"))
        .collect()
}

/// What `calibrate` writes: statistics plus everything that was left out.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub families: Vec<AlphaStats>,
    pub calibrations: Vec<Calibration>,
    pub rejections: Vec<Rejection>,
    pub failures: Vec<CalibrationFailure>,
}

impl CalibrationReport {
    pub fn build(ingested: &Ingested, db: &DeviceDb, config: &SolverConfig) -> Self {
        let (calibrations, failures) = calibrate_records(&ingested.records, db, config);
        let families = aggregate_stats(calibrations.iter().map(|c| (c.family.as_str(), c.log10_alpha)));
        Self {
            families,
            calibrations,
            rejections: ingested.rejections.clone(),
            failures,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn stats_by_family(&self) -> BTreeMap<String, AlphaStats> {
        self.families.iter().map(|s| (s.family.clone(), s.clone())).collect()
    }
}
